//! Whole-model forward and backward passes.

use super::layers::{
    conv1d, conv1d_backward, embed, lstm_step, lstm_step_backward, maxpool, maxpool_backward,
    relu, softmax_xent, softmax_xent_grad, StepTrace,
};
use super::params::{ArchitectureKind, ModelParams};
use super::tensor::{matvec_t_acc, Tensor};
use crate::corpus::{EncodedSentence, NUM_CLASSES};
use crate::error::{Error, Result};

/// Convolution-stage activations for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTrace {
    pub pre_activation: Tensor,
    /// Post-ReLU feature maps `[filters, len - m + 1]`.
    pub features: Tensor,
    pub pooled: Tensor,
    pub pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleTrace {
    pub indices: Vec<usize>,
    /// `[embedding_dim, len]`
    pub q: Tensor,
    pub conv: Option<ConvTrace>,
    /// LSTM inputs, one vector per timestep.
    pub inputs: Vec<Vec<f64>>,
    pub steps: Vec<StepTrace>,
}

impl ExampleTrace {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("at least one timestep").hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub examples: Vec<ExampleTrace>,
    /// `[batch, 3]`
    pub logits: Tensor,
    fingerprint: u64,
}

fn check_lengths(model: &ModelParams, batch: &[EncodedSentence]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.indices.len() != model.config.max_len {
            return Err(Error::Shape(format!(
                "sentence {i} has length {}, model expects {}",
                s.indices.len(),
                model.config.max_len
            )));
        }
    }
    Ok(())
}

/// Embeds and runs the convolution, pooling and recurrence for one sentence.
pub fn forward_example(model: &ModelParams, sentence: &EncodedSentence) -> Result<ExampleTrace> {
    let q = embed(sentence, &model.embedding)?;
    let (conv, inputs) = match (&model.conv, model.config.arch) {
        (Some(cp), ArchitectureKind::Subword) => {
            let pre_activation = conv1d(&q, &cp.weight, &cp.bias)?;
            let features = relu(&pre_activation);
            let (pooled, pool_argmax) = maxpool(&features, model.config.pool_size)?;
            let (filters, steps) = (pooled.shape()[0], pooled.shape()[1]);
            // position-major: timestep t sees the pooled response of every filter
            let inputs: Vec<Vec<f64>> = (0..steps)
                .map(|t| (0..filters).map(|k| pooled.get2(k, t)).collect())
                .collect();
            let trace = ConvTrace {
                pre_activation,
                features,
                pooled,
                pool_argmax,
            };
            (Some(trace), inputs)
        }
        (None, ArchitectureKind::Char) => {
            let (d, len) = (q.shape()[0], q.shape()[1]);
            let inputs: Vec<Vec<f64>> = (0..len)
                .map(|t| (0..d).map(|r| q.get2(r, t)).collect())
                .collect();
            (None, inputs)
        }
        _ => {
            return Err(Error::Invariant(
                "convolution tensors do not match architecture kind".into(),
            ))
        }
    };
    let hidden = model.config.hidden;
    let mut steps: Vec<StepTrace> = Vec::with_capacity(inputs.len());
    let zeros = vec![0.0; hidden];
    for x in &inputs {
        let (h, c) = match steps.last() {
            Some(s) => (&s.hidden, &s.cell),
            None => (&zeros, &zeros),
        };
        let step = lstm_step(x, h, c, &model.lstm)?;
        steps.push(step);
    }
    Ok(ExampleTrace {
        indices: sentence.indices.clone(),
        q,
        conv,
        inputs,
        steps,
    })
}

fn dense(model: &ModelParams, h: &[f64]) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(model.dense_bias.data());
    matvec_t_acc(&model.dense_weight, h, &mut out);
    out
}

/// Logits `[batch, 3]` and the trace needed by [`backward`].
pub fn forward(model: &ModelParams, batch: &[EncodedSentence]) -> Result<(Tensor, ForwardTrace)> {
    check_lengths(model, batch)?;
    let mut examples = Vec::with_capacity(batch.len());
    let mut logits = Tensor::zeros(&[batch.len(), NUM_CLASSES]);
    for (r, sentence) in batch.iter().enumerate() {
        let ex = forward_example(model, sentence)?;
        logits.row_mut(r).copy_from_slice(&dense(model, ex.final_hidden()));
        examples.push(ex);
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let trace = ForwardTrace {
        examples,
        logits: logits.clone(),
        fingerprint: model.fingerprint(),
    };
    Ok((logits, trace))
}

/// Logits only, without keeping intermediate activations around.
pub fn infer(model: &ModelParams, batch: &[EncodedSentence]) -> Result<Tensor> {
    check_lengths(model, batch)?;
    let mut logits = Tensor::zeros(&[batch.len(), NUM_CLASSES]);
    for (r, sentence) in batch.iter().enumerate() {
        let ex = forward_example(model, sentence)?;
        logits.row_mut(r).copy_from_slice(&dense(model, ex.final_hidden()));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(logits)
}

/// Exact gradient of the mean cross-entropy with respect to every parameter.
/// Examples are reduced in batch order.
pub fn backward(trace: &ForwardTrace, model: &ModelParams, labels: &[usize]) -> Result<ModelParams> {
    if trace.fingerprint != model.fingerprint() {
        return Err(Error::InvalidInput(
            "forward trace was produced by different parameters".into(),
        ));
    }
    if labels.len() != trace.examples.len() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            trace.examples.len()
        )));
    }
    let (_, probs) = softmax_xent(&trace.logits, labels)?;
    let dlogits = softmax_xent_grad(&probs, labels);
    let mut grads = model.zeros_like();
    for (r, ex) in trace.examples.iter().enumerate() {
        backward_example(model, ex, dlogits.row(r), &mut grads);
    }
    Ok(grads)
}

fn backward_example(model: &ModelParams, ex: &ExampleTrace, dlogits: &[f64], grads: &mut ModelParams) {
    let hidden = model.config.hidden;
    let h_last = ex.final_hidden();

    super::tensor::outer_acc(&mut grads.dense_weight, h_last, dlogits);
    for (b, g) in grads.dense_bias.data_mut().iter_mut().zip(dlogits) {
        *b += g;
    }
    let mut dh = vec![0.0; hidden];
    super::tensor::matvec_acc(&model.dense_weight, dlogits, &mut dh);
    let mut dc = vec![0.0; hidden];

    let zeros = vec![0.0; hidden];
    let mut dinputs = vec![Vec::new(); ex.steps.len()];
    for t in (0..ex.steps.len()).rev() {
        let (h_prev, c_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&ex.steps[t - 1].hidden, &ex.steps[t - 1].cell)
        };
        let (dx, dh_prev, dc_prev) = lstm_step_backward(
            &model.lstm,
            &mut grads.lstm,
            &ex.inputs[t],
            h_prev,
            c_prev,
            &ex.steps[t],
            &dh,
            &dc,
        );
        dinputs[t] = dx;
        dh = dh_prev;
        dc = dc_prev;
    }

    let (d, len) = (ex.q.shape()[0], ex.q.shape()[1]);
    let dq = match (&ex.conv, &model.conv, &mut grads.conv) {
        (Some(ct), Some(cp), Some(cg)) => {
            let (filters, steps) = (ct.pooled.shape()[0], ct.pooled.shape()[1]);
            let mut dy = Tensor::zeros(&[filters, steps]);
            for (t, dx) in dinputs.iter().enumerate() {
                for (k, v) in dx.iter().enumerate() {
                    dy.data_mut()[k * steps + t] = *v;
                }
            }
            let width = ct.features.shape()[1];
            let mut dpre = maxpool_backward(&dy, &ct.pool_argmax, width);
            for (g, pre) in dpre.data_mut().iter_mut().zip(ct.pre_activation.data()) {
                if *pre <= 0.0 {
                    *g = 0.0;
                }
            }
            conv1d_backward(&ex.q, &cp.weight, &dpre, &mut cg.weight, &mut cg.bias)
        }
        _ => {
            let mut dq = Tensor::zeros(&[d, len]);
            for (t, dx) in dinputs.iter().enumerate() {
                for (r, v) in dx.iter().enumerate() {
                    dq.data_mut()[r * len + t] = *v;
                }
            }
            dq
        }
    };

    for (col, &idx) in ex.indices.iter().enumerate() {
        let row = grads.embedding.row_mut(idx);
        for (r, g) in row.iter_mut().enumerate() {
            *g += dq.data()[r * len + col];
        }
    }
}

/// Forward, loss and gradients in one call.
pub fn loss_and_grads(
    model: &ModelParams,
    batch: &[EncodedSentence],
    labels: &[usize],
) -> Result<(f64, Tensor, ModelParams)> {
    let (logits, trace) = forward(model, batch)?;
    let (loss, probs) = softmax_xent(&logits, labels)?;
    let grads = backward(&trace, model, labels)?;
    Ok((loss, probs, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ModelConfig;

    fn tiny(arch: ArchitectureKind) -> ModelConfig {
        ModelConfig {
            arch,
            vocab_size: 6,
            embedding_dim: 3,
            filters: 2,
            kernel_width: 2,
            pool_size: 2,
            hidden: 3,
            max_len: 7,
            peephole: true,
        }
    }

    fn sentence(idx: &[usize], len: usize) -> EncodedSentence {
        let mut indices = idx.to_vec();
        let true_length = indices.len();
        indices.resize(len, 0);
        EncodedSentence {
            indices,
            true_length,
        }
    }

    #[test]
    fn zero_model_gives_uniform_softmax() {
        for arch in [ArchitectureKind::Subword, ArchitectureKind::Char] {
            let model = ModelParams::zeros(&tiny(arch)).unwrap();
            let batch = [sentence(&[2, 3, 4], 7), sentence(&[5], 7)];
            let (logits, _) = forward(&model, &batch).unwrap();
            assert!(logits.data().iter().all(|&v| v == 0.0));
            let (loss, _) = softmax_xent(&logits, &[0, 1]).unwrap();
            assert!((loss - 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_rows_and_shapes() {
        for arch in [ArchitectureKind::Subword, ArchitectureKind::Char] {
            let model = ModelParams::init(&tiny(arch), 9).unwrap();
            let s = sentence(&[2, 3, 4, 1], 7);
            let (logits, trace) = forward(&model, &[s.clone(), s]).unwrap();
            assert_eq!(logits.shape(), &[2, 3]);
            assert_eq!(logits.row(0), logits.row(1));
            assert!(logits.all_finite());
            let expected_steps = model.config.timesteps();
            assert_eq!(trace.examples[0].steps.len(), expected_steps);
            for step in &trace.examples[0].steps {
                for j in 0..3 {
                    for gate in [step.input_gate[j], step.forget_gate[j], step.output_gate[j]] {
                        assert!(gate > 0.0 && gate < 1.0);
                    }
                    assert!(step.candidate[j].abs() < 1.0);
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_length_and_stale_trace() {
        let model = ModelParams::init(&tiny(ArchitectureKind::Subword), 1).unwrap();
        assert!(forward(&model, &[sentence(&[2], 5)]).is_err());
        assert!(forward(&model, &[]).is_err());
        let (_, trace) = forward(&model, &[sentence(&[2, 3], 7)]).unwrap();
        let mut other = model.clone();
        other.dense_bias.data_mut()[0] += 0.1;
        assert!(backward(&trace, &other, &[0]).is_err());
        assert!(backward(&trace, &model, &[0, 1]).is_err());
        assert!(backward(&trace, &model, &[2]).is_ok());
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_gradients() {
        let mut model = ModelParams::init(&tiny(ArchitectureKind::Subword), 2).unwrap();
        model.dense_bias.data_mut().copy_from_slice(&[1e3, 0.0, 0.0]);
        let (_, _, grads) = loss_and_grads(&model, &[sentence(&[2, 3, 4], 7)], &[0]).unwrap();
        for (name, g) in grads.named_tensors() {
            assert!(g.max_abs() < 1e-6, "{name}: {}", g.max_abs());
        }
    }

    #[test]
    fn dead_relu_column_does_not_change_features() {
        let mut model = ModelParams::init(&tiny(ArchitectureKind::Subword), 5).unwrap();
        // every filter strongly negative: all pre-activations < 0
        model.conv.as_mut().unwrap().bias.fill(-100.0);
        let s = sentence(&[2, 3, 4, 5], 7);
        let base = forward_example(&model, &s).unwrap();
        let mut shifted = model.clone();
        for v in shifted.embedding.row_mut(3) {
            *v += 0.5;
        }
        let moved = forward_example(&shifted, &s).unwrap();
        assert_eq!(
            base.conv.as_ref().unwrap().features,
            moved.conv.as_ref().unwrap().features
        );
    }
}
