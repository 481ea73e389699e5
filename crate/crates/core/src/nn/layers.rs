//! Forward kernels and their local backward rules.

use super::params::{LstmParams, CANDIDATE, FORGET, INPUT, OUTPUT};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, Tensor};
use crate::corpus::{EncodedSentence, NUM_CLASSES};
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Character matrix `Q`, shape `[embedding_dim, len]`: column `i` is the
/// embedding row of `indices[i]`. Padding positions use the pad row.
pub fn embed(encoded: &EncodedSentence, embedding: &Tensor) -> Result<Tensor> {
    let (rows, d) = (embedding.shape()[0], embedding.shape()[1]);
    let len = encoded.indices.len();
    let mut q = Tensor::zeros(&[d, len]);
    let data = q.data_mut();
    for (col, &idx) in encoded.indices.iter().enumerate() {
        if idx >= rows {
            return Err(Error::InvalidInput(format!(
                "character index {idx} out of range for embedding table of {rows} rows"
            )));
        }
        for (r, &v) in embedding.row(idx).iter().enumerate() {
            data[r * len + col] = v;
        }
    }
    Ok(q)
}

/// Pre-activation convolution: `out[k, i] = Σ Q[:, i..i+m] ⊙ H_k + b_k`, shape
/// `[filters, len - m + 1]`.
pub fn conv1d(q: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (d, len) = (q.shape()[0], q.shape()[1]);
    let (filters, wd, m) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if wd != d {
        return Err(Error::Shape(format!(
            "filter depth {wd} does not match embedding dimension {d}"
        )));
    }
    if bias.len() != filters {
        return Err(Error::Shape(format!(
            "conv bias has {} entries for {filters} filters",
            bias.len()
        )));
    }
    if len < m {
        return Err(Error::InvalidInput(format!(
            "input length {len} is shorter than kernel width {m}"
        )));
    }
    let width = len - m + 1;
    let mut out = Tensor::zeros(&[filters, width]);
    let qd = q.data();
    let wdata = weight.data();
    for k in 0..filters {
        let filter = &wdata[k * d * m..(k + 1) * d * m];
        let row = &mut out.data_mut()[k * width..(k + 1) * width];
        for (i, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..d {
                let qrow = &qd[r * len + i..r * len + i + m];
                let frow = &filter[r * m..(r + 1) * m];
                for (a, b) in qrow.iter().zip(frow) {
                    acc += a * b;
                }
            }
            *o = acc + bias.data()[k];
        }
    }
    Ok(out)
}

pub fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Feature maps `f = ReLU(conv1d(Q))`.
pub fn conv1d_relu(q: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    Ok(relu(&conv1d(q, weight, bias)?))
}

/// Non-overlapping max-pooling with window and stride `p`. A trailing
/// remainder narrower than `p` is dropped. Returns the pooled maps
/// `[filters, width / p]` and, per output cell, the input column that held the
/// first maximum.
pub fn maxpool(f: &Tensor, p: usize) -> Result<(Tensor, Vec<usize>)> {
    let (filters, width) = (f.shape()[0], f.shape()[1]);
    if p == 0 || width < p {
        return Err(Error::InvalidInput(format!(
            "pool size {p} does not fit feature width {width}"
        )));
    }
    let out_w = width / p;
    let mut y = Tensor::zeros(&[filters, out_w]);
    let mut argmax = vec![0usize; filters * out_w];
    for k in 0..filters {
        let row = f.row(k);
        for j in 0..out_w {
            let mut best = j * p;
            for i in j * p + 1..(j + 1) * p {
                if row[i] > row[best] {
                    best = i;
                }
            }
            y.data_mut()[k * out_w + j] = row[best];
            argmax[k * out_w + j] = best;
        }
    }
    Ok((y, argmax))
}

/// Routes pooled-output gradients back to the recorded argmax columns.
pub fn maxpool_backward(dy: &Tensor, argmax: &[usize], width: usize) -> Tensor {
    let (filters, out_w) = (dy.shape()[0], dy.shape()[1]);
    let mut df = Tensor::zeros(&[filters, width]);
    for k in 0..filters {
        for j in 0..out_w {
            df.data_mut()[k * width + argmax[k * out_w + j]] += dy.data()[k * out_w + j];
        }
    }
    df
}

/// Gradients of [`conv1d`] given the pre-activation gradient `dpre`.
/// Accumulates into `dweight`/`dbias` and returns `dQ`.
pub fn conv1d_backward(
    q: &Tensor,
    weight: &Tensor,
    dpre: &Tensor,
    dweight: &mut Tensor,
    dbias: &mut Tensor,
) -> Tensor {
    let (d, len) = (q.shape()[0], q.shape()[1]);
    let (filters, m) = (weight.shape()[0], weight.shape()[2]);
    let width = dpre.shape()[1];
    let mut dq = Tensor::zeros(&[d, len]);
    let qd = q.data();
    for k in 0..filters {
        let grow = &dpre.data()[k * width..(k + 1) * width];
        let filter = &weight.data()[k * d * m..(k + 1) * d * m];
        let mut bsum = 0.0;
        for (i, &g) in grow.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            bsum += g;
            let dfilter = &mut dweight.data_mut()[k * d * m..(k + 1) * d * m];
            for r in 0..d {
                for c in 0..m {
                    dfilter[r * m + c] += g * qd[r * len + i + c];
                }
            }
            let dqd = dq.data_mut();
            for r in 0..d {
                for c in 0..m {
                    dqd[r * len + i + c] += g * filter[r * m + c];
                }
            }
        }
        dbias.data_mut()[k] += bsum;
    }
    dq
}

/// Gate activations and states of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// One LSTM step with an output-gate peephole on the new cell state:
///
/// ```text
/// I = σ(W_i x + U_i h + b_i)        F = σ(W_f x + U_f h + b_f)
/// C̃ = tanh(W_c x + U_c h + b_c)     C = F ⊙ C_prev + I ⊙ C̃
/// O = σ(W_o x + U_o h + V_o ⊙ C + b_o)
/// h' = O ⊙ tanh(C)
/// ```
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> Result<StepTrace> {
    let hidden = p.b[0].len();
    let input = p.w[0].shape()[1];
    if x.len() != input || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::Shape(format!(
            "lstm_step expects x[{input}], h[{hidden}], c[{hidden}]; got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let pre = |g: usize| {
        let mut a = p.b[g].data().to_vec();
        matvec_acc(&p.w[g], x, &mut a);
        matvec_acc(&p.u[g], h_prev, &mut a);
        a
    };
    let input_gate: Vec<f64> = pre(INPUT).into_iter().map(sigmoid).collect();
    let forget_gate: Vec<f64> = pre(FORGET).into_iter().map(sigmoid).collect();
    let candidate: Vec<f64> = pre(CANDIDATE).into_iter().map(f64::tanh).collect();
    let cell: Vec<f64> = (0..hidden)
        .map(|j| forget_gate[j] * c_prev[j] + input_gate[j] * candidate[j])
        .collect();
    let mut a_o = pre(OUTPUT);
    if let Some(v) = &p.v_o {
        for ((a, vj), cj) in a_o.iter_mut().zip(v.data()).zip(&cell) {
            *a += vj * cj;
        }
    }
    let output_gate: Vec<f64> = a_o.into_iter().map(sigmoid).collect();
    let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden_out = output_gate
        .iter()
        .zip(&tanh_cell)
        .map(|(o, t)| o * t)
        .collect();
    Ok(StepTrace {
        input_gate,
        forget_gate,
        candidate,
        output_gate,
        cell,
        tanh_cell,
        hidden: hidden_out,
    })
}

/// Gradient flow through one step. `dh` is the total gradient on this step's
/// hidden output and `dc_next` the gradient arriving at this step's cell from
/// the following step. Accumulates parameter gradients into `grads` and
/// returns `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    p: &LstmParams,
    grads: &mut LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    step: &StepTrace,
    dh: &[f64],
    dc_next: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let mut da = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    let mut dc = vec![0.0; hidden];
    let mut dc_prev = vec![0.0; hidden];
    for j in 0..hidden {
        let o = step.output_gate[j];
        let tc = step.tanh_cell[j];
        let da_o = dh[j] * tc * o * (1.0 - o);
        let mut dcj = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        if let Some(v) = &p.v_o {
            dcj += da_o * v.data()[j];
        }
        let (i, f, g) = (step.input_gate[j], step.forget_gate[j], step.candidate[j]);
        da[OUTPUT][j] = da_o;
        da[FORGET][j] = dcj * c_prev[j] * f * (1.0 - f);
        da[INPUT][j] = dcj * g * i * (1.0 - i);
        da[CANDIDATE][j] = dcj * i * (1.0 - g * g);
        dc_prev[j] = dcj * f;
        dc[j] = dcj;
    }
    if let (Some(gv), Some(_)) = (grads.v_o.as_mut(), p.v_o.as_ref()) {
        for ((gvj, a), c) in gv.data_mut().iter_mut().zip(&da[OUTPUT]).zip(&step.cell) {
            *gvj += a * c;
        }
    }
    let mut dx = vec![0.0; x.len()];
    let mut dh_prev = vec![0.0; hidden];
    for g in 0..4 {
        outer_acc(&mut grads.w[g], &da[g], x);
        outer_acc(&mut grads.u[g], &da[g], h_prev);
        for (b, a) in grads.b[g].data_mut().iter_mut().zip(&da[g]) {
            *b += a;
        }
        matvec_t_acc(&p.w[g], &da[g], &mut dx);
        matvec_t_acc(&p.u[g], &da[g], &mut dh_prev);
    }
    (dx, dh_prev, dc_prev)
}

/// Row-wise softmax (max-shifted) and mean cross-entropy over the batch.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let rows = logits.shape()[0];
    if logits.shape().get(1) != Some(&NUM_CLASSES) {
        return Err(Error::Shape(format!(
            "logits must be [batch, {NUM_CLASSES}], got {:?}",
            logits.shape()
        )));
    }
    if labels.len() != rows || rows == 0 {
        return Err(Error::Shape(format!(
            "{} labels for {rows} logit rows",
            labels.len()
        )));
    }
    let mut probs = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= NUM_CLASSES {
            return Err(Error::InvalidInput(format!("label {label} out of range")));
        }
        let z = logits.row(r);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        for (p, v) in probs.row_mut(r).iter_mut().zip(z) {
            *p = (v - max).exp() / sum;
        }
        loss += log_sum - (z[label] - max);
    }
    Ok((loss / rows as f64, probs))
}

/// `∂loss/∂logits = (p − onehot) / batch`.
pub fn softmax_xent_grad(probs: &Tensor, labels: &[usize]) -> Tensor {
    let rows = labels.len() as f64;
    let mut g = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let row = g.row_mut(r);
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v /= rows);
    }
    g
}
