use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::corpus::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    /// Embedding, convolution, max-pooling, LSTM, dense.
    Subword,
    /// Embedding, LSTM, dense.
    Char,
}

impl ArchitectureKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::Subword => "subword",
            ArchitectureKind::Char => "char",
        }
    }
}

impl std::str::FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subword" => Ok(Self::Subword),
            "char" => Ok(Self::Char),
            other => Err(Error::InvalidInput(format!(
                "unknown architecture '{other}' (expected subword or char)"
            ))),
        }
    }
}

/// Architecture hyperparameters. Stored verbatim in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: ArchitectureKind,
    /// Embedding rows, including pad and oov.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub pool_size: usize,
    pub hidden: usize,
    pub max_len: usize,
    /// Output-gate peephole on the current cell state.
    pub peephole: bool,
}

impl ModelConfig {
    pub fn new(arch: ArchitectureKind, vocab_size: usize) -> Self {
        Self {
            arch,
            vocab_size,
            embedding_dim: 64,
            filters: 128,
            kernel_width: 3,
            pool_size: 2,
            hidden: 128,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
            peephole: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden", self.hidden),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidInput(
                "vocab_size must cover pad and oov".into(),
            ));
        }
        if self.arch == ArchitectureKind::Subword {
            if self.filters == 0 || self.kernel_width == 0 || self.pool_size == 0 {
                return Err(Error::InvalidInput(
                    "filters, kernel_width and pool_size must be positive".into(),
                ));
            }
            if self.max_len < self.kernel_width {
                return Err(Error::InvalidInput(format!(
                    "max_len {} is shorter than kernel_width {}",
                    self.max_len, self.kernel_width
                )));
            }
            if self.conv_width() < self.pool_size {
                return Err(Error::InvalidInput(format!(
                    "convolution width {} is smaller than pool_size {}",
                    self.conv_width(),
                    self.pool_size
                )));
            }
        }
        Ok(())
    }

    pub fn conv_width(&self) -> usize {
        self.max_len + 1 - self.kernel_width
    }

    pub fn lstm_input(&self) -> usize {
        match self.arch {
            ArchitectureKind::Subword => self.filters,
            ArchitectureKind::Char => self.embedding_dim,
        }
    }

    /// Number of LSTM timesteps for a padded input.
    pub fn timesteps(&self) -> usize {
        match self.arch {
            ArchitectureKind::Subword => self.conv_width() / self.pool_size,
            ArchitectureKind::Char => self.max_len,
        }
    }

    /// Every tensor name with its shape, in canonical order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let (h, x) = (self.hidden, self.lstm_input());
        let mut out = vec![(
            "embedding".to_string(),
            vec![self.vocab_size, self.embedding_dim],
        )];
        if self.arch == ArchitectureKind::Subword {
            out.push((
                "conv.weight".into(),
                vec![self.filters, self.embedding_dim, self.kernel_width],
            ));
            out.push(("conv.bias".into(), vec![self.filters]));
        }
        for g in GATE_NAMES {
            out.push((format!("lstm.w_{g}"), vec![h, x]));
        }
        for g in GATE_NAMES {
            out.push((format!("lstm.u_{g}"), vec![h, h]));
        }
        for g in GATE_NAMES {
            out.push((format!("lstm.b_{g}"), vec![h]));
        }
        if self.peephole {
            out.push(("lstm.v_o".into(), vec![h]));
        }
        out.push(("dense.weight".into(), vec![h, NUM_CLASSES]));
        out.push(("dense.bias".into(), vec![NUM_CLASSES]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.manifest()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Gate order used for every `[Tensor; 4]`: input, forget, candidate, output.
pub const GATE_NAMES: [&str; 4] = ["i", "f", "c", "o"];
pub(crate) const INPUT: usize = 0;
pub(crate) const FORGET: usize = 1;
pub(crate) const CANDIDATE: usize = 2;
pub(crate) const OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `[filters, embedding_dim, kernel_width]`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input-to-hidden, `[hidden, input]` per gate.
    pub w: [Tensor; 4],
    /// Hidden-to-hidden, `[hidden, hidden]` per gate.
    pub u: [Tensor; 4],
    pub b: [Tensor; 4],
    /// Output-gate peephole.
    pub v_o: Option<Tensor>,
}

/// All trainable tensors of a Subword-LSTM or Char-LSTM. Gradients use the
/// same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[vocab_size, embedding_dim]`
    pub embedding: Tensor,
    pub conv: Option<ConvParams>,
    pub lstm: LstmParams,
    /// `[hidden, 3]`
    pub dense_weight: Tensor,
    pub dense_bias: Tensor,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut named: BTreeMap<String, Tensor> = config
            .manifest()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(&shape)))
            .collect();
        Self::assemble(config.clone(), &mut named)
    }

    /// Glorot-uniform weights, zero biases except the forget gate (1.0), and a
    /// zero padding row.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = Xoshiro256StarStar::derive(seed, 0x1A17);
        let h = config.hidden;
        let x = config.lstm_input();
        let d = config.embedding_dim;

        glorot(&mut params.embedding, config.vocab_size, d, &mut rng);
        params.embedding.row_mut(crate::corpus::CharVocab::PAD).fill(0.0);
        if let Some(conv) = params.conv.as_mut() {
            let m = config.kernel_width;
            glorot(&mut conv.weight, d * m, config.filters * m, &mut rng);
        }
        for w in params.lstm.w.iter_mut() {
            glorot(w, x, h, &mut rng);
        }
        for u in params.lstm.u.iter_mut() {
            glorot(u, h, h, &mut rng);
        }
        if let Some(v) = params.lstm.v_o.as_mut() {
            glorot(v, h, h, &mut rng);
        }
        params.lstm.b[FORGET].fill(1.0);
        glorot(&mut params.dense_weight, h, NUM_CLASSES, &mut rng);
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config was validated on construction")
    }

    /// Builds from named tensors, checking that every declared tensor is
    /// present with the declared shape and nothing else is.
    pub fn from_named(config: ModelConfig, mut named: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        for (name, shape) in config.manifest() {
            match named.get(&name) {
                None => return Err(Error::Shape(format!("missing tensor '{name}'"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Shape(format!(
                        "tensor '{name}' has shape {:?}, hyperparameters declare {shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        let params = Self::assemble(config, &mut named)?;
        if let Some(extra) = named.keys().next() {
            return Err(Error::Shape(format!("unexpected tensor '{extra}'")));
        }
        Ok(params)
    }

    fn assemble(config: ModelConfig, named: &mut BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: &str| {
            named
                .remove(name)
                .ok_or_else(|| Error::Shape(format!("missing tensor '{name}'")))
        };
        let embedding = take("embedding")?;
        let conv = if config.arch == ArchitectureKind::Subword {
            Some(ConvParams {
                weight: take("conv.weight")?,
                bias: take("conv.bias")?,
            })
        } else {
            None
        };
        let gates = |prefix: &str, take: &mut dyn FnMut(&str) -> Result<Tensor>| -> Result<[Tensor; 4]> {
            Ok([
                take(&format!("lstm.{prefix}_i"))?,
                take(&format!("lstm.{prefix}_f"))?,
                take(&format!("lstm.{prefix}_c"))?,
                take(&format!("lstm.{prefix}_o"))?,
            ])
        };
        let w = gates("w", &mut take)?;
        let u = gates("u", &mut take)?;
        let b = gates("b", &mut take)?;
        let v_o = if config.peephole {
            Some(take("lstm.v_o")?)
        } else {
            None
        };
        let dense_weight = take("dense.weight")?;
        let dense_bias = take("dense.bias")?;
        Ok(Self {
            config,
            embedding,
            conv,
            lstm: LstmParams { w, u, b, v_o },
            dense_weight,
            dense_bias,
        })
    }

    /// Tensors in manifest order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let names = self.config.manifest().into_iter().map(|(n, _)| n);
        names.zip(self.tensor_refs()).collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.config.manifest().into_iter().map(|(n, _)| n).collect();
        names.into_iter().zip(self.tensor_muts()).collect()
    }

    fn tensor_refs(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embedding];
        if let Some(conv) = &self.conv {
            out.push(&conv.weight);
            out.push(&conv.bias);
        }
        out.extend(self.lstm.w.iter());
        out.extend(self.lstm.u.iter());
        out.extend(self.lstm.b.iter());
        if let Some(v) = &self.lstm.v_o {
            out.push(v);
        }
        out.push(&self.dense_weight);
        out.push(&self.dense_bias);
        out
    }

    fn tensor_muts(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        if let Some(conv) = &mut self.conv {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
        }
        out.extend(self.lstm.w.iter_mut());
        out.extend(self.lstm.u.iter_mut());
        out.extend(self.lstm.b.iter_mut());
        if let Some(v) = &mut self.lstm.v_o {
            out.push(v);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out
    }

    /// FNV-1a over the configuration and every parameter bit pattern. Used to
    /// tie a forward trace to the exact parameters that produced it.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(format!("{:?}", self.config).as_bytes());
        for t in self.tensor_refs() {
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn all_finite(&self) -> bool {
        self.tensor_refs().iter().all(|t| t.all_finite())
    }
}

fn glorot(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut Xoshiro256StarStar) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.uniform(-limit, limit);
    }
}
