//! Named-tensor checkpoint container.
//!
//! ```text
//! "MSENTI01" | u64 LE header length | JSON header | f64 LE tensor data
//! ```
//!
//! The header records the format version, model kind, architecture,
//! hyperparameters, vocabulary and a manifest of `{name, shape, offset}`
//! entries, offsets counted in bytes from the start of the data section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    BaselineModel, Classifier, FeatureExtractor, FeatureKind, LinearModel, Method, MnbModel, NGramRange,
    NGramVocab, SvmParams, Tfidf,
};
use crate::corpus::{CharVocab, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{ArchitectureKind, ModelConfig, ModelParams, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSENTI01";
pub const FORMAT_VERSION: u32 = 1;
const SUPPORTED_VERSIONS: &[u32] = &[FORMAT_VERSION];

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Neural { params: ModelParams, vocab: CharVocab },
    Baseline(BaselineModel),
}

impl Checkpoint {
    pub fn model_kind(&self) -> ModelKind {
        match self {
            Checkpoint::Neural { .. } => ModelKind::Lstm,
            Checkpoint::Baseline(b) => match b.method {
                Method::Mnb => ModelKind::Mnb,
                Method::Svm => ModelKind::Svm,
                Method::Nbsvm => ModelKind::Nbsvm,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Mnb,
    Svm,
    Nbsvm,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model_kind: ModelKind,
    architecture_kind: Option<ArchitectureKind>,
    hyperparameters: serde_json::Value,
    vocab: Vec<String>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineHyperparameters {
    features: FeatureKind,
    dim: usize,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    binarize: Option<bool>,
    #[serde(default)]
    svm: Option<SvmParams>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn encode(header: Header, tensors: Vec<Tensor>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&header).map_err(|e| bad(format!("header encoding: {e}")))?;
    let data_len: usize = tensors.iter().map(|t| t.len() * 8).sum();
    let mut out = Vec::with_capacity(16 + json.len() + data_len);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn manifest(named: &[(String, Tensor)]) -> (Vec<ManifestEntry>, Vec<Tensor>) {
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(named.len());
    for (name, t) in named {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len() as u64 * 8;
    }
    (entries, named.iter().map(|(_, t)| t.clone()).collect())
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    Tensor::from_vec(&[rows.len(), cols], rows.concat())
}

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape()[1];
    if cols == 0 {
        return vec![Vec::new(); t.shape()[0]];
    }
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    match checkpoint {
        Checkpoint::Neural { params, vocab } => {
            if vocab.size() != params.config.vocab_size {
                return Err(Error::Shape(format!(
                    "vocabulary has {} rows but the model expects {}",
                    vocab.size(),
                    params.config.vocab_size
                )));
            }
            let named: Vec<(String, Tensor)> = params
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect();
            let (tensors, data) = manifest(&named);
            let header = Header {
                format_version: FORMAT_VERSION,
                model_kind: ModelKind::Lstm,
                architecture_kind: Some(params.config.arch),
                hyperparameters: serde_json::to_value(&params.config).expect("config serializes"),
                vocab: vocab.chars().iter().map(char::to_string).collect(),
                tensors,
            };
            encode(header, data)
        }
        Checkpoint::Baseline(model) => {
            let mut named = Vec::new();
            let mut hyper = BaselineHyperparameters {
                features: model.features.kind,
                dim: model.features.dim(),
                alpha: None,
                binarize: None,
                svm: None,
            };
            match &model.classifier {
                Classifier::Mnb(m) => {
                    hyper.alpha = Some(m.alpha);
                    hyper.binarize = Some(m.binarize);
                    named.push(("mnb.log_priors".to_string(), Tensor::from_vec(&[NUM_CLASSES], m.log_priors.to_vec())?));
                    named.push(("mnb.log_likelihoods".to_string(), rows_tensor(&m.log_likelihoods)?));
                }
                Classifier::Linear(m) => {
                    hyper.svm = Some(m.params);
                    named.push(("linear.weights".to_string(), rows_tensor(&m.weights)?));
                    named.push(("linear.bias".to_string(), Tensor::from_vec(&[NUM_CLASSES], m.bias.to_vec())?));
                    if let Some(r) = &m.ratios {
                        named.push(("nbsvm.ratios".to_string(), rows_tensor(r)?));
                    }
                }
            }
            if let Some(t) = &model.features.tfidf {
                named.push(("tfidf.idf".to_string(), Tensor::from_vec(&[t.idf.len()], t.idf.clone())?));
            }
            let (tensors, data) = manifest(&named);
            let header = Header {
                format_version: FORMAT_VERSION,
                model_kind: checkpoint.model_kind(),
                architecture_kind: None,
                hyperparameters: serde_json::to_value(&hyper).expect("hyperparameters serialize"),
                vocab: model.features.vocab.grams().to_vec(),
                tensors,
            };
            encode(header, data)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(bad("unexpected end of checkpoint")),
        }
    }
}

/// Parses a checkpoint from bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r
        .take(8)
        .map_err(|_| bad("unexpected end of checkpoint (missing magic)"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic: not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| bad("unexpected end of checkpoint"))?;
    let raw_header = r.take(header_len)?;
    let value: serde_json::Value =
        serde_json::from_slice(raw_header).map_err(|e| bad(format!("malformed header: {e}")))?;
    let version = value.get("format_version").and_then(serde_json::Value::as_u64);
    if version.is_none_or(|v| !SUPPORTED_VERSIONS.contains(&(v as u32)) || v > u32::MAX as u64) {
        let found = version.map_or("missing".to_string(), |v| v.to_string());
        return Err(bad(format!(
            "unsupported format version {found} (supported versions: {SUPPORTED_VERSIONS:?})"
        )));
    }
    let header: Header = serde_json::from_value(value).map_err(|e| bad(format!("malformed header: {e}")))?;

    let data = &bytes[r.pos..];
    let mut tensors = BTreeMap::new();
    let mut expected_offset = 0u64;
    for entry in &header.tensors {
        if entry.offset != expected_offset {
            return Err(bad(format!(
                "tensor '{}' at offset {} (expected {expected_offset})",
                entry.name, entry.offset
            )));
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 8;
        if end > data.len() {
            return Err(bad("unexpected end of checkpoint"));
        }
        let values = data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if tensors
            .insert(entry.name.clone(), Tensor::from_vec(&entry.shape, values)?)
            .is_some()
        {
            return Err(bad(format!("duplicate tensor '{}'", entry.name)));
        }
        expected_offset = end as u64;
    }
    if expected_offset as usize != data.len() {
        return Err(bad(format!(
            "{} trailing bytes after tensor data",
            data.len() - expected_offset as usize
        )));
    }

    match header.model_kind {
        ModelKind::Lstm => decode_neural(header, tensors),
        kind => decode_baseline(header, kind, tensors),
    }
}

fn decode_neural(header: Header, tensors: BTreeMap<String, Tensor>) -> Result<Checkpoint> {
    let config: ModelConfig = serde_json::from_value(header.hyperparameters)
        .map_err(|e| bad(format!("malformed hyperparameters: {e}")))?;
    if header.architecture_kind != Some(config.arch) {
        return Err(bad("architecture_kind disagrees with hyperparameters"));
    }
    let mut chars = Vec::with_capacity(header.vocab.len());
    for s in &header.vocab {
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => chars.push(c),
            _ => return Err(bad(format!("vocabulary entry {s:?} is not a single character"))),
        }
    }
    let vocab = CharVocab::from_chars(chars)?;
    if vocab.size() != config.vocab_size {
        return Err(Error::Shape(format!(
            "checkpoint vocabulary has {} rows but hyperparameters declare {}",
            vocab.size(),
            config.vocab_size
        )));
    }
    let params = ModelParams::from_named(config, tensors)?;
    Ok(Checkpoint::Neural { params, vocab })
}

fn take_tensor(tensors: &mut BTreeMap<String, Tensor>, name: &str, shape: &[usize]) -> Result<Tensor> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| bad(format!("missing tensor '{name}'")))?;
    if t.shape() != shape {
        return Err(Error::Shape(format!(
            "tensor '{name}' has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

fn class_array(t: &Tensor) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(t.data());
    out
}

fn decode_baseline(header: Header, kind: ModelKind, mut tensors: BTreeMap<String, Tensor>) -> Result<Checkpoint> {
    let hyper: BaselineHyperparameters = serde_json::from_value(header.hyperparameters)
        .map_err(|e| bad(format!("malformed hyperparameters: {e}")))?;
    let dim = hyper.dim;
    if header.vocab.len() != dim {
        return Err(Error::Shape(format!(
            "checkpoint vocabulary has {} n-grams but hyperparameters declare {dim}",
            header.vocab.len()
        )));
    }
    let range = match hyper.features {
        FeatureKind::Unibi => NGramRange::UniBigram,
        FeatureKind::Uni | FeatureKind::Tfidf => NGramRange::Unigram,
    };
    let vocab = NGramVocab::from_grams(header.vocab, range)?;
    let tfidf = match hyper.features {
        FeatureKind::Tfidf => Some(Tfidf {
            idf: take_tensor(&mut tensors, "tfidf.idf", &[dim])?.into_data(),
        }),
        _ => None,
    };
    let missing = |what: &str| bad(format!("hyperparameters lack '{what}'"));
    let (method, classifier) = match kind {
        ModelKind::Mnb => {
            let priors = take_tensor(&mut tensors, "mnb.log_priors", &[NUM_CLASSES])?;
            let lik = take_tensor(&mut tensors, "mnb.log_likelihoods", &[NUM_CLASSES, dim])?;
            let model = MnbModel {
                log_priors: class_array(&priors),
                log_likelihoods: tensor_rows(&lik),
                alpha: hyper.alpha.ok_or_else(|| missing("alpha"))?,
                binarize: hyper.binarize.ok_or_else(|| missing("binarize"))?,
            };
            (Method::Mnb, Classifier::Mnb(model))
        }
        ModelKind::Svm | ModelKind::Nbsvm => {
            let weights = take_tensor(&mut tensors, "linear.weights", &[NUM_CLASSES, dim])?;
            let bias = take_tensor(&mut tensors, "linear.bias", &[NUM_CLASSES])?;
            let ratios = if kind == ModelKind::Nbsvm {
                Some(tensor_rows(&take_tensor(&mut tensors, "nbsvm.ratios", &[NUM_CLASSES, dim])?))
            } else {
                None
            };
            let model = LinearModel {
                weights: tensor_rows(&weights),
                bias: class_array(&bias),
                ratios,
                params: hyper.svm.ok_or_else(|| missing("svm"))?,
            };
            let method = if kind == ModelKind::Nbsvm { Method::Nbsvm } else { Method::Svm };
            (method, Classifier::Linear(model))
        }
        ModelKind::Lstm => unreachable!("handled by decode_neural"),
    };
    if let Some(name) = tensors.keys().next() {
        return Err(bad(format!("unexpected tensor '{name}'")));
    }
    Ok(Checkpoint::Baseline(BaselineModel {
        method,
        features: FeatureExtractor {
            kind: hyper.features,
            vocab,
            tfidf,
        },
        classifier,
    }))
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = to_bytes(checkpoint)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
