//! Per-character convolution responses for inspecting what filters detect.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{encode_sentence, CharVocab};
use crate::error::{Error, Result};
use crate::nn::{conv1d_relu, embed, ModelParams};
use crate::train::argmax;

/// Post-ReLU convolution responses over the unpadded part of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMapExport {
    pub text: String,
    /// Lowercased input characters after truncation to the model's max length.
    pub characters: Vec<char>,
    /// `[filter][window start]`, `l − m + 1` windows per filter.
    pub responses: Vec<Vec<f64>>,
    pub window_span: usize,
    /// Window start of each filter's largest response.
    pub top_windows: Vec<usize>,
}

impl FeatureMapExport {
    pub fn width(&self) -> usize {
        self.responses.first().map_or(0, Vec::len)
    }

    /// `(filter, window start)` of the largest response overall; the first
    /// filter, then the earliest window, wins ties.
    pub fn strongest_window(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_value = f64::NEG_INFINITY;
        for (f, row) in self.responses.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > best_value {
                    best_value = v;
                    best = (f, j);
                }
            }
        }
        best
    }
}

pub fn conv_activations(model: &ModelParams, text: &str, vocab: &CharVocab) -> Result<FeatureMapExport> {
    let conv = model
        .conv
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no convolution layer in a char model".into()))?;
    let encoded = encode_sentence(text, vocab, model.config.max_len)?;
    let m = model.config.kernel_width;
    let l = encoded.true_length;
    if l < m {
        return Err(Error::InvalidInput(format!(
            "text has {l} characters, fewer than the convolution window of {m}"
        )));
    }
    let q = embed(&encoded, &model.embedding)?;
    let f = conv1d_relu(&q, &conv.weight, &conv.bias)?;
    let width = l - m + 1;
    let responses: Vec<Vec<f64>> = (0..model.config.filters)
        .map(|k| f.row(k)[..width].to_vec())
        .collect();
    let top_windows = responses.iter().map(|r| argmax(r)).collect();
    Ok(FeatureMapExport {
        text: text.to_string(),
        characters: text
            .chars()
            .flat_map(char::to_lowercase)
            .take(model.config.max_len)
            .collect(),
        responses,
        window_span: m,
        top_windows,
    })
}

/// Header `char_pos,char,filter_0,...`; one row per window start, values in
/// `{:.16e}` so every f64 survives a text round trip.
pub fn export_activation_csv(export: &FeatureMapExport, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("writing {}: {e}", path.display()));
    let mut header = vec!["char_pos".to_string(), "char".to_string()];
    header.extend((0..export.responses.len()).map(|k| format!("filter_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for j in 0..export.width() {
        let mut row = vec![j.to_string(), export.characters[j].to_string()];
        row.extend(export.responses.iter().map(|r| format!("{:.16e}", r[j])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back `(window characters, responses[filter][window])`.
pub fn import_activation_csv(path: &Path) -> Result<(Vec<char>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |msg: String| Error::InvalidInput(format!("{}: {msg}", path.display()));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "char_pos" || &header[1] != "char" {
        return Err(bad("expected header starting with char_pos,char".into()));
    }
    let filters = header.len() - 2;
    let mut chars = Vec::new();
    let mut responses = vec![Vec::new(); filters];
    for (j, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record[0].parse::<usize>().ok() != Some(j) {
            return Err(bad(format!("row {} has char_pos {}", j + 1, &record[0])));
        }
        let mut cs = record[1].chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => chars.push(c),
            _ => return Err(bad(format!("row {} char field {:?}", j + 1, &record[1]))),
        }
        for (k, resp) in responses.iter_mut().enumerate() {
            let v = record[k + 2]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", j + 1)))?;
            resp.push(v);
        }
    }
    Ok((chars, responses))
}
