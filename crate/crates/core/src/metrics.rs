//! Suffix quality: Damerau–Levenshtein similarity over activity labels and
//! mean absolute error over normalized elapsed times.

use serde::{Deserialize, Serialize};

use crate::encoding::Partition;
use crate::gan::{GanError, TrainedModel};

/// Optimal-string-alignment distance: insertions, deletions, substitutions
/// and swaps of adjacent symbols, with no substring edited twice.
pub fn dl_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

/// `1 − DL(s_f, s_r) / max(|s_f|, |s_r|)`; two empty sequences score 1.
pub fn similarity<T: PartialEq>(predicted: &[T], real: &[T]) -> f64 {
    let longest = predicted.len().max(real.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - dl_distance(predicted, real) as f64 / longest as f64
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no values to compare")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub fn mae(predicted: &[f64], real: &[f64]) -> Result<f64, MetricsError> {
    if predicted.len() != real.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), real.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(predicted.iter().zip(real).map(|(p, r)| (r - p).abs()).sum::<f64>() / predicted.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub case_id: String,
    pub prefix_len: usize,
    pub predicted: Vec<usize>,
    pub real: Vec<usize>,
    pub similarity: f64,
    /// `|t_r − t_f|` on the normalized scale, first `min(|s_f|, |s_r|)` steps.
    pub abs_errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_similarity: f64,
    pub mae_normalized: f64,
    pub num_pairs: usize,
    pub num_timestamps: usize,
    pub pairs: Vec<PairRecord>,
}

impl EvalReport {
    /// Aggregates per-pair records. With no aligned timestamps at all the
    /// MAE is reported as 1, the worst value on the normalized scale.
    pub fn from_pairs(pairs: Vec<PairRecord>) -> Self {
        let num_pairs = pairs.len();
        let mean_similarity = if num_pairs == 0 {
            0.0
        } else {
            pairs.iter().map(|p| p.similarity).sum::<f64>() / num_pairs as f64
        };
        let errors: Vec<f64> = pairs.iter().flat_map(|p| p.abs_errors.iter().copied()).collect();
        let mae_normalized = if errors.is_empty() { 1.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 };
        Self { mean_similarity, mae_normalized, num_pairs, num_timestamps: errors.len(), pairs }
    }

    pub const CSV_HEADER: &'static str = "mean_similarity,mae_normalized,num_pairs,num_timestamps";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.mean_similarity, self.mae_normalized, self.num_pairs, self.num_timestamps)
    }

    /// The report without per-pair detail.
    pub fn summary(&self) -> Self {
        Self { pairs: Vec::new(), ..self.clone() }
    }
}

/// Predicts every pair's suffix from its prefix and scores it.
pub fn evaluate(model: &TrainedModel, partitions: &[Partition]) -> Result<EvalReport, GanError> {
    let schema = &model.schema;
    let mut records = Vec::new();
    for part in partitions {
        let prefixes: Vec<&[Vec<f64>]> = part.pairs.iter().map(|p| p.prefix.as_slice()).collect();
        let predicted = model.generate_batch(&prefixes)?;
        for (pair, pred) in part.pairs.iter().zip(predicted) {
            let real: Vec<&Vec<f64>> = pair.suffix.iter().filter(|v| v[schema.eos_index()] < 0.5).collect();
            let real_acts: Vec<usize> = real
                .iter()
                .map(|v| crate::autodiff::tensor::argmax(&v[..schema.activity_width()]))
                .collect();
            let real_elapsed: Vec<f64> = real.iter().map(|v| v[schema.elapsed_index()]).collect();
            let abs_errors = pred
                .elapsed
                .iter()
                .zip(&real_elapsed)
                .map(|(p, r)| (r - p).abs())
                .collect();
            records.push(PairRecord {
                case_id: pair.case_id.clone(),
                prefix_len: part.prefix_len,
                similarity: similarity(&pred.activities, &real_acts),
                predicted: pred.activities,
                real: real_acts,
                abs_errors,
            });
        }
    }
    Ok(EvalReport::from_pairs(records))
}
