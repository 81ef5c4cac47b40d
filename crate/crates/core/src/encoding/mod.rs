//! From flattened cases to numeric training data.
//!
//! Every event becomes a fixed-width vector laid out as
//!
//! | block            | width                 |
//! |------------------|-----------------------|
//! | activity one-hot | number of activities  |
//! | categorical attrs| one one-hot per attr  |
//! | numeric attrs    | one slot per attr     |
//! | elapsed time     | 1                     |
//! | EOS bit          | 1                     |
//!
//! Numeric values and elapsed times are min-max normalized into `[0, 1]`.
//! A case ends with an EOS vector: all zeros except the EOS bit.

pub mod cache;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ocel::{AttrValue, FlattenedCase, OcelLog};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncodingError {
    #[error("no cases to encode")]
    EmptyInput,
    #[error("timestamps go backwards at position {0}")]
    NegativeElapsed(usize),
    #[error("activity {0:?} is not in the vocabulary")]
    UnknownActivity(String),
    #[error("case {0} has fewer than two events")]
    CaseTooShort(String),
    #[error("need at least 3 cases to split, got {0}")]
    TooFewCases(usize),
}

/// One case in plain form: what the encoder consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub activities: Vec<String>,
    pub timestamps: Vec<DateTime<Utc>>,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl CaseRecord {
    /// Collects a flattened case together with the selected attributes of
    /// its object.
    pub fn from_flattened(log: &OcelLog, case: &FlattenedCase<'_>, selected_attrs: &[String]) -> Self {
        let attributes = log
            .object(&case.object_id)
            .map(|o| {
                o.ovmap
                    .iter()
                    .filter(|(k, _)| selected_attrs.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect()
            })
            .unwrap_or_default();
        Self {
            case_id: case.object_id.clone(),
            activities: case.events.iter().map(|e| e.activity.clone()).collect(),
            timestamps: case.events.iter().map(|e| e.timestamp).collect(),
            attributes,
        }
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub activity_vocab: Vec<String>,
    pub categorical_vocabs: BTreeMap<String, Vec<String>>,
    pub numeric_ranges: BTreeMap<String, (f64, f64)>,
    pub elapsed_range: (f64, f64),
    pub vector_width: usize,
}

/// Seconds between consecutive timestamps; the first entry is 0.
pub fn elapsed_times(timestamps: &[DateTime<Utc>]) -> Result<Vec<f64>, EncodingError> {
    let mut out = Vec::with_capacity(timestamps.len());
    for (i, t) in timestamps.iter().enumerate() {
        if i == 0 {
            out.push(0.0);
            continue;
        }
        let d = (*t - timestamps[i - 1]).num_seconds();
        if d < 0 {
            return Err(EncodingError::NegativeElapsed(i));
        }
        out.push(d as f64);
    }
    Ok(out)
}

/// Min-max scaling clamped into `[0, 1]`; a degenerate range maps to 0.
pub fn normalize(value: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    ((value - min) / (max - min)).clamp(0.0, 1.0)
}

pub fn denormalize(value: f64, min: f64, max: f64) -> f64 {
    min + value * (max - min)
}

fn min_max(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values.into_iter().fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Builds vocabularies and ranges from `cases`.
///
/// An attribute is numeric when every observed value parses as a number,
/// categorical otherwise. Vocabularies are sorted.
pub fn build_schema(cases: &[CaseRecord], selected_attrs: &[String]) -> Result<EncodingSchema, EncodingError> {
    if cases.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    let activity_vocab: Vec<String> =
        cases.iter().flat_map(|c| c.activities.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();

    let attrs: BTreeSet<&String> = selected_attrs.iter().collect();
    let mut categorical_vocabs = BTreeMap::new();
    let mut numeric_ranges = BTreeMap::new();
    for name in attrs {
        let values: Vec<&AttrValue> = cases.iter().filter_map(|c| c.attributes.get(name)).collect();
        if values.iter().all(|v| v.as_f64().is_some()) {
            let range = min_max(values.iter().filter_map(|v| v.as_f64())).unwrap_or((0.0, 0.0));
            numeric_ranges.insert(name.clone(), range);
        } else {
            let vocab: BTreeSet<String> = values.iter().map(|v| v.as_label()).collect();
            categorical_vocabs.insert(name.clone(), vocab.into_iter().collect());
        }
    }

    let mut schema = EncodingSchema {
        vector_width: 0,
        activity_vocab,
        categorical_vocabs,
        numeric_ranges,
        elapsed_range: (0.0, 0.0),
    };
    schema.vector_width = schema.activity_width() + schema.attribute_width() + 2;
    schema.refit_ranges(cases)?;
    Ok(schema)
}

impl EncodingSchema {
    /// Recomputes numeric and elapsed ranges from `cases` (usually the
    /// training split) without touching vocabularies.
    pub fn refit_ranges(&mut self, cases: &[CaseRecord]) -> Result<(), EncodingError> {
        let mut elapsed = Vec::new();
        for c in cases {
            elapsed.extend(elapsed_times(&c.timestamps)?);
        }
        self.elapsed_range = min_max(elapsed).unwrap_or((0.0, 0.0));
        for (name, range) in self.numeric_ranges.iter_mut() {
            *range = min_max(cases.iter().filter_map(|c| c.attributes.get(name)).filter_map(AttrValue::as_f64))
                .unwrap_or((0.0, 0.0));
        }
        Ok(())
    }

    pub fn activity_width(&self) -> usize {
        self.activity_vocab.len()
    }

    /// Width of the categorical and numeric attribute blocks together.
    pub fn attribute_width(&self) -> usize {
        self.categorical_vocabs.values().map(Vec::len).sum::<usize>() + self.numeric_ranges.len()
    }

    pub fn attribute_offset(&self) -> usize {
        self.activity_width()
    }

    pub fn elapsed_index(&self) -> usize {
        self.vector_width - 2
    }

    pub fn eos_index(&self) -> usize {
        self.vector_width - 1
    }

    pub fn activity_index(&self, activity: &str) -> Option<usize> {
        self.activity_vocab.binary_search_by(|a| a.as_str().cmp(activity)).ok()
    }

    /// Stable feature keys, one per vector slot.
    pub fn feature_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.activity_vocab.iter().map(|a| format!("activity:{a}")).collect();
        for (name, vocab) in &self.categorical_vocabs {
            out.extend(vocab.iter().map(|v| format!("attr:{name}={v}")));
        }
        out.extend(self.numeric_ranges.keys().map(|n| format!("attr:{n}")));
        out.push("elapsed".into());
        out.push("eos".into());
        out
    }

    /// Encoded attribute block for one object's attributes. Unknown
    /// categorical values leave their block all zero; missing numerics are 0.
    pub fn encode_attributes(&self, attrs: &BTreeMap<String, AttrValue>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.attribute_width());
        for (name, vocab) in &self.categorical_vocabs {
            let label = attrs.get(name).map(AttrValue::as_label);
            out.extend(vocab.iter().map(|v| if Some(v) == label.as_ref() { 1.0 } else { 0.0 }));
        }
        for (name, &(lo, hi)) in &self.numeric_ranges {
            out.push(attrs.get(name).and_then(AttrValue::as_f64).map_or(0.0, |v| normalize(v, lo, hi)));
        }
        out
    }

    pub fn normalize_elapsed(&self, secs: f64) -> f64 {
        normalize(secs, self.elapsed_range.0, self.elapsed_range.1)
    }

    pub fn denormalize_elapsed(&self, v: f64) -> f64 {
        denormalize(v, self.elapsed_range.0, self.elapsed_range.1)
    }

    pub fn eos_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.vector_width];
        v[self.eos_index()] = 1.0;
        v
    }

    /// SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex(&Sha256::digest(serde_json::to_vec(self).expect("schema serializes")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// An encoded case; the last vector is the EOS vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCase {
    pub case_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl EncodedCase {
    /// Number of events, not counting EOS.
    pub fn num_events(&self) -> usize {
        self.vectors.len().saturating_sub(1)
    }
}

/// Event vectors for `case` without the trailing EOS vector.
pub fn encode_events(case: &CaseRecord, schema: &EncodingSchema) -> Result<Vec<Vec<f64>>, EncodingError> {
    let elapsed = elapsed_times(&case.timestamps)?;
    let attrs = schema.encode_attributes(&case.attributes);
    case.activities
        .iter()
        .zip(elapsed)
        .map(|(activity, secs)| {
            let idx = schema.activity_index(activity).ok_or_else(|| EncodingError::UnknownActivity(activity.clone()))?;
            let mut v = vec![0.0; schema.vector_width];
            v[idx] = 1.0;
            v[schema.attribute_offset()..schema.attribute_offset() + attrs.len()].copy_from_slice(&attrs);
            v[schema.elapsed_index()] = schema.normalize_elapsed(secs);
            Ok(v)
        })
        .collect()
}

pub fn encode_case(case: &CaseRecord, schema: &EncodingSchema) -> Result<EncodedCase, EncodingError> {
    let mut vectors = encode_events(case, schema)?;
    vectors.push(schema.eos_vector());
    Ok(EncodedCase { case_id: case.case_id.clone(), vectors })
}

/// Activity labels and elapsed seconds of the non-EOS vectors.
pub fn decode_case(vectors: &[Vec<f64>], schema: &EncodingSchema) -> (Vec<String>, Vec<f64>) {
    let mut activities = Vec::new();
    let mut elapsed = Vec::new();
    for v in vectors {
        if v[schema.eos_index()] >= 0.5 {
            break;
        }
        let idx = crate::autodiff::tensor::argmax(&v[..schema.activity_width()]);
        activities.push(schema.activity_vocab[idx].clone());
        elapsed.push(schema.denormalize_elapsed(v[schema.elapsed_index()]));
    }
    (activities, elapsed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrefixSuffixPair {
    pub case_id: String,
    pub prefix: Vec<Vec<f64>>,
    /// Remaining events followed by the EOS vector.
    pub suffix: Vec<Vec<f64>>,
}

/// All splits of a case into a nonempty prefix and the rest: `n − 1` pairs
/// for `n` events, prefix lengths `1..n`.
pub fn make_pairs(case: &EncodedCase) -> Result<Vec<PrefixSuffixPair>, EncodingError> {
    let n = case.num_events();
    if n < 2 {
        return Err(EncodingError::CaseTooShort(case.case_id.clone()));
    }
    Ok((1..n)
        .map(|k| PrefixSuffixPair {
            case_id: case.case_id.clone(),
            prefix: case.vectors[..k].to_vec(),
            suffix: case.vectors[k..].to_vec(),
        })
        .collect())
}

/// Pairs that share prefix and suffix lengths, batched together.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub prefix_len: usize,
    pub suffix_len: usize,
    pub pairs: Vec<PrefixSuffixPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Deterministic 70/10/20 split of case ids: ids are sorted, shuffled with
/// `seed`, then cut at `⌊0.7n⌋` and `⌊0.7n⌋ + ⌊0.1n⌋`.
pub fn split_case_ids(ids: &[String], seed: u64) -> Result<CaseSplit, EncodingError> {
    let mut ids: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = ids.len();
    if n < 3 {
        return Err(EncodingError::TooFewCases(n));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(CaseSplit { train: ids, validation, test })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub split: CaseSplit,
    pub train: Vec<Partition>,
    pub validation: Vec<Partition>,
    pub test: Vec<Partition>,
}

impl DatasetBundle {
    pub fn num_pairs(partitions: &[Partition]) -> usize {
        partitions.iter().map(|p| p.pairs.len()).sum()
    }

    /// Longest suffix (with EOS) in the training partitions.
    pub fn longest_train_suffix(&self) -> usize {
        self.train.iter().map(|p| p.suffix_len).max().unwrap_or(1)
    }
}

fn partition(pairs: impl IntoIterator<Item = PrefixSuffixPair>) -> Vec<Partition> {
    let mut groups: BTreeMap<(usize, usize), Vec<PrefixSuffixPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry((p.prefix.len(), p.suffix.len())).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|((prefix_len, suffix_len), pairs)| Partition { prefix_len, suffix_len, pairs })
        .collect()
}

/// Splits by case, then groups each split's pairs by `(prefix_len, suffix_len)`.
pub fn split_and_partition(
    pairs_by_case: &[(String, Vec<PrefixSuffixPair>)],
    seed: u64,
) -> Result<DatasetBundle, EncodingError> {
    let ids: Vec<String> = pairs_by_case.iter().map(|(id, _)| id.clone()).collect();
    let split = split_case_ids(&ids, seed)?;
    let lookup: BTreeMap<&str, &Vec<PrefixSuffixPair>> =
        pairs_by_case.iter().map(|(id, pairs)| (id.as_str(), pairs)).collect();
    let gather = |ids: &[String]| partition(ids.iter().flat_map(|id| lookup[id.as_str()].iter().cloned()));
    Ok(DatasetBundle {
        train: gather(&split.train),
        validation: gather(&split.validation),
        test: gather(&split.test),
        split,
    })
}

/// Flattens `log` onto `object_type`, trims length outliers and collects the
/// selected attributes of each case object.
pub fn cases_from_log(
    log: &OcelLog,
    object_type: &str,
    selected_attrs: &[String],
) -> Result<Vec<CaseRecord>, crate::ocel::OcelError> {
    let cases = crate::ocel::trim_outliers(crate::ocel::flatten(log, object_type)?);
    Ok(cases.iter().map(|c| CaseRecord::from_flattened(log, c, selected_attrs)).collect())
}

/// Everything needed to train on one object type of a log.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub schema: EncodingSchema,
    pub bundle: DatasetBundle,
    pub cases: Vec<CaseRecord>,
}

/// Splits `cases` by seed, builds the schema (vocabularies from all cases,
/// ranges from the training split only), encodes and partitions. Cases with
/// a single event cannot form a pair and are dropped.
pub fn prepare(cases: Vec<CaseRecord>, selected_attrs: &[String], seed: u64) -> Result<PreparedData, EncodingError> {
    let cases: Vec<CaseRecord> = cases.into_iter().filter(|c| c.len() >= 2).collect();
    let ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();
    let split = split_case_ids(&ids, seed)?;
    let train_ids: BTreeSet<&String> = split.train.iter().collect();
    let train_cases: Vec<CaseRecord> = cases.iter().filter(|c| train_ids.contains(&c.case_id)).cloned().collect();

    let mut schema = build_schema(&cases, selected_attrs)?;
    schema.refit_ranges(&train_cases)?;

    let mut pairs_by_case = Vec::with_capacity(cases.len());
    for c in &cases {
        let encoded = encode_case(c, &schema)?;
        pairs_by_case.push((c.case_id.clone(), make_pairs(&encoded)?));
    }
    let bundle = split_and_partition(&pairs_by_case, seed)?;
    Ok(PreparedData { schema, bundle, cases })
}
