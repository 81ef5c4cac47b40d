//! Binary cache for prepared datasets.
//!
//! ```text
//! b"OCGCACHE"  u32 version  u64 header_len  header (JSON)  f64 data (LE)
//! ```
//!
//! The header carries the schema, the case split and a partition index;
//! the data section holds, partition by partition and pair by pair, the
//! prefix rows followed by the suffix rows, `vector_width` values each.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{hex, CaseSplit, DatasetBundle, EncodingSchema, Partition, PrefixSuffixPair};

const MAGIC: &[u8; 8] = b"OCGCACHE";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    key: String,
    schema: EncodingSchema,
    split: CaseSplit,
    partitions: Vec<PartitionIndex>,
}

#[derive(Serialize, Deserialize)]
struct PartitionIndex {
    split: String,
    prefix_len: usize,
    suffix_len: usize,
    case_ids: Vec<String>,
}

/// Cache key over everything that determines a bundle.
pub fn cache_key(log_hash: &str, object_type: &str, attrs: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    for part in [log_hash, object_type, &attrs.join("\u{1f}"), &seed.to_string()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex(&h.finalize())
}

pub fn write_bundle<W: Write>(
    mut w: W,
    key: &str,
    schema: &EncodingSchema,
    bundle: &DatasetBundle,
) -> Result<(), CacheError> {
    let named = [("train", &bundle.train), ("validation", &bundle.validation), ("test", &bundle.test)];
    let partitions = named
        .iter()
        .flat_map(|(name, parts)| {
            parts.iter().map(move |p| PartitionIndex {
                split: name.to_string(),
                prefix_len: p.prefix_len,
                suffix_len: p.suffix_len,
                case_ids: p.pairs.iter().map(|x| x.case_id.clone()).collect(),
            })
        })
        .collect();
    let header = Header { key: key.to_string(), schema: schema.clone(), split: bundle.split.clone(), partitions };
    let header = serde_json::to_vec(&header).map_err(|e| CacheError::Corrupt(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, parts) in named {
        for p in parts {
            for pair in &p.pairs {
                for row in pair.prefix.iter().chain(&pair.suffix) {
                    for x in row {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reads a cache file, returning its key, schema and bundle.
pub fn read_bundle<R: Read>(mut r: R) -> Result<(String, EncodingSchema, DatasetBundle), CacheError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::Corrupt("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(CacheError::Corrupt("unsupported version".into()));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let mut header = vec![0u8; u64::from_le_bytes(u64buf) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| CacheError::Corrupt(e.to_string()))?;
    let width = header.schema.vector_width;

    let mut read_rows = |n: usize| -> Result<Vec<Vec<f64>>, CacheError> {
        let mut rows = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            let mut row = Vec::with_capacity(width);
            for _ in 0..width {
                r.read_exact(&mut buf)?;
                row.push(f64::from_le_bytes(buf));
            }
            rows.push(row);
        }
        Ok(rows)
    };

    let mut bundle = DatasetBundle { split: header.split, train: vec![], validation: vec![], test: vec![] };
    for idx in header.partitions {
        let mut pairs = Vec::with_capacity(idx.case_ids.len());
        for case_id in idx.case_ids {
            let prefix = read_rows(idx.prefix_len)?;
            let suffix = read_rows(idx.suffix_len)?;
            pairs.push(PrefixSuffixPair { case_id, prefix, suffix });
        }
        let part = Partition { prefix_len: idx.prefix_len, suffix_len: idx.suffix_len, pairs };
        match idx.split.as_str() {
            "train" => bundle.train.push(part),
            "validation" => bundle.validation.push(part),
            "test" => bundle.test.push(part),
            other => return Err(CacheError::Corrupt(format!("unknown split {other}"))),
        }
    }
    Ok((header.key, header.schema, bundle))
}
