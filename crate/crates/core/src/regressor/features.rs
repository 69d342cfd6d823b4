use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::datamodel::SentencePair;
use crate::error::{Error, Result};

/// Dense feature vectors keyed by pair id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    vectors: IndexMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, pair_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let pair_id = pair_id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant {
                pair_id,
                field: "features",
                message: "non-finite feature value".into(),
            });
        }
        self.vectors.insert(pair_id, vector);
        Ok(())
    }

    pub fn get(&self, pair_id: &str) -> Option<&[f64]> {
        self.vectors.get(pair_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Header line `dim=<d>`, then `pair_id,v1,...,vd` rows.
    pub fn write(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "dim={}", self.dim)?;
        let mut line = String::new();
        for (id, v) in &self.vectors {
            line.clear();
            line.push_str(id);
            for x in v {
                write!(line, ",{x}").expect("writing to a String");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::Io {
            path: path.into(),
            source: e,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out).map_err(io)?;
        std::io::Write::flush(&mut out).map_err(io)
    }

    pub fn read(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty feature file".into(),
        })?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("expected `dim=<d>` header, found `{header}`"),
            })?;
        let mut table = FeatureTable::new(dim);
        for (i, line) in lines {
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default().trim();
            let vector = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if id.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "missing pair id".into(),
                });
            }
            if table.vectors.contains_key(id) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate pair id {id}"),
                });
            }
            table.insert(id, vector).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        Self::read(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Pair,
    HypothesisOnly,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(FeatureMode::Pair),
            "hypothesis_only" | "hypothesis-only" => Ok(FeatureMode::HypothesisOnly),
            _ => Err(Error::InvalidArgument(format!(
                "unknown feature mode `{s}`"
            ))),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn hash_into(text: &str, seed: u64, out: &mut [f64]) {
    let width = out.len() as u64;
    for token in text.split_whitespace() {
        let h = fnv1a(seed, token.to_lowercase().as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        out[(h % width) as usize] += sign;
    }
}

/// Hashed bag-of-words stand-in for a sentence-pair encoder.
///
/// Premise tokens hash into the first half of the vector and hypothesis
/// tokens into the second; `HypothesisOnly` leaves the premise half zero.
/// Each nonzero vector is L2-normalised.
pub fn toy_featurize(
    pairs: &[SentencePair],
    dim: usize,
    mode: FeatureMode,
    seed: u64,
) -> Result<FeatureTable> {
    if dim < 8 {
        return Err(Error::InvalidArgument(format!(
            "feature dim must be at least 8, got {dim}"
        )));
    }
    let split = dim / 2;
    let mut table = FeatureTable::new(dim);
    for pair in pairs {
        let mut v = vec![0.0; dim];
        let (premise, hypothesis) = v.split_at_mut(split);
        if mode == FeatureMode::Pair {
            hash_into(&pair.premise, seed, premise);
        }
        hash_into(&pair.hypothesis, seed.wrapping_add(1), hypothesis);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        table.insert(pair.pair_id.clone(), v)?;
    }
    Ok(table)
}
