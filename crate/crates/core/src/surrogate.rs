//! Categorical label → scalar score mapping used to pre-train on
//! categorically labelled data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{CategoricalLabel, Dataset, SentencePair, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMap {
    pub ent: f64,
    pub neu: f64,
    pub con: f64,
}

impl SurrogateMap {
    pub fn new(ent: f64, neu: f64, con: f64) -> Result<Self> {
        let map = Self { ent, neu, con };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ent", self.ent), ("neu", self.neu), ("con", self.con)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "surrogate {name} = {v} outside [0, 1]"
                )));
            }
        }
        if !(self.ent > self.neu && self.neu > self.con) {
            return Err(Error::LabelOrdering(format!(
                "expected ent > neu > con, got ent={}, neu={}, con={}",
                self.ent, self.neu, self.con
            )));
        }
        Ok(())
    }

    pub fn score(&self, label: CategoricalLabel) -> f64 {
        match label {
            CategoricalLabel::Ent => self.ent,
            CategoricalLabel::Neu => self.neu,
            CategoricalLabel::Con => self.con,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let map: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("plain struct serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
    }
}

/// Mean training-split gold score per label.
pub fn fit_surrogate(dataset: &Dataset) -> Result<SurrogateMap> {
    fit_pairs(dataset.pairs_in(Split::Train))
}

pub fn fit_pairs<'a>(pairs: impl IntoIterator<Item = &'a SentencePair>) -> Result<SurrogateMap> {
    // [ent, neu, con] as (running mean, count); the running form is exact
    // when every score of a label is identical
    let mut acc = [(0.0f64, 0usize); 3];
    for pair in pairs {
        let (Some(label), Some(score)) = (pair.snli_label, pair.gold_score) else {
            continue;
        };
        let slot = match label {
            CategoricalLabel::Ent => 0,
            CategoricalLabel::Neu => 1,
            CategoricalLabel::Con => 2,
        };
        let (mean, n) = &mut acc[slot];
        *n += 1;
        *mean += (score - *mean) / *n as f64;
    }
    let mean = |slot: usize, name| {
        let (mean, n) = acc[slot];
        if n == 0 {
            Err(Error::MissingLabelClass(name))
        } else {
            Ok(mean)
        }
    };
    SurrogateMap::new(mean(0, "ent")?, mean(1, "neu")?, mean(2, "con")?)
}

/// Replaces every pair's gold score with the surrogate value of its label.
pub fn apply_surrogate(pairs: &[SentencePair], map: &SurrogateMap) -> Result<Vec<SentencePair>> {
    pairs
        .iter()
        .map(|p| {
            let label = p
                .snli_label
                .ok_or_else(|| Error::Unlabeled(p.pair_id.clone()))?;
            Ok(SentencePair {
                gold_score: Some(map.score(label)),
                ..p.clone()
            })
        })
        .collect()
}
