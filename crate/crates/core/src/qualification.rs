//! Annotator qualification test scoring.
//!
//! An annotator passes when every easy item lands inside its error band and
//! the responses correlate with the gold values strongly enough overall.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{SentencePair, Split};
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationItem {
    pub pair: SentencePair,
    pub gold: f64,
    pub is_easy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub pearson: f64,
    pub spearman: f64,
    /// Whether easy items take part in the correlations.
    #[serde(default = "yes")]
    pub correlate_easy_items: bool,
}

fn yes() -> bool {
    true
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            pearson: 0.7,
            spearman: 0.4,
            correlate_easy_items: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualificationResult {
    pub passed: bool,
    pub easy_ok: bool,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// `response - gold` for every item, in input order.
    pub per_item_errors: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Allowed absolute error on an easy item: a quarter of the distance to the
/// nearer end of the scale.
pub fn delta_band(gold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gold) {
        return Err(Error::Domain(format!("gold {gold} outside [0, 1]")));
    }
    Ok(gold.min(1.0 - gold) / 4.0)
}

pub fn evaluate_qualification(
    items: &[QualificationItem],
    responses: &[f64],
    thresholds: &Thresholds,
) -> Result<QualificationResult> {
    if items.len() != responses.len() {
        return Err(Error::LengthMismatch {
            left: items.len(),
            right: responses.len(),
        });
    }
    let n_easy = items.iter().filter(|i| i.is_easy).count();
    if items.len() < 4 || n_easy < 3 {
        return Err(Error::InvalidArgument(format!(
            "qualification needs at least 4 items with 3 easy ones, got {} with {n_easy}",
            items.len()
        )));
    }
    for r in responses {
        if !(0.0..=1.0).contains(r) {
            return Err(Error::Domain(format!("response {r} outside [0, 1]")));
        }
    }

    let mut diagnostics = Vec::new();
    let mut easy_ok = true;
    for (item, &r) in items.iter().zip(responses) {
        if item.is_easy {
            let band = delta_band(item.gold)?;
            if (r - item.gold).abs() > band {
                easy_ok = false;
                diagnostics.push(format!(
                    "easy item {}: response {r:.4} outside {:.4} ± {band:.4}",
                    item.pair.pair_id, item.gold
                ));
            }
        }
    }

    let (gold, resp): (Vec<f64>, Vec<f64>) = items
        .iter()
        .zip(responses)
        .filter(|(item, _)| thresholds.correlate_easy_items || !item.is_easy)
        .map(|(item, &r)| (item.gold, r))
        .unzip();
    let pearson = metrics::pearson(&gold, &resp);
    let spearman = metrics::spearman(&gold, &resp);
    if pearson.is_none() || spearman.is_none() {
        diagnostics.push("zero variance in responses or gold; correlation undefined".into());
    }
    let pearson_ok = pearson.is_some_and(|r| r > thresholds.pearson);
    let spearman_ok = spearman.is_some_and(|r| r > thresholds.spearman);
    if let (Some(r), false) = (pearson, pearson_ok) {
        diagnostics.push(format!("pearson {r:.4} not above {}", thresholds.pearson));
    }
    if let (Some(r), false) = (spearman, spearman_ok) {
        diagnostics.push(format!("spearman {r:.4} not above {}", thresholds.spearman));
    }

    Ok(QualificationResult {
        passed: easy_ok && pearson_ok && spearman_ok,
        easy_ok,
        pearson,
        spearman,
        per_item_errors: items
            .iter()
            .zip(responses)
            .map(|(i, r)| r - i.gold)
            .collect(),
        diagnostics,
    })
}

/// Reads a `pair_id,premise,hypothesis,gold,is_easy` CSV (optional header).
pub fn load_items(path: impl AsRef<Path>) -> Result<Vec<QualificationItem>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    read_items(file)
}

pub fn read_items(reader: impl std::io::Read) -> Result<Vec<QualificationItem>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut items = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 1);
        if i == 0 && record.get(0) == Some("pair_id") {
            continue;
        }
        if record.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 columns, found {}", record.len()),
            });
        }
        let gold: f64 = record[3].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid gold `{}`", &record[3]),
        })?;
        let is_easy = match record[4].trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" | "" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid is_easy `{other}`"),
                })
            }
        };
        let pair = SentencePair {
            pair_id: record[0].to_string(),
            premise: record[1].to_string(),
            hypothesis: record[2].to_string(),
            snli_label: None,
            gold_score: Some(gold),
            split: Split::Dev,
        };
        pair.validate()?;
        items.push(QualificationItem {
            pair,
            gold,
            is_easy,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(golds: &[(f64, bool)]) -> Vec<QualificationItem> {
        golds
            .iter()
            .enumerate()
            .map(|(i, &(gold, is_easy))| QualificationItem {
                pair: SentencePair {
                    pair_id: format!("q{i}"),
                    premise: "p".into(),
                    hypothesis: "h".into(),
                    snli_label: None,
                    gold_score: Some(gold),
                    split: Split::Dev,
                },
                gold,
                is_easy,
            })
            .collect()
    }

    fn standard() -> Vec<QualificationItem> {
        items(&[
            (0.5, true),
            (0.0, true),
            (1.0, true),
            (0.1, false),
            (0.25, false),
            (0.4, false),
            (0.6, false),
            (0.75, false),
            (0.9, false),
            (0.05, false),
        ])
    }

    #[test]
    fn band_values() {
        assert_eq!(delta_band(0.5).unwrap(), 0.125);
        assert_eq!(delta_band(0.0).unwrap(), 0.0);
        assert!((delta_band(0.8).unwrap() - 0.05).abs() < 1e-15);
        assert!(delta_band(1.5).is_err());
    }

    #[test]
    fn perfect_responses_pass() {
        let it = standard();
        let golds: Vec<f64> = it.iter().map(|i| i.gold).collect();
        let r = evaluate_qualification(&it, &golds, &Thresholds::default()).unwrap();
        assert!(r.passed && r.easy_ok);
        assert!((r.pearson.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.spearman.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.per_item_errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn easy_band_failure() {
        let it = standard();
        let mut resp: Vec<f64> = it.iter().map(|i| i.gold).collect();
        resp[0] = 0.7;
        let r = evaluate_qualification(&it, &resp, &Thresholds::default()).unwrap();
        assert!(!r.easy_ok);
        assert!(!r.passed);
        // just inside the band
        resp[0] = 0.625;
        let r = evaluate_qualification(&it, &resp, &Thresholds::default()).unwrap();
        assert!(r.easy_ok);
    }

    #[test]
    fn zero_variance_fails_with_diagnostic() {
        let it = items(&[(0.5, true), (0.5, true), (0.5, true), (0.2, false)]);
        let r = evaluate_qualification(&it, &[0.5; 4], &Thresholds::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.pearson, None);
        assert!(r.diagnostics.iter().any(|d| d.contains("zero variance")));
    }

    #[test]
    fn excluding_easy_items_from_correlation() {
        let it = standard();
        let mut resp: Vec<f64> = it.iter().map(|i| i.gold).collect();
        // scramble the hard items so that only the easy ones carry the correlation
        resp[3..].reverse();
        let with = evaluate_qualification(&it, &resp, &Thresholds::default()).unwrap();
        let without = evaluate_qualification(
            &it,
            &resp,
            &Thresholds {
                correlate_easy_items: false,
                ..Thresholds::default()
            },
        )
        .unwrap();
        assert!(with.pearson.unwrap() > without.pearson.unwrap());
        assert!(!without.passed);
    }

    #[test]
    fn precondition_errors() {
        let it = standard();
        assert!(matches!(
            evaluate_qualification(&it, &[0.5; 3], &Thresholds::default()),
            Err(Error::LengthMismatch { .. })
        ));
        let few_easy = items(&[(0.5, true), (0.1, false), (0.2, false), (0.3, false)]);
        assert!(
            evaluate_qualification(&few_easy, &[0.5, 0.1, 0.2, 0.3], &Thresholds::default())
                .is_err()
        );
    }

    #[test]
    fn item_csv() {
        let text = "pair_id,premise,hypothesis,gold,is_easy\nq1,A girl tossed a coin.,The coin comes up heads.,0.5,true\nq2,p,h,0.1,false\n";
        let items = read_items(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_easy);
        assert_eq!(items[1].gold, 0.1);
        assert!(read_items("q1,p,h,0.5,maybe\n".as_bytes()).is_err());
        assert!(read_items("q1,p,h,1.5,true\n".as_bytes()).is_err());
    }
}
