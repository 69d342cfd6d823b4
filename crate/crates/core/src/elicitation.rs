//! Batch construction, the escalation rule and aggregation of slider
//! responses into gold scores.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{AnnotationEvent, Dataset};
use crate::error::{Error, Result};
use crate::scale::ScaleParams;

pub const BATCH_SIZE: usize = 5;

/// Raw slider distance above which a third annotator is elicited.
pub const ESCALATION_THRESHOLD: u32 = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    pub pair_ids: Vec<String>,
    pub assigned_annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationResult {
    pub pair_id: String,
    pub gold_score: f64,
    pub n_responses: usize,
    pub escalated: bool,
}

/// Where responses are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingMode {
    /// Transform each response, then average probabilities.
    #[default]
    Probability,
    /// Average raw slider positions, then transform once.
    Raw,
}

/// Lays pairs out into 5-slot batches so that every pair lands in at least
/// `redundancy` batches.
///
/// Pairs are shuffled once under `seed` and the permutation is repeated
/// `redundancy` times; the concatenation is cut into batches of five. The
/// last batch is topped up by continuing around the cycle, so a few pairs
/// get one extra slot. With five or more pairs every batch holds distinct
/// ids, and every batch gets its own annotator slot.
pub fn make_batches(pair_ids: &[String], redundancy: usize, seed: u64) -> Result<Vec<Batch>> {
    if redundancy < 1 {
        return Err(Error::InvalidArgument(
            "redundancy must be at least 1".into(),
        ));
    }
    if pair_ids.is_empty() {
        return Err(Error::InvalidArgument("no pairs to batch".into()));
    }
    let mut order: Vec<&String> = pair_ids.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let slots = pair_ids.len() * redundancy;
    let n_batches = slots.div_ceil(BATCH_SIZE);
    Ok((0..n_batches)
        .map(|b| Batch {
            batch_id: format!("batch-{b:05}"),
            pair_ids: (0..BATCH_SIZE)
                .map(|k| order[(b * BATCH_SIZE + k) % order.len()].clone())
                .collect(),
            assigned_annotator: format!("slot-{b}"),
        })
        .collect())
}

/// True when the two raw responses differ by more than the threshold.
pub fn needs_escalation(a: &AnnotationEvent, b: &AnnotationEvent) -> Result<bool> {
    if a.pair_id != b.pair_id {
        return Err(Error::InvalidArgument(format!(
            "events are for different pairs ({} vs {})",
            a.pair_id, b.pair_id
        )));
    }
    Ok(a.raw_slider.abs_diff(b.raw_slider) > ESCALATION_THRESHOLD)
}

pub fn aggregate(
    events: &[&AnnotationEvent],
    params: &ScaleParams,
    mode: AveragingMode,
) -> Result<AggregationResult> {
    let first = events
        .first()
        .ok_or_else(|| Error::InvalidArgument("no events to aggregate".into()))?;
    if !(2..=3).contains(&events.len()) {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs 2 or 3 responses, pair {} has {}",
            first.pair_id,
            events.len()
        )));
    }
    let mut seen = HashSet::new();
    for e in events {
        if e.pair_id != first.pair_id {
            return Err(Error::InvalidArgument(format!(
                "events are for different pairs ({} vs {})",
                first.pair_id, e.pair_id
            )));
        }
        if !seen.insert(e.annotator_id.as_str()) {
            return Err(Error::DuplicateAnnotation {
                pair_id: e.pair_id.clone(),
                annotator_id: e.annotator_id.clone(),
            });
        }
    }
    let n = events.len() as f64;
    let gold_score = match mode {
        AveragingMode::Probability => {
            let mut sum = 0.0;
            for e in events {
                sum += params.to_probability(e.raw_slider as f64)?;
            }
            sum / n
        }
        AveragingMode::Raw => {
            let mean = events.iter().map(|e| e.raw_slider as f64).sum::<f64>() / n;
            params.to_probability(mean)?
        }
    };
    Ok(AggregationResult {
        pair_id: first.pair_id.clone(),
        gold_score,
        n_responses: events.len(),
        escalated: events.len() == 3,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AggregationRun {
    pub results: Vec<AggregationResult>,
    /// Pairs with two discordant responses and no third one yet.
    pub awaiting: Vec<String>,
    /// Pairs with more than three responses; left unaggregated.
    pub overfull: Vec<String>,
}

pub fn run_aggregation(
    dataset: &Dataset,
    params: &ScaleParams,
    mode: AveragingMode,
) -> Result<AggregationRun> {
    let mut run = AggregationRun::default();
    for (pair, events) in dataset.events_by_pair() {
        match events.len() {
            0 | 1 => {}
            2 if needs_escalation(events[0], events[1])? => run.awaiting.push(pair.pair_id.clone()),
            2 | 3 => run.results.push(aggregate(&events, params, mode)?),
            _ => run.overfull.push(pair.pair_id.clone()),
        }
    }
    Ok(run)
}

pub fn write_results_csv(results: &[AggregationResult], writer: impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Config(format!("writing aggregation CSV: {e}"));
    wtr.write_record(["pair_id", "gold_score", "n_responses", "escalated"])
        .map_err(io)?;
    for r in results {
        wtr.write_record([
            r.pair_id.as_str(),
            &r.gold_score.to_string(),
            &r.n_responses.to_string(),
            if r.escalated { "true" } else { "false" },
        ])
        .map_err(io)?;
    }
    wtr.flush()
        .map_err(|e| Error::Config(format!("writing aggregation CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::datamodel::{SentencePair, Split};

    fn ev(pair: &str, annotator: &str, raw: u32) -> AnnotationEvent {
        AnnotationEvent {
            pair_id: pair.into(),
            annotator_id: annotator.into(),
            raw_slider: raw,
            batch_id: "b".into(),
            timestamp: 0,
            round: 1,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    fn coverage(batches: &[Batch]) -> HashMap<String, usize> {
        let mut c = HashMap::new();
        for b in batches {
            for id in &b.pair_ids {
                *c.entry(id.clone()).or_insert(0) += 1;
            }
        }
        c
    }

    #[test]
    fn ten_pairs_twice() {
        let batches = make_batches(&ids(10), 2, 7).unwrap();
        assert_eq!(batches.len(), 4);
        assert!(batches.iter().all(|b| b.pair_ids.len() == 5));
        assert!(batches
            .iter()
            .all(|b| b.pair_ids.iter().collect::<HashSet<_>>().len() == 5));
        let c = coverage(&batches);
        assert_eq!(c.len(), 10);
        assert!(c.values().all(|&k| k == 2));
        let annotators: HashSet<_> = batches.iter().map(|b| &b.assigned_annotator).collect();
        assert_eq!(annotators.len(), 4);
    }

    #[test]
    fn five_pairs_once() {
        let batches = make_batches(&ids(5), 1, 0).unwrap();
        assert_eq!(batches.len(), 1);
        let got: HashSet<_> = batches[0].pair_ids.iter().cloned().collect();
        assert_eq!(got, ids(5).into_iter().collect());
    }

    #[test]
    fn three_pairs_padded() {
        let batches = make_batches(&ids(3), 2, 1).unwrap();
        assert!(batches.iter().all(|b| b.pair_ids.len() == 5));
        let c = coverage(&batches);
        assert_eq!(c.len(), 3);
        assert!(c.values().all(|&k| k >= 2));
    }

    #[test]
    fn batching_is_seeded() {
        assert_eq!(
            make_batches(&ids(23), 2, 9).unwrap(),
            make_batches(&ids(23), 2, 9).unwrap()
        );
        assert_ne!(
            make_batches(&ids(23), 2, 9).unwrap(),
            make_batches(&ids(23), 2, 10).unwrap()
        );
        assert!(make_batches(&ids(3), 0, 1).is_err());
    }

    #[test]
    fn non_multiple_of_five_distinct_within_batch() {
        for n in 5..40 {
            for r in 1..4 {
                let batches = make_batches(&ids(n), r, n as u64).unwrap();
                for b in &batches {
                    assert_eq!(b.pair_ids.iter().collect::<HashSet<_>>().len(), 5);
                }
                let c = coverage(&batches);
                assert!(c.values().all(|&k| k == r || k == r + 1));
                assert_eq!(c.len(), n);
            }
        }
    }

    #[test]
    fn escalation_threshold() {
        assert!(needs_escalation(&ev("a", "x", 3000), &ev("a", "y", 5500)).unwrap());
        assert!(!needs_escalation(&ev("a", "x", 4000), &ev("a", "y", 6000)).unwrap());
        assert!(needs_escalation(&ev("a", "x", 4000), &ev("a", "y", 6001)).unwrap());
        assert!(needs_escalation(&ev("a", "x", 0), &ev("a", "y", 10000)).unwrap());
        assert!(needs_escalation(&ev("a", "x", 0), &ev("b", "y", 10)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let p = ScaleParams::default();
        let mode = AveragingMode::Probability;
        let r = aggregate(&[&ev("a", "x", 5000), &ev("a", "y", 5000)], &p, mode).unwrap();
        assert_eq!(r.gold_score, 0.5);
        assert!(!r.escalated);
        let r = aggregate(&[&ev("a", "x", 0), &ev("a", "y", 10000)], &p, mode).unwrap();
        assert_eq!(r.gold_score, 0.5);

        let p = ScaleParams::new(0.001, 0.001).unwrap();
        let r = aggregate(&[&ev("a", "x", 2500), &ev("a", "y", 5000)], &p, mode).unwrap();
        // (0.07010371654510816 + 0.5) / 2, from the mpmath evaluation
        assert!((r.gold_score - 0.285_051_858_272_554_1).abs() < 1e-14);
    }

    #[test]
    fn aggregate_raw_mode() {
        let p = ScaleParams::default();
        let r = aggregate(
            &[&ev("a", "x", 0), &ev("a", "y", 10000)],
            &p,
            AveragingMode::Raw,
        )
        .unwrap();
        assert_eq!(r.gold_score, 0.5);
        let r = aggregate(
            &[&ev("a", "x", 4000), &ev("a", "y", 6000)],
            &p,
            AveragingMode::Raw,
        )
        .unwrap();
        assert_eq!(r.gold_score, 0.5);
    }

    #[test]
    fn aggregate_errors() {
        let p = ScaleParams::default();
        let m = AveragingMode::Probability;
        assert!(aggregate(&[&ev("a", "x", 1)], &p, m).is_err());
        let e = [
            ev("a", "w", 1),
            ev("a", "x", 1),
            ev("a", "y", 1),
            ev("a", "z", 1),
        ];
        assert!(aggregate(&e.iter().collect::<Vec<_>>(), &p, m).is_err());
        assert!(matches!(
            aggregate(&[&ev("a", "x", 1), &ev("a", "x", 2)], &p, m),
            Err(Error::DuplicateAnnotation { .. })
        ));
    }

    #[test]
    fn run_aggregation_buckets() {
        let pairs = ["a", "b", "c", "d"]
            .iter()
            .map(|id| SentencePair {
                pair_id: id.to_string(),
                premise: "p".into(),
                hypothesis: "h".into(),
                snli_label: None,
                gold_score: None,
                split: Split::Dev,
            })
            .collect();
        let mut third = ev("b", "z", 4000);
        third.round = 3;
        let events = vec![
            ev("a", "x", 3000),
            ev("a", "y", 5500),
            ev("b", "x", 3000),
            ev("b", "y", 5500),
            third,
            ev("c", "x", 4900),
            ev("c", "y", 5100),
            ev("d", "x", 100),
        ];
        let d = Dataset::new(pairs, events).unwrap();
        let p = ScaleParams::default();
        let run = run_aggregation(&d, &p, AveragingMode::Probability).unwrap();
        assert_eq!(run.awaiting, vec!["a".to_string()]);
        assert_eq!(run.results.len(), 2);
        let b = &run.results[0];
        assert_eq!(b.pair_id, "b");
        assert!(b.escalated);
        let want = [3000.0, 5500.0, 4000.0]
            .iter()
            .map(|&x| p.to_probability(x).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((b.gold_score - want).abs() < 1e-15);
        let c = &run.results[1];
        assert_eq!(
            (c.pair_id.as_str(), c.escalated, c.n_responses),
            ("c", false, 2)
        );
    }

    #[test]
    fn results_csv() {
        let mut out = Vec::new();
        let r = AggregationResult {
            pair_id: "a".into(),
            gold_score: 0.25,
            n_responses: 3,
            escalated: true,
        };
        write_results_csv(&[r], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "pair_id,gold_score,n_responses,escalated\na,0.25,3,true\n"
        );
    }
}
