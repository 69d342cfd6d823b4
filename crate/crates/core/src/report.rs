//! Analysis artifacts: per-label score distributions, gold-vs-predicted
//! heatmaps and human-performance estimates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::datamodel::{AnnotationEvent, CategoricalLabel, SentencePair};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::scale::ScaleParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelStats {
    pub p2: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub p98: f64,
    pub count: usize,
}

pub type LabelDistribution = BTreeMap<CategoricalLabel, LabelStats>;

/// Quantile of sorted data by linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gold-score spread per label; pairs missing a label or score are skipped.
pub fn label_distribution(pairs: &[SentencePair]) -> LabelDistribution {
    let mut by_label: BTreeMap<CategoricalLabel, Vec<f64>> = BTreeMap::new();
    for p in pairs {
        if let (Some(label), Some(score)) = (p.snli_label, p.gold_score) {
            by_label.entry(label).or_default().push(score);
        }
    }
    by_label
        .into_iter()
        .map(|(label, mut scores)| {
            scores.sort_by(f64::total_cmp);
            let stats = LabelStats {
                p2: quantile(&scores, 0.02),
                q25: quantile(&scores, 0.25),
                median: quantile(&scores, 0.5),
                q75: quantile(&scores, 0.75),
                p98: quantile(&scores, 0.98),
                count: scores.len(),
            };
            (label, stats)
        })
        .collect()
}

pub fn distribution_csv(dist: &LabelDistribution) -> String {
    let mut out = String::from("label,count,p2,q25,median,q75,p98\n");
    for (label, s) in dist.iter().rev() {
        writeln!(
            out,
            "{label},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            s.count, s.p2, s.q25, s.median, s.q75, s.p98
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub bin_edges: Vec<f64>,
    /// `matrix[gold_bin][pred_bin]`, each non-empty row summing to 1.
    pub matrix: Vec<Vec<f64>>,
    pub row_counts: Vec<usize>,
}

/// Ten bins, uniform in slider space and mapped through the transform.
pub fn default_bin_edges(params: &ScaleParams) -> Vec<f64> {
    (0..=10)
        .map(|k| params.to_probability(k as f64 * 1000.0).expect("in range"))
        .collect()
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("need at least two bin edges".into()));
    }
    if edges
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::InvalidArgument(
            "bin edges must be strictly ascending".into(),
        ));
    }
    if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
        return Err(Error::InvalidArgument("bin edges must span [0, 1]".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("value {v} outside [0, 1]")));
    }
    let last = edges.len() - 2;
    // first edge strictly above v, minus one; 1.0 goes to the last bin
    Ok(edges
        .partition_point(|&e| e <= v)
        .saturating_sub(1)
        .min(last))
}

pub fn build_heatmap(gold: &[f64], pred: &[f64], edges: &[f64]) -> Result<Heatmap> {
    check_edges(edges)?;
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let n = edges.len() - 1;
    let mut counts = vec![vec![0usize; n]; n];
    for (&g, &p) in gold.iter().zip(pred) {
        counts[bin_of(edges, g)?][bin_of(edges, p)?] += 1;
    }
    let row_counts: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let matrix = counts
        .iter()
        .zip(&row_counts)
        .map(|(row, &total)| {
            row.iter()
                .map(|&c| {
                    if total == 0 {
                        0.0
                    } else {
                        c as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(Heatmap {
        bin_edges: edges.to_vec(),
        matrix,
        row_counts,
    })
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let labels: Vec<String> = self
            .bin_edges
            .windows(2)
            .map(|w| format!("{:.4}-{:.4}", w[0], w[1]))
            .collect();
        let mut out = format!("gold\\pred,{}\n", labels.join(","));
        for (label, row) in labels.iter().zip(&self.matrix) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{label},{}", cells.join(",")).expect("writing to a String");
        }
        out
    }

    /// Greyscale grid, gold bins bottom-to-top, predicted bins left-to-right.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 40;
        const MARGIN: usize = 70;
        let n = self.matrix.len();
        let side = n * CELL;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"9\">\n",
            w = side + MARGIN + 10,
            h = side + MARGIN + 10
        );
        for (gi, row) in self.matrix.iter().enumerate() {
            let y = 10 + (n - 1 - gi) * CELL;
            for (pi, &v) in row.iter().enumerate() {
                let x = MARGIN + pi * CELL;
                let shade = (255.0 * (1.0 - v)).round() as u8;
                writeln!(
                    svg,
                    "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({shade},{shade},{shade})\"><title>{v:.3}</title></rect>"
                )
                .expect("writing to a String");
            }
        }
        for (i, e) in self.bin_edges.iter().enumerate() {
            let x = MARGIN + i * CELL;
            let y = 10 + side - i * CELL;
            writeln!(
                svg,
                "  <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{e:.2}</text>\n  <text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{e:.2}</text>",
                side + 25,
                MARGIN - 4
            )
            .expect("writing to a String");
        }
        writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted</text>\n  <text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">gold</text>\n</svg>",
            MARGIN + side / 2,
            side + MARGIN,
            10 + side / 2,
            10 + side / 2
        )
        .expect("writing to a String");
        svg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanPerformance {
    pub metrics: MetricsReport,
    /// Re-annotators who also produced the gold score for a pair.
    pub overlap_warnings: Vec<String>,
}

/// Scores an independent 3-way re-annotation against existing gold scores.
///
/// `original` are the events behind the gold scores and are only used to
/// flag annotators who took part in both.
pub fn human_performance(
    gold_pairs: &[SentencePair],
    reannotations: &[AnnotationEvent],
    original: &[AnnotationEvent],
    params: &ScaleParams,
) -> Result<HumanPerformance> {
    let mut grouped: HashMap<&str, Vec<&AnnotationEvent>> = HashMap::new();
    for e in reannotations {
        grouped.entry(e.pair_id.as_str()).or_default().push(e);
    }
    let gold_ids: HashSet<&str> = gold_pairs.iter().map(|p| p.pair_id.as_str()).collect();
    if let Some(id) = grouped.keys().find(|id| !gold_ids.contains(*id)) {
        return Err(Error::UnknownPair(id.to_string()));
    }
    let mut original_by_pair: HashMap<&str, HashSet<&str>> = HashMap::new();
    for e in original {
        original_by_pair
            .entry(e.pair_id.as_str())
            .or_default()
            .insert(e.annotator_id.as_str());
    }

    let mut gold = Vec::with_capacity(gold_pairs.len());
    let mut human = Vec::with_capacity(gold_pairs.len());
    let mut overlap_warnings = Vec::new();
    for pair in gold_pairs {
        let g = pair
            .gold_score
            .ok_or_else(|| Error::MissingGold(pair.pair_id.clone()))?;
        let events = grouped
            .get(pair.pair_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        if events.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "pair {} has {} re-annotations, expected 3",
                pair.pair_id,
                events.len()
            )));
        }
        let mut sum = 0.0;
        for e in events {
            if original_by_pair
                .get(pair.pair_id.as_str())
                .is_some_and(|s| s.contains(e.annotator_id.as_str()))
            {
                overlap_warnings.push(format!(
                    "annotator {} re-annotated pair {} they already judged",
                    e.annotator_id, pair.pair_id
                ));
            }
            sum += params.to_probability(e.raw_slider as f64)?;
        }
        gold.push(g);
        human.push(sum / 3.0);
    }
    Ok(HumanPerformance {
        metrics: compute_metrics(&gold, &human)?,
        overlap_warnings,
    })
}
