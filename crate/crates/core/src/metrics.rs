//! Pearson r, Spearman rho and mean squared error.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Evaluation summary. A correlation is `None` when either input has zero
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mse: f64,
    pub n: usize,
}

pub fn compute_metrics(gold: &[f64], pred: &[f64]) -> Result<MetricsReport> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 points for metrics, got {}",
            gold.len()
        )));
    }
    if gold.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite value in metric input".into(),
        ));
    }
    let mse = gold
        .iter()
        .zip(pred)
        .map(|(g, p)| (g - p) * (g - p))
        .sum::<f64>()
        / gold.len() as f64;
    Ok(MetricsReport {
        pearson: pearson(gold, pred),
        spearman: spearman(gold, pred),
        mse,
        n: gold.len(),
    })
}

/// Sample Pearson correlation; `None` on zero variance or mismatched input.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn fmt_corr(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "undef".into())
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>8} {:>6}", "r", "rho", "MSE", "n")?;
        write!(
            f,
            "{:>8} {:>8} {:>8.4} {:>6}",
            fmt_corr(self.pearson),
            fmt_corr(self.spearman),
            self.mse,
            self.n
        )
    }
}
