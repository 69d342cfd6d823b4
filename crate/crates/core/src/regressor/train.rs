use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureTable;
use super::head::{AdamConfig, Gradient, Loss, RegressionHead};
use crate::datamodel::SentencePair;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: Loss,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Bce,
            lr: 1e-5,
            max_grad_norm: 1.0,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a non-negative number");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return bad("max_grad_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot from the epoch with the highest dev Pearson.
    pub head: RegressionHead,
    pub best_epoch: usize,
    pub epochs: Vec<EpochReport>,
    /// Largest global gradient norm actually applied (after clipping).
    pub max_applied_grad_norm: f64,
}

fn examples<'a>(table: &'a FeatureTable, pairs: &[SentencePair]) -> Result<Vec<(&'a [f64], f64)>> {
    pairs
        .iter()
        .map(|p| {
            let f = table
                .get(&p.pair_id)
                .ok_or_else(|| Error::MissingFeatures(p.pair_id.clone()))?;
            let y = p
                .gold_score
                .ok_or_else(|| Error::MissingGold(p.pair_id.clone()))?;
            Ok((f, y))
        })
        .collect()
}

/// Zero weights, bias at the logit of the mean training target.
pub fn init_head(table: &FeatureTable, train_pairs: &[SentencePair]) -> Result<RegressionHead> {
    let data = examples(table, train_pairs)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let mean = data.iter().map(|(_, y)| y).sum::<f64>() / data.len() as f64;
    Ok(RegressionHead::calibrated(table.dim(), mean))
}

pub fn predict_pairs(
    head: &RegressionHead,
    table: &FeatureTable,
    pairs: &[SentencePair],
) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            let f = table
                .get(&p.pair_id)
                .ok_or_else(|| Error::MissingFeatures(p.pair_id.clone()))?;
            head.predict(f)
        })
        .collect()
}

pub fn evaluate(
    head: &RegressionHead,
    table: &FeatureTable,
    pairs: &[SentencePair],
) -> Result<MetricsReport> {
    let data = examples(table, pairs)?;
    let gold: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    let pred = data
        .iter()
        .map(|(f, _)| head.predict(f))
        .collect::<Result<Vec<_>>>()?;
    compute_metrics(&gold, &pred)
}

/// Minibatch Adam with per-batch global-norm clipping and best-epoch
/// selection on dev Pearson. Deterministic for a fixed `cfg.seed`.
pub fn train(
    head_init: RegressionHead,
    table: &FeatureTable,
    train_pairs: &[SentencePair],
    dev_pairs: &[SentencePair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if head_init.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            actual: head_init.dim(),
        });
    }
    let data = examples(table, train_pairs)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    // validates dev up front as well
    examples(table, dev_pairs)?;

    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut head = head_init;
    let mut best: Option<(Option<f64>, usize, RegressionHead)> = None;
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut max_applied = 0.0f64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = Gradient::zeros(table.dim());
            for &i in chunk {
                let (f, y) = data[i];
                let (l, g) = head.loss_and_grad(f, y, cfg.loss)?;
                loss_sum += l;
                grad.add_scaled(&g, 1.0);
            }
            grad.scale(1.0 / chunk.len() as f64);
            grad.clip_norm(cfg.max_grad_norm);
            max_applied = max_applied.max(grad.norm());
            head.apply_adam(&grad, &adam);
        }
        let dev = evaluate(&head, table, dev_pairs)?;
        let better = match &best {
            None => true,
            Some((score, _, _)) => {
                dev.pearson.unwrap_or(f64::NEG_INFINITY) > score.unwrap_or(f64::NEG_INFINITY)
            }
        };
        if better {
            best = Some((dev.pearson, epoch, head.clone()));
        }
        reports.push(EpochReport {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            dev,
        });
    }

    let (_, best_epoch, best_head) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        head: best_head,
        best_epoch,
        epochs: reports,
        max_applied_grad_norm: max_applied,
    })
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub head: RegressionHead,
    pub pretrain: TrainOutcome,
    /// `None` when the fine-tuning stage ran for zero epochs.
    pub finetune: Option<TrainOutcome>,
}

/// Trains on surrogate-scored pairs, then continues on scalar-labelled
/// pairs with the same weights and a fresh optimizer state. Both stages keep
/// the epoch with the best Pearson on `unli_dev`.
pub fn pretrain_finetune(
    table: &FeatureTable,
    surrogate_pairs: &[SentencePair],
    unli_train: &[SentencePair],
    unli_dev: &[SentencePair],
    cfg_pre: &TrainConfig,
    cfg_fine: &TrainConfig,
) -> Result<PretrainOutcome> {
    let train_ids: HashSet<&str> = unli_train.iter().map(|p| p.pair_id.as_str()).collect();
    if let Some(p) = surrogate_pairs
        .iter()
        .find(|p| train_ids.contains(p.pair_id.as_str()))
    {
        return Err(Error::InvalidArgument(format!(
            "pair {} appears in both pre-training and fine-tuning data",
            p.pair_id
        )));
    }
    let init = init_head(table, surrogate_pairs)?;
    let pretrain = train(init, table, surrogate_pairs, unli_dev, cfg_pre)?;
    if cfg_fine.epochs == 0 {
        return Ok(PretrainOutcome {
            head: pretrain.head.clone(),
            pretrain,
            finetune: None,
        });
    }
    let mut start = pretrain.head.clone();
    start.reset_optimizer();
    let finetune = train(start, table, unli_train, unli_dev, cfg_fine)?;
    Ok(PretrainOutcome {
        head: finetune.head.clone(),
        pretrain,
        finetune: Some(finetune),
    })
}
