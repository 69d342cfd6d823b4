#![allow(dead_code)]

use std::path::Path;

use unli_core::qualification::QualificationItem;
use unli_core::{SentencePair, Split};
use unli_service::{AnnotationService, ServiceConfig};

pub fn pairs(n: usize) -> Vec<SentencePair> {
    (0..n)
        .map(|i| SentencePair {
            pair_id: format!("p{i:03}"),
            premise: format!("premise {i}"),
            hypothesis: format!("hypothesis {i}"),
            snli_label: None,
            gold_score: None,
            split: Split::Dev,
        })
        .collect()
}

/// Gold values of the synthetic qualification test; the first three are easy.
pub const QUAL_GOLDS: [f64; 10] = [0.5, 0.0, 1.0, 0.1, 0.25, 0.4, 0.6, 0.75, 0.9, 0.05];

pub fn items() -> Vec<QualificationItem> {
    QUAL_GOLDS
        .iter()
        .enumerate()
        .map(|(i, &gold)| QualificationItem {
            pair: SentencePair {
                pair_id: format!("q{i}"),
                premise: format!("qualification premise {i}"),
                hypothesis: format!("qualification hypothesis {i}"),
                snli_label: None,
                gold_score: Some(gold),
                split: Split::Dev,
            },
            gold,
            is_easy: i < 3,
        })
        .collect()
}

/// Raw slider positions that reproduce the qualification golds exactly.
pub fn perfect_raws(service: &AnnotationService) -> Vec<i64> {
    let scale = service.config().scale;
    QUAL_GOLDS
        .iter()
        .map(|&g| scale.from_probability(g).unwrap().round() as i64)
        .collect()
}

pub fn service(dir: &Path, n_pairs: usize) -> AnnotationService {
    AnnotationService::new(
        pairs(n_pairs),
        items(),
        ServiceConfig::new(dir.join("events.jsonl")),
    )
    .unwrap()
}
