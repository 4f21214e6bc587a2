//! The Loan underwriting dataset: a 4x4x4 grid of integer codes labeled by a
//! piecewise polynomial score.

use std::collections::BTreeSet;

use serde::Deserialize;

use super::schema::{Dataset, DatasetMeta, FeatureKind, FeatureSchema, FeatureSpec, Instance};
use crate::error::{Error, Result};

pub const ACCEPTED: usize = 0;
pub const REJECTED: usize = 1;
pub const ACCEPT_THRESHOLD: f64 = 32.0;

const DEFAULT_REMOVALS: &str = include_str!("../../configs/loan_removals.toml");

pub type LoanTriple = [i64; 3];

pub fn loan_schema() -> FeatureSchema {
    FeatureSchema {
        features: vec![
            FeatureSpec::integer("x1", FeatureKind::Ordinal, 2.0, 5.0),
            FeatureSpec::integer("x2", FeatureKind::Ordinal, 0.0, 3.0),
            FeatureSpec::integer("x3", FeatureKind::Ordinal, 0.0, 3.0),
        ],
    }
}

fn in_grid(t: &LoanTriple) -> bool {
    (2..=5).contains(&t[0]) && (0..=3).contains(&t[1]) && (0..=3).contains(&t[2])
}

/// Score of an application. `x1 = 2` (no job) takes the second branch.
pub fn loan_score(x1: i64, x2: i64, x3: i64) -> Result<f64> {
    if !in_grid(&[x1, x2, x3]) {
        return Err(Error::Schema(format!(
            "loan codes ({x1}, {x2}, {x3}) outside x1 in [2,5], x2 in [0,3], x3 in [0,3]"
        )));
    }
    let (x1, x2, x3) = (x1 as f64, x2 as f64, x3 as f64);
    Ok(if x1 != 2.0 {
        8.0 * (x1 - 2.0).powi(2) + 3.0 * x2.powi(3) - x3.powi(4) + 4.0
    } else {
        3.0 * x2.powi(3) + x3.powi(4) + 12.0
    })
}

pub fn loan_label(score: f64) -> usize {
    if score >= ACCEPT_THRESHOLD {
        ACCEPTED
    } else {
        REJECTED
    }
}

#[derive(Deserialize)]
struct RemovalFile {
    removed: Vec<LoanTriple>,
}

pub fn parse_removals(text: &str) -> Result<Vec<LoanTriple>> {
    let file: RemovalFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(file.removed)
}

/// The shipped list of ten removed combinations.
pub fn default_removals() -> Vec<LoanTriple> {
    parse_removals(DEFAULT_REMOVALS).expect("shipped removal list parses")
}

/// Enumerates the 64-point grid minus `removals`, in lexicographic order.
pub fn generate_loan(removals: &[LoanTriple]) -> Result<Dataset> {
    if let Some(bad) = removals.iter().find(|t| !in_grid(t)) {
        return Err(Error::Config(format!(
            "removal entry {bad:?} is outside the 4x4x4 loan grid"
        )));
    }
    let removed: BTreeSet<LoanTriple> = removals.iter().copied().collect();
    let mut instances = Vec::new();
    for x1 in 2..=5 {
        for x2 in 0..=3 {
            for x3 in 0..=3 {
                if removed.contains(&[x1, x2, x3]) {
                    continue;
                }
                let score = loan_score(x1, x2, x3)?;
                instances.push(Instance {
                    id: instances.len(),
                    features: vec![x1 as f64, x2 as f64, x3 as f64],
                    label: loan_label(score),
                    variation_id: 0,
                    energy: None,
                });
            }
        }
    }
    if instances.is_empty() {
        log::warn!("every loan combination was removed; the dataset is empty");
    }
    let config_hash = super::schema::short_hash(format!("loan:{removed:?}").as_bytes());
    Ok(Dataset {
        meta: DatasetMeta {
            name: "loan".into(),
            schema: loan_schema(),
            class_names: vec!["Accepted".into(), "Rejected".into()],
            config_hash,
            seed: 0,
        },
        instances,
    })
}
