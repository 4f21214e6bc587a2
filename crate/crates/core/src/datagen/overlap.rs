use serde::{Deserialize, Serialize};

use super::schema::Dataset;
use crate::error::{Error, Result};

/// Pairwise class overlap: entry `(a, b)` is the fraction of instances of
/// classes `a` and `b` lying inside both classes' bounding boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub class_names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl OverlapReport {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a][b]
    }

    /// Mean of the off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let c = self.matrix.len();
        if c < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for a in 0..c {
            for b in 0..c {
                if a != b {
                    sum += self.matrix[a][b];
                }
            }
        }
        sum / (c * (c - 1)) as f64
    }
}

pub fn class_overlap_report(dataset: &Dataset) -> Result<OverlapReport> {
    let classes = dataset.class_count();
    let present = dataset.class_histogram().iter().filter(|&&n| n > 0).count();
    if dataset.is_empty() || present < 2 {
        return Err(Error::NotApplicable(
            "class overlap needs a non-empty dataset with at least two classes".into(),
        ));
    }
    let d = dataset.feature_count();
    let mut lo = vec![vec![f64::INFINITY; d]; classes];
    let mut hi = vec![vec![f64::NEG_INFINITY; d]; classes];
    for inst in &dataset.instances {
        for (j, &v) in inst.features.iter().enumerate() {
            lo[inst.label][j] = lo[inst.label][j].min(v);
            hi[inst.label][j] = hi[inst.label][j].max(v);
        }
    }
    let inside = |c: usize, x: &[f64]| x.iter().enumerate().all(|(j, &v)| v >= lo[c][j] && v <= hi[c][j]);

    let mut matrix = vec![vec![0.0; classes]; classes];
    for a in 0..classes {
        for b in a..classes {
            let members = dataset
                .instances
                .iter()
                .filter(|i| i.label == a || i.label == b);
            let (mut total, mut shared) = (0usize, 0usize);
            for inst in members {
                total += 1;
                if inside(a, &inst.features) && inside(b, &inst.features) {
                    shared += 1;
                }
            }
            let frac = if total == 0 { 0.0 } else { shared as f64 / total as f64 };
            matrix[a][b] = frac;
            matrix[b][a] = frac;
        }
    }
    Ok(OverlapReport {
        class_names: dataset.meta.class_names.clone(),
        matrix,
    })
}
