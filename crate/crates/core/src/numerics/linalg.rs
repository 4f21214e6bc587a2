//! Cosine similarity and weighted ridge regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, x)
    }
}

/// Weighted mean that is exact when every value is identical, so constant
/// columns center to exact zeros.
fn weighted_mean(values: impl Iterator<Item = f64> + Clone, weights: &[f64], total: f64) -> f64 {
    let mut it = values.clone();
    if let Some(first) = it.next() {
        if it.all(|v| v == first) {
            return first;
        }
    }
    values.zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

/// Minimizes `sum_i w_i (y_i - beta.x_i - b)^2 + alpha |beta|^2` with the
/// intercept `b` unpenalized.
///
/// The intercept is eliminated by weighted centering; the remaining `d x d`
/// penalized normal system is solved by Gaussian elimination with partial
/// pivoting.
pub fn weighted_ridge(x: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64) -> Result<RidgeFit> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Config("ridge needs at least one row".into()));
    }
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if w.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: w.len(),
        });
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("ridge alpha must be >= 0, got {alpha}")));
    }
    if w.iter().any(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
        return Err(Error::Config("ridge weights must be finite and >= 0".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("ridge weights are all zero".into()));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|row| row.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: bad.len(),
        });
    }

    let x_mean: Vec<f64> = (0..d)
        .map(|j| weighted_mean(x.iter().map(move |r| r[j]), w, total))
        .collect();
    let y_mean = weighted_mean(y.iter().copied(), w, total);

    let mut a = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        let yc = yi - y_mean;
        let xc: Vec<f64> = row.iter().zip(&x_mean).map(|(v, m)| v - m).collect();
        for j in 0..d {
            rhs[j] += wi * xc[j] * yc;
            for k in j..d {
                a[j][k] += wi * xc[j] * xc[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            a[j][k] = a[k][j];
        }
        a[j][j] += alpha;
    }

    let coefficients = solve(a, rhs).ok_or(Error::SingularSystem { alpha })?;
    let intercept = y_mean - dot(&coefficients, &x_mean);
    Ok(RidgeFit {
        coefficients,
        intercept,
        alpha,
    })
}

/// Solves `a x = b`; `None` when a pivot vanishes relative to the matrix scale.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 {
        return Some(Vec::new());
    }
    if scale == 0.0 {
        return None;
    }
    let tol = scale * 1e-13;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * out[k]).sum();
        out[row] = (b[row] - tail) / a[row][row];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UndefinedSimilarity)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn exact_line() {
        let fit = weighted_ridge(&col(&[0.0, 1.0, 2.0]), &[1.0, 3.0, 5.0], &[1.0; 3], 0.0).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_alpha_shrinks_to_weighted_mean() {
        let fit = weighted_ridge(&col(&[0.0, 1.0, 2.0]), &[1.0, 3.0, 5.0], &[1.0; 3], 1e9).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-6);
        assert!((fit.intercept - 3.0).abs() < 1e-6);
    }

    #[test]
    fn constant_target_gives_exact_zero_coefficients() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 5.0]];
        let fit = weighted_ridge(&x, &[1.0; 3], &[0.3, 0.7, 0.9], 1.0).unwrap();
        assert_eq!(fit.coefficients, vec![0.0, 0.0]);
        assert_eq!(fit.intercept, 1.0);
    }

    #[test]
    fn constant_column_gives_exact_zero_with_penalty() {
        let x = vec![vec![0.1, 2.0], vec![0.1, 1.0], vec![0.1, 5.0]];
        let fit = weighted_ridge(&x, &[0.0, 1.0, 1.0], &[0.3, 0.7, 0.9], 1.0).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert!(fit.coefficients[1] != 0.0);
    }

    #[test]
    fn singular_without_penalty() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(matches!(
            weighted_ridge(&x, &[1.0, 2.0, 3.0], &[1.0; 3], 0.0),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn all_zero_weights_rejected() {
        assert!(weighted_ridge(&col(&[0.0, 1.0]), &[0.0, 1.0], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn exact_linear_full_rank_zero_residuals() {
        let x = vec![
            vec![1.0, 0.5, -2.0],
            vec![0.0, 1.5, 1.0],
            vec![2.0, -1.0, 0.0],
            vec![3.0, 2.0, 1.0],
            vec![-1.0, 0.0, 4.0],
        ];
        let truth = [0.7, -1.3, 2.1];
        let y: Vec<f64> = x.iter().map(|r| 0.25 + dot(r, &truth)).collect();
        let fit = weighted_ridge(&x, &y, &[1.0, 2.0, 0.5, 1.0, 3.0], 0.0).unwrap();
        for (r, yi) in x.iter().zip(&y) {
            assert!((fit.predict(r) - yi).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn cosine_self_symmetric_scaling(
            a in proptest::collection::vec(-10.0f64..10.0, 1..6),
            b_seed in proptest::collection::vec(-10.0f64..10.0, 6),
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
            let b: Vec<f64> = b_seed[..a.len()].to_vec();
            prop_assume!(b.iter().any(|v| v.abs() > 1e-3));
            prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert!((ab - cosine_similarity(&b, &a).unwrap()).abs() < 1e-15);
            let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
            prop_assert!((ab - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
