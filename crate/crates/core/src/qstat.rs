//! Cochran's Q under arbitrary positive weights.

use nalgebra::{DMatrix, DVector};

use crate::effects::{EffectEstimate, StudyTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    /// `1 / var_hat`: gives `Q_IV`.
    InverseVariance,
    /// Effective sample size `n_C n_T / n`: gives `Q_F`.
    EffectiveSampleSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QResult {
    pub q: f64,
    pub weights: Vec<f64>,
    pub weighted_mean: f64,
    pub k: usize,
}

pub fn weights(
    tables: &[StudyTable],
    estimates: &[EffectEstimate],
    scheme: WeightScheme,
) -> Result<Vec<f64>> {
    match scheme {
        WeightScheme::EffectiveSampleSize => {
            Ok(tables.iter().map(StudyTable::effective_size).collect())
        }
        WeightScheme::InverseVariance => estimates
            .iter()
            .enumerate()
            .map(|(index, e)| {
                if e.var_hat > 0.0 {
                    Ok(1.0 / e.var_hat)
                } else {
                    Err(Error::ZeroVariance { index })
                }
            })
            .collect(),
    }
}

fn check(estimates: &[f64], weights: &[f64]) -> Result<()> {
    if estimates.len() != weights.len() {
        return Err(Error::LengthMismatch {
            estimates: estimates.len(),
            weights: weights.len(),
        });
    }
    if weights.len() < 2 {
        return Err(Error::TooFewStudies {
            needed: 2,
            got: weights.len(),
        });
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::InvalidWeight { index, value });
    }
    Ok(())
}

/// Two-pass weighted sum of squared deviations from the weighted mean.
pub fn cochran_q(estimates: &[f64], weights: &[f64]) -> Result<QResult> {
    check(estimates, weights)?;
    let total: f64 = weights.iter().sum();
    // shifted by the first estimate, so equal estimates give exactly zero
    let shift = estimates[0];
    let mean = shift
        + estimates
            .iter()
            .zip(weights)
            .map(|(t, w)| (t - shift) * w)
            .sum::<f64>()
            / total;
    let q = estimates
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (t - mean).powi(2))
        .sum();
    Ok(QResult {
        q,
        weights: weights.to_vec(),
        weighted_mean: mean,
        k: weights.len(),
    })
}

/// Q written in terms of deviations `estimate - center` without forming the
/// weighted mean: `W [Σ q_i (1 - q_i) Θ_i² - Σ_{i≠j} q_i q_j Θ_i Θ_j]`.
/// The value does not depend on `center`.
pub fn cochran_q_expanded(estimates: &[f64], weights: &[f64], center: f64) -> Result<f64> {
    check(estimates, weights)?;
    let total: f64 = weights.iter().sum();
    let q: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let theta: Vec<f64> = estimates.iter().map(|t| t - center).collect();
    let mut diag = 0.0;
    let mut cross = 0.0;
    for i in 0..q.len() {
        diag += q[i] * (1.0 - q[i]) * theta[i] * theta[i];
        for j in 0..q.len() {
            if i != j {
                cross += q[i] * q[j] * theta[i] * theta[j];
            }
        }
    }
    Ok(total * (diag - cross))
}

/// Symmetric `A` with `Q = Θᵀ A Θ`: `A_ii = W q_i (1 - q_i)`, `A_ij = -W q_i q_j`.
pub fn q_matrix(weights: &[f64]) -> DMatrix<f64> {
    let total: f64 = weights.iter().sum();
    let k = weights.len();
    DMatrix::from_fn(k, k, |i, j| {
        let (qi, qj) = (weights[i] / total, weights[j] / total);
        if i == j {
            total * qi * (1.0 - qi)
        } else {
            -total * qi * qj
        }
    })
}

pub fn quadratic_form(a: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let v = DVector::from_column_slice(theta);
    (v.transpose() * a * &v)[(0, 0)]
}
