//! Approximations to the null distribution of Q.
//!
//! `Q_IV` is referred to a chi-square with `K - 1` degrees of freedom. `Q_F`
//! (effective-sample-size weights) is referred either to a gamma distribution
//! matching its first two exact null moments, or to the exact distribution of
//! the quadratic form `Θᵀ A Θ` with normal `Θ` and plugged-in variances. Both
//! `Q_F` approximations need the arm probabilities, which are estimated either
//! naïvely from each arm or through the fixed-weights mean effect.

pub mod wchisq;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma_ur;

use crate::effects::{clamp_prob, estimate_effect, Measure, StudyTable};
use crate::error::{Error, Result};
use crate::moments::{arm_moments, effect_moments, ArmSpec, MomentSet};
use crate::qstat::q_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ApproxMethod {
    ChiSq,
    TwoMomentNaive,
    TwoMomentModel,
    FarebrotherNaive,
    FarebrotherModel,
}

impl ApproxMethod {
    pub const ALL: [ApproxMethod; 5] = [
        ApproxMethod::ChiSq,
        ApproxMethod::TwoMomentNaive,
        ApproxMethod::TwoMomentModel,
        ApproxMethod::FarebrotherNaive,
        ApproxMethod::FarebrotherModel,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short column label used in CSV files.
    pub fn label(self) -> &'static str {
        match self {
            ApproxMethod::ChiSq => "chisq",
            ApproxMethod::TwoMomentNaive => "2m_naive",
            ApproxMethod::TwoMomentModel => "2m_model",
            ApproxMethod::FarebrotherNaive => "f_naive",
            ApproxMethod::FarebrotherModel => "f_model",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ApproxMethod::ChiSq => "ChiSq",
            ApproxMethod::TwoMomentNaive => "2M SSW naive",
            ApproxMethod::TwoMomentModel => "2M SSW model",
            ApproxMethod::FarebrotherNaive => "F SSW naive",
            ApproxMethod::FarebrotherModel => "F SSW model",
        }
    }

    pub fn plug_in_mode(self) -> Option<PlugInMode> {
        match self {
            ApproxMethod::ChiSq => None,
            ApproxMethod::TwoMomentNaive | ApproxMethod::FarebrotherNaive => Some(PlugInMode::Naive),
            ApproxMethod::TwoMomentModel | ApproxMethod::FarebrotherModel => {
                Some(PlugInMode::ModelBased)
            }
        }
    }
}

impl fmt::Display for ApproxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ApproxMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ApproxMethod::ALL
            .into_iter()
            .find(|m| m.label() == s.trim())
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlugInMode {
    Naive,
    ModelBased,
}

/// Arm probabilities at which null moments are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PlugInContext {
    pub p_hat_c: Vec<f64>,
    pub p_hat_t: Vec<f64>,
    pub mode: PlugInMode,
}

impl PlugInContext {
    /// Known probabilities, e.g. the true ones in a simulation.
    pub fn from_probs(p_c: Vec<f64>, p_t: Vec<f64>) -> Result<Self> {
        if let Some(&p) = p_c.iter().chain(&p_t).find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(Self {
            p_hat_c: p_c,
            p_hat_t: p_t,
            mode: PlugInMode::Naive,
        })
    }

    pub fn len(&self) -> usize {
        self.p_hat_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat_c.is_empty()
    }
}

/// Fixed-weights (effective sample size) mean of the study effects.
pub fn ssw_mean_effect(studies: &[StudyTable], measure: Measure) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in studies {
        let w = s.effective_size();
        num += w * estimate_effect(s, measure).estimate;
        den += w;
    }
    num / den
}

pub fn plug_in_probs(studies: &[StudyTable], measure: Measure, mode: PlugInMode) -> Result<PlugInContext> {
    if studies.len() < 3 {
        return Err(Error::TooFewStudies {
            needed: 3,
            got: studies.len(),
        });
    }
    let tr = measure.transform();
    let p_hat_c: Vec<f64> = studies
        .iter()
        .map(|s| clamp_prob(tr.estimate_p(s.x_c, s.n_c), s.n_c))
        .collect();
    let p_hat_t = match mode {
        PlugInMode::Naive => studies
            .iter()
            .map(|s| clamp_prob(tr.estimate_p(s.x_t, s.n_t), s.n_t))
            .collect(),
        PlugInMode::ModelBased => {
            let eta = ssw_mean_effect(studies, measure);
            let link = measure.link();
            studies
                .iter()
                .zip(&p_hat_c)
                .map(|(s, &pc)| link.h_inv_clamped(link.h(pc) + eta, s.n_t))
                .collect()
        }
    };
    Ok(PlugInContext {
        p_hat_c,
        p_hat_t,
        mode,
    })
}

/// Exact conditional moments of each study's effect estimate at the plug-in
/// probabilities.
pub fn study_moments(ctx: &PlugInContext, studies: &[StudyTable], measure: Measure) -> Result<Vec<MomentSet>> {
    if ctx.len() != studies.len() {
        return Err(Error::LengthMismatch {
            estimates: ctx.len(),
            weights: studies.len(),
        });
    }
    let tr = measure.transform();
    studies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = arm_moments(ArmSpec::new(s.n_t, ctx.p_hat_t[i])?, tr);
            let c = arm_moments(ArmSpec::new(s.n_c, ctx.p_hat_c[i])?, tr);
            Ok(effect_moments(&t, &c))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of `Θᵀ A Θ` for independent zero-mean `Θ_i` with the
/// given second and fourth moments.
pub fn quadratic_form_moments(weights: &[f64], m2: &[f64], m4: &[f64]) -> Result<QfMoments> {
    let a = q_matrix(weights);
    let k = weights.len();
    let mut mean = 0.0;
    let mut variance = 0.0;
    for i in 0..k {
        let aii = a[(i, i)];
        mean += aii * m2[i];
        variance += aii * aii * (m4[i] - m2[i] * m2[i]);
        for j in 0..k {
            if i != j {
                variance += 2.0 * a[(i, j)].powi(2) * m2[i] * m2[j];
            }
        }
    }
    if !(mean > 0.0 && variance > 0.0 && mean.is_finite() && variance.is_finite()) {
        return Err(Error::DegenerateMoments { mean, variance });
    }
    Ok(QfMoments { mean, variance })
}

pub fn qf_moments_from(moments: &[MomentSet], weights: &[f64]) -> Result<QfMoments> {
    let m2: Vec<f64> = moments.iter().map(|m| m.m2).collect();
    let m4: Vec<f64> = moments.iter().map(|m| m.m4).collect();
    quadratic_form_moments(weights, &m2, &m4)
}

pub fn qf_null_moments(
    ctx: &PlugInContext,
    studies: &[StudyTable],
    measure: Measure,
    weights: &[f64],
) -> Result<QfMoments> {
    qf_moments_from(&study_moments(ctx, studies, measure)?, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxResult {
    pub method: ApproxMethod,
    pub p_value: f64,
}

pub fn p_value_chisq(q: f64, k: usize) -> Result<ApproxResult> {
    if k < 2 {
        return Err(Error::TooFewStudies { needed: 2, got: k });
    }
    let p_value = if q <= 0.0 {
        1.0
    } else {
        ChiSquared::new((k - 1) as f64)
            .expect("positive degrees of freedom")
            .sf(q)
    };
    Ok(ApproxResult {
        method: ApproxMethod::ChiSq,
        p_value,
    })
}

/// Gamma tail with shape `mean² / variance` and scale `variance / mean`.
pub fn gamma_sf(q: f64, moments: &QfMoments) -> Result<f64> {
    let QfMoments { mean, variance } = *moments;
    if !(mean > 0.0 && variance > 0.0) {
        return Err(Error::DegenerateMoments { mean, variance });
    }
    if q <= 0.0 {
        return Ok(1.0);
    }
    let shape = mean * mean / variance;
    let scale = variance / mean;
    Ok(gamma_ur(shape, q / scale))
}

pub fn p_value_two_moment(q: f64, moments: &QfMoments, mode: PlugInMode) -> Result<ApproxResult> {
    let method = match mode {
        PlugInMode::Naive => ApproxMethod::TwoMomentNaive,
        PlugInMode::ModelBased => ApproxMethod::TwoMomentModel,
    };
    Ok(ApproxResult {
        method,
        p_value: gamma_sf(q, moments)?,
    })
}

/// Eigenvalues of `A Σ`, `Σ = diag(variances)`, through the symmetric
/// similarity `Σ^{1/2} A Σ^{1/2}`. Round-off negatives are set to zero.
pub fn quadratic_form_spectrum(a: &DMatrix<f64>, variances: &[f64]) -> Result<Vec<f64>> {
    let k = variances.len();
    if a.nrows() != k || a.ncols() != k {
        return Err(Error::LengthMismatch {
            estimates: a.nrows(),
            weights: k,
        });
    }
    if let Some(&v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Eigen(format!("nonpositive variance {v}")));
    }
    let s: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let b = DMatrix::from_fn(k, k, |i, j| {
        let v = 0.5 * (a[(i, j)] + a[(j, i)]);
        s[i] * v * s[j]
    });
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let eig = b.symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * max.max(1.0);
    let mut out = Vec::with_capacity(k);
    for &l in eig.eigenvalues.iter() {
        if l < -tol {
            return Err(Error::NegativeEigenvalue(l));
        }
        out.push(l.max(0.0));
    }
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// `P(Σ λ_j χ²₁ > q)`: Ruben's series, falling back to numerical inversion
/// when the spectrum is too spread for the series to converge.
pub fn weighted_chisq_sf(lambdas: &[f64], q: f64) -> f64 {
    match wchisq::ruben_sf(lambdas, q) {
        Ok(p) => p,
        Err(_) => wchisq::imhof_sf(lambdas, q),
    }
}

pub fn p_value_farebrother(
    q: f64,
    a: &DMatrix<f64>,
    var_hats: &[f64],
    mode: PlugInMode,
) -> Result<ApproxResult> {
    let lambdas = quadratic_form_spectrum(a, var_hats)?;
    let method = match mode {
        PlugInMode::Naive => ApproxMethod::FarebrotherNaive,
        PlugInMode::ModelBased => ApproxMethod::FarebrotherModel,
    };
    Ok(ApproxResult {
        method,
        p_value: weighted_chisq_sf(&lambdas, q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chisq_values() {
        assert_eq!(p_value_chisq(0.0, 5).unwrap().p_value, 1.0);
        // scipy.stats.chi2.sf(9.4877, 4)
        let p = p_value_chisq(9.4877, 5).unwrap().p_value;
        assert!((p - 0.050000599541234675).abs() < 1e-12);
        assert!(p_value_chisq(1e4, 5).unwrap().p_value < 1e-300);
        assert!(p_value_chisq(1.0, 1).is_err());
    }

    #[test]
    fn gamma_with_chisq_moments_is_chisq() {
        for k in [2usize, 5, 30] {
            let m = QfMoments {
                mean: (k - 1) as f64,
                variance: 2.0 * (k - 1) as f64,
            };
            for q in [0.3, 2.0, 7.5, 20.0, 45.0] {
                let a = gamma_sf(q, &m).unwrap();
                let b = p_value_chisq(q, k).unwrap().p_value;
                assert!((a - b).abs() < 1e-12);
            }
        }
        let bad = QfMoments { mean: 1.0, variance: 0.0 };
        assert!(gamma_sf(1.0, &bad).is_err());
    }

    #[test]
    fn gamma_decreasing() {
        let m = QfMoments { mean: 4.2, variance: 11.0 };
        let mut last = 1.0;
        for i in 1..100 {
            let p = gamma_sf(i as f64 * 0.3, &m).unwrap();
            assert!(p <= last && p > 0.0);
            last = p;
        }
        assert!(gamma_sf(4.2, &m).unwrap() < 1.0);
    }

    #[test]
    fn classical_mean_under_iv_weights() {
        let v = [0.3, 0.7, 1.1, 0.05];
        let w: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
        let m4: Vec<f64> = v.iter().map(|x| 3.0 * x * x).collect();
        let m = quadratic_form_moments(&w, &v, &m4).unwrap();
        assert!((m.mean - 3.0).abs() < 1e-12);
        // normal deviates: chi-square with K - 1 df
        assert!((m.variance - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_unit_normals() {
        let m = quadratic_form_moments(&[1.0, 1.0], &[1.0, 1.0], &[3.0, 3.0]).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-15);
        assert!((m.variance - 2.0).abs() < 1e-15);
    }

    #[test]
    fn model_plug_in_identical_tables() {
        let t = StudyTable::new(4, 10, 2, 10).unwrap();
        let studies = vec![t; 4];
        for m in Measure::ALL {
            let ctx = plug_in_probs(&studies, m, PlugInMode::ModelBased).unwrap();
            let est = estimate_effect(&t, m).estimate;
            let link = m.link();
            let pc = ctx.p_hat_c[0];
            let expect = link.h_inv_clamped(link.h(pc) + est, 10);
            for p in &ctx.p_hat_t {
                assert!((p - expect).abs() < 1e-12, "{m}");
            }
        }
    }

    #[test]
    fn model_plug_in_rd_pairs() {
        // every study has p_C estimate .2 and effect .13
        let t = StudyTable::new(33, 100, 20, 100).unwrap();
        let ctx = plug_in_probs(&[t, t, t], Measure::Rd, PlugInMode::ModelBased).unwrap();
        assert!((ctx.p_hat_t[0] - 0.33).abs() < 1e-12);
    }

    #[test]
    fn lrr_zero_event_plug_in_clamped() {
        let studies = [
            StudyTable::new(0, 10, 5, 10).unwrap(),
            StudyTable::new(0, 10, 6, 10).unwrap(),
            StudyTable::new(0, 10, 4, 10).unwrap(),
        ];
        for mode in [PlugInMode::Naive, PlugInMode::ModelBased] {
            let ctx = plug_in_probs(&studies, Measure::Lrr, mode).unwrap();
            assert!(ctx.p_hat_t.iter().all(|&p| (0.5 / 11.0..1.0).contains(&p)));
        }
        let full = [StudyTable::new(10, 10, 10, 10).unwrap(); 3];
        let ctx = plug_in_probs(&full, Measure::Lrr, PlugInMode::Naive).unwrap();
        assert!(ctx.p_hat_t.iter().all(|&p| p < 1.0));
        assert!(plug_in_probs(&full[..2], Measure::Lrr, PlugInMode::Naive).is_err());
    }

    #[test]
    fn spectrum_of_unit_problem() {
        let a = q_matrix(&[1.0, 1.0, 1.0, 1.0]);
        let ev = quadratic_form_spectrum(&a, &[1.0; 4]).unwrap();
        assert_eq!(ev.len(), 4);
        for l in &ev[..3] {
            assert!((l - 1.0).abs() < 1e-12);
        }
        assert!(ev[3].abs() < 1e-12);
        // Σ a_ii v_i equals the trace
        let w = [3.0, 4.0, 4.5, 5.0, 21.0];
        let v = [0.4, 0.2, 0.3, 0.25, 0.05];
        let a = q_matrix(&w);
        let ev = quadratic_form_spectrum(&a, &v).unwrap();
        let trace: f64 = (0..5).map(|i| a[(i, i)] * v[i]).sum();
        assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-10);
    }

    #[test]
    fn farebrother_unit_spectrum_matches_chisq() {
        let a = q_matrix(&[2.0; 6]);
        let var = vec![0.5; 6];
        for q in [0.0, 1.0, 5.0, 11.07, 30.0] {
            let f = p_value_farebrother(q, &a, &var, PlugInMode::Naive).unwrap().p_value;
            let c = p_value_chisq(q, 6).unwrap().p_value;
            assert!((f - c).abs() < 1e-8);
        }
    }

    #[test]
    fn p_values_invariant_to_weight_scale() {
        let studies = [
            StudyTable::new(3, 10, 2, 10).unwrap(),
            StudyTable::new(5, 8, 1, 8).unwrap(),
            StudyTable::new(4, 42, 9, 42).unwrap(),
            StudyTable::new(7, 20, 5, 20).unwrap(),
        ];
        let est: Vec<f64> = studies.iter().map(|s| estimate_effect(s, Measure::Lor).estimate).collect();
        let w: Vec<f64> = studies.iter().map(StudyTable::effective_size).collect();
        let ctx = plug_in_probs(&studies, Measure::Lor, PlugInMode::Naive).unwrap();
        let mom = study_moments(&ctx, &studies, Measure::Lor).unwrap();
        let m2: Vec<f64> = mom.iter().map(|m| m.m2).collect();
        let eval = |c: f64| {
            let ws: Vec<f64> = w.iter().map(|x| x * c).collect();
            let q = crate::qstat::cochran_q(&est, &ws).unwrap().q;
            let gm = qf_moments_from(&mom, &ws).unwrap();
            let f = p_value_farebrother(q, &q_matrix(&ws), &m2, PlugInMode::Naive).unwrap();
            (gamma_sf(q, &gm).unwrap(), f.p_value)
        };
        let (g1, f1) = eval(1.0);
        let (g2, f2) = eval(7.3);
        assert!((g1 - g2).abs() < 1e-12);
        assert!((f1 - f2).abs() < 1e-12);
    }
}
