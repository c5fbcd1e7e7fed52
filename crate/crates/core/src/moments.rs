//! Exact conditional central moments of transformed binomial proportions.
//!
//! For `X ~ Bin(n, p)` and a transform `h` applied to a continuity-corrected
//! estimate of `p`, the moments of `h(p̂(X))` are obtained by summing over
//! every outcome `X = 0..=n`. Binomial probabilities are accumulated in log
//! space so that arms of a few hundred subjects do not underflow.

use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// One arm of a study: its size and event probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSpec {
    n: u32,
    p: f64,
}

impl ArmSpec {
    pub fn new(n: u32, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyArm);
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(Self { n, p })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Binomial probabilities for `X = 0..=n`.
    pub fn pmf(&self) -> Vec<f64> {
        let n = u64::from(self.n);
        let (lp, lq) = (self.p.ln(), (-self.p).ln_1p());
        (0..=n)
            .map(|x| (ln_binomial(n, x) + x as f64 * lp + (n - x) as f64 * lq).exp())
            .collect()
    }
}

/// Mean and central moments of orders 2 to 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl MomentSet {
    /// Moments of a discrete distribution given as (value, probability) pairs.
    pub fn from_weighted<I>(points: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)> + Clone,
    {
        let mean: f64 = points.clone().into_iter().map(|(v, w)| v * w).sum();
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for (v, w) in points {
            let d = v - mean;
            let d2 = d * d;
            m2 += w * d2;
            m3 += w * d2 * d;
            m4 += w * d2 * d2;
        }
        Self { mean, m2, m3, m4 }
    }

    pub fn variance(&self) -> f64 {
        self.m2
    }
}

/// How an arm's event count is turned into the quantity entering the effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArmTransform {
    /// `logit((X + 1/2) / (n + 1))`, used for the log-odds-ratio.
    LogitCorrected,
    /// `log((X + 1/2) / (n + 1/2))`, used for the log-relative-risk.
    LogCorrected,
    /// `X / n`, used for the risk difference.
    IdentityML,
}

impl ArmTransform {
    /// Point estimate of `p` from `x` events out of `n`.
    pub fn estimate_p(self, x: u32, n: u32) -> f64 {
        let (x, n) = (f64::from(x), f64::from(n));
        match self {
            ArmTransform::LogitCorrected => (x + 0.5) / (n + 1.0),
            ArmTransform::LogCorrected => (x + 0.5) / (n + 0.5),
            ArmTransform::IdentityML => x / n,
        }
    }

    /// `h(p̂(x))`.
    pub fn apply(self, x: u32, n: u32) -> f64 {
        let p = self.estimate_p(x, n);
        match self {
            ArmTransform::LogitCorrected => (p / (1.0 - p)).ln(),
            ArmTransform::LogCorrected => p.ln(),
            ArmTransform::IdentityML => p,
        }
    }
}

/// Exact mean and central moments of `h(p̂(X))`, `X ~ Bin(n, p)`.
pub fn arm_moments(arm: ArmSpec, transform: ArmTransform) -> MomentSet {
    let n = arm.n();
    let pmf = arm.pmf();
    let pts = pmf
        .iter()
        .enumerate()
        .map(|(x, &w)| (transform.apply(x as u32, n), w));
    MomentSet::from_weighted(pts)
}

/// Moments of `h_T - h_C` for independent arms.
pub fn effect_moments(treat: &MomentSet, ctrl: &MomentSet) -> MomentSet {
    MomentSet {
        mean: treat.mean - ctrl.mean,
        m2: treat.m2 + ctrl.m2,
        m3: treat.m3 - ctrl.m3,
        m4: treat.m4 + ctrl.m4 + 6.0 * treat.m2 * ctrl.m2,
    }
}
