//! Per-study effect estimates for binary outcomes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::moments::ArmTransform;

/// Event counts of one two-arm study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StudyTable {
    pub x_t: u32,
    pub n_t: u32,
    pub x_c: u32,
    pub n_c: u32,
}

impl StudyTable {
    pub fn new(x_t: u32, n_t: u32, x_c: u32, n_c: u32) -> Result<Self> {
        if n_t == 0 || n_c == 0 {
            return Err(Error::InvalidTable("arm sizes must be positive".into()));
        }
        if x_t > n_t || x_c > n_c {
            return Err(Error::InvalidTable(format!(
                "events exceed arm size ({x_t}/{n_t}, {x_c}/{n_c})"
            )));
        }
        Ok(Self { x_t, n_t, x_c, n_c })
    }

    /// No events in either arm.
    pub fn is_double_zero(&self) -> bool {
        self.x_t == 0 && self.x_c == 0
    }

    /// Every subject in both arms had the event.
    pub fn is_double_n(&self) -> bool {
        self.x_t == self.n_t && self.x_c == self.n_c
    }

    /// Effective sample size `n_C n_T / (n_C + n_T)`.
    pub fn effective_size(&self) -> f64 {
        let (t, c) = (f64::from(self.n_t), f64::from(self.n_c));
        t * c / (t + c)
    }

    pub fn swapped(&self) -> Self {
        Self {
            x_t: self.x_c,
            n_t: self.n_c,
            x_c: self.x_t,
            n_c: self.n_t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// Log odds ratio.
    Lor,
    /// Log relative risk.
    Lrr,
    /// Risk difference.
    Rd,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Lor, Measure::Lrr, Measure::Rd];

    pub fn transform(self) -> ArmTransform {
        match self {
            Measure::Lor => ArmTransform::LogitCorrected,
            Measure::Lrr => ArmTransform::LogCorrected,
            Measure::Rd => ArmTransform::IdentityML,
        }
    }

    pub fn link(self) -> Link {
        match self {
            Measure::Lor => Link::Logit,
            Measure::Lrr => Link::Log,
            Measure::Rd => Link::Identity,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Lor => "lor",
            Measure::Lrr => "lrr",
            Measure::Rd => "rd",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lor" => Ok(Measure::Lor),
            "lrr" => Ok(Measure::Lrr),
            "rd" => Ok(Measure::Rd),
            other => Err(format!("unknown measure `{other}` (expected lor, lrr or rd)")),
        }
    }
}

/// The link `h` for which an effect is `h(p_T) - h(p_C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logit,
    Log,
    Identity,
}

impl Link {
    pub fn h(self, p: f64) -> f64 {
        match self {
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Log => p.ln(),
            Link::Identity => p,
        }
    }

    /// Unclamped inverse. `Log` and `Identity` can leave (0, 1).
    pub fn h_inv(self, eta: f64) -> f64 {
        match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }

    /// Inverse clamped to the plug-in range of an arm of size `n`.
    pub fn h_inv_clamped(self, eta: f64, n: u32) -> f64 {
        clamp_prob(self.h_inv(eta), n)
    }
}

/// Clamp `p` to `[1/(2(n+1)), 1 - 1/(2(n+1))]`. NaN maps to the lower bound.
pub fn clamp_prob(p: f64, n: u32) -> f64 {
    let lo = 0.5 / (f64::from(n) + 1.0);
    if p.is_nan() {
        return lo;
    }
    p.clamp(lo, 1.0 - lo)
}

/// Point estimate and estimated conditional variance of one study's effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub var_hat: f64,
    pub measure: Measure,
}

pub fn estimate_effect(tbl: &StudyTable, m: Measure) -> EffectEstimate {
    let tr = m.transform();
    let estimate = tr.apply(tbl.x_t, tbl.n_t) - tr.apply(tbl.x_c, tbl.n_c);
    let (nt, nc) = (f64::from(tbl.n_t), f64::from(tbl.n_c));
    let var_hat = match m {
        Measure::Lor => {
            let pt = tr.estimate_p(tbl.x_t, tbl.n_t);
            let pc = tr.estimate_p(tbl.x_c, tbl.n_c);
            1.0 / ((nt + 1.0) * pt * (1.0 - pt)) + 1.0 / ((nc + 1.0) * pc * (1.0 - pc))
        }
        Measure::Lrr => {
            let (xt, xc) = (f64::from(tbl.x_t), f64::from(tbl.x_c));
            1.0 / (xt + 0.5) - 1.0 / (nt + 0.5) + 1.0 / (xc + 0.5) - 1.0 / (nc + 0.5)
        }
        Measure::Rd => {
            let pt = tr.estimate_p(tbl.x_t, tbl.n_t);
            let pc = tr.estimate_p(tbl.x_c, tbl.n_c);
            pt * (1.0 - pt) / nt + pc * (1.0 - pc) / nc
        }
    };
    EffectEstimate {
        estimate,
        var_hat,
        measure: m,
    }
}
