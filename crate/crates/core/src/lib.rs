//! Cochran's Q heterogeneity statistic for binary effect measures.
//!
//! The crate covers the whole pipeline for log-odds-ratio, log-relative-risk
//! and risk-difference meta-analyses:
//!
//! * [`moments`]: exact conditional central moments of transformed binomial
//!   proportions, by enumeration over the binomial outcomes.
//! * [`effects`]: per-study estimates and estimated variances from 2×2 tables.
//! * [`qstat`]: Q under inverse-variance or effective-sample-size weights and
//!   its quadratic-form matrix.
//! * [`qdist`]: chi-square, two-moment gamma and weighted chi-square (quadratic
//!   form) approximations to the null distribution of Q.
//! * [`simulator`]: the Monte Carlo design, data generation and
//!   per-replication p-values, deterministic under any worker count.
//! * [`report`]: flattened P–P error tables, empirical level, power, CSV I/O.

pub mod analysis;
pub mod effects;
pub mod error;
pub mod moments;
pub mod qdist;
pub mod qstat;
pub mod report;
pub mod selftest;
pub mod simulator;

pub use analysis::{analyze, Analysis};
pub use effects::{estimate_effect, EffectEstimate, Link, Measure, StudyTable};
pub use error::{Error, Result};
pub use moments::{arm_moments, effect_moments, ArmSpec, ArmTransform, MomentSet};
pub use qdist::{ApproxMethod, ApproxResult, PlugInContext, PlugInMode, QfMoments};
pub use qstat::{cochran_q, q_matrix, weights, QResult, WeightScheme};
pub use simulator::{RepOutcome, SimConfig, SizeSpec};
