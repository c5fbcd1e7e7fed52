//! Monte Carlo engine for the Q calibration study.
//!
//! Every replication owns an RNG stream derived from `(seed, cell, rep)`:
//! the ChaCha key holds the seed and a hash of the cell label, and the
//! replication index selects the stream. A replication therefore produces the
//! same draws whether run serially or on any number of workers, and results
//! are always collected in replication order.

pub mod config;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

pub use config::{parse_config, SimConfig, SizeSpec};

use crate::analysis::{analyze, PValues, MIN_STUDIES};
use crate::effects::{clamp_prob, estimate_effect, StudyTable};
use crate::error::Result;

/// Result of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    /// Studies left after dropping double-zero and double-n tables.
    pub realized_k: usize,
    /// Studies entering `Q_IV` (risk-difference tables with zero estimated
    /// variance are left out).
    pub realized_k_iv: usize,
    pub q_iv: Option<f64>,
    pub q_f: Option<f64>,
    pub p_values: PValues,
    pub discarded: bool,
}

/// 64-bit FNV-1a of the cell label.
pub fn cell_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rep_rng(seed: u64, cell: u64, rep: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&cell.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep as u64);
    rng
}

/// True treatment probability of one study given its true effect. Inverse
/// links that leave (0, 1) are clamped to the plug-in range of the arm.
pub fn treatment_prob(cfg: &SimConfig, effect_i: f64, n_t: u32) -> f64 {
    let link = cfg.measure.link();
    let p = link.h_inv(link.h(cfg.p_c) + effect_i);
    if p > 0.0 && p < 1.0 {
        p
    } else {
        clamp_prob(p, n_t)
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u32, p: f64) -> u32 {
    Binomial::new(u64::from(n), p)
        .expect("probability checked to lie in (0, 1)")
        .sample(rng) as u32
}

/// Generated tables of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    /// All K tables as drawn.
    pub drawn: Vec<StudyTable>,
    /// True treatment probabilities of the drawn tables.
    pub p_t: Vec<f64>,
    /// Tables that survive the double-zero / double-n filter.
    pub kept: Vec<StudyTable>,
}

impl Replication {
    pub fn discarded(&self) -> bool {
        self.kept.len() < MIN_STUDIES
    }
}

pub fn generate_replication(cfg: &SimConfig, rep: usize) -> Replication {
    let mut rng = rep_rng(cfg.seed, cell_hash(&cfg.label()), rep);
    let sd = cfg.tau2.sqrt();
    let mut drawn = Vec::with_capacity(cfg.k);
    let mut p_t = Vec::with_capacity(cfg.k);
    for (n_t, n_c) in cfg.arms() {
        let effect_i = if cfg.tau2 > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            cfg.effect + sd * z
        } else {
            cfg.effect
        };
        let pt = treatment_prob(cfg, effect_i, n_t);
        let x_c = binomial(&mut rng, n_c, cfg.p_c);
        let x_t = binomial(&mut rng, n_t, pt);
        drawn.push(StudyTable { x_t, n_t, x_c, n_c });
        p_t.push(pt);
    }
    let kept = drawn
        .iter()
        .filter(|t| !t.is_double_zero() && !t.is_double_n())
        .copied()
        .collect();
    Replication { drawn, p_t, kept }
}

/// Outcome of one replication from its filtered tables.
pub fn outcome_for_tables(cfg: &SimConfig, rep: usize, kept: &[StudyTable]) -> Result<RepOutcome> {
    let realized_k = kept.len();
    if realized_k < MIN_STUDIES {
        return Ok(RepOutcome {
            rep,
            realized_k,
            realized_k_iv: 0,
            q_iv: None,
            q_f: None,
            p_values: PValues::default(),
            discarded: true,
        });
    }
    let a = analyze(kept, cfg.measure)?;
    let realized_k_iv = kept
        .iter()
        .filter(|t| estimate_effect(t, cfg.measure).var_hat > 0.0)
        .count();
    Ok(RepOutcome {
        rep,
        realized_k,
        realized_k_iv,
        q_iv: a.q_iv.map(|q| q.q),
        q_f: Some(a.q_f.q),
        p_values: a.p_values,
        discarded: false,
    })
}

pub fn replicate(cfg: &SimConfig, rep: usize) -> RepOutcome {
    let r = generate_replication(cfg, rep);
    outcome_for_tables(cfg, rep, &r.kept).expect("kept tables are valid and number at least three")
}

/// Runs every replication of a cell, in order. Pass `threads = Some(n)` to
/// bound the worker count; results do not depend on it.
pub fn run_cell(cfg: &SimConfig, threads: Option<usize>) -> Vec<RepOutcome> {
    run_reps(cfg, threads)
}

#[cfg(feature = "parallel")]
fn run_reps(cfg: &SimConfig, threads: Option<usize>) -> Vec<RepOutcome> {
    use rayon::prelude::*;
    let work = || (0..cfg.reps).into_par_iter().map(|r| replicate(cfg, r)).collect();
    match threads {
        Some(1) => (0..cfg.reps).map(|r| replicate(cfg, r)).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_reps(cfg: &SimConfig, _threads: Option<usize>) -> Vec<RepOutcome> {
    (0..cfg.reps).map(|r| replicate(cfg, r)).collect()
}

/// Discard accounting for a finished cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCounts {
    pub reps: usize,
    pub analyzed: usize,
    pub discarded: usize,
    /// Replications where at least one study was left out of `Q_IV` only.
    pub iv_reduced: usize,
}

pub fn cell_counts(outcomes: &[RepOutcome]) -> CellCounts {
    let mut c = CellCounts {
        reps: outcomes.len(),
        ..Default::default()
    };
    for o in outcomes {
        if o.discarded {
            c.discarded += 1;
        } else {
            c.analyzed += 1;
            if o.realized_k_iv < o.realized_k {
                c.iv_reduced += 1;
            }
        }
    }
    c
}
