//! A quick oracle suite that can be run from an installed binary.
//!
//! Each check compares a production routine against an independently coded
//! reference: binomial probabilities built by multiplicative recursion,
//! direct double sums, and the two weighted chi-square evaluators against
//! each other.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::moments::{arm_moments, effect_moments, ArmSpec, ArmTransform};
use crate::qdist::wchisq::{imhof_sf, ruben_sf};
use crate::qdist::{gamma_sf, QfMoments};
use crate::qstat::{cochran_q, cochran_q_expanded, q_matrix, quadratic_form};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn recursive_pmf(n: u32, p: f64) -> Vec<f64> {
    // P(0) = (1-p)^n, P(x+1) = P(x) (n-x)/(x+1) p/(1-p), renormalized in case
    // the start underflows
    let mut v = vec![1.0f64; n as usize + 1];
    let r = p / (1.0 - p);
    for x in 0..n as usize {
        v[x + 1] = v[x] * (n as f64 - x as f64) / (x as f64 + 1.0) * r;
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

fn brute_arm(n: u32, p: f64, t: ArmTransform) -> [f64; 4] {
    let pmf = recursive_pmf(n, p);
    let vals: Vec<f64> = (0..=n).map(|x| t.apply(x, n)).collect();
    let mean: f64 = vals.iter().zip(&pmf).map(|(v, w)| v * w).sum();
    let c = |k: i32| -> f64 { vals.iter().zip(&pmf).map(|(v, w)| w * (v - mean).powi(k)).sum() };
    [mean, c(2), c(3), c(4)]
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-12)
}

fn check_arm_moments() -> Check {
    let mut worst = 0.0f64;
    for t in [ArmTransform::LogitCorrected, ArmTransform::LogCorrected, ArmTransform::IdentityML] {
        for &p in &[0.05, 0.2, 0.5, 0.8] {
            for n in [1u32, 7, 25] {
                let m = arm_moments(ArmSpec::new(n, p).unwrap(), t);
                let b = brute_arm(n, p, t);
                // mean and m3 vanish in symmetric cases; floor at the matching power of sd
                let sd = b[1].sqrt();
                let floor = [sd, sd.powi(2), sd.powi(3), sd.powi(4)];
                for ((x, y), f) in [m.mean, m.m2, m.m3, m.m4].iter().zip(b).zip(floor) {
                    worst = worst.max((x - y).abs() / y.abs().max(f).max(1e-300));
                }
            }
        }
    }
    Check {
        name: "arm moments vs recursive enumeration",
        passed: worst < 1e-10,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn check_effect_moments() -> Check {
    let (n, pt, pc) = (9u32, 0.3, 0.15);
    let t = ArmTransform::LogitCorrected;
    let (ft, fc) = (recursive_pmf(n, pt), recursive_pmf(n, pc));
    let mut pts = Vec::new();
    for a in 0..=n {
        for b in 0..=n {
            pts.push((t.apply(a, n) - t.apply(b, n), ft[a as usize] * fc[b as usize]));
        }
    }
    let mean: f64 = pts.iter().map(|(v, w)| v * w).sum();
    let m2: f64 = pts.iter().map(|(v, w)| w * (v - mean).powi(2)).sum();
    let m4: f64 = pts.iter().map(|(v, w)| w * (v - mean).powi(4)).sum();
    let e = effect_moments(
        &arm_moments(ArmSpec::new(n, pt).unwrap(), t),
        &arm_moments(ArmSpec::new(n, pc).unwrap(), t),
    );
    Check {
        name: "effect moments vs joint grid",
        passed: close(e.m2, m2, 1e-10) && close(e.m4, m4, 1e-10),
        detail: format!("m2 {:.3e} m4 {:.3e}", (e.m2 - m2).abs(), (e.m4 - m4).abs()),
    }
}

fn check_q_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.random_range(2..15);
        let t: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..40.0)).collect();
        let q = cochran_q(&t, &w).unwrap().q;
        let q8 = cochran_q_expanded(&t, &w, 0.3).unwrap();
        let qa = quadratic_form(&q_matrix(&w), &t);
        worst = worst.max((q - q8).abs().max((q - qa).abs()) / (1.0 + q));
    }
    Check {
        name: "Q forms agree",
        passed: worst < 1e-12,
        detail: format!("max scaled difference {worst:.2e}"),
    }
}

fn check_unit_spectrum() -> Check {
    let mut worst = 0.0f64;
    for m in [1usize, 4, 12] {
        let chi = ChiSquared::new(m as f64).unwrap();
        for i in 0..=60 {
            let q = i as f64;
            worst = worst.max((ruben_sf(&vec![1.0; m], q).unwrap() - chi.sf(q)).abs());
            worst = worst.max((imhof_sf(&vec![1.0; m], q) - chi.sf(q)).abs());
        }
    }
    Check {
        name: "weighted chi-square with unit weights",
        passed: worst < 1e-8,
        detail: format!("max abs error {worst:.2e}"),
    }
}

fn check_evaluators_agree() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..12);
        let lam: Vec<f64> = (0..k).map(|_| (rng.random_range(-2.0f64..2.0)).exp()).collect();
        let mean: f64 = lam.iter().sum();
        let q = mean * rng.random_range(0.2..3.0);
        let a = ruben_sf(&lam, q).unwrap();
        let b = imhof_sf(&lam, q);
        worst = worst.max((a - b).abs());
    }
    Check {
        name: "series and inversion evaluators agree",
        passed: worst < 1e-6,
        detail: format!("max abs difference {worst:.2e}"),
    }
}

fn check_gamma_reduces_to_chisq() -> Check {
    let chi = ChiSquared::new(4.0).unwrap();
    let m = QfMoments { mean: 4.0, variance: 8.0 };
    let worst = (1..40)
        .map(|i| (gamma_sf(i as f64 * 0.5, &m).unwrap() - chi.sf(i as f64 * 0.5)).abs())
        .fold(0.0, f64::max);
    Check {
        name: "gamma with chi-square moments",
        passed: worst < 1e-12,
        detail: format!("max abs error {worst:.2e}"),
    }
}

pub fn run() -> Vec<Check> {
    vec![
        check_arm_moments(),
        check_effect_moments(),
        check_q_algebra(),
        check_unit_spectrum(),
        check_evaluators_agree(),
        check_gamma_reduces_to_chisq(),
    ]
}
