//! Simulation cells and the `key = value` configuration format.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Any value may be a comma-separated list, and the file then expands to the
//! Cartesian product of all lists. A few keywords expand to the standard
//! design:
//!
//! ```text
//! measure = lor, lrr        # or `all`
//! k       = 5, 10, 30
//! sizes   = n20, nbar30     # `equal`, `unequal`, `all`
//! p_c     = 0.1, 0.2, 0.5
//! effect  = design          # every effect for the measure and p_c
//! tau2    = 0, 0.5, 1       # `design`: 0(0.1)1 for lor, 0 otherwise
//! reps    = 2000
//! seed    = 42
//! f       = 0.5
//! design  = custom          # skip the design-membership checks
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::effects::Measure;
use crate::error::{Error, Result};

pub const DESIGN_K: [usize; 3] = [5, 10, 30];
pub const DESIGN_EQUAL_N: [u32; 4] = [20, 40, 100, 250];
pub const DESIGN_P_C: [f64; 3] = [0.1, 0.2, 0.5];
pub const DESIGN_LOR_EFFECTS: [f64; 6] = [0.0, 0.1, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_REPS: usize = 2000;

/// Unequal study-size sets for five studies, keyed by their average.
pub const UNEQUAL_SETS: [(u32, [u32; 5]); 4] = [
    (30, [12, 16, 18, 20, 84]),
    (60, [24, 32, 36, 40, 168]),
    (100, [64, 72, 76, 80, 208]),
    (160, [124, 132, 136, 140, 268]),
];

/// Treatment-arm probabilities paired with each control probability, shared
/// by the relative-risk and risk-difference designs.
pub const RD_P_T: [(f64, [f64; 5]); 3] = [
    (0.1, [0.06, 0.10, 0.16, 0.27, 0.44]),
    (0.2, [0.12, 0.20, 0.33, 0.54, 0.90]),
    (0.5, [0.12, 0.18, 0.30, 0.50, 0.82]),
];

pub fn design_lrr_effects(p_c: f64) -> &'static [f64] {
    if (p_c - 0.5).abs() < 1e-12 {
        &[-1.5, -1.0, -0.5, 0.0, 0.5]
    } else {
        &[-0.5, 0.0, 0.5, 1.0, 1.5]
    }
}

/// Risk differences `p_T - p_C` for the design pairs, rounded to 1e-6.
pub fn design_rd_effects(p_c: f64) -> Vec<f64> {
    RD_P_T
        .iter()
        .find(|(pc, _)| (pc - p_c).abs() < 1e-12)
        .map(|(pc, pts)| pts.iter().map(|pt| ((pt - pc) * 1e6).round() / 1e6).collect())
        .unwrap_or_default()
}

pub fn design_effects(measure: Measure, p_c: f64) -> Vec<f64> {
    match measure {
        Measure::Lor => DESIGN_LOR_EFFECTS.to_vec(),
        Measure::Lrr => design_lrr_effects(p_c).to_vec(),
        Measure::Rd => design_rd_effects(p_c),
    }
}

pub fn design_tau2(measure: Measure) -> Vec<f64> {
    match measure {
        Measure::Lor => (0..=10).map(|i| i as f64 / 10.0).collect(),
        _ => vec![0.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeSpec {
    /// Every study has total size `n`.
    Equal(u32),
    /// The unequal set with average `nbar`, repeated to fill K studies.
    Unequal(u32),
}

impl SizeSpec {
    pub fn design() -> Vec<SizeSpec> {
        DESIGN_EQUAL_N
            .iter()
            .map(|&n| SizeSpec::Equal(n))
            .chain(UNEQUAL_SETS.iter().map(|(nbar, _)| SizeSpec::Unequal(*nbar)))
            .collect()
    }

    /// Total sizes of the `k` studies.
    pub fn study_sizes(self, k: usize) -> Result<Vec<u32>> {
        match self {
            SizeSpec::Equal(n) if n >= 2 => Ok(vec![n; k]),
            SizeSpec::Equal(n) => Err(Error::config("sizes", format!("study size {n} is below 2"))),
            SizeSpec::Unequal(nbar) => {
                let set = UNEQUAL_SETS
                    .iter()
                    .find(|(m, _)| *m == nbar)
                    .map(|(_, s)| s)
                    .ok_or_else(|| Error::config("sizes", format!("no unequal size set with average {nbar}")))?;
                if !k.is_multiple_of(set.len()) {
                    return Err(Error::config(
                        "k",
                        format!("unequal sizes need k divisible by {}", set.len()),
                    ));
                }
                Ok(set.iter().copied().cycle().take(k).collect())
            }
        }
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeSpec::Equal(n) => write!(f, "n{n}"),
            SizeSpec::Unequal(n) => write!(f, "nbar{n}"),
        }
    }
}

impl FromStr for SizeSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |v: &str| v.parse::<u32>().map_err(|_| format!("bad size spec `{s}`"));
        if let Some(v) = s.strip_prefix("nbar") {
            Ok(SizeSpec::Unequal(parse(v)?))
        } else if let Some(v) = s.strip_prefix('n') {
            Ok(SizeSpec::Equal(parse(v)?))
        } else {
            Err(format!("bad size spec `{s}` (expected nN or nbarN)"))
        }
    }
}

/// Split a study of total size `n` into (treatment, control) arms, f = 1/2.
pub fn split_arms(n: u32) -> (u32, u32) {
    let n_c = n / 2;
    (n - n_c, n_c)
}

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub measure: Measure,
    pub k: usize,
    pub sizes: SizeSpec,
    pub p_c: f64,
    /// θ, ρ or Δ depending on the measure.
    pub effect: f64,
    pub tau2: f64,
    pub reps: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Basic sanity checks that every cell must pass.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("k", "need at least 2 studies"));
        }
        self.sizes.study_sizes(self.k)?;
        if !(self.p_c > 0.0 && self.p_c < 1.0) {
            return Err(Error::config("p_c", format!("{} is not in (0, 1)", self.p_c)));
        }
        if !self.effect.is_finite() {
            return Err(Error::config("effect", "must be finite"));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::config("tau2", "must be a nonnegative number"));
        }
        if self.measure != Measure::Lor && self.tau2 != 0.0 {
            return Err(Error::config("tau2", "only the null (tau2 = 0) is simulated for lrr and rd"));
        }
        Ok(())
    }

    /// Checks that the cell belongs to the standard design grid.
    pub fn validate_design(&self) -> Result<()> {
        self.validate()?;
        if !DESIGN_K.contains(&self.k) {
            return Err(Error::config("k", format!("{} is not one of {:?}", self.k, DESIGN_K)));
        }
        if !SizeSpec::design().contains(&self.sizes) {
            return Err(Error::config("sizes", format!("{} is not a design size", self.sizes)));
        }
        if !DESIGN_P_C.iter().any(|p| (p - self.p_c).abs() < 1e-12) {
            return Err(Error::config("p_c", format!("{} is not one of {:?}", self.p_c, DESIGN_P_C)));
        }
        if !design_effects(self.measure, self.p_c)
            .iter()
            .any(|e| (e - self.effect).abs() < 1e-9)
        {
            return Err(Error::config(
                "effect",
                format!("{} is not a design effect for {} at p_c = {}", self.effect, self.measure, self.p_c),
            ));
        }
        if !design_tau2(self.measure).iter().any(|t| (t - self.tau2).abs() < 1e-9) {
            return Err(Error::config("tau2", format!("{} is not on the design grid", self.tau2)));
        }
        Ok(())
    }

    /// Identifier of the cell independent of `reps` and `seed`.
    pub fn label(&self) -> String {
        let mut s = format!(
            "{}_{}_{}_{}_{}",
            self.measure, self.p_c, self.effect, self.k, self.sizes
        );
        if self.tau2 != 0.0 {
            s.push_str(&format!("_tau{}", self.tau2));
        }
        s
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.label())
    }

    /// (n_T, n_C) for every study.
    pub fn arms(&self) -> Vec<(u32, u32)> {
        self.sizes
            .study_sizes(self.k)
            .expect("validated config")
            .into_iter()
            .map(split_arms)
            .collect()
    }
}

const KEYS: [&str; 10] = [
    "measure", "k", "sizes", "p_c", "effect", "tau2", "reps", "seed", "f", "design",
];

fn list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_f64s(key: &str, value: &str) -> Result<Vec<f64>> {
    list(value)
        .into_iter()
        .map(|v| {
            let x: f64 = parse_num(key, v)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::config(key, format!("`{v}` is not finite")))
            }
        })
        .collect()
}

/// Parses a config file into its list of cells.
pub fn parse_config(text: &str) -> Result<Vec<SimConfig>> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {} is not `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    let get = |k: &str| map.get(k).map(String::as_str);

    let measures: Vec<Measure> = match get("measure") {
        None => return Err(Error::config("measure", "missing")),
        Some("all") => Measure::ALL.to_vec(),
        Some(v) => list(v)
            .into_iter()
            .map(|s| s.parse().map_err(|e: String| Error::config("measure", e)))
            .collect::<Result<_>>()?,
    };
    let ks: Vec<usize> = match get("k") {
        None => return Err(Error::config("k", "missing")),
        Some(v) => list(v).into_iter().map(|s| parse_num("k", s)).collect::<Result<_>>()?,
    };
    let sizes: Vec<SizeSpec> = match get("sizes") {
        None => return Err(Error::config("sizes", "missing")),
        Some(v) => {
            let mut out = Vec::new();
            for s in list(v) {
                match s {
                    "all" => out.extend(SizeSpec::design()),
                    "equal" => out.extend(DESIGN_EQUAL_N.iter().map(|&n| SizeSpec::Equal(n))),
                    "unequal" => out.extend(UNEQUAL_SETS.iter().map(|(n, _)| SizeSpec::Unequal(*n))),
                    other => out.push(other.parse().map_err(|e: String| Error::config("sizes", e))?),
                }
            }
            out
        }
    };
    let p_cs = match get("p_c") {
        None => return Err(Error::config("p_c", "missing")),
        Some("design") => DESIGN_P_C.to_vec(),
        Some(v) => parse_f64s("p_c", v)?,
    };
    let effect_spec = get("effect").ok_or_else(|| Error::config("effect", "missing"))?;
    let explicit_effects = if effect_spec == "design" {
        None
    } else {
        Some(parse_f64s("effect", effect_spec)?)
    };
    let tau_spec = get("tau2").unwrap_or("0");
    let explicit_tau = if tau_spec == "design" {
        None
    } else {
        Some(parse_f64s("tau2", tau_spec)?)
    };
    let reps = match get("reps") {
        Some(v) => parse_num("reps", v)?,
        None => DEFAULT_REPS,
    };
    let seed = match get("seed") {
        Some(v) => parse_num("seed", v)?,
        None => 0,
    };
    if let Some(f) = get("f") {
        let f: f64 = parse_num("f", f)?;
        if (f - 0.5).abs() > 1e-12 {
            return Err(Error::config("f", "only f = 0.5 is supported"));
        }
    }
    let strict = match get("design") {
        None | Some("table") | Some("design") => true,
        Some("custom") => false,
        Some(other) => return Err(Error::config("design", format!("`{other}` is not `design` or `custom`"))),
    };

    let mut cells = Vec::new();
    for &measure in &measures {
        for &k in &ks {
            for &size in &sizes {
                for &p_c in &p_cs {
                    let effects = explicit_effects
                        .clone()
                        .unwrap_or_else(|| design_effects(measure, p_c));
                    let taus = explicit_tau.clone().unwrap_or_else(|| design_tau2(measure));
                    for &effect in &effects {
                        for &tau2 in &taus {
                            let cfg = SimConfig {
                                measure,
                                k,
                                sizes: size,
                                p_c,
                                effect,
                                tau2,
                                reps,
                                seed,
                            };
                            if strict {
                                cfg.validate_design()?;
                            } else {
                                cfg.validate()?;
                            }
                            cells.push(cfg);
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}
