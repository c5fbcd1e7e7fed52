//! Browser bindings: analyze a handful of 2x2 tables, draw the candidate null
//! distributions of Q, and run a small calibration simulation.
//!
//! Each exported function has a plain Rust counterpart returning a typed
//! value; the `wasm_bindgen` wrappers only serialize it to JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qhet_core::qdist::{
    gamma_sf, p_value_chisq, plug_in_probs, qf_moments_from, quadratic_form_spectrum, study_moments,
    weighted_chisq_sf, PlugInMode,
};
use qhet_core::report::{pp_error_table, CellId, TailGrid};
use qhet_core::simulator::{cell_counts, run_cell};
use qhet_core::{analyze, q_matrix, ApproxMethod, Measure, SimConfig, SizeSpec, StudyTable};

/// Largest simulation the page will run in one call.
pub const MAX_REPS: usize = 20_000;

/// One table per line: `x_t n_t x_c n_c`, separated by spaces, tabs or commas.
pub fn parse_tables(text: &str) -> Result<Vec<StudyTable>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<u32> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>().map_err(|_| format!("line {}: `{s}` is not a count", i + 1)))
            .collect::<Result<_, _>>()?;
        if v.len() != 4 {
            return Err(format!("line {}: expected 4 numbers, got {}", i + 1, v.len()));
        }
        out.push(StudyTable::new(v[0], v[1], v[2], v[3]).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct MethodValue {
    pub method: &'static str,
    pub name: &'static str,
    pub p_value: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TableAnalysis {
    pub k: usize,
    pub k_iv: usize,
    pub q_iv: Option<f64>,
    pub q_f: f64,
    pub weighted_mean_f: f64,
    pub p_values: Vec<MethodValue>,
}

pub fn analyze_tables(text: &str, measure: &str) -> Result<TableAnalysis, String> {
    let measure: Measure = measure.parse()?;
    let tables = parse_tables(text)?;
    if tables.len() < 3 {
        return Err(format!("need at least 3 tables, got {}", tables.len()));
    }
    let a = analyze(&tables, measure).map_err(|e| e.to_string())?;
    Ok(TableAnalysis {
        k: a.q_f.k,
        k_iv: a.q_iv.as_ref().map_or(0, |q| q.k),
        q_iv: a.q_iv.as_ref().map(|q| q.q),
        q_f: a.q_f.q,
        weighted_mean_f: a.q_f.weighted_mean,
        p_values: ApproxMethod::ALL
            .iter()
            .map(|&m| MethodValue {
                method: m.label(),
                name: m.display_name(),
                p_value: a.p_values.get(m),
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub method: &'static str,
    pub sf: Vec<f64>,
}

/// Upper-tail curves on a grid of Q values. The chi-square curve refers to
/// `Q_IV`; the others to `Q_F`.
#[derive(Debug, Serialize)]
pub struct TailCurves {
    pub q_iv: Option<f64>,
    pub grid_iv: Vec<f64>,
    pub chisq: Option<Vec<f64>>,
    pub q_f: f64,
    pub grid_f: Vec<f64>,
    pub curves_f: Vec<Curve>,
}

fn grid(top: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect()
}

pub fn tail_curves(text: &str, measure: &str, points: usize) -> Result<TailCurves, String> {
    let points = points.clamp(2, 2000);
    let a = analyze_tables(text, measure)?;
    let m: Measure = measure.parse()?;
    let tables = parse_tables(text)?;
    let ssw: Vec<f64> = tables.iter().map(StudyTable::effective_size).collect();
    let amat = q_matrix(&ssw);

    let mut curves_f = Vec::new();
    let mut scale = a.q_f;
    for mode in [PlugInMode::Naive, PlugInMode::ModelBased] {
        let ctx = plug_in_probs(&tables, m, mode).map_err(|e| e.to_string())?;
        let mo = study_moments(&ctx, &tables, m).map_err(|e| e.to_string())?;
        if let Ok(qm) = qf_moments_from(&mo, &ssw) {
            scale = scale.max(qm.mean + 4.0 * qm.variance.sqrt());
            curves_f.push((mode, Some(qm), mo));
        } else {
            curves_f.push((mode, None, mo));
        }
    }
    let grid_f = grid(scale.max(1e-9), points);
    let mut out_f = Vec::new();
    for (mode, qm, mo) in &curves_f {
        let (two, fare) = match mode {
            PlugInMode::Naive => (ApproxMethod::TwoMomentNaive, ApproxMethod::FarebrotherNaive),
            PlugInMode::ModelBased => (ApproxMethod::TwoMomentModel, ApproxMethod::FarebrotherModel),
        };
        if let Some(qm) = qm {
            let sf = grid_f.iter().map(|&q| gamma_sf(q, qm).unwrap_or(f64::NAN)).collect();
            out_f.push(Curve { method: two.label(), sf });
        }
        let m2: Vec<f64> = mo.iter().map(|x| x.m2).collect();
        if let Ok(lam) = quadratic_form_spectrum(&amat, &m2) {
            let sf = grid_f.iter().map(|&q| weighted_chisq_sf(&lam, q)).collect();
            out_f.push(Curve { method: fare.label(), sf });
        }
    }

    let df = a.k_iv.saturating_sub(1) as f64;
    let top_iv = a.q_iv.unwrap_or(0.0).max(df + 4.0 * (2.0 * df).sqrt()).max(1.0);
    let grid_iv = grid(top_iv, points);
    let chisq = (a.k_iv >= 3).then(|| {
        grid_iv
            .iter()
            .map(|&q| p_value_chisq(q, a.k_iv).map_or(f64::NAN, |r| r.p_value))
            .collect()
    });
    Ok(TailCurves {
        q_iv: a.q_iv,
        grid_iv,
        chisq,
        q_f: a.q_f,
        grid_f,
        curves_f: out_f,
    })
}

#[derive(Debug, Serialize)]
pub struct PpCurves {
    pub nominal: Vec<f64>,
    pub errors: Vec<Curve>,
    pub reps: usize,
    pub analyzed: usize,
    pub discarded: usize,
}

/// Achieved-minus-nominal levels for one equal-size cell, run on one thread.
#[allow(clippy::too_many_arguments)]
pub fn pp_curves(
    measure: &str,
    k: usize,
    n: u32,
    p_c: f64,
    effect: f64,
    tau2: f64,
    reps: usize,
    seed: u64,
) -> Result<PpCurves, String> {
    if reps == 0 || reps > MAX_REPS {
        return Err(format!("reps must be between 1 and {MAX_REPS}"));
    }
    let cfg = SimConfig {
        measure: measure.parse()?,
        k,
        sizes: SizeSpec::Equal(n),
        p_c,
        effect,
        tau2,
        reps,
        seed,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let out = run_cell(&cfg, Some(1));
    let counts = cell_counts(&out);
    let grid = TailGrid::standard();
    let rows = pp_error_table(&CellId::from(&cfg), &out, &grid).map_err(|e| e.to_string())?;
    let errors = ApproxMethod::ALL
        .iter()
        .filter_map(|&m| {
            let e: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.error).collect();
            (!e.is_empty()).then_some(Curve { method: m.label(), sf: e })
        })
        .collect();
    Ok(PpCurves {
        nominal: grid.points().to_vec(),
        errors,
        reps: counts.reps,
        analyzed: counts.analyzed,
        discarded: counts.discarded,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = analyzeTables)]
pub fn analyze_tables_js(tables: &str, measure: &str) -> Result<String, JsError> {
    to_js(analyze_tables(tables, measure))
}

#[wasm_bindgen(js_name = tailCurves)]
pub fn tail_curves_js(tables: &str, measure: &str, points: usize) -> Result<String, JsError> {
    to_js(tail_curves(tables, measure, points))
}

#[wasm_bindgen(js_name = ppCurves)]
#[allow(clippy::too_many_arguments)]
pub fn pp_curves_js(
    measure: &str,
    k: usize,
    n: u32,
    p_c: f64,
    effect: f64,
    tau2: f64,
    reps: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(pp_curves(measure, k, n, p_c, effect, tau2, reps, seed))
}
