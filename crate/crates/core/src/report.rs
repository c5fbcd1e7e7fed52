//! Calibration summaries of simulated p-values, and their CSV formats.
//!
//! For a nominal upper-tail area `p`, the achieved level is the fraction of
//! analyzed replications whose p-value is below `p`; the error is achieved
//! minus nominal (a flattened P–P plot). Each method uses the replications for
//! which it produced a p-value, so `M` can differ between methods when a
//! statistic was not computable.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::effects::Measure;
use crate::error::{Error, Result};
use crate::qdist::ApproxMethod;
use crate::simulator::{RepOutcome, SimConfig, SizeSpec};
use crate::analysis::PValues;

/// Ordered nominal tail areas, symmetric about 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TailGrid(Vec<f64>);

impl TailGrid {
    pub const STANDARD: [f64; 17] = [
        0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99,
        0.995, 0.9975, 0.999,
    ];

    pub fn standard() -> Self {
        TailGrid(Self::STANDARD.to_vec())
    }

    /// A custom grid; must be strictly increasing inside (0, 1).
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let ok = points.iter().all(|p| *p > 0.0 && *p < 1.0)
            && points.windows(2).all(|w| w[0] < w[1])
            && !points.is_empty();
        if !ok {
            return Err(Error::config("grid", "points must be strictly increasing in (0, 1)"));
        }
        Ok(TailGrid(points))
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }
}

/// Cell identifiers shared by every report row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellId {
    pub measure: Measure,
    pub k: usize,
    pub sizes: SizeSpec,
    pub p_c: f64,
    pub effect: f64,
    pub tau2: f64,
}

impl From<&SimConfig> for CellId {
    fn from(c: &SimConfig) -> Self {
        CellId {
            measure: c.measure,
            k: c.k,
            sizes: c.sizes,
            p_c: c.p_c,
            effect: c.effect,
            tau2: c.tau2,
        }
    }
}

impl CellId {
    pub fn label(&self) -> String {
        let mut s = format!("{}_{}_{}_{}_{}", self.measure, self.p_c, self.effect, self.k, self.sizes);
        if self.tau2 != 0.0 {
            s.push_str(&format!("_tau{}", self.tau2));
        }
        s
    }

    fn group_key(&self) -> (Measure, usize, String, u64, u64) {
        (
            self.measure,
            self.k,
            self.sizes.to_string(),
            self.p_c.to_bits(),
            self.effect.to_bits(),
        )
    }

    fn fields(&self) -> [String; 6] {
        [
            self.measure.to_string(),
            self.k.to_string(),
            self.sizes.to_string(),
            sig6(self.p_c),
            sig6(self.effect),
            sig6(self.tau2),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        let f = |i: usize| rec.get(i).ok_or_else(|| Error::Csv(format!("missing column {i}")));
        let num = |i: usize| -> Result<f64> {
            let s = f(i)?;
            s.parse().map_err(|_| Error::Csv(format!("bad number `{s}`")))
        };
        Ok(CellId {
            measure: f(0)?.parse().map_err(Error::Csv)?,
            k: f(1)?.parse().map_err(|_| Error::Csv("bad k".into()))?,
            sizes: f(2)?.parse().map_err(Error::Csv)?,
            p_c: num(3)?,
            effect: num(4)?,
            tau2: num(5)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub cell: CellId,
    pub method: ApproxMethod,
    pub nominal: f64,
    pub achieved: f64,
    pub error: f64,
    pub analyzed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub cell: CellId,
    pub method: ApproxMethod,
    pub alpha: f64,
    pub power: f64,
    pub analyzed: usize,
}

fn method_p_values(outcomes: &[RepOutcome], m: ApproxMethod) -> Vec<f64> {
    outcomes
        .iter()
        .filter(|o| !o.discarded)
        .filter_map(|o| o.p_values.get(m))
        .collect()
}

pub fn pp_error_table(cell: &CellId, outcomes: &[RepOutcome], grid: &TailGrid) -> Result<Vec<LevelRow>> {
    if !outcomes.iter().any(|o| !o.discarded) {
        return Err(Error::EmptyCell(cell.label()));
    }
    let mut rows = Vec::new();
    for m in ApproxMethod::ALL {
        let mut ps = method_p_values(outcomes, m);
        if ps.is_empty() {
            continue;
        }
        ps.sort_by(f64::total_cmp);
        let total = ps.len();
        for &nominal in grid.points() {
            let below = ps.partition_point(|&p| p < nominal);
            let achieved = below as f64 / total as f64;
            rows.push(LevelRow {
                cell: cell.clone(),
                method: m,
                nominal,
                achieved,
                error: achieved - nominal,
                analyzed: total,
            });
        }
    }
    Ok(rows)
}

pub fn level_at(cell: &CellId, outcomes: &[RepOutcome], alpha: f64) -> Result<Vec<LevelRow>> {
    let grid = TailGrid::new(vec![alpha])?;
    pp_error_table(cell, outcomes, &grid)
}

/// Power against the τ² grid for each group of cells differing only in τ².
pub fn power_curve(cells: &[(CellId, Vec<RepOutcome>)], alpha: f64) -> Result<Vec<PowerRow>> {
    let mut groups: BTreeMap<_, Vec<&(CellId, Vec<RepOutcome>)>> = BTreeMap::new();
    for c in cells {
        if c.0.measure != Measure::Lor {
            return Err(Error::MissingTauGrid(format!("{} is not a lor cell", c.0.label())));
        }
        groups.entry(c.0.group_key()).or_default().push(c);
    }
    let mut rows = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| a.0.tau2.total_cmp(&b.0.tau2));
        let has_null = members.first().is_some_and(|m| m.0.tau2 == 0.0);
        let has_alt = members.iter().any(|m| m.0.tau2 > 0.0);
        if !(has_null && has_alt) {
            return Err(Error::MissingTauGrid(members[0].0.label()));
        }
        for (cell, outcomes) in members {
            for lr in level_at(cell, outcomes, alpha)? {
                rows.push(PowerRow {
                    cell: lr.cell,
                    method: lr.method,
                    alpha,
                    power: lr.achieved,
                    analyzed: lr.analyzed,
                });
            }
        }
    }
    Ok(rows)
}

/// Decimal notation with six significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit
    let digits = s.chars().filter(char::is_ascii_digit).skip_while(|c| *c == '0').count();
    if digits > 6 && decimals > 0 {
        let d = decimals - 1;
        s = format!("{x:.d$}");
    }
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Full-precision float for raw files; parses back to the same value.
fn exact(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

const CELL_COLUMNS: [&str; 6] = ["measure", "k", "sizes", "p_c", "effect", "tau2"];

pub fn raw_header() -> Vec<String> {
    let mut h: Vec<String> = CELL_COLUMNS.iter().map(|s| s.to_string()).collect();
    for s in ["rep", "realized_k", "realized_k_iv", "discarded", "q_iv", "q_f"] {
        h.push(s.into());
    }
    h.extend(ApproxMethod::ALL.iter().map(|m| m.label().to_string()));
    h
}

/// Writes a raw per-replication file: header plus one line per replication.
pub fn write_raw<W: Write>(out: W, cell: &CellId, outcomes: &[RepOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(raw_header())?;
    let opt = |x: Option<f64>| x.map(exact).unwrap_or_default();
    for o in outcomes {
        let mut rec: Vec<String> = cell.fields().to_vec();
        rec.push(o.rep.to_string());
        rec.push(o.realized_k.to_string());
        rec.push(o.realized_k_iv.to_string());
        rec.push(u8::from(o.discarded).to_string());
        rec.push(opt(o.q_iv));
        rec.push(opt(o.q_f));
        for m in ApproxMethod::ALL {
            rec.push(opt(o.p_values.get(m)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a raw file. The cell is `None` for a header-only file.
pub fn read_raw<R: Read>(input: R) -> Result<(Option<CellId>, Vec<RepOutcome>)> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != raw_header() {
        return Err(Error::Csv("unexpected raw header".into()));
    }
    let mut cell = None;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = CellId::parse(&rec)?;
        match &cell {
            None => cell = Some(id),
            Some(c) if *c != id => return Err(Error::Csv("rows from more than one cell".into())),
            _ => {}
        }
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::Csv(format!("bad integer `{}`", &rec[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| Error::Csv(format!("bad number `{}`", &rec[i])))
            }
        };
        let mut p_values = PValues::default();
        for (j, m) in ApproxMethod::ALL.iter().enumerate() {
            p_values.set(*m, opt(12 + j)?);
        }
        out.push(RepOutcome {
            rep: int(6)?,
            realized_k: int(7)?,
            realized_k_iv: int(8)?,
            discarded: int(9)? != 0,
            q_iv: opt(10)?,
            q_f: opt(11)?,
            p_values,
        });
    }
    Ok((cell, out))
}

pub fn level_header() -> Vec<&'static str> {
    let mut h = CELL_COLUMNS.to_vec();
    h.extend(["method", "nominal", "achieved", "error", "analyzed"]);
    h
}

pub fn write_level_rows<W: Write>(out: W, rows: &[LevelRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(level_header())?;
    for r in rows {
        let mut rec = r.cell.fields().to_vec();
        rec.push(r.method.label().into());
        rec.push(sig6(r.nominal));
        rec.push(sig6(r.achieved));
        rec.push(sig6(r.error));
        rec.push(r.analyzed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Csv(format!("bad number `{s}`")))
}

pub fn read_level_rows<R: Read>(input: R) -> Result<Vec<LevelRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(level_header()) {
        return Err(Error::Csv("unexpected level-table header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(LevelRow {
                cell: CellId::parse(&rec)?,
                method: rec[6].parse().map_err(Error::Csv)?,
                nominal: parse_f(&rec[7])?,
                achieved: parse_f(&rec[8])?,
                error: parse_f(&rec[9])?,
                analyzed: rec[10].parse().map_err(|_| Error::Csv("bad count".into()))?,
            })
        })
        .collect()
}

pub fn power_header() -> Vec<&'static str> {
    let mut h = CELL_COLUMNS.to_vec();
    h.extend(["method", "alpha", "power", "analyzed"]);
    h
}

pub fn write_power_rows<W: Write>(out: W, rows: &[PowerRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(power_header())?;
    for r in rows {
        let mut rec = r.cell.fields().to_vec();
        rec.push(r.method.label().into());
        rec.push(sig6(r.alpha));
        rec.push(sig6(r.power));
        rec.push(r.analyzed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_power_rows<R: Read>(input: R) -> Result<Vec<PowerRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(power_header()) {
        return Err(Error::Csv("unexpected power-table header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(PowerRow {
                cell: CellId::parse(&rec)?,
                method: rec[6].parse().map_err(Error::Csv)?,
                alpha: parse_f(&rec[7])?,
                power: parse_f(&rec[8])?,
                analyzed: rec[9].parse().map_err(|_| Error::Csv("bad count".into()))?,
            })
        })
        .collect()
}
