//! `qhet`: run calibration simulations for Cochran's Q and summarize them.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qhet_core::report::{
    level_at, power_curve, pp_error_table, read_raw, write_level_rows, write_power_rows,
    write_raw, CellId, TailGrid,
};
use qhet_core::simulator::{cell_counts, parse_config, run_cell};
use qhet_core::RepOutcome;

#[derive(Parser)]
#[command(name = "qhet", version, about = "Null-distribution approximations for Cochran's Q on binary outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every cell of a config file and write one raw CSV per cell.
    Simulate(SimulateArgs),
    /// Achieved-minus-nominal level over the standard tail grid.
    PpTable(TableArgs),
    /// Empirical level at a single alpha.
    LevelTable(TableArgs),
    /// Empirical power against tau2 (lor cells only).
    PowerTable(TableArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `reps` from the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "QHET_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    /// Raw CSV files, or directories holding them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cells = parse_config(&text)?;
    if a.threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for cfg in &mut cells {
        if let Some(r) = a.reps {
            cfg.reps = r;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
    }
    for cfg in &cells {
        let outcomes = run_cell(cfg, a.threads);
        let path = a.out.join(cfg.file_name());
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_raw(BufWriter::new(file), &CellId::from(cfg), &outcomes)?;
        let c = cell_counts(&outcomes);
        eprintln!(
            "{}: {} reps, {} analyzed, {} discarded",
            path.display(),
            c.reps,
            c.analyzed,
            c.discarded
        );
    }
    Ok(())
}

fn raw_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            v.sort();
            files.extend(v);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn load(path: &Path) -> Result<Option<(CellId, Vec<RepOutcome>)>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (cell, outcomes) = read_raw(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    match cell {
        Some(c) => Ok(Some((c, outcomes))),
        None => {
            eprintln!("{}: no replications, skipped", path.display());
            Ok(None)
        }
    }
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<(CellId, Vec<RepOutcome>)>> {
    let mut cells = Vec::new();
    for f in raw_files(inputs)? {
        cells.extend(load(&f)?);
    }
    Ok(cells)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn table(a: &TableArgs, kind: &Command) -> Result<()> {
    let cells = load_all(&a.inputs)?;
    let out = sink(&a.out)?;
    match kind {
        Command::PpTable(_) => {
            let grid = TailGrid::standard();
            let mut rows = Vec::new();
            for (cell, o) in &cells {
                rows.extend(pp_error_table(cell, o, &grid)?);
            }
            write_level_rows(out, &rows)?;
        }
        Command::LevelTable(_) => {
            let mut rows = Vec::new();
            for (cell, o) in &cells {
                rows.extend(level_at(cell, o, a.alpha)?);
            }
            write_level_rows(out, &rows)?;
        }
        Command::PowerTable(_) => write_power_rows(out, &power_curve(&cells, a.alpha)?)?,
        _ => unreachable!(),
    }
    Ok(())
}

fn selftest() -> Result<bool> {
    let checks = qhet_core::selftest::run();
    let mut ok = true;
    for c in &checks {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::PpTable(a) | Command::LevelTable(a) | Command::PowerTable(a) => {
            table(a, &cli.command).map(|_| true)
        }
        Command::Selftest => selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
