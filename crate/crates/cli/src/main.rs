use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use passivate::cosim::{compare_runs, export, run_experiment, ExportKind, RunRecord, Scenario};
use passivate::lti::{nyquist_points, save_nyquist_csv, FrequencyGrid, IndexReport, RationalDelaySystem};
use passivate::passivation::{
    achieved_levels, CaseKind, certified_gain, check_case, transformed_frequency_system, PassivationCase,
    PassivationMatrix,
};
use passivate::signal::SupplyRateSpec;
use passivate::Error;

#[derive(Parser)]
#[command(name = "passivate", version, about = "Passivation and extremum-seeking experiments for delayed controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its record and exports.
    Run {
        scenario: PathBuf,
        /// Output directory (default: `out/<scenario name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two run records of the same base scenario.
    Compare { a: PathBuf, b: PathBuf },
    /// Passivity indices and gain of a rational system with dead time.
    Analyze {
        system: PathBuf,
        /// Write the Nyquist points (of the transformed system, if a matrix is
        /// given) to this CSV file.
        #[arg(long)]
        nyquist: Option<PathBuf>,
        /// Use the inverse Nyquist plot.
        #[arg(long)]
        inverse: bool,
    },
    /// Check dithers and passivation matrices without simulating.
    Validate { scenario: PathBuf },
    /// Run a scenario over a range of seeds in parallel.
    Batch {
        scenario: PathBuf,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        from: u64,
        /// Number of seeds.
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Directory for per-seed records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Input of the `analyze` verb.
#[derive(Debug, Deserialize)]
struct SystemFile {
    num: Vec<f64>,
    den: Vec<f64>,
    #[serde(default)]
    tau: f64,
    #[serde(default)]
    matrix: Option<PassivationMatrix>,
    #[serde(default)]
    case: Option<CaseKind>,
    #[serde(default)]
    a: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AnalyzeOutput {
    system: IndexReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    transformed: Option<TransformedReport>,
}

#[derive(Debug, Serialize)]
struct TransformedReport {
    matrix: PassivationMatrix,
    report: IndexReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<PassivationCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check_passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    achieved_levels: Option<SupplyRateSpec>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Constraint(_) => 3,
        Error::Io { .. } | Error::Csv(_) => 4,
        _ => 1,
    }
}

fn print_json<T: Serialize>(value: &T) -> passivate::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn run(scenario: &Path, out: Option<PathBuf>, seed: Option<u64>) -> passivate::Result<()> {
    let mut sc = Scenario::load(scenario)?;
    if let Some(seed) = seed {
        sc = sc.with_seed(seed);
    }
    let record = run_experiment(&sc)?;
    let dir = out.unwrap_or_else(|| {
        let name = if sc.name.is_empty() { "run" } else { &sc.name };
        PathBuf::from("out").join(name)
    });
    export(&record, &ExportKind::ALL, &dir)?;
    record.save(dir.join("record.json"))?;
    log::info!("wrote {}", dir.display());
    print_json(&record.summary())
}

fn analyze(path: &Path, nyquist: Option<PathBuf>, inverse: bool) -> passivate::Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let spec: SystemFile = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let sys = RationalDelaySystem::new(spec.num, spec.den, spec.tau)
        .map_err(|e| Error::Config(e.to_string()))?;
    let grid = FrequencyGrid::default();
    let system = IndexReport::compute(&sys, &grid)?;
    let transformed = match spec.matrix {
        None => None,
        Some(m) => {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
            let t = transformed_frequency_system(&sys, m);
            let case = spec.case.map(|kind| PassivationCase { kind, a: spec.a });
            let (check_passed, achieved) = match case {
                Some(case) => {
                    let passed = check_case(&m, certified_gain(&sys, &grid)?, case)?;
                    (Some(passed), if passed { Some(achieved_levels(&m, case)?) } else { None })
                }
                None => (None, None),
            };
            Some(TransformedReport {
                matrix: m,
                report: IndexReport::compute(&t, &grid)?,
                case,
                check_passed,
                achieved_levels: achieved,
            })
        }
    };
    if let Some(csv) = nyquist {
        let points = match spec.matrix {
            Some(m) => nyquist_points(&transformed_frequency_system(&sys, m), &grid, inverse)?,
            None => nyquist_points(&sys, &grid, inverse)?,
        };
        save_nyquist_csv(&points, &csv)?;
    }
    print_json(&AnalyzeOutput {
        system,
        transformed,
    })
}

fn validate(path: &Path) -> passivate::Result<()> {
    let sc = Scenario::load(path)?;
    let reports = sc.constraint_reports()?;
    print_json(&reports)?;
    if let Some(r) = reports.iter().find(|r| !r.passed) {
        return Err(Error::Constraint(format!(
            "{} matrix {:?} fails the {:?} conditions at gain {}",
            r.controller,
            r.matrix.to_array(),
            r.case.kind,
            r.gamma
        )));
    }
    Ok(())
}

fn batch(path: &Path, from: u64, count: u64, out: Option<PathBuf>) -> passivate::Result<()> {
    let sc = Scenario::load(path)?;
    let records: Vec<RunRecord> = (from..from + count)
        .into_par_iter()
        .map(|seed| run_experiment(&sc.with_seed(seed)))
        .collect::<passivate::Result<_>>()?;
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for r in &records {
            r.save(dir.join(format!("record_{}.json", r.scenario.seed)))?;
        }
    }
    let summaries: Vec<_> = records.iter().map(RunRecord::summary).collect();
    print_json(&summaries)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed } => run(&scenario, out, seed),
        Command::Compare { a, b } => {
            RunRecord::load(&a).and_then(|ra| RunRecord::load(&b).and_then(|rb| compare_runs(&ra, &rb)))
                .and_then(|c| print_json(&c))
        }
        Command::Analyze {
            system,
            nyquist,
            inverse,
        } => analyze(&system, nyquist, inverse),
        Command::Validate { scenario } => validate(&scenario),
        Command::Batch {
            scenario,
            from,
            count,
            out,
        } => batch(&scenario, from, count, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
