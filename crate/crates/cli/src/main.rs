mod config;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chernweil::residue::{report_from_state, run_pipeline};
use chernweil::scenarios::{VectorFieldProfile, ZeroLocation};
use chernweil::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{parse_zeros, RunConfig};
use report::{build_report, human_summary, write_csv, ConvergenceRow, ReportFile, Runtime, FIXED_MASK_RADIUS};

#[derive(Parser)]
#[command(name = "chernweil", version, about = "Residues of singular bundle maps on the Riemann sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and compare it with its oracle.
    Run(RunArgs),
    /// Repeat a scenario at doubling resolutions and tabulate the errors.
    Convergence {
        #[command(flatten)]
        args: RunArgs,
        /// Number of resolutions, each twice as fine as the last.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Built-in scenarios with their parameters and expected invariants.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Field {
    Rotational,
    Gradient,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with a run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Nodes per chart axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Comma-separated sphere radii.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    quad_nodes: Option<usize>,
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    seed: Option<usize>,
    #[arg(long)]
    k: Option<i32>,
    /// Zeros as `x,y` pairs or `inf`, separated by `;`.
    #[arg(long, value_parser = parse_zeros)]
    zeros: Option<Vec<ZeroLocation>>,
    #[arg(long)]
    d: Option<i32>,
    #[arg(long, value_enum)]
    field: Option<Field>,
    #[arg(long)]
    phase: Option<f64>,
    /// Surjective demo without the rank collapse.
    #[arg(long)]
    no_collapse: bool,
    #[arg(long)]
    gauge: Option<f64>,
    /// Skip the normalization at singular points.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    enable_4d: bool,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Where to write the JSON report (CSV for convergence).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report on standard output.
    #[arg(long)]
    json: bool,
    #[arg(short, long)]
    verbose: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.scenario {
            c.scenario = v.clone();
        }
        if let Some(v) = self.resolution {
            c.resolution = v;
        }
        if let Some(v) = &self.eps {
            c.eps = Some(v.clone());
        }
        if let Some(v) = self.quad_nodes {
            c.quad_nodes = v;
        }
        if let Some(v) = &self.phi {
            c.phi = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = &self.zeros {
            c.zeros = Some(v.clone());
        }
        if let Some(v) = self.d {
            c.d = v;
        }
        if let Some(v) = self.field {
            c.field = match v {
                Field::Rotational => VectorFieldProfile::Rotational,
                Field::Gradient => VectorFieldProfile::Gradient,
            };
        }
        if let Some(v) = self.phase {
            c.phase = v;
        }
        if let Some(v) = self.gauge {
            c.gauge = v;
        }
        c.collapse &= !self.no_collapse;
        c.normalize &= !self.no_normalize;
        c.enable_4d |= self.enable_4d;
        c.verbose |= self.verbose;
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        if let Some(n) = self.jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
        }
        Ok(c)
    }
}

/// Criterion failure, configuration error or budget refusal, with a one-line reason.
struct Failure {
    code: u8,
    kind: &'static str,
    reason: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidChart(_) | Error::SphereOutsideChart { .. } => {
                (3, "config")
            }
            Error::Budget(_) => (4, "budget"),
            _ => (2, "numerical"),
        };
        Failure {
            code,
            kind,
            reason: e.to_string(),
        }
    }
}

fn criterion(reason: String) -> Failure {
    Failure {
        code: 2,
        kind: "criterion",
        reason,
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        kind: "io",
        reason: e.to_string(),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn execute(config: &RunConfig, resolution: usize) -> Result<ReportFile, Failure> {
    let config = RunConfig {
        resolution,
        ..config.clone()
    };
    config.validate()?;
    let t = Instant::now();
    let scenario = config.build(resolution)?;
    let build_ms = ms(t);
    let rc = config.residue_config(&scenario)?;
    let phi = config.phi.clone().unwrap_or_else(|| scenario.phi.clone());
    let t = Instant::now();
    let state = run_pipeline(&scenario.problem, &phi, &rc)?;
    let pipeline_ms = ms(t);
    let t = Instant::now();
    let report = report_from_state(&scenario.id, &state, &rc)?;
    let residues_ms = ms(t);
    let runtime = Runtime {
        build_ms,
        pipeline_ms,
        residues_ms,
    };
    Ok(build_report(&config, &scenario, &state, &report, &rc, runtime)?)
}

fn write_out(path: &Option<PathBuf>, body: &[u8]) -> Result<(), Failure> {
    if let Some(p) = path {
        std::fs::write(p, body).map_err(io_failure)?;
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = args.resolve()?;
    let report = execute(&config, config.resolution)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| io_failure(e.into()))?;
    write_out(&config.out, json.as_bytes())?;
    if args.json {
        println!("{json}");
    } else {
        print!("{}", human_summary(&report));
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(criterion(format!("failed checks: {}", failed.join(" "))))
    }
}

/// Resolutions that halve the grid spacing: `n, 2n − 1, 4n − 3, …`.
fn doubled(base: usize, level: usize) -> usize {
    (base - 1) * (1 << level) + 1
}

/// Balance errors this small count as exact and need not keep shrinking.
const FLAT_FLOOR: f64 = 1e-10;

fn convergence(args: &RunArgs, levels: usize) -> Result<(), Failure> {
    if levels < 2 {
        return Err(Error::Config(format!("convergence needs at least 2 levels, got {levels}")).into());
    }
    let config = args.resolve()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let res = doubled(config.resolution, level);
        let r = execute(&config, res)?;
        if config.verbose {
            eprintln!("level {level}: resolution {res}, balance {:.3e}", r.balance);
        }
        let balance_error = r.balance.abs();
        rows.push(ConvergenceRow {
            level,
            resolution: res,
            balance_error,
            identity_residual: r.identity_fixed.residual.max,
            ratio: rows
                .last()
                .filter(|p| p.balance_error > FLAT_FLOOR || balance_error > FLAT_FLOOR)
                .map(|p| p.balance_error / balance_error),
        });
    }
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).map_err(io_failure)?;
    write_out(&config.out, &csv)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(|e| io_failure(e.into()))?);
    } else {
        std::io::stdout().write_all(&csv).map_err(io_failure)?;
    }
    let stalled = rows
        .windows(2)
        .filter(|w| w[1].balance_error >= w[0].balance_error && w[0].balance_error > FLAT_FLOOR)
        .count();
    if stalled > 0 {
        return Err(criterion(format!(
            "balance error did not decrease at {stalled} refinement(s) (identity residual measured off radius {FIXED_MASK_RADIUS})"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct Invariant {
    what: &'static str,
    value: &'static str,
    oracle: &'static str,
}

#[derive(Serialize)]
struct ScenarioRow {
    id: &'static str,
    parameters: &'static str,
    invariants: Vec<Invariant>,
}

fn scenario_table() -> Vec<ScenarioRow> {
    let inv = |what, value, oracle| Invariant { what, value, oracle };
    vec![
        ScenarioRow {
            id: "line_zeros",
            parameters: "k in {0,1,2}; zeros (default: the poles)",
            invariants: vec![
                inv("lhs", "k", "clutching degree of z^k"),
                inv("residue at each zero", "1", "winding of the section around the zero"),
            ],
        },
        ScenarioRow {
            id: "hopf",
            parameters: "field rotational|gradient; phase",
            invariants: vec![
                inv("residue sum", "2", "Euler characteristic of a triangulated sphere"),
                inv("residue at each pole", "1", "winding of the field around the zero"),
            ],
        },
        ScenarioRow {
            id: "riemann_hurwitz",
            parameters: "d >= 1",
            invariants: vec![
                inv("lhs", "2d - 2", "d chi(Y) - chi(X) with chi by triangulation"),
                inv("residue at 0 and at infinity", "d - 1", "ramification index minus one"),
            ],
        },
        ScenarioRow {
            id: "surjective_demo",
            parameters: "collapse on|off; gauge angle",
            invariants: vec![
                inv("lhs", "-1 with collapse, 0 without", "clutching degree of O(1)"),
                inv("residue at the collapse", "-1", "minus the winding of the map"),
            ],
        },
        ScenarioRow {
            id: "s4_instanton",
            parameters: "requires --enable-4d; not built in this release",
            invariants: vec![inv("c2 residue", "1", "clutching degree of the identity S^3 -> SU(2)")],
        },
    ]
}

fn list(json: bool) -> Result<(), Failure> {
    let rows = scenario_table();
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(|e| io_failure(e.into()))?);
        return Ok(());
    }
    for r in rows {
        println!("{:<16} {}", r.id, r.parameters);
        for i in r.invariants {
            println!("{:<16}   {} = {}  [oracle: {}]", "", i.what, i.value, i.oracle);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Convergence { args, levels } => convergence(args, *levels),
        Command::List { json } => list(*json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: code={} kind={} reason={:?}", f.code, f.kind, f.reason);
            ExitCode::from(f.code)
        }
    }
}
