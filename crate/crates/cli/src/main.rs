//! `sbsde`: batch front end for the solvers and checks.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use singular_bsde::bsde::{self, BsdeConfig};
use singular_bsde::checks::{self, Suite};
use singular_bsde::closedform;
use singular_bsde::diffusion::{simulate_batch, StepConfig};
use singular_bsde::pde::{self, EllipticProblem, Grid};
use singular_bsde::Error;

use config::ExperimentConfig;
use manifest::Outputs;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 1, message: format!("{}: {e}", path.display()) }
    }

    /// Invalid inputs map to 2, failures of the numerics to 1.
    pub fn from_core(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. }
            | Error::InvalidDomain(_)
            | Error::InvalidBoundary(_)
            | Error::InvalidCoefficients(_)
            | Error::InvalidGenerator(_)
            | Error::StartOutside(_)
            | Error::Precondition(_)
            | Error::NonDiagonalDiffusion
            | Error::UnknownCheck(_)
            | Error::UnknownSuite(_)
            | Error::InvalidConfig(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "sbsde", version, about = "Singular-terminal BSDE and blow-up PDE solvers")]
struct Cli {
    /// Worker threads (defaults to all cores; RAYON_NUM_THREADS also works).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    emit_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exit-time batch CSV.
    Simulate(RunArgs),
    /// Finite-difference truncation ladder.
    SolvePde(RunArgs),
    /// Regression solver (or the pure ODE mode).
    SolveBsde(RunArgs),
    /// Runs a check suite and prints JSON lines.
    Verify {
        #[arg(long, default_value = "fast")]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run only these checks (suite-scale defaults).
        #[arg(long = "check")]
        checks: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cartesian product over the config's `sweep` lists.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        command: SweepCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepCommand {
    Simulate,
    SolvePde,
    SolveBsde,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => load(&a).and_then(|(v, c)| simulate(&a, &v, &c)),
        Command::SolvePde(a) => load(&a).and_then(|(v, c)| solve_pde(&a, &v, &c)),
        Command::SolveBsde(a) => load(&a).and_then(|(v, c)| solve_bsde(&a, &v, &c)),
        Command::Verify { suite, seed, checks, out } => verify(&suite, seed, &checks, out.as_deref()),
        Command::Sweep { run, command } => sweep(&run, command),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_config(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Reads the config, applies `--seed`, warns about unknown keys.
fn load(a: &RunArgs) -> Result<(Value, ExperimentConfig), Failure> {
    let mut value = read_config(&a.config)?;
    if let Some(s) = a.seed {
        config::set_path(&mut value, "solver.seed", json!(s))?;
    }
    prepare(value)
}

fn prepare(value: Value) -> Result<(Value, ExperimentConfig), Failure> {
    let (cfg, ignored) = config::parse(&value)?;
    for k in ignored {
        eprintln!("warning: unknown config key `{k}` ignored");
    }
    Ok((value, cfg))
}

fn core<T>(r: singular_bsde::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::from_core)
}

fn simulate(a: &RunArgs, value: &Value, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let s = &cfg.solver;
    let batch = core(simulate_batch(
        &cfg.field()?,
        cfg.domain()?,
        cfg.start()?,
        StepConfig::new(s.dt, s.t_max),
        s.seed,
        s.n_paths,
    ))?;
    let mut out = Outputs::new(&a.out, &cfg.outputs.prefix)?;
    let mut csv = Vec::new();
    batch.write_csv(&mut csv).map_err(|e| Failure::io(&a.out, e))?;
    out.write("batch.csv", &csv)?;
    if a.emit_plots {
        out.write("batch.gp", exit_time_script(&format!("{}_batch.csv", cfg.outputs.prefix)).as_bytes())?;
    }
    out.finish("simulate", value, s.seed)?;
    Ok(0)
}

fn exit_time_script(csv: &str) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'exit time'\n\
         binwidth = 0.01\nbin(x) = binwidth * floor(x / binwidth)\n\
         plot '{csv}' using (bin($2)):(1.0) smooth freq with boxes title 'tau_hat'\npause -1\n"
    )
}

fn solve_pde(a: &RunArgs, value: &Value, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let domain = cfg.domain()?;
    let gen = cfg.generator()?.clone();
    let levels = cfg.levels();
    let grid = core(Grid::with_spacing(domain, cfg.solver.h))?;
    let problem = core(EllipticProblem::new(grid, cfg.field()?, gen.clone(), cfg.boundary()?, levels[0]))?;
    let (fields, record) = core(pde::ladder_fields(&problem, &levels, None, cfg.solver.tol))?;
    let last = fields.last().expect("non-empty ladder");
    let mut out = Outputs::new(&a.out, &cfg.outputs.prefix)?;
    let mut csv = Vec::new();
    last.write_csv(&mut csv).map_err(|e| Failure::io(&a.out, e))?;
    let csv_name = format!("{}_field.csv", cfg.outputs.prefix);
    out.write("field.csv", &csv)?;
    let ladder = json!({ "config": value, "ladder": record, "summary": last.summary() });
    out.write("ladder.json", pretty(&ladder).as_bytes())?;
    if a.emit_plots {
        out.write("plot.gp", pde::gnuplot_script(&csv_name, domain.dimension(), gen.q()).as_bytes())?;
    }
    out.finish("solve-pde", value, cfg.solver.seed)?;
    Ok(0)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialise") + "\n"
}

fn solve_bsde(a: &RunArgs, value: &Value, cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let gen = cfg.generator()?.clone();
    let s = &cfg.solver;
    let mut out = Outputs::new(&a.out, &cfg.outputs.prefix)?;
    if let Some(ode) = &cfg.pure_ode {
        let y = core(bsde::solve_pure_ode(&gen, ode.xi, ode.horizon, s.dt))?;
        let oracle = core(closedform::general_flow(&gen, ode.xi, ode.horizon))?;
        let doc = json!({ "config": value, "y0_mean": y, "y0_stderr": 0.0, "diagnostics": { "flow_oracle": oracle } });
        out.write("bsde.json", pretty(&doc).as_bytes())?;
        out.finish("solve-bsde", value, s.seed)?;
        return Ok(0);
    }
    let levels = cfg.levels();
    let bc = BsdeConfig {
        generator: gen.clone(),
        field: cfg.field()?,
        domain: cfg.domain()?.clone(),
        boundary: cfg.boundary()?,
        x: cfg.start()?.to_vec(),
        dt: s.dt,
        t_max: s.t_max,
        n_paths: s.n_paths,
        seed: s.seed,
        truncation: levels[0],
        bins: s.bins.clone(),
        unexited_threshold: s.unexited_threshold,
        estimate_z: s.eps.is_some(),
    };
    let ladder = core(bsde::ladder_run(&bc, &levels, s.tol))?;
    let last = ladder.runs.last().expect("non-empty ladder");
    let mut diagnostics = json!({
        "y0_upper": last.y0_upper,
        "mean_exit_time": last.mean_exit_time,
        "monotonicity_violations": ladder.monotonicity_violations,
        "stabilized": ladder.stabilized,
    });
    if let Some(eps) = s.eps {
        let z = ladder
            .runs
            .iter()
            .map(|r| core(bsde::weighted_z_diagnostic(r, eps)))
            .collect::<Result<Vec<_>, _>>()?;
        diagnostics["weighted_z"] = json!(z);
    }
    if s.xi_bound {
        let xi = core(bsde::xi_from_batch(&gen, &bc.boundary, *levels.last().expect("levels"), &last.batch))?;
        diagnostics["xi_lower_bound"] = json!(xi);
    }
    let records = ladder.records();
    out.write("bsde.json", pretty(&last.to_json(&records, diagnostics)).as_bytes())?;
    if a.emit_plots {
        let mut csv = String::from("n,y0_mean,y0_stderr\n");
        for r in &records {
            csv.push_str(&format!("{},{},{}\n", r.n, r.y0_mean, r.y0_stderr));
        }
        let name = format!("{}_levels.csv", cfg.outputs.prefix);
        out.write("levels.csv", csv.as_bytes())?;
        let script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset logscale x\nset xlabel 'n'\n\
             plot '{name}' using 1:2:3 with yerrorlines title 'Y_0^n'\npause -1\n"
        );
        out.write("levels.gp", script.as_bytes())?;
    }
    out.finish("solve-bsde", value, s.seed)?;
    Ok(0)
}

fn verify(suite: &str, seed: u64, names: &[String], out: Option<&Path>) -> Result<u8, Failure> {
    let suite: Suite = suite.parse().map_err(Failure::from_core)?;
    let reports = if names.is_empty() {
        checks::run_suite(suite, seed)
    } else {
        let mut v = Vec::new();
        for n in names {
            let entry = core(checks::find_check(n))?;
            let cfg = core(checks::resolve_config(entry, suite, &Value::Null))?;
            v.push(core(checks::run_check(n, &cfg, seed))?);
        }
        v
    };
    let jsonl = checks::to_jsonl(&reports);
    print!("{jsonl}");
    eprint!("{}", checks::summary_table(&reports));
    if let Some(dir) = out {
        let name = match suite {
            Suite::Fast => "verify_fast",
            Suite::Full => "verify_full",
        };
        let mut o = Outputs::new(dir, name)?;
        o.write("reports.jsonl", jsonl.as_bytes())?;
        o.finish("verify", &json!({ "suite": name, "seed": seed, "checks": names }), seed)?;
    }
    Ok(if checks::all_passed(&reports) { 0 } else { 1 })
}

fn sweep(a: &RunArgs, command: SweepCommand) -> Result<u8, Failure> {
    let mut base = read_config(&a.config)?;
    if let Some(s) = a.seed {
        config::set_path(&mut base, "solver.seed", json!(s))?;
    }
    let (_, cfg) = prepare(base.clone())?;
    if cfg.sweep.is_empty() {
        return Err(Failure::config("config has no `sweep` entries"));
    }
    let points = config::sweep_points(&cfg.sweep);
    if let Some(obj) = base.as_object_mut() {
        obj.remove("sweep");
    }
    let mut worst = 0u8;
    let mut index = Vec::new();
    for (k, point) in points.iter().enumerate() {
        let mut v = base.clone();
        for (path, val) in point {
            config::set_path(&mut v, path, val.clone())?;
        }
        let dir = a.out.join(format!("sweep_{k:03}"));
        let sub = RunArgs { out: dir.clone(), ..a.clone() };
        let code = prepare(v).and_then(|(v, c)| match command {
            SweepCommand::Simulate => simulate(&sub, &v, &c),
            SweepCommand::SolvePde => solve_pde(&sub, &v, &c),
            SweepCommand::SolveBsde => solve_bsde(&sub, &v, &c),
        });
        let (code, error) = match code {
            Ok(c) => (c, None),
            Err(f) => {
                eprintln!("error: sweep point {k}: {}", f.message);
                (f.code, Some(f.message))
            }
        };
        worst = worst.max(code);
        let assignments: serde_json::Map<String, Value> = point.iter().cloned().collect();
        index.push(json!({ "index": k, "dir": format!("sweep_{k:03}"), "assignments": assignments, "exit_code": code, "error": error }));
    }
    let mut o = Outputs::new(&a.out, "sweep")?;
    o.write("index.json", pretty(&json!(index)).as_bytes())?;
    o.finish("sweep", &read_config(&a.config)?, cfg.solver.seed)?;
    Ok(worst)
}
