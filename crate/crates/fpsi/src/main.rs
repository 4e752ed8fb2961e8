use clap::{Args, Parser, Subcommand};
use fpsi::config::RunConfig;
use fpsi::driver::{refine_study, run, Problem};
use fpsi::error::Error;
use fpsi::io::{initial_state, write_geometry, write_outputs, write_text, Manifest};
use fpsi::validation::{run_validation, OracleConfig};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fpsi", version, about = "Fluid / poroelastic / plate splitting solver with energy audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long)]
    threads: Option<usize>,
    /// Linear solver tolerance (overrides solver.linear_tol).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the splitting scheme and write the energy ledger, monitor log and dumps.
    Run(Common),
    /// Run the oracle suites and write validation.json.
    Validate(Common),
    /// Runs with N, 2N, 4N, ... steps and their Cauchy distances.
    RefineStudy {
        #[command(flatten)]
        common: Common,
        /// Number of runs.
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Jacobian and normal fields of the initial state (or of a dumped step).
    DumpGeometry(Common),
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIP: u8 = 3;
const EXIT_IDENTITY: u8 = 4;
const EXIT_SOLVER: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver { .. } | Error::Geometry(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn setup(c: &Common) -> Result<(RunConfig, PathBuf, usize), Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.tol {
        cfg.solver.linear_tol = t;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    cfg.validate()?;
    let threads = c.threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    fpsi::set_threads(threads);
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
    Ok((cfg, dir, threads))
}

fn failure(dir: &Path, code: u8, record: serde_json::Value) -> u8 {
    let _ = write_text(&dir.join("failure.json"), &(serde_json::to_string_pretty(&record).unwrap() + "\n"));
    code
}

fn cmd_run(c: &Common) -> Result<u8, (Error, Option<PathBuf>)> {
    let (cfg, dir, threads) = setup(c).map_err(|e| (e, None))?;
    let wrap = |e: Error| (e, Some(dir.clone()));
    let mut manifest = Manifest::new("run", &cfg, threads);
    let pb = Problem::new(&cfg).map_err(wrap)?;
    let init = initial_state(&pb.grids, &cfg).map_err(wrap)?;
    let out = run(&pb, &init).map_err(wrap)?;
    manifest.files = write_outputs(&dir, &pb.grids, &cfg, &out).map_err(wrap)?;
    let l = &out.ledger;
    manifest.summary = json!({
        "steps": out.trajectory.steps(),
        "t_max": out.t_max,
        "tripped": out.trip.is_some(),
        "identity_failures": l.identity_failures,
        "bound_failures": l.bound_failures,
        "monotone_failures": l.monotone_failures,
    });
    manifest.finish(&dir).map_err(wrap)?;
    if let Some(t) = &out.trip {
        let v = t.violation.as_ref().unwrap();
        eprintln!("monitor {:?} tripped at step {} (t_max = {})", v.kind, t.step, out.t_max);
        return Ok(EXIT_TRIP);
    }
    if !l.ok() {
        let rec = json!({"kind": "ledger", "identity_failures": l.identity_failures, "bound_failures": l.bound_failures, "monotone_failures": l.monotone_failures});
        eprintln!("energy ledger check failed: {rec}");
        return Ok(failure(&dir, EXIT_IDENTITY, rec));
    }
    Ok(0)
}

fn cmd_validate(c: &Common) -> Result<u8, (Error, Option<PathBuf>)> {
    let (cfg, dir, _) = setup(c).map_err(|e| (e, None))?;
    let wrap = |e: Error| (e, Some(dir.clone()));
    let oc = OracleConfig { seed: cfg.seed, ..OracleConfig::default() };
    let rep = run_validation(&cfg, &oc).map_err(wrap)?;
    write_text(&dir.join("validation.json"), &(serde_json::to_string_pretty(&rep).unwrap() + "\n")).map_err(wrap)?;
    if !rep.pass() {
        for f in &rep.failures {
            eprintln!("validation failure: {f}");
        }
        return Ok(failure(&dir, EXIT_IDENTITY, json!({"kind": "validation", "failures": rep.failures})));
    }
    Ok(0)
}

fn cmd_refine(c: &Common, levels: usize) -> Result<u8, (Error, Option<PathBuf>)> {
    let (cfg, dir, threads) = setup(c).map_err(|e| (e, None))?;
    let wrap = |e: Error| (e, Some(dir.clone()));
    if levels < 2 {
        return Err((Error::Config("--levels must be at least 2".into()), None));
    }
    let mut manifest = Manifest::new("refine-study", &cfg, threads);
    let pb = Problem::new(&cfg).map_err(wrap)?;
    let init = initial_state(&pb.grids, &cfg).map_err(wrap)?;
    let rep = refine_study(&cfg, &init, levels).map_err(wrap)?;
    let mut csv = String::from("coarse_steps,fine_steps,cauchy_norm,ratio\n");
    for (k, n) in rep.norms.iter().enumerate() {
        let ratio = if k == 0 { f64::NAN } else { rep.ratios[k - 1] };
        csv += &format!("{},{},{:.17e},{:.17e}\n", rep.steps[k], rep.steps[k + 1], n, ratio);
    }
    write_text(&dir.join("refine.csv"), &csv).map_err(wrap)?;
    write_text(&dir.join("refine.json"), &(serde_json::to_string_pretty(&rep).unwrap() + "\n")).map_err(wrap)?;
    manifest.files = vec!["refine.csv".into(), "refine.json".into()];
    manifest.summary = json!({"decreasing": rep.decreasing});
    manifest.finish(&dir).map_err(wrap)?;
    if !rep.decreasing {
        eprintln!("Cauchy norms are not strictly decreasing: {:?}", rep.norms);
        return Ok(failure(&dir, EXIT_IDENTITY, json!({"kind": "refine", "norms": rep.norms})));
    }
    Ok(0)
}

fn cmd_geometry(c: &Common) -> Result<u8, (Error, Option<PathBuf>)> {
    let (cfg, dir, threads) = setup(c).map_err(|e| (e, None))?;
    let wrap = |e: Error| (e, Some(dir.clone()));
    let mut manifest = Manifest::new("dump-geometry", &cfg, threads);
    let pb = Problem::new(&cfg).map_err(wrap)?;
    let init = initial_state(&pb.grids, &cfg).map_err(wrap)?;
    let geo = pb.regularize(&init.eta).map_err(wrap)?;
    manifest.files = write_geometry(&dir, &pb.grids, &cfg, &init.omega, &geo).map_err(wrap)?;
    manifest.finish(&dir).map_err(wrap)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Validate(c) => cmd_validate(c),
        Command::RefineStudy { common, levels } => cmd_refine(common, *levels),
        Command::DumpGeometry(c) => cmd_geometry(c),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err((e, dir)) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if let Some(d) = dir {
                failure(&d, code, json!({"kind": "error", "message": e.to_string()}));
            }
            ExitCode::from(code)
        }
    }
}
