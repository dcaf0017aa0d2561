//! Batch front door: scenario configuration, experiment execution, and
//! emission of tables and machine-readable reports.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 model
//! validation or admissibility failure, 3 verification criteria failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fshedge::decomp;
use fshedge::filter::{self, SimplexVector};
use fshedge::model::{Measure, ModelSpec};
use fshedge::oracle;
use fshedge::scenarios;
use fshedge::simulate;
use fshedge::valuefn;
use fshedge::verify;

/// Run parameters of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunParams {
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    measure: Measure,
    basis_degree: usize,
    lattice_depth: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            n_steps: 64,
            n_paths: 1000,
            seed: 7,
            measure: Measure::Physical,
            basis_degree: 3,
            lattice_depth: 4,
        }
    }
}

/// One scenario document: a model plus run parameters and suite selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioConfig {
    schema: String,
    model: ModelSpec,
    #[serde(default)]
    run: Option<RunParams>,
    #[serde(default)]
    out_dir: Option<String>,
    #[serde(default)]
    suites: Option<Vec<u32>>,
}

#[derive(Parser)]
#[command(name = "fshedge", about = "hidden-regime jump-diffusion hedging engine", version)]
struct Cli {
    /// Scenario configuration file (JSON). Built-in scenario names are also
    /// accepted where a config is optional.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Output directory (default: env FSHEDGE_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; overrides the scenario's run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: env FSHEDGE_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Criteria subset for `verify`, e.g. --suite 1,3,9.
    #[arg(long, global = true, value_delimiter = ',')]
    suite: Option<Vec<u32>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the scenario's model assumptions on a dense grid.
    Validate,
    /// Simulate an ensemble and write binary + CSV artifacts.
    Simulate,
    /// Run the regime filters along simulated paths; write CSVs and
    /// innovation diagnostics.
    Filter,
    /// Compute the hedge report on a simulated ensemble.
    Hedge,
    /// Run the verification suite and write a machine-readable report.
    Verify,
    /// Aggregate CSV artifacts in the output directory into one long-format
    /// table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ScenarioConfig> {
    let reference = cli.config.as_deref().unwrap_or("two_regime_small");
    if let Some(model) = scenarios::by_name(reference) {
        return Ok(ScenarioConfig {
            schema: "scenario/1".into(),
            model,
            run: Some(RunParams::default()),
            out_dir: None,
            suites: None,
        });
    }
    let text = fs::read_to_string(reference)
        .with_context(|| format!("cannot read config {reference}"))?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse config {reference}"))?;
    if config.schema != "scenario/1" {
        return Err(anyhow!("unsupported scenario schema {}", config.schema));
    }
    config.model.basic_validate().map_err(|e| anyhow!("config model invalid: {e}"))?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: &ScenarioConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var("FSHEDGE_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let threads = cli
        .threads
        .or_else(|| std::env::var("FSHEDGE_THREADS").ok().and_then(|t| t.parse().ok()));
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = load_config(&cli)?;
    let run_params = config.run.clone().unwrap_or_default();
    let seed = cli.seed.unwrap_or(run_params.seed);
    let dir = out_dir(&cli, &config);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    match cli.command {
        Command::Validate => validate_cmd(&config.model, &dir),
        Command::Simulate => simulate_cmd(&config.model, &run_params, seed, &dir),
        Command::Filter => filter_cmd(&config.model, &run_params, seed, &dir),
        Command::Hedge => hedge_cmd(&config.model, &run_params, seed, &dir),
        Command::Verify => verify_cmd(seed, cli.suite.or(config.suites).as_deref(), &dir),
        Command::Report => report_cmd(&dir),
    }
}

fn validate_cmd(model: &ModelSpec, dir: &Path) -> anyhow::Result<ExitCode> {
    let report = fshedge::model::validate_model(model, 16)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(dir.join("validation.json"), &json)?;
    for check in &report.checks {
        println!(
            "[{}] {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn simulate_cmd(model: &ModelSpec, run: &RunParams, seed: u64, dir: &Path) -> anyhow::Result<ExitCode> {
    let set = simulate::simulate_ensemble(model, run.n_steps, run.measure, run.n_paths, seed)
        .map_err(engine_error)?;
    let mut file = fs::File::create(dir.join("ensemble.bin"))?;
    simulate::write_ensemble(&set, &mut file)?;
    if let Some(path) = set.paths.first() {
        let density = if run.measure == Measure::Physical {
            Some(fshedge::mmm::doleans_density(model, path)?.values)
        } else {
            None
        };
        fs::write(dir.join("path_000.csv"), path.to_csv(model, density.as_deref())?)?;
    }
    println!(
        "simulated {} paths x {} steps under {} -> {}",
        set.paths.len(),
        run.n_steps,
        run.measure,
        dir.join("ensemble.bin").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn filter_cmd(model: &ModelSpec, run: &RunParams, seed: u64, dir: &Path) -> anyhow::Result<ExitCode> {
    let set = simulate::simulate_ensemble(model, run.n_steps, run.measure, run.n_paths, seed)
        .map_err(engine_error)?;
    let prior = SimplexVector::delta(model.x0, model.dim());
    let mut innovations: Vec<f64> = Vec::new();
    let h = model.horizon / run.n_steps as f64;
    for (i, path) in set.paths.iter().enumerate() {
        let obs = path.observables();
        let traj = filter::filter_path(model, &obs, run.measure, &prior)?;
        if i == 0 {
            fs::write(dir.join("filter_000.csv"), traj.to_csv(&path.times)?)?;
        }
        innovations.extend(traj.innovations.iter().map(|di| di / h.sqrt()));
    }
    let (mean, se) = oracle::mean_and_se(&innovations);
    let var = innovations.iter().map(|x| x * x).sum::<f64>() / innovations.len() as f64
        - mean * mean;
    let lb = oracle::ljung_box(&innovations, 20);
    #[derive(Serialize)]
    struct InnovationStats {
        schema: &'static str,
        n: usize,
        mean: f64,
        se: f64,
        variance: f64,
        ljung_box_q: f64,
        ljung_box_critical_1pct: f64,
        ljung_box_pass: bool,
    }
    let stats = InnovationStats {
        schema: "innovation-stats/1",
        n: innovations.len(),
        mean,
        se,
        variance: var,
        ljung_box_q: lb.statistic,
        ljung_box_critical_1pct: lb.critical,
        ljung_box_pass: lb.passed,
    };
    fs::write(dir.join("innovation_stats.json"), serde_json::to_string_pretty(&stats)?)?;
    println!(
        "filtered {} paths; innovation variance {:.4}, Ljung-Box Q = {:.2} (crit {:.2})",
        set.paths.len(),
        var,
        lb.statistic,
        lb.critical
    );
    Ok(ExitCode::SUCCESS)
}

fn hedge_cmd(model: &ModelSpec, run: &RunParams, seed: u64, dir: &Path) -> anyhow::Result<ExitCode> {
    let prior = SimplexVector::delta(model.x0, model.dim());
    // fit the value function on a starred ensemble, then hedge a physical one
    let star = simulate::simulate_ensemble(model, run.n_steps, Measure::Minimal, run.n_paths, seed)
        .map_err(engine_error)?;
    let filters_p: Result<Vec<_>, _> = star
        .paths
        .iter()
        .map(|p| filter::filter_path(model, &p.observables(), Measure::Physical, &prior))
        .collect();
    let g = valuefn::fit_g_regression(model, &star, &filters_p?, run.basis_degree)?;
    fs::write(dir.join("gapprox.json"), g.to_json()?)?;

    let phys = simulate::simulate_ensemble(model, run.n_steps, Measure::Physical, run.n_paths, seed ^ 0x5bd1)
        .map_err(engine_error)?;
    let mut a_terminal = Vec::with_capacity(phys.paths.len());
    let mut integrals: Vec<Vec<f64>> = Vec::new();
    let mut report = None;
    for (i, path) in phys.paths.iter().enumerate() {
        let obs = path.observables();
        let fp = filter::filter_path(model, &obs, Measure::Physical, &prior)?;
        let fs_ = filter::filter_path(model, &obs, Measure::Minimal, &prior)?;
        let hedged = decomp::residual_paths(model, &g, path, &fp, &fs_)?;
        let phis = decomp::test_processes(model, &obs, &fp);
        let ints = decomp::martingale_integrals(model, path, &phis)?;
        if integrals.is_empty() {
            integrals = vec![Vec::with_capacity(phys.paths.len()); phis.len()];
        }
        for (j, v) in ints.iter().enumerate() {
            integrals[j].push(*v);
        }
        a_terminal.push(hedged.a_terminal);
        if i == 0 {
            report = Some(decomp::build_hedge_report(model, &g, path, &fp, &fs_)?);
        }
    }
    let mut report = report.ok_or_else(|| anyhow!("empty ensemble"))?;
    report.orthogonality = oracle::orthogonality_estimate(&a_terminal, &integrals);
    report.mean_a_terminal = a_terminal.iter().sum::<f64>() / a_terminal.len().max(1) as f64;
    fs::write(dir.join("hedge.csv"), report.to_csv()?)?;
    fs::write(dir.join("hedge_summary.json"), report.summary_json()?)?;
    println!(
        "hedged {} paths; U0 = {:.6}, mean A_T = {:.3e}",
        phys.paths.len(),
        report.path.u0,
        report.mean_a_terminal
    );
    Ok(ExitCode::SUCCESS)
}

fn verify_cmd(seed: u64, suites: Option<&[u32]>, dir: &Path) -> anyhow::Result<ExitCode> {
    let run = verify::run_suite(seed, suites)?;
    for c in &run.report.criteria {
        println!("{}", c.line());
    }
    for t in &run.timings {
        eprintln!("criterion {:>2}: {:.1}s", t.id, t.seconds);
    }
    fs::write(dir.join("verify.json"), run.report.to_json()?)?;
    if run.report.all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

fn report_cmd(dir: &Path) -> anyhow::Result<ExitCode> {
    // melt every CSV artifact into (file, series, t, value) rows
    let mut rows: Vec<(String, String, String, String)> = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter(|p| p.file_name().is_some_and(|n| n != "report.csv"))
        .collect();
    names.sort();
    for path in names {
        let file = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let Some(header) = lines.next() else { continue };
        let cols: Vec<&str> = header.split(',').collect();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() || fields.is_empty() {
                continue;
            }
            let t = fields[0];
            for (c, v) in cols.iter().zip(&fields).skip(1) {
                if v.is_empty() {
                    continue;
                }
                rows.push((file.clone(), c.to_string(), t.to_string(), v.to_string()));
            }
        }
    }
    let mut out = String::from("file,series,t,value\r\n");
    for (f, s, t, v) in rows {
        out.push_str(&format!("{f},{s},{t},{v}\r\n"));
    }
    fs::write(dir.join("report.csv"), out)?;
    println!("wrote {}", dir.join("report.csv").display());
    Ok(ExitCode::SUCCESS)
}

/// Engine errors that indicate an invalid model or admissibility problem map
/// to exit code 2 semantics; the caller surfaces them via validate-style
/// failure. Everything else is a plain error.
fn engine_error(e: fshedge::Error) -> anyhow::Error {
    anyhow!("{e}")
}
