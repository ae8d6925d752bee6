//! `chase-escape` command-line tool.
//!
//! Data goes to `--out` (or stdout). The run manifest goes next to it as
//! `<out>.manifest.json`, or to stderr when writing to stdout, so the data
//! itself is byte-identical across reruns.

mod settings;
mod snapshot;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chase_escape::analytics;
use chase_escape::dynamics::{run, run_traced, EventRecord, RunRecord};
use chase_escape::experiments::{
    connective_constant_experiment, local_survival_experiment, percolation_consistency, run_sweep,
    LocalSurvivalSpec, SweepSpec, TOOL_VERSION,
};
use chase_escape::geometry::{estimate_theta, SawLimits};
use chase_escape::reference_models::chain_survival_oracle;
use chase_escape::stream::{stream, CellKey, GENERATOR};
use chase_escape::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use settings::{Settings, DEFAULT_LAMBDA_GRID, DEFAULT_MU_W_GRID};

#[derive(Debug, Parser)]
#[command(name = "chase-escape", version, about = "Chase-escape dynamics on random geometric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file or run manifest; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Independent runs on fresh graphs, one JSON record per line.
    Simulate {
        /// Attach the event list to every record.
        #[arg(long)]
        trace: bool,
        /// Write an SVG frame of replication 0.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Time of the frame (default: end of the run).
        #[arg(long)]
        snapshot_time: Option<f64>,
    },
    /// Phase-diagram grid over (lambda_i, mu_w), written as CSV.
    Sweep {
        /// Also write a heatmap of the global-proxy fraction.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Finite-box percolation probability of the susceptible cluster.
    Theta,
    /// Mean number of self-avoiding paths from the origin.
    Saw,
    /// Local-survival probability by simulation and by the void formula.
    LocalSurvival,
    /// Evaluate a closed-form quantity.
    Calc {
        quantity: Quantity,
        #[arg(long)]
        x: Option<f64>,
        /// Number of white knights, or the tree branching factor.
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Exact answers for the reference models.
    Oracle {
        #[command(subcommand)]
        model: OracleModel,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Quantity {
    Rho,
    RhoExpanded,
    TreeCriticalRate,
    BallVolume,
    ClosedNodeProb,
    OpenNodeLowerBound,
    ReflectionDecay,
    SpeedConstant,
    CriticalSpeed,
    ExpectedSawCount,
    LocalSurvivalBounds,
}

#[derive(Debug, Subcommand)]
enum OracleModel {
    /// Survival probability of a knight followed by `gap` infected sites.
    Chain {
        #[arg(long)]
        gap: u32,
    },
    /// Critical infection rate on the k-ary tree.
    TreeCritical {
        #[arg(long)]
        k: u32,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    params: &'a Settings,
    master_seed: Option<u64>,
    tool_version: &'a str,
    generator: &'a str,
    timestamp: String,
    wall_time_seconds: f64,
}

struct Output {
    data: Vec<u8>,
    extra: Vec<(PathBuf, String)>,
}

impl Output {
    fn json(value: &impl Serialize) -> Result<Output> {
        let mut data = serde_json::to_vec_pretty(value)?;
        data.push(b'\n');
        Ok(Output { data, extra: Vec::new() })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Parameter(_) | Error::Domain(_) | Error::UnsupportedEstimator(_) | Error::Json(_) => 2,
                _ => 1,
            })
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let mut settings = match &cli.config {
        Some(path) => Settings::from_file(path)?.overlay(cli.settings),
        None => cli.settings,
    };
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("--threads: {e}")))?;
    }
    let (name, output) = match cli.command {
        Command::Simulate { trace, snapshot, snapshot_time } => {
            ("simulate", simulate(&mut settings, trace, snapshot, snapshot_time)?)
        }
        Command::Sweep { svg } => ("sweep", sweep(&mut settings, svg)?),
        Command::Theta => ("theta", theta(&mut settings)?),
        Command::Saw => ("saw", saw(&mut settings)?),
        Command::LocalSurvival => ("local-survival", local_survival(&mut settings)?),
        Command::Calc { quantity, x, k, n, m, gamma, alpha, theta } => {
            ("calc", calc(&settings, quantity, Inputs { x, k, n, m, gamma, alpha, theta })?)
        }
        Command::Oracle { model } => ("oracle", oracle(&settings, model)?),
    };
    let manifest = RunManifest {
        subcommand: name,
        params: &settings,
        master_seed: settings.seed,
        tool_version: TOOL_VERSION,
        generator: GENERATOR,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest = serde_json::to_string_pretty(&manifest)?;
    for (path, contents) in &output.extra {
        std::fs::write(path, contents)?;
        eprintln!("wrote {}", path.display());
    }
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &output.data)?;
            std::fs::write(manifest_path(path), manifest + "\n")?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            std::io::stdout().write_all(&output.data)?;
            eprintln!("{manifest}");
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct SimulateRecord {
    #[serde(flatten)]
    record: RunRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<EventRecord>>,
}

fn simulate(s: &mut Settings, trace: bool, snapshot: Option<PathBuf>, snapshot_time: Option<f64>) -> Result<Output> {
    s.fill_model_defaults();
    let params = s.model()?;
    let (seed, reps) = (s.seed.unwrap_or(0), s.reps.unwrap_or(1));
    // Same streams as the matching sweep cell.
    let cell = CellKey::from_values(params.rates.lambda_i, params.mu_w);
    let want_trace = trace || snapshot.is_some();
    let runs = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, cell, rep);
            let graph = params.sample_graph(&mut rng)?;
            if want_trace {
                let (outcome, events) = run_traced(&graph, params.rates, &params.policy, &mut rng)?;
                Ok((outcome, Some(events), (rep == 0).then_some(graph)))
            } else {
                Ok((run(&graph, params.rates, &params.policy, &mut rng)?, None, None))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::new();
    let mut extra = Vec::new();
    for (rep, (outcome, events, graph)) in runs.into_iter().enumerate() {
        if let (Some(path), Some(graph), Some(events)) = (&snapshot, &graph, &events) {
            let t = snapshot_time.unwrap_or(outcome.final_time);
            let states = snapshot::states_at(graph, events, t);
            extra.push((path.clone(), snapshot::render(graph, &states, t)));
        }
        let record = SimulateRecord { record: RunRecord::new(&outcome, seed, rep as u64), trace: events.filter(|_| trace) };
        serde_json::to_writer(&mut data, &record)?;
        data.push(b'\n');
    }
    Ok(Output { data, extra })
}

fn sweep(s: &mut Settings, svg: Option<PathBuf>) -> Result<Output> {
    s.fill_model_defaults();
    let spec = SweepSpec {
        base: s.model()?,
        lambda_grid: s.lambda_grid.get_or_insert_with(|| DEFAULT_LAMBDA_GRID.to_vec()).clone(),
        mu_w_grid: s.mu_w_grid.get_or_insert_with(|| DEFAULT_MU_W_GRID.to_vec()).clone(),
        replications: s.reps.unwrap_or(1),
        master_seed: s.seed.unwrap_or(0),
    };
    let table = run_sweep(&spec)?;
    let mut data = Vec::new();
    table.write_csv(&mut data)?;
    let extra = svg.map(|p| (p, table.heatmap_svg())).into_iter().collect();
    Ok(Output { data, extra })
}

fn theta(s: &mut Settings) -> Result<Output> {
    s.fill_model_defaults();
    let box_spec = s.box_spec()?;
    let (r, reps, seed) = (s.radius.unwrap_or(1.0), s.reps.unwrap_or(1), s.seed.unwrap_or(0));
    match &s.mu_grid {
        Some(grid) => Output::json(&percolation_consistency(r, &box_spec, grid, reps, seed)?),
        None => {
            let mu_s = s.mu_s.unwrap_or(1.0);
            Output::json(&json!({ "mu_s": mu_s, "estimate": estimate_theta(mu_s, r, &box_spec, reps, seed)? }))
        }
    }
}

fn saw(s: &mut Settings) -> Result<Output> {
    s.fill_model_defaults();
    let n_max = *s.n_max.get_or_insert(4);
    Output::json(&connective_constant_experiment(
        s.mu_s.unwrap_or(1.0),
        s.radius.unwrap_or(1.0),
        s.dim.unwrap_or(2),
        n_max,
        s.reps.unwrap_or(1),
        s.seed.unwrap_or(0),
        SawLimits::default(),
    )?)
}

fn local_survival(s: &mut Settings) -> Result<Output> {
    s.fill_model_defaults();
    let params = s.model()?;
    let spec = LocalSurvivalSpec {
        mu_s: params.mu_s,
        mu_w: params.mu_w,
        radius: params.radius,
        box_spec: params.box_spec,
        rates: params.rates,
        replications: s.reps.unwrap_or(1),
        master_seed: s.seed.unwrap_or(0),
        volume_samples: *s.volume_samples.get_or_insert(20_000),
    };
    Output::json(&local_survival_experiment(&spec)?)
}

struct Inputs {
    x: Option<f64>,
    k: Option<u32>,
    n: Option<u32>,
    m: Option<u32>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    theta: Option<f64>,
}

fn calc(s: &Settings, quantity: Quantity, i: Inputs) -> Result<Output> {
    use Settings as S;
    let (inputs, value): (Value, Value) = match quantity {
        Quantity::Rho | Quantity::RhoExpanded => {
            let x = S::require(i.x, "x")?;
            let v = if matches!(quantity, Quantity::Rho) { analytics::rho(x)? } else { analytics::rho_expanded(x)? };
            (json!({ "x": x }), json!(v))
        }
        Quantity::TreeCriticalRate => {
            let k = S::require(i.k, "k")?;
            (json!({ "k": k }), json!(analytics::tree_critical_rate(k)?))
        }
        Quantity::BallVolume => {
            let (dim, r) = (S::require(s.dim, "dim")?, S::require(s.radius, "radius")?);
            (json!({ "dim": dim, "radius": r }), json!(analytics::ball_volume(dim, r)))
        }
        Quantity::ClosedNodeProb => {
            let (k, n, l) = (S::require(i.k, "k")?, S::require(i.n, "n")?, S::require(s.lambda_i, "lambda-i")?);
            (json!({ "k": k, "n": n, "lambda_i": l }), json!(analytics::closed_node_prob(k, n, l)?))
        }
        Quantity::OpenNodeLowerBound => {
            let (n, m, l) = (S::require(i.n, "n")?, S::require(i.m, "m")?, S::require(s.lambda_i, "lambda-i")?);
            (json!({ "n": n, "m": m, "lambda_i": l }), json!(analytics::open_node_lower_bound(n, m, l)?))
        }
        Quantity::ReflectionDecay => {
            let l = Settings::require(s.lambda_i, "lambda-i")?;
            (json!({ "lambda_i": l }), json!(analytics::reflection_decay(l)?))
        }
        Quantity::SpeedConstant => {
            let (g, l, r, a) = (S::require(i.gamma, "gamma")?, S::require(s.lambda_i, "lambda-i")?, S::require(s.radius, "radius")?, S::require(i.alpha, "alpha")?);
            (
                json!({ "gamma": g, "lambda_i": l, "radius": r, "alpha": a }),
                json!(analytics::speed_constant(g, l, r, a)?),
            )
        }
        Quantity::CriticalSpeed => {
            let (g, l, r) = (S::require(i.gamma, "gamma")?, S::require(s.lambda_i, "lambda-i")?, S::require(s.radius, "radius")?);
            (json!({ "gamma": g, "lambda_i": l, "radius": r }), serde_json::to_value(analytics::critical_speed(g, l, r)?)?)
        }
        Quantity::ExpectedSawCount => {
            let (mu, r, dim, n) = (S::require(s.mu_s, "mu-s")?, S::require(s.radius, "radius")?, S::require(s.dim, "dim")?, S::require(i.n, "n")?);
            (
                json!({ "mu_s": mu, "radius": r, "dim": dim, "n": n }),
                json!(analytics::expected_saw_count(mu, r, dim, n)?),
            )
        }
        Quantity::LocalSurvivalBounds => {
            let (mu_s, mu_w, r, dim, t) =
                (S::require(s.mu_s, "mu-s")?, S::require(s.mu_w, "mu-w")?, S::require(s.radius, "radius")?, S::require(s.dim, "dim")?, S::require(i.theta, "theta")?);
            (
                json!({ "mu_s": mu_s, "mu_w": mu_w, "radius": r, "dim": dim, "theta": t }),
                serde_json::to_value(analytics::local_survival_bounds(mu_s, mu_w, r, dim, t)?)?,
            )
        }
    };
    Output::json(&json!({ "quantity": quantity, "inputs": inputs, "value": value }))
}

fn oracle(s: &Settings, model: OracleModel) -> Result<Output> {
    match model {
        OracleModel::Chain { gap } => {
            let l = Settings::require(s.lambda_i, "lambda-i")?;
            Output::json(&json!({ "model": "chain", "gap": gap, "lambda_i": l, "survival": chain_survival_oracle(gap, l)? }))
        }
        OracleModel::TreeCritical { k } => {
            Output::json(&json!({ "model": "tree-critical", "k": k, "value": analytics::tree_critical_rate(k)? }))
        }
    }
}
