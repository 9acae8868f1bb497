//! Subcommand implementations. Each returns the JSON summary printed on stdout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dre_core::distributions::{dequantize, Batch, GaussianSpec};
use dre_core::estimation::{density_grid, estimate_mi, integrate_batch, GaussianOracle, GridSpec, NfeStats, TimeScore};
use dre_core::interpolants::{InterpolantConfig, InterpolantKind, Schedule};
use dre_core::rng::{stream, substream, Stream};
use dre_core::scorenet::ScoreModel;
use dre_core::training::Trainer;
use dre_core::transport::{cost_matrix, sample_coupling, sinkhorn, transport_loss, uniform};
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::artifacts::{self, batch_rows, coordinate_header, num, OutDir};
use crate::checkpoint;
use crate::config::{RunConfig, ScoreSource};
use crate::error::CliError;

pub const CHECKPOINT: &str = "checkpoint.bin";

#[derive(Debug, Parser)]
#[command(name = "dre", version, about = "Density ratio estimation with stochastic interpolants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "dre-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Checkpoint to score with; defaults to `<out>/checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Samples both sources to source0.csv and source1.csv.
    GenData(Common),
    /// Trains a time-score network; writes checkpoint.bin and history.csv.
    Train(Common),
    /// Log ratios for the points in a CSV file.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        points: PathBuf,
    },
    /// Mutual information as the mean log ratio over source1 samples.
    Mi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Log density of source1 on a 2-D grid, using a Gaussian source0.
    DensityGrid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Interpolant trajectories as CSV.
    SampleInterpolant(Common),
    /// Entropic OT diagnostics for one batch of each source.
    SinkhornReport(Common),
    /// Trains one model per interpolant and reports adaptive-integrator NFE.
    NfeReport {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "di,ddbi,dsbi")]
        methods: Vec<String>,
    },
    /// Re-hashes an output directory against its manifest.
    Verify {
        #[arg(long, default_value = "dre-out")]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Estimate { .. } => "estimate",
            Command::Mi { .. } => "mi",
            Command::DensityGrid { .. } => "density-grid",
            Command::SampleInterpolant(_) => "sample-interpolant",
            Command::SinkhornReport(_) => "sinkhorn-report",
            Command::NfeReport { .. } => "nfe-report",
            Command::Verify { .. } => "verify",
        }
    }
}

pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(command: &Command) -> Result<Value, CliError> {
    let name = command.name();
    let (common, run): (&Common, &dyn Fn(&RunConfig, &mut OutDir) -> Result<Value, CliError>) = match command {
        Command::Verify { out } => {
            let m = artifacts::verify(out)?;
            return Ok(json!({ "command": name, "ok": true, "config_hash": m.config_hash, "seed": m.seed, "artifacts": m.artifacts.len() }));
        }
        Command::GenData(c) => (c, &gen_data),
        Command::Train(c) => (c, &train),
        Command::Estimate { common, model, points } => (common, &move |cfg: &RunConfig, out: &mut OutDir| estimate(cfg, out, model, points)),
        Command::Mi { common, model } => (common, &move |cfg: &RunConfig, out: &mut OutDir| mi(cfg, out, model)),
        Command::DensityGrid { common, model } => (common, &move |cfg: &RunConfig, out: &mut OutDir| density(cfg, out, model)),
        Command::SampleInterpolant(c) => (c, &sample_interpolant),
        Command::SinkhornReport(c) => (c, &sinkhorn_report),
        Command::NfeReport { common, methods } => (common, &move |cfg: &RunConfig, out: &mut OutDir| nfe_report(cfg, out, methods)),
    };
    let cfg = load_config(common)?;
    let mut out = OutDir::create(&common.out, &cfg)?;
    let mut summary = run(&cfg, &mut out)?;
    summary["command"] = json!(name);
    summary["config_hash"] = json!(out.config_hash());
    summary["seed"] = json!(out.seed());
    summary["out"] = json!(common.out.display().to_string());
    out.finish(name)?;
    Ok(summary)
}

fn gen_data(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let mut rng = stream(cfg.seed, Stream::Report);
    let d = cfg.dim();
    for (file, source) in [("source0.csv", &cfg.source0), ("source1.csv", &cfg.source1)] {
        let batch = source.sample(cfg.samples, &mut rng)?;
        out.write_csv(file, &coordinate_header("x", d), batch_rows(&batch))?;
    }
    Ok(json!({ "samples": cfg.samples, "dim": d, "files": ["source0.csv", "source1.csv"] }))
}

/// Runs the configured training loop, recording one history row per iteration.
fn fit(cfg: &RunConfig, interpolant: &InterpolantConfig) -> Result<(ScoreModel, Vec<[f64; 3]>), CliError> {
    let tc = cfg.train_config(interpolant)?;
    let mut trainer = Trainer::new(tc.clone(), cfg.source0.clone(), cfg.source1.clone())?;
    let start = Instant::now();
    let mut history = Vec::with_capacity(tc.iterations);
    for i in 0..tc.iterations {
        let loss = trainer.step()?;
        history.push([i as f64, loss, start.elapsed().as_secs_f64() * 1e3]);
    }
    Ok((trainer.into_model(), history))
}

fn write_history(out: &mut OutDir, file: &str, history: &[[f64; 3]]) -> Result<(), CliError> {
    let header = ["iteration", "loss", "wall_ms"].map(String::from);
    let rows = history.iter().map(|[i, loss, ms]| vec![(*i as usize).to_string(), num(*loss), format!("{ms:.3}")]);
    out.write_csv(file, &header, rows)
}

fn train(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let (model, history) = fit(cfg, &cfg.interpolant)?;
    let bytes = checkpoint::encode(&model, out.config_hash(), cfg.seed, history.len());
    out.write_bytes(CHECKPOINT, &bytes)?;
    write_history(out, "history.csv", &history)?;
    Ok(json!({
        "iterations": history.len(),
        "final_loss": history.last().map(|h| h[1]),
        "parameters": model.params().to_flat().len(),
        "files": [CHECKPOINT, "history.csv"],
    }))
}

fn both_gaussian(cfg: &RunConfig) -> Option<(&GaussianSpec, &GaussianSpec)> {
    Some((cfg.source0.as_gaussian()?, cfg.source1.as_gaussian()?))
}

/// The time score selected by the config: a checkpoint or the closed-form oracle.
fn score_source(cfg: &RunConfig, out: &OutDir, model: &ModelArgs) -> Result<(Box<dyn TimeScore>, Value), CliError> {
    match cfg.score {
        ScoreSource::Oracle => {
            let (q0, q1) = both_gaussian(cfg)
                .ok_or_else(|| CliError::Config("the oracle score needs Gaussian source0 and source1".into()))?;
            let oracle = GaussianOracle::new(cfg.interpolant.clone(), q0.clone(), q1.clone())?;
            Ok((Box::new(oracle), json!({ "score": "oracle" })))
        }
        ScoreSource::Model => {
            let path = model.checkpoint.clone().unwrap_or_else(|| out.path(CHECKPOINT));
            let ck = checkpoint::load(&path)?;
            if TimeScore::dim(&ck.model) != cfg.dim() {
                return Err(CliError::Config(format!(
                    "checkpoint {} expects dimension {}, sources have {}",
                    path.display(),
                    TimeScore::dim(&ck.model),
                    cfg.dim()
                )));
            }
            let info = json!({
                "score": "model",
                "checkpoint": path.display().to_string(),
                "checkpoint_config_hash": ck.header.config_hash,
                "checkpoint_iteration": ck.header.iteration,
            });
            Ok((Box::new(ck.model), info))
        }
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(x), Value::Object(y)) = (&mut a, b) {
        x.extend(y);
    }
    a
}

fn estimate(cfg: &RunConfig, out: &mut OutDir, model: &ModelArgs, points: &Path) -> Result<Value, CliError> {
    let pts = artifacts::read_points(points)?;
    if pts.dim() != cfg.dim() {
        return Err(CliError::format("points file", points, format!("{} columns, sources have dimension {}", pts.dim(), cfg.dim())));
    }
    let (score, info) = score_source(cfg, out, model)?;
    let report = integrate_batch(score.as_ref(), &pts, &cfg.integrator)?;
    let mut header = coordinate_header("x", pts.dim());
    header.extend(["log_ratio".to_string(), "nfe".to_string()]);
    let rows = pts.rows().zip(&report.log_ratios).zip(&report.nfe).map(|((x, lr), n)| {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(*lr));
        row.push(n.to_string());
        row
    });
    out.write_csv("log_ratio.csv", &header, rows)?;
    Ok(merge(
        json!({ "points": pts.len(), "integrator": cfg.integrator, "nfe": report.nfe_stats()?, "files": ["log_ratio.csv"] }),
        info,
    ))
}

fn mi(cfg: &RunConfig, out: &mut OutDir, model: &ModelArgs) -> Result<Value, CliError> {
    let (score, info) = score_source(cfg, out, model)?;
    let samples = cfg.source1.sample(cfg.samples, &mut stream(cfg.seed, Stream::Eval))?;
    let r = estimate_mi(score.as_ref(), &samples, &cfg.integrator)?;
    let truth = match both_gaussian(cfg) {
        Some((q0, q1)) => Some(q1.kl_divergence(q0)?),
        None => None,
    };
    let report = merge(
        json!({
            "estimate": r.estimate,
            "stderr": r.stderr,
            "n": r.n,
            "nfe": r.nfe,
            "truth": truth,
            "integrator": cfg.integrator,
        }),
        info,
    );
    out.write_report("mi.json", report)
}

fn density(cfg: &RunConfig, out: &mut OutDir, model: &ModelArgs) -> Result<Value, CliError> {
    let q0 = cfg
        .source0
        .as_gaussian()
        .filter(|g| g.dim() == 2)
        .ok_or_else(|| CliError::Config("density-grid needs a 2-D Gaussian source0".into()))?;
    let spec = cfg.grid.unwrap_or_else(|| GridSpec::square(4.0, 64));
    let (score, info) = score_source(cfg, out, model)?;
    let grid = density_grid(score.as_ref(), q0, &spec, &cfg.integrator)?;
    let (xs, ys) = (spec.xs(), spec.ys());
    let header = ["x", "y", "log_density", "nfe"].map(String::from);
    let mut rows = Vec::with_capacity(xs.len() * ys.len());
    for (iy, y) in ys.iter().enumerate() {
        for (ix, x) in xs.iter().enumerate() {
            rows.push(vec![num(*x), num(*y), num(grid.get(ix, iy)), grid.nfe[iy * spec.nx + ix].to_string()]);
        }
    }
    out.write_csv("density.csv", &header, rows)?;
    let report = merge(
        json!({
            "grid": spec,
            "integral": grid.integral(),
            "nfe": NfeStats::from_counts(&grid.nfe)?,
            "integrator": cfg.integrator,
            "table": "density.csv",
        }),
        info,
    );
    out.write_report("density.json", report)
}

/// Endpoint pairs for trajectories: dequantized, and re-paired through the entropic plan for DSBI.
fn trajectory_endpoints(cfg: &RunConfig, n: usize) -> Result<(Batch, Batch), CliError> {
    let interp = &cfg.interpolant;
    let mut data = stream(cfg.seed, Stream::Report);
    let mut noise = substream(cfg.seed, Stream::Report, 1);
    let x0 = dequantize(&cfg.source0.sample(n, &mut data)?, interp.effective_eps(), &mut noise)?;
    let x1 = dequantize(&cfg.source1.sample(n, &mut data)?, interp.effective_eps(), &mut noise)?;
    if !interp.uses_coupling() {
        return Ok((x0, x1));
    }
    let cost = cost_matrix(&x0, &x1)?;
    let plan = sinkhorn(&cost, &uniform(n), &uniform(n), 2.0 * interp.effective_gamma2(), &cfg.train.sinkhorn)?;
    Ok(sample_coupling(&plan.coupling, &x0, &x1, n, &mut stream(cfg.seed, Stream::Transport))?)
}

/// Trajectories `alpha x0 + beta x1 + gamma (W_t - t W_1)`: each path is one
/// continuous Brownian bridge, so its marginal at every `t` is the bridge kernel.
fn sample_interpolant(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let interp = &cfg.interpolant;
    let (n, m, d) = (cfg.paths.paths, cfg.paths.times, cfg.dim());
    let (x0, x1) = trajectory_endpoints(cfg, n)?;
    let gamma = interp.effective_gamma2().sqrt();
    let ts: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
    let mut rng = stream(cfg.seed, Stream::Paths);
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend(coordinate_header("x", d));
    let mut rows = Vec::with_capacity(n * m);
    for (p, (a, b)) in x0.rows().zip(x1.rows()).enumerate() {
        // Brownian motion on the time grid, one coordinate at a time.
        let mut w = vec![vec![0.0; d]; m];
        for j in 1..m {
            let dt = ts[j] - ts[j - 1];
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                w[j][k] = w[j - 1][k] + dt.sqrt() * z;
            }
        }
        for (j, &t) in ts.iter().enumerate() {
            let c = interp.schedule.eval(t)?;
            let mut row = vec![p.to_string(), num(t)];
            for k in 0..d {
                let bridge = w[j][k] - t * w[m - 1][k];
                row.push(num(c.alpha * a[k] + c.beta * b[k] + gamma * bridge));
            }
            rows.push(row);
        }
    }
    out.write_csv("paths.csv", &header, rows)?;
    Ok(json!({ "paths": n, "times": m, "interpolant": interp, "files": ["paths.csv"] }))
}

fn sinkhorn_report(cfg: &RunConfig, out: &mut OutDir) -> Result<Value, CliError> {
    let n = cfg.sinkhorn.batch;
    let mut rng = stream(cfg.seed, Stream::Report);
    let x0 = cfg.source0.sample(n, &mut rng)?;
    let x1 = cfg.source1.sample(n, &mut rng)?;
    let gamma2 = cfg.interpolant.gamma2;
    if !(gamma2 > 0.0) {
        return Err(CliError::Config("sinkhorn-report needs gamma2 > 0".into()));
    }
    let reg = 2.0 * gamma2;
    let cost = cost_matrix(&x0, &x1)?;
    let plan = sinkhorn(&cost, &uniform(n), &uniform(n), reg, &cfg.sinkhorn.options)?;
    let objective = dre_core::transport::entropic_objective(&plan.coupling, &cost, reg)?;

    let mut losses = serde_json::Map::new();
    for (i, kind) in InterpolantKind::ALL.iter().enumerate() {
        let interp = InterpolantConfig {
            kind: *kind,
            schedule: Schedule::Linear,
            gamma2,
            eps: cfg.interpolant.eps,
        };
        let mut noise = substream(cfg.seed, Stream::Report, 1 + i as u64);
        let r = transport_loss(&interp, &x0, &x1, &cfg.sinkhorn.options, &mut noise)?;
        losses.insert(kind.as_str().to_string(), serde_json::to_value(r).expect("report serializes"));
    }
    let report = json!({
        "batch": n,
        "gamma2": gamma2,
        "reg": reg,
        "objective": objective,
        "expected_cost": plan.coupling.expected_cost(&cost)?,
        "entropy": plan.coupling.entropy(),
        "marginal_error": plan.marginal_error,
        "iterations": plan.iterations,
        "converged": plan.converged,
        "transport_losses": losses,
    });
    out.write_report("sinkhorn.json", report)
}

/// The run's interpolant with its kind replaced; DSBI is always linear.
fn interpolant_for(base: &InterpolantConfig, kind: InterpolantKind) -> InterpolantConfig {
    let schedule = if kind == InterpolantKind::Dsbi { Schedule::Linear } else { base.schedule.clone() };
    InterpolantConfig { kind, schedule, gamma2: base.gamma2, eps: base.eps }
}

/// Evaluation points for NFE comparisons, half from each source.
pub fn nfe_points(cfg: &RunConfig) -> Result<Batch, CliError> {
    let n = cfg.nfe.points;
    let mut rng = stream(cfg.seed, Stream::Eval);
    let a = cfg.source0.sample(n / 2, &mut rng)?;
    let b = cfg.source1.sample(n - n / 2, &mut rng)?;
    let rows: Vec<&[f64]> = a.rows().chain(b.rows()).collect();
    Ok(Batch::from_rows(&rows)?)
}

fn nfe_report(cfg: &RunConfig, out: &mut OutDir, methods: &[String]) -> Result<Value, CliError> {
    if methods.is_empty() {
        return Err(CliError::Config("--methods needs at least one interpolant".into()));
    }
    let kinds = methods.iter().map(|m| InterpolantKind::parse(m.trim())).collect::<Result<Vec<_>, _>>()?;
    let points = nfe_points(cfg)?;
    let mut rows = Vec::new();
    let mut per_method = serde_json::Map::new();
    for kind in kinds {
        let interp = interpolant_for(&cfg.interpolant, kind);
        let (model, history) = fit(cfg, &interp)?;
        let name = kind.as_str();
        let ck = format!("checkpoint-{name}.bin");
        let bytes = checkpoint::encode(&model, out.config_hash(), cfg.seed, history.len());
        out.write_bytes(&ck, &bytes)?;
        write_history(out, &format!("history-{name}.csv"), &history)?;
        let report = integrate_batch(&model, &points, &cfg.nfe.integrator)?;
        for (i, (n, lr)) in report.nfe.iter().zip(&report.log_ratios).enumerate() {
            rows.push(vec![name.to_string(), i.to_string(), n.to_string(), num(*lr)]);
        }
        let stats = report.nfe_stats()?;
        per_method.insert(
            name.to_string(),
            json!({ "median": stats.median, "nfe": stats, "final_loss": history.last().map(|h| h[1]), "checkpoint": ck }),
        );
    }
    out.write_csv("nfe.csv", &["method", "point", "nfe", "log_ratio"].map(String::from), rows)?;
    let report = json!({ "points": points.len(), "integrator": cfg.nfe.integrator, "methods": per_method });
    out.write_report("nfe.json", report)
}
