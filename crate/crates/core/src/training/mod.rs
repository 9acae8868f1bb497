//! Losses, Adam, and the training loop.
//!
//! One [`Trainer::step`] for the score losses:
//!
//! 1. draw `x0 ~ q0`, `x1 ~ q1` (`batch_size` each);
//! 2. dequantize both with variance `eps` (DDBI, DSBI);
//! 3. DSBI only: solve entropic OT with `reg = 2 gamma^2` on the batch and
//!    redraw `batch_size` pairs from the plan;
//! 4. draw stratified times `t_i = (i + u_i) / batch_size`;
//! 5. form `x_t` with the bridge kernel (noise `t (1 - t) gamma^2`; the
//!    dequantization noise is already in the endpoints);
//! 6. evaluate the loss and take one Adam step.
//!
//! The logistic baseline skips steps 2-5 and trains a time-free classifier.

mod adam;
mod losses;

pub use adam::{AdamConfig, AdamState};
pub use losses::{l1_oracle, l3, l4, logistic, Interior, Lambda, LossOutput, Weighting};

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{dequantize, Batch, GaussianSpec, Source};
use crate::error::{config_err, Error, Result};
use crate::interpolants::{InterpolantConfig, InterpolantKind};
use crate::rng::{stream, Rng as StreamRng, Stream};
use crate::scorenet::{Head, ScoreModel, ScoreNetConfig};
use crate::transport::{cost_matrix, sample_coupling, sinkhorn, uniform, SinkhornOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Regression on the exact marginal time score (Gaussian endpoints only).
    L1,
    /// Integration-by-parts time-score loss.
    L3,
    /// Joint time and data score loss.
    L4,
    /// Logistic classifier baseline.
    Logistic,
}

impl LossKind {
    pub fn head(&self) -> Head {
        match self {
            LossKind::L4 => Head::Joint,
            _ => Head::Time,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    alloc::vec![128, 128]
}

fn default_frequencies() -> usize {
    8
}

/// Network shape; the input width comes from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_frequencies")]
    pub time_frequencies: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: default_hidden(), time_frequencies: default_frequencies() }
    }
}

fn default_loss() -> LossKind {
    LossKind::L3
}

fn default_batch() -> usize {
    512
}

fn default_lr() -> f64 {
    1e-3
}

fn default_boundary() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub interpolant: InterpolantConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weighting: Weighting,
    /// Multiplier `lambda_b` on the boundary terms of L3 and L4.
    #[serde(default = "default_boundary")]
    pub boundary_weight: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub sinkhorn: SinkhornOptions,
}

impl TrainConfig {
    pub fn new(interpolant: InterpolantConfig, iterations: usize) -> Self {
        Self {
            loss: default_loss(),
            interpolant,
            batch_size: default_batch(),
            iterations,
            lr: default_lr(),
            weighting: Weighting::Bridge,
            boundary_weight: default_boundary(),
            seed: 0,
            network: NetworkConfig::default(),
            sinkhorn: SinkhornOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.interpolant.validate()?;
        self.weighting.validate()?;
        if self.batch_size < 2 {
            return Err(config_err("batch_size must be at least 2"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(config_err("lr must be positive"));
        }
        if !self.boundary_weight.is_finite() {
            return Err(config_err("boundary_weight must be finite"));
        }
        if self.loss == LossKind::L1 && self.interpolant.uses_coupling() {
            return Err(config_err("the oracle loss needs independent endpoints; DSBI re-pairs them"));
        }
        if matches!(self.loss, LossKind::L3 | LossKind::L4) && self.lambda().eval(0.5).0 == 0.0 {
            return Err(config_err("lambda vanishes identically; use a quadratic or constant weighting with DI"));
        }
        Ok(())
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.weighting, self.interpolant.effective_gamma2())
    }

    pub fn network_config(&self, dim: usize) -> ScoreNetConfig {
        match self.loss {
            LossKind::Logistic => ScoreNetConfig::classifier(dim, self.network.hidden.clone()),
            _ => ScoreNetConfig {
                input_dim: dim,
                hidden: self.network.hidden.clone(),
                head: self.loss.head(),
                time_frequencies: self.network.time_frequencies,
                time_input: true,
            },
        }
    }
}

/// Stratified uniform times, one per stratum of `[0, 1)`.
pub fn stratified_times<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect()
}

/// Stateful training loop over two sample sources.
pub struct Trainer {
    cfg: TrainConfig,
    source0: Source,
    source1: Source,
    oracle: Option<(GaussianSpec, GaussianSpec)>,
    model: ScoreModel,
    adam: AdamState,
    data_rng: StreamRng,
    path_rng: StreamRng,
    transport_rng: StreamRng,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, source0: Source, source1: Source) -> Result<Self> {
        cfg.validate()?;
        source0.validate()?;
        source1.validate()?;
        if source0.dim() != source1.dim() {
            return Err(config_err(format!("source dimensions {} and {} differ", source0.dim(), source1.dim())));
        }
        let oracle = if cfg.loss == LossKind::L1 {
            match (source0.as_gaussian(), source1.as_gaussian()) {
                (Some(a), Some(b)) => Some((a.clone(), b.clone())),
                _ => return Err(config_err("the oracle loss needs Gaussian sources")),
            }
        } else {
            None
        };
        let model = ScoreModel::new(cfg.network_config(source0.dim()), &mut stream(cfg.seed, Stream::Init))?;
        let adam = AdamState::new(model.params());
        Ok(Self {
            data_rng: stream(cfg.seed, Stream::Data),
            path_rng: stream(cfg.seed, Stream::Paths),
            transport_rng: stream(cfg.seed, Stream::Transport),
            cfg,
            source0,
            source1,
            oracle,
            model,
            adam,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ScoreModel {
        &self.model
    }

    pub fn into_model(self) -> ScoreModel {
        self.model
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Endpoint batches after dequantization and, for DSBI, OT re-pairing.
    fn endpoints(&mut self) -> Result<(Batch, Batch)> {
        let n = self.cfg.batch_size;
        let x0 = self.source0.sample(n, &mut self.data_rng)?;
        let x1 = self.source1.sample(n, &mut self.data_rng)?;
        let eps = self.cfg.interpolant.effective_eps();
        let x0 = dequantize(&x0, eps, &mut self.path_rng)?;
        let x1 = dequantize(&x1, eps, &mut self.path_rng)?;
        if !self.cfg.interpolant.uses_coupling() {
            return Ok((x0, x1));
        }
        let cost = cost_matrix(&x0, &x1)?;
        let reg = 2.0 * self.cfg.interpolant.effective_gamma2();
        let plan = sinkhorn(&cost, &uniform(n), &uniform(n), reg, &self.cfg.sinkhorn)?;
        sample_coupling(&plan.coupling, &x0, &x1, n, &mut self.transport_rng)
    }

    fn loss(&mut self) -> Result<LossOutput> {
        let n = self.cfg.batch_size;
        if self.cfg.loss == LossKind::Logistic {
            let x0 = self.source0.sample(n, &mut self.data_rng)?;
            let x1 = self.source1.sample(n, &mut self.data_rng)?;
            return logistic(&self.model, &x0, &x1);
        }
        let (x0, x1) = self.endpoints()?;
        let ts = stratified_times(n, &mut self.path_rng);
        let bridge = self.cfg.interpolant.bridge_only();
        let xt = bridge.sample_paths(&x0, &x1, &ts, &mut self.path_rng)?;
        let lambda = self.cfg.lambda();
        let lb = self.cfg.boundary_weight;
        match self.cfg.loss {
            LossKind::L1 => {
                let (q0, q1) = self.oracle.as_ref().expect("oracle checked at construction");
                let oracle = xt
                    .rows()
                    .zip(&ts)
                    .map(|(x, &t)| self.cfg.interpolant.gaussian_marginal_time_score(q0, q1, t, x))
                    .collect::<Result<Vec<f64>>>()?;
                l1_oracle(&self.model, &Interior::new(xt, ts)?, &oracle, &lambda)
            }
            LossKind::L3 => l3(&self.model, &x0, &x1, &Interior::new(xt, ts)?, &lambda, lb),
            LossKind::L4 => {
                let d = xt.dim();
                let v = (0..n * d).map(|_| StandardNormal.sample(&mut self.path_rng)).collect();
                let probes = Batch::new(n, d, v)?;
                l4(&self.model, &x0, &x1, &Interior::new(xt, ts)?, &probes, &lambda, lb)
            }
            LossKind::Logistic => unreachable!("handled above"),
        }
    }

    /// One optimization step; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let out = self.loss().map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged { iteration: self.iteration, what },
            other => other,
        })?;
        self.adam.step(self.model.params_mut(), &out.grads, self.cfg.lr)?;
        self.iteration += 1;
        Ok(out.loss)
    }
}

/// Runs `cfg.iterations` steps; returns the model and the per-iteration losses.
pub fn train(cfg: &TrainConfig, source0: &Source, source1: &Source) -> Result<(ScoreModel, Vec<f64>)> {
    let mut trainer = Trainer::new(cfg.clone(), source0.clone(), source1.clone())?;
    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        history.push(trainer.step()?);
    }
    Ok((trainer.into_model(), history))
}

/// An interpolant config's default for DI runs, where the bridge weighting vanishes.
pub fn default_weighting(kind: InterpolantKind) -> Weighting {
    match kind {
        InterpolantKind::Di => Weighting::Quadratic { scale: 0.5 },
        _ => Weighting::Bridge,
    }
}
