//! Coefficient schedules, bridge kernels and their time scores.
//!
//! Every interpolant draws
//!
//! ```text
//! x_t = alpha_t x0 + beta_t x1 + sigma_t z,     z ~ N(0, I)
//! ```
//!
//! and differs only in the kernel variance `sigma_t^2`:
//!
//! | kind | `sigma_t^2` |
//! |------|-------------|
//! | DI   | `0` |
//! | DBI  | `t (1 - t) gamma^2` |
//! | DDBI | `t (1 - t) gamma^2 + (alpha_t^2 + beta_t^2) eps` |
//! | DSBI | as DDBI, linear schedule, endpoints re-paired by entropic OT |
//!
//! The Gaussian helpers at the bottom give exact marginals and marginal time
//! scores when both endpoints are independent Gaussians; they are the oracles
//! the estimators are checked against.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{Batch, Block, Covariance, GaussianSpec};
use crate::error::{config_err, shape_err, Error, Result};

/// Lower clamp for the variance-preserving `alpha_t`.
pub const VP_ALPHA_FLOOR: f64 = 1e-6;

/// `alpha_t` / `beta_t` family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `alpha = 1 - t`, `beta = t`.
    Linear,
    /// `alpha = exp(-0.25 (b_max - b_min) t^2 - 0.5 b_min t)`, `beta = sqrt(1 - alpha^2)`.
    Vp { beta_min: f64, beta_max: f64 },
    /// `alpha = sqrt(1 - eta^2)`, `beta = eta`, with `eta` piecewise linear
    /// through the given values at `t = m / M`.
    Tre { eta: Vec<f64> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Linear
    }
}

/// Schedule values and analytic derivatives at one time.
///
/// The products `alpha * alpha_dot` and `beta * beta_dot` are carried
/// separately because they stay finite where `beta_dot` alone does not
/// (the variance-preserving schedule at `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
    pub alpha_alpha_dot: f64,
    pub beta_beta_dot: f64,
}

impl Coefficients {
    /// `d/dt (alpha^2 + beta^2)`
    pub fn norm_rate(&self) -> f64 {
        2.0 * (self.alpha_alpha_dot + self.beta_beta_dot)
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeDomain(t))
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::Linear => Ok(()),
            Schedule::Vp { beta_min, beta_max } => {
                if !(beta_min.is_finite() && beta_max.is_finite() && *beta_min >= 0.0 && beta_max > beta_min) {
                    return Err(config_err(format!("VP schedule needs 0 <= beta_min < beta_max, got {beta_min}, {beta_max}")));
                }
                Ok(())
            }
            Schedule::Tre { eta } => {
                let ok = eta.len() >= 2
                    && eta[0] == 0.0
                    && *eta.last().unwrap() == 1.0
                    && eta.windows(2).all(|w| w[1] > w[0]);
                if ok {
                    Ok(())
                } else {
                    Err(config_err("TRE grid must increase strictly from 0 to 1"))
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<Coefficients> {
        check_time(t)?;
        Ok(match self {
            Schedule::Linear => Coefficients {
                alpha: 1.0 - t,
                beta: t,
                alpha_dot: -1.0,
                beta_dot: 1.0,
                alpha_alpha_dot: t - 1.0,
                beta_beta_dot: t,
            },
            Schedule::Vp { beta_min, beta_max } => {
                let spread = beta_max - beta_min;
                let mut alpha = (-0.25 * spread * t * t - 0.5 * beta_min * t).exp();
                let mut alpha_dot = alpha * (-0.5 * spread * t - 0.5 * beta_min);
                if alpha < VP_ALPHA_FLOOR {
                    alpha = VP_ALPHA_FLOOR;
                    alpha_dot = 0.0;
                }
                let beta = (1.0 - alpha * alpha).max(0.0).sqrt();
                let alpha_alpha_dot = alpha * alpha_dot;
                let beta_beta_dot = -alpha_alpha_dot;
                let beta_dot = if beta > 0.0 {
                    beta_beta_dot / beta
                } else if *beta_min > 0.0 {
                    f64::INFINITY
                } else {
                    (0.5 * spread).sqrt()
                };
                Coefficients { alpha, beta, alpha_dot, beta_dot, alpha_alpha_dot, beta_beta_dot }
            }
            Schedule::Tre { eta } => {
                let m = (eta.len() - 1) as f64;
                let seg = ((t * m).floor() as usize).min(eta.len() - 2);
                let slope = (eta[seg + 1] - eta[seg]) * m;
                let e = (eta[seg] + slope * (t - seg as f64 / m)).clamp(0.0, 1.0);
                let alpha = (1.0 - e * e).max(0.0).sqrt();
                let alpha_dot = if alpha > 0.0 { -e * slope / alpha } else { f64::NEG_INFINITY };
                Coefficients {
                    alpha,
                    beta: e,
                    alpha_dot,
                    beta_dot: slope,
                    alpha_alpha_dot: -e * slope,
                    beta_beta_dot: e * slope,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolantKind {
    /// Deterministic interpolant.
    Di,
    /// Diffusion (Brownian) bridge.
    Dbi,
    /// Dequantified diffusion bridge.
    Ddbi,
    /// Dequantified Schrodinger bridge: DDBI on entropic-OT re-paired endpoints.
    Dsbi,
}

impl InterpolantKind {
    pub const ALL: [InterpolantKind; 4] =
        [InterpolantKind::Di, InterpolantKind::Dbi, InterpolantKind::Ddbi, InterpolantKind::Dsbi];

    pub fn as_str(&self) -> &'static str {
        match self {
            InterpolantKind::Di => "di",
            InterpolantKind::Dbi => "dbi",
            InterpolantKind::Ddbi => "ddbi",
            InterpolantKind::Dsbi => "dsbi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown interpolant {s:?}")))
    }
}

fn default_gamma2() -> f64 {
    0.5
}

fn default_eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolantConfig {
    pub kind: InterpolantKind,
    #[serde(default)]
    pub schedule: Schedule,
    /// Bridge noise factor `gamma^2`; ignored by DI.
    #[serde(default = "default_gamma2")]
    pub gamma2: f64,
    /// Dequantization variance; used by DDBI and DSBI only.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl Default for InterpolantConfig {
    fn default() -> Self {
        Self { kind: InterpolantKind::Ddbi, schedule: Schedule::Linear, gamma2: default_gamma2(), eps: default_eps() }
    }
}

/// One draw from a bridge kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    pub z: Vec<f64>,
    pub xt: Vec<f64>,
}

impl InterpolantConfig {
    pub fn new(kind: InterpolantKind, schedule: Schedule, gamma2: f64, eps: f64) -> Result<Self> {
        let cfg = Self { kind, schedule, gamma2, eps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn di(schedule: Schedule) -> Self {
        Self { kind: InterpolantKind::Di, schedule, gamma2: 0.0, eps: 0.0 }
    }

    pub fn dbi(schedule: Schedule, gamma2: f64) -> Self {
        Self { kind: InterpolantKind::Dbi, schedule, gamma2, eps: 0.0 }
    }

    pub fn ddbi(schedule: Schedule, gamma2: f64, eps: f64) -> Self {
        Self { kind: InterpolantKind::Ddbi, schedule, gamma2, eps }
    }

    pub fn dsbi(gamma2: f64, eps: f64) -> Self {
        Self { kind: InterpolantKind::Dsbi, schedule: Schedule::Linear, gamma2, eps }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.gamma2.is_finite() && self.gamma2 >= 0.0) {
            return Err(config_err(format!("gamma2 must be finite and >= 0, got {}", self.gamma2)));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(config_err(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        if self.kind == InterpolantKind::Dsbi && self.schedule != Schedule::Linear {
            return Err(config_err("DSBI requires the linear schedule"));
        }
        Ok(())
    }

    pub fn effective_gamma2(&self) -> f64 {
        match self.kind {
            InterpolantKind::Di => 0.0,
            _ => self.gamma2,
        }
    }

    pub fn effective_eps(&self) -> f64 {
        match self.kind {
            InterpolantKind::Ddbi | InterpolantKind::Dsbi => self.eps,
            _ => 0.0,
        }
    }

    /// Whether endpoints are re-paired with an entropic OT coupling.
    pub fn uses_coupling(&self) -> bool {
        self.kind == InterpolantKind::Dsbi
    }

    /// The same bridge without dequantization, for endpoints that have
    /// already been dequantized explicitly.
    pub fn bridge_only(&self) -> Self {
        match self.kind {
            InterpolantKind::Di => self.clone(),
            _ => Self { kind: InterpolantKind::Dbi, schedule: self.schedule.clone(), gamma2: self.gamma2, eps: 0.0 },
        }
    }

    /// Kernel variance `sigma_t^2` and its time derivative.
    pub fn sigma2(&self, t: f64) -> Result<(f64, f64)> {
        let c = self.schedule.eval(t)?;
        Ok(self.sigma2_with(t, &c))
    }

    fn sigma2_with(&self, t: f64, c: &Coefficients) -> (f64, f64) {
        let g = self.effective_gamma2();
        let e = self.effective_eps();
        let norm = c.alpha * c.alpha + c.beta * c.beta;
        (t * (1.0 - t) * g + norm * e, (1.0 - 2.0 * t) * g + c.norm_rate() * e)
    }

    /// Draws `x_t` given both endpoints.
    pub fn sample_path<R: Rng + ?Sized>(&self, x0: &[f64], x1: &[f64], t: f64, rng: &mut R) -> Result<PathPoint> {
        if x0.len() != x1.len() {
            return Err(shape_err(format!("endpoint dimensions {} and {} differ", x0.len(), x1.len())));
        }
        let c = self.schedule.eval(t)?;
        let (s2, _) = self.sigma2_with(t, &c);
        let sigma = s2.sqrt();
        let z: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(rng)).collect();
        let xt = x0
            .iter()
            .zip(x1)
            .zip(&z)
            .map(|((a, b), zi)| c.alpha * a + c.beta * b + sigma * zi)
            .collect();
        Ok(PathPoint { x0: x0.to_vec(), x1: x1.to_vec(), t, z, xt })
    }

    /// Row-wise `x_t` for paired endpoint batches and one time per row.
    pub fn sample_paths<R: Rng + ?Sized>(&self, x0: &Batch, x1: &Batch, ts: &[f64], rng: &mut R) -> Result<Batch> {
        if x0.len() != x1.len() || x0.dim() != x1.dim() || ts.len() != x0.len() {
            return Err(shape_err("endpoint batches and times must have matching sizes"));
        }
        let d = x0.dim();
        let mut data = Vec::with_capacity(x0.len() * d);
        for ((a, b), &t) in x0.rows().zip(x1.rows()).zip(ts) {
            let c = self.schedule.eval(t)?;
            let sigma = self.sigma2_with(t, &c).0.sqrt();
            for (ai, bi) in a.iter().zip(b) {
                let z: f64 = StandardNormal.sample(rng);
                data.push(c.alpha * ai + c.beta * bi + sigma * z);
            }
        }
        Batch::new(x0.len(), d, data)
    }

    /// `d/dt log N(x_t; alpha x0 + beta x1, sigma_t^2 I)` at fixed `x_t`.
    pub fn conditional_time_score(&self, p: &PathPoint) -> Result<f64> {
        let d = p.x0.len();
        if p.x1.len() != d || p.z.len() != d || p.xt.len() != d {
            return Err(shape_err("path point vectors have different lengths"));
        }
        let c = self.schedule.eval(p.t)?;
        let (s2, s2_dot) = self.sigma2_with(p.t, &c);
        if !(s2 > 0.0) {
            return Err(Error::ZeroVariance(p.t));
        }
        let sigma = s2.sqrt();
        let z2: f64 = p.z.iter().map(|z| z * z).sum();
        let drift: f64 = p
            .x0
            .iter()
            .zip(&p.x1)
            .zip(&p.z)
            .map(|((a, b), z)| (c.alpha_dot * a + c.beta_dot * b) * z)
            .sum();
        Ok(-(d as f64) * s2_dot / (2.0 * s2) + drift / sigma + s2_dot * z2 / (2.0 * s2))
    }

    /// Exact law of `x_t` for independent Gaussian endpoints.
    pub fn gaussian_marginal(&self, q0: &GaussianSpec, q1: &GaussianSpec, t: f64) -> Result<GaussianSpec> {
        let m = MarginalParts::new(self, q0, q1, t)?;
        let covariance = match (&q0.covariance, &q1.covariance) {
            (Covariance::Scalar(a), Covariance::Scalar(b)) => {
                Covariance::Scalar(m.c.alpha * m.c.alpha * a + m.c.beta * m.c.beta * b + m.s2)
            }
            _ => Covariance::from_blocks(&m.cov),
        };
        GaussianSpec::new(m.mean, covariance)
    }

    /// `d/dt log q_t(x)` for independent Gaussian endpoints.
    pub fn gaussian_marginal_time_score(&self, q0: &GaussianSpec, q1: &GaussianSpec, t: f64, x: &[f64]) -> Result<f64> {
        let m = MarginalParts::new(self, q0, q1, t)?;
        if x.len() != m.mean.len() {
            return Err(shape_err(format!("point has dimension {}, marginal has {}", x.len(), m.mean.len())));
        }
        let c = m.c;
        let mut score = 0.0;
        let mut offset = 0;
        for (cov, (b0, b1)) in m.cov.iter().zip(m.b0.iter().zip(&m.b1)) {
            let k = cov.size();
            let rate = Block::combine(
                2.0 * c.alpha_alpha_dot,
                b0,
                2.0 * c.beta_beta_dot,
                b1,
                m.s2_dot,
            );
            let inv = cov.inverse();
            let mut r = [0.0; 2];
            let mut mean_dot = [0.0; 2];
            for i in 0..k {
                let j = offset + i;
                r[i] = x[j] - m.mean[j];
                mean_dot[i] = c.alpha_dot * q0.mean[j] + c.beta_dot * q1.mean[j];
            }
            let w = inv.apply(&r[..k]);
            let trace = inv.trace_product(&rate);
            let drift: f64 = (0..k).map(|i| w[i] * mean_dot[i]).sum();
            let quad = rate.quad(&w[..k]);
            score += -0.5 * trace + drift + 0.5 * quad;
            offset += k;
        }
        Ok(score)
    }
}

struct MarginalParts {
    c: Coefficients,
    s2: f64,
    s2_dot: f64,
    mean: Vec<f64>,
    b0: Vec<Block>,
    b1: Vec<Block>,
    cov: Vec<Block>,
}

impl MarginalParts {
    fn new(cfg: &InterpolantConfig, q0: &GaussianSpec, q1: &GaussianSpec, t: f64) -> Result<Self> {
        q0.validate()?;
        q1.validate()?;
        if q0.dim() != q1.dim() {
            return Err(shape_err(format!("endpoint dimensions {} and {} differ", q0.dim(), q1.dim())));
        }
        let c = cfg.schedule.eval(t)?;
        let (s2, s2_dot) = cfg.sigma2_with(t, &c);
        let paired = q0.covariance.is_paired() || q1.covariance.is_paired();
        let b0 = q0.blocks(paired);
        let b1 = q1.blocks(paired);
        let cov = b0
            .iter()
            .zip(&b1)
            .map(|(a, b)| Block::combine(c.alpha * c.alpha, a, c.beta * c.beta, b, s2))
            .collect();
        let mean = q0.mean.iter().zip(&q1.mean).map(|(a, b)| c.alpha * a + c.beta * b).collect();
        Ok(Self { c, s2, s2_dot, mean, b0, b1, cov })
    }
}
