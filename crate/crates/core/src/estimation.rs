//! From time scores to numbers.
//!
//! `log r(x) = integral_0^1 s(x, t) dt` is computed by one of three
//! integrators. The integrand does not depend on its own running value, so
//! Gauss-Legendre quadrature is exact to high polynomial order; RK4 and the
//! adaptive Dormand-Prince pair are kept for evaluation-count comparisons.
//! Every score evaluation at one `(x, t)` counts as one NFE.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::{Batch, GaussianSpec};
use crate::error::{config_err, shape_err, Error, Result};
use crate::interpolants::InterpolantConfig;
use crate::scorenet::ScoreModel;

/// Anything that yields `s(x, t)` for one point at several times.
pub trait TimeScore {
    fn dim(&self) -> usize;
    fn time_scores(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>>;
}

impl TimeScore for ScoreModel {
    fn dim(&self) -> usize {
        self.config().input_dim
    }

    fn time_scores(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        self.time_scores_at(x, ts)
    }
}

/// Exact marginal time score for independent Gaussian endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub interpolant: InterpolantConfig,
    pub q0: GaussianSpec,
    pub q1: GaussianSpec,
}

impl GaussianOracle {
    pub fn new(interpolant: InterpolantConfig, q0: GaussianSpec, q1: GaussianSpec) -> Result<Self> {
        interpolant.validate()?;
        q0.validate()?;
        q1.validate()?;
        if q0.dim() != q1.dim() {
            return Err(shape_err("oracle endpoints differ in dimension"));
        }
        Ok(Self { interpolant, q0, q1 })
    }
}

impl TimeScore for GaussianOracle {
    fn dim(&self) -> usize {
        self.q0.dim()
    }

    fn time_scores(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        ts.iter()
            .map(|&t| self.interpolant.gaussian_marginal_time_score(&self.q0, &self.q1, t, x))
            .collect()
    }
}

/// A closure `s(x, t)` in `dim` dimensions.
pub struct FnScore<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], f64) -> f64> TimeScore for FnScore<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn time_scores(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        Ok(ts.iter().map(|&t| (self.f)(x, t)).collect())
    }
}

fn default_nodes() -> usize {
    64
}

fn default_steps() -> usize {
    128
}

fn default_rtol() -> f64 {
    1e-5
}

fn default_atol() -> f64 {
    1e-7
}

fn default_max_steps() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrator {
    GaussLegendre {
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    Rk4 {
        #[serde(default = "default_steps")]
        steps: usize,
    },
    Rk45 {
        #[serde(default = "default_rtol")]
        rtol: f64,
        #[serde(default = "default_atol")]
        atol: f64,
        #[serde(default = "default_max_steps")]
        max_steps: usize,
    },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::GaussLegendre { nodes: default_nodes() }
    }
}

impl Integrator {
    pub fn rk45() -> Self {
        Integrator::Rk45 { rtol: default_rtol(), atol: default_atol(), max_steps: default_max_steps() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Integrator::GaussLegendre { nodes } if nodes == 0 => Err(config_err("Gauss-Legendre needs >= 1 node")),
            Integrator::Rk4 { steps } if steps == 0 => Err(config_err("RK4 needs >= 1 step")),
            Integrator::Rk45 { rtol, atol, max_steps } if !(rtol > 0.0 && atol > 0.0 && max_steps > 0) => {
                Err(config_err("RK45 needs positive tolerances and max_steps"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Integrator::GaussLegendre { .. } => "gauss_legendre",
            Integrator::Rk4 { .. } => "rk4",
            Integrator::Rk45 { .. } => "rk45",
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(config_err("Gauss-Legendre needs >= 1 node"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// Integral value and the number of score evaluations spent on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub nfe: usize,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45<S: TimeScore + ?Sized>(score: &S, x: &[f64], rtol: f64, atol: f64, max_steps: usize) -> Result<Estimate> {
    let mut t = 0.0;
    let mut y = 0.0;
    let mut h = 0.05;
    let mut first = score.time_scores(x, &[0.0])?[0];
    let mut nfe = 1;
    for _ in 0..max_steps {
        if t >= 1.0 - 1e-14 {
            return Ok(Estimate { value: y, nfe });
        }
        h = h.min(1.0 - t);
        if h < 1e-12 {
            return Err(Error::StepUnderflow { t, partial: y, nfe });
        }
        let ts: Vec<f64> = DP_C[1..].iter().map(|c| (t + c * h).min(1.0)).collect();
        let rest = score.time_scores(x, &ts)?;
        nfe += ts.len();
        let k = |i: usize| if i == 0 { first } else { rest[i - 1] };
        let y5 = y + h * (0..7).map(|i| DP_B5[i] * k(i)).sum::<f64>();
        let y4 = y + h * (0..7).map(|i| DP_B4[i] * k(i)).sum::<f64>();
        if !(y5.is_finite() && y4.is_finite()) {
            return Err(Error::NonFinite("adaptive integral"));
        }
        let scale = atol + rtol * y.abs().max(y5.abs());
        let ratio = (y5 - y4).abs() / scale;
        if ratio <= 1.0 {
            t += h;
            y = y5;
            first = rest[5];
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    if t >= 1.0 - 1e-14 {
        Ok(Estimate { value: y, nfe })
    } else {
        Err(Error::StepUnderflow { t, partial: y, nfe })
    }
}

/// `integral_0^1 s(x, t) dt`.
pub fn integrate_logratio<S: TimeScore + ?Sized>(score: &S, x: &[f64], integ: &Integrator) -> Result<Estimate> {
    integ.validate()?;
    if x.len() != score.dim() {
        return Err(shape_err(format!("point has dimension {}, score expects {}", x.len(), score.dim())));
    }
    let est = match *integ {
        Integrator::GaussLegendre { nodes } => {
            let (ts, ws) = gauss_legendre(nodes)?;
            let s = score.time_scores(x, &ts)?;
            Estimate { value: s.iter().zip(&ws).map(|(a, w)| a * w).sum(), nfe: nodes }
        }
        Integrator::Rk4 { steps } => {
            let h = 1.0 / steps as f64;
            let ts: Vec<f64> = (0..steps)
                .flat_map(|i| {
                    let t = i as f64 * h;
                    [t, t + 0.5 * h, t + 0.5 * h, ((i + 1) as f64 * h).min(1.0)]
                })
                .collect();
            let s = score.time_scores(x, &ts)?;
            let value = s.chunks(4).map(|k| h * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]) / 6.0).sum();
            Estimate { value, nfe: 4 * steps }
        }
        Integrator::Rk45 { rtol, atol, max_steps } => rk45(score, x, rtol, atol, max_steps)?,
    };
    if !est.value.is_finite() {
        return Err(Error::NonFinite("log ratio"));
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfeStats {
    pub min: usize,
    pub median: f64,
    pub mean: f64,
    pub max: usize,
}

impl NfeStats {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(config_err("no evaluation counts"));
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] as f64 } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64 };
        Ok(Self {
            min: sorted[0],
            median,
            mean: sorted.iter().sum::<usize>() as f64 / n as f64,
            max: sorted[n - 1],
        })
    }
}

/// Per-point log ratios with their evaluation counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub log_ratios: Vec<f64>,
    pub nfe: Vec<usize>,
    pub integrator: Integrator,
}

impl EstimateReport {
    pub fn nfe_stats(&self) -> Result<NfeStats> {
        NfeStats::from_counts(&self.nfe)
    }
}

pub fn integrate_batch<S: TimeScore + ?Sized>(score: &S, points: &Batch, integ: &Integrator) -> Result<EstimateReport> {
    let mut log_ratios = Vec::with_capacity(points.len());
    let mut nfe = Vec::with_capacity(points.len());
    for x in points.rows() {
        let e = integrate_logratio(score, x, integ)?;
        log_ratios.push(e.value);
        nfe.push(e.nfe);
    }
    Ok(EstimateReport { log_ratios, nfe, integrator: *integ })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub nfe: NfeStats,
}

/// `MI = E_{x ~ q1}[log r(x)]` where `q1` is the joint and `q0` the product
/// of marginals.
pub fn estimate_mi<S: TimeScore + ?Sized>(score: &S, samples: &Batch, integ: &Integrator) -> Result<MiReport> {
    let report = integrate_batch(score, samples, integ)?;
    let n = samples.len();
    let mean = report.log_ratios.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = report.log_ratios.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MiReport { estimate: mean, stderr, n, nfe: report.nfe_stats()? })
}

/// `log q1(x) = log r(x) + log q0(x)` for an analytic `q0`.
pub fn log_density<S: TimeScore + ?Sized>(score: &S, x: &[f64], q0: &GaussianSpec, integ: &Integrator) -> Result<f64> {
    Ok(integrate_logratio(score, x, integ)?.value + q0.log_pdf(x)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width, nx: resolution, ny: resolution }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x_min.is_finite()
            && self.x_max.is_finite()
            && self.y_min.is_finite()
            && self.y_max.is_finite()
            && self.x_max > self.x_min
            && self.y_max > self.y_min
            && self.nx >= 2
            && self.ny >= 2;
        if ok {
            Ok(())
        } else {
            Err(config_err("grid bounds must be increasing and resolution >= 2 per axis"))
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        linspace(self.y_min, self.y_max, self.ny)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Log densities on a 2-D grid, row-major with `y` as the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub log_density: Vec<f64>,
    pub nfe: Vec<usize>,
}

impl DensityGrid {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.log_density[iy * self.spec.nx + ix]
    }

    /// Trapezoid-rule integral of `exp(log_density)` over the grid.
    pub fn integral(&self) -> f64 {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let dx = (self.spec.x_max - self.spec.x_min) / (nx - 1) as f64;
        let dy = (self.spec.y_max - self.spec.y_min) / (ny - 1) as f64;
        let edge = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut total = 0.0;
        for iy in 0..ny {
            for ix in 0..nx {
                total += edge(ix, nx) * edge(iy, ny) * self.get(ix, iy).exp();
            }
        }
        total * dx * dy
    }
}

pub fn density_grid<S: TimeScore + ?Sized>(
    score: &S,
    q0: &GaussianSpec,
    spec: &GridSpec,
    integ: &Integrator,
) -> Result<DensityGrid> {
    spec.validate()?;
    if score.dim() != 2 || q0.dim() != 2 {
        return Err(shape_err("density grids are two-dimensional"));
    }
    let (xs, ys) = (spec.xs(), spec.ys());
    let mut log_density = Vec::with_capacity(xs.len() * ys.len());
    let mut nfe = Vec::with_capacity(xs.len() * ys.len());
    for y in &ys {
        for x in &xs {
            let p = [*x, *y];
            let e = integrate_logratio(score, &p, integ)?;
            log_density.push(e.value + q0.log_pdf(&p)?);
            nfe.push(e.nfe);
        }
    }
    Ok(DensityGrid { spec: *spec, log_density, nfe })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Covariance;
    use crate::interpolants::Schedule;
    use crate::rng::{stream, Stream};

    fn all_integrators() -> [Integrator; 3] {
        [Integrator::default(), Integrator::Rk4 { steps: 128 }, Integrator::rk45()]
    }

    fn unit_oracle() -> GaussianOracle {
        GaussianOracle::new(
            InterpolantConfig::dbi(Schedule::Linear, 0.5),
            GaussianSpec::isotropic(vec![0.0], 1.0).unwrap(),
            GaussianSpec::isotropic(vec![1.0], 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1, 2, 5, 64] {
            let (ts, ws) = gauss_legendre(n).unwrap();
            assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
            for k in 0..(2 * n).min(40) {
                let q: f64 = ts.iter().zip(&ws).map(|(t, w)| w * t.powi(k as i32)).sum();
                assert!((q - 1.0 / (k + 1) as f64).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn constant_and_linear_integrands() {
        let c = FnScore { dim: 1, f: |_: &[f64], _t: f64| 2.5 };
        let lin = FnScore { dim: 1, f: |_: &[f64], t: f64| t };
        for integ in all_integrators() {
            assert!((integrate_logratio(&c, &[0.0], &integ).unwrap().value - 2.5).abs() < 1e-12);
            assert!((integrate_logratio(&lin, &[0.0], &integ).unwrap().value - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn nfe_accounting() {
        let c = FnScore { dim: 1, f: |_: &[f64], _t: f64| 1.0 };
        assert_eq!(integrate_logratio(&c, &[0.0], &Integrator::GaussLegendre { nodes: 17 }).unwrap().nfe, 17);
        assert_eq!(integrate_logratio(&c, &[0.0], &Integrator::Rk4 { steps: 9 }).unwrap().nfe, 36);
        assert!(integrate_logratio(&c, &[0.0], &Integrator::rk45()).unwrap().nfe >= 7);
    }

    #[test]
    fn oracle_integral_is_log_ratio() {
        let o = unit_oracle();
        for integ in all_integrators() {
            let v = integrate_logratio(&o, &[0.0], &integ).unwrap().value;
            assert!((v + 0.5).abs() < 1e-6, "{integ:?}: {v}");
        }
        for i in 0..50 {
            let x = -3.0 + 7.0 * i as f64 / 49.0;
            let v = integrate_logratio(&o, &[x], &Integrator::default()).unwrap().value;
            assert!((v - (x - 0.5)).abs() < 1e-6);
        }
    }

    #[test]
    fn adaptive_step_limit_reports_partial_integral() {
        let wiggle = FnScore { dim: 1, f: |_: &[f64], t: f64| (200.0 * t).sin() * 50.0 };
        let integ = Integrator::Rk45 { rtol: 1e-10, atol: 1e-12, max_steps: 3 };
        match integrate_logratio(&wiggle, &[0.0], &integ) {
            Err(Error::StepUnderflow { t, nfe, .. }) => assert!(t < 1.0 && nfe > 0),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn mi_of_identical_endpoints_is_zero() {
        let q = GaussianSpec::standard(2).unwrap();
        let o = GaussianOracle::new(InterpolantConfig::dbi(Schedule::Linear, 0.5), q.clone(), q.clone()).unwrap();
        let samples = q.sample(100, &mut stream(0, Stream::Eval)).unwrap();
        let r = estimate_mi(&o, &samples, &Integrator::default()).unwrap();
        assert!(r.estimate.abs() < 1e-12);
    }

    #[test]
    fn oracle_mi_matches_closed_form() {
        let q1 = GaussianSpec::correlated_pairs(8, 0.8).unwrap();
        let q0 = GaussianSpec::standard(8).unwrap();
        let truth = -(8.0 / 4.0) * (1.0f64 - 0.64).ln();
        assert!((truth - 2.0433).abs() < 1e-4);
        let o = GaussianOracle::new(InterpolantConfig::dbi(Schedule::Linear, 0.5), q0, q1.clone()).unwrap();
        let samples = q1.sample(10_000, &mut stream(1, Stream::Eval)).unwrap();
        let r = estimate_mi(&o, &samples, &Integrator::GaussLegendre { nodes: 32 }).unwrap();
        assert!((r.estimate - truth).abs() < 3.0 * r.stderr, "{} +- {}", r.estimate, r.stderr);
        assert_eq!(r.nfe.median, 32.0);
    }

    #[test]
    fn log_density_examples() {
        let q0 = GaussianSpec::isotropic(vec![0.0], 1.0).unwrap();
        let zero = FnScore { dim: 1, f: |_: &[f64], _t: f64| 0.0 };
        let v = log_density(&zero, &[0.7], &q0, &Integrator::default()).unwrap();
        assert_eq!(v, q0.log_pdf(&[0.7]).unwrap());
        let v = log_density(&unit_oracle(), &[1.0], &q0, &Integrator::default()).unwrap();
        assert!((v + 0.918_938_533_2).abs() < 1e-6);
    }

    fn symmetric_oracle() -> GaussianOracle {
        GaussianOracle::new(
            InterpolantConfig::dbi(Schedule::Linear, 0.5),
            GaussianSpec::standard(2).unwrap(),
            GaussianSpec::new(vec![0.0, 0.0], Covariance::Diagonal(vec![0.5, 2.0])).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn density_grid_corners_and_symmetry() {
        let o = symmetric_oracle();
        let q0 = GaussianSpec::standard(2).unwrap();
        let integ = Integrator::default();
        let g = density_grid(&o, &q0, &GridSpec::square(2.0, 2), &integ).unwrap();
        assert_eq!(g.log_density.len(), 4);
        assert_eq!(g.get(1, 0), log_density(&o, &[2.0, -2.0], &q0, &integ).unwrap());
        let g = density_grid(&o, &q0, &GridSpec::square(3.0, 9), &integ).unwrap();
        for iy in 0..9 {
            for ix in 0..9 {
                assert!((g.get(ix, iy) - g.get(8 - ix, iy)).abs() < 1e-6);
                assert!((g.get(ix, iy) - g.get(ix, 8 - iy)).abs() < 1e-6);
            }
        }
        assert!(GridSpec::square(1.0, 1).validate().is_err());
    }

    #[test]
    fn oracle_density_grid_integrates_to_one() {
        let o = symmetric_oracle();
        let g = density_grid(&o, &GaussianSpec::standard(2).unwrap(), &GridSpec::square(7.0, 81), &Integrator::GaussLegendre { nodes: 16 })
            .unwrap();
        assert!((g.integral() - 1.0).abs() < 0.01, "{}", g.integral());
    }

    #[test]
    fn nfe_stats() {
        let s = NfeStats::from_counts(&[4, 1, 3, 2]).unwrap();
        assert_eq!((s.min, s.median, s.mean, s.max), (1, 2.5, 2.5, 4));
        assert!(NfeStats::from_counts(&[]).is_err());
    }

    #[test]
    fn integrator_validation() {
        assert!(Integrator::GaussLegendre { nodes: 0 }.validate().is_err());
        assert!(Integrator::Rk4 { steps: 0 }.validate().is_err());
        assert!(Integrator::Rk45 { rtol: 0.0, atol: 1e-7, max_steps: 10 }.validate().is_err());
        assert!(Integrator::rk45().validate().is_ok());
    }
}
