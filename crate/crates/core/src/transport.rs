//! Entropic optimal transport between mini-batches.
//!
//! [`sinkhorn`] solves
//!
//! ```text
//! min_P  sum_ij P_ij C_ij - reg * H(P)     s.t. P 1 = a, P^T 1 = b
//! ```
//!
//! in the log domain, with `H(P) = -sum P log P`. [`sample_coupling`] then
//! redraws endpoint pairs from the solution so that paired samples travel
//! along short, low-variance bridges.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::distributions::{dequantize, Batch};
use crate::error::{config_err, shape_err, Error, Result};
use crate::gemm::dot;
use crate::interpolants::{InterpolantConfig, InterpolantKind};

/// Pairwise squared Euclidean distances, row-major `n0 x n1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n0: usize,
    n1: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_data(n0: usize, n1: usize, data: Vec<f64>) -> Result<Self> {
        if n0 == 0 || n1 == 0 || data.len() != n0 * n1 {
            return Err(shape_err(format!("cost matrix {n0}x{n1} with {} entries", data.len())));
        }
        if data.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(config_err("cost entries must be finite and non-negative"));
        }
        Ok(Self { n0, n1, data })
    }

    pub fn rows(&self) -> usize {
        self.n0
    }

    pub fn cols(&self) -> usize {
        self.n1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n1 + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Largest entry, zero for an all-zero matrix.
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

pub fn cost_matrix(b0: &Batch, b1: &Batch) -> Result<CostMatrix> {
    if b0.dim() != b1.dim() {
        return Err(shape_err(format!("batch dimensions {} and {} differ", b0.dim(), b1.dim())));
    }
    let mut data = Vec::with_capacity(b0.len() * b1.len());
    for x in b0.rows() {
        for y in b1.rows() {
            data.push(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    CostMatrix::from_data(b0.len(), b1.len(), data)
}

/// Uniform weights `1/n`.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// A transport plan together with its target marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    n0: usize,
    n1: usize,
    p: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn check_marginal(w: &[f64], name: &str) -> Result<()> {
    if w.is_empty() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(config_err(format!("marginal {name} must be non-empty and strictly positive")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(config_err(format!("marginal {name} sums to {total}, expected 1")));
    }
    Ok(())
}

impl Coupling {
    /// Builds a plan from explicit entries; entries must be non-negative.
    pub fn new(n0: usize, n1: usize, p: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if p.len() != n0 * n1 || a.len() != n0 || b.len() != n1 {
            return Err(shape_err("coupling entries and marginals disagree in size"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(config_err("coupling entries must be finite and non-negative"));
        }
        Ok(Self { n0, n1, p, a, b })
    }

    /// The product plan `a b^T`.
    pub fn independent(a: &[f64], b: &[f64]) -> Result<Self> {
        check_marginal(a, "a")?;
        check_marginal(b, "b")?;
        let p = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        Self::new(a.len(), b.len(), p, a.to_vec(), b.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.n0
    }

    pub fn cols(&self) -> usize {
        self.n1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n1 + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.p
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.p.chunks(self.n1).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n1];
        for r in self.p.chunks(self.n1) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    /// L1 distance of both marginals from their targets.
    pub fn marginal_error(&self) -> f64 {
        let rows: f64 = self.row_sums().iter().zip(&self.a).map(|(s, t)| (s - t).abs()).sum();
        let cols: f64 = self.col_sums().iter().zip(&self.b).map(|(s, t)| (s - t).abs()).sum();
        rows + cols
    }

    /// `H(P) = -sum P log P` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    /// `sum P C`
    pub fn expected_cost(&self, cost: &CostMatrix) -> Result<f64> {
        if cost.rows() != self.n0 || cost.cols() != self.n1 {
            return Err(shape_err("cost and coupling sizes differ"));
        }
        Ok(self.p.iter().zip(cost.data()).map(|(p, c)| p * c).sum())
    }
}

/// `sum P C - reg H(P)`
pub fn entropic_objective(p: &Coupling, cost: &CostMatrix, reg: f64) -> Result<f64> {
    Ok(p.expected_cost(cost)? - reg * p.entropy())
}

fn default_max_iter() -> usize {
    1000
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornOptions {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once the L1 marginal error falls below this.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { max_iter: default_max_iter(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    pub iterations: usize,
    pub marginal_error: f64,
    /// False when `max_iter` ran out before reaching `tol`; the plan is still usable.
    pub converged: bool,
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-scale bound on the scaling vectors before they are absorbed into the potentials.
const ABSORB_AT: f64 = 30.0;

/// Sinkhorn iterations stabilized in the log domain.
///
/// The plan is `P_ij = exp(u_i - C_ij / reg + v_j) * alpha_i * beta_j`. Each
/// round starts with an exact log-sum-exp update of `(u, v)`, then runs
/// scaling updates of `(alpha, beta)` against the fixed kernel
/// `exp(u_i - C_ij / reg + v_j)`. When a scaling drifts past `exp(30)` or
/// `exp(-30)` it is folded into `(u, v)` and the kernel is rebuilt, so nothing
/// underflows however small `reg` is. Every update of both marginals counts as
/// one iteration.
pub fn sinkhorn(cost: &CostMatrix, a: &[f64], b: &[f64], reg: f64, opts: &SinkhornOptions) -> Result<SinkhornResult> {
    if !(reg.is_finite() && reg > 0.0) {
        return Err(config_err(format!("Sinkhorn regularization must be positive, got {reg}")));
    }
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(config_err("Sinkhorn needs max_iter >= 1 and tol > 0"));
    }
    check_marginal(a, "a")?;
    check_marginal(b, "b")?;
    let (n0, n1) = (cost.rows(), cost.cols());
    if a.len() != n0 || b.len() != n1 {
        return Err(shape_err("marginal lengths do not match the cost matrix"));
    }
    let k: Vec<f64> = cost.data().iter().map(|c| -c / reg).collect();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut u = vec![0.0; n0];
    let mut v = vec![0.0; n1];
    let mut kernel = vec![0.0; n0 * n1];
    let mut lse = vec![0.0; n0];
    let mut col_lse = vec![0.0; n1];
    let mut col_max = vec![f64::NEG_INFINITY; n1];
    let (mut alpha, mut beta) = (vec![1.0; n0], vec![1.0; n1]);
    let (mut row_sum, mut col_sum) = (vec![0.0; n0], vec![0.0; n1]);
    let mut error = f64::INFINITY;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iter {
        // Exact log-domain update of both potentials.
        for i in 0..n0 {
            let row = &k[i * n1..(i + 1) * n1];
            lse[i] = logsumexp(row.iter().zip(&v).map(|(kij, vj)| kij + vj));
        }
        if iterations > 0 {
            error = (0..n0).map(|i| ((u[i] + lse[i]).exp() - a[i]).abs()).sum();
            if !error.is_finite() {
                return Err(Error::NonFinite("Sinkhorn potentials"));
            }
            if error < opts.tol {
                break;
            }
        }
        for i in 0..n0 {
            u[i] = log_a[i] - lse[i];
        }
        col_max.fill(f64::NEG_INFINITY);
        for i in 0..n0 {
            for (m, kij) in col_max.iter_mut().zip(&k[i * n1..(i + 1) * n1]) {
                *m = m.max(kij + u[i]);
            }
        }
        col_lse.fill(0.0);
        for i in 0..n0 {
            for ((s, kij), m) in col_lse.iter_mut().zip(&k[i * n1..(i + 1) * n1]).zip(&col_max) {
                *s += (kij + u[i] - m).exp();
            }
        }
        for j in 0..n1 {
            v[j] = log_b[j] - (col_max[j] + col_lse[j].ln());
        }
        iterations += 1;

        // Scaling updates against the frozen kernel.
        for i in 0..n0 {
            for ((slot, kij), vj) in kernel[i * n1..(i + 1) * n1].iter_mut().zip(&k[i * n1..(i + 1) * n1]).zip(&v) {
                *slot = (u[i] + kij + vj).exp();
            }
        }
        alpha.fill(1.0);
        beta.fill(1.0);
        loop {
            for i in 0..n0 {
                row_sum[i] = dot(&kernel[i * n1..(i + 1) * n1], &beta);
            }
            error = (0..n0).map(|i| (alpha[i] * row_sum[i] - a[i]).abs()).sum();
            if !error.is_finite() {
                return Err(Error::NonFinite("Sinkhorn scalings"));
            }
            if error < opts.tol || iterations >= opts.max_iter {
                absorb(&mut u, &alpha);
                absorb(&mut v, &beta);
                break 'outer;
            }
            for i in 0..n0 {
                alpha[i] = a[i] / row_sum[i];
            }
            col_sum.fill(0.0);
            for i in 0..n0 {
                for (c, x) in col_sum.iter_mut().zip(&kernel[i * n1..(i + 1) * n1]) {
                    *c += alpha[i] * x;
                }
            }
            for j in 0..n1 {
                beta[j] = b[j] / col_sum[j];
            }
            iterations += 1;
            let bound = |s: &f64| !(s.is_finite() && s.abs().ln().abs() < ABSORB_AT);
            if alpha.iter().any(bound) || beta.iter().any(bound) {
                absorb(&mut u, &alpha);
                absorb(&mut v, &beta);
                continue 'outer;
            }
        }
    }
    let mut p = Vec::with_capacity(n0 * n1);
    for i in 0..n0 {
        for j in 0..n1 {
            p.push((u[i] + k[i * n1 + j] + v[j]).exp());
        }
    }
    let coupling = Coupling::new(n0, n1, p, a.to_vec(), b.to_vec())?;
    let marginal_error = coupling.marginal_error();
    Ok(SinkhornResult { coupling, iterations, marginal_error, converged: error < opts.tol })
}

fn absorb(potential: &mut [f64], scaling: &[f64]) {
    for (p, s) in potential.iter_mut().zip(scaling) {
        if *s > 0.0 && s.is_finite() {
            *p += s.ln();
        }
    }
}

/// Draws `n` index pairs `(i, j)` with probability `P_ij`, with replacement.
pub fn sample_pairs<R: Rng + ?Sized>(p: &Coupling, n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let dist = WeightedIndex::new(p.data()).map_err(|e| config_err(format!("coupling cannot be sampled: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let k = dist.sample(rng);
            (k / p.cols(), k % p.cols())
        })
        .collect())
}

/// Re-paired endpoint batches `(x0_hat, x1_hat)` of `n` rows drawn from `p`.
pub fn sample_coupling<R: Rng + ?Sized>(
    p: &Coupling,
    b0: &Batch,
    b1: &Batch,
    n: usize,
    rng: &mut R,
) -> Result<(Batch, Batch)> {
    if b0.len() != p.rows() || b1.len() != p.cols() {
        return Err(shape_err("batch sizes do not match the coupling"));
    }
    let pairs = sample_pairs(p, n, rng)?;
    let i0: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let i1: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    Ok((b0.select(&i0)?, b1.select(&i1)?))
}

/// Entropic transport loss of the pairing each interpolant implies on one batch.
///
/// | kind | points | plan | `reg` |
/// |------|--------|------|-------|
/// | DI   | raw | `a b^T` | 0 |
/// | DBI  | raw | `a b^T` | `2 gamma^2` |
/// | DDBI | dequantized | `a b^T` | `2 gamma^2` |
/// | DSBI | dequantized | Sinkhorn | `2 gamma^2` |
pub fn transport_loss<R: Rng + ?Sized>(
    cfg: &InterpolantConfig,
    x0: &Batch,
    x1: &Batch,
    opts: &SinkhornOptions,
    rng: &mut R,
) -> Result<TransportReport> {
    cfg.validate()?;
    let reg = 2.0 * cfg.effective_gamma2();
    let eps = cfg.effective_eps();
    let (y0, y1) = (dequantize(x0, eps, rng)?, dequantize(x1, eps, rng)?);
    let cost = cost_matrix(&y0, &y1)?;
    let (a, b) = (uniform(cost.rows()), uniform(cost.cols()));
    let (plan, iterations, converged) = if cfg.kind == InterpolantKind::Dsbi {
        let r = sinkhorn(&cost, &a, &b, reg, opts)?;
        (r.coupling, r.iterations, r.converged)
    } else {
        (Coupling::independent(&a, &b)?, 0, true)
    };
    Ok(TransportReport {
        objective: entropic_objective(&plan, &cost, reg)?,
        expected_cost: plan.expected_cost(&cost)?,
        entropy: plan.entropy(),
        marginal_error: plan.marginal_error(),
        reg,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub objective: f64,
    pub expected_cost: f64,
    pub entropy: f64,
    pub marginal_error: f64,
    pub reg: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand_distr::StandardNormal;

    fn swap_cost() -> CostMatrix {
        CostMatrix::from_data(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn random_batch(n: usize, d: usize, shift: f64, seed: u64) -> Batch {
        let mut rng = stream(seed, Stream::Data);
        let data = (0..n * d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        Batch::new(n, d, data).unwrap()
    }

    #[test]
    fn cost_matrix_small_cases() {
        let b = Batch::from_rows(&[[0.0], [1.0]]).unwrap();
        assert_eq!(cost_matrix(&b, &b).unwrap(), swap_cost());
        let x = random_batch(7, 3, 0.0, 1);
        let y = random_batch(5, 3, 1.0, 2);
        let c = cost_matrix(&x, &y).unwrap();
        let cx = cost_matrix(&x, &x).unwrap();
        for i in 0..7 {
            assert_eq!(cx.get(i, i), 0.0);
            for j in 0..5 {
                let mut direct = 0.0;
                for k in 0..3 {
                    direct += (x.row(i)[k] - y.row(j)[k]).powi(2);
                }
                assert!((c.get(i, j) - direct).abs() < 1e-12);
            }
        }
        assert!(cost_matrix(&x, &random_batch(2, 2, 0.0, 3)).is_err());
    }

    #[test]
    fn large_reg_gives_uniform_plan() {
        let r = sinkhorn(&swap_cost(), &uniform(2), &uniform(2), 1e3, &SinkhornOptions::default()).unwrap();
        assert!(r.converged);
        for v in r.coupling.data() {
            assert!((v - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn small_reg_matches_brute_force() {
        // Feasible plans with uniform marginals: [[p, 1/2 - p], [1/2 - p, p]].
        for reg in [0.01, 0.3, 1.0] {
            let objective = |p: f64| {
                let plan = Coupling::new(2, 2, vec![p, 0.5 - p, 0.5 - p, p], uniform(2), uniform(2)).unwrap();
                entropic_objective(&plan, &swap_cost(), reg).unwrap()
            };
            let best = (0..=100_000)
                .map(|k| 0.5 * k as f64 / 100_000.0)
                .min_by(|x, y| objective(*x).partial_cmp(&objective(*y)).unwrap())
                .unwrap();
            let r = sinkhorn(&swap_cost(), &uniform(2), &uniform(2), reg, &SinkhornOptions::default()).unwrap();
            assert!((r.coupling.get(0, 0) - best).abs() < 1e-4, "reg {reg}: {} vs {best}", r.coupling.get(0, 0));
        }
        let r = sinkhorn(&swap_cost(), &uniform(2), &uniform(2), 0.01, &SinkhornOptions::default()).unwrap();
        assert!(r.coupling.get(0, 1) < 1e-3 && (r.coupling.get(0, 0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn marginals_respected_nonuniform() {
        let x = random_batch(20, 2, 0.0, 4);
        let y = random_batch(30, 2, 2.0, 5);
        let c = cost_matrix(&x, &y).unwrap();
        let raw_a: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let sa: f64 = raw_a.iter().sum();
        let a: Vec<f64> = raw_a.iter().map(|v| v / sa).collect();
        let r = sinkhorn(&c, &a, &uniform(30), 0.5, &SinkhornOptions::default()).unwrap();
        assert!(r.converged && r.marginal_error < 1e-6);
        for (s, t) in r.coupling.row_sums().iter().zip(&a) {
            assert!((s - t).abs() < 1e-6);
        }
        let total: f64 = r.coupling.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    /// Plain log-domain Sinkhorn, one full update per iteration.
    fn reference_sinkhorn(c: &CostMatrix, reg: f64, iters: usize) -> Vec<f64> {
        let (n0, n1) = (c.rows(), c.cols());
        let (la, lb) = ((1.0 / n0 as f64).ln(), (1.0 / n1 as f64).ln());
        let (mut u, mut v) = (vec![0.0; n0], vec![0.0; n1]);
        for _ in 0..iters {
            for i in 0..n0 {
                u[i] = la - logsumexp((0..n1).map(|j| v[j] - c.get(i, j) / reg));
            }
            for j in 0..n1 {
                v[j] = lb - logsumexp((0..n0).map(|i| u[i] - c.get(i, j) / reg));
            }
        }
        (0..n0).flat_map(|i| (0..n1).map(move |j| (i, j))).map(|(i, j)| (u[i] + v[j] - c.get(i, j) / reg).exp()).collect()
    }

    #[test]
    fn matches_plain_log_domain_iterations() {
        let x = random_batch(30, 2, 0.0, 14);
        let y = random_batch(25, 2, 2.0, 15);
        let c = cost_matrix(&x, &y).unwrap();
        for (reg, iters) in [(1.0, 7), (0.05, 40), (0.01, 300)] {
            let opts = SinkhornOptions { max_iter: iters, tol: 1e-300 };
            let r = sinkhorn(&c, &uniform(30), &uniform(25), reg, &opts).unwrap();
            assert_eq!(r.iterations, iters);
            let reference = reference_sinkhorn(&c, reg, iters);
            for (p, q) in r.coupling.data().iter().zip(&reference) {
                assert!((p - q).abs() < 1e-10, "reg {reg}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn tiny_regularization_stays_finite() {
        let x = random_batch(40, 2, 0.0, 12);
        let y = random_batch(40, 2, 2.0, 13);
        let c = cost_matrix(&x, &y).unwrap();
        let opts = SinkhornOptions { max_iter: 20_000, tol: 1e-8 };
        let indep = Coupling::independent(&uniform(40), &uniform(40)).unwrap();
        let r = sinkhorn(&c, &uniform(40), &uniform(40), 0.2, &opts).unwrap();
        assert!(r.converged && r.marginal_error < 1e-6, "{} after {}", r.marginal_error, r.iterations);
        // Far below the cost scale convergence is slow, but every iterate stays finite.
        let r = sinkhorn(&c, &uniform(40), &uniform(40), 1e-3, &SinkhornOptions { max_iter: 2000, tol: 1e-8 }).unwrap();
        assert!(r.coupling.data().iter().all(|p| p.is_finite()));
        assert!(r.marginal_error.is_finite() && !r.converged);
        assert!(entropic_objective(&r.coupling, &c, 1e-3).unwrap() < entropic_objective(&indep, &c, 1e-3).unwrap());
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let x = random_batch(30, 2, 0.0, 6);
        let y = random_batch(30, 2, 3.0, 7);
        let c = cost_matrix(&x, &y).unwrap();
        let opts = SinkhornOptions { max_iter: 1, tol: 1e-14 };
        let r = sinkhorn(&c, &uniform(30), &uniform(30), 0.05, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.marginal_error > 0.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        let o = SinkhornOptions::default();
        assert!(sinkhorn(&swap_cost(), &uniform(2), &uniform(2), 0.0, &o).is_err());
        assert!(sinkhorn(&swap_cost(), &[0.7, 0.7], &uniform(2), 1.0, &o).is_err());
        assert!(sinkhorn(&swap_cost(), &[1.0, 0.0], &uniform(2), 1.0, &o).is_err());
        assert!(sinkhorn(&swap_cost(), &uniform(3), &uniform(2), 1.0, &o).is_err());
    }

    #[test]
    fn objective_closed_forms() {
        let zero = CostMatrix::from_data(2, 2, vec![0.0; 4]).unwrap();
        let u = Coupling::independent(&uniform(2), &uniform(2)).unwrap();
        assert!((entropic_objective(&u, &zero, 1.0).unwrap() + 4f64.ln()).abs() < 1e-12);
        let diag = Coupling::new(2, 2, vec![0.5, 0.0, 0.0, 0.5], uniform(2), uniform(2)).unwrap();
        assert_eq!(entropic_objective(&diag, &swap_cost(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_plan_pairs_only_matching_indices() {
        let diag = Coupling::new(2, 2, vec![0.5, 0.0, 0.0, 0.5], uniform(2), uniform(2)).unwrap();
        let pairs = sample_pairs(&diag, 1000, &mut stream(0, Stream::Transport)).unwrap();
        assert!(pairs.iter().all(|(i, j)| i == j));
    }

    #[test]
    fn uniform_plan_pair_frequencies() {
        let u = Coupling::independent(&uniform(2), &uniform(2)).unwrap();
        let n = 10_000;
        let pairs = sample_pairs(&u, n, &mut stream(1, Stream::Transport)).unwrap();
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        for target in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let f = pairs.iter().filter(|p| **p == target).count() as f64 / n as f64;
            assert!((f - 0.25).abs() < 3.0 * sd, "{target:?}: {f}");
        }
    }

    #[test]
    fn coupled_batches_keep_rows_intact() {
        let x = random_batch(8, 2, 0.0, 8);
        let y = random_batch(8, 2, 1.0, 9);
        let c = cost_matrix(&x, &y).unwrap();
        let r = sinkhorn(&c, &uniform(8), &uniform(8), 1.0, &SinkhornOptions::default()).unwrap();
        let (x_hat, y_hat) = sample_coupling(&r.coupling, &x, &y, 50, &mut stream(2, Stream::Transport)).unwrap();
        assert_eq!((x_hat.len(), y_hat.len()), (50, 50));
        for row in x_hat.rows() {
            assert!(x.rows().any(|r| r == row));
        }
    }

    #[test]
    fn fig1_style_ordering() {
        let x0 = random_batch(128, 2, 0.0, 10);
        let x1 = random_batch(128, 2, 3.0, 11);
        let opts = SinkhornOptions::default();
        let loss = |cfg: InterpolantConfig| transport_loss(&cfg, &x0, &x1, &opts, &mut stream(3, Stream::Transport)).unwrap().objective;
        let schedule = crate::interpolants::Schedule::Linear;
        let di = loss(InterpolantConfig::di(schedule.clone()));
        let dbi = loss(InterpolantConfig::dbi(schedule.clone(), 0.5));
        let ddbi = loss(InterpolantConfig::ddbi(schedule, 0.5, 1e-5));
        let dsbi = loss(InterpolantConfig::dsbi(0.5, 1e-5));
        assert!(dsbi < dbi && dbi < di && ddbi < di, "{di} {dbi} {ddbi} {dsbi}");
        assert!((dbi - ddbi).abs() < 0.01 * dbi.abs());
    }
}
