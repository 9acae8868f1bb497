use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::error::{config_err, shape_err, Result};

/// Covariance structures with closed-form inverses and determinants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// `v * I`
    Scalar(f64),
    /// `diag(v)`
    Diagonal(Vec<f64>),
    /// 2x2 blocks `[[a, b], [b, c]]` stored as `[a, b, c]`, one per coordinate pair.
    BlockDiagonal(Vec<[f64; 3]>),
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

/// A diagonal block of a covariance matrix, either 1x1 or symmetric 2x2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Block {
    One(f64),
    Two([f64; 3]),
}

impl Block {
    pub(crate) fn size(&self) -> usize {
        match self {
            Block::One(_) => 1,
            Block::Two(_) => 2,
        }
    }

    fn positive_definite(&self) -> bool {
        match *self {
            Block::One(v) => v > 0.0 && v.is_finite(),
            Block::Two([a, b, c]) => {
                a > 0.0 && c > 0.0 && a * c - b * b > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()
            }
        }
    }

    pub(crate) fn log_det(&self) -> f64 {
        match *self {
            Block::One(v) => v.ln(),
            Block::Two([a, b, c]) => (a * c - b * b).ln(),
        }
    }

    pub(crate) fn inverse(&self) -> Block {
        match *self {
            Block::One(v) => Block::One(1.0 / v),
            Block::Two([a, b, c]) => {
                let det = a * c - b * b;
                Block::Two([c / det, -b / det, a / det])
            }
        }
    }

    /// `M v` for a vector of the block's size.
    pub(crate) fn apply(&self, v: &[f64]) -> [f64; 2] {
        match *self {
            Block::One(m) => [m * v[0], 0.0],
            Block::Two([a, b, c]) => [a * v[0] + b * v[1], b * v[0] + c * v[1]],
        }
    }

    /// `v^T M v`
    pub(crate) fn quad(&self, v: &[f64]) -> f64 {
        let mv = self.apply(v);
        (0..self.size()).map(|i| v[i] * mv[i]).sum()
    }

    /// `tr(self * other)` for blocks of equal size.
    pub(crate) fn trace_product(&self, other: &Block) -> f64 {
        match (*self, *other) {
            (Block::One(x), Block::One(y)) => x * y,
            (Block::Two([a, b, c]), Block::Two([p, q, r])) => a * p + 2.0 * b * q + c * r,
            _ => unreachable!("block sizes differ"),
        }
    }

    /// `x * self + y * other + s * I`
    pub(crate) fn combine(x: f64, lhs: &Block, y: f64, rhs: &Block, s: f64) -> Block {
        match (*lhs, *rhs) {
            (Block::One(p), Block::One(q)) => Block::One(x * p + y * q + s),
            (Block::Two([a, b, c]), Block::Two([p, q, r])) => {
                Block::Two([x * a + y * p + s, x * b + y * q, x * c + y * r + s])
            }
            _ => unreachable!("block sizes differ"),
        }
    }

    /// Lower Cholesky factor applied to `z`.
    fn cholesky_apply(&self, z: &[f64]) -> [f64; 2] {
        match *self {
            Block::One(v) => [v.sqrt() * z[0], 0.0],
            Block::Two([a, b, c]) => {
                let l11 = a.sqrt();
                let l21 = b / l11;
                let l22 = (c - l21 * l21).sqrt();
                [l11 * z[0], l21 * z[0] + l22 * z[1]]
            }
        }
    }
}

impl Covariance {
    pub(crate) fn is_paired(&self) -> bool {
        matches!(self, Covariance::BlockDiagonal(_))
    }

    /// Diagonal blocks for dimension `d`; `paired` forces 2x2 blocks.
    pub(crate) fn blocks(&self, d: usize, paired: bool) -> Vec<Block> {
        match self {
            Covariance::BlockDiagonal(bs) => bs.iter().map(|b| Block::Two(*b)).collect(),
            _ => {
                let diag: Vec<f64> = match self {
                    Covariance::Scalar(v) => vec![*v; d],
                    Covariance::Diagonal(v) => v.clone(),
                    Covariance::BlockDiagonal(_) => unreachable!(),
                };
                if paired {
                    diag.chunks_exact(2).map(|p| Block::Two([p[0], 0.0, p[1]])).collect()
                } else {
                    diag.into_iter().map(Block::One).collect()
                }
            }
        }
    }

    pub(crate) fn from_blocks(blocks: &[Block]) -> Covariance {
        if blocks.iter().all(|b| b.size() == 1) {
            let diag: Vec<f64> = blocks
                .iter()
                .map(|b| match b {
                    Block::One(v) => *v,
                    Block::Two(_) => unreachable!(),
                })
                .collect();
            if diag.windows(2).all(|w| w[0] == w[1]) {
                Covariance::Scalar(diag[0])
            } else {
                Covariance::Diagonal(diag)
            }
        } else {
            Covariance::BlockDiagonal(
                blocks
                    .iter()
                    .map(|b| match b {
                        Block::Two(m) => *m,
                        Block::One(_) => unreachable!("mixed block sizes"),
                    })
                    .collect(),
            )
        }
    }
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, covariance: Covariance) -> Result<Self> {
        let spec = Self { mean, covariance };
        spec.validate()?;
        Ok(spec)
    }

    /// `N(mean, var * I)`
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        Self::new(mean, Covariance::Scalar(var))
    }

    /// `N(0, I_d)`
    pub fn standard(d: usize) -> Result<Self> {
        Self::isotropic(vec![0.0; d], 1.0)
    }

    /// `N(0, Sigma)` with `Sigma` block diagonal, every block `[[1, rho], [rho, 1]]`.
    pub fn correlated_pairs(d: usize, rho: f64) -> Result<Self> {
        if d % 2 != 0 {
            return Err(config_err(format!("correlated pairs need an even dimension, got {d}")));
        }
        Self::new(vec![0.0; d], Covariance::BlockDiagonal(vec![[1.0, rho, 1.0]; d / 2]))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if d == 0 {
            return Err(config_err("Gaussian dimension must be at least 1"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(config_err("Gaussian mean must be finite"));
        }
        match &self.covariance {
            Covariance::Scalar(_) => {}
            Covariance::Diagonal(v) if v.len() != d => {
                return Err(config_err(format!("diagonal covariance has {} entries for dimension {d}", v.len())))
            }
            Covariance::BlockDiagonal(b) if 2 * b.len() != d => {
                return Err(config_err(format!("{} 2x2 blocks do not cover dimension {d}", b.len())))
            }
            _ => {}
        }
        if !self.blocks(false).iter().all(Block::positive_definite) {
            return Err(config_err("covariance is not positive definite"));
        }
        Ok(())
    }

    pub(crate) fn blocks(&self, paired: bool) -> Vec<Block> {
        self.covariance.blocks(self.dim(), paired)
    }

    /// Per-coordinate variances (diagonal of the covariance).
    pub fn variances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for b in self.blocks(false) {
            match b {
                Block::One(v) => out.push(v),
                Block::Two([a, _, c]) => {
                    out.push(a);
                    out.push(c);
                }
            }
        }
        out
    }

    /// Law of `x + z`, `z ~ N(0, eps I)` independent of `x`.
    pub fn convolve(&self, eps: f64) -> Result<Self> {
        let blocks: Vec<Block> = self.blocks(false).iter().map(|b| Block::combine(1.0, b, 0.0, b, eps)).collect();
        let covariance = match &self.covariance {
            Covariance::Scalar(v) => Covariance::Scalar(v + eps),
            _ => Covariance::from_blocks(&blocks),
        };
        Self::new(self.mean.clone(), covariance)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        self.validate()?;
        if n == 0 {
            return Err(config_err("sample count must be at least 1"));
        }
        let d = self.dim();
        let blocks = self.blocks(false);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let mut offset = 0;
            for b in &blocks {
                let k = b.size();
                let mut z = [0.0; 2];
                for zi in z.iter_mut().take(k) {
                    *zi = StandardNormal.sample(rng);
                }
                let x = b.cholesky_apply(&z);
                for i in 0..k {
                    data.push(self.mean[offset + i] + x[i]);
                }
                offset += k;
            }
        }
        Batch::new(n, d, data)
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(shape_err(format!("point has dimension {}, Gaussian has {d}", x.len())));
        }
        let mut acc = -0.5 * d as f64 * (2.0 * PI).ln();
        let mut offset = 0;
        for b in self.blocks(false) {
            let k = b.size();
            let r: Vec<f64> = (0..k).map(|i| x[offset + i] - self.mean[offset + i]).collect();
            acc -= 0.5 * (b.log_det() + b.inverse().quad(&r));
            offset += k;
        }
        Ok(acc)
    }

    /// `KL(self || other)`
    pub fn kl_divergence(&self, other: &GaussianSpec) -> Result<f64> {
        let d = self.dim();
        if other.dim() != d {
            return Err(shape_err(format!("KL between dimensions {d} and {}", other.dim())));
        }
        let paired = self.covariance.is_paired() || other.covariance.is_paired();
        let (bp, bq) = (self.blocks(paired), other.blocks(paired));
        let mut acc = 0.0;
        let mut offset = 0;
        for (p, q) in bp.iter().zip(&bq) {
            let k = p.size();
            let qi = q.inverse();
            let delta: Vec<f64> = (0..k).map(|i| other.mean[offset + i] - self.mean[offset + i]).collect();
            acc += 0.5 * (qi.trace_product(p) + qi.quad(&delta) - k as f64 + q.log_det() - p.log_det());
            offset += k;
        }
        Ok(acc)
    }
}
