//! Samplers and analytic densities.

mod gaussian;
mod toy;

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use gaussian::{Covariance, GaussianSpec};
pub(crate) use gaussian::Block;
pub use toy::ToyName;

use crate::autodiff::Tensor;
use crate::error::{config_err, shape_err, Result};

/// `n x d` matrix of samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(shape_err("batch needs at least one row and one column"));
        }
        if data.len() != n * d {
            return Err(shape_err(format!("batch {n}x{d} needs {} values, got {}", n * d, data.len())));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.as_ref().len() != d {
                return Err(shape_err("ragged rows"));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), d, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(alloc::vec![self.n, self.d], self.data.clone()).expect("batch shape is consistent")
    }

    /// Rows picked by `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(shape_err(format!("row index {i} out of range for {} rows", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.d];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Per-coordinate sample variance (divides by `n - 1`).
    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = alloc::vec![0.0; self.d];
        for r in self.rows() {
            for ((acc, x), mu) in v.iter_mut().zip(r).zip(&m) {
                *acc += (x - mu) * (x - mu);
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        v.iter_mut().for_each(|a| *a /= denom);
        v
    }
}

/// Where endpoint samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Gaussian(GaussianSpec),
    Toy(ToyName),
}

impl Source {
    pub fn dim(&self) -> usize {
        match self {
            Source::Gaussian(g) => g.dim(),
            Source::Toy(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Source::Gaussian(g) => g.validate(),
            Source::Toy(_) => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        match self {
            Source::Gaussian(g) => g.sample(n, rng),
            Source::Toy(name) => name.sample(n, rng),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianSpec> {
        match self {
            Source::Gaussian(g) => Some(g),
            Source::Toy(_) => None,
        }
    }
}

/// Adds i.i.d. `N(0, eps I)` noise to every row. `eps = 0` returns the batch
/// unchanged and draws nothing.
pub fn dequantize<R: Rng + ?Sized>(batch: &Batch, eps: f64, rng: &mut R) -> Result<Batch> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(config_err(format!("dequantization variance must be >= 0, got {eps}")));
    }
    let mut out = batch.clone();
    if eps == 0.0 {
        return Ok(out);
    }
    let sd = eps.sqrt();
    for v in &mut out.data {
        let z: f64 = StandardNormal.sample(rng);
        *v += sd * z;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dequantize_zero_is_identity() {
        let b = Batch::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dequantize(&b, 0.0, &mut rng).unwrap(), b);
        assert!(dequantize(&b, -1e-3, &mut rng).is_err());
    }

    #[test]
    fn dequantize_adds_expected_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let base = Batch::new(n, 1, alloc::vec![0.0; n]).unwrap();
        let eps = 1e-5;
        let out = dequantize(&base, eps, &mut rng).unwrap();
        let var = out.variance()[0];
        assert!((var / eps - 1.0).abs() < 0.2, "variance {var}");
    }

    #[test]
    fn batch_rejects_bad_shapes() {
        assert!(Batch::new(0, 2, alloc::vec![]).is_err());
        assert!(Batch::new(2, 2, alloc::vec![0.0; 3]).is_err());
        let b = Batch::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(b.select(&[2]).is_err());
        assert_eq!(b.select(&[1, 1]).unwrap().data(), &[2.0, 2.0]);
    }
}
