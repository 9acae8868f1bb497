use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};

/// Row-major dense tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    /// 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(shape_err("ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of columns of a matrix (product of trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!("axpy {:?} vs {:?}", self.shape, other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(s, o)| *s += a * o);
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(shape_err(format!("dot {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// Forward-mode carrier: a primal tensor and one tangent of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub primal: Tensor,
    pub tangent: Tensor,
}

impl Dual {
    pub fn new(primal: Tensor, tangent: Tensor) -> Result<Self> {
        if primal.shape() != tangent.shape() {
            return Err(shape_err(format!(
                "tangent shape {:?} differs from primal {:?}",
                tangent.shape(),
                primal.shape()
            )));
        }
        Ok(Self { primal, tangent })
    }
}

/// Ordered, uniquely named collection of parameter tensors.
///
/// The order is the serialisation order: layer by layer, weight before bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(shape_err(format!("duplicate parameter name {name}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let entries =
            self.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape()))).collect();
        Self { entries }
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenation of all tensors in serialisation order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Overwrites every tensor from a flat slice in serialisation order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(shape_err(format!(
                "flat parameter blob has {} values, expected {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for (_, t) in &mut self.entries {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ParamSet) -> Result<()> {
        if !self.same_layout(other) {
            return Err(shape_err("parameter sets have different layouts"));
        }
        for ((_, s), (_, o)) in self.entries.iter_mut().zip(&other.entries) {
            s.axpy(a, o)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.entries.iter_mut().for_each(|(_, t)| t.scale(a));
    }

    pub fn dot(&self, other: &ParamSet) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(shape_err("parameter sets have different layouts"));
        }
        let mut acc = 0.0;
        for ((_, s), (_, o)) in self.entries.iter().zip(&other.entries) {
            acc += s.dot(o)?;
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}
