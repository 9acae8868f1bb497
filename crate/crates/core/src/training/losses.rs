//! Training objectives. Each returns the Monte-Carlo loss and its exact
//! parameter gradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::distributions::Batch;
use crate::error::{config_err, shape_err, Error, Result};
use crate::scorenet::{Head, ScoreModel};

/// Time weighting `lambda(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Weighting {
    /// `gamma^2 t (1 - t)` with the interpolant's `gamma^2`.
    Bridge,
    /// `scale * t (1 - t)`, independent of `gamma^2`.
    Quadratic { scale: f64 },
    Constant { value: f64 },
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::Bridge
    }
}

impl Weighting {
    /// `(lambda(t), lambda'(t))`
    pub fn eval(&self, gamma2: f64, t: f64) -> (f64, f64) {
        let scale = match *self {
            Weighting::Bridge => gamma2,
            Weighting::Quadratic { scale } => scale,
            Weighting::Constant { value } => return (value, 0.0),
        };
        (scale * t * (1.0 - t), scale * (1.0 - 2.0 * t))
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            Weighting::Bridge => 1.0,
            Weighting::Quadratic { scale } => scale,
            Weighting::Constant { value } => value,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(config_err("weighting parameters must be finite and non-negative"))
        }
    }
}

/// `lambda` bound to a concrete `gamma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda {
    pub weighting: Weighting,
    pub gamma2: f64,
}

impl Lambda {
    pub fn new(weighting: Weighting, gamma2: f64) -> Self {
        Self { weighting, gamma2 }
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        self.weighting.eval(self.gamma2, t)
    }
}

/// Sampled `(x_t, t)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Interior {
    pub x: Batch,
    pub t: Vec<f64>,
}

impl Interior {
    pub fn new(x: Batch, t: Vec<f64>) -> Result<Self> {
        if x.len() != t.len() {
            return Err(shape_err(format!("{} points but {} times", x.len(), t.len())));
        }
        Ok(Self { x, t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: ParamSet,
}

fn finish(loss: f64, grads: ParamSet) -> Result<LossOutput> {
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("loss gradient"));
    }
    Ok(LossOutput { loss, grads })
}

/// Loss and gradient of `c * mean_i s_t(x_i, t)` at a fixed time, skipped when `c == 0`.
fn boundary_term(model: &ScoreModel, x: &Batch, t: f64, c: f64, grads: &mut ParamSet) -> Result<f64> {
    if c == 0.0 {
        return Ok(0.0);
    }
    let ts = vec![t; x.len()];
    let trace = model.record(x, &ts, &[])?;
    let w = trace.output_width();
    let n = x.len() as f64;
    let mut up = vec![0.0; x.len() * w];
    let mut total = 0.0;
    for (i, row) in trace.output().chunks(w).enumerate() {
        total += row[0];
        up[i * w] = c / n;
    }
    grads.axpy(1.0, &trace.backward(&up, &[])?)?;
    Ok(c * total / n)
}

/// `mean lambda(t) (oracle - s(x_t, t))^2`.
pub fn l1_oracle(model: &ScoreModel, interior: &Interior, oracle: &[f64], lambda: &Lambda) -> Result<LossOutput> {
    if oracle.len() != interior.t.len() {
        return Err(shape_err("one oracle value per interior sample is required"));
    }
    let trace = model.record(&interior.x, &interior.t, &[])?;
    let w = trace.output_width();
    let n = interior.t.len() as f64;
    let mut up = vec![0.0; trace.rows() * w];
    let mut loss = 0.0;
    for (i, row) in trace.output().chunks(w).enumerate() {
        let (lam, _) = lambda.eval(interior.t[i]);
        let r = row[0] - oracle[i];
        loss += lam * r * r / n;
        up[i * w] = 2.0 * lam * r / n;
    }
    let grads = trace.backward(&up, &[])?;
    finish(loss, grads)
}

/// Integration-by-parts time-score loss
///
/// ```text
/// lambda_b [E lambda(0) s(x0, 0) - E lambda(1) s(x1, 1)] + E[lambda ds/dt + lambda' s + lambda s^2 / 2]
/// ```
pub fn l3(
    model: &ScoreModel,
    x0: &Batch,
    x1: &Batch,
    interior: &Interior,
    lambda: &Lambda,
    boundary_weight: f64,
) -> Result<LossOutput> {
    let mut grads = model.params().zeros_like();
    let mut loss = boundary_term(model, x0, 0.0, boundary_weight * lambda.eval(0.0).0, &mut grads)?;
    loss += boundary_term(model, x1, 1.0, -boundary_weight * lambda.eval(1.0).0, &mut grads)?;

    let tangent = model.embed_dt(&interior.t)?;
    let trace = model.record(&interior.x, &interior.t, &[&tangent])?;
    let w = trace.output_width();
    let n = interior.t.len() as f64;
    let mut up = vec![0.0; trace.rows() * w];
    let mut up_dt = vec![0.0; trace.rows() * w];
    let outs = trace.output();
    let dts = trace.tangent_output(0);
    for i in 0..trace.rows() {
        let (lam, dlam) = lambda.eval(interior.t[i]);
        let (s, ds) = (outs[i * w], dts[i * w]);
        loss += (lam * ds + dlam * s + 0.5 * lam * s * s) / n;
        up[i * w] = (dlam + lam * s) / n;
        up_dt[i * w] = lam / n;
    }
    grads.axpy(1.0, &trace.backward(&up, &[Some(&up_dt)])?)?;
    finish(loss, grads)
}

/// Joint time and data score loss with a Hutchinson divergence estimate:
///
/// ```text
/// 2 lambda_b [E lambda(0) s_t(x0, 0) - E lambda(1) s_t(x1, 1)]
///   + E[2 lambda ds_t/dt + 2 lambda' s_t + lambda (s_t^2 + |s_x|^2) + 2 lambda v^T (ds_x/dx) v]
/// ```
///
/// `probes` holds one direction `v` per interior sample.
pub fn l4(
    model: &ScoreModel,
    x0: &Batch,
    x1: &Batch,
    interior: &Interior,
    probes: &Batch,
    lambda: &Lambda,
    boundary_weight: f64,
) -> Result<LossOutput> {
    if model.config().head != Head::Joint {
        return Err(config_err("the joint loss needs a joint head"));
    }
    if probes.len() != interior.t.len() || probes.dim() != interior.x.dim() {
        return Err(shape_err("one probe direction per interior sample is required"));
    }
    let mut grads = model.params().zeros_like();
    let mut loss = boundary_term(model, x0, 0.0, 2.0 * boundary_weight * lambda.eval(0.0).0, &mut grads)?;
    loss += boundary_term(model, x1, 1.0, -2.0 * boundary_weight * lambda.eval(1.0).0, &mut grads)?;

    let t_dir = model.embed_dt(&interior.t)?;
    let x_dir = model.embed_direction(probes)?;
    let trace = model.record(&interior.x, &interior.t, &[&t_dir, &x_dir])?;
    let w = trace.output_width();
    let n = interior.t.len() as f64;
    let size = trace.rows() * w;
    let (mut up, mut up_t, mut up_v) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
    let outs = trace.output();
    let dts = trace.tangent_output(0);
    let jvs = trace.tangent_output(1);
    for i in 0..trace.rows() {
        let (lam, dlam) = lambda.eval(interior.t[i]);
        let row = &outs[i * w..(i + 1) * w];
        let v = probes.row(i);
        let s_t = row[0];
        let sq: f64 = row.iter().map(|s| s * s).sum();
        let quad: f64 = v.iter().zip(&jvs[i * w + 1..(i + 1) * w]).map(|(a, b)| a * b).sum();
        loss += (2.0 * lam * dts[i * w] + 2.0 * dlam * s_t + lam * sq + 2.0 * lam * quad) / n;
        up[i * w] = (2.0 * dlam + 2.0 * lam * s_t) / n;
        up_t[i * w] = 2.0 * lam / n;
        for k in 1..w {
            up[i * w + k] = 2.0 * lam * row[k] / n;
            up_v[i * w + k] = 2.0 * lam * v[k - 1] / n;
        }
    }
    grads.axpy(1.0, &trace.backward(&up, &[Some(&up_t), Some(&up_v)])?)?;
    finish(loss, grads)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic density-ratio loss `E_0 softplus(f(x)) + E_1 softplus(-f(x))`
/// for a classifier whose output is `f = log r`.
pub fn logistic(model: &ScoreModel, x0: &Batch, x1: &Batch) -> Result<LossOutput> {
    if model.config().time_input {
        return Err(config_err("the logistic loss expects a time-free classifier"));
    }
    let mut grads = model.params().zeros_like();
    let mut loss = 0.0;
    for (x, sign) in [(x0, 1.0), (x1, -1.0)] {
        let trace = model.record(x, &[], &[])?;
        let n = x.len() as f64;
        let mut up = Vec::with_capacity(x.len());
        for &f in trace.output() {
            loss += softplus(sign * f) / n;
            up.push(sign * sigmoid(sign * f) / n);
        }
        grads.axpy(1.0, &trace.backward(&up, &[])?)?;
    }
    finish(loss, grads)
}
