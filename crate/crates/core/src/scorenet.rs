//! Time-score networks.
//!
//! The network input is `x` followed by the time embedding
//! `[t, sin(2 pi k t), cos(2 pi k t)]` for `k = 1..=K`. Hidden layers use
//! `tanh`; the output layer is affine.
//!
//! | head  | output |
//! |-------|--------|
//! | time  | `s(x, t)` (1 value) |
//! | joint | `[s_t, s_x1, ..., s_xd]` (`d + 1` values, time component first) |
//!
//! With `time_input = false` the embedding is dropped and the network is a
//! plain classifier `f(x)`, used by the logistic baseline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init_mlp, MlpTrace, ParamSet, Tensor};
use crate::distributions::Batch;
use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    #[default]
    Time,
    Joint,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

fn default_frequencies() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreNetConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub head: Head,
    /// Number of Fourier frequencies `K` in the time embedding.
    #[serde(default = "default_frequencies")]
    pub time_frequencies: usize,
    #[serde(default = "default_true")]
    pub time_input: bool,
}

impl ScoreNetConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: default_hidden(),
            head: Head::Time,
            time_frequencies: default_frequencies(),
            time_input: true,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    /// A time-free scalar classifier.
    pub fn classifier(input_dim: usize, hidden: Vec<usize>) -> Self {
        Self { input_dim, hidden, head: Head::Time, time_frequencies: 0, time_input: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(config_err(format!(
                "network widths must be >= 1 (input {}, hidden {:?})",
                self.input_dim, self.hidden
            )));
        }
        if self.head == Head::Joint && !self.time_input {
            return Err(config_err("a joint head needs the time input"));
        }
        Ok(())
    }

    pub fn embedding_width(&self) -> usize {
        self.input_dim + if self.time_input { 1 + 2 * self.time_frequencies } else { 0 }
    }

    pub fn output_width(&self) -> usize {
        match self.head {
            Head::Time => 1,
            Head::Joint => self.input_dim + 1,
        }
    }

    /// `[embedding, hidden..., output]`
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.embedding_width());
        w.extend_from_slice(&self.hidden);
        w.push(self.output_width());
        w
    }
}

/// Output of [`ScoreModel::score_hutchinson`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hutchinson {
    pub s_t: f64,
    pub s_x: Vec<f64>,
    /// `v^T (d s_x / d x) v`
    pub quad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    config: ScoreNetConfig,
    params: ParamSet,
}

impl ScoreModel {
    pub fn new<R: Rng + ?Sized>(config: ScoreNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = init_mlp(&config.widths(), rng)?;
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking their layout against `config`.
    pub fn from_params(config: ScoreNetConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let expected = init_mlp(&config.widths(), &mut crate::rng::stream(0, crate::rng::Stream::Init))?;
        if !expected.same_layout(&params) {
            return Err(shape_err("parameters do not match the network configuration"));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ScoreNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(crate::Error::TimeDomain(t))
        }
    }

    /// Network inputs for rows of `x` at times `ts` (ignored without time input).
    pub fn embed(&self, x: &Batch, ts: &[f64]) -> Result<Tensor> {
        let d = self.config.input_dim;
        if x.dim() != d {
            return Err(shape_err(format!("input has dimension {}, network expects {d}", x.dim())));
        }
        if self.config.time_input && ts.len() != x.len() {
            return Err(shape_err(format!("{} rows but {} times", x.len(), ts.len())));
        }
        let width = self.config.embedding_width();
        let mut data = Vec::with_capacity(x.len() * width);
        for (i, row) in x.rows().enumerate() {
            data.extend_from_slice(row);
            if self.config.time_input {
                let t = ts[i];
                self.check_time(t)?;
                data.push(t);
                for k in 1..=self.config.time_frequencies {
                    let w = 2.0 * PI * k as f64;
                    data.push((w * t).sin());
                    data.push((w * t).cos());
                }
            }
        }
        Tensor::new(vec![x.len(), width], data)
    }

    /// Derivative of [`Self::embed`] in `t`, row by row.
    pub fn embed_dt(&self, ts: &[f64]) -> Result<Tensor> {
        if !self.config.time_input {
            return Err(config_err("network has no time input"));
        }
        let d = self.config.input_dim;
        let width = self.config.embedding_width();
        let mut data = vec![0.0; ts.len() * width];
        for (i, &t) in ts.iter().enumerate() {
            let row = &mut data[i * width + d..(i + 1) * width];
            row[0] = 1.0;
            for k in 1..=self.config.time_frequencies {
                let w = 2.0 * PI * k as f64;
                row[2 * k - 1] = w * (w * t).cos();
                row[2 * k] = -w * (w * t).sin();
            }
        }
        Tensor::new(vec![ts.len(), width], data)
    }

    /// Lifts per-row `x`-directions `v` (`n x d`) to embedding tangents.
    pub fn embed_direction(&self, v: &Batch) -> Result<Tensor> {
        let d = self.config.input_dim;
        if v.dim() != d {
            return Err(shape_err(format!("direction has dimension {}, network expects {d}", v.dim())));
        }
        let width = self.config.embedding_width();
        let mut data = vec![0.0; v.len() * width];
        for (i, row) in v.rows().enumerate() {
            data[i * width..i * width + d].copy_from_slice(row);
        }
        Tensor::new(vec![v.len(), width], data)
    }

    /// Records a pass over `x` at `ts` with the given embedding tangents.
    pub fn record<'a>(&'a self, x: &Batch, ts: &[f64], tangents: &[&Tensor]) -> Result<MlpTrace<'a>> {
        let input = self.embed(x, ts)?;
        MlpTrace::record(&self.params, &input, tangents)
    }

    /// Outputs for every row, `n x output_width` row-major.
    pub fn forward_batch(&self, x: &Batch, ts: &[f64]) -> Result<Vec<f64>> {
        let trace = self.record(x, ts, &[])?;
        finite(trace.output().to_vec(), "score output")
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.forward_batch(&Batch::new(1, x.len(), x.to_vec())?, &[t])
    }

    /// Time-score component at each `(x, t)` row.
    pub fn time_scores(&self, x: &Batch, ts: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_batch(x, ts)?;
        let w = self.config.output_width();
        Ok(out.chunks(w).map(|r| r[0]).collect())
    }

    /// Time scores at one point `x` for every time in `ts`.
    pub fn time_scores_at(&self, x: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        let rows: Vec<f64> = ts.iter().flat_map(|_| x.iter().copied()).collect();
        self.time_scores(&Batch::new(ts.len(), x.len(), rows)?, ts)
    }

    /// `d/dt` of every output for every row, `n x output_width`.
    pub fn score_dt_batch(&self, x: &Batch, ts: &[f64]) -> Result<Vec<f64>> {
        let tangent = self.embed_dt(ts)?;
        let trace = self.record(x, ts, &[&tangent])?;
        finite(trace.tangent_output(0).to_vec(), "score time derivative")
    }

    pub fn score_dt(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.score_dt_batch(&Batch::new(1, x.len(), x.to_vec())?, &[t])
    }

    /// One forward pass plus a JVP along `v` in `x`.
    pub fn score_hutchinson(&self, x: &[f64], t: f64, v: &[f64]) -> Result<Hutchinson> {
        if self.config.head != Head::Joint {
            return Err(config_err("Hutchinson queries need a joint head"));
        }
        let d = self.config.input_dim;
        if v.len() != d {
            return Err(shape_err(format!("direction has dimension {}, network expects {d}", v.len())));
        }
        let xb = Batch::new(1, x.len(), x.to_vec())?;
        let tangent = self.embed_direction(&Batch::new(1, d, v.to_vec())?)?;
        let trace = self.record(&xb, &[t], &[&tangent])?;
        let out = finite(trace.output().to_vec(), "score output")?;
        let jv = finite(trace.tangent_output(0).to_vec(), "score JVP")?;
        let quad = v.iter().zip(&jv[1..]).map(|(a, b)| a * b).sum();
        Ok(Hutchinson { s_t: out[0], s_x: out[1..].to_vec(), quad })
    }
}

fn finite(v: Vec<f64>, what: &'static str) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(crate::Error::NonFinite(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{mlp_jvp, Dual};
    use crate::rng::{stream, Stream};
    use alloc::string::String;

    fn model(d: usize, head: Head, seed: u64) -> ScoreModel {
        let cfg = ScoreNetConfig::new(d).with_hidden(vec![16, 12]).with_head(head);
        let mut m = ScoreModel::new(cfg, &mut stream(seed, Stream::Init)).unwrap();
        // Non-zero biases so that every path is exercised.
        let mut rng = stream(seed, Stream::Eval);
        for (_, t) in m.params_mut().iter_mut() {
            if t.shape().len() == 1 {
                for v in t.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        m
    }

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut m = model(2, Head::Joint, 0);
        let last = m.params().len();
        m.params_mut().tensor_mut(last - 2).data_mut().fill(0.0);
        m.params_mut().tensor_mut(last - 1).data_mut().fill(0.0);
        for t in [0.0, 0.3, 1.0] {
            assert!(m.forward(&[1.0, -2.0], t).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn deterministic_and_finite() {
        let a = model(3, Head::Time, 7);
        let b = model(3, Head::Time, 7);
        assert_eq!(a.forward(&[0.1, 0.2, 0.3], 0.4).unwrap(), b.forward(&[0.1, 0.2, 0.3], 0.4).unwrap());
        for i in 0..=10 {
            let v = -10.0 + 2.0 * i as f64;
            let out = a.forward(&[v, -v, 0.5 * v], i as f64 / 10.0).unwrap();
            assert!(out[0].is_finite());
        }
    }

    #[test]
    fn shapes_and_domain_checked() {
        let m = model(2, Head::Time, 1);
        assert!(m.forward(&[1.0], 0.5).is_err());
        assert!(matches!(m.forward(&[1.0, 2.0], 1.5), Err(crate::Error::TimeDomain(_))));
        assert!(m.score_hutchinson(&[1.0, 2.0], 0.5, &[1.0, 0.0]).is_err());
        assert!(ScoreNetConfig::new(0).validate().is_err());
        assert!(ScoreNetConfig::new(2).with_hidden(vec![4, 0]).validate().is_err());
    }

    #[test]
    fn score_dt_matches_finite_difference() {
        let h = 1e-5;
        for head in [Head::Time, Head::Joint] {
            let m = model(2, head, 3);
            for t in [0.1, 0.5, 0.9] {
                let x = [0.4, -1.3];
                let dt = m.score_dt(&x, t).unwrap();
                let p = m.forward(&x, t + h).unwrap();
                let q = m.forward(&x, t - h).unwrap();
                for k in 0..dt.len() {
                    let fd = (p[k] - q[k]) / (2.0 * h);
                    assert!(rel_close(dt[k], fd, 1e-5), "{head:?} t={t} k={k}: {} vs {fd}", dt[k]);
                }
            }
        }
    }

    #[test]
    fn time_blind_network_has_zero_dt() {
        let mut m = model(2, Head::Time, 4);
        let width = m.config().embedding_width();
        let w = m.params_mut().tensor_mut(0);
        let rows = w.shape()[0];
        for r in 0..rows {
            for c in 2..width {
                w.data_mut()[r * width + c] = 0.0;
            }
        }
        assert_eq!(m.score_dt(&[0.3, 0.7], 0.42).unwrap(), vec![0.0]);
    }

    /// Parameters of one wide network computing `A(x, t) + B(x, t)`.
    fn summed(a: &ScoreModel, b: &ScoreModel) -> ScoreModel {
        let layers = a.params().len() / 2;
        let mut entries: Vec<(String, Tensor)> = Vec::new();
        for l in 0..layers {
            let (wa, wb) = (a.params().tensor(2 * l), b.params().tensor(2 * l));
            let (ba, bb) = (a.params().tensor(2 * l + 1), b.params().tensor(2 * l + 1));
            let (oa, ia) = (wa.shape()[0], wa.shape()[1]);
            let (ob, ib) = (wb.shape()[0], wb.shape()[1]);
            let (w, bias) = if l == 0 {
                let mut w = wa.data().to_vec();
                w.extend_from_slice(wb.data());
                let mut bias = ba.data().to_vec();
                bias.extend_from_slice(bb.data());
                (Tensor::new(vec![oa + ob, ia], w).unwrap(), Tensor::new(vec![oa + ob], bias).unwrap())
            } else if l + 1 < layers {
                let mut w = vec![0.0; (oa + ob) * (ia + ib)];
                for r in 0..oa {
                    w[r * (ia + ib)..r * (ia + ib) + ia].copy_from_slice(&wa.data()[r * ia..(r + 1) * ia]);
                }
                for r in 0..ob {
                    let row = (oa + r) * (ia + ib) + ia;
                    w[row..row + ib].copy_from_slice(&wb.data()[r * ib..(r + 1) * ib]);
                }
                let mut bias = ba.data().to_vec();
                bias.extend_from_slice(bb.data());
                (Tensor::new(vec![oa + ob, ia + ib], w).unwrap(), Tensor::new(vec![oa + ob], bias).unwrap())
            } else {
                let mut w = Vec::new();
                for r in 0..oa {
                    w.extend_from_slice(&wa.data()[r * ia..(r + 1) * ia]);
                    w.extend_from_slice(&wb.data()[r * ib..(r + 1) * ib]);
                }
                let bias = ba.data().iter().zip(bb.data()).map(|(x, y)| x + y).collect();
                (Tensor::new(vec![oa, ia + ib], w).unwrap(), Tensor::new(vec![oa], bias).unwrap())
            };
            entries.push((format!("layer{l}.weight"), w));
            entries.push((format!("layer{l}.bias"), bias));
        }
        let hidden = a.config().hidden.iter().zip(&b.config().hidden).map(|(x, y)| x + y).collect();
        let cfg = a.config().clone().with_hidden(hidden);
        ScoreModel::from_params(cfg, ParamSet::new(entries).unwrap()).unwrap()
    }

    #[test]
    fn dt_is_linear_in_summed_networks() {
        let a = model(2, Head::Time, 5);
        let b = model(2, Head::Time, 6);
        let s = summed(&a, &b);
        for t in [0.2, 0.6] {
            let x = [0.9, -0.1];
            let fwd = a.forward(&x, t).unwrap()[0] + b.forward(&x, t).unwrap()[0];
            assert!((s.forward(&x, t).unwrap()[0] - fwd).abs() < 1e-12);
            let dt = a.score_dt(&x, t).unwrap()[0] + b.score_dt(&x, t).unwrap()[0];
            assert!((s.score_dt(&x, t).unwrap()[0] - dt).abs() < 1e-10);
        }
    }

    #[test]
    fn dt_agrees_with_generic_jvp() {
        let m = model(3, Head::Joint, 8);
        let x = Batch::from_rows(&[[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]]).unwrap();
        let ts = [0.25, 0.8];
        let dual = Dual::new(m.embed(&x, &ts).unwrap(), m.embed_dt(&ts).unwrap()).unwrap();
        let generic = mlp_jvp(m.params(), &dual).unwrap();
        let direct = m.score_dt_batch(&x, &ts).unwrap();
        for (a, b) in generic.tangent.data().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hutchinson_quadratic_form() {
        let m = model(3, Head::Joint, 9);
        let (x, t) = ([0.3, -0.8, 1.1], 0.37);
        assert_eq!(m.score_hutchinson(&x, t, &[0.0; 3]).unwrap().quad, 0.0);
        // Brute-force Jacobian of s_x by central differences, column by column.
        let h = 1e-5;
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let (p, q) = (m.forward(&xp, t).unwrap(), m.forward(&xm, t).unwrap());
            for i in 0..3 {
                jac[i][j] = (p[1 + i] - q[1 + i]) / (2.0 * h);
            }
        }
        let v = [0.7, -1.2, 0.4];
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                brute += v[i] * jac[i][j] * v[j];
            }
        }
        let hu = m.score_hutchinson(&x, t, &v).unwrap();
        assert!(rel_close(hu.quad, brute, 1e-4), "{} vs {brute}", hu.quad);
        let out = m.forward(&x, t).unwrap();
        assert_eq!(hu.s_t, out[0]);
        assert_eq!(hu.s_x, out[1..].to_vec());
        let v2: Vec<f64> = v.iter().map(|a| 2.0 * a).collect();
        let q2 = m.score_hutchinson(&x, t, &v2).unwrap().quad;
        assert!((q2 - 4.0 * hu.quad).abs() < 1e-12 * q2.abs().max(1.0));
    }

    #[test]
    fn classifier_ignores_time() {
        let cfg = ScoreNetConfig::classifier(2, vec![8]);
        assert_eq!(cfg.embedding_width(), 2);
        let m = ScoreModel::new(cfg, &mut stream(0, Stream::Init)).unwrap();
        let x = Batch::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(m.forward_batch(&x, &[]).is_ok());
        assert!(m.score_dt(&[0.5, 0.5], 0.2).is_err());
    }

    #[test]
    fn time_scores_at_matches_forward() {
        let m = model(2, Head::Joint, 10);
        let ts = [0.0, 0.5, 1.0];
        let s = m.time_scores_at(&[0.2, 0.1], &ts).unwrap();
        for (k, t) in ts.iter().enumerate() {
            assert_eq!(s[k], m.forward(&[0.2, 0.1], *t).unwrap()[0]);
        }
    }
}
