use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gemm::{gemm, View};
use super::tensor::{Dual, ParamSet, Tensor};
use crate::error::{shape_err, Result};

fn weight_name(layer: usize) -> alloc::string::String {
    format!("layer{layer}.weight")
}

fn bias_name(layer: usize) -> alloc::string::String {
    format!("layer{layer}.bias")
}

/// Xavier-normal weights and zero biases for a network with the given widths
/// (input width first, output width last).
pub fn init_mlp<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<ParamSet> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(shape_err(format!("invalid layer widths {widths:?}")));
    }
    let mut entries = Vec::with_capacity(2 * (widths.len() - 1));
    for (l, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        entries.push((weight_name(l), Tensor::new(vec![fan_out, fan_in], w)?));
        entries.push((bias_name(l), Tensor::zeros(&[fan_out])));
    }
    ParamSet::new(entries)
}

/// Layer widths `[in, h1, ..., out]` implied by a parameter set.
pub(crate) fn layer_widths(params: &ParamSet) -> Result<Vec<usize>> {
    if params.is_empty() || params.len() % 2 != 0 {
        return Err(shape_err("MLP parameters must be weight/bias pairs"));
    }
    let mut widths = Vec::with_capacity(params.len() / 2 + 1);
    for l in 0..params.len() / 2 {
        let (wn, w) = params.iter().nth(2 * l).unwrap();
        let (bn, b) = params.iter().nth(2 * l + 1).unwrap();
        if wn != weight_name(l) || bn != bias_name(l) {
            return Err(shape_err(format!("unexpected parameter names {wn}, {bn} at layer {l}")));
        }
        let [out, inp] = w.shape() else {
            return Err(shape_err(format!("{wn} must be 2-D")));
        };
        if b.shape() != [*out] {
            return Err(shape_err(format!("{bn} has shape {:?}, expected [{out}]", b.shape())));
        }
        match widths.last() {
            None => widths.push(*inp),
            Some(&prev) if prev != *inp => {
                return Err(shape_err(format!("{wn} expects {inp} inputs, previous layer gives {prev}")))
            }
            _ => {}
        }
        widths.push(*out);
    }
    Ok(widths)
}

/// `a = h W^T (+ b)` for `n` rows.
fn affine(h: &[f64], n: usize, w: &[f64], inp: usize, out: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut a = match b {
        Some(b) => b.iter().copied().cycle().take(n * out).collect(),
        None => vec![0.0; n * out],
    };
    gemm(View::new(h, n, inp), View::new(w, out, inp).t(), 1.0, &mut a);
    a
}

/// `gW += g^T h`
fn accumulate_weight_grad(gw: &mut [f64], g: &[f64], h: &[f64], n: usize, inp: usize, out: usize) {
    gemm(View::new(g, n, out).t(), View::new(h, n, inp), 1.0, gw);
}

/// `g W`, the gradient with respect to the layer input.
fn input_grad(g: &[f64], w: &[f64], n: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut gh = vec![0.0; n * inp];
    gemm(View::new(g, n, out), View::new(w, out, inp), 0.0, &mut gh);
    gh
}

struct TangentSweep {
    /// Tangent of each layer input, `hdots[l]` has `n * widths[l]` entries.
    hdots: Vec<Vec<f64>>,
    /// Tangent of each hidden pre-activation.
    adots: Vec<Vec<f64>>,
    output: Vec<f64>,
}

/// Recorded forward pass (primal plus tangent sweeps) of a tanh MLP.
///
/// Hidden layers use `tanh`; the last layer is affine. Backpropagating through
/// the trace gives exact parameter gradients of any loss that is linear in the
/// recorded outputs and their tangents, which is what second-order terms such
/// as `d/dt s(x, t)` need.
pub struct MlpTrace<'p> {
    params: &'p ParamSet,
    widths: Vec<usize>,
    n: usize,
    hs: Vec<Vec<f64>>,
    output: Vec<f64>,
    sweeps: Vec<TangentSweep>,
}

impl<'p> MlpTrace<'p> {
    /// Runs the network on `input` (`n x widths[0]`) and pushes each tangent
    /// (same shape as `input`) through it.
    pub fn record(params: &'p ParamSet, input: &Tensor, tangents: &[&Tensor]) -> Result<Self> {
        let widths = layer_widths(params)?;
        if input.shape().len() != 2 || input.cols() != widths[0] {
            return Err(shape_err(format!(
                "input shape {:?} does not match first layer width {}",
                input.shape(),
                widths[0]
            )));
        }
        for tan in tangents {
            if tan.shape() != input.shape() {
                return Err(shape_err(format!(
                    "tangent shape {:?} differs from input {:?}",
                    tan.shape(),
                    input.shape()
                )));
            }
        }
        let n = input.rows();
        let layers = widths.len() - 1;
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(layers);
        hs.push(input.data().to_vec());
        let mut sweeps: Vec<TangentSweep> = tangents
            .iter()
            .map(|t| TangentSweep { hdots: vec![t.data().to_vec()], adots: Vec::new(), output: Vec::new() })
            .collect();
        let mut output = Vec::new();
        for l in 0..layers {
            let (inp, out) = (widths[l], widths[l + 1]);
            let w = params.tensor(2 * l).data();
            let b = params.tensor(2 * l + 1).data();
            let mut a = affine(&hs[l], n, w, inp, out, Some(b));
            let hidden = l + 1 < layers;
            if hidden {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
            for sweep in &mut sweeps {
                let adot = affine(&sweep.hdots[l], n, w, inp, out, None);
                if hidden {
                    let hdot = adot.iter().zip(&a).map(|(ad, h)| (1.0 - h * h) * ad).collect();
                    sweep.hdots.push(hdot);
                    sweep.adots.push(adot);
                } else {
                    sweep.output = adot;
                }
            }
            if hidden {
                hs.push(a);
            } else {
                output = a;
            }
        }
        Ok(Self { params, widths, n, hs, output, sweeps })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Network output, `n x out` row-major.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Output tangent of sweep `k`, `n x out` row-major.
    pub fn tangent_output(&self, k: usize) -> &[f64] {
        &self.sweeps[k].output
    }

    /// Parameter gradient of `<upstream, output> + sum_k <tangent_upstream[k], tangent_output(k)>`.
    ///
    /// `tangent_upstream` may be shorter than the number of sweeps; missing or
    /// `None` entries contribute nothing.
    pub fn backward(&self, upstream: &[f64], tangent_upstream: &[Option<&[f64]>]) -> Result<ParamSet> {
        let out_len = self.n * self.output_width();
        if upstream.len() != out_len {
            return Err(shape_err(format!("upstream has {} values, output has {out_len}", upstream.len())));
        }
        if tangent_upstream.len() > self.sweeps.len() {
            return Err(shape_err("more tangent upstreams than recorded sweeps"));
        }
        let mut active: Vec<(usize, Vec<f64>)> = Vec::new();
        for (k, up) in tangent_upstream.iter().enumerate() {
            if let Some(up) = up {
                if up.len() != out_len {
                    return Err(shape_err(format!("tangent upstream {k} has {} values, output has {out_len}", up.len())));
                }
                active.push((k, up.to_vec()));
            }
        }
        let mut grads = self.params.zeros_like();
        let layers = self.widths.len() - 1;
        let n = self.n;
        let mut g = upstream.to_vec();
        for l in (0..layers).rev() {
            let (inp, out) = (self.widths[l], self.widths[l + 1]);
            {
                let gw = grads.tensor_mut(2 * l).data_mut();
                accumulate_weight_grad(gw, &g, &self.hs[l], n, inp, out);
                for (k, gd) in &active {
                    accumulate_weight_grad(gw, gd, &self.sweeps[*k].hdots[l], n, inp, out);
                }
            }
            {
                let gb = grads.tensor_mut(2 * l + 1).data_mut();
                for i in 0..n {
                    for (slot, v) in gb.iter_mut().zip(&g[i * out..(i + 1) * out]) {
                        *slot += v;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = self.params.tensor(2 * l).data();
            let gh = input_grad(&g, w, n, inp, out);
            // hs[l] = tanh(a), hdot = (1 - h^2) adot
            let h = &self.hs[l];
            let mut next: Vec<f64> = gh.iter().zip(h).map(|(gv, hv)| (1.0 - hv * hv) * gv).collect();
            for (k, gd) in &mut active {
                let gdh = input_grad(gd, w, n, inp, out);
                let adot = &self.sweeps[*k].adots[l - 1];
                let mut carried = Vec::with_capacity(gdh.len());
                for idx in 0..gdh.len() {
                    let s = 1.0 - h[idx] * h[idx];
                    next[idx] -= 2.0 * h[idx] * s * adot[idx] * gdh[idx];
                    carried.push(s * gdh[idx]);
                }
                *gd = carried;
            }
            g = next;
        }
        Ok(grads)
    }
}

/// Network output for every row of `input`.
pub fn mlp_forward(params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    let trace = MlpTrace::record(params, input, &[])?;
    let out = Tensor::new(vec![trace.rows(), trace.output_width()], trace.output)?;
    out.ensure_finite("mlp_forward output")?;
    Ok(out)
}

/// Gradient of `<upstream, mlp_forward(params, input)>` with respect to every
/// parameter.
pub fn mlp_backprop(params: &ParamSet, input: &Tensor, upstream: &Tensor) -> Result<ParamSet> {
    let trace = MlpTrace::record(params, input, &[])?;
    if upstream.shape() != [trace.rows(), trace.output_width()] {
        return Err(shape_err(format!(
            "upstream shape {:?} differs from output [{}, {}]",
            upstream.shape(),
            trace.rows(),
            trace.output_width()
        )));
    }
    let grads = trace.backward(upstream.data(), &[])?;
    if !grads.is_finite() {
        return Err(crate::Error::NonFinite("mlp_backprop gradients"));
    }
    Ok(grads)
}

/// Output and its directional derivative along `input.tangent`.
pub fn mlp_jvp(params: &ParamSet, input: &Dual) -> Result<Dual> {
    let trace = MlpTrace::record(params, &input.primal, &[&input.tangent])?;
    let shape = vec![trace.rows(), trace.output_width()];
    let primal = Tensor::new(shape.clone(), trace.output.clone())?;
    let tangent = Tensor::new(shape, trace.sweeps[0].output.clone())?;
    primal.ensure_finite("mlp_jvp primal")?;
    tangent.ensure_finite("mlp_jvp tangent")?;
    Dual::new(primal, tangent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-9
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    fn randomize_biases(p: &mut ParamSet, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in p.iter_mut() {
            if name.ends_with("bias") {
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = init_mlp(&[3, 5, 2], &mut rng).unwrap();
        p.scale(0.0);
        let out = mlp_forward(&p, &random_input(4, 3, 2)).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = ParamSet::new(vec![
            ("layer0.weight".to_string(), w),
            ("layer0.bias".to_string(), Tensor::zeros(&[2])),
        ])
        .unwrap();
        let x = random_input(3, 2, 9);
        assert_eq!(mlp_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn matches_straight_line_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = init_mlp(&[2, 3, 1], &mut rng).unwrap();
        randomize_biases(&mut p, 0);
        let x = [0.3, -0.7];
        let w0 = p.get("layer0.weight").unwrap().data();
        let b0 = p.get("layer0.bias").unwrap().data();
        let w1 = p.get("layer1.weight").unwrap().data();
        let b1 = p.get("layer1.bias").unwrap().data();
        let mut expected = b1[0];
        for j in 0..3 {
            let pre = w0[2 * j] * x[0] + w0[2 * j + 1] * x[1] + b0[j];
            expected += w1[j] * pre.tanh();
        }
        let got = mlp_forward(&p, &Tensor::from_rows(&[&x]).unwrap()).unwrap();
        assert!((got.data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = init_mlp(&[2, 3, 1], &mut rng).unwrap();
        assert!(mlp_forward(&p, &random_input(2, 3, 0)).is_err());
        let x = random_input(2, 2, 0);
        assert!(mlp_backprop(&p, &x, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn linear_layer_gradient_is_input() {
        let w = Tensor::new(vec![1, 3], vec![0.2, -0.1, 0.4]).unwrap();
        let p = ParamSet::new(vec![
            ("layer0.weight".to_string(), w),
            ("layer0.bias".to_string(), Tensor::zeros(&[1])),
        ])
        .unwrap();
        let x = Tensor::from_rows(&[&[1.0, 2.0, -3.0]]).unwrap();
        let g = mlp_backprop(&p, &x, &Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.tensor(0).data(), x.data());
        assert_eq!(g.tensor(1).data(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = init_mlp(&[2, 4, 4, 2], &mut rng).unwrap();
        let x = random_input(5, 2, 3);
        let g = mlp_backprop(&p, &x, &Tensor::zeros(&[5, 2])).unwrap();
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = init_mlp(&[3, 6, 5, 2], &mut rng).unwrap();
        randomize_biases(&mut p, 11);
        let x = random_input(4, 3, 12);
        let up = random_input(4, 2, 13);
        let g = mlp_backprop(&p, &x, &up).unwrap().to_flat();
        let base = p.to_flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut q = p.clone();
            let mut plus = base.clone();
            plus[i] += h;
            q.load_flat(&plus).unwrap();
            let fp = mlp_forward(&q, &x).unwrap().dot(&up).unwrap();
            let mut minus = base.clone();
            minus[i] -= h;
            q.load_flat(&minus).unwrap();
            let fm = mlp_forward(&q, &x).unwrap().dot(&up).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(close(g[i], fd, 1e-5), "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn jvp_of_linear_layer_is_weight_times_tangent() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = ParamSet::new(vec![
            ("layer0.weight".to_string(), w),
            ("layer0.bias".to_string(), Tensor::new(vec![2], vec![0.5, -0.5]).unwrap()),
        ])
        .unwrap();
        let x = Tensor::from_rows(&[&[0.1, 0.2]]).unwrap();
        let v = Tensor::from_rows(&[&[1.0, -1.0]]).unwrap();
        let out = mlp_jvp(&p, &Dual::new(x, v).unwrap()).unwrap();
        assert_eq!(out.tangent.data(), &[-1.0, -1.0]);
    }

    #[test]
    fn jvp_matches_finite_differences_and_zero_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = init_mlp(&[3, 7, 7, 2], &mut rng).unwrap();
        randomize_biases(&mut p, 5);
        let x = random_input(3, 3, 6);
        let v = random_input(3, 3, 7);
        let out = mlp_jvp(&p, &Dual::new(x.clone(), v.clone()).unwrap()).unwrap();
        let h = 1e-5;
        let mut xp = x.clone();
        xp.axpy(h, &v).unwrap();
        let mut xm = x.clone();
        xm.axpy(-h, &v).unwrap();
        let fp = mlp_forward(&p, &xp).unwrap();
        let fm = mlp_forward(&p, &xm).unwrap();
        for i in 0..out.tangent.len() {
            let fd = (fp.data()[i] - fm.data()[i]) / (2.0 * h);
            assert!(close(out.tangent.data()[i], fd, 1e-5));
        }
        let zero = mlp_jvp(&p, &Dual::new(x.clone(), Tensor::zeros(x.shape())).unwrap()).unwrap();
        assert!(zero.tangent.data().iter().all(|v| *v == 0.0));
        assert_eq!(zero.primal, mlp_forward(&p, &x).unwrap());
    }

    #[test]
    fn tangent_backward_matches_finite_differences() {
        // Loss = <u, f> + <w1, J v1> + <w2, J v2>, differentiated in the parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = init_mlp(&[3, 5, 4, 2], &mut rng).unwrap();
        randomize_biases(&mut p, 21);
        let x = random_input(3, 3, 22);
        let v1 = random_input(3, 3, 23);
        let v2 = random_input(3, 3, 24);
        let u = random_input(3, 2, 25);
        let w1 = random_input(3, 2, 26);
        let w2 = random_input(3, 2, 27);
        let loss = |q: &ParamSet| {
            let tr = MlpTrace::record(q, &x, &[&v1, &v2]).unwrap();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            dot(tr.output(), u.data()) + dot(tr.tangent_output(0), w1.data()) + dot(tr.tangent_output(1), w2.data())
        };
        let tr = MlpTrace::record(&p, &x, &[&v1, &v2]).unwrap();
        let g = tr.backward(u.data(), &[Some(w1.data()), Some(w2.data())]).unwrap().to_flat();
        let base = p.to_flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut q = p.clone();
            let mut b = base.clone();
            b[i] += h;
            q.load_flat(&b).unwrap();
            let fp = loss(&q);
            b[i] -= 2.0 * h;
            q.load_flat(&b).unwrap();
            let fm = loss(&q);
            let fd = (fp - fm) / (2.0 * h);
            assert!(close(g[i], fd, 1e-5), "param {i}: {} vs {fd}", g[i]);
        }
    }
}
