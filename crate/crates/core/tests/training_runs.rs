//! Short end-to-end training runs on the unit-shift Gaussian pair.

use dre_core::distributions::{GaussianSpec, Source};
use dre_core::estimation::{integrate_logratio, GaussianOracle, Integrator, TimeScore};
use dre_core::interpolants::InterpolantConfig;
use dre_core::rng::{stream, Stream};
use dre_core::training::{stratified_times, train, LossKind, NetworkConfig, TrainConfig, Trainer};

fn unit_pair() -> (Source, Source) {
    (
        Source::Gaussian(GaussianSpec::standard(1).unwrap()),
        Source::Gaussian(GaussianSpec::isotropic(vec![1.0], 1.0).unwrap()),
    )
}

fn small(cfg: TrainConfig) -> TrainConfig {
    TrainConfig { network: NetworkConfig { hidden: vec![32, 32], time_frequencies: 4 }, batch_size: 256, ..cfg }
}

#[test]
fn logistic_classifier_recovers_log_ratio_at_origin() {
    let (s0, s1) = unit_pair();
    let mut cfg = small(TrainConfig::new(InterpolantConfig::default(), 1500));
    cfg.loss = LossKind::Logistic;
    cfg.seed = 2;
    let (model, history) = train(&cfg, &s0, &s1).unwrap();
    assert!(history.iter().all(|l| l.is_finite()));
    let at_zero = model.forward(&[0.0], 0.0).unwrap()[0];
    assert!((at_zero + 0.5).abs() <= 0.15, "log r(0) = {at_zero}");
}

/// RMS of `s - truth` weighted by `lambda(t) = t (1 - t)` over `t ~ U(0, 1)`, `x ~ q_t`.
fn weighted_rms(model: &dyn TimeScore, interp: &InterpolantConfig, q0: &GaussianSpec, q1: &GaussianSpec) -> f64 {
    let mut rng = stream(99, Stream::Eval);
    let n = 20_000;
    let x0 = q0.sample(n, &mut rng).unwrap();
    let x1 = q1.sample(n, &mut rng).unwrap();
    let ts = stratified_times(n, &mut rng);
    let xt = interp.sample_paths(&x0, &x1, &ts, &mut rng).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (x, &t) in xt.rows().zip(&ts) {
        let lam = t * (1.0 - t);
        let err = model.time_scores(x, &[t]).unwrap()[0] - interp.gaussian_marginal_time_score(q0, q1, t, x).unwrap();
        num += lam * err * err;
        den += lam;
    }
    (num / den).sqrt()
}

#[test]
fn l3_training_approaches_the_marginal_time_score_and_integrators_agree() {
    let (s0, s1) = unit_pair();
    let (Source::Gaussian(q0), Source::Gaussian(q1)) = (&s0, &s1) else { unreachable!() };
    let interp = InterpolantConfig::default();
    let mut cfg = TrainConfig::new(interp.clone(), 3000);
    cfg.network = NetworkConfig { hidden: vec![32, 32], time_frequencies: 0 };
    cfg.batch_size = 1024;
    cfg.seed = 1;
    let untrained = Trainer::new(cfg.clone(), s0.clone(), s1.clone()).unwrap().into_model();
    let (model, history) = train(&cfg, &s0, &s1).unwrap();
    let head: f64 = history[..300].iter().sum::<f64>() / 300.0;
    let tail: f64 = history[history.len() - 300..].iter().sum::<f64>() / 300.0;
    assert!(tail < head, "loss went from {head} to {tail}");

    let before = weighted_rms(&untrained, &interp, q0, q1);
    let after = weighted_rms(&model, &interp, q0, q1);
    assert!(after < 0.25 && after < 0.5 * before, "weighted RMS {before} -> {after}");

    let eps = interp.effective_eps();
    let (p0, p1) = (q0.convolve(eps).unwrap(), q1.convolve(eps).unwrap());
    let oracle = GaussianOracle::new(interp, q0.clone(), q1.clone()).unwrap();
    let methods = [Integrator::default(), Integrator::Rk4 { steps: 128 }, Integrator::rk45()];
    for k in 0..50 {
        let x = [-3.0 + 7.0 * k as f64 / 49.0];
        let v: Vec<f64> = methods.iter().map(|m| integrate_logratio(&model, &x, m).unwrap().value).collect();
        assert!((v[0] - v[1]).abs() < 1e-4 && (v[0] - v[2]).abs() < 1e-4, "x = {}: {v:?}", x[0]);
        let exact = integrate_logratio(&oracle, &x, &Integrator::default()).unwrap().value;
        let truth = p1.log_pdf(&x).unwrap() - p0.log_pdf(&x).unwrap();
        assert!((exact - truth).abs() < 1e-6, "x = {}: {exact} vs {truth}", x[0]);
    }
}
