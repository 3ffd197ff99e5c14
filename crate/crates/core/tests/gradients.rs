//! Analytic gradients against central finite differences.

use rand::Rng as _;
use softwrist::nn::{student_loss, student_loss_grad, ActorCritic, MlpPolicy, Tcn, TcnConfig, TcnPolicy};
use softwrist::seed;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SAMPLES: usize = 200;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn inputs(n: usize, s: u64) -> Vec<f64> {
    let mut r = seed::stream(s, "inputs", 0);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn mlp_policy_gradients_match_finite_differences() {
    let mut p = MlpPolicy::new(16, &[256, 256], 3, &mut seed::stream(11, "init", 0));
    // larger output weights so the mean head carries a real signal
    let n = p.num_params();
    let mut r = seed::stream(11, "perturb", 0);
    for v in p.params_mut().iter_mut() {
        *v += r.random_range(-0.05..0.05);
    }
    let batch = 4;
    let x = inputs(batch * 16, 1);
    let cm = inputs(batch * 3, 2);
    let cv = inputs(batch, 3);
    let objective = |p: &MlpPolicy| {
        let (m, v, _) = p.forward_batch(&x, batch).unwrap();
        m.iter().zip(&cm).map(|(a, b)| a * b).sum::<f64>() + v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, _, cache) = p.forward_batch(&x, batch).unwrap();
    let mut grad = vec![0.0; n];
    p.backward_batch(&cache, &cm, &cv, &mut grad);

    let head = p.log_std_range().start;
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let i = r.random_range(0..head);
        let orig = p.params()[i];
        p.params_mut()[i] = orig + EPS;
        let fp = objective(&p);
        p.params_mut()[i] = orig - EPS;
        let fm = objective(&p);
        p.params_mut()[i] = orig;
        let num = (fp - fm) / (2.0 * EPS);
        let e = rel_err(grad[i], num);
        worst = worst.max(e);
        assert!(e < TOL, "param {i}: analytic {} numeric {num} rel {e}", grad[i]);
    }
    println!("MLP worst relative error {worst:.2e}");
}

/// Checks `SAMPLES` parameters whose ±ε probes keep every ReLU on the same
/// side; returns how many probes straddled a kink.
fn check_tcn(
    params: &mut [f64],
    n_check: usize,
    f: impl Fn(&[f64]) -> (f64, Vec<bool>),
    grad: &[f64],
    seed_v: u64,
) -> usize {
    let mut r = seed::stream(seed_v, "pick", 0);
    let mut checked = 0;
    let mut kinks = 0;
    let mut worst = 0.0f64;
    while checked < n_check {
        let i = r.random_range(0..params.len());
        let orig = params[i];
        params[i] = orig + EPS;
        let (fp, sp) = f(params);
        params[i] = orig - EPS;
        let (fm, sm) = f(params);
        params[i] = orig;
        if sp != sm {
            kinks += 1;
            continue;
        }
        let num = (fp - fm) / (2.0 * EPS);
        let e = rel_err(grad[i], num);
        worst = worst.max(e);
        assert!(e < TOL, "param {i}: analytic {} numeric {num} rel {e}", grad[i]);
        checked += 1;
    }
    println!("TCN worst relative error {worst:.2e}, {kinks} kink-straddling probes skipped");
    kinks
}

#[test]
fn tcn_encoder_gradients_match_finite_differences() {
    let cfg = TcnConfig::encoder(20, true);
    let mut t = Tcn::new(cfg.clone(), &mut seed::stream(12, "init", 0)).unwrap();
    let batch = 3;
    let x = inputs(batch * 120, 4);
    let truth = inputs(batch * 9, 5);
    let labels = [true, false, true];
    let loss = |params: &[f64]| {
        let t = Tcn::from_params(cfg.clone(), params.to_vec()).unwrap();
        let (y, cache) = t.forward(&x, batch).unwrap();
        let l: f64 = (0..batch)
            .map(|b| student_loss(&y[b * 10..b * 10 + 9], Some(y[b * 10 + 9]), &truth[b * 9..b * 9 + 9], labels[b], 0.1))
            .sum();
        (l, cache.relu_pattern())
    };
    let (y, cache) = t.forward(&x, batch).unwrap();
    let mut dy = vec![0.0; batch * 10];
    for b in 0..batch {
        let (_, dp, dl) =
            student_loss_grad(&y[b * 10..b * 10 + 9], Some(y[b * 10 + 9]), &truth[b * 9..b * 9 + 9], labels[b], 0.1);
        dy[b * 10..b * 10 + 9].copy_from_slice(&dp);
        dy[b * 10 + 9] = dl.unwrap();
    }
    let mut grad = vec![0.0; t.num_params()];
    t.backward(&cache, &dy, &mut grad);
    let mut params = t.params().to_vec();
    let kinks = check_tcn(&mut params, SAMPLES, loss, &grad, 13);
    assert!(kinks < SAMPLES / 10, "too many kink crossings: {kinks}");
    t.params_mut().copy_from_slice(&params);
}

#[test]
fn tcn_sequence_map_gradients_match_finite_differences() {
    let cfg = TcnConfig { input_channels: 6, channels: 8, kernel: 3, dilations: vec![1, 2, 4], heads: vec![2], seq_len: 10 };
    let t = Tcn::new(cfg.clone(), &mut seed::stream(14, "init", 0)).unwrap();
    let x = inputs(60, 6);
    let w = inputs(20, 7);
    let f = |params: &[f64]| {
        let t = Tcn::from_params(cfg.clone(), params.to_vec()).unwrap();
        let (y, cache) = t.forward_sequence(&x, 1).unwrap();
        (y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>(), cache.relu_pattern())
    };
    let (_, cache) = t.forward_sequence(&x, 1).unwrap();
    let mut grad = vec![0.0; t.num_params()];
    t.backward(&cache, &w, &mut grad);
    let mut params = t.params().to_vec();
    check_tcn(&mut params, SAMPLES, f, &grad, 15);
}

#[test]
fn tcn_policy_gradients_match_finite_differences() {
    let trunk = TcnConfig { heads: vec![3], ..TcnConfig::encoder(20, false) };
    let p = TcnPolicy::new(&trunk, 3, &mut seed::stream(16, "init", 0)).unwrap();
    let batch = 2;
    let x = inputs(batch * 120, 8);
    let cm = inputs(batch * 3, 9);
    let cv = inputs(batch, 10);
    let spec = p.spec();
    let f = |params: &[f64]| {
        let mut q = p.clone();
        q.params_mut().copy_from_slice(params);
        let (m, v, _) = q.forward_batch(&x, batch).unwrap();
        let obj = m.iter().zip(&cm).map(|(a, b)| a * b).sum::<f64>() + v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>();
        // ReLU pattern via the encoder-shaped sub-networks
        let softwrist::nn::NetworkSpec::TcnPolicy { actor, critic } = &spec else { unreachable!() };
        let na = actor.num_params();
        let a = Tcn::from_params(actor.clone(), params[..na].to_vec()).unwrap();
        let c = Tcn::from_params(critic.clone(), params[na..na + critic.num_params()].to_vec()).unwrap();
        let mut pat = a.forward(&x, batch).unwrap().1.relu_pattern();
        pat.extend(c.forward(&x, batch).unwrap().1.relu_pattern());
        (obj, pat)
    };
    let (_, _, cache) = p.forward_batch(&x, batch).unwrap();
    let mut grad = vec![0.0; p.num_params()];
    p.backward_batch(&cache, &cm, &cv, &mut grad);
    let head = p.log_std_range().start;
    let mut params = p.params().to_vec();
    let kinks = check_tcn(&mut params, SAMPLES, |q: &[f64]| f(q), &grad[..], 17);
    assert!(kinks < SAMPLES / 10);
    assert!(grad[head..].iter().all(|g| *g == 0.0));
}
