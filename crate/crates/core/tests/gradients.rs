use rdr_core::divergence::{
    balancing_loss, balancing_loss_grad, mixture_balancing_loss, mixture_balancing_loss_grad,
    MixtureWeight,
};
use rdr_core::network::{backward, forward, init_params, Head, NetworkParams, NetworkSpec};
use rdr_core::numerics::{rng_normal, Matrix, RngState};

fn weighted_output(params: &NetworkParams, spec: &NetworkSpec, x: &Matrix, c: &[f64]) -> f64 {
    let (out, _) = forward(params, spec, x).unwrap();
    out.iter().zip(c).map(|(o, w)| o * w).sum()
}

/// Largest relative error of `backward` against central differences.
fn check(seed: u64, head: Head) -> f64 {
    let mut rng = RngState::new(seed);
    let input_dim = 1 + rng.below(3);
    let depth = 1 + rng.below(3);
    let widths: Vec<usize> = (0..depth).map(|_| 2 + rng.below(6)).collect();
    let spec = NetworkSpec::new(input_dim, widths, head).unwrap();
    let mut params = init_params(&spec, &mut rng).unwrap();
    // nonzero biases too: with zero biases a dead layer puts the next ReLU
    // exactly on its kink, where finite differences are meaningless
    let n = params.num_params();
    params.assign_flat(&rng_normal(&mut rng, n)).unwrap();
    let batch = 1 + rng.below(8);
    let x = Matrix::from_vec(batch, input_dim, rng_normal(&mut rng, batch * input_dim)).unwrap();
    let c = rng_normal(&mut rng, batch);

    let (_, cache) = forward(&params, &spec, &x).unwrap();
    let analytic = backward(&params, &spec, cache, &c).unwrap().flatten();
    let base = params.flatten();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        plus[k] += eps;
        params.assign_flat(&plus).unwrap();
        let fp = weighted_output(&params, &spec, &x, &c);
        let mut minus = base.clone();
        minus[k] -= eps;
        params.assign_flat(&minus).unwrap();
        let fm = weighted_output(&params, &spec, &x, &c);
        let numeric = (fp - fm) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    params.assign_flat(&base).unwrap();
    worst
}

#[test]
fn backward_matches_finite_differences() {
    let heads = [Head::BoundedSoftplus, Head::SoftplusFloor];
    for i in 0..20u64 {
        let head = heads[(i % 2) as usize];
        let err = check(100 + i, head);
        assert!(err <= 1e-4, "config {i} ({head:?}): relative error {err:e}");
    }
}

#[test]
fn linear_head_gradient() {
    for i in 0..5u64 {
        assert!(check(500 + i, Head::Linear) <= 1e-4);
    }
}

#[test]
fn balancing_loss_gradient_matches_finite_differences() {
    let mut rng = RngState::new(8);
    for alpha in [0.0, 0.3, 0.5] {
        let w = MixtureWeight::new(alpha).unwrap();
        let gp: Vec<f64> = (0..7).map(|_| 0.2 + 1.7 * rng.uniform()).collect();
        let gq: Vec<f64> = (0..5).map(|_| 0.2 + 1.7 * rng.uniform()).collect();
        let (dp, dq) = balancing_loss_grad(&gp, &gq, w).unwrap();
        let eps = 1e-6;
        let loss = |p: &[f64], q: &[f64]| balancing_loss(p, q, w).unwrap().loss;
        for i in 0..gp.len() {
            let (mut a, mut b) = (gp.clone(), gp.clone());
            a[i] += eps;
            b[i] -= eps;
            let num = (loss(&a, &gq) - loss(&b, &gq)) / (2.0 * eps);
            assert!((num - dp[i]).abs() <= 1e-6, "p[{i}] {num} vs {}", dp[i]);
        }
        for i in 0..gq.len() {
            let (mut a, mut b) = (gq.clone(), gq.clone());
            a[i] += eps;
            b[i] -= eps;
            let num = (loss(&gp, &a) - loss(&gp, &b)) / (2.0 * eps);
            assert!((num - dq[i]).abs() <= 1e-6, "q[{i}] {num} vs {}", dq[i]);
        }
    }
}

#[test]
fn mixture_loss_gradient_matches_finite_differences() {
    let mut rng = RngState::new(21);
    let samples: Vec<Vec<f64>> = (0..3)
        .map(|k| (0..4 + k).map(|_| 0.3 + 1.5 * rng.uniform()).collect())
        .collect();
    let weights = [1.0 / 3.0; 3];
    let view = |s: &[Vec<f64>]| -> f64 {
        let refs: Vec<&[f64]> = s.iter().map(Vec::as_slice).collect();
        mixture_balancing_loss(&refs, 1, &weights).unwrap()
    };
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    let grads = mixture_balancing_loss_grad(&refs, 1, &weights).unwrap();
    let eps = 1e-6;
    for k in 0..3 {
        for i in 0..samples[k].len() {
            let mut a = samples.clone();
            let mut b = samples.clone();
            a[k][i] += eps;
            b[k][i] -= eps;
            let num = (view(&a) - view(&b)) / (2.0 * eps);
            assert!((num - grads[k][i]).abs() <= 1e-6);
        }
    }
}
