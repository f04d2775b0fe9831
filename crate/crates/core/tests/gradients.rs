//! Finite-difference checks of input derivatives and parameter gradients.

use eigennet::loss::{loss_and_grad, GradOptions};
use eigennet::net::JetBatch;
use eigennet::oracle::Preset;
use eigennet::{Batch, LossWeights, MlpParams, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Scaled down so the N(0,1) weights keep tanh out of saturation and FD
/// truncation error stays below the tolerances.
fn small_net(widths: &[usize], seed: u64, scale: f64) -> MlpParams {
    let mut p = MlpParams::init_gaussian(widths, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for l in p.layers_mut() {
        l.weight *= scale;
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    p
}

#[test]
fn input_derivatives_match_central_differences() {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for seed in 0..4 {
        let p = small_net(&[1, 8, 8, 1], seed, 1.0);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let j = p.forward_jet(x).unwrap()[0];
            let f = |x: f64| p.forward_values(x)[0];
            let (fp, f0, fm) = (f(x + h), f(x), f(x - h));
            let d1 = (fp - fm) / (2.0 * h);
            let d2 = (fp - 2.0 * f0 + fm) / (h * h);
            assert!(rel_err(j.d1, d1) < 1e-6, "d1 {} vs {d1}", j.d1);
            // FD second difference loses ~8 digits to cancellation
            assert!(
                (j.d2 - d2).abs() < 1e-6 * j.d2.abs().max(1.0),
                "d2 {} vs {d2}",
                j.d2
            );
        }
    }
}

fn fd_check(p: &MlpParams, loss: impl Fn(&MlpParams) -> f64, grad: &[f64], tol: f64) {
    let base = p.to_flat();
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let h = 1e-5 * base[i].abs().max(1.0);
        let mut v = base.clone();
        v[i] = base[i] + h;
        q.set_flat(&v);
        let lp = loss(&q);
        v[i] = base[i] - h;
        q.set_flat(&v);
        let lm = loss(&q);
        let fd = (lp - lm) / (2.0 * h);
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3 * scale);
        worst = worst.max(err);
        assert!(err < tol, "param {i}: analytic {} vs fd {fd}", grad[i]);
    }
    eprintln!("worst relative gradient error {worst:e}");
}

#[test]
fn pointwise_residual_gradient() {
    // loss = (u''(x0) + 4 u(x0))^2 through the tape
    let p = small_net(&[1, 8, 8, 1], 7, 0.8);
    let x0 = 0.37;
    let loss = |q: &MlpParams| {
        let j = q.forward_jet(x0).unwrap()[0];
        (j.d2 + 4.0 * j.v).powi(2)
    };
    let (jets, tape) = p.forward_batch(&[x0]).unwrap();
    let r = jets.d2[[0, 0]] + 4.0 * jets.v[[0, 0]];
    let mut up = JetBatch::zeros(1, 1);
    up.d2[[0, 0]] = 2.0 * r;
    up.v[[0, 0]] = 8.0 * r;
    let g = p.backward(&tape, &up).unwrap();
    fd_check(&p, loss, &g.to_flat(), 1e-5);
}

#[test]
fn first_derivative_rows_carry_gradient() {
    // loss = u'(x0)^3 exercises the middle jet rows
    let p = small_net(&[1, 6, 5, 2], 3, 0.8);
    let x0 = -0.2;
    let loss = |q: &MlpParams| q.forward_jet(x0).unwrap()[1].d1.powi(3);
    let (jets, tape) = p.forward_batch(&[x0]).unwrap();
    let mut up = JetBatch::zeros(1, 2);
    up.d1[[0, 1]] = 3.0 * jets.d1[[0, 1]].powi(2);
    let g = p.backward(&tape, &up).unwrap();
    fd_check(&p, loss, &g.to_flat(), 1e-5);
}

fn composite_case(mode: Mode, seed: u64, detach: bool) {
    let spec = Preset::Dirichlet.spec(mode).unwrap();
    let m = mode.outputs();
    let p = small_net(&[1, 8, 8, m], seed, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = Batch::draw(&spec, 256, 8, &mut rng).unwrap();
    let mut w = LossWeights::defaults(m);
    w.top_k = 10;
    // Larger than the default so the regularizer gradient is visible.
    w.reg = 1e-3;
    let opts = GradOptions {
        detach_rayleigh: detach,
    };
    let (_, grad) = loss_and_grad(&p, &batch, &spec, &w, opts).unwrap();
    if detach {
        // Only the value path is comparable; detached R is not a derivative.
        return;
    }
    let loss = |q: &MlpParams| {
        loss_and_grad(q, &batch, &spec, &w, opts)
            .unwrap()
            .0
            .total
    };
    fd_check(&p, loss, &grad.to_flat(), 1e-5);
}

#[test]
fn composite_gradient_fixed_lambda() {
    composite_case(Mode::FixedLambda(4.0), 1, false);
}

#[test]
fn composite_gradient_single_pair() {
    composite_case(Mode::SinglePair, 2, false);
}

#[test]
fn composite_gradient_multi_pair() {
    composite_case(Mode::MultiPair(3), 3, false);
}

#[test]
fn detached_rayleigh_changes_gradient_not_value() {
    let spec = Preset::Dirichlet.spec(Mode::SinglePair).unwrap();
    let p = small_net(&[1, 8, 8, 1], 9, 0.7);
    let batch = Batch::draw(&spec, 128, 8, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let w = LossWeights::defaults(1);
    let (la, ga) = loss_and_grad(&p, &batch, &spec, &w, GradOptions::default()).unwrap();
    let (lb, gb) = loss_and_grad(
        &p,
        &batch,
        &spec,
        &w,
        GradOptions {
            detach_rayleigh: true,
        },
    )
    .unwrap();
    assert_eq!(la, lb);
    assert_ne!(ga, gb);
    composite_case(Mode::SinglePair, 4, true);
}
