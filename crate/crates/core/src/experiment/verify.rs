use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{self, loss_and_grad, GradOptions, LossWeights};
use crate::net::{Init, MlpParams};
use crate::oracle::{analytic_eigenpair, analytic_fixed_lambda, fd_eigenvalues, Preset};
use crate::sampling::{energy, linspace, mc_inner, Batch, Mode};

use super::RunConfig;

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random small network with nonzero biases.
fn probe_net(widths: &[usize], seed: u64) -> Result<MlpParams> {
    let mut p = MlpParams::init(widths, seed, Init::Xavier)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for l in p.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    Ok(p)
}

fn jet_check(seed: u64) -> Result<Check> {
    let p = probe_net(&[1, 8, 8, 1], seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x: f64 = rng.random_range(-1.0..1.0);
        let j = p.forward_jet(x)?[0];
        let f = |x: f64| p.forward_values(x)[0];
        let (fp, f0, fm) = (f(x + h), f(x), f(x - h));
        e1 = e1.max(rel(j.d1, (fp - fm) / (2.0 * h)));
        e2 = e2.max((j.d2 - (fp - 2.0 * f0 + fm) / (h * h)).abs() / j.d2.abs().max(1.0));
    }
    Ok(Check::new(
        "input derivatives vs finite differences",
        e1 < 1e-6 && e2 < 1e-6,
        format!("max rel err d1 {e1:.2e}, d2 {e2:.2e}"),
    ))
}

fn gradient_check(mode: Mode, seed: u64) -> Result<Check> {
    let spec = Preset::Dirichlet.spec(mode)?;
    let m = mode.outputs();
    let p = probe_net(&[1, 6, 6, m], seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = Batch::draw(&spec, 128, 8, &mut rng)?;
    let mut w = LossWeights::defaults(m);
    w.top_k = 10;
    w.reg = 1e-3;
    let opts = GradOptions::default();
    let (_, grad) = loss_and_grad(&p, &batch, &spec, &w, opts)?;
    let grad = grad.to_flat();
    let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let base = p.to_flat();
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let h = 1e-5 * base[i].abs().max(1.0);
        let mut v = base.clone();
        v[i] = base[i] + h;
        q.set_flat(&v);
        let lp = loss_and_grad(&q, &batch, &spec, &w, opts)?.0.total;
        v[i] = base[i] - h;
        q.set_flat(&v);
        let lm = loss_and_grad(&q, &batch, &spec, &w, opts)?.0.total;
        let fd = (lp - lm) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3 * scale);
        worst = worst.max(err);
    }
    let name = match mode {
        Mode::FixedLambda(_) => "loss gradient vs finite differences (fixed eigenvalue)",
        Mode::SinglePair => "loss gradient vs finite differences (single pair)",
        Mode::MultiPair(_) => "loss gradient vs finite differences (multi pair)",
    };
    Ok(Check::new(name, worst < 1e-5, format!("max rel err {worst:.2e}")))
}

fn quadrature_checks() -> Result<Vec<Check>> {
    let grid = linspace(0.0, PI, 10_000);
    let u: Vec<f64> = grid.iter().map(|x| (2.0 / PI).sqrt() * x.sin()).collect();
    let e = energy(&u, 0.0, PI)?;
    let mut worst: f64 = 0.0;
    for i in 1..=5 {
        for j in 1..=5 {
            if i != j {
                let f: Vec<f64> = grid.iter().map(|x| (i as f64 * x).sin()).collect();
                let g: Vec<f64> = grid.iter().map(|x| (j as f64 * x).sin()).collect();
                worst = worst.max(mc_inner(&f, &g, 0.0, PI)?.abs());
            }
        }
    }
    Ok(vec![
        Check::new(
            "energy of unit sine on 10^4 points",
            (e - 1.0).abs() < 0.01,
            format!("{e:.6}"),
        ),
        Check::new(
            "distinct sines orthogonal",
            worst < 0.05,
            format!("max |<sin ix, sin jx>| {worst:.2e}"),
        ),
    ])
}

fn rayleigh_check() -> Result<Check> {
    let grid = linspace(0.0, PI, 10_000);
    let mut worst: f64 = 0.0;
    for k in 1..=5 {
        let s = analytic_eigenpair(k, 0.0, PI)?;
        let u = s.on_grid(&grid);
        let lap: Vec<f64> = grid.iter().map(|&x| s.jet(x).d2).collect();
        let r = loss::rayleigh(&u, &lap, 0.0, PI)?;
        worst = worst.max(rel(r, (k * k) as f64));
    }
    Ok(Check::new(
        "Rayleigh quotient of exact eigenfunctions k=1..5",
        worst < 0.02,
        format!("max rel err {worst:.2e}"),
    ))
}

fn fd_spectrum_checks() -> Result<Vec<Check>> {
    let ev = fd_eigenvalues(1000, 0.0, PI)?;
    let worst = (1..=5)
        .map(|k| rel(ev[k - 1], (k * k) as f64))
        .fold(0.0, f64::max);
    // error ~ C h², so log-log slope between grids should be 2
    let err = |n: usize| -> Result<f64> { Ok((fd_eigenvalues(n, 0.0, PI)?[4] - 25.0).abs()) };
    let h = |n: usize| PI / (n + 1) as f64;
    let (e50, e200, e1000) = (err(50)?, err(200)?, err(1000)?);
    let r1 = (e50 / e200).ln() / (h(50) / h(200)).ln();
    let r2 = (e200 / e1000).ln() / (h(200) / h(1000)).ln();
    Ok(vec![
        Check::new(
            "finite-difference spectrum n=1000",
            worst < 1e-4,
            format!("max rel err k<=5 {worst:.2e}"),
        ),
        Check::new(
            "finite-difference convergence order",
            (r1 - 2.0).abs() < 0.05 && (r2 - 2.0).abs() < 0.05,
            format!("orders {r1:.4}, {r2:.4}"),
        ),
    ])
}

fn analytic_check(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res: f64 = 0.0;
    let mut bc: f64 = 0.0;
    let mut sols = vec![];
    for p in [Preset::Sine, Preset::Linear, Preset::Sinh] {
        sols.push((p.spec(p.default_mode())?, analytic_fixed_lambda(p)?));
    }
    for k in 1..=5 {
        let spec = Preset::Dirichlet.spec(Mode::SinglePair)?;
        sols.push((spec, analytic_eigenpair(k, 0.0, PI)?));
    }
    for (spec, s) in &sols {
        for _ in 0..100 {
            let x = rng.random_range(spec.a..spec.b);
            res = res.max(s.residual(x).abs());
        }
        for c in &spec.bc {
            bc = bc.max((s.eval(c.x) - c.value).abs());
        }
    }
    Ok(Check::new(
        "closed-form solutions satisfy equation and boundary data",
        res < 1e-10 && bc < 1e-12,
        format!("max residual {res:.2e}, boundary {bc:.2e}"),
    ))
}

/// Runs the oracle suite without training. Random probes are seeded from
/// the configuration.
pub fn verify(cfg: &RunConfig) -> Result<Vec<Check>> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let mut out = vec![jet_check(seed)?];
    for mode in [Mode::FixedLambda(4.0), Mode::SinglePair, Mode::MultiPair(3)] {
        out.push(gradient_check(mode, seed)?);
    }
    out.extend(quadrature_checks()?);
    out.push(rayleigh_check()?);
    out.extend(fd_spectrum_checks()?);
    out.push(analytic_check(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_for_several_seeds() {
        for seed in 0..3 {
            let mut cfg = RunConfig::preset(Preset::Dirichlet);
            cfg.train.seed = seed;
            let report = verify(&cfg).unwrap();
            for c in &report {
                assert!(c.passed, "{}: {}", c.name, c.detail);
            }
        }
    }
}
