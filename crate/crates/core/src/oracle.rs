//! Closed-form reference solutions, the finite-difference Dirichlet spectrum
//! and error metrics used to judge trained networks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::sampling::{mc_inner, BoundaryCondition, Mode, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `amp * sin(freq * (x - a))`
    Sine { amp: f64, freq: f64 },
    /// `slope * x`
    Linear { slope: f64 },
    /// `sinh(x) / sinh(b)`
    Sinh { scale: f64 },
}

/// A closed-form solution of `u'' + lambda u = 0` on `[a, b]` with Dirichlet
/// data at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSolution {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    /// Exact `∫_a^b u²`.
    pub energy: f64,
    shape: Shape,
}

impl AnalyticSolution {
    pub fn jet(&self, x: f64) -> Jet2 {
        match self.shape {
            Shape::Sine { amp, freq } => {
                let (s, c) = (freq * (x - self.a)).sin_cos();
                Jet2::new(amp * s, amp * freq * c, -amp * freq * freq * s)
            }
            Shape::Linear { slope } => Jet2::new(slope * x, slope, 0.0),
            Shape::Sinh { scale } => Jet2::new(x.sinh() / scale, x.cosh() / scale, x.sinh() / scale),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.jet(x).v
    }

    /// `u''(x) + lambda u(x)`, zero up to rounding.
    pub fn residual(&self, x: f64) -> f64 {
        let j = self.jet(x);
        j.d2 + self.lambda * j.v
    }

    pub fn boundary(&self) -> Vec<BoundaryCondition> {
        vec![
            BoundaryCondition {
                x: self.a,
                value: self.eval(self.a),
            },
            BoundaryCondition {
                x: self.b,
                value: self.eval(self.b),
            },
        ]
    }

    pub fn on_grid(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// The `k`-th Dirichlet eigenpair of `-u''` on `[a, b]`, normalized to unit
/// energy: `sqrt(2/L) sin(k pi (x - a)/L)`, `lambda = (k pi / L)^2`. On
/// `[0, pi]` this is `sqrt(2/pi) sin(kx)` with `lambda = k^2`.
pub fn analytic_eigenpair(k: usize, a: f64, b: f64) -> Result<AnalyticSolution> {
    if k == 0 {
        return Err(Error::InvalidArgument("eigenpair index starts at 1".into()));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}]")));
    }
    let len = b - a;
    let freq = k as f64 * PI / len;
    Ok(AnalyticSolution {
        a,
        b,
        lambda: freq * freq,
        energy: 1.0,
        shape: Shape::Sine {
            amp: (2.0 / len).sqrt(),
            freq,
        },
    })
}

/// Built-in problems. `Dirichlet` is the eigenproblem on `[0, pi]`; the
/// others have a known eigenvalue and a unique solution on `[0, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `-u'' = lambda u`, `u(0) = u(pi) = 0`.
    Dirichlet,
    /// `u'' + 4u = 0`, `u(0) = u(pi/2) = 0`; solution `sin 2x`.
    Sine,
    /// `u'' = 0`, `u(0) = 0`, `u(pi/2) = 1`; solution `2x/pi`.
    Linear,
    /// `u'' - u = 0`, `u(0) = 0`, `u(pi/2) = 1`; solution `sinh x / sinh(pi/2)`.
    Sinh,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Dirichlet, Preset::Sine, Preset::Linear, Preset::Sinh];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Dirichlet => "dirichlet",
            Preset::Sine => "sine",
            Preset::Linear => "linear",
            Preset::Sinh => "sinh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("problem.preset", format!("unknown preset {s:?}")))
    }

    pub fn interval(&self) -> (f64, f64) {
        match self {
            Preset::Dirichlet => (0.0, PI),
            _ => (0.0, PI / 2.0),
        }
    }

    /// The eigenvalue of the fixed-eigenvalue problems.
    pub fn known_lambda(&self) -> Option<f64> {
        match self {
            Preset::Dirichlet => None,
            Preset::Sine => Some(4.0),
            Preset::Linear => Some(0.0),
            Preset::Sinh => Some(-1.0),
        }
    }

    pub fn default_mode(&self) -> Mode {
        match self.known_lambda() {
            Some(l) => Mode::FixedLambda(l),
            None => Mode::MultiPair(3),
        }
    }

    pub fn spec(&self, mode: Mode) -> Result<ProblemSpec> {
        let (a, b) = self.interval();
        let bc = match self {
            Preset::Dirichlet => vec![
                BoundaryCondition { x: a, value: 0.0 },
                BoundaryCondition { x: b, value: 0.0 },
            ],
            _ => analytic_fixed_lambda(*self)?.boundary(),
        };
        ProblemSpec::new(a, b, bc, mode)
    }

    /// Reference functions for a run in `mode`, one per network output.
    /// Empty when the preset has no closed form for that mode.
    pub fn references(&self, mode: Mode) -> Vec<AnalyticSolution> {
        let (a, b) = self.interval();
        match (self, mode) {
            (Preset::Dirichlet, Mode::SinglePair) => vec![analytic_eigenpair(1, a, b).unwrap()],
            (Preset::Dirichlet, Mode::MultiPair(m)) => {
                (1..=m).map(|k| analytic_eigenpair(k, a, b).unwrap()).collect()
            }
            (Preset::Dirichlet, Mode::FixedLambda(l)) => {
                // fixed lambda matching one of k^2
                let k = l.sqrt().round();
                if k >= 1.0 && (k * k - l).abs() < 1e-9 {
                    vec![analytic_eigenpair(k as usize, a, b).unwrap()]
                } else {
                    vec![]
                }
            }
            (p, Mode::FixedLambda(l)) if p.known_lambda() == Some(l) => {
                vec![analytic_fixed_lambda(*p).unwrap()]
            }
            _ => vec![],
        }
    }
}

/// Solution of one of the fixed-eigenvalue presets.
pub fn analytic_fixed_lambda(preset: Preset) -> Result<AnalyticSolution> {
    let (a, b) = preset.interval();
    let sol = match preset {
        Preset::Sine => AnalyticSolution {
            a,
            b,
            lambda: 4.0,
            energy: PI / 4.0,
            shape: Shape::Sine { amp: 1.0, freq: 2.0 },
        },
        Preset::Linear => AnalyticSolution {
            a,
            b,
            lambda: 0.0,
            // ∫_0^{π/2} (2x/π)² dx
            energy: PI / 6.0,
            shape: Shape::Linear { slope: 2.0 / PI },
        },
        Preset::Sinh => {
            let s = b.sinh();
            AnalyticSolution {
                a,
                b,
                lambda: -1.0,
                // ∫ sinh² = sinh(2x)/4 - x/2
                energy: ((2.0 * b).sinh() / 4.0 - b / 2.0) / (s * s),
                shape: Shape::Sinh { scale: s },
            }
        }
        Preset::Dirichlet => {
            return Err(Error::InvalidArgument(
                "dirichlet preset has no single fixed-eigenvalue solution".into(),
            ))
        }
    };
    Ok(sol)
}

/// Spectrum of the 3-point Dirichlet Laplacian with `n` interior nodes on
/// `[a, b]`, ascending: `(2/h²)(1 - cos(j pi h / (b - a)))`, `h = (b-a)/(n+1)`.
pub fn fd_eigenvalues(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid needs at least one node".into()));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}]")));
    }
    let len = b - a;
    let h = len / (n + 1) as f64;
    Ok((1..=n)
        .map(|j| 2.0 / (h * h) * (1.0 - (j as f64 * PI * h / len).cos()))
        .collect())
}

/// `min_{s = ±1} sqrt(<s p - r, s p - r>)`.
pub fn sign_invariant_l2_error(pred: &[f64], reference: &[f64], a: f64, b: f64) -> Result<f64> {
    let dist = |s: f64| -> Result<f64> {
        let d: Vec<f64> = pred.iter().zip(reference).map(|(p, r)| s * p - r).collect();
        Ok(mc_inner(&d, &d, a, b)?.max(0.0).sqrt())
    };
    if pred.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "error between {} and {} samples",
            pred.len(),
            reference.len()
        )));
    }
    Ok(dist(1.0)?.min(dist(-1.0)?))
}

/// Scales both functions to unit energy before the sign-invariant error.
pub fn normalized_l2_error(pred: &[f64], reference: &[f64], a: f64, b: f64) -> Result<f64> {
    let unit = |u: &[f64]| -> Result<Vec<f64>> {
        let e = mc_inner(u, u, a, b)?;
        if e < crate::loss::DEGENERATE_NORM {
            return Err(Error::DegenerateFunction { output: 0, norm: e });
        }
        let k = e.sqrt().recip();
        Ok(u.iter().map(|v| v * k).collect())
    };
    sign_invariant_l2_error(&unit(pred)?, &unit(reference)?, a, b)
}

pub fn max_abs_error(pred: &[f64], reference: &[f64]) -> f64 {
    pred.iter()
        .zip(reference)
        .map(|(p, r)| (p - r).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::linspace;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_solutions() -> Vec<AnalyticSolution> {
        let mut v: Vec<_> = (1..=5).map(|k| analytic_eigenpair(k, 0.0, PI).unwrap()).collect();
        v.push(analytic_eigenpair(2, -1.0, 2.5).unwrap());
        for p in [Preset::Sine, Preset::Linear, Preset::Sinh] {
            v.push(analytic_fixed_lambda(p).unwrap());
        }
        v
    }

    #[test]
    fn eigenvalues_are_squares() {
        for (k, lam) in [(1, 1.0), (3, 9.0), (5, 25.0)] {
            let s = analytic_eigenpair(k, 0.0, PI).unwrap();
            assert_relative_eq!(s.lambda, lam, max_relative = 1e-14);
        }
        assert!(analytic_eigenpair(0, 0.0, PI).is_err());
    }

    #[test]
    fn fixed_solution_values() {
        let lin = analytic_fixed_lambda(Preset::Linear).unwrap();
        assert_relative_eq!(lin.eval(PI / 2.0), 1.0, epsilon = 1e-15);
        let sine = analytic_fixed_lambda(Preset::Sine).unwrap();
        assert_relative_eq!(sine.eval(PI / 4.0), 1.0, epsilon = 1e-15);
        let sinh = analytic_fixed_lambda(Preset::Sinh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = rng.random_range(0.0..PI / 2.0);
            assert!(sinh.residual(x).abs() < 1e-10);
        }
        assert!(analytic_fixed_lambda(Preset::Dirichlet).is_err());
    }

    #[test]
    fn every_solution_satisfies_its_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in all_solutions() {
            for _ in 0..100 {
                let x = rng.random_range(s.a..s.b);
                assert!(s.residual(x).abs() < 1e-10, "{s:?} at {x}");
            }
            let bc = s.boundary();
            if s.lambda > 0.0 && s.energy == 1.0 {
                assert!(bc.iter().all(|c| c.value.abs() < 1e-12));
            }
            // derivative jets agree with the values
            let x = 0.5 * (s.a + s.b);
            let h = 1e-5;
            let fd = (s.eval(x + h) - s.eval(x - h)) / (2.0 * h);
            assert!((fd - s.jet(x).d1).abs() < 1e-7);
        }
    }

    #[test]
    fn stated_energies_match_quadrature() {
        for s in all_solutions() {
            // midpoint rule, 20k cells
            let n = 20_000;
            let h = (s.b - s.a) / n as f64;
            let e: f64 = (0..n)
                .map(|i| s.eval(s.a + h * (i as f64 + 0.5)).powi(2) * h)
                .sum();
            assert_relative_eq!(e, s.energy, max_relative = 1e-7);
        }
    }

    #[test]
    fn preset_specs() {
        let spec = Preset::Linear.spec(Mode::FixedLambda(0.0)).unwrap();
        assert_eq!(spec.bc[1].x, PI / 2.0);
        assert_relative_eq!(spec.bc[1].value, 1.0, epsilon = 1e-15);
        assert_eq!(Preset::parse("sinh").unwrap(), Preset::Sinh);
        assert!(Preset::parse("nope").is_err());
        assert_eq!(Preset::Dirichlet.references(Mode::MultiPair(4)).len(), 4);
        assert_eq!(Preset::Dirichlet.references(Mode::FixedLambda(9.0))[0].lambda, 9.0);
        assert!(Preset::Dirichlet.references(Mode::FixedLambda(2.0)).is_empty());
        assert!(Preset::Sine.references(Mode::FixedLambda(3.0)).is_empty());
    }

    #[test]
    fn fd_spectrum_approaches_squares() {
        let ev = fd_eigenvalues(1000, 0.0, PI).unwrap();
        assert_eq!(ev.len(), 1000);
        for k in 1..=5 {
            let exact = (k * k) as f64;
            assert!((ev[k - 1] - exact).abs() / exact < 1e-4, "k={k}: {}", ev[k - 1]);
        }
        assert!((ev[0] - 1.0).abs() < 1e-5);
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fd_single_node() {
        let ev = fd_eigenvalues(1, 0.0, PI).unwrap();
        let h = PI / 2.0;
        // 1x1 matrix [2/h²]
        assert_relative_eq!(ev[0], 2.0 / (h * h), max_relative = 1e-15);
        assert!(fd_eigenvalues(0, 0.0, PI).is_err());
    }

    #[test]
    fn fd_eigenvalues_solve_the_tridiagonal_system() {
        // Check A v = λ v with the discrete sine vector, independent of the
        // closed form's derivation.
        let n = 37;
        let (a, b) = (0.0, 2.0);
        let h = (b - a) / (n + 1) as f64;
        let ev = fd_eigenvalues(n, a, b).unwrap();
        for j in [1usize, 5, 20, 37] {
            let v: Vec<f64> = (1..=n)
                .map(|i| (j as f64 * PI * i as f64 / (n + 1) as f64).sin())
                .collect();
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                let av = (2.0 * v[i] - left - right) / (h * h);
                assert!((av - ev[j - 1] * v[i]).abs() < 1e-9 * ev[j - 1].max(1.0));
            }
        }
    }

    #[test]
    fn fd_second_order_convergence() {
        for k in 1..=5usize {
            let exact = (k * k) as f64;
            let errs: Vec<(f64, f64)> = [50usize, 200, 1000]
                .iter()
                .map(|&n| {
                    let h = PI / (n + 1) as f64;
                    (h, (fd_eigenvalues(n, 0.0, PI).unwrap()[k - 1] - exact).abs())
                })
                .collect();
            for w in errs.windows(2) {
                let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
                assert!((rate - 2.0).abs() < 0.05, "k={k} rate {rate}");
            }
        }
    }

    #[test]
    fn sign_invariant_error_values() {
        let xs = linspace(0.0, PI, 1000);
        let r: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        assert_eq!(sign_invariant_l2_error(&neg, &r, 0.0, PI).unwrap(), 0.0);
        assert_eq!(sign_invariant_l2_error(&r, &r, 0.0, PI).unwrap(), 0.0);
        let off: Vec<f64> = r.iter().map(|v| v + 0.1).collect();
        let e = sign_invariant_l2_error(&off, &r, 0.0, PI).unwrap();
        assert!((e - 0.1 * PI.sqrt()).abs() < 1e-12, "{e}");
    }

    #[test]
    fn normalized_error_ignores_amplitude() {
        let xs = linspace(0.0, PI, 500);
        let r: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let scaled: Vec<f64> = r.iter().map(|v| -3.5 * v).collect();
        assert!(normalized_l2_error(&scaled, &r, 0.0, PI).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn sign_invariant_error_is_pseudometric(
            f in prop::collection::vec(-2.0f64..2.0, 8),
            g in prop::collection::vec(-2.0f64..2.0, 8),
            h in prop::collection::vec(-2.0f64..2.0, 8),
        ) {
            let d = |x: &[f64], y: &[f64]| sign_invariant_l2_error(x, y, 0.0, 1.0).unwrap();
            prop_assert!((d(&f, &g) - d(&g, &f)).abs() < 1e-12);
            let nf: Vec<f64> = f.iter().map(|v| -v).collect();
            prop_assert_eq!(d(&f, &f), 0.0);
            prop_assert_eq!(d(&nf, &f), 0.0);
            prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
        }
    }
}
