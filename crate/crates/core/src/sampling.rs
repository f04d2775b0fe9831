//! Problem description, Monte Carlo batches and the quadrature shared by all
//! inner products and norms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dirichlet condition `u(x) = value` at an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCondition {
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Eigenvalue supplied; residual is `u'' + lambda u`.
    FixedLambda(f64),
    /// One output, eigenvalue estimated by the Rayleigh quotient.
    SinglePair,
    /// `m` outputs with pairwise orthogonality.
    MultiPair(usize),
}

impl Mode {
    pub fn outputs(&self) -> usize {
        match *self {
            Mode::FixedLambda(_) | Mode::SinglePair => 1,
            Mode::MultiPair(m) => m,
        }
    }

    pub fn uses_rayleigh(&self) -> bool {
        !matches!(self, Mode::FixedLambda(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub a: f64,
    pub b: f64,
    pub bc: Vec<BoundaryCondition>,
    pub mode: Mode,
}

impl ProblemSpec {
    pub fn new(a: f64, b: f64, bc: Vec<BoundaryCondition>, mode: Mode) -> Result<Self> {
        let spec = Self { a, b, bc, mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return Err(Error::config(
                "problem.a/b",
                format!("need finite a < b, got [{}, {}]", self.a, self.b),
            ));
        }
        for c in &self.bc {
            if c.x != self.a && c.x != self.b {
                return Err(Error::config(
                    "problem.bc",
                    format!("boundary location {} is not an endpoint", c.x),
                ));
            }
            if !c.value.is_finite() {
                return Err(Error::config("problem.bc", "boundary value must be finite"));
            }
        }
        match self.mode {
            Mode::MultiPair(0) => return Err(Error::config("problem.m", "must be >= 1")),
            Mode::FixedLambda(l) if !l.is_finite() => {
                return Err(Error::config("problem.lambda", "must be finite"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }
}

/// One Monte Carlo draw of interior and boundary points.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub interior: Vec<f64>,
    pub boundary: Vec<BoundaryCondition>,
}

impl Batch {
    pub fn draw<R: Rng + ?Sized>(
        spec: &ProblemSpec,
        interior: usize,
        boundary: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let interior = sample_interior(spec, interior, rng)?;
        let boundary = sample_boundary(spec, boundary, rng)?;
        Ok(Self { interior, boundary })
    }
}

/// `n` i.i.d. uniform draws on the open interval `(a, b)`.
pub fn sample_interior<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("interior sample size must be >= 1".into()));
    }
    let (a, len) = (spec.a, spec.len());
    Ok((0..n)
        .map(|_| loop {
            let x = a + len * rng.random::<f64>();
            if x > spec.a && x < spec.b {
                break x;
            }
        })
        .collect())
}

/// `n` conditions drawn uniformly with replacement from the spec's list.
/// Repeats act as a weighting of the boundary term.
pub fn sample_boundary<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<BoundaryCondition>> {
    if spec.bc.is_empty() {
        return Err(Error::config("problem.bc", "no boundary conditions"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("boundary sample size must be >= 1".into()));
    }
    Ok((0..n)
        .map(|_| spec.bc[rng.random_range(0..spec.bc.len())])
        .collect())
}

/// `(b - a)/N * sum f(x_i) g(x_i)`.
pub fn mc_inner(f: &[f64], g: &[f64], a: f64, b: f64) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "inner product of lengths {} and {}",
            f.len(),
            g.len()
        )));
    }
    if f.is_empty() {
        return Err(Error::InvalidArgument("inner product of empty samples".into()));
    }
    let sum: f64 = f.iter().zip(g).map(|(x, y)| x * y).sum();
    Ok((b - a) / f.len() as f64 * sum)
}

/// Quadrature estimate of `∫ u²` (the squared L2 norm).
pub fn energy(u: &[f64], a: f64, b: f64) -> Result<f64> {
    mc_inner(u, u, a, b)
}

/// `n` evenly spaced points including both endpoints.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}
