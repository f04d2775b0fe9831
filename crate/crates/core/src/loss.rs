//! Loss terms for the eigenpair objective and their composition.
//!
//! All integrals use the Monte Carlo quadrature from [`crate::sampling`] over
//! the interior points of the current batch. The composite objective is
//! differentiated in closed form with respect to every output jet and then
//! pulled back through the network with [`MlpParams::backward`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::net::{JetBatch, MlpParams, ParamGrad};
use crate::sampling::{mc_inner, Batch, Mode, ProblemSpec};

/// Below this `<u, u>` the Rayleigh quotient is not evaluated.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// Squared L2 norm of the residual.
    pub alpha: f64,
    /// Top-K surrogate of the sup norm of the residual.
    pub mu: f64,
    /// Absolute boundary error, summed over the sampled boundary points.
    pub delta: f64,
    /// Energy penalty `beta |E(u) - c|`.
    pub beta: f64,
    pub c: f64,
    /// Per-output weight of `R(u_i)^2`.
    pub gamma: Vec<f64>,
    /// Pairwise orthogonality.
    pub nu: f64,
    /// Squared-weight regularizer.
    pub reg: f64,
    pub top_k: usize,
}

impl LossWeights {
    /// Default coefficients for `m` outputs; `gamma_i = 1/i`.
    pub fn defaults(m: usize) -> Self {
        Self {
            alpha: 0.1,
            mu: 0.1,
            delta: 0.5,
            beta: 1.5,
            c: 1.0,
            gamma: harmonic_gamma(m),
            nu: 2.0,
            reg: 1e-8,
            top_k: 40,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let named = [
            ("weights.alpha", self.alpha),
            ("weights.mu", self.mu),
            ("weights.delta", self.delta),
            ("weights.beta", self.beta),
            ("weights.nu", self.nu),
            ("weights.reg", self.reg),
        ];
        for (field, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::config("weights.c", format!("must be > 0, got {}", self.c)));
        }
        if self.top_k == 0 {
            return Err(Error::config("weights.top_k", "must be >= 1"));
        }
        if self.gamma.len() != m {
            return Err(Error::config(
                "weights.gamma",
                format!("expected {m} entries, got {}", self.gamma.len()),
            ));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::config("weights.gamma", format!("must be >= 0, got {g}")));
        }
        Ok(())
    }
}

pub fn harmonic_gamma(m: usize) -> Vec<f64> {
    (1..=m).map(|i| 1.0 / i as f64).collect()
}

/// Weighted contributions of every term; `total` is their sum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub residual_l2: f64,
    pub residual_inf: f64,
    pub boundary: f64,
    pub energy_pen: f64,
    /// `gamma_i R(u_i)^2` per output (zero in fixed-eigenvalue mode).
    pub rayleigh_pen: Vec<f64>,
    pub ortho: f64,
    pub reg: f64,
    pub total: f64,
    /// Batch Rayleigh quotient per output; in fixed-eigenvalue mode, the
    /// quotient of the current function is still reported.
    pub rayleigh: Vec<f64>,
}

impl LossBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.residual_l2
            + self.residual_inf
            + self.boundary
            + self.energy_pen
            + self.rayleigh_pen.iter().sum::<f64>()
            + self.ortho
            + self.reg
    }
}

/// `u'' + lambda u` per point.
pub fn residual(jets: &[Jet2], lambda: f64) -> Vec<f64> {
    jets.iter().map(|j| j.d2 + lambda * j.v).collect()
}

/// Same form with the Rayleigh quotient standing in for the eigenvalue.
pub fn rayleigh_residual(jets: &[Jet2], rq: f64) -> Vec<f64> {
    residual(jets, rq)
}

pub fn residual_l2(r: &[f64], a: f64, b: f64) -> Result<f64> {
    mc_inner(r, r, a, b)
}

/// Mean of the `k` largest `|r|`.
pub fn residual_inf_topk(r: &[f64], k: usize) -> Result<f64> {
    let idx = top_k_indices(r, k)?;
    Ok(idx.iter().map(|&i| r[i].abs()).sum::<f64>() / k as f64)
}

fn top_k_indices(r: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > r.len() {
        return Err(Error::InvalidArgument(format!(
            "top-k with k = {k} over {} residuals",
            r.len()
        )));
    }
    let mut idx: Vec<usize> = (0..r.len()).collect();
    let by_abs_desc = |&i: &usize, &j: &usize| r[j].abs().total_cmp(&r[i].abs()).then(i.cmp(&j));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_abs_desc);
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// Mean absolute error over the boundary points.
pub fn boundary_l1(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "boundary predictions {} vs targets {}",
            preds.len(),
            targets.len()
        )));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// `beta |e - c|`.
pub fn energy_penalty(e: f64, beta: f64, c: f64) -> f64 {
    beta * (e - c).abs()
}

/// `R(u) = -<u'', u> / <u, u>`.
pub fn rayleigh(u: &[f64], lap: &[f64], a: f64, b: f64) -> Result<f64> {
    let den = mc_inner(u, u, a, b)?;
    if den < DEGENERATE_NORM {
        return Err(Error::DegenerateFunction {
            output: 0,
            norm: den,
        });
    }
    Ok(-mc_inner(lap, u, a, b)? / den)
}

/// `nu * sum_{i<j} <u_i, u_j>^2`.
pub fn ortho_penalty(outputs: &[Vec<f64>], nu: f64, a: f64, b: f64) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..outputs.len() {
        for j in i + 1..outputs.len() {
            let g = mc_inner(&outputs[i], &outputs[j], a, b)?;
            sum += g * g;
        }
    }
    Ok(nu * sum)
}

/// `w * sum W^2` over weight matrices; biases are not penalized.
pub fn param_reg(params: &MlpParams, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    w * params
        .layers()
        .iter()
        .map(|l| l.weight.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
}

/// Knobs that change how the objective is differentiated, not its value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradOptions {
    /// Treat `R(u)` inside the residual as a constant.
    pub detach_rayleigh: bool,
}

/// Loss value only.
pub fn composite_loss(
    params: &MlpParams,
    batch: &Batch,
    spec: &ProblemSpec,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    Ok(loss_and_grad(params, batch, spec, weights, GradOptions::default())?.0)
}

/// Loss value and its exact parameter gradient.
pub fn loss_and_grad(
    params: &MlpParams,
    batch: &Batch,
    spec: &ProblemSpec,
    weights: &LossWeights,
    opts: GradOptions,
) -> Result<(LossBreakdown, ParamGrad)> {
    let m = spec.mode.outputs();
    if params.outputs() != m {
        return Err(Error::InvalidArgument(format!(
            "network has {} outputs, problem needs {m}",
            params.outputs()
        )));
    }
    weights.validate(m)?;
    let xs: Vec<f64> = batch
        .interior
        .iter()
        .copied()
        .chain(batch.boundary.iter().map(|c| c.x))
        .collect();
    let (jets, tape) = params.forward_batch(&xs)?;
    let (mut breakdown, upstream) = objective(&jets, batch, spec, weights, opts)?;
    let mut grad = params.backward(&tape, &upstream)?;
    breakdown.reg = param_reg(params, weights.reg);
    breakdown.total = breakdown.component_sum();
    grad.add_weight_decay(params, weights.reg);
    Ok((breakdown, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates every output-level term on `jets` (interior rows first, then
/// boundary rows) and returns the gradient with respect to each jet entry.
/// The parameter regularizer is left to the caller.
fn objective(
    jets: &JetBatch,
    batch: &Batch,
    spec: &ProblemSpec,
    weights: &LossWeights,
    opts: GradOptions,
) -> Result<(LossBreakdown, JetBatch)> {
    let n = batch.interior.len();
    let nb = batch.boundary.len();
    let m = jets.outputs();
    if n == 0 {
        return Err(Error::InvalidArgument("batch has no interior points".into()));
    }
    let (a, b) = (spec.a, spec.b);
    let w = (b - a) / n as f64;
    let mut out = LossBreakdown {
        rayleigh_pen: vec![0.0; m],
        rayleigh: vec![0.0; m],
        ..Default::default()
    };
    let mut up = JetBatch::zeros(n + nb, m);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(m);

    for i in 0..m {
        let u: Vec<f64> = (0..n).map(|p| jets.v[[p, i]]).collect();
        let lap: Vec<f64> = (0..n).map(|p| jets.d2[[p, i]]).collect();

        let uu = mc_inner(&u, &u, a, b)?;
        let lu = mc_inner(&lap, &u, a, b)?;
        let rq = if uu >= DEGENERATE_NORM {
            Some(-lu / uu)
        } else {
            None
        };

        let eigenvalue = match spec.mode {
            Mode::FixedLambda(l) => l,
            _ => rq.ok_or(Error::DegenerateFunction {
                output: i,
                norm: uu,
            })?,
        };
        out.rayleigh[i] = rq.unwrap_or(f64::NAN);

        let r: Vec<f64> = u.iter().zip(&lap).map(|(u, l)| l + eigenvalue * u).collect();

        // dL/dr
        let mut gr: Vec<f64> = r.iter().map(|ri| weights.alpha * 2.0 * w * ri).collect();
        out.residual_l2 += weights.alpha * mc_inner(&r, &r, a, b)?;
        if weights.mu > 0.0 {
            let k = weights.top_k;
            let idx = top_k_indices(&r, k)?;
            out.residual_inf += weights.mu * idx.iter().map(|&p| r[p].abs()).sum::<f64>() / k as f64;
            for p in idx {
                gr[p] += weights.mu * sign(r[p]) / k as f64;
            }
        }

        let e = uu;
        out.energy_pen += energy_penalty(e, weights.beta, weights.c);
        let ge = weights.beta * sign(e - weights.c);

        for p in 0..n {
            up.v[[p, i]] += gr[p] * eigenvalue + ge * 2.0 * w * u[p];
            up.d2[[p, i]] += gr[p];
        }

        if let (Some(rq), true) = (rq, spec.mode.uses_rayleigh()) {
            let gamma = weights.gamma[i];
            out.rayleigh_pen[i] = gamma * rq * rq;
            let mut g_rq = 2.0 * gamma * rq;
            if !opts.detach_rayleigh {
                g_rq += gr.iter().zip(&u).map(|(g, u)| g * u).sum::<f64>();
            }
            // dR/du_p = -(w/<u,u>)(u''_p + 2 R u_p), dR/du''_p = -(w/<u,u>) u_p
            let k = -w / uu;
            for p in 0..n {
                up.v[[p, i]] += g_rq * k * (lap[p] + 2.0 * rq * u[p]);
                up.d2[[p, i]] += g_rq * k * u[p];
            }
        }

        if nb > 0 && weights.delta > 0.0 {
            let preds: Vec<f64> = (0..nb).map(|q| jets.v[[n + q, i]]).collect();
            let targets: Vec<f64> = batch.boundary.iter().map(|c| c.value).collect();
            // L1 norm over the sampled boundary multiset: each repeated
            // endpoint adds its error again.
            out.boundary += weights.delta * nb as f64 * boundary_l1(&preds, &targets)?;
            for q in 0..nb {
                up.v[[n + q, i]] += weights.delta * sign(preds[q] - targets[q]);
            }
        }

        values.push(u);
    }

    if m > 1 && weights.nu > 0.0 {
        out.ortho = ortho_penalty(&values, weights.nu, a, b)?;
        for i in 0..m {
            for j in i + 1..m {
                let g = mc_inner(&values[i], &values[j], a, b)?;
                let k = 2.0 * weights.nu * g * w;
                for p in 0..n {
                    up.v[[p, i]] += k * values[j][p];
                    up.v[[p, j]] += k * values[i][p];
                }
            }
        }
    }

    out.total = out.component_sum();
    Ok((out, up))
}
