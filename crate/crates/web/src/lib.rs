//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: train a network a few epochs at a time and read back
//! its curves, evaluate closed-form solutions, and list the
//! finite-difference spectrum next to the exact one.

use eigennet::experiment::{self, RunConfig};
use eigennet::oracle::{analytic_eigenpair, fd_eigenvalues, Preset};
use eigennet::sampling::linspace;
use eigennet::Trainer;
use wasm_bindgen::prelude::*;

/// Points on the plotted grid.
pub const PLOT_POINTS: usize = 200;

/// Browser-sized run: smaller network and batches than the CLI defaults.
fn demo_config(problem: &str, seed: u64) -> Result<RunConfig, String> {
    let mut sets = vec![
        format!("train.seed={seed}"),
        "hidden=[20, 20, 20]".into(),
        "train.interior_batch=256".into(),
        "train.boundary_batch=16".into(),
        "train.batches_per_epoch=4".into(),
    ];
    match problem {
        "single" => sets.extend(["preset=dirichlet".into(), "problem.mode=single-pair".into()]),
        "multi" => sets.extend([
            "preset=dirichlet".into(),
            "problem.mode=multi-pair".into(),
            "problem.outputs=3".into(),
        ]),
        "sine" | "linear" | "sinh" => sets.push(format!("preset={problem}")),
        _ => return Err(format!("unknown demo problem {problem:?}")),
    }
    experiment::parse_config("", &sets).map_err(|e| e.to_string())
}

/// Network training state plus what the page needs to plot it.
pub struct Demo {
    cfg: RunConfig,
    trainer: Trainer,
    grid: Vec<f64>,
}

impl Demo {
    pub fn new(problem: &str, seed: u64) -> Result<Self, String> {
        let cfg = demo_config(problem, seed)?;
        let spec = cfg.spec().map_err(|e| e.to_string())?;
        let trainer = Trainer::new(
            spec.clone(),
            cfg.weights.clone(),
            &cfg.hidden,
            cfg.init,
            cfg.train.clone(),
        )
        .map_err(|e| e.to_string())?;
        Ok(Self {
            grid: linspace(spec.a, spec.b, PLOT_POINTS),
            cfg,
            trainer,
        })
    }

    pub fn outputs(&self) -> usize {
        self.cfg.outputs()
    }

    /// Runs `epochs` epochs; returns `[epoch, loss, R_1.., std_1..]` of the
    /// last one, or just `[epoch]` when nothing ran.
    pub fn step(&mut self, epochs: usize) -> Result<Vec<f64>, String> {
        let mut last = vec![self.trainer.epoch() as f64];
        for _ in 0..epochs {
            let e = self.trainer.run_epoch().map_err(|e| e.to_string())?;
            last = vec![(e.epoch + 1) as f64, e.loss.total];
            last.extend(&e.rayleigh_mean);
            last.extend(&e.rayleigh_std);
        }
        Ok(last)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Network values, output-major (`outputs` rows of `grid().len()`).
    pub fn values(&self) -> Vec<f64> {
        let m = self.outputs();
        let rows: Vec<Vec<f64>> = self
            .grid
            .iter()
            .map(|&x| self.trainer.params().forward_values(x))
            .collect();
        (0..m).flat_map(|i| rows.iter().map(move |r| r[i])).collect()
    }

    /// Reference curves in the same layout as `values`; empty when unknown.
    pub fn reference(&self) -> Vec<f64> {
        experiment::references(&self.cfg)
            .unwrap_or_default()
            .iter()
            .flat_map(|r| r.on_grid(&self.grid))
            .collect()
    }
}

/// Closed-form curve: `k`-th Dirichlet eigenfunction on [0, pi] for
/// `dirichlet`, the unique solution otherwise. Returns `[x.., u..]`.
pub fn analytic(problem: &str, k: usize, points: usize) -> Result<Vec<f64>, String> {
    let preset = Preset::parse(problem).map_err(|e| e.to_string())?;
    let (a, b) = preset.interval();
    let sol = match preset {
        Preset::Dirichlet => analytic_eigenpair(k, a, b),
        p => eigennet::oracle::analytic_fixed_lambda(p),
    }
    .map_err(|e| e.to_string())?;
    let xs = linspace(a, b, points.max(2));
    let us = sol.on_grid(&xs);
    Ok(xs.into_iter().chain(us).collect())
}

/// First `count` eigenvalues on [0, pi]: `[exact.., finite-difference..]`.
pub fn spectrum(nodes: usize, count: usize) -> Result<Vec<f64>, String> {
    let fd = fd_eigenvalues(nodes, 0.0, std::f64::consts::PI).map_err(|e| e.to_string())?;
    let count = count.min(fd.len());
    let exact = (1..=count).map(|k| (k * k) as f64);
    Ok(exact.chain(fd.into_iter().take(count)).collect())
}

#[wasm_bindgen]
pub struct Session(Demo);

#[wasm_bindgen]
impl Session {
    /// `problem` is one of single, multi, sine, linear, sinh.
    #[wasm_bindgen(constructor)]
    pub fn new(problem: &str, seed: u32) -> Result<Session, JsError> {
        Demo::new(problem, seed.into()).map(Session).map_err(|e| JsError::new(&e))
    }

    pub fn outputs(&self) -> usize {
        self.0.outputs()
    }

    pub fn step(&mut self, epochs: usize) -> Result<Vec<f64>, JsError> {
        self.0.step(epochs).map_err(|e| JsError::new(&e))
    }

    pub fn grid(&self) -> Vec<f64> {
        self.0.grid().to_vec()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.values()
    }

    pub fn reference(&self) -> Vec<f64> {
        self.0.reference()
    }
}

#[wasm_bindgen]
pub fn analytic_curve(problem: &str, k: usize, points: usize) -> Result<Vec<f64>, JsError> {
    analytic(problem, k, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fd_spectrum(nodes: usize, count: usize) -> Result<Vec<f64>, JsError> {
    spectrum(nodes, count).map_err(|e| JsError::new(&e))
}
