//! Adam, the step-decay learning-rate schedule and the training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{loss_and_grad, GradOptions, LossBreakdown, LossWeights};
use crate::net::{Init, MlpParams, ParamGrad};
use crate::sampling::{Batch, ProblemSpec};

/// Interior points seen per epoch when the batch count is not given.
pub const POINTS_PER_EPOCH: usize = 45_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: ParamGrad,
    v: ParamGrad,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: ParamGrad::zeros_like(params),
            v: ParamGrad::zeros_like(params),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. On a non-finite gradient nothing is
    /// modified.
    pub fn step(&mut self, params: &mut MlpParams, grads: &ParamGrad, lr: f64) -> Result<()> {
        if !(grads.is_congruent(params) && self.m.is_congruent(params)) {
            return Err(Error::InvalidArgument(
                "gradient or optimizer state shape does not match parameters".into(),
            ));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr}")));
        }
        grads.check_finite()?;
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let layers = params
            .layers_mut()
            .iter_mut()
            .zip(grads.layers())
            .zip(self.m.layers_mut().iter_mut().zip(self.v.layers_mut()));
        for ((p, g), (m, v)) in layers {
            let ps = p.weight.iter_mut().chain(p.bias.iter_mut());
            let gs = g.weight.iter().chain(g.bias.iter());
            let ms = m.weight.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weight.iter_mut().chain(v.bias.iter_mut());
            for (((p, &g), m), v) in ps.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `lr(e) = max(lr_min, lr0 * decay^floor(e / period))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub period: usize,
    pub lr_min: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr0: 4e-3,
            decay: 0.7,
            period: 100,
            lr_min: 5e-5,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.period) as i32;
        (self.lr0 * self.decay.powi(steps)).max(self.lr_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("train.lr.lr0", "must be > 0"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("train.lr.decay", "must be in (0, 1]"));
        }
        if self.period == 0 {
            return Err(Error::config("train.lr.period", "must be >= 1"));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) {
            return Err(Error::config("train.lr.lr_min", "must be in (0, lr0]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub interior_batch: usize,
    pub boundary_batch: usize,
    /// Defaults to enough batches to cover [`POINTS_PER_EPOCH`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches_per_epoch: Option<usize>,
    pub lr: LrSchedule,
    pub snapshot_epochs: Vec<usize>,
    pub detach_rayleigh: bool,
    /// Global gradient-norm clip; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    /// Skipped steps tolerated in one epoch before the run is aborted.
    pub max_failed_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 1000,
            interior_batch: 1024,
            boundary_batch: 32,
            batches_per_epoch: None,
            lr: LrSchedule::default(),
            snapshot_epochs: vec![1, 50, 100, 200, 500, 1000, 3000, 5000],
            detach_rayleigh: false,
            grad_clip: None,
            max_failed_steps: 10,
        }
    }
}

impl TrainConfig {
    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
            .unwrap_or_else(|| POINTS_PER_EPOCH.div_ceil(self.interior_batch.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.interior_batch == 0 {
            return Err(Error::config("train.interior_batch", "must be >= 1"));
        }
        if self.boundary_batch == 0 {
            return Err(Error::config("train.boundary_batch", "must be >= 1"));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(Error::config("train.batches_per_epoch", "must be >= 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("train.grad_clip", "must be > 0"));
            }
        }
        self.lr.validate()
    }
}

/// Metrics of one epoch. Loss components are means over the epoch's
/// successful steps; Rayleigh statistics are over its per-batch values.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub rayleigh_mean: Vec<f64>,
    pub rayleigh_std: Vec<f64>,
    pub failed_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
}

impl TrainRecord {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn average(steps: &[LossBreakdown], m: usize) -> LossBreakdown {
    let n = steps.len() as f64;
    let avg = |f: &dyn Fn(&LossBreakdown) -> f64| steps.iter().map(f).sum::<f64>() / n;
    let mut out = LossBreakdown {
        residual_l2: avg(&|s| s.residual_l2),
        residual_inf: avg(&|s| s.residual_inf),
        boundary: avg(&|s| s.boundary),
        energy_pen: avg(&|s| s.energy_pen),
        rayleigh_pen: (0..m).map(|i| avg(&|s| s.rayleigh_pen[i])).collect(),
        ortho: avg(&|s| s.ortho),
        reg: avg(&|s| s.reg),
        total: 0.0,
        rayleigh: (0..m).map(|i| avg(&|s| s.rayleigh[i])).collect(),
    };
    out.total = out.component_sum();
    out
}

/// Owns parameters, optimizer state and the sampling stream of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    spec: ProblemSpec,
    weights: LossWeights,
    cfg: TrainConfig,
    params: MlpParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    record: TrainRecord,
}

impl Trainer {
    /// Initializes a network of the given hidden widths. Network weights and
    /// sampling use separate streams of the same seed.
    pub fn new(
        spec: ProblemSpec,
        weights: LossWeights,
        hidden: &[usize],
        init: Init,
        cfg: TrainConfig,
    ) -> Result<Self> {
        let m = spec.mode.outputs();
        let widths: Vec<usize> = std::iter::once(1)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(m))
            .collect();
        let params = MlpParams::init(&widths, cfg.seed, init)?;
        Self::with_params(spec, weights, params, cfg)
    }

    pub fn with_params(
        spec: ProblemSpec,
        weights: LossWeights,
        params: MlpParams,
        cfg: TrainConfig,
    ) -> Result<Self> {
        spec.validate()?;
        weights.validate(spec.mode.outputs())?;
        cfg.validate()?;
        if params.outputs() != spec.mode.outputs() {
            return Err(Error::config(
                "net",
                format!(
                    "network has {} outputs, problem needs {}",
                    params.outputs(),
                    spec.mode.outputs()
                ),
            ));
        }
        if cfg.interior_batch < weights.top_k && weights.mu > 0.0 {
            return Err(Error::config(
                "train.interior_batch",
                format!("must be >= weights.top_k = {}", weights.top_k),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            adam: AdamState::new(&params),
            spec,
            weights,
            cfg,
            params,
            rng,
            record: TrainRecord::default(),
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn record(&self) -> &TrainRecord {
        &self.record
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.record.len()
    }

    pub fn into_parts(self) -> (MlpParams, TrainRecord) {
        (self.params, self.record)
    }

    /// One optimization step on a fresh batch.
    fn step(&mut self, lr: f64) -> Result<LossBreakdown> {
        let batch = Batch::draw(
            &self.spec,
            self.cfg.interior_batch,
            self.cfg.boundary_batch,
            &mut self.rng,
        )?;
        let opts = GradOptions {
            detach_rayleigh: self.cfg.detach_rayleigh,
        };
        let (loss, mut grad) = loss_and_grad(&self.params, &batch, &self.spec, &self.weights, opts)?;
        if let Some(max) = self.cfg.grad_clip {
            let norm = grad.norm();
            if norm > max {
                grad.scale(max / norm);
            }
        }
        self.adam.step(&mut self.params, &grad, lr)?;
        Ok(loss)
    }

    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.record.len();
        let lr = self.cfg.lr.lr_at(epoch);
        let batches = self.cfg.batches_per_epoch();
        let m = self.spec.mode.outputs();
        let mut steps = Vec::with_capacity(batches);
        let mut failed = 0;
        for _ in 0..batches {
            match self.step(lr) {
                Ok(loss) => steps.push(loss),
                Err(
                    Error::DegenerateFunction { .. }
                    | Error::NonFinite { .. }
                    | Error::NonFiniteGradient { .. },
                ) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        let (rayleigh_mean, rayleigh_std) = (0..m)
            .map(|i| mean_std(&steps.iter().map(|s| s.rayleigh[i]).collect::<Vec<_>>()))
            .unzip();
        let loss = if steps.is_empty() {
            LossBreakdown {
                rayleigh_pen: vec![f64::NAN; m],
                rayleigh: vec![f64::NAN; m],
                total: f64::NAN,
                ..Default::default()
            }
        } else {
            average(&steps, m)
        };
        self.record.epochs.push(EpochRecord {
            epoch,
            lr,
            loss,
            rayleigh_mean,
            rayleigh_std,
            failed_steps: failed,
        });
        if failed > self.cfg.max_failed_steps || steps.is_empty() {
            return Err(Error::AbortedRun {
                epoch,
                failures: failed,
                record: Box::new(self.record.clone()),
            });
        }
        Ok(self.record.epochs.last().expect("just pushed"))
    }
}

/// Final parameters, metrics, and the parameters captured after each
/// requested epoch count (0 = before training).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub record: TrainRecord,
    pub snapshots: Vec<(usize, MlpParams)>,
}

/// Runs every configured epoch. The callback sees each finished epoch.
pub fn train(
    spec: &ProblemSpec,
    weights: &LossWeights,
    hidden: &[usize],
    init: Init,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(spec.clone(), weights.clone(), hidden, init, cfg.clone())?;
    let mut snapshots = Vec::new();
    let wants = |e: usize| cfg.snapshot_epochs.contains(&e) || e == cfg.epochs;
    if wants(0) {
        snapshots.push((0, trainer.params().clone()));
    }
    for _ in 0..cfg.epochs {
        on_epoch(trainer.run_epoch()?);
        let done = trainer.epoch();
        if wants(done) {
            snapshots.push((done, trainer.params().clone()));
        }
    }
    let (params, record) = trainer.into_parts();
    Ok(TrainOutcome {
        params,
        record,
        snapshots,
    })
}
