use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss;
use crate::net::MlpParams;
use crate::optim::{train, EpochRecord, TrainRecord};
use crate::oracle::{
    max_abs_error, normalized_l2_error, sign_invariant_l2_error, AnalyticSolution,
};
use crate::sampling::{energy, linspace, mc_inner};

use super::{RunConfig, EVAL_POINTS};

/// Quality of one network output on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputEval {
    /// Network output index, 0-based.
    pub output: usize,
    /// Rayleigh quotient on the grid; NaN for a numerically zero output.
    pub rayleigh: f64,
    pub energy: f64,
    /// Eigenvalue of the matched reference, when one is known.
    pub reference_lambda: Option<f64>,
    /// Sign-invariant L2 error. Eigenfunctions are compared at unit energy.
    pub l2_error: f64,
    /// Sign-invariant max-abs error, normalized like `l2_error`.
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub grid: Vec<f64>,
    /// Grid values per network output.
    pub values: Vec<Vec<f64>>,
    /// Sorted by Rayleigh quotient in eigenvalue modes.
    pub outputs: Vec<OutputEval>,
    /// Largest |<u_i, u_j>| between distinct outputs at unit energy.
    pub max_overlap: f64,
}

impl Evaluation {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.rayleigh).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub params: MlpParams,
    pub record: TrainRecord,
    pub evaluation: Evaluation,
    pub wall_clock_s: f64,
}

/// Ground truth for a configuration, empty unless it is an unmodified preset.
pub fn references(cfg: &RunConfig) -> Result<Vec<AnalyticSolution>> {
    let Some(p) = cfg.preset else {
        return Ok(Vec::new());
    };
    let spec = cfg.spec()?;
    let stock = p.spec(spec.mode)?;
    if stock != spec {
        return Ok(Vec::new());
    }
    Ok(p.references(spec.mode))
}

fn aligned_max_abs(pred: &[f64], reference: &[f64]) -> f64 {
    let flipped: Vec<f64> = pred.iter().map(|v| -v).collect();
    max_abs_error(pred, reference).min(max_abs_error(&flipped, reference))
}

fn unit_energy(u: &[f64], a: f64, b: f64) -> Result<Vec<f64>> {
    let e = energy(u, a, b)?;
    if e.sqrt() < loss::DEGENERATE_NORM {
        return Ok(u.to_vec());
    }
    Ok(u.iter().map(|v| v / e.sqrt()).collect())
}

/// Evaluates a network on the uniform grid against the configuration's
/// ground truth.
pub fn evaluate(params: &MlpParams, cfg: &RunConfig) -> Result<Evaluation> {
    let spec = cfg.spec()?;
    let (a, b) = (spec.a, spec.b);
    let grid = linspace(a, b, EVAL_POINTS);
    let (jets, _) = params.forward_batch(&grid)?;
    let m = jets.outputs();
    let values: Vec<Vec<f64>> = (0..m).map(|i| jets.v.column(i).to_vec()).collect();
    let laps: Vec<Vec<f64>> = (0..m).map(|i| jets.d2.column(i).to_vec()).collect();

    let mut order: Vec<usize> = (0..m).collect();
    let rq: Vec<f64> = (0..m)
        .map(|i| loss::rayleigh(&values[i], &laps[i], a, b).unwrap_or(f64::NAN))
        .collect();
    if spec.mode.uses_rayleigh() {
        order.sort_by(|&i, &j| rq[i].total_cmp(&rq[j]));
    }
    let refs = references(cfg)?;
    let normalize = spec.mode.uses_rayleigh();
    let mut outputs = Vec::with_capacity(m);
    for (rank, &i) in order.iter().enumerate() {
        let mut out = OutputEval {
            output: i,
            rayleigh: rq[i],
            energy: energy(&values[i], a, b)?,
            reference_lambda: None,
            l2_error: f64::NAN,
            max_abs_error: f64::NAN,
        };
        if let Some(r) = refs.get(rank) {
            let truth = r.on_grid(&grid);
            out.reference_lambda = Some(r.lambda);
            if normalize {
                out.l2_error =
                    normalized_l2_error(&values[i], &truth, a, b).unwrap_or(f64::NAN);
                let u = unit_energy(&values[i], a, b)?;
                out.max_abs_error = aligned_max_abs(&u, &truth);
            } else {
                out.l2_error = sign_invariant_l2_error(&values[i], &truth, a, b)?;
                out.max_abs_error = aligned_max_abs(&values[i], &truth);
            }
        }
        outputs.push(out);
    }

    let units: Vec<Vec<f64>> = values
        .iter()
        .map(|u| unit_energy(u, a, b))
        .collect::<Result<_>>()?;
    let mut max_overlap: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            max_overlap = max_overlap.max(mc_inner(&units[i], &units[j], a, b)?.abs());
        }
    }
    Ok(Evaluation {
        grid,
        values,
        outputs,
        max_overlap,
    })
}

/// Decimal with 16 significant digits.
fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn indexed(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (1..=m).map(move |i| format!("{prefix}_{i}"))
}

/// Column names of metrics.csv; they depend only on the output count.
pub fn metrics_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "lr", "total", "residual_l2", "residual_inf", "boundary", "energy_pen"]
        .map(String::from)
        .into();
    h.extend(indexed("rayleigh_pen", m));
    h.extend(["ortho", "reg"].map(String::from));
    h.extend(indexed("rayleigh_mean", m));
    h.extend(indexed("rayleigh_std", m));
    h.push("failed_steps".into());
    h
}

fn metrics_row(e: &EpochRecord) -> Vec<String> {
    let l = &e.loss;
    // 1-based so that row N matches functions_epochN.csv
    let mut r = vec![(e.epoch + 1).to_string(), num(e.lr), num(l.total)];
    r.extend([l.residual_l2, l.residual_inf, l.boundary, l.energy_pen].map(num));
    r.extend(l.rayleigh_pen.iter().map(|&v| num(v)));
    r.extend([l.ortho, l.reg].map(num));
    r.extend(e.rayleigh_mean.iter().map(|&v| num(v)));
    r.extend(e.rayleigh_std.iter().map(|&v| num(v)));
    r.push(e.failed_steps.to_string());
    r
}

fn write_metrics(dir: &Path, m: usize, record: &TrainRecord) -> Result<()> {
    let rows: Vec<_> = record.epochs.iter().map(metrics_row).collect();
    write_csv(&dir.join("metrics.csv"), &metrics_header(m), &rows)
}

fn write_functions(
    dir: &Path,
    epoch: usize,
    params: &MlpParams,
    refs: &[AnalyticSolution],
    a: f64,
    b: f64,
) -> Result<()> {
    let grid = linspace(a, b, EVAL_POINTS);
    let (jets, _) = params.forward_batch(&grid)?;
    let m = jets.outputs();
    let mut header = vec!["x".to_string()];
    header.extend(indexed("u", m));
    header.extend(indexed("exact", refs.len()));
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(p, &x)| {
            let mut r = vec![num(x)];
            r.extend((0..m).map(|i| num(jets.v[[p, i]])));
            r.extend(refs.iter().map(|s| num(s.eval(x))));
            r
        })
        .collect();
    write_csv(&dir.join(format!("functions_epoch{epoch}.csv")), &header, &rows)
}

fn write_summary(dir: &Path, eval: &Evaluation, epochs: usize, wall: f64) -> Result<()> {
    let header = [
        "rank",
        "output",
        "rayleigh",
        "reference_lambda",
        "lambda_rel_error",
        "energy",
        "l2_error",
        "max_abs_error",
        "max_overlap",
        "epochs",
        "wall_clock_s",
    ]
    .map(String::from);
    let rows: Vec<Vec<String>> = eval
        .outputs
        .iter()
        .enumerate()
        .map(|(rank, o)| {
            let lam = o.reference_lambda.unwrap_or(f64::NAN);
            let rel = if lam != 0.0 {
                (o.rayleigh - lam).abs() / lam.abs()
            } else {
                (o.rayleigh - lam).abs()
            };
            vec![
                (rank + 1).to_string(),
                (o.output + 1).to_string(),
                num(o.rayleigh),
                num(lam),
                num(rel),
                num(o.energy),
                num(o.l2_error),
                num(o.max_abs_error),
                num(eval.max_overlap),
                epochs.to_string(),
                num(wall),
            ]
        })
        .collect();
    write_csv(&dir.join("summary.csv"), &header, &rows)
}

/// Trains one configuration and writes its artifacts under `root` (see
/// [`RunConfig::output_path`]). An aborted run still leaves its partial
/// metrics behind.
pub fn run_experiment(
    cfg: &RunConfig,
    root: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.spec()?;
    let m = cfg.outputs();
    let dir = cfg.output_path(root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let resolved = dir.join("config.resolved");
    fs::write(&resolved, cfg.to_toml()?).map_err(|e| Error::io(&resolved, e))?;

    let outcome = match train(&spec, &cfg.weights, &cfg.hidden, cfg.init, &cfg.train, on_epoch) {
        Ok(o) => o,
        Err(Error::AbortedRun {
            epoch,
            failures,
            record,
        }) => {
            write_metrics(&dir, m, &record)?;
            return Err(Error::AbortedRun {
                epoch,
                failures,
                record,
            });
        }
        Err(e) => return Err(e),
    };
    write_metrics(&dir, m, &outcome.record)?;
    let refs = references(cfg)?;
    for (epoch, p) in &outcome.snapshots {
        write_functions(&dir, *epoch, p, &refs, spec.a, spec.b)?;
    }
    let evaluation = evaluate(&outcome.params, cfg)?;
    let wall_clock_s = start.elapsed().as_secs_f64();
    write_summary(&dir, &evaluation, outcome.record.len(), wall_clock_s)?;
    Ok(RunSummary {
        dir,
        params: outcome.params,
        record: outcome.record,
        evaluation,
        wall_clock_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Preset;

    #[test]
    fn number_format_keeps_sixteen_digits() {
        assert_eq!(num(1.0), "1.000000000000000e0");
        assert_eq!(num(std::f64::consts::PI).parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn metrics_columns_follow_outputs() {
        let h = metrics_header(3);
        assert_eq!(h.len(), 7 + 3 + 2 + 3 + 3 + 1);
        assert_eq!(h[7], "rayleigh_pen_1");
        assert_eq!(h.last().unwrap(), "failed_steps");
    }

    #[test]
    fn exact_eigenfunctions_evaluate_perfectly() {
        // A custom network cannot represent sin exactly, so check the
        // metric plumbing with the references themselves.
        let cfg = RunConfig::preset(Preset::Dirichlet);
        let refs = references(&cfg).unwrap();
        assert_eq!(refs.len(), 3);
        let grid = linspace(0.0, std::f64::consts::PI, EVAL_POINTS);
        let t = refs[1].on_grid(&grid);
        let flipped: Vec<f64> = t.iter().map(|v| -2.0 * v).collect();
        let u = unit_energy(&flipped, grid[0], *grid.last().unwrap()).unwrap();
        assert!(aligned_max_abs(&u, &t) < 1e-2);
    }

    #[test]
    fn modified_preset_has_no_references() {
        let mut cfg = RunConfig::preset(Preset::Linear);
        cfg.problem.bc[1].value = 2.0;
        assert!(references(&cfg).unwrap().is_empty());
    }

    #[test]
    fn sorted_by_rayleigh() {
        let mut cfg = RunConfig::preset(Preset::Dirichlet);
        cfg.hidden = vec![6];
        let p = MlpParams::init(&cfg.widths(), 3, crate::net::Init::Xavier).unwrap();
        let ev = evaluate(&p, &cfg).unwrap();
        let rq = ev.eigenvalues();
        assert!(rq.windows(2).all(|w| w[0] <= w[1]), "{rq:?}");
        assert!(ev.max_overlap <= 1.0 + 1e-12);
    }
}
