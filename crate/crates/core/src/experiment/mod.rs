//! Run configuration, experiment orchestration and CSV export.
//!
//! A configuration is TOML. Anything left out is filled from the defaults of
//! the chosen preset and mode; `key=value` overrides are applied on top of
//! the file, so they win over it. The fully resolved configuration
//! serializes back to TOML and parses to an identical value.

mod run;
mod verify;

pub use run::{evaluate, metrics_header, references, run_experiment, Evaluation, OutputEval, RunSummary};
pub use verify::{verify, Check};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::net::Init;
use crate::optim::TrainConfig;
use crate::oracle::{analytic_fixed_lambda, Preset};
use crate::sampling::{BoundaryCondition, Mode, ProblemSpec};

/// Environment variable naming the directory relative output paths live in.
pub const OUTPUT_ROOT_ENV: &str = "EIGENNET_OUT";
/// Output root when the environment variable is unset.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
/// Points of the uniform evaluation grid used for dumps and summaries.
pub const EVAL_POINTS: usize = 1000;
pub const DEFAULT_HIDDEN: [usize; 5] = [26, 40, 50, 40, 26];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    FixedLambda,
    SinglePair,
    MultiPair,
}

impl ModeKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed-lambda" => Ok(Self::FixedLambda),
            "single-pair" => Ok(Self::SinglePair),
            "multi-pair" => Ok(Self::MultiPair),
            _ => Err(Error::config(
                "problem.mode",
                format!("expected fixed-lambda, single-pair or multi-pair, got {s:?}"),
            )),
        }
    }

    fn of(mode: Mode) -> Self {
        match mode {
            Mode::FixedLambda(_) => Self::FixedLambda,
            Mode::SinglePair => Self::SinglePair,
            Mode::MultiPair(_) => Self::MultiPair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: ModeKind,
    /// Network outputs; always 1 outside multi-pair mode.
    pub outputs: usize,
    /// Only in fixed-lambda mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub a: f64,
    pub b: f64,
    pub bc: Vec<BoundaryCondition>,
}

impl ProblemConfig {
    pub fn mode(&self) -> Result<Mode> {
        match (self.mode, self.lambda) {
            (ModeKind::FixedLambda, Some(l)) => Ok(Mode::FixedLambda(l)),
            (ModeKind::FixedLambda, None) => {
                Err(Error::config("problem.lambda", "required in fixed-lambda mode"))
            }
            (_, Some(_)) => Err(Error::config(
                "problem.lambda",
                "only allowed in fixed-lambda mode",
            )),
            (ModeKind::SinglePair, None) => Ok(Mode::SinglePair),
            (ModeKind::MultiPair, None) => Ok(Mode::MultiPair(self.outputs)),
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.a, self.b, self.bc.clone(), self.mode()?)
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in problem providing defaults and ground truth; absent for a
    /// fully custom problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Relative paths are taken from the output root.
    pub output_dir: PathBuf,
    pub hidden: Vec<usize>,
    pub init: Init,
    pub problem: ProblemConfig,
    pub weights: LossWeights,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Default configuration of a preset in its default mode.
    pub fn preset(preset: Preset) -> Self {
        let mut t = toml::Table::new();
        t.insert("preset".into(), preset.name().into());
        resolve(t).expect("preset defaults are valid")
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        self.problem.spec()
    }

    pub fn outputs(&self) -> usize {
        self.problem.outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![1];
        w.extend(&self.hidden);
        w.push(self.outputs());
        w
    }

    pub fn validate(&self) -> Result<()> {
        let mode = self.problem.mode()?;
        if self.problem.mode != ModeKind::MultiPair && self.problem.outputs != 1 {
            return Err(Error::config(
                "problem.outputs",
                "must be 1 unless mode is multi-pair",
            ));
        }
        if self.problem.mode == ModeKind::MultiPair && self.problem.outputs < 2 {
            return Err(Error::config("problem.outputs", "multi-pair needs >= 2"));
        }
        ProblemSpec::new(self.problem.a, self.problem.b, self.problem.bc.clone(), mode)?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden", "need at least one layer, all widths >= 1"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        self.init.validate()?;
        self.weights.validate(self.outputs())?;
        self.train.validate()
    }

    /// Where this run writes, given an output root.
    pub fn output_path(&self, root: &Path) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            root.join(&self.output_dir)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Output root from the environment, falling back to [`DEFAULT_OUTPUT_ROOT`].
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Parses TOML text plus `key=value` overrides (dotted keys, TOML values;
/// bare words are taken as strings).
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        Error::Parse(e.to_string())
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    resolve(table)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, overrides)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    // parse the value as the right-hand side of a TOML assignment
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("{p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn get<'a>(table: &'a toml::Table, path: &[&str]) -> Option<&'a toml::Value> {
    let (last, init) = path.split_last()?;
    let mut cur = table;
    for p in init {
        cur = cur.get(*p)?.as_table()?;
    }
    cur.get(*last)
}

fn get_str<'a>(table: &'a toml::Table, path: &[&str]) -> Result<Option<&'a str>> {
    match get(table, path) {
        None => Ok(None),
        Some(v) => v
            .as_str()
            .map(Some)
            .ok_or_else(|| Error::config(path.join("."), "expected a string")),
    }
}

fn get_float(table: &toml::Table, path: &[&str]) -> Result<Option<f64>> {
    match get(table, path) {
        None => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(*f)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(_) => Err(Error::config(path.join("."), "expected a number")),
    }
}

fn get_count(table: &toml::Table, path: &[&str]) -> Result<Option<usize>> {
    match get(table, path) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(_) => Err(Error::config(path.join("."), "expected a non-negative integer")),
    }
}

/// Builds the defaults implied by the preset and mode keys, overlays the
/// user table, and validates the result.
fn resolve(user: toml::Table) -> Result<RunConfig> {
    let preset = match get_str(&user, &["preset"])? {
        Some(s) => Some(Preset::parse(s).map_err(|_| {
            Error::config("preset", format!("unknown preset {s:?}"))
        })?),
        None if get(&user, &["problem", "bc"]).is_some() => None,
        None => Some(Preset::Dirichlet),
    };
    let default_mode = preset.map(|p| p.default_mode());
    let kind = match get_str(&user, &["problem", "mode"])? {
        Some(s) => ModeKind::parse(s)?,
        None => default_mode.map(ModeKind::of).unwrap_or(ModeKind::SinglePair),
    };
    let outputs = match (kind, get_count(&user, &["problem", "outputs"])?) {
        (_, Some(m)) => m,
        (ModeKind::MultiPair, None) => match default_mode {
            Some(Mode::MultiPair(m)) => m,
            _ => 3,
        },
        _ => 1,
    };
    let lambda = match kind {
        ModeKind::FixedLambda => get_float(&user, &["problem", "lambda"])?
            .or_else(|| preset.and_then(|p| p.known_lambda())),
        _ => None,
    };

    let (a, b) = preset.map(|p| p.interval()).unwrap_or((0.0, 1.0));
    let bc = match preset {
        Some(p) => p.spec(Mode::SinglePair)?.bc,
        None => Vec::new(),
    };
    let mut weights = LossWeights::defaults(outputs.max(1));
    // Fixed-eigenvalue presets have a unique solution; aim the energy
    // penalty at its energy instead of at 1.
    if let (Some(p), ModeKind::FixedLambda) = (preset, kind) {
        if lambda.is_some() && lambda == p.known_lambda() {
            weights.c = analytic_fixed_lambda(p)?.energy;
        }
    }
    let seed = get_count(&user, &["train", "seed"])?.unwrap_or(0);
    let output_dir = format!(
        "{}-{}{}-seed{seed}",
        preset.map(|p| p.name()).unwrap_or("custom"),
        match kind {
            ModeKind::FixedLambda => "fixed-lambda",
            ModeKind::SinglePair => "single-pair",
            ModeKind::MultiPair => "multi-pair",
        },
        if kind == ModeKind::MultiPair {
            format!("-m{outputs}")
        } else {
            String::new()
        },
    );
    let defaults = RunConfig {
        preset,
        output_dir: output_dir.into(),
        hidden: DEFAULT_HIDDEN.to_vec(),
        init: Init::default(),
        problem: ProblemConfig {
            mode: kind,
            outputs,
            lambda,
            a,
            b,
            bc,
        },
        weights,
        train: TrainConfig::default(),
    };
    let mut merged: toml::Table = toml::Table::try_from(&defaults)
        .map_err(|e| Error::Parse(e.to_string()))?;
    merge(&mut merged, user);
    let cfg: RunConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Deep merge; arrays and scalars from `over` replace those in `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn empty_config_is_multi_pair_dirichlet_with_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg.preset, Some(Preset::Dirichlet));
        assert_eq!(cfg.spec().unwrap().mode, Mode::MultiPair(3));
        assert_eq!(cfg.weights, LossWeights::defaults(3));
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!((cfg.problem.a, cfg.problem.b), (0.0, PI));
    }

    #[test]
    fn outputs_change_gamma_length() {
        let cfg = parse_config("[problem]\noutputs = 5\n", &[]).unwrap();
        assert_eq!(cfg.weights.gamma.len(), 5);
        assert_eq!(cfg.widths(), vec![1, 26, 40, 50, 40, 26, 5]);
    }

    #[test]
    fn fixed_presets_target_their_energy() {
        let cfg = parse_config("preset = \"sine\"", &[]).unwrap();
        assert_eq!(cfg.spec().unwrap().mode, Mode::FixedLambda(4.0));
        assert!((cfg.weights.c - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn override_beats_file() {
        let text = "[weights]\nnu = 3.0\n[train]\nepochs = 7\n";
        let cfg = parse_config(text, &["weights.nu=0.5".into(), "train.epochs=9".into()]).unwrap();
        assert_eq!(cfg.weights.nu, 0.5);
        assert_eq!(cfg.train.epochs, 9);
    }

    #[test]
    fn bare_word_override_is_a_string() {
        let cfg = parse_config("", &["preset=linear".into()]).unwrap();
        assert_eq!(cfg.preset, Some(Preset::Linear));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[weights]\nnu = -1.0", "weights.nu"),
            ("[weights]\nbogus = 1", "bogus"),
            ("hidden = [4, 0]", "hidden"),
            ("[problem]\nmode = \"single-pair\"\nlambda = 2.0", "problem.lambda"),
            ("[problem]\nmode = \"single-pair\"\noutputs = 2", "problem.outputs"),
            ("[problem]\nmode = \"fixed-lambda\"", "problem.lambda"),
            ("[problem]\nmode = \"sideways\"", "problem.mode"),
            ("[train]\ninterior_batch = 0", "train.interior_batch"),
            ("[train.lr]\ndecay = 2.0", "train.lr.decay"),
            ("preset = \"nope\"", "preset"),
            ("init = { xavier-gain = -1.0 }", "init"),
            ("[weights]\ngamma = [1.0]", "weights.gamma"),
        ];
        for (text, field) in cases {
            let err = parse_config(text, &[]).unwrap_err().to_string();
            assert!(err.contains(field), "{text:?}: {err}");
        }
    }

    #[test]
    fn resolved_round_trip() {
        for p in Preset::ALL {
            let cfg = parse_config("", &[format!("preset={}", p.name())]).unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(parse_config(&text, &[]).unwrap(), cfg, "{text}");
        }
        let cfg = parse_config("[problem]\noutputs = 4\n[train]\ngrad_clip = 1.5", &[]).unwrap();
        assert_eq!(parse_config(&cfg.to_toml().unwrap(), &[]).unwrap(), cfg);
        let cfg = parse_config("init = \"lecun\"", &[]).unwrap();
        assert_eq!(cfg.init, Init::Lecun);
        assert_eq!(parse_config(&cfg.to_toml().unwrap(), &[]).unwrap(), cfg);
    }

    #[test]
    fn custom_problem_without_preset() {
        let text = "[problem]\nmode = \"single-pair\"\na = 0.0\nb = 2.0\nbc = [{ x = 0.0, value = 0.0 }, { x = 2.0, value = 0.0 }]";
        let cfg = parse_config(text, &[]).unwrap();
        assert_eq!(cfg.preset, None);
        assert_eq!(cfg.spec().unwrap().b, 2.0);
        assert_eq!(parse_config(&cfg.to_toml().unwrap(), &[]).unwrap(), cfg);
    }

    #[test]
    fn output_path_is_relative_to_root() {
        let cfg = RunConfig::preset(Preset::Linear);
        assert_eq!(
            cfg.output_path(Path::new("/tmp/r")),
            PathBuf::from("/tmp/r/linear-fixed-lambda-seed0")
        );
    }
}
