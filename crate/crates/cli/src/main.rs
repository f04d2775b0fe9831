use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eigennet::experiment::{self, RunConfig, OUTPUT_ROOT_ENV};
use eigennet::oracle::{analytic_eigenpair, fd_eigenvalues, Preset};
use eigennet::sampling::linspace;

#[derive(Parser)]
#[command(name = "eigennet", version, about = "Learn ODE eigenpairs with a small tanh network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its CSV artifacts.
    Run {
        /// TOML run configuration.
        config: PathBuf,
        /// Override a key, e.g. `--set train.epochs=200`. Repeatable; wins
        /// over the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Root for relative output directories.
        #[arg(long, env = OUTPUT_ROOT_ENV, default_value = experiment::DEFAULT_OUTPUT_ROOT)]
        out_root: PathBuf,
        /// Print progress every N epochs (0 = silent).
        #[arg(long, default_value_t = 50)]
        every: usize,
    },
    /// Run the oracle checks (no training) and print a pass/fail table.
    Verify {
        /// Optional configuration; its seed drives the random probes.
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print a problem's closed-form solution on the evaluation grid as CSV.
    DumpOracle {
        /// dirichlet, sine, linear or sinh.
        problem: String,
        /// Eigenfunctions to include for dirichlet.
        #[arg(long, default_value_t = 5)]
        modes: usize,
        #[arg(long, default_value_t = experiment::EVAL_POINTS)]
        points: usize,
        /// Instead print the finite-difference spectrum on this many nodes.
        #[arg(long, value_name = "NODES")]
        spectrum: Option<usize>,
    },
}

fn load(config: Option<&PathBuf>, overrides: &[String]) -> eigennet::Result<RunConfig> {
    match config {
        Some(p) => experiment::load_config(p, overrides),
        None => experiment::parse_config("", overrides),
    }
}

fn run(config: PathBuf, overrides: Vec<String>, out_root: PathBuf, every: usize) -> eigennet::Result<()> {
    let cfg = load(Some(&config), &overrides)?;
    let dir = cfg.output_path(&out_root);
    eprintln!("writing to {}", dir.display());
    let m = cfg.outputs();
    let summary = experiment::run_experiment(&cfg, &out_root, |e| {
        if every > 0 && (e.epoch + 1) % every == 0 {
            let rq: Vec<String> = e.rayleigh_mean.iter().map(|r| format!("{r:.4}")).collect();
            eprintln!(
                "epoch {:>5}  lr {:.2e}  loss {:.6}  rayleigh [{}]",
                e.epoch + 1,
                e.lr,
                e.loss.total,
                rq.join(", ")
            );
        }
    })?;
    let mut out = io::stdout().lock();
    writeln!(out, "rank  output  rayleigh      reference  l2_error   max_abs").ok();
    for (rank, o) in summary.evaluation.outputs.iter().enumerate() {
        writeln!(
            out,
            "{:>4}  {:>6}  {:<12.6}  {:<9}  {:<9.3e}  {:.3e}",
            rank + 1,
            o.output + 1,
            o.rayleigh,
            o.reference_lambda.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into()),
            o.l2_error,
            o.max_abs_error
        )
        .ok();
    }
    if m > 1 {
        writeln!(out, "max overlap {:.3e}", summary.evaluation.max_overlap).ok();
    }
    writeln!(out, "wall clock {:.1} s", summary.wall_clock_s).ok();
    Ok(())
}

fn verify(config: Option<PathBuf>, overrides: Vec<String>) -> eigennet::Result<bool> {
    let cfg = load(config.as_ref(), &overrides)?;
    let report = experiment::verify(&cfg)?;
    let width = report.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = io::stdout().lock();
    for c in &report {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag}  {:<width$}  {}", c.name, c.detail).ok();
    }
    Ok(report.iter().all(|c| c.passed))
}

fn dump_oracle(problem: &str, modes: usize, points: usize, spectrum: Option<usize>) -> eigennet::Result<()> {
    let preset = Preset::parse(problem)?;
    let (a, b) = preset.interval();
    let mut out = csv_out();
    if let Some(n) = spectrum {
        if preset != Preset::Dirichlet {
            return Err(eigennet::Error::InvalidArgument(
                "--spectrum applies to the dirichlet problem".into(),
            ));
        }
        let fd = fd_eigenvalues(n, a, b)?;
        writeln!(out, "k,exact,finite_difference").ok();
        for (k, v) in fd.iter().enumerate().take(modes.max(1)) {
            let exact = analytic_eigenpair(k + 1, a, b)?.lambda;
            writeln!(out, "{},{exact:.15e},{v:.15e}", k + 1).ok();
        }
        return Ok(());
    }
    let refs = match preset {
        Preset::Dirichlet => (1..=modes.max(1))
            .map(|k| analytic_eigenpair(k, a, b))
            .collect::<eigennet::Result<Vec<_>>>()?,
        p => p.references(p.default_mode()),
    };
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain((1..=refs.len()).map(|i| format!("u_{i}")))
        .collect();
    writeln!(out, "{}", header.join(",")).ok();
    for x in linspace(a, b, points) {
        let row: Vec<String> = std::iter::once(x)
            .chain(refs.iter().map(|r| r.eval(x)))
            .map(|v| format!("{v:.15e}"))
            .collect();
        writeln!(out, "{}", row.join(",")).ok();
    }
    Ok(())
}

fn csv_out() -> io::BufWriter<io::StdoutLock<'static>> {
    io::BufWriter::new(io::stdout().lock())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            out_root,
            every,
        } => run(config, overrides, out_root, every).map(|_| true),
        Command::Verify { config, overrides } => verify(config, overrides),
        Command::DumpOracle {
            problem,
            modes,
            points,
            spectrum,
        } => dump_oracle(&problem, modes, points, spectrum).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
