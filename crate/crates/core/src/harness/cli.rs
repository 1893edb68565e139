//! `lsqopt` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{bound_report, empirical_h_norm, empirical_matrix_deviation};
use crate::error::{Error, Result};
use crate::io::save_instance;
use crate::optim::{
    Algorithm, BetaPolicy, BoundsChoice, EpsilonChoice, RunConfig, StepSizeRule, StopCriteria, LARGE_BATCH_THRESHOLD,
};
use crate::problem::{Consistency, Decay, ProblemSpec, DEFAULT_NOISE_RADIUS};
use crate::rng::{mix_seed, rng_from_seed};
use crate::sampling::{draw_batch, minibatch_gradient, squared_norm_probs};

use super::config::expand_config_args;
use super::experiment::{configure_threads, run_experiment, run_sweep, ExperimentConfig, ProblemSource, SweepConfig};
use super::output;

#[derive(Debug, Parser)]
#[command(
    name = "lsqopt",
    version,
    about = "Stochastic least-squares optimizers and experiment harness"
)]
#[command(
    after_help = "Flags may also come from a flat `key = value` file given with --config FILE; \
                        flags on the command line override it. LSQOPT_THREADS caps worker threads."
)]
pub struct Cli {
    /// Read flags from a `key = value` file (command-line flags win).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance (or standardize a CSV) and save it.
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Run a trial battery and write traces, per-run and summary CSVs.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Run a grid over batch sizes, epsilon levels and u-upper decades.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Evaluate the closed-form bounds for an instance.
    #[command(args_override_self = true)]
    Bounds(BoundsArgs),
    /// Accuracy-level table (successes, mean first hit, max first hit) from trace CSVs.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Load a saved instance instead of generating one.
    #[arg(long, value_name = "FILE")]
    pub instance: Option<PathBuf>,
    /// Load and standardize a numeric CSV table.
    #[arg(long, value_name = "FILE", conflicts_with = "instance")]
    pub csv: Option<PathBuf>,
    /// Target column of --csv (0-based).
    #[arg(long)]
    pub target: Option<usize>,
    /// Singular value decay profile: ed or ad.
    #[arg(long, default_value = "ed")]
    pub decay: Decay,
    #[arg(long, default_value_t = 20.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.7)]
    pub q: f64,
    #[arg(long = "lambda-d", default_value_t = 1.0)]
    pub lambda_d: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    /// consistent or inconsistent.
    #[arg(long, default_value = "consistent")]
    pub consistency: Consistency,
    /// Radius of the right-hand-side perturbation for inconsistent problems.
    #[arg(long = "noise-radius", default_value_t = DEFAULT_NOISE_RADIUS)]
    pub noise_radius: f64,
}

impl ProblemArgs {
    fn spec(&self, seed: u64) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.decay, self.kappa, self.q, self.n, self.d, seed);
        spec.lambda_d = self.lambda_d;
        if self.consistency == Consistency::Inconsistent {
            spec = spec.inconsistent(self.noise_radius);
        }
        spec
    }

    fn source(&self, seed: u64) -> Result<ProblemSource> {
        if let Some(path) = &self.instance {
            return Ok(ProblemSource::File(path.clone()));
        }
        if let Some(path) = &self.csv {
            let target = self
                .target
                .ok_or_else(|| Error::Config("--csv needs --target COLUMN".into()))?;
            return Ok(ProblemSource::Csv {
                path: path.clone(),
                target,
            });
        }
        let spec = self.spec(seed);
        spec.validate()?;
        Ok(ProblemSource::Synthetic(spec))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output instance file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Hyperparameter flags shared by `run` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct AlgoArgs {
    /// sga, rmsprop, sgd or rmsp2sgd.
    #[arg(long, default_value = "sga")]
    pub algo: Algorithm,
    /// `auto`, `auto:I` (decade I) or a number.
    #[arg(long = "u-upper", default_value = "auto")]
    pub u_upper: String,
    /// `auto` (u-upper / u-ratio) or a number.
    #[arg(long = "u-lower", default_value = "auto")]
    pub u_lower: String,
    #[arg(long = "u-ratio", default_value_t = 5.0)]
    pub u_ratio: f64,
    /// midpoint, lower_bound or fixed:BETA.
    #[arg(long = "beta-policy", default_value = "midpoint")]
    pub beta_policy: BetaPolicy,
    /// Step-size rule or fixed value; defaults by algorithm and batch regime.
    #[arg(long)]
    pub eta: Option<StepSizeRule>,
    /// SGD step-size rule after an RMSP2SGD switch.
    #[arg(long = "sgd-eta")]
    pub sgd_eta: Option<StepSizeRule>,
    #[arg(long = "large-batch-threshold", default_value_t = LARGE_BATCH_THRESHOLD)]
    pub large_batch_threshold: usize,
    /// Discounting factor of the RMSProp baseline.
    #[arg(long = "rmsprop-beta", default_value_t = 0.99)]
    pub rmsprop_beta: f64,
    /// Initial point, every coordinate set to this value.
    #[arg(long, default_value_t = 2.0)]
    pub x1: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long = "max-iters", default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = crate::optim::DEFAULT_TOL)]
    pub tol: f64,
    /// Keep every N-th trace entry.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Add a beta column to trace CSVs.
    #[arg(long = "record-beta")]
    pub record_beta: bool,
    /// Trial seed; also seeds generated instances unless --problem-seed is set.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "problem-seed")]
    pub problem_seed: Option<u64>,
}

fn parse_bounds(u_upper: &str, u_lower: &str, ratio: f64) -> Result<BoundsChoice> {
    if !(ratio > 1.0) {
        return Err(Error::Config(format!("--u-ratio must exceed 1, got {ratio}")));
    }
    let upper = u_upper.trim().to_ascii_lowercase();
    let lower = u_lower.trim().to_ascii_lowercase();
    if let Some(rest) = upper.strip_prefix("auto") {
        if lower != "auto" {
            return Err(Error::Config("--u-lower must be auto when --u-upper is auto".into()));
        }
        let decade = match rest.strip_prefix(':') {
            Some(i) => i
                .parse()
                .map_err(|_| Error::Config(format!("bad u-upper decade `{i}`")))?,
            None if rest.is_empty() => 2,
            None => return Err(Error::Config(format!("bad --u-upper `{u_upper}`"))),
        };
        return Ok(BoundsChoice::Auto { decade, ratio });
    }
    let hi: f64 = upper
        .parse()
        .map_err(|_| Error::Config(format!("bad --u-upper `{u_upper}`")))?;
    let lo = if lower == "auto" {
        hi / ratio
    } else {
        lower
            .parse()
            .map_err(|_| Error::Config(format!("bad --u-lower `{u_lower}`")))?
    };
    Ok(BoundsChoice::Fixed {
        u_lower: lo,
        u_upper: hi,
    })
}

impl AlgoArgs {
    fn run_config(&self, batch_size: usize, eps: EpsilonChoice, d_hint: Option<usize>) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(self.algo, batch_size);
        cfg.epsilon = eps;
        cfg.bounds = parse_bounds(&self.u_upper, &self.u_lower, self.u_ratio)?;
        cfg.beta_policy = self.beta_policy;
        cfg.eta_rule = self.eta;
        cfg.sgd_eta_rule = self.sgd_eta;
        cfg.large_batch_threshold = self.large_batch_threshold;
        cfg.rmsprop_beta = self.rmsprop_beta;
        if self.x1 != 2.0 {
            let d = d_hint.ok_or_else(|| Error::Config("--x1 needs a known dimension".into()))?;
            cfg.initial_point = Some(vec![self.x1; d]);
        }
        cfg.stop = StopCriteria {
            tol: Some(self.tol),
            max_iters: self.max_iters,
            trace_stride: self.stride,
            record_beta: self.record_beta,
        };
        Ok(cfg)
    }

    fn experiment(
        &self,
        problem: &ProblemArgs,
        batch_size: usize,
        eps: EpsilonChoice,
        out: Option<PathBuf>,
    ) -> Result<ExperimentConfig> {
        let source = problem.source(self.problem_seed.unwrap_or(self.seed))?;
        let d = match &source {
            ProblemSource::Synthetic(spec) => Some(spec.d),
            _ if self.x1 != 2.0 => Some(source.load(0)?.d()),
            _ => None,
        };
        let mut cfg = ExperimentConfig::new(source, self.run_config(batch_size, eps, d)?);
        cfg.trials = self.trials;
        cfg.instances = self.instances;
        cfg.seed = self.seed;
        cfg.output_dir = out;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Batch size.
    #[arg(long = "B", default_value_t = 50)]
    pub batch: usize,
    /// preset1, preset2, preset3 or a number.
    #[arg(long, default_value = "preset1")]
    pub eps: EpsilonChoice,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Comma-separated batch sizes.
    #[arg(long = "B-grid", default_value = "50,1000", value_delimiter = ',')]
    pub batches: Vec<usize>,
    /// Comma-separated epsilon choices.
    #[arg(long = "eps-grid", default_value = "preset1,preset2,preset3", value_delimiter = ',')]
    pub eps: Vec<EpsilonChoice>,
    /// Comma-separated u-upper decades for the automatic rule; empty keeps --u-upper.
    #[arg(long = "u-decades", value_delimiter = ',')]
    pub decades: Vec<i32>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "B", default_value_t = 1000)]
    pub batch: usize,
    #[arg(long = "u-upper", default_value = "auto")]
    pub u_upper: String,
    #[arg(long = "u-lower", default_value = "auto")]
    pub u_lower: String,
    #[arg(long = "u-ratio", default_value_t = 5.0)]
    pub u_ratio: f64,
    /// Seed of the first batch used by the automatic u-upper rule.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub x1: f64,
    /// Also estimate E‖M − AᵀA‖ and E‖h‖ from this many batches.
    #[arg(long = "mc-trials", default_value_t = 0)]
    pub mc_trials: usize,
    /// CSV output file (otherwise the CSV follows the table on stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding trace CSVs (files named trace*.csv, searched recursively).
    #[arg(long, value_name = "DIR")]
    pub traces: PathBuf,
    /// Comma-separated relative-error levels.
    #[arg(long, default_value = "0.1,0.01,0.001,0.0001", value_delimiter = ',')]
    pub levels: Vec<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run_cli(argv: Vec<String>) -> i32 {
    let argv = match expand_config_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("lsqopt: error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!("lsqopt: usage error: {first}");
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lsqopt: error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    configure_threads()?;
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds(a),
        Command::Report(a) => report(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let inst = a.problem.source(a.seed)?.load(0)?;
    save_instance(&inst, &a.out)?;
    println!(
        "wrote {} ({}x{}, kappa {:.6}, {}) to {}",
        inst.label,
        inst.n(),
        inst.d(),
        inst.spectral.condition_number(),
        if inst.is_consistent {
            "consistent"
        } else {
            "inconsistent"
        },
        a.out.display()
    );
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = a.algo.experiment(&a.problem, a.batch, a.eps, a.out.clone())?;
    let result = run_experiment(&cfg)?;
    let total: usize = result.instances.iter().map(|r| r.outcomes.len()).sum();
    let converged: usize = result.instances.iter().map(|r| r.converged().iterations.len()).sum();
    println!(
        "{} {} B={} eps={}: {}/{} converged, iterations {}",
        result.problem,
        cfg.run.algo,
        cfg.run.batch_size,
        cfg.run.epsilon,
        converged,
        total,
        result.summary.iteration_cell()
    );
    if let Some(dir) = &a.out {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let first_eps = *a
        .eps
        .first()
        .ok_or_else(|| Error::Config("--eps-grid is empty".into()))?;
    let first_b = *a
        .batches
        .first()
        .ok_or_else(|| Error::Config("--B-grid is empty".into()))?;
    let base = a.algo.experiment(&a.problem, first_b, first_eps, a.out.clone())?;
    let rows = run_sweep(&SweepConfig {
        base,
        batch_sizes: a.batches,
        epsilons: a.eps,
        decades: a.decades,
    })?;
    let stdout = std::io::stdout();
    output::write_summary_csv(stdout.lock(), &rows).map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let inst = a.problem.source(a.seed)?.load(0)?;
    let dist = squared_norm_probs(&inst.spectral)?;
    let choice = parse_bounds(&a.u_upper, &a.u_lower, a.u_ratio)?;
    let (u_lower, u_upper) = match choice {
        BoundsChoice::Fixed { .. } => choice.resolve(&[])?,
        BoundsChoice::Auto { .. } => {
            // the same first batch trial 0 of `run` would draw
            let mut rng = rng_from_seed(mix_seed(mix_seed(a.seed, 0), 0));
            let batch = draw_batch(&dist, a.batch, &mut rng);
            let g1 = minibatch_gradient(&inst, &vec![a.x1; inst.d()], &batch, &dist)?;
            choice.resolve(&g1)?
        }
    };
    let report = bound_report(&inst, &dist, a.batch, u_lower, u_upper)?;
    let mut extra = vec![
        ("B", a.batch as f64),
        ("u_lower", u_lower),
        ("u_upper", u_upper),
        ("lambda_max", inst.spectral.lambda_max),
        ("lambda_min", inst.spectral.lambda_min),
        ("fro_norm_sq", inst.spectral.fro_norm_sq),
    ];
    if a.mc_trials > 0 {
        extra.push((
            "empirical_deviation",
            empirical_matrix_deviation(&inst, &dist, a.batch, a.mc_trials, a.seed)?,
        ));
        extra.push((
            "empirical_h_norm",
            empirical_h_norm(&inst, &dist, a.batch, a.mc_trials, a.seed),
        ));
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let print = |out: &mut std::io::StdoutLock<'_>| -> std::io::Result<()> {
        writeln!(out, "bounds for {} (n={}, d={})", inst.label, inst.n(), inst.d())?;
        for (k, v) in report.fields().iter().chain(&extra) {
            writeln!(out, "  {k:<20} {v}")?;
        }
        if report.eps_max_theorem <= 0.0 {
            writeln!(
                out,
                "  no admissible epsilon at this batch size (need B >= {})",
                report.batch_min
            )?;
        }
        Ok(())
    };
    print(&mut out).map_err(|e| Error::io("<stdout>", e))?;
    match &a.out {
        Some(path) => output::write_file(path, |w| output::write_bounds_csv(w, &report, &extra))?,
        None => {
            writeln!(out).map_err(|e| Error::io("<stdout>", e))?;
            output::write_bounds_csv(&mut out, &report, &extra).map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    Ok(())
}

fn trace_files(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            trace_files(&p, found)?;
        } else if p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.contains("trace") && n.ends_with(".csv"))
        {
            found.push(p);
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut files = Vec::new();
    trace_files(&a.traces, &mut files)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no trace CSVs under {}", a.traces.display())));
    }
    // one run per (file, trial); first-hit iterations come straight from the iter column
    let mut runs: Vec<Vec<(usize, f64)>> = Vec::new();
    for f in &files {
        let mut current: Option<usize> = None;
        for (trial, iter, err) in output::read_trace_csv(f)? {
            if current != Some(trial) {
                runs.push(Vec::new());
                current = Some(trial);
            }
            runs.last_mut().expect("pushed").push((iter, err));
        }
    }
    let triples: Vec<(usize, Option<f64>, Option<usize>)> = a
        .levels
        .iter()
        .map(|&level| {
            let hits: Vec<usize> = runs
                .iter()
                .filter_map(|r| r.iter().find(|(_, e)| *e <= level).map(|(i, _)| *i))
                .collect();
            first_hit_triple(&hits)
        })
        .collect();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{} runs from {} trace files", runs.len(), files.len()).map_err(|e| Error::io("<stdout>", e))?;
    for (level, (n, mean, max)) in a.levels.iter().zip(&triples) {
        let fmt = |v: Option<String>| v.unwrap_or_else(|| "N".into());
        writeln!(
            out,
            "  {level:<8} ({n}, {}, {})",
            fmt(mean.map(|m| format!("{m:.0}"))),
            fmt(max.map(|m| m.to_string()))
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    if let Some(path) = &a.out {
        output::write_file(path, |w| output::write_levels_csv(w, &a.levels, &triples))?;
    }
    Ok(())
}

fn first_hit_triple(hits: &[usize]) -> (usize, Option<f64>, Option<usize>) {
    if hits.is_empty() {
        (0, None, None)
    } else {
        let mean = hits.iter().sum::<usize>() as f64 / hits.len() as f64;
        (hits.len(), Some(mean), hits.iter().copied().max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_flags() {
        assert_eq!(
            parse_bounds("auto", "auto", 5.0).unwrap(),
            BoundsChoice::Auto { decade: 2, ratio: 5.0 }
        );
        assert_eq!(
            parse_bounds("auto:3", "auto", 10.0).unwrap(),
            BoundsChoice::Auto { decade: 3, ratio: 10.0 }
        );
        assert_eq!(
            parse_bounds("10", "auto", 5.0).unwrap(),
            BoundsChoice::Fixed {
                u_lower: 2.0,
                u_upper: 10.0
            }
        );
        assert_eq!(
            parse_bounds("10", "1", 5.0).unwrap(),
            BoundsChoice::Fixed {
                u_lower: 1.0,
                u_upper: 10.0
            }
        );
        assert!(parse_bounds("auto", "1", 5.0).is_err());
        assert!(parse_bounds("auto", "auto", 0.5).is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let code = run_cli(vec!["lsqopt".into(), "run".into(), "--bogus".into()]);
        assert_eq!(code, 2);
    }
}
