//! Trial batteries over one or several instances.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::load_instance;
use crate::optim::{run_optimizer, RunConfig, RunRecord};
use crate::problem::{generate_instance, load_csv_standardized, LlspInstance, ProblemSpec};
use crate::rng::{mix_seed, rng_from_seed};
use crate::sampling::{squared_norm_probs, SamplingDistribution};

use super::output::{self, RunRow};
use super::stats::{summarize, InstanceOutcome, SummaryRow};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LSQOPT_THREADS";

/// Sizes the global rayon pool from `LSQOPT_THREADS`, once per process.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a second call finds the pool already built, which is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Where instances come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    /// Instance `i` uses seed `mix_seed(spec.seed, i)`.
    Synthetic(ProblemSpec),
    Csv {
        path: PathBuf,
        target: usize,
    },
    File(PathBuf),
}

impl ProblemSource {
    pub fn instance_count(&self, requested: usize) -> usize {
        match self {
            ProblemSource::Synthetic(_) => requested,
            _ => 1,
        }
    }

    pub fn load(&self, index: usize) -> Result<LlspInstance> {
        match self {
            ProblemSource::Synthetic(spec) => {
                let mut spec = spec.clone();
                spec.seed = mix_seed(spec.seed, index as u64);
                generate_instance(&spec)
            }
            ProblemSource::Csv { path, target } => load_csv_standardized(path, *target),
            ProblemSource::File(path) => load_instance(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub run: RunConfig,
    pub trials: usize,
    pub instances: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, run: RunConfig) -> Self {
        ExperimentConfig {
            problem,
            run,
            trials: 100,
            instances: 3,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be at least 1".into()));
        }
        if let Some(tol) = self.run.stop.tol {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
            }
        }
        Ok(())
    }
}

/// One trial's seed and result.
#[derive(Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub result: Result<RunRecord>,
}

impl TrialOutcome {
    pub fn record(&self) -> Option<&RunRecord> {
        self.result.as_ref().ok()
    }
}

/// Runs `trials` independent trials in parallel; results come back in trial order.
///
/// Trial `t` draws from `mix_seed(seed, t)`. Failed trials are kept; half or more
/// failing is an error.
pub fn run_trials(
    inst: &LlspInstance,
    dist: &SamplingDistribution,
    cfg: &RunConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>> {
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let s = mix_seed(seed, trial as u64);
            let result = run_optimizer(inst, dist, cfg, &mut rng_from_seed(s), None);
            TrialOutcome { trial, seed: s, result }
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.result.is_err()).count();
    for o in outcomes.iter().filter(|o| o.result.is_err()) {
        if let Err(e) = &o.result {
            warn!("{}: trial {} failed: {e}", inst.label, o.trial);
        }
    }
    if failures * 2 >= trials {
        let first = outcomes
            .iter()
            .find_map(|o| o.result.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(Error::Experiment(format!(
            "{failures} of {trials} trials failed on {}; first failure: {first}",
            inst.label
        )));
    }
    Ok(outcomes)
}

/// Trials of one instance.
#[derive(Debug)]
pub struct InstanceRun {
    pub label: String,
    pub outcomes: Vec<TrialOutcome>,
}

impl InstanceRun {
    pub fn converged(&self) -> InstanceOutcome {
        let recs = self
            .outcomes
            .iter()
            .filter_map(TrialOutcome::record)
            .filter(|r| r.iters_to_converge.is_some());
        let (iterations, wall_ms) = recs
            .map(|r| (r.iters_to_converge.unwrap_or_default() as f64, r.wall_ms))
            .unzip();
        InstanceOutcome { iterations, wall_ms }
    }

    pub fn records(&self) -> Vec<(usize, &RunRecord)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.record().map(|r| (o.trial, r)))
            .collect()
    }
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub problem: String,
    pub instances: Vec<InstanceRun>,
    pub summary: SummaryRow,
}

/// Generates or loads every instance, runs the trial battery on each and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let count = cfg.problem.instance_count(cfg.instances);
    let mut instances = Vec::with_capacity(count);
    let mut problem = String::new();
    for i in 0..count {
        let inst = cfg.problem.load(i)?;
        if i == 0 {
            problem = inst.label.clone();
        }
        let dist = squared_norm_probs(&inst.spectral)?;
        info!(
            "instance {i}: {} n={} d={} kappa={:.4}",
            inst.label,
            inst.n(),
            inst.d(),
            inst.spectral.condition_number()
        );
        let outcomes = run_trials(&inst, &dist, &cfg.run, cfg.trials, mix_seed(cfg.seed, i as u64))?;
        instances.push(InstanceRun {
            label: inst.label.clone(),
            outcomes,
        });
    }
    let per_instance: Vec<InstanceOutcome> = instances.iter().map(InstanceRun::converged).collect();
    let summary = summarize(
        &problem,
        cfg.run.algo.name(),
        cfg.run.batch_size,
        &cfg.run.epsilon.to_string(),
        &per_instance,
    );
    let result = ExperimentResult {
        problem,
        instances,
        summary,
    };
    if let Some(dir) = &cfg.output_dir {
        write_experiment(dir, &result)?;
    }
    Ok(result)
}

/// Writes `trace_<i>.csv` per instance, `runs.csv` and `summary.csv` under `dir`.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<()> {
    write_traces(dir, "", result)?;
    let rows: Vec<RunRow<'_>> = result
        .instances
        .iter()
        .enumerate()
        .flat_map(|(i, run)| {
            run.outcomes.iter().map(move |o| RunRow {
                instance: i,
                trial: o.trial,
                seed: o.seed,
                outcome: o.result.as_ref().map_err(|e| e.to_string()),
            })
        })
        .collect();
    output::write_file(&dir.join("runs.csv"), |w| output::write_runs_csv(w, &rows))?;
    output::write_file(&dir.join("summary.csv"), |w| {
        output::write_summary_csv(w, std::slice::from_ref(&result.summary))
    })
}

fn write_traces(dir: &Path, prefix: &str, result: &ExperimentResult) -> Result<()> {
    for (i, run) in result.instances.iter().enumerate() {
        let path = dir.join(format!("{prefix}trace_{i}.csv"));
        output::write_file(&path, |w| output::write_trace_csv(w, &run.records()))?;
    }
    Ok(())
}

/// Grid over batch sizes, ε choices and `ū` decades.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub batch_sizes: Vec<usize>,
    pub epsilons: Vec<crate::optim::EpsilonChoice>,
    /// `ū` decades for the automatic bound rule; empty keeps the base choice.
    pub decades: Vec<i32>,
}

/// Runs every grid point; writes one summary row per point plus traces when an output dir is set.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SummaryRow>> {
    use crate::optim::BoundsChoice;
    let decades: Vec<Option<i32>> = if cfg.decades.is_empty() {
        vec![None]
    } else {
        cfg.decades.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for &b in &cfg.batch_sizes {
        for &eps in &cfg.epsilons {
            for &decade in &decades {
                let mut exp = cfg.base.clone();
                exp.output_dir = None;
                exp.run.batch_size = b;
                exp.run.epsilon = eps;
                if let Some(i) = decade {
                    let ratio = match exp.run.bounds {
                        BoundsChoice::Auto { ratio, .. } => ratio,
                        BoundsChoice::Fixed { .. } => 5.0,
                    };
                    exp.run.bounds = BoundsChoice::Auto { decade: i, ratio };
                }
                let result = run_experiment(&exp)?;
                let mut row = result.summary.clone();
                if let Some(i) = decade {
                    row.eps = format!("{eps}/u{i}");
                }
                if let Some(dir) = &cfg.base.output_dir {
                    let tag = format!("B{b}_{eps}{}_", decade.map(|i| format!("_u{i}")).unwrap_or_default());
                    write_traces(dir, &tag, &result)?;
                }
                rows.push(row);
            }
        }
    }
    if let Some(dir) = &cfg.base.output_dir {
        output::write_file(&dir.join("summary.csv"), |w| output::write_summary_csv(w, &rows))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Algorithm;
    use crate::problem::Decay;

    fn small_cfg() -> ExperimentConfig {
        let spec = ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 400, 8, 5);
        let mut run = RunConfig::new(Algorithm::SgaRmsprop, 100);
        run.stop.max_iters = 3000;
        let mut cfg = ExperimentConfig::new(ProblemSource::Synthetic(spec), run);
        cfg.trials = 8;
        cfg.instances = 2;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn single_trial_matches_direct_run() {
        let inst = generate_instance(&ProblemSpec::new(Decay::Algebraic, 20.0, 2.0, 300, 6, 1)).unwrap();
        let dist = squared_norm_probs(&inst.spectral).unwrap();
        let cfg = RunConfig::new(Algorithm::SgaRmsprop, 50);
        let out = run_trials(&inst, &dist, &cfg, 1, 99).unwrap();
        let direct = run_optimizer(&inst, &dist, &cfg, &mut rng_from_seed(mix_seed(99, 0)), None).unwrap();
        let rec = out[0].record().unwrap();
        assert_eq!(rec.trace, direct.trace);
        assert_eq!(rec.final_x, direct.final_x);
    }

    #[test]
    fn experiment_is_deterministic() {
        let a = run_experiment(&small_cfg()).unwrap();
        let b = run_experiment(&small_cfg()).unwrap();
        assert_eq!(a.summary.mean_iters, b.summary.mean_iters);
        assert_eq!(a.summary.std_iters, b.summary.std_iters);
        for (x, y) in a.instances.iter().zip(&b.instances) {
            for (p, q) in x.records().iter().zip(y.records()) {
                assert_eq!(p.1.trace, q.1.trace);
            }
        }
        assert!(a.summary.mean_iters.is_some());
    }

    #[test]
    fn mostly_failing_battery_is_an_error() {
        let inst = generate_instance(&ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 100, 4, 5)).unwrap();
        let dist = squared_norm_probs(&inst.spectral).unwrap();
        let mut cfg = RunConfig::new(Algorithm::Sgd, 10);
        cfg.eta_rule = Some(crate::optim::StepSizeRule::Fixed(10.0));
        assert!(matches!(
            run_trials(&inst, &dist, &cfg, 4, 0),
            Err(Error::Experiment(_))
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small_cfg();
        cfg.trials = 0;
        assert!(run_experiment(&cfg).is_err());
    }
}
