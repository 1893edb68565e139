use lsqopt::harness::experiment::{run_experiment, run_trials, ExperimentConfig, ProblemSource};
use lsqopt::harness::stats::{fit_log_slope, median};
use lsqopt::optim::{run_optimizer, Algorithm, EpsilonChoice, RunConfig};
use lsqopt::problem::{generate_instance, load_csv_standardized, Decay, ProblemSpec};
use lsqopt::rng::{mix_seed, rng_from_seed};
use lsqopt::sampling::squared_norm_probs;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn single_trial_matches_direct_call() {
    let inst = generate_instance(&ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 800, 8, 5)).unwrap();
    let dist = squared_norm_probs(&inst.spectral).unwrap();
    let cfg = RunConfig::new(Algorithm::SgaRmsprop, 50);
    let trials = run_trials(&inst, &dist, &cfg, 1, 9).unwrap();
    let batch_rec = trials[0].record().unwrap();
    let direct = run_optimizer(&inst, &dist, &cfg, &mut rng_from_seed(mix_seed(9, 0)), None).unwrap();
    assert_eq!(bits(&batch_rec.trace), bits(&direct.trace));
    assert_eq!(bits(&batch_rec.final_x), bits(&direct.final_x));
    assert_eq!(batch_rec.iters_to_converge, direct.iters_to_converge);
}

#[test]
fn repeated_experiment_gives_same_summary() {
    let spec = ProblemSpec::new(Decay::Algebraic, 20.0, 2.0, 1000, 10, 3);
    let cfg = {
        let mut c = ExperimentConfig::new(
            ProblemSource::Synthetic(spec),
            RunConfig::new(Algorithm::Rmsp2Sgd, 1000),
        );
        c.trials = 20;
        c
    };
    let a = run_experiment(&cfg).unwrap().summary;
    let b = run_experiment(&cfg).unwrap().summary;
    assert_eq!((a.mean_iters, a.std_iters), (b.mean_iters, b.std_iters));
    assert!(a.mean_iters.is_some());
}

#[test]
fn consistent_trace_decays() {
    let inst = generate_instance(&ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 2000, 20, 8)).unwrap();
    let dist = squared_norm_probs(&inst.spectral).unwrap();
    let rec = run_optimizer(
        &inst,
        &dist,
        &RunConfig::new(Algorithm::SgaRmsprop, 1000),
        &mut rng_from_seed(1),
        None,
    )
    .unwrap();
    assert!(rec.iters_to_converge.is_some());
    assert!(fit_log_slope(&rec.trace, 0..rec.trace.len()).unwrap() < 0.0);
    assert_eq!(rec.trace[0], 1.0);
}

/// Smaller ε keeps the preconditioner steadier: ε₁ < ε₂ < ε₃ in iterations at B = 1000 on ED problems.
#[test]
fn epsilon_ordering_at_large_batch() {
    let mut ordered = 0;
    let mut seen = Vec::new();
    for i in 0..3 {
        let spec = ProblemSpec::new(Decay::Exponential, 20.0, 0.7, 10_000, 50, mix_seed(55, i));
        let inst = generate_instance(&spec).unwrap();
        let dist = squared_norm_probs(&inst.spectral).unwrap();
        let med: Vec<f64> = (1..=3)
            .map(|p| {
                let mut cfg = RunConfig::new(Algorithm::SgaRmsprop, 1000);
                cfg.epsilon = EpsilonChoice::Preset(p);
                let runs = run_trials(&inst, &dist, &cfg, 20, 56).unwrap();
                let its: Vec<f64> = runs
                    .iter()
                    .filter_map(|o| o.record().and_then(|r| r.iters_to_converge))
                    .map(|k| k as f64)
                    .collect();
                median(&its)
            })
            .collect();
        if med[0] < med[1] && med[1] < med[2] {
            ordered += 1;
        }
        seen.push(med);
    }
    assert!(ordered >= 2, "{seen:?}");
}

#[test]
fn csv_dataset_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    // y = 3 x0 − 2 x1 + x2, exactly linear so the standardized problem is consistent
    let mut text = String::from("x0,x1,x2,y\n");
    let mut rng = rng_from_seed(77);
    use rand::Rng as _;
    for _ in 0..400 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        text += &format!("{},{},{},{}\n", x[0], x[1], x[2], 3.0 * x[0] - 2.0 * x[1] + x[2]);
    }
    std::fs::write(&path, text).unwrap();
    let inst = load_csv_standardized(&path, 3).unwrap();
    assert_eq!((inst.n(), inst.d()), (400, 3));
    let mut cfg = ExperimentConfig::new(
        ProblemSource::Csv { path, target: 3 },
        RunConfig::new(Algorithm::SgaRmsprop, 50),
    );
    cfg.trials = 20;
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.instances.len(), 1);
    assert!(result.summary.mean_iters.is_some());
}
