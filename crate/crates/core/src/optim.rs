//! Iteration engines: SGA-RMSProp, constant-parameter RMSProp, SGD and RMSP2SGD.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{distance, SpectralSummary};
use crate::problem::LlspInstance;
use crate::rng::Rng;
use crate::sampling::{draw_batch, minibatch_gradient_into, SamplingDistribution};

/// Relative error at which a run counts as converged.
pub const DEFAULT_TOL: f64 = 1e-4;
/// Relative error beyond which a run is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e8;
/// Denominator guard of the baseline RMSProp update.
pub const RMSPROP_DELTA: f64 = 1e-8;
/// Consecutive `β = 1` selections that trigger the RMSP2SGD switch.
pub const SWITCH_AFTER: usize = 5;
/// Default batch size from which the large-batch step-size rules apply.
pub const LARGE_BATCH_THRESHOLD: usize = 500;
/// Relative slack for floating-point comparisons in the stability checks.
pub const INVARIANT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaPolicy {
    /// Smallest admissible β.
    LowerBound,
    /// Midpoint of the admissible interval.
    Midpoint,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeRule {
    ThmConsistent,
    SgaSmallBatch,
    SgaLargeBatch,
    SgdSmallBatch,
    SgdLargeBatch,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    SgaRmsprop,
    Rmsprop,
    Sgd,
    Rmsp2Sgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SgaRmsprop => "sga",
            Algorithm::Rmsprop => "rmsprop",
            Algorithm::Sgd => "sgd",
            Algorithm::Rmsp2Sgd => "rmsp2sgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sga" | "sgarmsprop" => Ok(Algorithm::SgaRmsprop),
            "rmsprop" => Ok(Algorithm::Rmsprop),
            "sgd" => Ok(Algorithm::Sgd),
            "rmsp2sgd" => Ok(Algorithm::Rmsp2Sgd),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

impl FromStr for BetaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lower_bound" | "lower" => Ok(BetaPolicy::LowerBound),
            "midpoint" | "mid" => Ok(BetaPolicy::Midpoint),
            other => other
                .strip_prefix("fixed:")
                .and_then(|v| v.parse().ok())
                .map(BetaPolicy::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown beta policy `{s}`"))),
        }
    }
}

impl FromStr for StepSizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "thm_consistent" | "thm" => Ok(StepSizeRule::ThmConsistent),
            "sga_small_batch" => Ok(StepSizeRule::SgaSmallBatch),
            "sga_large_batch" => Ok(StepSizeRule::SgaLargeBatch),
            "sgd_small_batch" => Ok(StepSizeRule::SgdSmallBatch),
            "sgd_large_batch" => Ok(StepSizeRule::SgdLargeBatch),
            other => {
                let v = other.strip_prefix("fixed:").unwrap_or(other);
                v.parse()
                    .map(StepSizeRule::Fixed)
                    .map_err(|_| Error::Config(format!("unknown step-size rule `{s}`")))
            }
        }
    }
}

/// Fully resolved hyperparameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub epsilon: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub beta_policy: BetaPolicy,
    pub eta_rule: StepSizeRule,
    pub batch_size: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.u_lower > 0.0 && self.u_lower < self.u_upper && self.u_upper.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < u_lower < u_upper, got {} and {}",
                self.u_lower, self.u_upper
            )));
        }
        if let BetaPolicy::Fixed(b) = self.beta_policy {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("fixed beta {b} outside [0, 1]")));
            }
        }
        if let StepSizeRule::Fixed(eta) = self.eta_rule {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::Config(format!("fixed step size must be positive, got {eta}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterate, moving average and switch bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub k: usize,
    pub consecutive_beta_ones: usize,
    pub switched_to_sgd: bool,
}

impl OptState {
    /// State at `x1` with `u₀ = (1/ū², …, 1/ū²)`.
    pub fn sga(x1: Vec<f64>, u_upper: f64) -> Self {
        let d = x1.len();
        OptState {
            x: x1,
            u: vec![1.0 / (u_upper * u_upper); d],
            k: 0,
            consecutive_beta_ones: 0,
            switched_to_sgd: false,
        }
    }

    /// State at `x1` with `u₀ = 0`, the baseline RMSProp start.
    pub fn zero_average(x1: Vec<f64>) -> Self {
        let d = x1.len();
        OptState {
            x: x1,
            u: vec![0.0; d],
            k: 0,
            consecutive_beta_ones: 0,
            switched_to_sgd: false,
        }
    }
}

/// Discounting factor for one SGA-RMSProp step.
///
/// The interval formula is only reached when every `g_j² > u_j`, so no
/// denominator vanishes.
pub fn beta_select(g: &[f64], u_prev: &[f64], hp: &HyperParams) -> f64 {
    if g.iter().zip(u_prev).any(|(gj, uj)| gj * gj <= *uj) {
        return 1.0;
    }
    let cap = 1.0 / (hp.u_lower * hp.u_lower);
    let growth = (1.0 + hp.epsilon) * (1.0 + hp.epsilon);
    let lower = g
        .iter()
        .zip(u_prev)
        .map(|(gj, &uj)| {
            let g2 = gj * gj;
            let den = g2 - uj;
            ((g2 - cap) / den).max((g2 - growth * uj) / den)
        })
        .fold(0.0f64, f64::max);
    match hp.beta_policy {
        BetaPolicy::LowerBound => lower.min(1.0),
        BetaPolicy::Midpoint => (0.5 * lower + 0.5).min(1.0),
        BetaPolicy::Fixed(b) => b,
    }
}

/// `u' = βu + (1−β)g²`.
fn blend(u: &mut [f64], g: &[f64], beta: f64) {
    if beta == 1.0 {
        return;
    }
    for (uj, gj) in u.iter_mut().zip(g) {
        *uj = beta * *uj + (1.0 - beta) * gj * gj;
    }
}

/// One SGA-RMSProp step; returns the selected β.
pub fn sga_step(state: &mut OptState, g: &[f64], eta: f64, hp: &HyperParams) -> Result<f64> {
    let beta = beta_select(g, &state.u, hp);
    blend(&mut state.u, g, beta);
    for ((xj, gj), uj) in state.x.iter_mut().zip(g).zip(&state.u) {
        *xj -= eta * gj / uj.sqrt();
    }
    state.k += 1;
    check_finite(&state.x, state.k)?;
    Ok(beta)
}

/// One constant-parameter RMSProp step with the `δ = 1e-8` guard.
pub fn rmsprop_step(state: &mut OptState, g: &[f64], beta: f64, eta: f64) -> Result<()> {
    blend(&mut state.u, g, beta);
    for ((xj, gj), uj) in state.x.iter_mut().zip(g).zip(&state.u) {
        *xj -= eta * gj / (uj.sqrt() + RMSPROP_DELTA);
    }
    state.k += 1;
    check_finite(&state.x, state.k)
}

pub fn sgd_step(state: &mut OptState, g: &[f64], eta: f64) -> Result<()> {
    for (xj, gj) in state.x.iter_mut().zip(g) {
        *xj -= eta * gj;
    }
    state.k += 1;
    check_finite(&state.x, state.k)
}

fn check_finite(x: &[f64], k: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite iterate after step {k}")))
    }
}

/// Checks the stability guarantees of one SGA-RMSProp transition `u_prev → u`.
pub fn check_stability(u_prev: &[f64], u: &[f64], hp: &HyperParams) -> std::result::Result<(), String> {
    let lo = hp.u_lower * (1.0 - INVARIANT_SLACK);
    let hi = hp.u_upper * (1.0 + INVARIANT_SLACK);
    for (j, (&a, &b)) in u_prev.iter().zip(u).enumerate() {
        let inv = 1.0 / b.sqrt();
        if !(lo..=hi).contains(&inv) {
            return Err(format!(
                "coordinate {j}: 1/sqrt(u) = {inv:e} outside [{:e}, {:e}]",
                hp.u_lower, hp.u_upper
            ));
        }
        if b < a * (1.0 - INVARIANT_SLACK) {
            return Err(format!("coordinate {j}: u decreased from {a:e} to {b:e}"));
        }
        let ratio = (b / a).sqrt() - 1.0;
        if ratio.abs() > hp.epsilon * (1.0 + INVARIANT_SLACK) + INVARIANT_SLACK {
            return Err(format!(
                "coordinate {j}: sqrt(u'/u) - 1 = {ratio:e} exceeds eps {:e}",
                hp.epsilon
            ));
        }
    }
    Ok(())
}

/// Step size prescribed by `rule`. SGD rules ignore `u_upper`.
pub fn compute_step_size(rule: StepSizeRule, spectral: &SpectralSummary, batch_size: usize, u_upper: f64) -> f64 {
    let l1 = spectral.lambda_max;
    let ld = spectral.lambda_min;
    let fro = spectral.fro_norm_sq;
    let b = batch_size as f64;
    let small_branch = fro - (b - 1.0) * (l1 - ld) >= 0.0;
    match rule {
        StepSizeRule::ThmConsistent => 2.0 / (u_upper * (l1 + ld)),
        StepSizeRule::SgaSmallBatch => {
            if small_branch {
                1.1 * b / (u_upper * (fro + (b - 1.0) * ld))
            } else {
                (2.1 + (ld / l1).sqrt()) * b / (u_upper * (fro + (b - 1.0) * (l1 + ld)))
            }
        }
        StepSizeRule::SgaLargeBatch => (2.0 + (ld / l1).sqrt()) / (u_upper * (l1 + ld)),
        StepSizeRule::SgdSmallBatch => {
            if small_branch {
                b / (fro + (b - 1.0) * ld)
            } else {
                2.0 * b / (fro + (b - 1.0) * (l1 + ld))
            }
        }
        StepSizeRule::SgdLargeBatch => 2.0 / (l1 + ld),
        StepSizeRule::Fixed(eta) => eta,
    }
}

/// `ε` as a multiple of `λ_d/λ₁` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    /// Presets 1, 2, 3 give `λ_d/λ₁`, `5λ_d/λ₁`, `10λ_d/λ₁`.
    Preset(u8),
    Value(f64),
}

impl EpsilonChoice {
    pub fn resolve(self, spectral: &SpectralSummary) -> Result<f64> {
        match self {
            EpsilonChoice::Preset(i) => {
                let factor = match i {
                    1 => 1.0,
                    2 => 5.0,
                    3 => 10.0,
                    _ => return Err(Error::Config(format!("epsilon preset {i} not in 1..=3"))),
                };
                Ok(factor * spectral.lambda_min / spectral.lambda_max)
            }
            EpsilonChoice::Value(v) => Ok(v),
        }
    }
}

impl fmt::Display for EpsilonChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonChoice::Preset(i) => write!(f, "preset{i}"),
            EpsilonChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for EpsilonChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(i) = t.strip_prefix("preset").or_else(|| t.strip_prefix("eps")) {
            return i
                .parse()
                .map(EpsilonChoice::Preset)
                .map_err(|_| Error::Config(format!("bad epsilon preset `{s}`")));
        }
        t.parse()
            .map(EpsilonChoice::Value)
            .map_err(|_| Error::Config(format!("bad epsilon `{s}`")))
    }
}

/// Source of `ū` and `u̲`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundsChoice {
    /// `ū = (10^{-decade} min{g₁ⱼ² : g₁ⱼ ≠ 0})^{-1/2}`, `u̲ = ū/ratio`, from the first gradient.
    Auto {
        decade: i32,
        ratio: f64,
    },
    Fixed {
        u_lower: f64,
        u_upper: f64,
    },
}

impl Default for BoundsChoice {
    fn default() -> Self {
        BoundsChoice::Auto { decade: 2, ratio: 5.0 }
    }
}

impl BoundsChoice {
    /// `(u̲, ū)` given the first stochastic gradient.
    pub fn resolve(self, g1: &[f64]) -> Result<(f64, f64)> {
        match self {
            BoundsChoice::Auto { decade, ratio } => {
                let min_sq = g1
                    .iter()
                    .filter(|v| **v != 0.0)
                    .map(|v| v * v)
                    .fold(f64::INFINITY, f64::min);
                if !min_sq.is_finite() {
                    return Err(Error::Numerical("first gradient is zero; cannot derive u_upper".into()));
                }
                let upper = (10f64.powi(-decade) * min_sq).powf(-0.5);
                Ok((upper / ratio, upper))
            }
            BoundsChoice::Fixed { u_lower, u_upper } => Ok((u_lower, u_upper)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria {
    /// Relative-error target; `None` runs to `max_iters`.
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Record every `trace_stride`-th relative error.
    pub trace_stride: usize,
    pub record_beta: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            tol: Some(DEFAULT_TOL),
            max_iters: 10_000,
            trace_stride: 1,
            record_beta: false,
        }
    }
}

/// Everything needed to launch one run; automatic choices are resolved per run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algorithm,
    pub batch_size: usize,
    pub epsilon: EpsilonChoice,
    pub bounds: BoundsChoice,
    pub beta_policy: BetaPolicy,
    /// Step-size rule of the main method; `None` picks by algorithm and batch regime.
    pub eta_rule: Option<StepSizeRule>,
    /// SGD rule after an RMSP2SGD switch; `None` picks by batch regime.
    pub sgd_eta_rule: Option<StepSizeRule>,
    pub large_batch_threshold: usize,
    /// Constant discounting factor of the RMSProp baseline.
    pub rmsprop_beta: f64,
    /// Defaults to `(2, …, 2)`.
    pub initial_point: Option<Vec<f64>>,
    pub stop: StopCriteria,
}

impl RunConfig {
    pub fn new(algo: Algorithm, batch_size: usize) -> Self {
        RunConfig {
            algo,
            batch_size,
            epsilon: EpsilonChoice::Preset(1),
            bounds: BoundsChoice::default(),
            beta_policy: BetaPolicy::Midpoint,
            eta_rule: None,
            sgd_eta_rule: None,
            large_batch_threshold: LARGE_BATCH_THRESHOLD,
            rmsprop_beta: 0.99,
            initial_point: None,
            stop: StopCriteria::default(),
        }
    }

    pub fn is_large_batch(&self) -> bool {
        self.batch_size >= self.large_batch_threshold
    }

    pub fn main_eta_rule(&self) -> StepSizeRule {
        self.eta_rule.unwrap_or(match (self.algo, self.is_large_batch()) {
            (Algorithm::SgaRmsprop | Algorithm::Rmsp2Sgd, false) => StepSizeRule::SgaSmallBatch,
            (Algorithm::SgaRmsprop | Algorithm::Rmsp2Sgd, true) => StepSizeRule::SgaLargeBatch,
            (Algorithm::Sgd, false) => StepSizeRule::SgdSmallBatch,
            (Algorithm::Sgd, true) => StepSizeRule::SgdLargeBatch,
            (Algorithm::Rmsprop, _) => StepSizeRule::Fixed(0.01),
        })
    }

    pub fn switch_eta_rule(&self) -> StepSizeRule {
        self.sgd_eta_rule.unwrap_or(if self.is_large_batch() {
            StepSizeRule::SgdLargeBatch
        } else {
            StepSizeRule::SgdSmallBatch
        })
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// `‖x_k − x*‖/‖x₁ − x*‖` at iterations `0, stride, 2·stride, …`.
    pub trace: Vec<f64>,
    pub stride: usize,
    /// Iterations taken to reach the tolerance.
    pub iters_to_converge: Option<usize>,
    pub iterations: usize,
    pub wall_ms: f64,
    /// Step at which RMSP2SGD moved to SGD (1-based).
    pub switch_iter: Option<usize>,
    /// β per step (SGA variants, when requested).
    pub beta_trace: Vec<f64>,
    pub final_x: Vec<f64>,
    pub initial_distance: f64,
    pub hyper: HyperParams,
    pub eta: f64,
}

impl RunRecord {
    pub fn final_rel_error(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn switched_to_sgd(&self) -> bool {
        self.switch_iter.is_some()
    }
}

/// Per-step observation handed to a run observer.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// 1-based step index.
    pub k: usize,
    /// β used this step; `None` for plain SGD steps.
    pub beta: Option<f64>,
    pub u_prev: &'a [f64],
    pub u: &'a [f64],
    pub g: &'a [f64],
    pub x: &'a [f64],
    pub rel_error: f64,
}

/// Produces the stochastic gradient at the current iterate.
pub trait GradientOracle {
    fn gradient(&mut self, x: &[f64], g: &mut [f64]) -> Result<()>;
}

/// Mini-batch gradients of an instance with i.i.d. row sampling.
pub struct MinibatchOracle<'a> {
    pub inst: &'a LlspInstance,
    pub dist: &'a SamplingDistribution,
    pub batch_size: usize,
    pub rng: &'a mut Rng,
}

impl GradientOracle for MinibatchOracle<'_> {
    fn gradient(&mut self, x: &[f64], g: &mut [f64]) -> Result<()> {
        let batch = draw_batch(self.dist, self.batch_size, self.rng);
        minibatch_gradient_into(self.inst, x, &batch, self.dist, g)
    }
}

type Observer<'o> = Option<&'o mut dyn FnMut(&StepEvent<'_>)>;

/// Runs `cfg.algo` on `inst` with mini-batches drawn from `dist`.
pub fn run_optimizer(
    inst: &LlspInstance,
    dist: &SamplingDistribution,
    cfg: &RunConfig,
    rng: &mut Rng,
    observer: Observer<'_>,
) -> Result<RunRecord> {
    if dist.len() != inst.n() {
        return Err(Error::Config(format!(
            "distribution has {} rows, instance has {}",
            dist.len(),
            inst.n()
        )));
    }
    let mut oracle = MinibatchOracle {
        inst,
        dist,
        batch_size: cfg.batch_size,
        rng,
    };
    run_with_oracle(&inst.x_star, &inst.spectral, cfg, &mut oracle, observer)
}

/// Core loop against an arbitrary gradient source.
pub fn run_with_oracle(
    x_star: &[f64],
    spectral: &SpectralSummary,
    cfg: &RunConfig,
    oracle: &mut dyn GradientOracle,
    mut observer: Observer<'_>,
) -> Result<RunRecord> {
    let d = x_star.len();
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if cfg.stop.trace_stride == 0 {
        return Err(Error::Config("trace stride must be at least 1".into()));
    }
    let x1 = cfg.initial_point.clone().unwrap_or_else(|| vec![2.0; d]);
    if x1.len() != d {
        return Err(Error::Config(format!(
            "initial point has {} entries, expected {d}",
            x1.len()
        )));
    }
    let stride = cfg.stop.trace_stride;
    let dist0 = distance(&x1, x_star);
    let epsilon = cfg.epsilon.resolve(spectral)?;
    let main_rule = cfg.main_eta_rule();

    if dist0 == 0.0 {
        // already optimal: nothing to normalize by, nothing to do
        let hyper = HyperParams {
            epsilon,
            u_lower: f64::NAN,
            u_upper: f64::NAN,
            beta_policy: cfg.beta_policy,
            eta_rule: main_rule,
            batch_size: cfg.batch_size,
        };
        return Ok(RunRecord {
            trace: vec![0.0],
            stride,
            iters_to_converge: Some(0),
            iterations: 0,
            wall_ms: 0.0,
            switch_iter: None,
            beta_trace: Vec::new(),
            final_x: x1,
            initial_distance: 0.0,
            hyper,
            eta: f64::NAN,
        });
    }

    let start = Instant::now();
    let mut g = vec![0.0; d];
    oracle.gradient(&x1, &mut g)?;
    let (u_lower, u_upper) = cfg.bounds.resolve(&g)?;
    let hyper = HyperParams {
        epsilon,
        u_lower,
        u_upper,
        beta_policy: cfg.beta_policy,
        eta_rule: main_rule,
        batch_size: cfg.batch_size,
    };
    if matches!(cfg.algo, Algorithm::SgaRmsprop | Algorithm::Rmsp2Sgd) {
        hyper.validate()?;
    }
    let eta = compute_step_size(main_rule, spectral, cfg.batch_size, u_upper);
    let sgd_eta = compute_step_size(cfg.switch_eta_rule(), spectral, cfg.batch_size, u_upper);

    let mut state = match cfg.algo {
        Algorithm::Rmsprop => OptState::zero_average(x1),
        _ => OptState::sga(x1, u_upper),
    };
    let mut trace = vec![1.0];
    let mut beta_trace = Vec::new();
    let mut switch_iter = None;
    let mut iters_to_converge = None;
    let mut u_prev = state.u.clone();
    let tol = cfg.stop.tol;
    if tol.is_some_and(|t| 1.0 <= t) {
        iters_to_converge = Some(0);
    }

    let mut k = 0;
    while iters_to_converge.is_none() && k < cfg.stop.max_iters {
        if k > 0 {
            oracle.gradient(&state.x, &mut g)?;
        }
        k += 1;
        if observer.is_some() {
            u_prev.copy_from_slice(&state.u);
        }
        let beta = match cfg.algo {
            Algorithm::SgaRmsprop => Some(sga_step(&mut state, &g, eta, &hyper)?),
            Algorithm::Rmsprop => {
                rmsprop_step(&mut state, &g, cfg.rmsprop_beta, eta)?;
                Some(cfg.rmsprop_beta)
            }
            Algorithm::Sgd => {
                sgd_step(&mut state, &g, eta)?;
                None
            }
            Algorithm::Rmsp2Sgd if state.switched_to_sgd => {
                sgd_step(&mut state, &g, sgd_eta)?;
                None
            }
            Algorithm::Rmsp2Sgd => {
                let beta = beta_select(&g, &state.u, &hyper);
                if beta == 1.0 {
                    state.consecutive_beta_ones += 1;
                } else {
                    state.consecutive_beta_ones = 0;
                }
                if state.consecutive_beta_ones >= SWITCH_AFTER {
                    // the gradient already drawn is spent on the first SGD step
                    state.switched_to_sgd = true;
                    switch_iter = Some(k);
                    sgd_step(&mut state, &g, sgd_eta)?;
                } else {
                    blend(&mut state.u, &g, beta);
                    for ((xj, gj), uj) in state.x.iter_mut().zip(&g).zip(&state.u) {
                        *xj -= eta * gj / uj.sqrt();
                    }
                    state.k += 1;
                    check_finite(&state.x, k)?;
                }
                Some(beta)
            }
        };
        let rel = distance(&state.x, x_star) / dist0;
        if cfg.stop.record_beta {
            beta_trace.push(beta.unwrap_or(f64::NAN));
        }
        if let Some(obs) = observer.as_mut() {
            obs(&StepEvent {
                k,
                beta,
                u_prev: &u_prev,
                u: &state.u,
                g: &g,
                x: &state.x,
                rel_error: rel,
            });
        }
        let converged = tol.is_some_and(|t| rel <= t);
        if k % stride == 0 || converged {
            trace.push(rel);
        }
        if converged {
            iters_to_converge = Some(k);
        }
        if !(rel <= DIVERGENCE_GUARD) {
            if k % stride != 0 {
                trace.push(rel);
            }
            return Err(Error::Divergence {
                iter: k,
                rel_error: rel,
                trace,
            });
        }
    }
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(RunRecord {
        trace,
        stride,
        iters_to_converge,
        iterations: k,
        wall_ms,
        switch_iter,
        beta_trace,
        final_x: state.x,
        initial_distance: dist0,
        hyper,
        eta,
    })
}
