//! Outer iterations: convex-concave procedure for adaptive switching and
//! successive convex programming for fixed switching / the ideal receiver.
//!
//! Linearization points are damped, `w <- w + gamma (w_hat - w)`. Termination
//! measures the movement `||ln(sigma^2 + w_hat) - ln(sigma^2 + w)||_2`: powers
//! in noise units span many decades, so the log coordinates give a
//! scale-free tolerance.

use serde::{Deserialize, Serialize};

use crate::convexcore::{
    feasible_init, solve_pk, solve_qk, BarrierSettings, FixedSplit, SolveStatus, Start, SubproblemPk,
    SubproblemQk, SubproblemSolution,
};
use crate::error::{Result, SwiptError};
use crate::pareto::PreferenceWeights;
use crate::physics::{utilities_with_fractions, HermitianPsd, PrecoderSet, TsAllocation, UtilityPoint};
use crate::scenario::SystemModel;

/// Allowed decrease of `lambda_hat` between consecutive CCP iterates.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    /// Damping of the linearization-point update, in (0, 1].
    pub gamma: f64,
    /// Termination tolerance on the linearization-point movement.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub barrier: BarrierSettings,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            gamma: 1.0,
            epsilon: 1e-5,
            max_outer_iters: 100,
            barrier: BarrierSettings { gap_tol: 1e-6, ..BarrierSettings::default() },
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(SwiptError::InvalidConfig(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(SwiptError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_outer_iters == 0 {
            return Err(SwiptError::InvalidConfig("max_outer_iters must be at least 1".into()));
        }
        self.barrier.validate()
    }
}

/// Which receiver / algorithm a run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Adaptive,
    Fixed(TsAllocation),
    Ideal,
}

impl Mode {
    pub fn tag(&self) -> String {
        match self {
            Mode::Adaptive => "adaptive".into(),
            Mode::Ideal => "ideal".into(),
            Mode::Fixed(ts) => {
                let a = ts.alphas();
                if a.iter().all(|&v| v == a[0]) {
                    format!("fixed({})", a[0])
                } else {
                    let parts: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                    format!("fixed({})", parts.join(","))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    /// The CCP objective decreased; the procedure's contract is broken.
    NonMonotone,
    /// A subproblem stopped without reaching its gap target.
    SubproblemFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub lambda_hat: f64,
    /// Interference linearization point used by this iteration.
    pub interference_point: Vec<f64>,
    /// Energy linearization point (fixed split only).
    pub energy_point: Option<Vec<f64>>,
    pub movement: f64,
    pub subproblem_status: SolveStatus,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTrace {
    pub records: Vec<IterationRecord>,
}

impl AlgorithmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lambda_hats(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda_hat).collect()
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub solution: SubproblemSolution,
    pub trace: AlgorithmTrace,
    pub status: RunStatus,
    /// Utilities of the returned precoders; energy in watts, rate in nats.
    pub utilities: UtilityPoint,
    /// Chebyshev value of the exact utilities, `min_i min(aR/v1, b eta E/v2)`.
    pub lambda: f64,
}

/// `min` over active constraints of utility / weight, with energy expressed
/// in the model's energy unit. `energy` is in internal units.
pub fn chebyshev_value(
    model: &SystemModel,
    weights: &PreferenceWeights,
    fractions: &[(f64, f64)],
    rate: &[f64],
    energy: &[f64],
) -> f64 {
    let mut v = f64::INFINITY;
    for (i, &(a, b)) in fractions.iter().enumerate() {
        if weights.rate_active(i) {
            v = v.min(a * rate[i] / weights.v1(i));
        }
        if weights.energy_active(i) {
            v = v.min(b * model.energy_coefficient(i) * energy[i] / weights.v2(i));
        }
    }
    v
}

fn log_movement(model: &SystemModel, new: &[f64], old: &[f64]) -> f64 {
    let ch = model.channels();
    new.iter()
        .zip(old)
        .enumerate()
        .map(|(i, (a, b))| {
            let s = ch.noise_power(i);
            ((s + a).ln() - (s + b).ln()).powi(2)
        })
        .sum::<f64>()
}

fn damp(point: &mut [f64], target: &[f64], gamma: f64) {
    for (p, t) in point.iter_mut().zip(target) {
        *p += gamma * (t - *p);
    }
}

/// `0.9 previous + 0.1 init`, pulling a boundary solution back inside. Used
/// when the previous interior point cannot seed the next subproblem.
fn blend(prev: &PrecoderSet, init: &PrecoderSet) -> PrecoderSet {
    let blocks = (0..prev.n_ue())
        .map(|l| {
            (0..prev.n_ap())
                .map(|j| {
                    let m = prev.get(l, j).matrix() * num_complex::Complex64::from(0.9)
                        + init.get(l, j).matrix() * num_complex::Complex64::from(0.1);
                    HermitianPsd::new_unchecked(m)
                })
                .collect()
        })
        .collect();
    PrecoderSet::new(blocks).expect("blend keeps dimensions")
}

fn finish(
    model: &SystemModel,
    weights: &PreferenceWeights,
    solution: SubproblemSolution,
    trace: AlgorithmTrace,
    status: RunStatus,
) -> Result<AlgorithmRun> {
    let fractions: Vec<(f64, f64)> = solution.alpha.iter().copied().zip(solution.beta.iter().copied()).collect();
    let utilities = utilities_with_fractions(model.channels(), &solution.precoders, &fractions, model.eta())?;
    let lambda = chebyshev_value(model, weights, &fractions, &solution.rate, &solution.energy);
    Ok(AlgorithmRun { solution, trace, status, utilities, lambda })
}

/// Convex-concave procedure for adaptive time switching.
pub fn run_adaptive_ts(
    model: &SystemModel,
    weights: &PreferenceWeights,
    config: &IterationConfig,
) -> Result<AlgorithmRun> {
    config.validate()?;
    let init = feasible_init(model)?;
    let mut point = init.interference.clone();
    let mut start = Start::Cold;
    let mut fallback: Option<Start> = None;
    let mut trace = AlgorithmTrace::default();
    let mut best: Option<SubproblemSolution> = None;
    for _ in 0..config.max_outer_iters {
        let spec = SubproblemPk {
            model,
            weights,
            interference_point: point.clone(),
            barrier: config.barrier,
        };
        let sol = match solve_pk(&spec, &start) {
            Err(SwiptError::Infeasible(_) | SwiptError::Numerical(_)) if fallback.is_some() => {
                solve_pk(&spec, fallback.as_ref().expect("checked"))?
            }
            other => other?,
        };
        let movement = log_movement(model, &sol.interference, &point).sqrt();
        let prev_hat = trace.records.last().map(|r| r.lambda_hat);
        trace.records.push(IterationRecord {
            lambda_hat: sol.lambda_hat,
            interference_point: point.clone(),
            energy_point: None,
            movement,
            subproblem_status: sol.status,
            newton_iterations: sol.newton_iterations,
        });
        if sol.status != SolveStatus::Optimal {
            let mut keep = best.unwrap_or_else(|| sol.clone());
            keep.message = sol.message.clone();
            return finish(model, weights, keep, trace, RunStatus::SubproblemFailure);
        }
        if config.gamma == 1.0 {
            if let Some(prev) = prev_hat {
                if sol.lambda_hat < prev - MONOTONE_TOL {
                    return finish(model, weights, sol, trace, RunStatus::NonMonotone);
                }
            }
        }
        if best.as_ref().is_none_or(|b| sol.lambda_hat >= b.lambda_hat) {
            best = Some(sol.clone());
        }
        if movement <= config.epsilon {
            return finish(model, weights, sol, trace, RunStatus::Converged);
        }
        damp(&mut point, &sol.interference, config.gamma);
        let alpha = sol.alpha.iter().map(|a| 0.9 * a + 0.1 * 0.5).collect();
        fallback = Some(Start::Point { precoders: blend(&sol.precoders, &init.precoders), alpha: Some(alpha) });
        start = Start::Resume { point: sol.interior.clone(), t: config.barrier.t_init };
    }
    let best = best.expect("at least one iteration ran");
    finish(model, weights, best, trace, RunStatus::MaxIters)
}

/// Smallest damping the split iterations fall back to.
pub const MIN_SCP_STEP: f64 = 0.125;
const SCP_DROP_TOL: f64 = 1e-9;

fn run_split(
    model: &SystemModel,
    weights: &PreferenceWeights,
    split: FixedSplit,
    config: &IterationConfig,
) -> Result<AlgorithmRun> {
    config.validate()?;
    let init = feasible_init(model)?;
    let mut energy_point = init.energy.clone();
    let mut interference_point = init.interference.clone();
    let mut start = Start::Cold;
    let mut fallback: Option<Start> = None;
    let mut trace = AlgorithmTrace::default();
    let mut best: Option<(f64, SubproblemSolution)> = None;
    let mut previous: Option<f64> = None;
    let mut step = config.gamma;
    let fractions = split.fractions(model.n_ue());
    for _ in 0..config.max_outer_iters {
        let spec = SubproblemQk {
            model,
            weights,
            split: split.clone(),
            energy_point: energy_point.clone(),
            interference_point: interference_point.clone(),
            barrier: config.barrier,
        };
        let sol = match solve_qk(&spec, &start) {
            Err(SwiptError::Infeasible(_) | SwiptError::Numerical(_)) if fallback.is_some() => {
                solve_qk(&spec, fallback.as_ref().expect("checked"))?
            }
            other => other?,
        };
        let movement = (log_movement(model, &sol.energy, &energy_point)
            + log_movement(model, &sol.interference, &interference_point))
        .sqrt();
        trace.records.push(IterationRecord {
            lambda_hat: sol.lambda_hat,
            interference_point: interference_point.clone(),
            energy_point: Some(energy_point.clone()),
            movement,
            subproblem_status: sol.status,
            newton_iterations: sol.newton_iterations,
        });
        if sol.status != SolveStatus::Optimal {
            let mut keep = best.map(|b| b.1).unwrap_or_else(|| sol.clone());
            keep.message = sol.message.clone();
            return finish(model, weights, keep, trace, RunStatus::SubproblemFailure);
        }
        // Successive iterates are only feasible for the linearized problem,
        // so the best iterate is ranked by its exact Chebyshev value.
        let exact = chebyshev_value(model, weights, &fractions, &sol.rate, &sol.energy);
        if best.as_ref().is_none_or(|b| exact >= b.0) {
            best = Some((exact, sol.clone()));
        }
        if movement <= config.epsilon {
            return finish(model, weights, sol, trace, RunStatus::Converged);
        }
        // Linearizing both log terms can make the undamped iteration cycle;
        // a drop in the exact value halves the step.
        if previous.is_some_and(|p| exact < p - SCP_DROP_TOL * p.abs().max(1.0)) {
            step = (step * 0.5).max(MIN_SCP_STEP.min(config.gamma));
        }
        previous = Some(exact);
        damp(&mut energy_point, &sol.energy, step);
        damp(&mut interference_point, &sol.interference, step);
        fallback = Some(Start::Point { precoders: blend(&sol.precoders, &init.precoders), alpha: None });
        start = Start::Resume { point: sol.interior.clone(), t: config.barrier.t_init };
    }
    let best = best.expect("at least one iteration ran").1;
    finish(model, weights, best, trace, RunStatus::MaxIters)
}

/// Successive convex programming with fixed switching ratios.
pub fn run_fixed_ts(
    model: &SystemModel,
    weights: &PreferenceWeights,
    ts: &TsAllocation,
    config: &IterationConfig,
) -> Result<AlgorithmRun> {
    if ts.len() != model.n_ue() {
        return Err(SwiptError::DimensionMismatch(format!(
            "{} switching ratios for {} UEs",
            ts.len(),
            model.n_ue()
        )));
    }
    run_split(model, weights, FixedSplit::Ts(ts.clone()), config)
}

/// Ideal receiver that decodes and harvests all the time.
pub fn run_ideal(model: &SystemModel, weights: &PreferenceWeights, config: &IterationConfig) -> Result<AlgorithmRun> {
    run_split(model, weights, FixedSplit::Ideal, config)
}

pub fn run(model: &SystemModel, weights: &PreferenceWeights, mode: &Mode, config: &IterationConfig) -> Result<AlgorithmRun> {
    match mode {
        Mode::Adaptive => run_adaptive_ts(model, weights, config),
        Mode::Fixed(ts) => run_fixed_ts(model, weights, ts, config),
        Mode::Ideal => run_ideal(model, weights, config),
    }
}
