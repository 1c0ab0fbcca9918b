//! Self-check suites behind `swipt validate`: oracle agreement, solution
//! invariants and small Monte-Carlo trend checks.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, IterationConfig, Mode, RunStatus, MONOTONE_TOL};
use crate::analysis::{
    extract_beamformer, min_active_rank_ratio, nearest_ap_energy_ratio, power_residual, POWER_TOL, RANK_ACCEPT,
    RANK_EXTRACT,
};
use crate::error::{Result, SwiptError};
use crate::oracle::{analytic_miso_single_user, analytic_siso, random_search_lambda};
use crate::pareto::{dominance_audit, log_grid, make_theta_schedule, sweep, PreferenceWeights};
use crate::physics::TsAllocation;
use crate::scenario::{ChannelSet, ScenarioConfig, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = SwiptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(SwiptError::InvalidConfig(format!("unknown validation level '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match body() {
        Ok((passed, detail)) => Check { name: name.into(), passed, detail },
        Err(e) => Check { name: name.into(), passed: false, detail: format!("error: {e}") },
    }
}

fn default_model(seed: u64) -> Result<SystemModel> {
    SystemModel::from_config(&ScenarioConfig { seed, ..Default::default() })
}

fn scalar_oracle() -> Result<(bool, String)> {
    let h = Complex64::new(0.7, -0.4);
    let ch = ChannelSet::new(vec![vec![DVector::from_element(1, h)]], vec![0.5])?;
    let model = SystemModel::new(&ch, 2.0, vec![0.6], 1.0)?;
    let mut worst: f64 = 0.0;
    for (v1, v2) in [(1.0, 1.0), (0.2, 1.0), (1.0, 0.0), (0.0, 1.0)] {
        let o = analytic_siso(h, 0.5, 2.0, 0.6, v1, v2)?;
        let w = PreferenceWeights::new(vec![v1], vec![v2])?;
        let r = run(&model, &w, &Mode::Adaptive, &IterationConfig::default())?;
        worst = worst.max((r.lambda - o.lambda).abs() / o.lambda);
    }
    Ok((worst <= 1e-4, format!("worst lambda rel err {worst:.2e}")))
}

fn mrt_oracle() -> Result<(bool, String)> {
    let cfg = ScenarioConfig { n_ap: 1, antennas_per_ap: vec![2], n_ue: 1, seed: 3, ..Default::default() };
    let model = SystemModel::from_config(&cfg)?;
    let h = model.channels().h(0, 0);
    let (rate, x) = analytic_miso_single_user(h, model.channels().noise_power(0), model.p_max())?;
    let w = PreferenceWeights::new(vec![1.0], vec![0.0])?;
    let mut worst_rate: f64 = 0.0;
    let mut worst_cos: f64 = 1.0;
    for mode in [Mode::Adaptive, Mode::Ideal] {
        let r = run(&model, &w, &mode, &IterationConfig::default())?;
        worst_rate = worst_rate.max((r.utilities.rate_raw[0] - rate).abs() / rate);
        let b = extract_beamformer(r.solution.precoders.get(0, 0), RANK_EXTRACT)?;
        worst_cos = worst_cos.min(b.dotc(&x).norm() / (b.norm() * x.norm()));
    }
    Ok((worst_rate <= 1e-3 && worst_cos >= 0.999, format!("rate rel err {worst_rate:.2e}, |cos| {worst_cos:.6}")))
}

fn solution_invariants(seeds: u64) -> Result<(bool, String)> {
    let w = PreferenceWeights::uniform(2, 1.0, 1.0)?;
    let fixed = Mode::Fixed(TsAllocation::uniform(2, 0.5)?);
    let rows: Vec<Result<(f64, f64, f64, bool)>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let model = default_model(seed)?;
            let mut rank: f64 = 1.0;
            let mut power: f64 = 0.0;
            let mut drop = f64::NEG_INFINITY;
            let mut converged = true;
            for mode in [&Mode::Adaptive, &fixed, &Mode::Ideal] {
                let r = run(&model, &w, mode, &IterationConfig::default())?;
                converged &= r.status == RunStatus::Converged;
                rank = rank.min(min_active_rank_ratio(&r.solution.precoders, model.p_max()).unwrap_or(1.0));
                power = power.max(power_residual(&r.solution.precoders, model.p_max()) / model.p_max());
                if *mode == Mode::Adaptive {
                    for pair in r.trace.lambda_hats().windows(2) {
                        drop = drop.max(pair[0] - pair[1]);
                    }
                }
            }
            Ok((rank, power, drop, converged))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let rank = rows.iter().map(|r| r.0).fold(1.0, f64::min);
    let power = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let drop = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let unconverged = rows.iter().filter(|r| !r.3).count();
    Ok((
        rank >= RANK_ACCEPT && power <= POWER_TOL && drop <= MONOTONE_TOL && unconverged == 0,
        format!(
            "{seeds} seeds: worst rank ratio {rank:.6}, worst power residual {power:.2e}, \
             largest lambda-hat decrease {drop:.2e}, {unconverged} runs not converged"
        ),
    ))
}

fn mode_ordering(seeds: u64, thetas: &[f64]) -> Result<(bool, String)> {
    let cases: Vec<(u64, f64)> = (0..seeds).flat_map(|s| thetas.iter().map(move |&t| (s, t))).collect();
    let bad: Vec<Result<usize>> = cases
        .par_iter()
        .map(|&(seed, theta)| {
            let model = default_model(seed)?;
            let w = PreferenceWeights::uniform(2, theta, 1.0)?;
            let cfg = IterationConfig::default();
            let ideal = run(&model, &w, &Mode::Ideal, &cfg)?.lambda;
            let adaptive = run(&model, &w, &Mode::Adaptive, &cfg)?.lambda;
            let fixed = run(&model, &w, &Mode::Fixed(TsAllocation::uniform(2, 0.5)?), &cfg)?.lambda;
            let tol = |x: f64| 1e-6 * x.abs().max(1.0);
            Ok(usize::from(ideal < adaptive - tol(adaptive)) + usize::from(adaptive < fixed - tol(fixed)))
        })
        .collect();
    let violations: usize = bad.into_iter().sum::<Result<usize>>()?;
    Ok((violations == 0, format!("{} cases, {violations} ordering violations", cases.len())))
}

fn frontier_audit() -> Result<(bool, String)> {
    let model = default_model(0)?;
    let schedule = make_theta_schedule(&log_grid(1e-3, 1e3, 20)?, None, 2)?;
    let frontier = sweep(&model, &schedule, &Mode::Adaptive, &IterationConfig::default());
    let worst = dominance_audit(&frontier).iter().map(|v| v.magnitude()).fold(0.0, f64::max);
    let failed = frontier.points.iter().filter(|p| !p.has_utilities()).count();
    Ok((worst <= 1e-6 && failed == 0, format!("20 points, {failed} failed, worst dominance {worst:.2e}")))
}

fn random_search(seeds: u64, samples: usize) -> Result<(bool, String)> {
    let rows: Vec<Result<f64>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let model = default_model(seed)?;
            let w = PreferenceWeights::uniform(2, 1.0, 1.0)?;
            let mut margin = f64::INFINITY;
            for mode in [Mode::Adaptive, Mode::Ideal] {
                let alg = run(&model, &w, &mode, &IterationConfig::default())?.lambda;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                margin = margin.min(alg - random_search_lambda(&model, &w, &mode, samples, &mut rng)?);
            }
            Ok(margin)
        })
        .collect();
    let margin = rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
    Ok((margin >= -1e-6, format!("{seeds} seeds, smallest margin over random search {margin:.3e}")))
}

fn nearest_ap_trend(seeds: u64) -> Result<(bool, String)> {
    let w = PreferenceWeights::uniform(2, 0.0, 1.0)?;
    let mut means = Vec::new();
    for d in [5.0, 20.0, 50.0] {
        let rs: Vec<Result<f64>> = (0..seeds)
            .into_par_iter()
            .map(|seed| {
                let cfg = ScenarioConfig { seed, ap_distance: d, d_max: 5.0, ..Default::default() };
                let model = SystemModel::from_config(&cfg)?;
                let r = run(&model, &w, &Mode::Adaptive, &IterationConfig::default())?;
                nearest_ap_energy_ratio(model.channels(), &r.solution.precoders, 0)
            })
            .collect();
        let rs = rs.into_iter().collect::<Result<Vec<_>>>()?;
        means.push(rs.iter().sum::<f64>() / rs.len() as f64);
    }
    let ok = means.windows(2).all(|p| p[1] >= p[0]) && means[2] > 0.95;
    Ok((ok, format!("mean r at D = 5, 20, 50 m: {:.4}, {:.4}, {:.4}", means[0], means[1], means[2])))
}

/// Runs the suite for `level`. Checks never panic; errors become failures.
pub fn run_suite(level: Level) -> Vec<Check> {
    let mut checks = vec![
        check("scalar closed form", scalar_oracle),
        check("single-user MRT", mrt_oracle),
    ];
    match level {
        Level::Fast => {
            checks.push(check("rank, power and monotonicity", || solution_invariants(3)));
        }
        Level::Full => {
            checks.push(check("rank, power and monotonicity", || solution_invariants(20)));
            checks.push(check("ideal >= adaptive >= fixed", || mode_ordering(5, &[1e-2, 1.0, 1e2])));
            checks.push(check("frontier dominance audit", frontier_audit));
            checks.push(check("random-search lower bound", || random_search(5, 10_000)));
            checks.push(check("nearest-AP energy trend", || nearest_ap_trend(30)));
        }
    }
    checks
}
