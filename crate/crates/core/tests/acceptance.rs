//! Acceptance criteria. Every criterion prints one PASS / FAIL line; the test
//! fails if any criterion does.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use swipt_core::algorithms::{run, run_adaptive_ts, AlgorithmRun, IterationConfig, Mode, RunStatus, MONOTONE_TOL};
use swipt_core::analysis::{extract_beamformer, nearest_ap_energy_ratio, rank_one_ratio, RANK_ACCEPT, RANK_EXTRACT};
use swipt_core::oracle::random_search_lambda;
use swipt_core::pareto::{dominance_audit, log_grid, make_theta_schedule, sweep, PreferenceWeights};
use swipt_core::physics::TsAllocation;
use swipt_core::scenario::{ChannelSet, ScenarioConfig, SystemModel};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn paper_model(seed: u64) -> SystemModel {
    SystemModel::from_config(&ScenarioConfig { seed, ..Default::default() }).unwrap()
}

fn scalar_model(h: Complex64, sigma2: f64, p_max: f64, eta: f64) -> SystemModel {
    let ch = ChannelSet::new(vec![vec![DVector::from_element(1, h)]], vec![sigma2]).unwrap();
    SystemModel::new(&ch, p_max, vec![eta], 1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `a >= b` up to `tol`, relative for values above one.
fn at_least(a: f64, b: f64, tol: f64) -> bool {
    a >= b - tol * b.abs().max(1.0)
}

fn config() -> IterationConfig {
    IterationConfig::default()
}

fn criterion_scalar_oracle() -> Outcome {
    let start = Instant::now();
    let model = scalar_model(Complex64::new(1.0, 0.0), 1.0, 1.0, 1.0);
    let w = PreferenceWeights::uniform(1, 1.0, 1.0).unwrap();
    let r = run_adaptive_ts(&model, &w, &config()).unwrap();
    let elapsed = start.elapsed();
    // Balance alpha ln2 = (1 - alpha) * 1.
    let ln2 = 2f64.ln();
    let alpha = 1.0 / (1.0 + ln2);
    let lambda = alpha * ln2;
    let (el, ea) = (rel(r.lambda, lambda), rel(r.solution.alpha[0], alpha));
    outcome(
        el <= 1e-4 && ea <= 1e-4 && elapsed < Duration::from_secs(1) && r.status == RunStatus::Converged,
        format!("lambda rel err {el:.2e}, alpha rel err {ea:.2e}, {elapsed:?}, {:?}", r.status),
    )
}

fn criterion_mrt_endpoint() -> Outcome {
    let mut worst_rate: f64 = 0.0;
    let mut worst_cos: f64 = 1.0;
    let mut ok = true;
    let mut channels = vec![
        ChannelSet::new(
            vec![vec![DVector::from_vec(vec![Complex64::new(0.8, 0.3), Complex64::new(-0.5, 0.9)])]],
            vec![1.0],
        )
        .unwrap(),
    ];
    for seed in 0..3 {
        let cfg = ScenarioConfig {
            n_ap: 1,
            antennas_per_ap: vec![2],
            n_ue: 1,
            seed,
            ..Default::default()
        };
        channels.push(swipt_core::scenario::build_scenario(&cfg).unwrap());
    }
    for ch in &channels {
        let model = SystemModel::new(ch, 1.0, vec![1.0], 1.0).unwrap();
        let h = model.channels().h(0, 0).clone();
        let sigma2 = model.channels().noise_power(0);
        let expected = (model.p_max() * h.norm_squared() / sigma2).ln_1p();
        let w = PreferenceWeights::new(vec![1.0], vec![0.0]).unwrap();
        let r = run_adaptive_ts(&model, &w, &config()).unwrap();
        ok &= r.status == RunStatus::Converged;
        worst_rate = worst_rate.max(rel(r.utilities.rate_raw[0], expected));
        match extract_beamformer(r.solution.precoders.get(0, 0), RANK_EXTRACT) {
            Ok(x) => {
                let cos = x.dotc(&h).norm() / (x.norm() * h.norm());
                worst_cos = worst_cos.min(cos);
            }
            Err(_) => worst_cos = 0.0,
        }
    }
    outcome(
        ok && worst_rate <= 1e-3 && worst_cos >= 0.999,
        format!("worst rate rel err {worst_rate:.2e}, worst |cos| {worst_cos:.6}"),
    )
}

/// The fifty paper-default scenarios shared by the rank, power and
/// monotonicity criteria, with symmetric weights.
fn fifty_runs() -> Vec<(u64, AlgorithmRun, AlgorithmRun)> {
    let w = PreferenceWeights::uniform(2, 1.0, 1.0).unwrap();
    let fixed = Mode::Fixed(TsAllocation::uniform(2, 0.5).unwrap());
    (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let model = paper_model(seed);
            let a = run(&model, &w, &Mode::Adaptive, &config()).unwrap();
            let f = run(&model, &w, &fixed, &config()).unwrap();
            (seed, a, f)
        })
        .collect()
}

fn criterion_rank_one(runs: &[(u64, AlgorithmRun, AlgorithmRun)]) -> Outcome {
    let mut worst: f64 = 1.0;
    let mut checked = 0;
    for (_, a, f) in runs {
        for r in [a, f] {
            if r.status != RunStatus::Converged {
                continue;
            }
            for (_, _, x) in r.solution.precoders.iter() {
                if x.trace() > 1e-6 {
                    worst = worst.min(rank_one_ratio(x).unwrap());
                    checked += 1;
                }
            }
        }
    }
    outcome(worst >= RANK_ACCEPT, format!("{checked} active precoders, worst ratio {worst:.6}"))
}

fn criterion_power(runs: &[(u64, AlgorithmRun, AlgorithmRun)]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (_, a, f) in runs {
        for r in [a, f] {
            if r.status == RunStatus::Converged {
                worst = worst.max((r.solution.precoders.total_power() - 1.0).abs());
            }
        }
    }
    outcome(worst <= 1e-5, format!("worst |sum tr X - p_max| {worst:.2e} W"))
}

fn criterion_monotone(runs: &[(u64, AlgorithmRun, AlgorithmRun)]) -> Outcome {
    let mut worst_drop = f64::NEG_INFINITY;
    let mut unconverged = Vec::new();
    let mut max_iters = 0;
    for (seed, a, _) in runs {
        let hats = a.trace.lambda_hats();
        for w in hats.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        max_iters = max_iters.max(a.trace.len());
        if a.status != RunStatus::Converged {
            unconverged.push(format!("seed {seed}: {:?} after {}", a.status, a.trace.len()));
        }
    }
    outcome(
        worst_drop <= MONOTONE_TOL && unconverged.is_empty(),
        format!(
            "largest decrease {worst_drop:.2e}, most outer iterations {max_iters}, not converged: [{}]",
            unconverged.join("; ")
        ),
    )
}

fn criterion_ordering() -> Outcome {
    let thetas = log_grid(1e-3, 1e3, 10).unwrap();
    let alphas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let cases: Vec<(u64, f64)> = (0..10u64).flat_map(|s| thetas.iter().map(move |&t| (s, t))).collect();
    let failures: Vec<String> = cases
        .par_iter()
        .flat_map_iter(|&(seed, theta)| {
            let model = paper_model(seed);
            let w = PreferenceWeights::uniform(2, theta, 1.0).unwrap();
            let ideal = run(&model, &w, &Mode::Ideal, &config()).unwrap().lambda;
            let adaptive = run(&model, &w, &Mode::Adaptive, &config()).unwrap().lambda;
            let mut bad = Vec::new();
            if !at_least(ideal, adaptive, 1e-6) {
                bad.push(format!("seed {seed} theta {theta:.3e}: ideal {ideal:.9} < adaptive {adaptive:.9}"));
            }
            for a in alphas {
                let mode = Mode::Fixed(TsAllocation::uniform(2, a).unwrap());
                let fixed = run(&model, &w, &mode, &config()).unwrap().lambda;
                if !at_least(adaptive, fixed, 1e-6) {
                    bad.push(format!("seed {seed} theta {theta:.3e}: adaptive {adaptive:.9} < fixed({a}) {fixed:.9}"));
                }
            }
            bad
        })
        .collect();
    outcome(
        failures.is_empty(),
        format!("{} cases, {} violations {}", cases.len(), failures.len(), failures.join("; ")),
    )
}

fn criterion_endpoints() -> Outcome {
    let rate_only = PreferenceWeights::uniform(2, 1.0, 0.0).unwrap();
    let energy_only = PreferenceWeights::uniform(2, 0.0, 1.0).unwrap();
    let worst: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let model = paper_model(seed);
            let lam = |w: &PreferenceWeights, m: &Mode| run(&model, w, m, &config()).unwrap().lambda;
            let r = rel(lam(&rate_only, &Mode::Adaptive), lam(&rate_only, &Mode::Ideal));
            let e = rel(lam(&energy_only, &Mode::Adaptive), lam(&energy_only, &Mode::Ideal));
            (r, e)
        })
        .collect();
    let r = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let e = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    outcome(r <= 0.01 && e <= 0.01, format!("worst max-rate gap {r:.2e}, worst max-energy gap {e:.2e}"))
}

fn criterion_tradeoff() -> Outcome {
    let model = paper_model(0);
    let schedule = make_theta_schedule(&log_grid(1e-3, 1e3, 20).unwrap(), None, 2).unwrap();
    let frontier = sweep(&model, &schedule, &Mode::Adaptive, &config());
    let bad: Vec<String> = dominance_audit(&frontier)
        .iter()
        .filter(|v| v.magnitude() > 1e-6)
        .map(|v| format!("UE {} {} beaten by {} ({:.2e})", v.ue, v.dominated, v.dominating, v.magnitude()))
        .collect();
    let failed = frontier.points.iter().filter(|p| !p.has_utilities()).count();
    outcome(
        bad.is_empty() && failed == 0,
        format!("{} points, {failed} failed, {} violations {}", frontier.points.len(), bad.len(), bad.join("; ")),
    )
}

fn criterion_nearest_ap() -> Outcome {
    let energy_only = PreferenceWeights::uniform(2, 0.0, 1.0).unwrap();
    let mut means = Vec::new();
    for d in [5.0, 10.0, 20.0, 50.0] {
        let ratios: Vec<f64> = (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let cfg = ScenarioConfig { seed, ap_distance: d, d_max: 5.0, ..Default::default() };
                let model = SystemModel::from_config(&cfg).unwrap();
                let r = run(&model, &energy_only, &Mode::Adaptive, &config()).unwrap();
                nearest_ap_energy_ratio(model.channels(), &r.solution.precoders, 0).unwrap()
            })
            .collect();
        means.push((d, ratios.iter().sum::<f64>() / ratios.len() as f64));
    }
    let monotone = means.windows(2).all(|w| w[1].1 >= w[0].1);
    let last = means.last().unwrap().1;
    let table: Vec<String> = means.iter().map(|(d, r)| format!("D={d}: {r:.4}")).collect();
    outcome(monotone && last > 0.95, table.join(", "))
}

fn criterion_random_search() -> Outcome {
    let mut cases: Vec<(String, SystemModel, PreferenceWeights, Mode)> = Vec::new();
    cases.push((
        "scalar".into(),
        scalar_model(Complex64::new(1.0, 0.0), 1.0, 1.0, 1.0),
        PreferenceWeights::uniform(1, 1.0, 1.0).unwrap(),
        Mode::Adaptive,
    ));
    let mrt = ChannelSet::new(
        vec![vec![DVector::from_vec(vec![Complex64::new(0.8, 0.3), Complex64::new(-0.5, 0.9)])]],
        vec![1.0],
    )
    .unwrap();
    cases.push((
        "mrt".into(),
        SystemModel::new(&mrt, 1.0, vec![1.0], 1.0).unwrap(),
        PreferenceWeights::new(vec![1.0], vec![0.0]).unwrap(),
        Mode::Adaptive,
    ));
    for seed in 0..5u64 {
        for theta in [0.1, 1.0, 10.0] {
            for mode in [Mode::Adaptive, Mode::Ideal, Mode::Fixed(TsAllocation::uniform(2, 0.5).unwrap())] {
                cases.push((
                    format!("seed {seed} theta {theta} {}", mode.tag()),
                    paper_model(seed),
                    PreferenceWeights::uniform(2, theta, 1.0).unwrap(),
                    mode,
                ));
            }
        }
    }
    let failures: Vec<String> = cases
        .par_iter()
        .enumerate()
        .filter_map(|(k, (name, model, w, mode))| {
            let alg = run(model, w, mode, &config()).unwrap().lambda;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
            let noise = random_search_lambda(model, w, mode, 10_000, &mut rng).unwrap();
            (!(alg >= noise - 1e-6)).then(|| format!("{name}: algorithm {alg:.9} < search {noise:.9}"))
        })
        .collect();
    outcome(
        failures.is_empty(),
        format!("{} scenarios, {} beaten {}", cases.len(), failures.len(), failures.join("; ")),
    )
}

fn criterion_runtime() -> Outcome {
    let model = paper_model(0);
    let schedule = make_theta_schedule(&log_grid(1e-3, 1e3, 20).unwrap(), None, 2).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let frontier = pool.install(|| sweep(&model, &schedule, &Mode::Adaptive, &config()));
    let elapsed = start.elapsed();
    outcome(
        elapsed < Duration::from_secs(300) && frontier.points.len() == 20,
        format!("20-point adaptive frontier in {elapsed:.2?} on one thread"),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "single-user scalar oracle", criterion_scalar_oracle()));
    results.push((2, "MRT rate-only endpoint", criterion_mrt_endpoint()));
    let runs = fifty_runs();
    results.push((3, "rank-one precoders", criterion_rank_one(&runs)));
    results.push((4, "power tightness", criterion_power(&runs)));
    results.push((5, "CCP monotonicity and termination", criterion_monotone(&runs)));
    results.push((6, "ideal >= adaptive >= fixed ordering", criterion_ordering()));
    results.push((7, "TS / ideal endpoint equality", criterion_endpoints()));
    results.push((8, "trade-off monotonicity", criterion_tradeoff()));
    results.push((9, "nearest-AP ratio trend", criterion_nearest_ap()));
    results.push((10, "never beaten by random search", criterion_random_search()));
    results.push((11, "runtime budget", criterion_runtime()));
    for (n, name, o) in &results {
        println!("criterion {n:>2} {} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
