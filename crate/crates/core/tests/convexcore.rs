use nalgebra::DVector;
use num_complex::Complex64;
use swipt_core::convexcore::*;
use swipt_core::oracle::{analytic_miso_single_user, analytic_siso};
use swipt_core::pareto::PreferenceWeights;
use swipt_core::physics::TsAllocation;
use swipt_core::scenario::{ChannelSet, ScenarioConfig, SystemModel};

fn scalar_model(h: f64) -> SystemModel {
    let ch = ChannelSet::new(vec![vec![DVector::from_element(1, Complex64::new(h, 0.0))]], vec![1.0]).unwrap();
    SystemModel::new(&ch, 1.0, vec![1.0], 1.0).unwrap()
}

fn pk<'a>(model: &'a SystemModel, w: &'a PreferenceWeights, point: Vec<f64>) -> SubproblemPk<'a> {
    SubproblemPk { model, weights: w, interference_point: point, barrier: BarrierSettings::default() }
}

#[test]
fn scalar_adaptive_matches_closed_form() {
    let model = scalar_model(1.0);
    let w = PreferenceWeights::new(vec![1.0], vec![1.0]).unwrap();
    let sol = solve_pk(&pk(&model, &w, vec![0.0]), &Start::Cold).unwrap();
    let o = analytic_siso(Complex64::new(1.0, 0.0), 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.alpha[0] - o.alpha).abs() < 1e-4 * o.alpha);
    assert!((sol.lambda - o.lambda).abs() < 1e-4 * o.lambda);
    assert!((sol.lambda_hat - o.lambda.ln()).abs() < 1e-4);
    assert!((sol.precoders.total_power() - 1.0).abs() < 1e-6);
}

#[test]
fn uniform_start_splits_power_evenly() {
    let model = SystemModel::from_config(&ScenarioConfig::default()).unwrap();
    let init = feasible_init(&model).unwrap();
    for (_, _, x) in init.precoders.iter() {
        let m = x.matrix();
        assert!((m[(0, 0)].re - 0.99 * 0.125).abs() < 1e-15);
        assert_eq!(m[(0, 1)], Complex64::new(0.0, 0.0));
    }
    assert!((init.precoders.total_power() - 0.99).abs() < 1e-12);
    assert!(init.ts.alphas().iter().all(|&a| a == 0.5));
    assert!(init.rate.iter().chain(&init.energy).chain(&init.interference).all(|v| v.is_finite() && *v >= 0.0));

    let single = feasible_init(&scalar_model(2.0)).unwrap();
    assert!((single.precoders.total_power() - 0.99).abs() < 1e-15);
}

#[test]
fn zero_channel_has_no_interior() {
    let ch = ChannelSet::new(vec![vec![DVector::from_element(2, Complex64::new(0.0, 0.0))]], vec![1.0]).unwrap();
    let model = SystemModel::new(&ch, 1.0, vec![1.0], 1.0).unwrap();
    assert!(feasible_init(&model).is_err());
}

#[test]
fn warm_start_at_optimum_stays_put() {
    let model = SystemModel::from_config(&ScenarioConfig { seed: 2, ..Default::default() }).unwrap();
    let w = PreferenceWeights::uniform(2, 1.0, 1.0).unwrap();
    let init = feasible_init(&model).unwrap();
    let spec = pk(&model, &w, init.interference.clone());
    let first = solve_pk(&spec, &Start::Cold).unwrap();
    let again = solve_pk(&spec, &Start::Resume { point: first.interior.clone(), t: first.t }).unwrap();
    assert_eq!(again.status, SolveStatus::Optimal);
    assert!(again.centering_steps <= 3, "{} centering steps", again.centering_steps);
    assert!((again.lambda_hat - first.lambda_hat).abs() < 1e-7);
    for (a, b) in again.alpha.iter().zip(&first.alpha) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn rate_priority_drives_alpha_to_one() {
    let h = DVector::from_vec(vec![Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.7)]);
    let ch = ChannelSet::new(vec![vec![h.clone()]], vec![1.0]).unwrap();
    let model = SystemModel::new(&ch, 1.0, vec![1.0], 1.0).unwrap();
    let w = PreferenceWeights::new(vec![1e4], vec![1.0]).unwrap();
    let sol = solve_pk(&pk(&model, &w, vec![0.0]), &Start::Cold).unwrap();
    // With X fixed at MRT the best alpha balances alpha R / v1 = (1 - alpha) E.
    let (rate, _) = analytic_miso_single_user(&h, 1.0, 1.0).unwrap();
    let energy = h.norm_squared();
    let best = (0..=100_000)
        .map(|k| {
            let a = k as f64 / 100_000.0;
            (a * rate / 1e4).min((1.0 - a) * energy)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(sol.alpha[0] > 0.999);
    assert!((sol.lambda - best).abs() < 1e-4 * best, "{} vs {best}", sol.lambda);
}

#[test]
fn fixed_half_split_scalar() {
    let model = scalar_model(1.0);
    for (v1, v2) in [(1.0, 1.0), (1.0, 0.2), (0.1, 1.0)] {
        let w = PreferenceWeights::new(vec![v1], vec![v2]).unwrap();
        let spec = SubproblemQk {
            model: &model,
            weights: &w,
            split: FixedSplit::Ts(TsAllocation::uniform(1, 0.5).unwrap()),
            energy_point: vec![1.0],
            interference_point: vec![0.0],
            barrier: BarrierSettings::default(),
        };
        let sol = solve_qk(&spec, &Start::Cold).unwrap();
        let expected = (0.5 * 2f64.ln() / v1).min(0.5 / v2);
        assert!((sol.lambda - expected).abs() < 1e-6 * expected, "{} vs {expected}", sol.lambda);
        assert!((sol.precoders.total_power() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_decoding_time_with_rate_weight_is_degenerate() {
    let model = scalar_model(1.0);
    let w = PreferenceWeights::new(vec![1.0], vec![1.0]).unwrap();
    let spec = SubproblemQk {
        model: &model,
        weights: &w,
        split: FixedSplit::Ts(TsAllocation::uniform(1, 0.0).unwrap()),
        energy_point: vec![1.0],
        interference_point: vec![0.0],
        barrier: BarrierSettings::default(),
    };
    assert!(matches!(solve_qk(&spec, &Start::Cold), Err(swipt_core::SwiptError::DegenerateWeights(_))));
}

#[test]
fn rate_only_bottleneck_is_tight() {
    let model = SystemModel::from_config(&ScenarioConfig { seed: 1, ..Default::default() }).unwrap();
    let w = PreferenceWeights::uniform(2, 1.0, 0.0).unwrap();
    let init = feasible_init(&model).unwrap();
    let spec = SubproblemQk {
        model: &model,
        weights: &w,
        split: FixedSplit::Ideal,
        energy_point: init.energy.clone(),
        interference_point: init.interference.clone(),
        barrier: BarrierSettings::default(),
    };
    let sol = solve_qk(&spec, &Start::Cold).unwrap();
    let slack: Vec<f64> = sol.rate_bound.iter().map(|r| r - sol.lambda).collect();
    assert!(slack.iter().all(|s| *s >= -1e-6 * sol.lambda));
    assert!(slack.iter().any(|s| s.abs() <= 1e-6 * sol.lambda), "{slack:?}");
}
