//! Ground truth that does not go through the convex solver: closed forms for
//! single-user cases and a randomized lower bound for everything else.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algorithms::Mode;
use crate::error::{Result, SwiptError};
use crate::pareto::PreferenceWeights;
use crate::physics::{energy_i, rate_i, PrecoderSet};
use crate::scenario::SystemModel;

/// Grid size used to confirm the single-antenna closed form.
pub const SISO_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SisoOptimum {
    pub lambda: f64,
    pub alpha: f64,
    /// Rate in nats/s/Hz.
    pub rate: f64,
    /// Received energy `p_max |h|^2`.
    pub energy: f64,
}

fn siso_objective(alpha: f64, rate: f64, harvest: f64, v1: f64, v2: f64) -> f64 {
    let r = if v1 > 0.0 { alpha * rate / v1 } else { f64::INFINITY };
    let e = if v2 > 0.0 { (1.0 - alpha) * harvest / v2 } else { f64::INFINITY };
    r.min(e)
}

/// Single-antenna, single-user optimum of the Chebyshev problem. Full power
/// is optimal and both weighted constraints are active, which balances
/// `alpha R / v1 = (1 - alpha) eta E / v2`. The closed form is checked
/// against a grid over `alpha` and an inconsistency is reported as an error.
pub fn analytic_siso(h: Complex64, sigma2: f64, p_max: f64, eta: f64, v1: f64, v2: f64) -> Result<SisoOptimum> {
    if !(h.norm_sqr() > 0.0) {
        return Err(SwiptError::Domain("zero channel".into()));
    }
    if !(sigma2 > 0.0 && p_max > 0.0 && eta > 0.0) {
        return Err(SwiptError::Domain("noise, power and efficiency must be positive".into()));
    }
    if !(v1 >= 0.0 && v2 >= 0.0) || (v1 == 0.0 && v2 == 0.0) {
        return Err(SwiptError::DegenerateWeights(format!("weights ({v1}, {v2})")));
    }
    let energy = p_max * h.norm_sqr();
    let rate = (energy / sigma2).ln_1p();
    let harvest = eta * energy;
    let (alpha, lambda) = if v1 == 0.0 {
        (0.0, harvest / v2)
    } else if v2 == 0.0 {
        (1.0, rate / v1)
    } else {
        let alpha = (harvest / v2) / (rate / v1 + harvest / v2);
        (alpha, alpha * rate / v1)
    };
    let grid_best = (0..=SISO_GRID)
        .map(|k| siso_objective(k as f64 / SISO_GRID as f64, rate, harvest, v1, v2))
        .fold(f64::NEG_INFINITY, f64::max);
    if grid_best > lambda + 1e-6 * lambda.abs().max(1.0) {
        return Err(SwiptError::OracleInconsistent(format!(
            "grid reaches {grid_best} above the closed form {lambda}"
        )));
    }
    Ok(SisoOptimum { lambda, alpha, rate, energy })
}

/// Maximum-ratio transmission for a single user: `x = sqrt(p_max) h / |h|`
/// and the rate it achieves.
pub fn analytic_miso_single_user(
    h: &DVector<Complex64>,
    sigma2: f64,
    p_max: f64,
) -> Result<(f64, DVector<Complex64>)> {
    let norm = h.norm();
    if !(norm > 0.0) {
        return Err(SwiptError::Domain("zero channel".into()));
    }
    if !(sigma2 > 0.0 && p_max > 0.0) {
        return Err(SwiptError::Domain("noise and power must be positive".into()));
    }
    let x = h * Complex64::from(p_max.sqrt() / norm);
    Ok(((p_max * norm * norm / sigma2).ln_1p(), x))
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<Complex64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let n = v.norm();
        if n > 1e-12 {
            return v / Complex64::from(n);
        }
    }
}

/// Chebyshev value of one UE with rate `r` and weighted energy `e`.
fn ue_value(mode: &Mode, i: usize, r: f64, e: f64, v1: f64, v2: f64) -> f64 {
    let (a, b) = match mode {
        Mode::Ideal => (1.0, 1.0),
        Mode::Fixed(ts) => (ts.alpha(i), ts.beta(i)),
        // Per-UE balance `alpha R / v1 = (1 - alpha) eta E / v2`.
        Mode::Adaptive => {
            if v1 == 0.0 {
                (0.0, 1.0)
            } else if v2 == 0.0 {
                (1.0, 0.0)
            } else {
                let a = (e / v2) / (r / v1 + e / v2);
                (a, 1.0 - a)
            }
        }
    };
    let rate_part = if v1 > 0.0 { a * r / v1 } else { f64::INFINITY };
    let energy_part = if v2 > 0.0 { b * e / v2 } else { f64::INFINITY };
    rate_part.min(energy_part)
}

/// Best Chebyshev value over `samples` random rank-one precoder sets that
/// spend the full power budget: directions uniform on the complex unit
/// sphere, powers from a flat Dirichlet over (UE, AP) pairs. Any value found
/// is achievable, so it lower-bounds the optimum.
pub fn random_search_lambda<R: Rng + ?Sized>(
    model: &SystemModel,
    weights: &PreferenceWeights,
    mode: &Mode,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let ch = model.channels();
    let n_ue = ch.n_ue();
    let n_ap = ch.n_ap();
    if weights.len() != n_ue {
        return Err(SwiptError::DimensionMismatch(format!("{} weights for {n_ue} UEs", weights.len())));
    }
    if let Mode::Fixed(ts) = mode {
        if ts.len() != n_ue {
            return Err(SwiptError::DimensionMismatch(format!("{} switching ratios for {n_ue} UEs", ts.len())));
        }
    }
    let samples = samples.max(1);
    // Weights at the drop threshold count as zero.
    let v: Vec<(f64, f64)> = (0..n_ue)
        .map(|i| {
            let v1 = if weights.rate_active(i) { weights.v1(i) } else { 0.0 };
            let v2 = if weights.energy_active(i) { weights.v2(i) } else { 0.0 };
            (v1, v2)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let shares: Vec<f64> = (0..n_ue * n_ap).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = shares.iter().sum();
        let beams: Vec<Vec<DVector<Complex64>>> = (0..n_ue)
            .map(|l| {
                (0..n_ap)
                    .map(|j| {
                        let p = model.p_max() * shares[l * n_ap + j] / total;
                        unit_vector(ch.antennas(j), rng) * Complex64::from(p.sqrt())
                    })
                    .collect()
            })
            .collect();
        let precoders = PrecoderSet::from_beamformers(&beams)?;
        let mut value = f64::INFINITY;
        for (i, &(v1, v2)) in v.iter().enumerate() {
            let r = rate_i(ch, &precoders, i)?;
            let e = model.energy_coefficient(i) * energy_i(ch, &precoders, i)?;
            value = value.min(ue_value(mode, i, r, e, v1, v2));
        }
        best = best.max(value);
    }
    Ok(best)
}
