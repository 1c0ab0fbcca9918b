//! Post-solution diagnostics: rank-one checks, beamformer extraction,
//! power tightness and the nearest-AP share of harvested energy.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algorithms::chebyshev_value;
use crate::convexcore::SubproblemSolution;
use crate::error::{Result, SwiptError};
use crate::pareto::PreferenceWeights;
use crate::physics::{received_from, trace_product, HermitianPsd, PrecoderSet};
use crate::scenario::{ChannelSet, SystemModel};

/// Rank-one ratio required of converged precoders.
pub const RANK_ACCEPT: f64 = 0.999;
/// Rank-one ratio required before a beamformer is extracted.
pub const RANK_EXTRACT: f64 = 0.99;
/// Precoders with less power than this fraction of `p_max` are inactive.
pub const ACTIVE_POWER_FRACTION: f64 = 1e-6;
/// Tolerance of the power-tightness check, relative to `p_max`.
pub const POWER_TOL: f64 = 1e-5;
/// Tolerance of the Chebyshev-tightness check, relative to `lambda`.
pub const CHEBYSHEV_TOL: f64 = 1e-6;

const ZERO_TRACE: f64 = 1e-300;

/// `lambda_1(X) / tr(X)`.
pub fn rank_one_ratio(x: &HermitianPsd) -> Result<f64> {
    let trace = x.trace();
    if !(trace > ZERO_TRACE) {
        return Err(SwiptError::Undefined(format!("rank ratio of a zero-power precoder (trace {trace:e})")));
    }
    let eig = x.matrix().clone().symmetric_eigen();
    let top = eig.eigenvalues.max();
    Ok((top / trace).clamp(0.0, 1.0))
}

/// Principal component `sqrt(lambda_1) u_1`, with the first nonzero entry
/// made real and positive.
pub fn extract_beamformer(x: &HermitianPsd, threshold: f64) -> Result<DVector<Complex64>> {
    let ratio = rank_one_ratio(x)?;
    if ratio < threshold {
        return Err(SwiptError::Undefined(format!(
            "rank-one ratio {ratio} below extraction threshold {threshold}"
        )));
    }
    let eig = x.matrix().clone().symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let mut v: DVector<Complex64> = eig.eigenvectors.column(k).into_owned();
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|c| c.norm() > 1e-12 * scale).copied() {
        let phase = first.conj() / first.norm();
        v *= phase;
    }
    Ok(v * Complex64::from(eig.eigenvalues[k].max(0.0).sqrt()))
}

/// Smallest rank-one ratio over the precoders carrying at least
/// [`ACTIVE_POWER_FRACTION`] of `p_max`; `None` when none does.
pub fn min_active_rank_ratio(precoders: &PrecoderSet, p_max: f64) -> Option<f64> {
    precoders
        .iter()
        .filter(|(_, _, x)| x.trace() > ACTIVE_POWER_FRACTION * p_max)
        .filter_map(|(_, _, x)| rank_one_ratio(x).ok())
        .reduce(f64::min)
}

/// `|sum tr X - p_max|`, in the units of `p_max`.
pub fn power_residual(precoders: &PrecoderSet, p_max: f64) -> f64 {
    (precoders.total_power() - p_max).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub power_residual: f64,
    pub power_tight: bool,
    /// `|min scaled utility - lambda| / lambda`.
    pub chebyshev_residual: f64,
    pub chebyshev_tight: bool,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.power_tight && self.chebyshev_tight
    }
}

/// Checks that the power budget is exhausted and that the smallest scaled
/// utility equals the reported `lambda`.
pub fn kkt_consequence_check(
    model: &SystemModel,
    weights: &PreferenceWeights,
    solution: &SubproblemSolution,
) -> KktReport {
    let p_max = model.p_max();
    let power = power_residual(&solution.precoders, p_max);
    let fractions: Vec<(f64, f64)> = solution.alpha.iter().copied().zip(solution.beta.iter().copied()).collect();
    let exact = chebyshev_value(model, weights, &fractions, &solution.rate, &solution.energy);
    let cheb = (exact - solution.lambda).abs() / solution.lambda.abs().max(f64::MIN_POSITIVE);
    KktReport {
        power_residual: power,
        power_tight: power <= POWER_TOL * p_max,
        chebyshev_residual: cheb,
        chebyshev_tight: cheb <= CHEBYSHEV_TOL,
    }
}

/// Energy UE `i` receives from its geometrically nearest AP and in total,
/// summed over all UEs' precoders. A single-AP system needs no geometry.
pub fn nearest_ap_energy_split(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<(f64, f64)> {
    if i >= channels.n_ue() {
        return Err(SwiptError::DimensionMismatch(format!("UE index {i} out of range")));
    }
    let nearest = if channels.n_ap() == 1 {
        0
    } else {
        channels
            .geometry()
            .ok_or_else(|| SwiptError::Undefined("nearest AP needs the scenario geometry".into()))?
            .nearest_ap(i)
    };
    let total: f64 = (0..channels.n_ue()).map(|l| received_from(channels, precoders, i, l)).sum();
    let near: f64 = (0..channels.n_ue())
        .map(|l| trace_product(channels.gram(i, nearest), precoders.get(l, nearest).matrix()))
        .sum();
    Ok((near.max(0.0), total))
}

/// Share of UE `i`'s received energy that comes from its nearest AP.
pub fn nearest_ap_energy_ratio(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<f64> {
    let (near, total) = nearest_ap_energy_split(channels, precoders, i)?;
    if !(total > ZERO_TRACE) {
        return Err(SwiptError::Undefined(format!("UE {i} receives no energy")));
    }
    Ok((near / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn outer_product_has_unit_ratio() {
        let x = DVector::from_vec(vec![c(0.3, -0.2), c(1.1, 0.4)]);
        assert!((rank_one_ratio(&HermitianPsd::outer(&x)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_has_half_ratio() {
        let x = HermitianPsd::scaled_identity(2, 1.0);
        assert!((rank_one_ratio(&x).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_precoder_is_undefined() {
        assert!(matches!(rank_one_ratio(&HermitianPsd::zeros(2)), Err(SwiptError::Undefined(_))));
        assert!(extract_beamformer(&HermitianPsd::zeros(2), RANK_EXTRACT).is_err());
    }

    #[test]
    fn extraction_recovers_beamformer() {
        let s = 2f64.sqrt();
        let x = DVector::from_vec(vec![c(1.0 / s, 0.0), c(0.0, 1.0 / s)]) * c(2.0, 0.0);
        let got = extract_beamformer(&HermitianPsd::outer(&x), RANK_EXTRACT).unwrap();
        assert!((&got - &x).norm() < 1e-10, "{got} vs {x}");
    }

    #[test]
    fn extraction_refuses_full_rank() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.0)]));
        let err = extract_beamformer(&HermitianPsd::new(m).unwrap(), RANK_EXTRACT).unwrap_err();
        assert!(err.to_string().contains("0.666"));
    }
}
