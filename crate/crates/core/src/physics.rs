//! Rate, received energy, interference and time-switched utilities for a
//! given precoder set.
//!
//! Rates are natural-log (nats/s/Hz) internally; [`nats_to_bits`] converts at
//! the reporting boundary.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwiptError};
use crate::scenario::ChannelSet;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-9;
const CLAMP_TOL: f64 = 1e-9;

/// A Hermitian positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(DMatrix<Complex64>);

impl HermitianPsd {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(SwiptError::DimensionMismatch(format!(
                "{}x{} is not a nonempty square matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.norm().max(1.0);
        if (&m - m.adjoint()).norm() > HERMITIAN_TOL * scale {
            return Err(SwiptError::Domain("matrix is not Hermitian".into()));
        }
        let sym = (&m + m.adjoint()) * Complex64::from(0.5);
        let trace = sym.trace().re;
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(SwiptError::Domain(format!(
                "matrix is not PSD (min eigenvalue {min_eig:e}, trace {trace:e})"
            )));
        }
        Ok(HermitianPsd(sym))
    }

    /// Builds a matrix known to be Hermitian PSD without checking.
    pub(crate) fn new_unchecked(m: DMatrix<Complex64>) -> Self {
        HermitianPsd(m)
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianPsd(DMatrix::zeros(dim, dim))
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        HermitianPsd(DMatrix::identity(dim, dim) * Complex64::from(value))
    }

    /// `x x^H`.
    pub fn outer(x: &DVector<Complex64>) -> Self {
        HermitianPsd(x * x.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, factor: f64) -> Self {
        HermitianPsd(&self.0 * Complex64::from(factor))
    }
}

/// `Re tr(A B)` for Hermitian `A`, computed as the real part of the
/// entrywise sum of `conj(A) .* B`.
pub fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Precoders `X[l][j]` for every (UE l, AP j).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    blocks: Vec<Vec<HermitianPsd>>,
}

impl PrecoderSet {
    pub fn new(blocks: Vec<Vec<HermitianPsd>>) -> Result<Self> {
        if blocks.is_empty() || blocks[0].is_empty() {
            return Err(SwiptError::DimensionMismatch("empty precoder set".into()));
        }
        let n_ap = blocks[0].len();
        for (l, row) in blocks.iter().enumerate() {
            if row.len() != n_ap {
                return Err(SwiptError::DimensionMismatch(format!("UE {l} has {} blocks", row.len())));
            }
            for (j, x) in row.iter().enumerate() {
                if x.dim() != blocks[0][j].dim() {
                    return Err(SwiptError::DimensionMismatch(format!("block ({l},{j}) size")));
                }
            }
        }
        Ok(PrecoderSet { blocks })
    }

    pub fn zeros(n_ue: usize, antennas: &[usize]) -> Self {
        PrecoderSet {
            blocks: (0..n_ue)
                .map(|_| antennas.iter().map(|&n| HermitianPsd::zeros(n)).collect())
                .collect(),
        }
    }

    /// Rank-one precoders from beamforming vectors `x[l][j]`.
    pub fn from_beamformers(x: &[Vec<DVector<Complex64>>]) -> Result<Self> {
        Self::new(
            x.iter()
                .map(|row| row.iter().map(HermitianPsd::outer).collect())
                .collect(),
        )
    }

    pub fn n_ue(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_ap(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn get(&self, ue: usize, ap: usize) -> &HermitianPsd {
        &self.blocks[ue][ap]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &HermitianPsd)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(l, row)| row.iter().enumerate().map(move |(j, x)| (l, j, x)))
    }

    pub fn total_power(&self) -> f64 {
        self.iter().map(|(_, _, x)| x.trace()).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        PrecoderSet {
            blocks: self
                .blocks
                .iter()
                .map(|row| row.iter().map(|x| x.scale(factor)).collect())
                .collect(),
        }
    }

    fn check_against(&self, channels: &ChannelSet) -> Result<()> {
        if self.n_ue() != channels.n_ue() || self.n_ap() != channels.n_ap() {
            return Err(SwiptError::DimensionMismatch(format!(
                "precoders {}x{} vs channels {}x{}",
                self.n_ue(),
                self.n_ap(),
                channels.n_ue(),
                channels.n_ap()
            )));
        }
        for j in 0..self.n_ap() {
            if self.blocks[0][j].dim() != channels.antennas(j) {
                return Err(SwiptError::DimensionMismatch(format!(
                    "AP {j}: precoder dim {} vs {} antennas",
                    self.blocks[0][j].dim(),
                    channels.antennas(j)
                )));
            }
        }
        Ok(())
    }
}

/// Time-switching ratios: `alpha` for decoding, `beta = 1 - alpha` for harvesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsAllocation {
    alpha: Vec<f64>,
}

impl TsAllocation {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(SwiptError::Domain(format!("switching ratio {a} outside [0, 1]")));
        }
        Ok(TsAllocation { alpha })
    }

    pub fn uniform(n_ue: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; n_ue])
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> f64 {
        1.0 - self.alpha[i]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }
}

/// Per-UE utilities. `rate_*` in nats/s/Hz, `energy_ts` in watts, the `*_raw`
/// energy and interference values in internal (noise-referenced) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityPoint {
    pub rate_ts: Vec<f64>,
    pub energy_ts: Vec<f64>,
    pub rate_raw: Vec<f64>,
    pub energy_raw: Vec<f64>,
    pub interference_raw: Vec<f64>,
}

impl UtilityPoint {
    pub fn rate_ts_bits(&self) -> Vec<f64> {
        self.rate_ts.iter().copied().map(nats_to_bits).collect()
    }
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

fn clamp_power(value: f64, scale: f64) -> f64 {
    if value < 0.0 && value >= -CLAMP_TOL * scale.max(1.0) {
        0.0
    } else {
        value
    }
}

/// Largest received power UE `i` could see from these precoders; rounding
/// in a received power is relative to this.
fn power_scale(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> f64 {
    let gain: f64 = (0..channels.n_ap()).map(|j| channels.gram(i, j).trace().re).sum();
    gain * precoders.total_power()
}

fn check_ue(channels: &ChannelSet, i: usize) -> Result<()> {
    if i >= channels.n_ue() {
        return Err(SwiptError::DimensionMismatch(format!("UE index {i} out of range")));
    }
    Ok(())
}

/// `sum_j tr(H_ij X_lj)`: power UE `i` receives from UE `l`'s precoders.
pub fn received_from(channels: &ChannelSet, precoders: &PrecoderSet, i: usize, l: usize) -> f64 {
    (0..channels.n_ap())
        .map(|j| trace_product(channels.gram(i, j), precoders.get(l, j).matrix()))
        .sum()
}

/// Desired-signal power `S_i = sum_j tr(H_ij X_ij)`.
pub fn signal_i(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<f64> {
    precoders.check_against(channels)?;
    check_ue(channels, i)?;
    Ok(clamp_power(received_from(channels, precoders, i, i), power_scale(channels, precoders, i)))
}

/// Interference `I_i = sum_j sum_{l != i} tr(H_ij X_lj)`.
pub fn interference_i(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<f64> {
    precoders.check_against(channels)?;
    check_ue(channels, i)?;
    let v = (0..channels.n_ue())
        .filter(|&l| l != i)
        .map(|l| received_from(channels, precoders, i, l))
        .sum();
    Ok(clamp_power(v, power_scale(channels, precoders, i)))
}

/// Received energy `E_i = sum_j sum_l tr(H_ij X_lj)` (antenna noise neglected).
pub fn energy_i(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<f64> {
    precoders.check_against(channels)?;
    check_ue(channels, i)?;
    let v = (0..channels.n_ue())
        .map(|l| received_from(channels, precoders, i, l))
        .sum();
    Ok(clamp_power(v, power_scale(channels, precoders, i)))
}

/// Achievable rate `ln(1 + S_i / (sigma_i^2 + I_i))` in nats/s/Hz.
pub fn rate_i(channels: &ChannelSet, precoders: &PrecoderSet, i: usize) -> Result<f64> {
    let s = signal_i(channels, precoders, i)?;
    let interference = interference_i(channels, precoders, i)?;
    Ok((s / (channels.noise_power(i) + interference)).ln_1p())
}

/// Time-switched utilities; energy is converted back to watts.
pub fn ts_utilities(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    ts: &TsAllocation,
    eta: &[f64],
) -> Result<UtilityPoint> {
    let fractions: Vec<(f64, f64)> = (0..ts.len()).map(|i| (ts.alpha(i), ts.beta(i))).collect();
    utilities_with_fractions(channels, precoders, &fractions, eta)
}

/// Utilities for arbitrary decode / harvest time fractions, which covers the
/// ideal receiver (`alpha = beta = 1`).
pub fn utilities_with_fractions(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    fractions: &[(f64, f64)],
    eta: &[f64],
) -> Result<UtilityPoint> {
    let n = channels.n_ue();
    if fractions.len() != n || eta.len() != n {
        return Err(SwiptError::DimensionMismatch(format!(
            "{} fractions / {} efficiencies for {n} UEs",
            fractions.len(),
            eta.len()
        )));
    }
    let mut out = UtilityPoint {
        rate_ts: Vec::with_capacity(n),
        energy_ts: Vec::with_capacity(n),
        rate_raw: Vec::with_capacity(n),
        energy_raw: Vec::with_capacity(n),
        interference_raw: Vec::with_capacity(n),
    };
    for i in 0..n {
        let r = rate_i(channels, precoders, i)?;
        let e = energy_i(channels, precoders, i)?;
        let interference = interference_i(channels, precoders, i)?;
        let (a, b) = fractions[i];
        out.rate_ts.push(a * r);
        out.energy_ts.push(b * eta[i] * e * channels.energy_scale(i));
        out.rate_raw.push(r);
        out.energy_raw.push(e);
        out.interference_raw.push(interference);
    }
    Ok(out)
}
