//! Network scenarios: access-point / user geometry, Rician fading, path loss
//! and the noise-referenced unit normalization applied before solving.
//!
//! Random draws come from ChaCha8 streams. Every (UE, AP) channel and every
//! UE placement has its own stream id derived from the scenario seed, so a
//! single draw is reproducible independently of the order in which the
//! others were generated:
//!
//! ```text
//! placement of UE i      -> stream (1 << 40) | i
//! channel of (UE i, AP j) -> stream (2 << 40) | (i << 20) | j
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwiptError};

const PLACEMENT_STREAM: u64 = 1 << 40;
const CHANNEL_STREAM: u64 = 2 << 40;

/// A per-UE quantity given either once for every UE or as an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUe {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerUe {
    pub fn resolve(&self, n_ue: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerUe::Uniform(v) => Ok(vec![*v; n_ue]),
            PerUe::List(v) if v.len() == n_ue => Ok(v.clone()),
            PerUe::List(v) => Err(SwiptError::InvalidConfig(format!(
                "{name}: expected {n_ue} entries, got {}",
                v.len()
            ))),
        }
    }
}

/// Scenario description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "defaults::n_ap")]
    pub n_ap: usize,
    #[serde(default = "defaults::antennas_per_ap")]
    pub antennas_per_ap: Vec<usize>,
    #[serde(default = "defaults::n_ue")]
    pub n_ue: usize,
    /// Spacing between neighbouring APs on the line, meters.
    #[serde(rename = "ap_distance_D", default = "defaults::ap_distance")]
    pub ap_distance: f64,
    #[serde(default = "defaults::d_min")]
    pub d_min: f64,
    #[serde(default = "defaults::d_max")]
    pub d_max: f64,
    #[serde(rename = "rician_K_db", default = "defaults::rician_k_db")]
    pub rician_k_db: f64,
    #[serde(default = "defaults::pathloss_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "defaults::noise_power_dbm")]
    pub noise_power_dbm: PerUe,
    #[serde(default = "defaults::p_max_watts")]
    pub p_max_watts: f64,
    #[serde(default = "defaults::eta")]
    pub eta: PerUe,
    #[serde(default)]
    pub seed: u64,
    /// Watts per unit of harvested energy inside the Chebyshev constraints.
    #[serde(default = "defaults::energy_unit_watts")]
    pub energy_unit_watts: f64,
    /// Fixed UE coordinates in meters; random annulus placement when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ue_positions: Option<Vec<[f64; 2]>>,
}

mod defaults {
    use super::PerUe;

    pub fn n_ap() -> usize {
        2
    }
    pub fn antennas_per_ap() -> Vec<usize> {
        vec![2, 2]
    }
    pub fn n_ue() -> usize {
        2
    }
    pub fn ap_distance() -> f64 {
        20.0
    }
    pub fn d_min() -> f64 {
        2.0
    }
    pub fn d_max() -> f64 {
        10.0
    }
    pub fn rician_k_db() -> f64 {
        3.5
    }
    pub fn pathloss_exponent() -> f64 {
        3.0
    }
    pub fn noise_power_dbm() -> PerUe {
        PerUe::Uniform(-90.0)
    }
    pub fn p_max_watts() -> f64 {
        1.0
    }
    pub fn eta() -> PerUe {
        PerUe::Uniform(1.0)
    }
    pub fn energy_unit_watts() -> f64 {
        1e-3
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_ap: defaults::n_ap(),
            antennas_per_ap: defaults::antennas_per_ap(),
            n_ue: defaults::n_ue(),
            ap_distance: defaults::ap_distance(),
            d_min: defaults::d_min(),
            d_max: defaults::d_max(),
            rician_k_db: defaults::rician_k_db(),
            pathloss_exponent: defaults::pathloss_exponent(),
            noise_power_dbm: defaults::noise_power_dbm(),
            p_max_watts: defaults::p_max_watts(),
            eta: defaults::eta(),
            seed: 0,
            energy_unit_watts: defaults::energy_unit_watts(),
            ue_positions: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| SwiptError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SwiptError::InvalidConfig(m));
        if self.n_ap == 0 {
            return bad("n_ap must be at least 1".into());
        }
        if self.n_ue == 0 {
            return bad("n_ue must be at least 1".into());
        }
        if self.antennas_per_ap.len() != self.n_ap {
            return bad(format!(
                "antennas_per_ap has {} entries for {} APs",
                self.antennas_per_ap.len(),
                self.n_ap
            ));
        }
        if self.antennas_per_ap.iter().any(|&n| n == 0) {
            return bad("every AP needs at least one antenna".into());
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return bad(format!("need 0 < d_min < d_max, got {} / {}", self.d_min, self.d_max));
        }
        if !(self.ap_distance >= 0.0) {
            return bad("ap_distance_D must be nonnegative".into());
        }
        if !(self.p_max_watts > 0.0) {
            return bad("p_max_watts must be positive".into());
        }
        if !(self.energy_unit_watts > 0.0) {
            return bad("energy_unit_watts must be positive".into());
        }
        if !self.pathloss_exponent.is_finite() || self.rician_k_db.is_nan() {
            return bad("pathloss_exponent / rician_K_db must be numbers".into());
        }
        let eta = self.eta.resolve(self.n_ue, "eta")?;
        if eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return bad("eta must lie in (0, 1]".into());
        }
        let noise = self.noise_power_dbm.resolve(self.n_ue, "noise_power_dbm")?;
        if noise.iter().any(|n| !n.is_finite()) {
            return bad("noise_power_dbm must be finite".into());
        }
        if let Some(pos) = &self.ue_positions {
            if pos.len() != self.n_ue {
                return bad(format!("ue_positions has {} entries for {} UEs", pos.len(), self.n_ue));
            }
        }
        Ok(())
    }

    pub fn eta_values(&self) -> Result<Vec<f64>> {
        self.eta.resolve(self.n_ue, "eta")
    }

    pub fn noise_watts(&self) -> Result<Vec<f64>> {
        Ok(self
            .noise_power_dbm
            .resolve(self.n_ue, "noise_power_dbm")?
            .into_iter()
            .map(dbm_to_watts)
            .collect())
    }

    /// AP index whose placement region UE `i` belongs to.
    pub fn serving_region(&self, i: usize) -> usize {
        let per_region = self.n_ue.div_ceil(self.n_ap);
        (i / per_region).min(self.n_ap - 1)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// AP and UE coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
}

impl Geometry {
    pub fn distance(&self, ue: usize, ap: usize) -> f64 {
        let [ux, uy] = self.ue_positions[ue];
        let [ax, ay] = self.ap_positions[ap];
        (ux - ax).hypot(uy - ay)
    }

    /// Azimuth of UE `ue` seen from AP `ap`, radians.
    pub fn azimuth(&self, ue: usize, ap: usize) -> f64 {
        let [ux, uy] = self.ue_positions[ue];
        let [ax, ay] = self.ap_positions[ap];
        (uy - ay).atan2(ux - ax)
    }

    pub fn nearest_ap(&self, ue: usize) -> usize {
        (0..self.ap_positions.len())
            .min_by(|&a, &b| self.distance(ue, a).total_cmp(&self.distance(ue, b)))
            .unwrap_or(0)
    }
}

/// Channel vectors `h[i][j]` from AP `j` to UE `i`, their Gram matrices, and
/// per-UE noise powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h: Vec<Vec<DVector<Complex64>>>,
    gram: Vec<Vec<DMatrix<Complex64>>>,
    noise_power: Vec<f64>,
    /// Watts represented by one internal energy unit, per UE. Equals 1 for a
    /// set in physical units and sigma_i^2 after [`normalize_units`].
    energy_scale: Vec<f64>,
    geometry: Option<Geometry>,
}

impl ChannelSet {
    pub fn new(h: Vec<Vec<DVector<Complex64>>>, noise_power: Vec<f64>) -> Result<Self> {
        let n_ue = h.len();
        if n_ue == 0 {
            return Err(SwiptError::DimensionMismatch("no UEs".into()));
        }
        if noise_power.len() != n_ue {
            return Err(SwiptError::DimensionMismatch(format!(
                "{} noise powers for {n_ue} UEs",
                noise_power.len()
            )));
        }
        let n_ap = h[0].len();
        if n_ap == 0 {
            return Err(SwiptError::DimensionMismatch("no APs".into()));
        }
        for (i, row) in h.iter().enumerate() {
            if row.len() != n_ap {
                return Err(SwiptError::DimensionMismatch(format!(
                    "UE {i} has {} AP channels, expected {n_ap}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                if v.len() != h[0][j].len() || v.is_empty() {
                    return Err(SwiptError::DimensionMismatch(format!(
                        "channel ({i},{j}) has length {}, expected {}",
                        v.len(),
                        h[0][j].len()
                    )));
                }
            }
        }
        let gram = h
            .iter()
            .map(|row| row.iter().map(|v| v * v.adjoint()).collect())
            .collect();
        Ok(ChannelSet {
            h,
            gram,
            noise_power,
            energy_scale: vec![1.0; n_ue],
            geometry: None,
        })
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    pub fn n_ue(&self) -> usize {
        self.h.len()
    }

    pub fn n_ap(&self) -> usize {
        self.h[0].len()
    }

    pub fn antennas(&self, ap: usize) -> usize {
        self.h[0][ap].len()
    }

    pub fn antenna_counts(&self) -> Vec<usize> {
        (0..self.n_ap()).map(|j| self.antennas(j)).collect()
    }

    pub fn h(&self, ue: usize, ap: usize) -> &DVector<Complex64> {
        &self.h[ue][ap]
    }

    /// `H[ue][ap] = h h^H`.
    pub fn gram(&self, ue: usize, ap: usize) -> &DMatrix<Complex64> {
        &self.gram[ue][ap]
    }

    pub fn noise_power(&self, ue: usize) -> f64 {
        self.noise_power[ue]
    }

    pub fn noise_powers(&self) -> &[f64] {
        &self.noise_power
    }

    pub fn energy_scale(&self, ue: usize) -> f64 {
        self.energy_scale[ue]
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    /// Squared norm of `h[ue][ap]`, i.e. the trace of its Gram matrix.
    pub fn gain(&self, ue: usize, ap: usize) -> f64 {
        self.h[ue][ap].norm_squared()
    }
}

/// Power gain `d^(-exponent)`.
pub fn path_loss_gain(d: f64, exponent: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(SwiptError::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(d.powf(-exponent))
}

/// Half-wavelength uniform linear array response for a departure azimuth
/// measured from the array axis.
pub fn ula_steering(dim: usize, azimuth: f64) -> DVector<Complex64> {
    let phase = PI * azimuth.cos();
    DVector::from_iterator(dim, (0..dim).map(|n| Complex64::from_polar(1.0, -phase * n as f64)))
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One Rician draw with unit average power per entry:
/// `sqrt(K/(K+1)) a + sqrt(1/(K+1)) w`, `w ~ CN(0, I)`.
pub fn rician_draw<R: Rng + ?Sized>(
    k_linear: f64,
    steering: &DVector<Complex64>,
    rng: &mut R,
) -> DVector<Complex64> {
    assert!(k_linear >= 0.0, "Rician K must be nonnegative");
    let (los, nlos) = if k_linear.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_linear / (k_linear + 1.0)).sqrt(), (1.0 / (k_linear + 1.0)).sqrt())
    };
    DVector::from_iterator(
        steering.len(),
        steering.iter().map(|a| {
            let w = complex_gaussian(rng);
            if nlos == 0.0 {
                a * los
            } else {
                a * los + w * nlos
            }
        }),
    )
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn place_ues(config: &ScenarioConfig, ap_positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if let Some(fixed) = &config.ue_positions {
        return fixed.clone();
    }
    (0..config.n_ue)
        .map(|i| {
            let mut rng = stream_rng(config.seed, PLACEMENT_STREAM | i as u64);
            let [cx, cy] = ap_positions[config.serving_region(i)];
            let u: f64 = rng.random();
            let phi = 2.0 * PI * rng.random::<f64>();
            let (lo, hi) = (config.d_min * config.d_min, config.d_max * config.d_max);
            let r = (lo + u * (hi - lo)).sqrt();
            [cx + r * phi.cos(), cy + r * phi.sin()]
        })
        .collect()
}

/// Draws a channel set in physical units (noise in watts).
pub fn build_scenario(config: &ScenarioConfig) -> Result<ChannelSet> {
    config.validate()?;
    let ap_positions: Vec<[f64; 2]> = (0..config.n_ap)
        .map(|j| [j as f64 * config.ap_distance, 0.0])
        .collect();
    let geometry = Geometry {
        ue_positions: place_ues(config, &ap_positions),
        ap_positions,
    };
    let k_linear = db_to_linear(config.rician_k_db);
    let mut h = Vec::with_capacity(config.n_ue);
    for i in 0..config.n_ue {
        let mut row = Vec::with_capacity(config.n_ap);
        for j in 0..config.n_ap {
            let d = geometry.distance(i, j);
            let amplitude = path_loss_gain(d, config.pathloss_exponent)?.sqrt();
            let steering = ula_steering(config.antennas_per_ap[j], geometry.azimuth(i, j));
            let mut rng = stream_rng(config.seed, CHANNEL_STREAM | ((i as u64) << 20) | j as u64);
            row.push(rician_draw(k_linear, &steering, &mut rng) * Complex64::from(amplitude));
        }
        h.push(row);
    }
    Ok(ChannelSet::new(h, config.noise_watts()?)?.with_geometry(geometry))
}

/// Rescales channels so every UE's noise power is one internal unit.
pub fn normalize_units(channels: &ChannelSet) -> Result<ChannelSet> {
    let mut out = channels.clone();
    for i in 0..channels.n_ue() {
        let sigma2 = channels.noise_power[i];
        if !(sigma2 > 0.0) {
            return Err(SwiptError::Domain(format!("UE {i} has noise power {sigma2}")));
        }
        let amp = Complex64::from(sigma2.sqrt().recip());
        for j in 0..channels.n_ap() {
            out.h[i][j] = &channels.h[i][j] * amp;
            out.gram[i][j] = &channels.gram[i][j] / Complex64::from(sigma2);
        }
        out.noise_power[i] = 1.0;
        out.energy_scale[i] = channels.energy_scale[i] * sigma2;
    }
    Ok(out)
}

/// Everything the solvers need: noise-normalized channels, the power budget,
/// harvesting efficiencies and the energy unit of the Chebyshev constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    channels: ChannelSet,
    p_max: f64,
    eta: Vec<f64>,
    energy_unit_watts: f64,
}

impl SystemModel {
    /// Normalizes `channels` (given in any consistent unit) internally.
    pub fn new(channels: &ChannelSet, p_max: f64, eta: Vec<f64>, energy_unit_watts: f64) -> Result<Self> {
        if !(p_max > 0.0 && p_max.is_finite()) {
            return Err(SwiptError::Domain(format!("p_max must be positive, got {p_max}")));
        }
        if eta.len() != channels.n_ue() {
            return Err(SwiptError::DimensionMismatch(format!(
                "{} efficiencies for {} UEs",
                eta.len(),
                channels.n_ue()
            )));
        }
        if eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(SwiptError::Domain("eta must lie in (0, 1]".into()));
        }
        if !(energy_unit_watts > 0.0) {
            return Err(SwiptError::Domain("energy unit must be positive".into()));
        }
        Ok(SystemModel {
            channels: normalize_units(channels)?,
            p_max,
            eta,
            energy_unit_watts,
        })
    }

    pub fn from_config(config: &ScenarioConfig) -> Result<Self> {
        let channels = build_scenario(config)?;
        Self::new(&channels, config.p_max_watts, config.eta_values()?, config.energy_unit_watts)
    }

    /// Noise-normalized channels.
    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    pub fn n_ue(&self) -> usize {
        self.channels.n_ue()
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn energy_unit_watts(&self) -> f64 {
        self.energy_unit_watts
    }

    /// Chebyshev energy utility per internal energy unit of UE `i`:
    /// `eta_i * (watts per internal unit) / energy unit`.
    pub fn energy_coefficient(&self, i: usize) -> f64 {
        self.eta[i] * self.channels.energy_scale(i) / self.energy_unit_watts
    }
}
