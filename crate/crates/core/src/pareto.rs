//! Weight schedules, Chebyshev sweeps and Pareto frontiers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, AlgorithmRun, IterationConfig, Mode, RunStatus};
use crate::analysis::{min_active_rank_ratio, power_residual, POWER_TOL, RANK_ACCEPT};
use crate::error::{Result, SwiptError};
use crate::scenario::SystemModel;

/// JSON has no infinities or NaN: non-finite values travel as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
mod nonfinite {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    fn encode(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Number(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn decode<E: Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|&x| encode(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(decode).collect()
        }
    }
}

/// Weights at or below this are treated as zero: the matching constraint is dropped.
pub const DROP_THRESHOLD: f64 = 1e-12;

/// Chebyshev preference weights per UE: `v1` on rate, `v2` on energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    v1: Vec<f64>,
    v2: Vec<f64>,
}

impl PreferenceWeights {
    pub fn new(v1: Vec<f64>, v2: Vec<f64>) -> Result<Self> {
        if v1.len() != v2.len() || v1.is_empty() {
            return Err(SwiptError::DimensionMismatch(format!(
                "{} rate weights and {} energy weights",
                v1.len(),
                v2.len()
            )));
        }
        for (i, (&a, &b)) in v1.iter().zip(&v2).enumerate() {
            if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(SwiptError::Domain(format!("UE {i}: weights ({a}, {b}) must be finite and nonnegative")));
            }
            if a <= DROP_THRESHOLD && b <= DROP_THRESHOLD {
                return Err(SwiptError::DegenerateWeights(format!("UE {i} has both weights zero")));
            }
        }
        Ok(PreferenceWeights { v1, v2 })
    }

    /// The same pair `(v1, v2)` for every UE.
    pub fn uniform(n_ue: usize, v1: f64, v2: f64) -> Result<Self> {
        Self::new(vec![v1; n_ue], vec![v2; n_ue])
    }

    pub fn len(&self) -> usize {
        self.v1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v1.is_empty()
    }

    pub fn v1(&self, i: usize) -> f64 {
        self.v1[i]
    }

    pub fn v2(&self, i: usize) -> f64 {
        self.v2[i]
    }

    pub fn rate_active(&self, i: usize) -> bool {
        self.v1[i] > DROP_THRESHOLD
    }

    pub fn energy_active(&self, i: usize) -> bool {
        self.v2[i] > DROP_THRESHOLD
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.v1.iter().map(|v| v * c).collect(), self.v2.iter().map(|v| v * c).collect())
    }
}

/// One weight vector of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub label: String,
    #[serde(with = "nonfinite")]
    pub theta1: f64,
    pub weights: PreferenceWeights,
}

/// Ordered weight vectors together with the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub entries: Vec<ScheduleEntry>,
    #[serde(with = "nonfinite::vec")]
    pub theta1_values: Vec<f64>,
    /// Per-UE multipliers `m_i` giving `v_i = (theta1 m_i, m_i)`.
    pub theta2: Option<Vec<f64>>,
}

impl WeightSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weights `v_i = (theta1 m_i, m_i)` for every `theta1`, with `m_i = 1`
/// unless per-UE multipliers are given. `theta1 = 0` is the energy-only
/// extreme and `theta1 = inf` the rate-only one (`v_i = (m_i, 0)`). Entries
/// are ordered by `theta1` and labelled in that order.
pub fn make_theta_schedule(theta1_values: &[f64], theta2: Option<&[f64]>, n_ue: usize) -> Result<WeightSchedule> {
    if n_ue == 0 {
        return Err(SwiptError::DimensionMismatch("schedule for zero UEs".into()));
    }
    if let Some(t) = theta1_values.iter().find(|t| !(**t >= 0.0)) {
        return Err(SwiptError::Domain(format!("theta1 must be nonnegative, got {t}")));
    }
    let multipliers = match theta2 {
        Some(m) if m.len() != n_ue => {
            return Err(SwiptError::DimensionMismatch(format!("{} theta2 multipliers for {n_ue} UEs", m.len())));
        }
        Some(m) => {
            if let Some(t) = m.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                return Err(SwiptError::Domain(format!("theta2 multipliers must be positive, got {t}")));
            }
            m.to_vec()
        }
        None => vec![1.0; n_ue],
    };
    let mut thetas = theta1_values.to_vec();
    thetas.sort_by(f64::total_cmp);
    let width = thetas.len().saturating_sub(1).to_string().len().max(3);
    let entries = thetas
        .iter()
        .enumerate()
        .map(|(k, &theta1)| {
            let (v1, v2): (Vec<f64>, Vec<f64>) = if theta1.is_infinite() {
                multipliers.iter().map(|&m| (m, 0.0)).unzip()
            } else {
                multipliers.iter().map(|&m| (theta1 * m, m)).unzip()
            };
            Ok(ScheduleEntry {
                label: format!("w{k:0width$}"),
                theta1,
                weights: PreferenceWeights::new(v1, v2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightSchedule { entries, theta1_values: thetas, theta2: theta2.map(<[f64]>::to_vec) })
}

/// `count` values spaced evenly in log scale from `min` to `max`.
pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(SwiptError::Domain(format!("log grid needs 0 < min <= max, got {min}..{max}")));
    }
    Ok(match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (a, b) = (min.ln(), max.ln());
            (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    /// Converged and every diagnostic passed.
    Ok,
    /// Converged, but a rank or power diagnostic failed.
    Diagnostics,
    MaxIters,
    NonMonotone,
    SubproblemFailure,
    Error,
}

impl PointStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Diagnostics => "diagnostics",
            PointStatus::MaxIters => "max_iters",
            PointStatus::NonMonotone => "non_monotone",
            PointStatus::SubproblemFailure => "subproblem_failure",
            PointStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub label: String,
    #[serde(with = "nonfinite")]
    pub theta1: f64,
    pub weights: PreferenceWeights,
    /// Time-switched rate per UE, bits/s/Hz.
    #[serde(with = "nonfinite::vec")]
    pub rate_bits: Vec<f64>,
    /// Time-switched harvested energy per UE, watts.
    #[serde(with = "nonfinite::vec")]
    pub energy_watts: Vec<f64>,
    #[serde(with = "nonfinite")]
    pub lambda: f64,
    #[serde(with = "nonfinite::vec")]
    pub alpha: Vec<f64>,
    /// Smallest rank-one ratio over active precoders.
    pub rank_min: Option<f64>,
    #[serde(with = "nonfinite")]
    pub power_residual: f64,
    pub iterations: usize,
    pub status: PointStatus,
    pub message: Option<String>,
}

impl FrontierPoint {
    fn failed(entry: &ScheduleEntry, n_ue: usize, message: String) -> Self {
        FrontierPoint {
            label: entry.label.clone(),
            theta1: entry.theta1,
            weights: entry.weights.clone(),
            rate_bits: vec![f64::NAN; n_ue],
            energy_watts: vec![f64::NAN; n_ue],
            lambda: f64::NAN,
            alpha: vec![f64::NAN; n_ue],
            rank_min: None,
            power_residual: f64::NAN,
            iterations: 0,
            status: PointStatus::Error,
            message: Some(message),
        }
    }

    /// Whether the point has utilities (it may still carry a failure tag).
    pub fn has_utilities(&self) -> bool {
        self.status != PointStatus::Error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub mode: String,
    pub points: Vec<FrontierPoint>,
}

impl Frontier {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Ok)
    }
}

fn frontier_point(model: &SystemModel, entry: &ScheduleEntry, run: &AlgorithmRun) -> FrontierPoint {
    let p_max = model.p_max();
    let rank_min = min_active_rank_ratio(&run.solution.precoders, p_max);
    let power = power_residual(&run.solution.precoders, p_max);
    let status = match run.status {
        RunStatus::Converged => {
            let rank_ok = rank_min.is_none_or(|r| r >= RANK_ACCEPT);
            if rank_ok && power <= POWER_TOL * p_max {
                PointStatus::Ok
            } else {
                PointStatus::Diagnostics
            }
        }
        RunStatus::MaxIters => PointStatus::MaxIters,
        RunStatus::NonMonotone => PointStatus::NonMonotone,
        RunStatus::SubproblemFailure => PointStatus::SubproblemFailure,
    };
    FrontierPoint {
        label: entry.label.clone(),
        theta1: entry.theta1,
        weights: entry.weights.clone(),
        rate_bits: run.utilities.rate_ts_bits(),
        energy_watts: run.utilities.energy_ts.clone(),
        lambda: run.lambda,
        alpha: run.solution.alpha.clone(),
        rank_min,
        power_residual: power,
        iterations: run.trace.len(),
        status,
        message: run.solution.message.clone(),
    }
}

/// Runs the selected algorithm for every weight vector, in parallel. A
/// failing point is recorded with its error and the sweep continues.
pub fn sweep(model: &SystemModel, schedule: &WeightSchedule, mode: &Mode, config: &IterationConfig) -> Frontier {
    let points = schedule
        .entries
        .par_iter()
        .map(|entry| match run(model, &entry.weights, mode, config) {
            Ok(r) => frontier_point(model, entry, &r),
            Err(e) => FrontierPoint::failed(entry, model.n_ue(), e.to_string()),
        })
        .collect();
    Frontier { mode: mode.tag(), points }
}

/// A frontier point of one UE that is beaten in both utilities by another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub ue: usize,
    pub dominated: String,
    pub dominating: String,
    /// Improvements in utilities scaled by the UE's largest rate / energy
    /// on the frontier.
    pub rate_gain: f64,
    pub energy_gain: f64,
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        self.rate_gain.min(self.energy_gain)
    }
}

/// Flags, per UE, every pair of points where one strictly improves both
/// rate and energy over the other. Points without utilities are skipped.
pub fn dominance_audit(frontier: &Frontier) -> Vec<Violation> {
    let pts: Vec<&FrontierPoint> = frontier.points.iter().filter(|p| p.has_utilities()).collect();
    let n_ue = pts.first().map_or(0, |p| p.rate_bits.len());
    let mut out = Vec::new();
    for ue in 0..n_ue {
        let mut ordered: Vec<(f64, f64, &str)> =
            pts.iter().map(|p| (p.rate_bits[ue], p.energy_watts[ue], p.label.as_str())).collect();
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
        let r_scale = ordered.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let e_scale = ordered.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for (k, lo) in ordered.iter().enumerate() {
            for hi in &ordered[k + 1..] {
                if hi.0 > lo.0 && hi.1 > lo.1 {
                    out.push(Violation {
                        ue,
                        dominated: lo.2.to_string(),
                        dominating: hi.2.to_string(),
                        rate_gain: (hi.0 - lo.0) / r_scale,
                        energy_gain: (hi.1 - lo.1) / e_scale,
                    });
                }
            }
        }
    }
    out
}

/// Column order of the frontier CSV.
pub const CSV_HEADER: [&str; 11] = [
    "weight_label",
    "ue",
    "theta1",
    "rate_bits",
    "energy_uW",
    "lambda",
    "alpha",
    "rank_min",
    "power_residual",
    "iters",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Frontier as CSV rows, one per (weight vector, UE), with `#` comment lines
/// first for the metadata.
pub fn write_csv<W: std::io::Write>(frontier: &Frontier, metadata: &[(&str, String)], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| SwiptError::Numerical(format!("write failed: {e}"));
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| SwiptError::Numerical(format!("write failed: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for p in &frontier.points {
        for ue in 0..p.rate_bits.len() {
            w.write_record([
                p.label.clone(),
                ue.to_string(),
                p.theta1.to_string(),
                p.rate_bits[ue].to_string(),
                (p.energy_watts[ue] * 1e6).to_string(),
                p.lambda.to_string(),
                p.alpha[ue].to_string(),
                opt(p.rank_min),
                p.power_residual.to_string(),
                p.iterations.to_string(),
                p.status.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io)
}

/// Pointwise mean of frontiers swept over the same schedule: utilities,
/// `lambda` and `alpha` averaged over the points that have utilities; worst
/// rank ratio and power residual; the worst status.
pub fn mean_frontier(frontiers: &[Frontier]) -> Result<Frontier> {
    let first = frontiers.first().ok_or_else(|| SwiptError::Domain("no frontiers to average".into()))?;
    if frontiers.iter().any(|f| f.points.len() != first.points.len() || f.mode != first.mode) {
        return Err(SwiptError::DimensionMismatch("frontiers come from different sweeps".into()));
    }
    let mut points = Vec::with_capacity(first.points.len());
    for (k, base) in first.points.iter().enumerate() {
        let group: Vec<&FrontierPoint> = frontiers.iter().map(|f| &f.points[k]).collect();
        let usable: Vec<&&FrontierPoint> = group.iter().filter(|p| p.has_utilities()).collect();
        let n = usable.len() as f64;
        let n_ue = base.rate_bits.len();
        let mean = |get: &dyn Fn(&FrontierPoint) -> f64| {
            if usable.is_empty() {
                f64::NAN
            } else {
                usable.iter().map(|p| get(p)).sum::<f64>() / n
            }
        };
        let status = group.iter().map(|p| p.status).max_by_key(|s| *s as u8).unwrap_or(PointStatus::Error);
        points.push(FrontierPoint {
            label: base.label.clone(),
            theta1: base.theta1,
            weights: base.weights.clone(),
            rate_bits: (0..n_ue).map(|ue| mean(&|p| p.rate_bits[ue])).collect(),
            energy_watts: (0..n_ue).map(|ue| mean(&|p| p.energy_watts[ue])).collect(),
            lambda: mean(&|p| p.lambda),
            alpha: (0..n_ue).map(|ue| mean(&|p| p.alpha[ue])).collect(),
            rank_min: group.iter().filter_map(|p| p.rank_min).reduce(f64::min),
            power_residual: usable.iter().map(|p| p.power_residual).fold(0.0, f64::max),
            iterations: group.iter().map(|p| p.iterations).max().unwrap_or(0),
            status,
            message: None,
        });
    }
    Ok(Frontier { mode: first.mode.clone(), points })
}
