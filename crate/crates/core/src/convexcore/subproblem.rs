//! The convexified Chebyshev subproblems.
//!
//! Both maximize `lambda_hat = ln(lambda)` over Hermitian precoder blocks.
//! The adaptive problem also carries the switching ratios `alpha` and rate
//! epigraph variables `R`; its rate constraint
//!
//! ```text
//! ln(sigma^2 + E_i(X)) - ln(sigma^2 + I_k) - (I_i(X) - I_k) / (sigma^2 + I_k) >= R_i
//! ```
//!
//! replaces the concave `-ln(sigma^2 + I_i)` term by its tangent, an upper
//! bound, so every solution is feasible for the original problem. The fixed
//! split problem linearizes both logarithms of the rate and keeps the result
//! as an equality, substituted directly into the rate constraint.
//!
//! Weighted constraints are written in log form, `ln(alpha R / v1) >= lambda_hat`,
//! so the duality-gap target is a relative accuracy on `lambda`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::barrier::{
    newton_barrier_minimize, phase_one, AffineForm, InteriorPoint, BarrierOutcome, BarrierProblem, BarrierSettings,
    ConcaveConstraint, PsdBlock, SolveStatus,
};
use super::hermitian::{coord_count, from_coords, to_coords, trace_functional};
use crate::error::{Result, SwiptError};
use crate::pareto::PreferenceWeights;
use crate::physics::{energy_i, interference_i, rate_i, HermitianPsd, PrecoderSet, TsAllocation};
use crate::scenario::SystemModel;

/// Smallest `lambda` the solvers consider; keeps `lambda_hat` bounded below.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Where the barrier method starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// Uniform power split with `alpha = 0.5`.
    Cold,
    /// A given precoder set (and switching ratios for the adaptive problem).
    /// Auxiliary variables are derived from it.
    Point { precoders: PrecoderSet, alpha: Option<Vec<f64>> },
    /// A previous interior point together with its barrier parameter.
    Resume { point: InteriorPoint, t: f64 },
}

/// Decode / harvest time fractions of the fixed-split problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSplit {
    Ts(TsAllocation),
    /// Ideal receiver: `alpha = beta = 1`.
    Ideal,
}

impl FixedSplit {
    pub fn fractions(&self, n_ue: usize) -> Vec<(f64, f64)> {
        match self {
            FixedSplit::Ts(ts) => (0..n_ue).map(|i| (ts.alpha(i), ts.beta(i))).collect(),
            FixedSplit::Ideal => vec![(1.0, 1.0); n_ue],
        }
    }
}

/// Adaptive switching subproblem linearized at interference powers `I_k`.
#[derive(Debug, Clone)]
pub struct SubproblemPk<'a> {
    pub model: &'a SystemModel,
    pub weights: &'a PreferenceWeights,
    pub interference_point: Vec<f64>,
    pub barrier: BarrierSettings,
}

/// Fixed-split subproblem linearized at `(E_k, I_k)`.
#[derive(Debug, Clone)]
pub struct SubproblemQk<'a> {
    pub model: &'a SystemModel,
    pub weights: &'a PreferenceWeights,
    pub split: FixedSplit,
    pub energy_point: Vec<f64>,
    pub interference_point: Vec<f64>,
    pub barrier: BarrierSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub precoders: PrecoderSet,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Rate variable of the subproblem (epigraph `R_i` or the linearized
    /// rate), nats; zero where the rate constraint is dropped.
    pub rate_bound: Vec<f64>,
    /// Exact rates `ln(1 + SINR)`, nats.
    pub rate: Vec<f64>,
    /// Received energy, internal units.
    pub energy: Vec<f64>,
    /// Interference, internal units.
    pub interference: Vec<f64>,
    pub lambda_hat: f64,
    pub lambda: f64,
    pub duality_gap: f64,
    pub newton_iterations: usize,
    pub centering_steps: usize,
    pub status: SolveStatus,
    pub message: Option<String>,
    /// Final interior point and barrier parameter, for [`Start::Resume`].
    pub interior: InteriorPoint,
    pub t: f64,
}

/// The uniform starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub precoders: PrecoderSet,
    pub ts: TsAllocation,
    pub rate: Vec<f64>,
    pub energy: Vec<f64>,
    pub interference: Vec<f64>,
}

/// `X[l][j] = 0.99 p_max / (N_UE sum_j N_j) I`, `alpha = 0.5`.
pub fn feasible_init(model: &SystemModel) -> Result<InitialPoint> {
    let ch = model.channels();
    for i in 0..ch.n_ue() {
        if (0..ch.n_ap()).all(|j| ch.gain(i, j) == 0.0) {
            return Err(SwiptError::Infeasible(format!("every channel to UE {i} is zero")));
        }
    }
    let antennas = ch.antenna_counts();
    let total: usize = antennas.iter().sum();
    let level = 0.99 * model.p_max() / (ch.n_ue() * total) as f64;
    let blocks = (0..ch.n_ue())
        .map(|_| antennas.iter().map(|&n| HermitianPsd::scaled_identity(n, level)).collect())
        .collect();
    let precoders = PrecoderSet::new(blocks)?;
    let n = ch.n_ue();
    let mut rate = Vec::with_capacity(n);
    let mut energy = Vec::with_capacity(n);
    let mut interference = Vec::with_capacity(n);
    for i in 0..n {
        rate.push(rate_i(ch, &precoders, i)?);
        energy.push(energy_i(ch, &precoders, i)?);
        interference.push(interference_i(ch, &precoders, i)?);
    }
    Ok(InitialPoint { precoders, ts: TsAllocation::uniform(n, 0.5)?, rate, energy, interference })
}

/// Variable layout: precoder blocks (UE-major), then `alpha`, then `R`, then `lambda_hat`.
#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<Vec<PsdBlock>>,
    alpha: Option<usize>,
    rate: Vec<Option<usize>>,
    lambda: usize,
    n: usize,
    /// `trace_functional(H_ij)` for every (UE i, AP j).
    gram_coeffs: Vec<Vec<Vec<f64>>>,
}

impl Layout {
    fn new(model: &SystemModel, with_alpha: bool, rate_vars: &[bool]) -> Self {
        let ch = model.channels();
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(ch.n_ue());
        for _ in 0..ch.n_ue() {
            let mut row = Vec::with_capacity(ch.n_ap());
            for j in 0..ch.n_ap() {
                let dim = ch.antennas(j);
                row.push(PsdBlock { offset, dim });
                offset += coord_count(dim);
            }
            blocks.push(row);
        }
        let alpha = with_alpha.then(|| {
            let a = offset;
            offset += ch.n_ue();
            a
        });
        let rate = rate_vars
            .iter()
            .map(|&on| {
                on.then(|| {
                    offset += 1;
                    offset - 1
                })
            })
            .collect();
        let lambda = offset;
        let gram_coeffs = (0..ch.n_ue())
            .map(|i| (0..ch.n_ap()).map(|j| trace_functional(ch.gram(i, j))).collect())
            .collect();
        Layout { blocks, alpha, rate, lambda, n: offset + 1, gram_coeffs }
    }

    fn psd_blocks(&self) -> Vec<PsdBlock> {
        self.blocks.iter().flatten().copied().collect()
    }

    /// `p_max - sum tr X`.
    fn power_slack(&self, p_max: f64) -> AffineForm {
        let mut f = AffineForm::constant(p_max);
        for b in self.blocks.iter().flatten() {
            for p in 0..b.dim {
                f.terms.push((b.offset + p, -1.0));
            }
        }
        f
    }

    /// `sum_j sum_{l in users} tr(H_ij X_lj)`.
    fn received(&self, i: usize, users: impl Fn(usize) -> bool) -> AffineForm {
        let mut f = AffineForm::default();
        for (l, row) in self.blocks.iter().enumerate() {
            if users(l) {
                for (j, b) in row.iter().enumerate() {
                    f.add_dense(b.offset, &self.gram_coeffs[i][j], 1.0);
                }
            }
        }
        f
    }

    fn energy(&self, i: usize) -> AffineForm {
        self.received(i, |_| true)
    }

    fn interference(&self, i: usize) -> AffineForm {
        self.received(i, |l| l != i)
    }

    fn lambda_floor(&self) -> ConcaveConstraint {
        ConcaveConstraint::affine(
            "lambda floor",
            AffineForm::var(self.lambda, 1.0).with_constant(-LAMBDA_FLOOR.ln()),
        )
    }

    fn write_precoders(&self, z: &mut DVector<f64>, precoders: &PrecoderSet) {
        for (l, row) in self.blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                let c = to_coords(precoders.get(l, j).matrix());
                z.rows_mut(b.offset, c.len()).copy_from_slice(&c);
            }
        }
    }

    fn precoders(&self, z: &DVector<f64>) -> PrecoderSet {
        let blocks = self
            .blocks
            .iter()
            .map(|row| {
                row.iter()
                    .map(|b| {
                        let m = from_coords(&z.as_slice()[b.offset..b.offset + coord_count(b.dim)], b.dim);
                        HermitianPsd::new_unchecked(m)
                    })
                    .collect()
            })
            .collect();
        PrecoderSet::new(blocks).expect("layout blocks are consistent")
    }
}

fn check_lengths(model: &SystemModel, weights: &PreferenceWeights, points: &[&[f64]]) -> Result<()> {
    let n = model.n_ue();
    if weights.len() != n {
        return Err(SwiptError::DimensionMismatch(format!("{} weight pairs for {n} UEs", weights.len())));
    }
    for p in points {
        if p.len() != n {
            return Err(SwiptError::DimensionMismatch(format!("linearization point of length {} for {n} UEs", p.len())));
        }
        if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SwiptError::Domain("linearization point must be finite and nonnegative".into()));
        }
    }
    let ch = model.channels();
    for i in 0..n {
        if (0..ch.n_ap()).all(|j| ch.gain(i, j) == 0.0) {
            return Err(SwiptError::Infeasible(format!("every channel to UE {i} is zero")));
        }
    }
    Ok(())
}

/// Precoders nudged strictly inside the PSD cone.
fn interior_precoders(model: &SystemModel, precoders: &PrecoderSet, margin: f64) -> Result<PrecoderSet> {
    let ch = model.channels();
    if precoders.n_ue() != ch.n_ue() || precoders.n_ap() != ch.n_ap() {
        return Err(SwiptError::DimensionMismatch("start precoders do not match the channels".into()));
    }
    let eps = Complex64::from(margin * model.p_max());
    let blocks = (0..ch.n_ue())
        .map(|l| {
            (0..ch.n_ap())
                .map(|j| {
                    let x = precoders.get(l, j).matrix();
                    if x.nrows() != ch.antennas(j) {
                        return Err(SwiptError::DimensionMismatch(format!("start block ({l},{j})")));
                    }
                    let n = x.nrows();
                    Ok(HermitianPsd::new_unchecked(x + nalgebra::DMatrix::identity(n, n) * eps))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PrecoderSet::new(blocks)
}

/// A starting `lambda_hat` strictly below every implied bound and above the floor.
fn start_lambda_hat(bounds: &[f64]) -> f64 {
    let floor = LAMBDA_FLOOR.ln();
    let b = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    if !b.is_finite() {
        floor + 1.0
    } else if b - floor > 2.0 {
        b - 1.0
    } else if b > floor {
        0.5 * (b + floor)
    } else {
        floor + 1.0
    }
}

struct Built {
    problem: BarrierProblem,
    layout: Layout,
}

fn build_pk(spec: &SubproblemPk) -> Result<Built> {
    let model = spec.model;
    let w = spec.weights;
    check_lengths(model, w, &[&spec.interference_point])?;
    spec.barrier.validate()?;
    let ch = model.channels();
    let n_ue = ch.n_ue();
    let rate_vars: Vec<bool> = (0..n_ue).map(|i| w.rate_active(i)).collect();
    let layout = Layout::new(model, true, &rate_vars);
    let a0 = layout.alpha.expect("adaptive layout has alpha");
    let mut constraints = Vec::new();
    for i in 0..n_ue {
        let sigma2 = ch.noise_power(i);
        let alpha = AffineForm::var(a0 + i, 1.0);
        let one_minus_alpha = AffineForm::var(a0 + i, -1.0).with_constant(1.0);
        if let Some(r) = layout.rate[i] {
            constraints.push(ConcaveConstraint::new(
                format!("rate weight UE {i}"),
                vec![alpha.clone(), AffineForm::var(r, 1.0)],
                AffineForm::var(layout.lambda, -1.0).with_constant(-w.v1(i).ln()),
            ));
            let ik = spec.interference_point[i];
            let denom = sigma2 + ik;
            let mut linear = AffineForm::constant(-denom.ln() + ik / denom).with_term(r, -1.0);
            linear.add_form(&layout.interference(i), -1.0 / denom);
            constraints.push(ConcaveConstraint::new(
                format!("rate bound UE {i}"),
                vec![layout.energy(i).with_constant(sigma2)],
                linear,
            ));
        }
        if w.energy_active(i) {
            constraints.push(ConcaveConstraint::new(
                format!("energy weight UE {i}"),
                vec![one_minus_alpha.clone(), layout.energy(i)],
                AffineForm::var(layout.lambda, -1.0)
                    .with_constant(model.energy_coefficient(i).ln() - w.v2(i).ln()),
            ));
        }
        constraints.push(ConcaveConstraint::affine(format!("alpha > 0 UE {i}"), alpha));
        constraints.push(ConcaveConstraint::affine(format!("alpha < 1 UE {i}"), one_minus_alpha));
    }
    constraints.push(ConcaveConstraint::affine("power", layout.power_slack(model.p_max())));
    constraints.push(layout.lambda_floor());
    let problem = BarrierProblem {
        n: layout.n,
        objective: AffineForm::var(layout.lambda, -1.0),
        constraints,
        psd_blocks: layout.psd_blocks(),
    };
    Ok(Built { problem, layout })
}

fn build_qk(spec: &SubproblemQk) -> Result<Built> {
    let model = spec.model;
    let w = spec.weights;
    check_lengths(model, w, &[&spec.energy_point, &spec.interference_point])?;
    spec.barrier.validate()?;
    let ch = model.channels();
    let n_ue = ch.n_ue();
    if let FixedSplit::Ts(ts) = &spec.split {
        if ts.len() != n_ue {
            return Err(SwiptError::DimensionMismatch(format!("{} switching ratios for {n_ue} UEs", ts.len())));
        }
    }
    let fractions = spec.split.fractions(n_ue);
    let layout = Layout::new(model, false, &vec![false; n_ue]);
    let mut constraints = Vec::new();
    for (i, &(a, b)) in fractions.iter().enumerate() {
        let sigma2 = ch.noise_power(i);
        if w.rate_active(i) {
            if !(a > 0.0) {
                return Err(SwiptError::DegenerateWeights(format!(
                    "UE {i} has rate weight {} but decodes for a zero fraction of time",
                    w.v1(i)
                )));
            }
            constraints.push(ConcaveConstraint::new(
                format!("rate weight UE {i}"),
                vec![linearized_rate(&layout, spec, i, sigma2)],
                AffineForm::var(layout.lambda, -1.0).with_constant(a.ln() - w.v1(i).ln()),
            ));
        }
        if w.energy_active(i) {
            if !(b > 0.0) {
                return Err(SwiptError::DegenerateWeights(format!(
                    "UE {i} has energy weight {} but harvests for a zero fraction of time",
                    w.v2(i)
                )));
            }
            constraints.push(ConcaveConstraint::new(
                format!("energy weight UE {i}"),
                vec![layout.energy(i)],
                AffineForm::var(layout.lambda, -1.0)
                    .with_constant((b * model.energy_coefficient(i)).ln() - w.v2(i).ln()),
            ));
        }
    }
    constraints.push(ConcaveConstraint::affine("power", layout.power_slack(model.p_max())));
    constraints.push(layout.lambda_floor());
    let problem = BarrierProblem {
        n: layout.n,
        objective: AffineForm::var(layout.lambda, -1.0),
        constraints,
        psd_blocks: layout.psd_blocks(),
    };
    Ok(Built { problem, layout })
}

/// First-order expansion of `ln(sigma^2 + E) - ln(sigma^2 + I)` around `(E_k, I_k)`.
fn linearized_rate(layout: &Layout, spec: &SubproblemQk, i: usize, sigma2: f64) -> AffineForm {
    let ek = spec.energy_point[i];
    let ik = spec.interference_point[i];
    let (de, di) = (sigma2 + ek, sigma2 + ik);
    let mut f = AffineForm::constant((de / di).ln() - ek / de + ik / di);
    f.add_form(&layout.energy(i), 1.0 / de);
    f.add_form(&layout.interference(i), -1.0 / di);
    f
}

fn run_barrier(built: &Built, start: InteriorPoint, t0: f64, settings: &BarrierSettings) -> Result<BarrierOutcome> {
    let start = if start.is_strictly_feasible(&built.problem) {
        start
    } else {
        phase_one(&built.problem, &start, settings)?
    };
    newton_barrier_minimize(&built.problem, &start, t0, settings)
}

fn resume_point(built: &Built, point: &InteriorPoint, t: f64) -> Result<(InteriorPoint, f64)> {
    if point.y.len() != built.layout.n {
        return Err(SwiptError::DimensionMismatch(format!(
            "resume point has {} entries, problem has {}",
            point.y.len(),
            built.layout.n
        )));
    }
    if !(t > 0.0) {
        return Err(SwiptError::Domain("resume barrier parameter must be positive".into()));
    }
    Ok((point.clone(), t))
}

/// Solves the adaptive switching subproblem.
pub fn solve_pk(spec: &SubproblemPk, start: &Start) -> Result<SubproblemSolution> {
    let built = build_pk(spec)?;
    let layout = &built.layout;
    let model = spec.model;
    let ch = model.channels();
    let n_ue = ch.n_ue();
    let a0 = layout.alpha.expect("adaptive layout has alpha");
    let (z0, t0) = match start {
        Start::Resume { point, t } => resume_point(&built, point, *t)?,
        _ => {
            let (precoders, alpha) = match start {
                Start::Point { precoders, alpha } => (
                    interior_precoders(model, precoders, spec.barrier.psd_margin)?,
                    alpha.clone().unwrap_or_else(|| vec![0.5; n_ue]),
                ),
                _ => {
                    let init = feasible_init(model)?;
                    (init.precoders, init.ts.alphas().to_vec())
                }
            };
            if alpha.len() != n_ue {
                return Err(SwiptError::DimensionMismatch(format!("{} start ratios for {n_ue} UEs", alpha.len())));
            }
            let mut z = DVector::zeros(layout.n);
            layout.write_precoders(&mut z, &precoders);
            let mut bounds = Vec::new();
            for (i, &a) in alpha.iter().enumerate() {
                let a = a.clamp(1e-6, 1.0 - 1e-6);
                z[a0 + i] = a;
                if let Some(r) = layout.rate[i] {
                    let sigma2 = ch.noise_power(i);
                    let ik = spec.interference_point[i];
                    let e = energy_i(ch, &precoders, i)?;
                    let inter = interference_i(ch, &precoders, i)?;
                    let rhs = (sigma2 + e).ln() - (sigma2 + ik).ln() - (inter - ik) / (sigma2 + ik);
                    let rv = if rhs > 0.0 { 0.9 * rhs } else { 1e-6 };
                    z[r] = rv;
                    bounds.push(a.ln() + rv.ln() - spec.weights.v1(i).ln());
                }
                if spec.weights.energy_active(i) {
                    let e = energy_i(ch, &precoders, i)?;
                    bounds.push(
                        (1.0 - a).ln() + (e * model.energy_coefficient(i)).ln() - spec.weights.v2(i).ln(),
                    );
                }
            }
            z[layout.lambda] = start_lambda_hat(&bounds);
            (InteriorPoint::anchored_at(&built.problem, &z)?, spec.barrier.t_init)
        }
    };
    let outcome = run_barrier(&built, z0, t0, &spec.barrier)?;
    let z = &outcome.z;
    let alpha: Vec<f64> = (0..n_ue).map(|i| z[a0 + i]).collect();
    let beta = alpha.iter().map(|a| 1.0 - a).collect();
    let rate_bound = layout.rate.iter().map(|r| r.map_or(0.0, |r| z[r])).collect();
    assemble(model, &built, outcome, alpha, beta, rate_bound)
}

/// Solves the fixed-split subproblem.
pub fn solve_qk(spec: &SubproblemQk, start: &Start) -> Result<SubproblemSolution> {
    let built = build_qk(spec)?;
    let layout = &built.layout;
    let model = spec.model;
    let ch = model.channels();
    let n_ue = ch.n_ue();
    let fractions = spec.split.fractions(n_ue);
    let (z0, t0) = match start {
        Start::Resume { point, t } => resume_point(&built, point, *t)?,
        _ => {
            let precoders = match start {
                Start::Point { precoders, .. } => interior_precoders(model, precoders, spec.barrier.psd_margin)?,
                _ => feasible_init(model)?.precoders,
            };
            let mut z = DVector::zeros(layout.n);
            layout.write_precoders(&mut z, &precoders);
            let mut bounds = Vec::new();
            for (i, &(a, b)) in fractions.iter().enumerate() {
                if spec.weights.rate_active(i) {
                    let r = linearized_rate(layout, spec, i, ch.noise_power(i)).eval(&z);
                    if r > 0.0 {
                        bounds.push((a * r).ln() - spec.weights.v1(i).ln());
                    } else {
                        bounds.push(f64::NEG_INFINITY);
                    }
                }
                if spec.weights.energy_active(i) {
                    let e = energy_i(ch, &precoders, i)?;
                    bounds.push((b * e * model.energy_coefficient(i)).ln() - spec.weights.v2(i).ln());
                }
            }
            z[layout.lambda] = start_lambda_hat(&bounds);
            (InteriorPoint::anchored_at(&built.problem, &z)?, spec.barrier.t_init)
        }
    };
    let outcome = run_barrier(&built, z0, t0, &spec.barrier)?;
    let rate_bound = (0..n_ue)
        .map(|i| {
            if spec.weights.rate_active(i) {
                outcome.point.eval(&built.problem, &linearized_rate(layout, spec, i, ch.noise_power(i)))
            } else {
                0.0
            }
        })
        .collect();
    let alpha = fractions.iter().map(|f| f.0).collect();
    let beta = fractions.iter().map(|f| f.1).collect();
    assemble(model, &built, outcome, alpha, beta, rate_bound)
}

fn assemble(
    model: &SystemModel,
    built: &Built,
    outcome: BarrierOutcome,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    rate_bound: Vec<f64>,
) -> Result<SubproblemSolution> {
    let ch = model.channels();
    let layout = &built.layout;
    let precoders = layout.precoders(&outcome.z);
    let n = ch.n_ue();
    let mut rate = Vec::with_capacity(n);
    let mut energy = Vec::with_capacity(n);
    let mut interference = Vec::with_capacity(n);
    // Read off the factored point: a nulled beam's leakage is far below the
    // rounding of the entrywise precoders.
    for i in 0..n {
        let e = outcome.point.eval(&built.problem, &layout.energy(i)).max(0.0);
        let inter = outcome.point.eval(&built.problem, &layout.interference(i)).clamp(0.0, e);
        let sigma2 = ch.noise_power(i);
        rate.push(((sigma2 + e) / (sigma2 + inter)).ln());
        energy.push(e);
        interference.push(inter);
    }
    let lambda_hat = outcome.z[layout.lambda];
    Ok(SubproblemSolution {
        precoders,
        alpha,
        beta,
        rate_bound,
        rate,
        energy,
        interference,
        lambda_hat,
        lambda: lambda_hat.exp(),
        duality_gap: outcome.gap,
        newton_iterations: outcome.newton_iterations,
        centering_steps: outcome.centering_steps,
        status: outcome.status,
        message: outcome.message,
        interior: outcome.point,
        t: outcome.t,
    })
}
