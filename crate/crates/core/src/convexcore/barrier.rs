//! Path-following log-barrier method.
//!
//! Problems have a real variable vector `z`, a linear objective to minimize,
//! scalar constraints `g(z) > 0` where each `g` is a sum of logarithms of
//! affine forms plus an affine form (hence concave), and Hermitian blocks of
//! `z` that must stay positive definite. The centering problem
//!
//! ```text
//! minimize  t * c(z) - sum_k ln g_k(z) - sum_b ln det X_b(z)
//! ```
//!
//! is solved by damped Newton steps; `t` grows by `mu` until the barrier
//! parameter over `t` drops below the gap target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use super::hermitian::{
    congruent_functional, coord_count, frobenius_weights, from_coords, functional_matrix, log_det, positive_cholesky, to_coords,
    trace_functional,
};
use crate::error::{Result, SwiptError};

/// Sparse affine form `sum_k w_k z_{i_k} + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineForm {
    pub fn constant(c: f64) -> Self {
        AffineForm { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize, weight: f64) -> Self {
        AffineForm { terms: vec![(index, weight)], constant: 0.0 }
    }

    pub fn with_term(mut self, index: usize, weight: f64) -> Self {
        self.terms.push((index, weight));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Adds `weight * coeffs[k]` on variable `offset + k`.
    pub fn add_dense(&mut self, offset: usize, coeffs: &[f64], weight: f64) {
        for (k, c) in coeffs.iter().enumerate() {
            if *c != 0.0 {
                self.terms.push((offset + k, weight * c));
            }
        }
    }

    pub fn add_form(&mut self, other: &AffineForm, weight: f64) {
        self.terms.extend(other.terms.iter().map(|&(i, w)| (i, w * weight)));
        self.constant += weight * other.constant;
    }

    /// Evaluated with a compensated dot product. Received powers are sums
    /// of terms near `1e9` that cancel down to a few noise units for nulled
    /// beams, and plain summation would leave errors larger than the
    /// constraint slack at high `t`.
    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        let mut sum = self.constant;
        let mut err = 0.0;
        for &(i, w) in &self.terms {
            let p = w * z[i];
            let pe = w.mul_add(z[i], -p);
            let s = sum + p;
            let bp = s - sum;
            err += (sum - (s - bp)) + (p - bp) + pe;
            sum = s;
        }
        sum + err
    }

    /// Directional derivative along `dz`.
    pub fn slope(&self, dz: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(i, w)| w * dz[i]).sum()
    }
}

/// `g(z) = sum_k ln(logs_k(z)) + linear(z)`, required strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveConstraint {
    pub label: String,
    pub logs: Vec<AffineForm>,
    pub linear: AffineForm,
}

impl ConcaveConstraint {
    pub fn affine(label: impl Into<String>, linear: AffineForm) -> Self {
        ConcaveConstraint { label: label.into(), logs: Vec::new(), linear }
    }

    pub fn new(label: impl Into<String>, logs: Vec<AffineForm>, linear: AffineForm) -> Self {
        ConcaveConstraint { label: label.into(), logs, linear }
    }

    /// Value of `g`, or `None` outside the domain of the logarithms.
    pub fn eval(&self, z: &DVector<f64>) -> Option<f64> {
        let mut g = self.linear.eval(z);
        for f in &self.logs {
            let s = f.eval(z);
            if !(s > 0.0) {
                return None;
            }
            g += s.ln();
        }
        Some(g)
    }

    /// Adds `-ln g` to the gradient and records its Hessian as weighted
    /// rank-one terms `rho u u^T`.
    fn accumulate(&self, z: &DVector<f64>, grad: &mut DVector<f64>, terms: &mut Vec<RankOne>) -> Option<f64> {
        let g = self.eval(z)?;
        if !(g > 0.0) {
            return None;
        }
        let mut dg: Vec<(usize, f64)> = self.linear.terms.clone();
        let mut log_args = Vec::with_capacity(self.logs.len());
        for f in &self.logs {
            let s = f.eval(z);
            log_args.push(s);
            dg.extend(f.terms.iter().map(|&(i, w)| (i, w / s)));
        }
        // -ln g: grad = -dg / g, hess = dg dg^T / g^2 - d2g / g with
        // d2g = -sum a a^T / s^2.
        for &(i, w) in &dg {
            grad[i] -= w / g;
        }
        terms.push(RankOne { rho: 1.0 / (g * g), u: dg });
        for (f, s) in self.logs.iter().zip(log_args) {
            if !f.terms.is_empty() {
                terms.push(RankOne { rho: 1.0 / (s * s * g), u: f.terms.clone() });
            }
        }
        Some(-g.ln())
    }
}

/// `rho u u^T` with a sparse `u` (repeated indices add up).
#[derive(Debug, Clone)]
struct RankOne {
    rho: f64,
    u: Vec<(usize, f64)>,
}

/// Barrier derivatives without the log-det part, which is handled in
/// congruence-scaled block coordinates by [`newton_direction`].
///
/// The scalar constraints contribute rank-one Hessian terms whose weights
/// sit many orders of magnitude above the log-det curvature (channel gains
/// are large in noise units), so they are kept separate instead of summed
/// into one matrix.
struct Derivatives {
    value: f64,
    /// Gradient of `-sum ln g` only.
    grad: DVector<f64>,
    terms: Vec<RankOne>,
    /// Cholesky factor of every PSD block.
    factors: Vec<DMatrix<Complex64>>,
}

/// A Hermitian variable block occupying `dim^2` coordinates from `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdBlock {
    pub offset: usize,
    pub dim: usize,
}

/// Minimize `objective(z)` subject to the constraints and PSD blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierProblem {
    pub n: usize,
    pub objective: AffineForm,
    pub constraints: Vec<ConcaveConstraint>,
    pub psd_blocks: Vec<PsdBlock>,
}

impl BarrierProblem {
    /// Barrier parameter: one per scalar constraint, `dim` per PSD block.
    pub fn barrier_parameter(&self) -> f64 {
        (self.constraints.len() + self.psd_blocks.iter().map(|b| b.dim).sum::<usize>()) as f64
    }

    fn block(&self, b: &PsdBlock, z: &DVector<f64>) -> DMatrix<Complex64> {
        from_coords(&z.as_slice()[b.offset..b.offset + coord_count(b.dim)], b.dim)
    }

    /// Barrier value `-sum ln g - sum ln det`, `None` when not strictly feasible.
    pub fn barrier_value(&self, z: &DVector<f64>) -> Option<f64> {
        let mut v = 0.0;
        for c in &self.constraints {
            let g = c.eval(z)?;
            if !(g > 0.0) {
                return None;
            }
            v -= g.ln();
        }
        for b in &self.psd_blocks {
            v -= log_det(&self.block(b, z))?;
        }
        Some(v)
    }

    pub fn is_strictly_feasible(&self, z: &DVector<f64>) -> bool {
        self.barrier_value(z).is_some()
    }

    /// Smallest constraint value, or `None` outside the log domains.
    pub fn min_constraint(&self, z: &DVector<f64>) -> Option<f64> {
        self.constraints
            .iter()
            .map(|c| c.eval(z))
            .try_fold(f64::INFINITY, |acc, g| g.map(|g| acc.min(g)))
    }

    fn barrier_derivatives(&self, z: &DVector<f64>) -> Option<Derivatives> {
        let mut grad = DVector::zeros(self.n);
        let mut terms = Vec::new();
        let mut value = 0.0;
        for c in &self.constraints {
            value += c.accumulate(z, &mut grad, &mut terms)?;
        }
        let mut factors = Vec::with_capacity(self.psd_blocks.len());
        for b in &self.psd_blocks {
            let chol = positive_cholesky(&self.block(b, z))?;
            let l = chol.l();
            value -= 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
            factors.push(l);
        }
        value.is_finite().then_some(Derivatives { value, grad, terms, factors })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSettings {
    pub t_init: f64,
    /// Growth factor of `t` between centering steps.
    pub mu: f64,
    /// Stop centering when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub max_centering_steps: usize,
    /// Relative PSD margin `eps * p_max * I` used when repairing start points.
    pub psd_margin: f64,
    /// Target for the duality-gap estimate `m / t`.
    pub gap_tol: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            t_init: 1.0,
            mu: 10.0,
            newton_tol: 1e-9,
            max_newton_iters: 200,
            max_centering_steps: 60,
            psd_margin: 1e-8,
            gap_tol: 1e-6,
        }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 1.0) {
            return Err(SwiptError::InvalidConfig("barrier mu must exceed 1".into()));
        }
        if !(self.t_init > 0.0 && self.newton_tol > 0.0 && self.gap_tol > 0.0 && self.psd_margin >= 0.0) {
            return Err(SwiptError::InvalidConfig("barrier tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    /// Final point in plain coordinates.
    pub z: DVector<f64>,
    /// The same point in anchored form, for warm starts.
    pub point: InteriorPoint,
    pub t: f64,
    pub gap: f64,
    pub gap_history: Vec<f64>,
    pub newton_iterations: usize,
    pub centering_steps: usize,
    pub status: SolveStatus,
    pub message: Option<String>,
}

/// Newton step for `t c + Phi`, returned with its directional derivative.
///
/// Each PSD block `X = L L^H` is stepped as `dX = L dW L^H`. In `W` the
/// log-det Hessian is the constant Frobenius metric and its gradient is
/// `-I`, so no ill-conditioned inverse of `X` is ever formed. With `B` that
/// metric (zero outside the blocks), the step solves
///
/// ```text
/// [ B    U            ] [dW]   [-g_W]
/// [ U^T  -diag(1/rho) ] [ y] = [  0 ]
/// ```
///
/// which equals `(B + sum rho_k u_k u_k^T) dW = -g_W` without summing terms of
/// wildly different magnitude.
fn newton_direction(
    problem: &BarrierProblem,
    d: &Derivatives,
    grad: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = grad.len();
    let k = d.terms.len();
    let mut in_block = vec![false; n];
    let mut metric = vec![0.0; n];
    let mut g = grad.clone();
    let mut u = DMatrix::<f64>::zeros(n, k);
    for (c, term) in d.terms.iter().enumerate() {
        for &(i, w) in &term.u {
            u[(i, c)] += w;
        }
    }
    for (b, l) in problem.psd_blocks.iter().zip(&d.factors) {
        let m = coord_count(b.dim);
        let range = b.offset..b.offset + m;
        let pull_back = |c: &[f64]| trace_functional(&(l.adjoint() * functional_matrix(c, b.dim) * l));
        let gw = pull_back(&g.as_slice()[range.clone()]);
        for (q, v) in gw.into_iter().enumerate() {
            g[b.offset + q] = v - if q < b.dim { 1.0 } else { 0.0 };
        }
        for c in 0..k {
            let col: Vec<f64> = range.clone().map(|i| u[(i, c)]).collect();
            if col.iter().any(|v| *v != 0.0) {
                for (q, v) in pull_back(&col).into_iter().enumerate() {
                    u[(b.offset + q, c)] = v;
                }
            }
        }
        for (q, w) in frobenius_weights(b.dim).into_iter().enumerate() {
            in_block[b.offset + q] = true;
            metric[b.offset + q] = w;
        }
    }
    // Coordinates outside the blocks are scaled by their rank-one curvature.
    let mut scale = vec![1.0; n];
    for i in 0..n {
        let v = if in_block[i] {
            metric[i]
        } else {
            d.terms.iter().enumerate().map(|(c, t)| t.rho * u[(i, c)] * u[(i, c)]).sum()
        };
        if v > 0.0 && v.is_finite() {
            scale[i] = v.sqrt().recip();
        }
    }
    let mut inv_rho = Vec::with_capacity(k);
    for (c, term) in d.terms.iter().enumerate() {
        let mut norm2 = 0.0;
        for i in 0..n {
            u[(i, c)] *= scale[i];
            norm2 += u[(i, c)] * u[(i, c)];
        }
        if norm2 > 0.0 {
            let norm = norm2.sqrt();
            for i in 0..n {
                u[(i, c)] /= norm;
            }
            inv_rho.push(1.0 / (term.rho * norm2));
        } else {
            inv_rho.push(1.0);
        }
    }
    let size = n + k;
    let mut m = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        if in_block[i] {
            m[(i, i)] = 1.0;
        }
        for c in 0..k {
            m[(i, n + c)] = u[(i, c)];
            m[(n + c, i)] = u[(i, c)];
        }
    }
    for c in 0..k {
        m[(n + c, n + c)] = -inv_rho[c];
    }
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..n {
        rhs[i] = -g[i] * scale[i];
    }
    let solve = |m: &DMatrix<f64>| -> Option<DVector<f64>> {
        let lu = m.clone().full_piv_lu();
        let mut x = lu.solve(&rhs)?;
        let r = &rhs - m * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    };
    let x = solve(&m).or_else(|| {
        let mut reg = m.clone();
        for i in 0..n {
            reg[(i, i)] += 1e-10;
        }
        solve(&reg)
    })?;
    let dw = DVector::from_iterator(n, (0..n).map(|i| x[i] * scale[i]));
    let slope = g.dot(&dw);
    let mut dz = dw.clone();
    for (b, l) in problem.psd_blocks.iter().zip(&d.factors) {
        let m = coord_count(b.dim);
        let step = l * from_coords(&dw.as_slice()[b.offset..b.offset + m], b.dim) * l.adjoint();
        dz.rows_mut(b.offset, m).copy_from_slice(&to_coords(&step));
    }
    Some((dz, slope))
}

enum Centering {
    Done(usize),
    IterationLimit(usize),
    Failed(usize, String),
}

/// Newton decrement^2 below which a point that no longer makes progress
/// counts as centered. Inside this region the centering objective is within
/// about `decrement^2` of its minimum, far below the `m / t` gap.
const STALL_DECREMENT: f64 = 0.25;
const STALL_LIMIT: usize = 5;

fn center(problem: &BarrierProblem, z: &mut DVector<f64>, t: f64, settings: &BarrierSettings) -> Centering {
    let mut iters = 0;
    let mut stalls = 0;
    loop {
        let Some(deriv) = problem.barrier_derivatives(z) else {
            return Centering::Failed(iters, "iterate left the barrier domain".into());
        };
        let phi = deriv.value;
        let mut grad = deriv.grad.clone();
        for &(i, w) in &problem.objective.terms {
            grad[i] += t * w;
        }
        let Some((dz, slope)) = newton_direction(problem, &deriv, &grad) else {
            return Centering::Failed(iters, "Newton system is singular".into());
        };
        let decrement2 = -slope;
        if decrement2.abs() / 2.0 <= settings.newton_tol {
            return Centering::Done(iters);
        }
        if !(decrement2 >= 0.0) {
            return Centering::Failed(iters, format!("non-descent Newton direction ({slope:e})"));
        }
        if decrement2 / 2.0 <= settings.newton_tol {
            return Centering::Done(iters);
        }
        if iters >= settings.max_newton_iters {
            return Centering::IterationLimit(iters);
        }
        let obj_slope = problem.objective.slope(&dz);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-16 {
            let cand = &*z + &dz * step;
            if let Some(phi_new) = problem.barrier_value(&cand) {
                let change = t * step * obj_slope + (phi_new - phi);
                if change <= 0.25 * step * slope {
                    *z = cand;
                    accepted = true;
                    // Round-off in the Hessian shows up as steps that barely move.
                    if step < 1e-3 || change > 1e-3 * step * slope {
                        stalls += 1;
                    } else {
                        stalls = 0;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        iters += 1;
        if !accepted || stalls >= STALL_LIMIT {
            if decrement2 <= STALL_DECREMENT {
                return Centering::Done(iters);
            }
            return Centering::Failed(iters, format!("Newton stalled (decrement^2 {decrement2:e})"));
        }
    }
}

/// A point of a [`BarrierProblem`] whose PSD blocks are kept in factored
/// form `X_b = T_b Y_b T_b^H`, with `T_b` lower triangular.
///
/// Along the central path the blocks become nearly rank one, with smallest
/// eigenvalues around `1 / (t * gain)`; at the target gap that is below the
/// rounding of an entrywise `X`. In `Y` coordinates, re-anchored so that
/// `Y = I` before every centering step, those eigenvalues keep their
/// relative precision.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorPoint {
    /// The variable vector with every block replaced by its `Y_b`.
    pub y: DVector<f64>,
    pub anchors: Vec<DMatrix<Complex64>>,
}

impl InteriorPoint {
    /// Anchors each block of `z` at its own Cholesky factor.
    pub fn anchored_at(problem: &BarrierProblem, z: &DVector<f64>) -> Result<Self> {
        if z.len() != problem.n {
            return Err(SwiptError::DimensionMismatch(format!(
                "point has {} entries, problem has {}",
                z.len(),
                problem.n
            )));
        }
        let point = InteriorPoint {
            y: z.clone(),
            anchors: problem.psd_blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect(),
        };
        point
            .reanchored(problem)
            .ok_or_else(|| SwiptError::Infeasible("start point has a PSD block that is not positive definite".into()))
    }

    /// Plain coordinates with `X_b = T_b Y_b T_b^H`.
    pub fn coords(&self, problem: &BarrierProblem) -> DVector<f64> {
        let mut z = self.y.clone();
        for (b, t) in problem.psd_blocks.iter().zip(&self.anchors) {
            let m = coord_count(b.dim);
            let x = t * problem.block(b, &self.y) * t.adjoint();
            z.rows_mut(b.offset, m).copy_from_slice(&to_coords(&x));
        }
        z
    }

    /// `T <- T chol(Y)`, `Y <- I`; `None` if some `Y` is not positive definite.
    fn reanchored(&self, problem: &BarrierProblem) -> Option<Self> {
        let mut out = self.clone();
        for (b, t) in problem.psd_blocks.iter().zip(out.anchors.iter_mut()) {
            let l = positive_cholesky(&problem.block(b, &self.y))?.l();
            *t = &*t * l;
            let identity = to_coords(&DMatrix::<Complex64>::identity(b.dim, b.dim));
            out.y.rows_mut(b.offset, coord_count(b.dim)).copy_from_slice(&identity);
        }
        Some(out)
    }

    fn check(&self, problem: &BarrierProblem) -> Result<()> {
        let dims_ok = self.anchors.len() == problem.psd_blocks.len()
            && problem.psd_blocks.iter().zip(&self.anchors).all(|(b, t)| t.nrows() == b.dim && t.ncols() == b.dim);
        if self.y.len() != problem.n || !dims_ok {
            return Err(SwiptError::DimensionMismatch("interior point does not match the problem layout".into()));
        }
        Ok(())
    }

    /// Value at this point of a form in plain coordinates, without rounding
    /// the blocks to entrywise form first.
    pub fn eval(&self, problem: &BarrierProblem, f: &AffineForm) -> f64 {
        f.congruence(&problem.block_index(), &problem.psd_blocks, &self.anchors).eval(&self.y)
    }

    pub fn is_strictly_feasible(&self, problem: &BarrierProblem) -> bool {
        self.check(problem).is_ok() && problem.anchored(&self.anchors).is_strictly_feasible(&self.y)
    }
}

impl AffineForm {
    /// The same function expressed in anchored block coordinates.
    fn congruence(&self, block_of: &[Option<usize>], blocks: &[PsdBlock], anchors: &[DMatrix<Complex64>]) -> AffineForm {
        let mut out = AffineForm::constant(self.constant);
        let mut dense: Vec<Option<Vec<f64>>> = vec![None; blocks.len()];
        for &(i, w) in &self.terms {
            match block_of.get(i).copied().flatten() {
                Some(k) => {
                    let b = blocks[k];
                    dense[k].get_or_insert_with(|| vec![0.0; coord_count(b.dim)])[i - b.offset] += w;
                }
                None => out.terms.push((i, w)),
            }
        }
        for (k, c) in dense.into_iter().enumerate() {
            if let Some(c) = c {
                out.add_dense(blocks[k].offset, &congruent_functional(&c, &anchors[k]), 1.0);
            }
        }
        out
    }
}

impl BarrierProblem {
    /// Block number of every coordinate.
    fn block_index(&self) -> Vec<Option<usize>> {
        let mut block_of = vec![None; self.n];
        for (k, b) in self.psd_blocks.iter().enumerate() {
            for slot in &mut block_of[b.offset..b.offset + coord_count(b.dim)] {
                *slot = Some(k);
            }
        }
        block_of
    }

    /// The problem in the `Y` coordinates of the given anchors.
    fn anchored(&self, anchors: &[DMatrix<Complex64>]) -> BarrierProblem {
        let block_of = self.block_index();
        let map = |f: &AffineForm| f.congruence(&block_of, &self.psd_blocks, anchors);
        BarrierProblem {
            n: self.n,
            objective: map(&self.objective),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConcaveConstraint {
                    label: c.label.clone(),
                    logs: c.logs.iter().map(map).collect(),
                    linear: map(&c.linear),
                })
                .collect(),
            psd_blocks: self.psd_blocks.clone(),
        }
    }
}

/// Path-following barrier method from a strictly feasible `start`.
pub fn newton_barrier_minimize(
    problem: &BarrierProblem,
    start: &InteriorPoint,
    t_start: f64,
    settings: &BarrierSettings,
) -> Result<BarrierOutcome> {
    settings.validate()?;
    start.check(problem)?;
    if !start.is_strictly_feasible(problem) {
        return Err(SwiptError::Infeasible("start point is not strictly feasible".into()));
    }
    let m = problem.barrier_parameter();
    let mut point = start.clone();
    let mut t = t_start;
    let mut out = BarrierOutcome {
        z: point.coords(problem),
        point: point.clone(),
        t,
        gap: m / t,
        gap_history: Vec::new(),
        newton_iterations: 0,
        centering_steps: 0,
        status: SolveStatus::MaxIters,
        message: None,
    };
    loop {
        point = point
            .reanchored(problem)
            .ok_or_else(|| SwiptError::Numerical("a PSD block lost positive definiteness".into()))?;
        let anchored = problem.anchored(&point.anchors);
        let result = center(&anchored, &mut point.y, t, settings);
        out.centering_steps += 1;
        let (iters, failure) = match result {
            Centering::Done(k) => (k, None),
            Centering::IterationLimit(k) => (k, Some("Newton iteration limit".to_string())),
            Centering::Failed(k, msg) => (k, Some(msg)),
        };
        out.newton_iterations += iters;
        out.z = point.coords(problem);
        out.point = point.clone();
        out.t = t;
        out.gap = m / t;
        out.gap_history.push(out.gap);
        if let Some(msg) = failure {
            out.status = SolveStatus::MaxIters;
            out.message = Some(msg);
            return Ok(out);
        }
        if out.gap <= settings.gap_tol * (1.0 + 1e-12) {
            out.status = SolveStatus::Optimal;
            return Ok(out);
        }
        if out.centering_steps >= settings.max_centering_steps {
            out.status = SolveStatus::MaxIters;
            out.message = Some("centering step limit".into());
            return Ok(out);
        }
        // The last increase lands exactly on the target gap.
        t = (t * settings.mu).min(m / settings.gap_tol);
    }
}

/// Finds a strictly feasible point by minimizing a common slack `s` that is
/// added to every constraint and to every logarithm argument:
/// `sum_k ln(f_k(z) + s) + linear(z) + s > 0`. Once `s < 0` the original
/// constraints hold strictly, so the start only needs positive definite blocks.
pub fn phase_one(problem: &BarrierProblem, start: &InteriorPoint, settings: &BarrierSettings) -> Result<InteriorPoint> {
    start.check(problem)?;
    if start.is_strictly_feasible(problem) {
        return Ok(start.clone());
    }
    let start = start
        .reanchored(problem)
        .ok_or_else(|| SwiptError::Infeasible("phase one start has singular PSD blocks".into()))?;
    let base = problem.anchored(&start.anchors);
    let n = problem.n;
    let s_index = n;
    let mut constraints: Vec<ConcaveConstraint> = base
        .constraints
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for f in &mut c.logs {
                f.terms.push((s_index, 1.0));
            }
            c.linear.terms.push((s_index, 1.0));
            c
        })
        .collect();
    constraints.push(ConcaveConstraint::affine("slack floor", AffineForm::var(s_index, 1.0).with_constant(1.0)));
    let aug = BarrierProblem {
        n: n + 1,
        objective: AffineForm::var(s_index, 1.0),
        constraints,
        psd_blocks: problem.psd_blocks.clone(),
    };
    let z0 = &start.y;
    let mut z = z0.clone().resize_vertically(n + 1, 0.0);
    let min_arg = base
        .constraints
        .iter()
        .flat_map(|c| c.logs.iter().map(|f| f.eval(z0)))
        .fold(f64::INFINITY, f64::min);
    let mut s0 = if min_arg.is_finite() { (-min_arg).max(0.0) + 1.0 } else { 1.0 };
    z[s_index] = s0;
    let mut tries = 0;
    while !aug.is_strictly_feasible(&z) {
        tries += 1;
        if tries > 200 || !s0.is_finite() {
            return Err(SwiptError::Infeasible("phase one start has singular PSD blocks".into()));
        }
        s0 *= 2.0;
        z[s_index] = s0;
    }
    let m = aug.barrier_parameter();
    let mut t = settings.t_init / s0.max(1.0);
    for _ in 0..settings.max_centering_steps {
        let centered = match center(&aug, &mut z, t, settings) {
            Centering::Done(_) => true,
            Centering::IterationLimit(_) => false,
            Centering::Failed(_, msg) => return Err(SwiptError::Numerical(format!("phase one: {msg}"))),
        };
        if z[s_index] < 0.0 {
            let found = InteriorPoint { y: z.rows(0, n).into_owned(), anchors: start.anchors.clone() };
            if found.is_strictly_feasible(problem) {
                return Ok(found);
            }
        }
        // Centered points bound the optimal slack from below by s - m/t.
        if (centered && z[s_index] - m / t > 0.0) || m / t <= settings.gap_tol {
            break;
        }
        t *= settings.mu;
    }
    Err(SwiptError::Infeasible(format!(
        "no strictly feasible point (best slack {:e})",
        z[s_index]
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn at(problem: &BarrierProblem, z: DVector<f64>) -> InteriorPoint {
        InteriorPoint::anchored_at(problem, &z).unwrap()
    }

    #[test]
    fn one_dimensional_bound() {
        // maximize x s.t. x <= 3  ->  minimize -x
        let problem = BarrierProblem {
            n: 1,
            objective: AffineForm::var(0, -1.0),
            constraints: vec![ConcaveConstraint::affine("ub", AffineForm::var(0, -1.0).with_constant(3.0))],
            psd_blocks: vec![],
        };
        let out = newton_barrier_minimize(&problem, &at(&problem, DVector::from_element(1, 0.0)), 1.0, &Default::default())
            .unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        // Central point of -t x - ln(3 - x) is x = 3 - 1/t.
        assert!((out.z[0] - (3.0 - 1.0 / out.t)).abs() < 1e-9);
        assert!(3.0 - out.z[0] <= 1e-6);
    }

    #[test]
    fn gap_shrinks_by_mu_each_step() {
        let problem = BarrierProblem {
            n: 1,
            objective: AffineForm::var(0, -1.0),
            constraints: vec![
                ConcaveConstraint::affine("ub", AffineForm::var(0, -1.0).with_constant(2.0)),
                ConcaveConstraint::new("log", vec![AffineForm::var(0, 1.0)], AffineForm::constant(5.0)),
            ],
            psd_blocks: vec![],
        };
        let settings = BarrierSettings::default();
        let out = newton_barrier_minimize(&problem, &at(&problem, DVector::from_element(1, 1.0)), 1.0, &settings).unwrap();
        let n = out.gap_history.len();
        for w in out.gap_history[..n - 1].windows(2) {
            assert!((w[0] / w[1] - settings.mu).abs() < 1e-9);
        }
        let last = out.gap_history[n - 2] / out.gap_history[n - 1];
        assert!(last > 1.0 && last <= settings.mu + 1e-9);
        assert!(out.gap <= settings.gap_tol * (1.0 + 1e-12));
    }

    #[test]
    fn psd_trace_maximization_hits_top_eigenvalue() {
        // maximize tr(C X) s.t. tr X <= 1, X psd; optimum lambda_max(C).
        let d = 3;
        let mut c = nalgebra::DMatrix::<Complex64>::zeros(d, d);
        let entries = [
            (0, 0, Complex64::new(2.0, 0.0)),
            (1, 1, Complex64::new(1.0, 0.0)),
            (2, 2, Complex64::new(-0.5, 0.0)),
            (0, 1, Complex64::new(0.4, 0.7)),
            (0, 2, Complex64::new(-0.3, 0.2)),
            (1, 2, Complex64::new(0.1, -0.6)),
        ];
        for (p, q, v) in entries {
            c[(p, q)] = v;
            c[(q, p)] = v.conj();
        }
        let lambda_max = SymmetricEigen::new(c.clone()).eigenvalues.max();
        let mut objective = AffineForm::default();
        objective.add_dense(0, &trace_functional(&c), -1.0);
        let mut power = AffineForm::constant(1.0);
        power.add_dense(0, &trace_functional(&nalgebra::DMatrix::identity(d, d)), -1.0);
        let problem = BarrierProblem {
            n: 9,
            objective,
            constraints: vec![ConcaveConstraint::affine("trace", power)],
            psd_blocks: vec![PsdBlock { offset: 0, dim: d }],
        };
        let start = DVector::from_vec(to_coords(&(nalgebra::DMatrix::identity(d, d) * Complex64::from(0.2))));
        let out = newton_barrier_minimize(&problem, &at(&problem, start), 1.0, &Default::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let value = -problem.objective.eval(&out.z);
        assert!((value - lambda_max).abs() < 1e-6, "{value} vs {lambda_max}");
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let problem = BarrierProblem {
            n: 1,
            objective: AffineForm::var(0, -1.0),
            constraints: vec![ConcaveConstraint::affine("ub", AffineForm::var(0, -1.0).with_constant(3.0))],
            psd_blocks: vec![],
        };
        let err = newton_barrier_minimize(&problem, &at(&problem, DVector::from_element(1, 4.0)), 1.0, &Default::default());
        assert!(matches!(err, Err(SwiptError::Infeasible(_))));
    }

    #[test]
    fn phase_one_recovers_interior_point() {
        // ln(x) - 1 > 0 and 5 - x > 0 from x = 1.
        let problem = BarrierProblem {
            n: 1,
            objective: AffineForm::var(0, -1.0),
            constraints: vec![
                ConcaveConstraint::new("log", vec![AffineForm::var(0, 1.0)], AffineForm::constant(-1.0)),
                ConcaveConstraint::affine("ub", AffineForm::var(0, -1.0).with_constant(5.0)),
            ],
            psd_blocks: vec![],
        };
        let z = phase_one(&problem, &at(&problem, DVector::from_element(1, 1.0)), &Default::default()).unwrap();
        assert!(z.is_strictly_feasible(&problem));
        // Start outside the logarithm's domain.
        let z = phase_one(&problem, &at(&problem, DVector::from_element(1, -4.0)), &Default::default()).unwrap();
        assert!(z.is_strictly_feasible(&problem));

        let empty = BarrierProblem {
            n: 1,
            objective: AffineForm::var(0, -1.0),
            constraints: vec![
                ConcaveConstraint::affine("lb", AffineForm::var(0, 1.0).with_constant(-2.0)),
                ConcaveConstraint::affine("ub", AffineForm::var(0, -1.0).with_constant(1.0)),
            ],
            psd_blocks: vec![],
        };
        assert!(phase_one(&empty, &at(&empty, DVector::from_element(1, 0.0)), &Default::default()).is_err());
    }

    #[test]
    fn settings_validation() {
        let bad = BarrierSettings { mu: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
