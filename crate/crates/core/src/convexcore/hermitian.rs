//! Real coordinates for `d x d` Hermitian matrices.
//!
//! A matrix is stored as `d^2` reals: the `d` diagonal entries first, then for
//! every `p < q` (row-major) the pair `Re X_pq, Im X_pq`. The basis matrix of
//! an off-diagonal real coordinate is `e_p e_q^T + e_q e_p^T`; that of an
//! imaginary coordinate is `i e_p e_q^T - i e_q e_p^T`.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

pub fn coord_count(dim: usize) -> usize {
    dim * dim
}

fn off_diagonal_pairs(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |p| (p + 1..dim).map(move |q| (p, q)))
}

pub fn to_coords(m: &DMatrix<Complex64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(coord_count(d));
    out.extend((0..d).map(|p| m[(p, p)].re));
    for (p, q) in off_diagonal_pairs(d) {
        out.push(m[(p, q)].re);
        out.push(m[(p, q)].im);
    }
    out
}

pub fn from_coords(z: &[f64], dim: usize) -> DMatrix<Complex64> {
    debug_assert_eq!(z.len(), coord_count(dim));
    let mut m = DMatrix::zeros(dim, dim);
    for p in 0..dim {
        m[(p, p)] = Complex64::new(z[p], 0.0);
    }
    for (k, (p, q)) in off_diagonal_pairs(dim).enumerate() {
        let v = Complex64::new(z[dim + 2 * k], z[dim + 2 * k + 1]);
        m[(p, q)] = v;
        m[(q, p)] = v.conj();
    }
    m
}

/// Coefficients `c` with `tr(A X) = c . coords(X)` for Hermitian `A`.
pub fn trace_functional(a: &DMatrix<Complex64>) -> Vec<f64> {
    let d = a.nrows();
    let mut out = Vec::with_capacity(coord_count(d));
    out.extend((0..d).map(|p| a[(p, p)].re));
    for (p, q) in off_diagonal_pairs(d) {
        out.push(2.0 * a[(p, q)].re);
        out.push(2.0 * a[(p, q)].im);
    }
    out
}

/// Inverse of [`trace_functional`]: the Hermitian `A` with `tr(A X) = c . coords(X)`.
pub fn functional_matrix(c: &[f64], dim: usize) -> DMatrix<Complex64> {
    let mut m = from_coords(c, dim);
    for p in 0..dim {
        for q in 0..dim {
            if p != q {
                m[(p, q)] *= 0.5;
            }
        }
    }
    m
}

/// Unevaluated sum `hi + lo`, about 32 significant digits.
#[derive(Debug, Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    /// `self + a * b` with error-free product and sum.
    fn add_product(self, a: f64, b: f64) -> Self {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let s = self.hi + p;
        let bp = s - self.hi;
        let s_err = (self.hi - (s - bp)) + (p - bp);
        let lo = self.lo + s_err + p_err;
        let hi = s + lo;
        DoubleDouble { hi, lo: lo - (hi - s) }
    }

    fn add_scaled(self, a: DoubleDouble, b: f64) -> Self {
        self.add_product(a.hi, b).add_product(a.lo, b)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `trace_functional(T^H A T)` where `c = trace_functional(A)`, so that
/// `c' . coords(Y) = c . coords(T Y T^H)`.
///
/// The products are accumulated in double-double. For a nearly nulled
/// direction the entries of `T^H A T` are tiny differences of terms of
/// size `|T|^2 |A|`; this keeps each of them to full relative precision.
pub fn congruent_functional(c: &[f64], t: &DMatrix<Complex64>) -> Vec<f64> {
    let d = t.nrows();
    let a = functional_matrix(c, d);
    let mut m_re = vec![DoubleDouble::default(); d * d];
    let mut m_im = vec![DoubleDouble::default(); d * d];
    for q in 0..d {
        for s in 0..d {
            let (mut re, mut im) = (DoubleDouble::default(), DoubleDouble::default());
            for p in 0..d {
                let (x, y) = (a[(q, p)], t[(p, s)]);
                re = re.add_product(x.re, y.re).add_product(-x.im, y.im);
                im = im.add_product(x.re, y.im).add_product(x.im, y.re);
            }
            m_re[q * d + s] = re;
            m_im[q * d + s] = im;
        }
    }
    let entry = |r: usize, s: usize| {
        let (mut re, mut im) = (DoubleDouble::default(), DoubleDouble::default());
        for q in 0..d {
            let x = t[(q, r)];
            let (mr, mi) = (m_re[q * d + s], m_im[q * d + s]);
            re = re.add_scaled(mr, x.re).add_scaled(mi, x.im);
            im = im.add_scaled(mi, x.re).add_scaled(mr, -x.im);
        }
        (re.value(), im.value())
    };
    let mut out = Vec::with_capacity(coord_count(d));
    out.extend((0..d).map(|p| entry(p, p).0));
    for (p, q) in off_diagonal_pairs(d) {
        let (re, im) = entry(p, q);
        out.push(2.0 * re);
        out.push(2.0 * im);
    }
    out
}

/// Weight of each coordinate in the Frobenius inner product `tr(X Y)`:
/// 1 on the diagonal, 2 for off-diagonal real / imaginary parts.
pub fn frobenius_weights(dim: usize) -> Vec<f64> {
    (0..coord_count(dim)).map(|k| if k < dim { 1.0 } else { 2.0 }).collect()
}

pub fn basis(dim: usize, k: usize) -> DMatrix<Complex64> {
    let mut z = vec![0.0; coord_count(dim)];
    z[k] = 1.0;
    from_coords(&z, dim)
}

/// Cholesky factor of a Hermitian matrix, or `None` unless it is positive
/// definite. nalgebra takes complex square roots of the pivots, so a negative
/// pivot would otherwise pass as an imaginary diagonal entry.
pub fn positive_cholesky(x: &DMatrix<Complex64>) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = Cholesky::new(x.clone())?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-9 * d.re);
    ok.then_some(chol)
}

/// `ln det X` with its gradient and Hessian in Hermitian coordinates, or
/// `None` when `X` is not positive definite.
pub fn log_det_derivatives(x: &DMatrix<Complex64>) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
    let d = x.nrows();
    let chol = positive_cholesky(x)?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.re.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    let inv = chol.inverse();
    let inv = (&inv + inv.adjoint()) * Complex64::from(0.5);
    let grad = trace_functional(&inv);
    let n = coord_count(d);
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..n {
        // d^2/dz_k dz_l ln det X = -tr(Y E_k Y E_l)
        let m = &inv * basis(d, k) * &inv;
        let row = trace_functional(&m);
        for (l, v) in row.into_iter().enumerate() {
            hess[(k, l)] = -v;
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    Some((log_det, grad, hess))
}

/// `ln det X` only.
pub fn log_det(x: &DMatrix<Complex64>) -> Option<f64> {
    let chol = positive_cholesky(x)?;
    let v = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.re.ln()).sum::<f64>();
    v.is_finite().then_some(v)
}
