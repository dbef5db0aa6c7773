//! Linear state-space systems `M(s) = C (sI - A)^{-1} B + D`, their frequency
//! response, and the negative-imaginary / output-strictly-negative-imaginary tests.
//!
//! Frequency-domain checks evaluate on a finite grid of positive frequencies; the
//! `w -> inf` limit is handled analytically, where `M(jw) -> D` and the OSNI
//! test matrix vanishes.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    general_eigenvalues, hermitian_eigenvalues, inf_norm, is_symmetric, kron, rank,
    symmetric_eigenvalues, to_complex, CMatrix, Matrix,
};

/// Eigenvalue floor below which a Hermitian/symmetric matrix is not considered PSD.
pub const PSD_TOL: f64 = -1e-9;
/// Residual tolerance for the state-space OSNI certificate.
pub const CERT_TOL: f64 = 1e-9;
/// Absolute tolerance on the bisected strictness level.
pub const DELTA_TOL: f64 = 1e-6;
/// Relative singular-value cut-off for the minimality diagnostic.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let q = a.nrows();
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        let m = b.ncols();
        if b.nrows() != q {
            return Err(Error::Dimension(format!("B has {} rows, A is {q}x{q}", b.nrows())));
        }
        if c.ncols() != q || c.nrows() != m {
            return Err(Error::Dimension(format!(
                "C is {}x{}, expected {m}x{q}",
                c.nrows(),
                c.ncols()
            )));
        }
        if d.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {m}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// `M(s) = a / (s + b)` realised as `x' = -b x + a u`, `y = x`.
    pub fn first_order(a: f64, b: f64) -> Self {
        Self {
            a: Matrix::from_element(1, 1, -b),
            b: Matrix::from_element(1, 1, a),
            c: Matrix::from_element(1, 1, 1.0),
            d: Matrix::zeros(1, 1),
        }
    }

    /// Static gain `M(s) = D` with no states.
    pub fn static_gain(d: Matrix) -> Result<Self> {
        let m = d.nrows();
        Self::new(Matrix::zeros(0, 0), Matrix::zeros(0, m), Matrix::zeros(m, 0), d)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn io_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `M(inf) = D`.
    pub fn high_frequency_gain(&self) -> &Matrix {
        &self.d
    }

    /// Controllability and observability rank test. Optional diagnostic; minimality
    /// is otherwise taken as given.
    pub fn is_minimal(&self) -> bool {
        let q = self.state_dim();
        if q == 0 {
            return true;
        }
        let m = self.io_dim();
        let mut ctrb = Matrix::zeros(q, q * m);
        let mut obsv = Matrix::zeros(q * m, q);
        let mut ak_b = self.b.clone();
        let mut c_ak = self.c.clone();
        for k in 0..q {
            ctrb.view_mut((0, k * m), (q, m)).copy_from(&ak_b);
            obsv.view_mut((k * m, 0), (m, q)).copy_from(&c_ak);
            ak_b = &self.a * ak_b;
            c_ak *= &self.a;
        }
        rank(&ctrb, RANK_TOL) == q && rank(&obsv, RANK_TOL) == q
    }
}

/// Serialized forms: full matrices, or the first-order shorthand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpaceLiteral {
    FirstOrder { first_order: FirstOrderParams },
    Full {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderParams {
    pub a: f64,
    pub b: f64,
}

/// Build a matrix from row vectors. `cols` fixes the width when `rows` is empty.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: Option<usize>) -> Result<Matrix> {
    let ncols = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), ncols, &data))
}

impl StateSpaceLiteral {
    pub fn build(&self) -> Result<StateSpace> {
        match self {
            Self::FirstOrder { first_order: p } => {
                if !(p.a > 0.0 && p.b > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "first_order needs a > 0 and b > 0, got a={}, b={}",
                        p.a, p.b
                    )));
                }
                Ok(StateSpace::first_order(p.a, p.b))
            }
            Self::Full { a, b, c, d } => StateSpace::new(
                matrix_from_rows(a, Some(0))?,
                matrix_from_rows(b, None)?,
                matrix_from_rows(c, Some(a.len()))?,
                matrix_from_rows(d, None)?,
            ),
        }
    }
}

/// Strictly increasing positive frequencies (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    points: Vec<f64>,
}

impl FreqGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty frequency grid".into()));
        }
        if points.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter(
                "frequencies must be finite and positive".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "frequencies must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidParameter("bad log-spaced grid bounds".into()));
        }
        let (l0, l1) = (lo.log10(), hi.log10());
        let step = (l1 - l0) / (count - 1) as f64;
        Self::new((0..count).map(|k| 10f64.powf(l0 + step * k as f64)).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

impl Default for FreqGrid {
    /// 400 log-spaced points over [1e-3, 1e4] rad/s.
    fn default() -> Self {
        Self::log_spaced(1e-3, 1e4, 400).expect("static grid is valid")
    }
}

pub fn is_hurwitz(sys: &StateSpace) -> bool {
    general_eigenvalues(&sys.a).iter().all(|z| z.re < 0.0)
}

/// `M(0) = -C A^{-1} B + D`.
pub fn dc_gain(sys: &StateSpace) -> Result<Matrix> {
    if sys.state_dim() == 0 {
        return Ok(sys.d.clone());
    }
    if !is_hurwitz(sys) {
        return Err(Error::NotHurwitz);
    }
    let lu = sys.a.clone().lu();
    let a_inv_b = lu.solve(&sys.b).ok_or(Error::NotHurwitz)?;
    Ok(&sys.d - &sys.c * a_inv_b)
}

/// `M(jw) = C (jwI - A)^{-1} B + D`.
pub fn freq_response(sys: &StateSpace, w: f64) -> Result<CMatrix> {
    let q = sys.state_dim();
    let d = to_complex(&sys.d);
    if q == 0 {
        return Ok(d);
    }
    let mut resolvent = to_complex(&sys.a).map(|z| -z);
    for i in 0..q {
        resolvent[(i, i)] += Complex::new(0.0, w);
    }
    let x = resolvent
        .lu()
        .solve(&to_complex(&sys.b))
        .ok_or(Error::SingularResolvent(w))?;
    Ok(to_complex(&sys.c) * x + d)
}

/// `M(jw) - M(inf)`.
pub fn strictly_proper_response(sys: &StateSpace, w: f64) -> Result<CMatrix> {
    Ok(freq_response(sys, w)? - to_complex(&sys.d))
}

fn min_eig(h: &CMatrix) -> f64 {
    hermitian_eigenvalues(h).first().copied().unwrap_or(0.0)
}

/// `j [M(jw) - M(jw)^*]` at one frequency.
pub fn ni_test_matrix(sys: &StateSpace, w: f64) -> Result<CMatrix> {
    let m = freq_response(sys, w)?;
    Ok((&m - m.adjoint()) * Complex::new(0.0, 1.0))
}

/// `jw [M - M^*] - 2 delta w^2 Mc^* Mc` with `Mc = M(jw) - D`.
pub fn osni_test_matrix(sys: &StateSpace, delta: f64, w: f64) -> Result<CMatrix> {
    let m = freq_response(sys, w)?;
    let mc = &m - to_complex(&sys.d);
    let lhs = (&m - m.adjoint()) * Complex::new(0.0, w);
    let rhs = mc.adjoint() * &mc * Complex::new(2.0 * delta * w * w, 0.0);
    Ok(lhs - rhs)
}

/// Stable-case NI frequency condition over the grid.
pub fn ni_freq_test(sys: &StateSpace, grid: &FreqGrid) -> Result<bool> {
    if sys.state_dim() > 0 && !is_hurwitz(sys) {
        return Err(Error::NotHurwitz);
    }
    for &w in grid.points() {
        if min_eig(&ni_test_matrix(sys, w)?) < PSD_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn osni_freq_test(sys: &StateSpace, delta: f64, grid: &FreqGrid) -> Result<bool> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if sys.state_dim() > 0 && !is_hurwitz(sys) {
        return Err(Error::NotHurwitz);
    }
    if !is_symmetric(&sys.d, 1e-12) {
        return Err(Error::InvalidParameter("OSNI test needs symmetric D".into()));
    }
    for &w in grid.points() {
        if min_eig(&osni_test_matrix(sys, delta, w)?) < PSD_TOL {
            return Ok(false);
        }
    }
    // w -> inf: the test matrix tends to zero, which satisfies the condition.
    Ok(true)
}

/// Largest strictness level passing [`osni_freq_test`], by doubling then bisection.
///
/// Returns `f64::INFINITY` when the test passes for every delta (e.g. a static gain).
pub fn osni_max_delta(sys: &StateSpace, grid: &FreqGrid) -> Result<f64> {
    if !ni_freq_test(sys, grid)? {
        return Err(Error::NotNi);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while osni_freq_test(sys, hi, grid)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > 0.1 * DELTA_TOL {
        let mid = 0.5 * (lo + hi);
        if osni_freq_test(sys, mid, grid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub y_positive_definite: bool,
    pub inequality_holds: bool,
    pub b_equation_holds: bool,
    /// Smallest eigenvalue of `Y`.
    pub y_min_eigenvalue: f64,
    /// Largest eigenvalue of `AY + YA^T + 2 delta (CAY)^T (CAY)`.
    pub inequality_residual: f64,
    /// `||B + A Y C^T||_inf`.
    pub b_equation_residual: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.y_positive_definite && self.inequality_holds && self.b_equation_holds
    }
}

/// Check a supplied certificate `Y` for the state-space OSNI conditions
/// `AY + YA^T + 2 delta (CAY)^T (CAY) <= 0` and `B = -A Y C^T`.
pub fn osni_certificate_check(sys: &StateSpace, y: &Matrix, delta: f64) -> Result<CertificateReport> {
    let q = sys.state_dim();
    if y.shape() != (q, q) {
        return Err(Error::Dimension(format!(
            "Y is {}x{}, expected {q}x{q}",
            y.nrows(),
            y.ncols()
        )));
    }
    if !is_symmetric(y, 1e-12) {
        return Err(Error::InvalidParameter("certificate Y must be symmetric".into()));
    }
    let ay = &sys.a * y;
    let cay = &sys.c * &ay;
    let lmi = &ay + ay.transpose() + cay.transpose() * &cay * (2.0 * delta);
    let inequality_residual = symmetric_eigenvalues(&lmi).last().copied().unwrap_or(0.0);
    let y_min_eigenvalue = symmetric_eigenvalues(y).first().copied().unwrap_or(f64::INFINITY);
    let b_equation_residual = inf_norm(&(&sys.b + &ay * sys.c.transpose()));
    Ok(CertificateReport {
        y_positive_definite: y_min_eigenvalue > 0.0,
        inequality_holds: inequality_residual <= CERT_TOL,
        b_equation_holds: b_equation_residual <= CERT_TOL,
        y_min_eigenvalue,
        inequality_residual,
        b_equation_residual,
    })
}

/// Analytic certificate `(Y, delta) = (a/b, 1/a)` for `M(s) = a/(s+b)`.
pub fn first_order_certificate(a: f64, b: f64) -> (Matrix, f64) {
    (Matrix::from_element(1, 1, a / b), 1.0 / a)
}

/// Output-mixed realisation of `L ⊗ M(s)`: `(I⊗A, I⊗B, L⊗C, L⊗D)`.
pub fn laplacian_kron_realization(laplacian: &Matrix, sys: &StateSpace) -> StateSpace {
    let n = laplacian.nrows();
    let eye = Matrix::identity(n, n);
    StateSpace {
        a: kron(&eye, &sys.a),
        b: kron(&eye, &sys.b),
        c: kron(laplacian, &sys.c),
        d: kron(laplacian, &sys.d),
    }
}
