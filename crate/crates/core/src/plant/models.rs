use super::{NonlinearPlant, StorageFunction};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::linsys::StateSpace;

/// A strictly proper linear system viewed as a plant (`y = Cx`).
#[derive(Debug, Clone)]
pub struct LinearPlant {
    sys: StateSpace,
}

impl LinearPlant {
    pub fn new(sys: StateSpace) -> Result<Self> {
        if sys.d.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter(
                "plants have no feedthrough: D must be zero".into(),
            ));
        }
        Ok(Self { sys })
    }

    pub fn system(&self) -> &StateSpace {
        &self.sys
    }
}

impl NonlinearPlant for LinearPlant {
    fn state_dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn io_dim(&self) -> usize {
        self.sys.io_dim()
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let (a, b) = (&self.sys.a, &self.sys.b);
        for (i, out) in dx.iter_mut().enumerate() {
            let ax: f64 = a.row(i).iter().zip(x).map(|(p, q)| p * q).sum();
            let bu: f64 = b.row(i).iter().zip(u).map(|(p, q)| p * q).sum();
            *out = ax + bu;
        }
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.sys.c.row(i).iter().zip(x).map(|(p, q)| p * q).sum();
        }
    }

    fn output_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        Some(self.sys.c.clone())
    }
}

/// `x' = -x + u`, `y = 0`: every equilibrium has zero output.
#[derive(Debug, Clone, Copy)]
pub struct NullOutputPlant {
    dim: usize,
}

impl NullOutputPlant {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl NonlinearPlant for NullOutputPlant {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn io_dim(&self) -> usize {
        self.dim
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for i in 0..self.dim {
            dx[i] = -x[i] + u[i];
        }
    }

    fn output(&self, _x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
    }

    fn output_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(self.dim, self.dim))
    }
}

/// `V(x) = ½ xᵀ P x` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticStorage {
    p: Matrix,
}

impl QuadraticStorage {
    pub fn new(p: Matrix) -> Self {
        let p = (&p + p.transpose()) * 0.5;
        Self { p }
    }

    /// `V(x) = ½ xᵀ Y⁻¹ x` for a state-space OSNI certificate `Y`.
    pub fn from_certificate(y: &Matrix) -> Result<Self> {
        if symmetric_eigenvalues(y).first().is_none_or(|v| *v <= 0.0) {
            return Err(Error::InvalidParameter("certificate Y must be positive definite".into()));
        }
        let inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("certificate Y is singular".into()))?;
        Ok(Self::new(inv))
    }

    pub fn weight(&self) -> &Matrix {
        &self.p
    }
}

impl StorageFunction for QuadraticStorage {
    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += x[i] * self.p[(i, j)] * x[j];
            }
        }
        0.5 * acc
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.p.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}
