use serde::{Deserialize, Serialize};

use super::{NonlinearPlant, StorageFunction};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Torsion-spring pendulum parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    #[serde(rename = "m")]
    pub m_kg: f64,
    #[serde(rename = "l")]
    pub l_m: f64,
    pub kappa: f64,
    #[serde(rename = "g")]
    pub g_ms2: f64,
}

impl Default for PendulumParams {
    /// 1 kg bob, 0.5 m rod, 5 N·m/rad spring, g = 9.8.
    fn default() -> Self {
        Self { m_kg: 1.0, l_m: 0.5, kappa: 5.0, g_ms2: 9.8 }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m_kg, self.l_m, self.kappa, self.g_ms2];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "pendulum parameters must be positive: {self:?}"
            )))
        }
    }

    /// `m l^2`.
    pub fn inertia(&self) -> f64 {
        self.m_kg * self.l_m * self.l_m
    }

    /// `m g l`.
    pub fn gravity_torque(&self) -> f64 {
        self.m_kg * self.g_ms2 * self.l_m
    }
}

/// State `(angle, angular velocity)`, input torque, output angle.
#[derive(Debug, Clone, Copy)]
pub struct Pendulum {
    params: PendulumParams,
    inertia: f64,
    mgl: f64,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params, inertia: params.inertia(), mgl: params.gravity_torque() }
    }

    pub fn params(&self) -> PendulumParams {
        self.params
    }
}

impl NonlinearPlant for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn io_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = (-self.params.kappa * x[0] - self.mgl * x[0].sin() + u[0]) / self.inertia;
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }

    fn output_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_row_slice(1, 2, &[1.0, 0.0]))
    }
}

/// Spring + kinetic + gravitational energy:
/// `½κθ² + ½ml²ω² + mgl(1 - cos θ)`.
#[derive(Debug, Clone, Copy)]
pub struct PendulumStorage {
    kappa: f64,
    inertia: f64,
    mgl: f64,
}

impl PendulumStorage {
    pub fn new(params: PendulumParams) -> Self {
        Self { kappa: params.kappa, inertia: params.inertia(), mgl: params.gravity_torque() }
    }

    /// Same energy with the kinetic term scaled; used to inject faults in checks.
    pub fn with_kinetic_scale(mut self, scale: f64) -> Self {
        self.inertia *= scale;
        self
    }
}

impl StorageFunction for PendulumStorage {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.kappa * x[0] * x[0]
            + 0.5 * self.inertia * x[1] * x[1]
            + self.mgl * (1.0 - x[0].cos())
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = self.kappa * x[0] + self.mgl * x[0].sin();
        grad[1] = self.inertia * x[1];
    }
}
