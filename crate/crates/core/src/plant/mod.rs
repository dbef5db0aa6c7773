//! Nonlinear plants `x' = f(x, u)`, `y = h(x)`, storage functions and supply rates.

mod models;
mod pendulum;
pub mod registry;

use std::fmt::Debug;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, Matrix};
use crate::linsys::{dc_gain, StateSpace};

pub use models::{LinearPlant, NullOutputPlant, QuadraticStorage};
pub use pendulum::{Pendulum, PendulumParams, PendulumStorage};

/// A square nonlinear system without direct feedthrough.
///
/// Implementations must be pure: every method may be called concurrently.
pub trait NonlinearPlant: Debug + Send + Sync {
    /// State dimension `p`.
    fn state_dim(&self) -> usize;
    /// Input and output dimension `m`.
    fn io_dim(&self) -> usize;
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, x: &[f64], y: &mut [f64]);
    /// Exact `m x p` Jacobian of the output map, if available.
    fn output_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// Positive definite storage function with an exact gradient.
pub trait StorageFunction: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }

    /// `dV/dt = grad V(x) . x'`.
    fn rate(&self, x: &[f64], xdot: &[f64]) -> f64 {
        dot(&self.gradient_vec(x), xdot)
    }
}

pub fn pendulum_plant(params: PendulumParams) -> Pendulum {
    Pendulum::new(params)
}

pub fn pendulum_storage(params: PendulumParams) -> PendulumStorage {
    PendulumStorage::new(params)
}

/// `V(x) = (b / 2a) x^2` for the first-order controller `a / (s + b)`.
pub fn controller_storage(a: f64, b: f64) -> Result<QuadraticStorage> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "controller storage needs a, b > 0 (a={a}, b={b})"
        )));
    }
    Ok(QuadraticStorage::new(Matrix::from_element(1, 1, b / a)))
}

pub fn evaluate_dynamics(plant: &dyn NonlinearPlant, x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; plant.state_dim()];
    plant.dynamics(x, u, &mut dx);
    dx
}

pub fn evaluate_output(plant: &dyn NonlinearPlant, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; plant.io_dim()];
    plant.output(x, &mut y);
    y
}

/// `y' = dh(x) x'` given the state derivative.
///
/// Without an exact Jacobian this falls back to a central difference of `h`
/// along `x'`, which is accurate to O(eps^2) only.
pub fn output_rate_from_derivative(plant: &dyn NonlinearPlant, x: &[f64], xdot: &[f64]) -> Vec<f64> {
    if let Some(jac) = plant.output_jacobian(x) {
        let mut ydot = vec![0.0; plant.io_dim()];
        for (i, out) in ydot.iter_mut().enumerate() {
            *out = jac.row(i).iter().zip(xdot).map(|(a, b)| a * b).sum();
        }
        return ydot;
    }
    let scale = xdot.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return vec![0.0; plant.io_dim()];
    }
    let eps = 1e-6 / scale;
    let xp: Vec<f64> = x.iter().zip(xdot).map(|(a, b)| a + eps * b).collect();
    let xm: Vec<f64> = x.iter().zip(xdot).map(|(a, b)| a - eps * b).collect();
    let yp = evaluate_output(plant, &xp);
    let ym = evaluate_output(plant, &xm);
    yp.iter().zip(&ym).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

/// `y' = dh(x) f(x, u)`.
pub fn output_rate(plant: &dyn NonlinearPlant, x: &[f64], u: &[f64]) -> Vec<f64> {
    let dx = evaluate_dynamics(plant, x, u);
    output_rate_from_derivative(plant, x, &dx)
}

/// Negative-imaginary supply rate `u^T y'`.
pub fn supply_ni(u: &[f64], ydot: &[f64]) -> Result<f64> {
    if u.len() != ydot.len() {
        return Err(Error::Dimension(format!(
            "input has {} entries, output rate {}",
            u.len(),
            ydot.len()
        )));
    }
    Ok(dot(u, ydot))
}

/// Output-strict supply rate `u^T y' - delta |y'|^2`.
pub fn supply_osni(u: &[f64], ydot: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    Ok(supply_ni(u, ydot)? - delta * norm_sq(ydot))
}

const EQ_RESIDUAL_TOL: f64 = 1e-10;
const EQ_MAX_ITER: usize = 100;

fn inf_norm_vec(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Forward-difference Jacobian of `f(., u)` with step `1e-7 (1 + |x_j|)`.
fn state_jacobian(plant: &dyn NonlinearPlant, x: &[f64], u: &[f64], fx: &[f64]) -> Matrix {
    let p = plant.state_dim();
    let mut jac = Matrix::zeros(p, p);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; p];
    for j in 0..p {
        let h = 1e-7 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        plant.dynamics(&xp, u, &mut fp);
        for i in 0..p {
            jac[(i, j)] = (fp[i] - fx[i]) / h;
        }
        xp[j] = x[j];
    }
    jac
}

/// Newton iteration on `f(x, ubar) = 0` from `x0`, with step halving when a full
/// step would increase the residual.
pub fn equilibrium_solve(plant: &dyn NonlinearPlant, ubar: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    let p = plant.state_dim();
    if x0.len() != p || ubar.len() != plant.io_dim() {
        return Err(Error::Dimension("equilibrium guess or input has wrong size".into()));
    }
    let mut x = x0.to_vec();
    let mut fx = evaluate_dynamics(plant, &x, ubar);
    let mut res = inf_norm_vec(&fx);
    for _ in 0..EQ_MAX_ITER {
        if res < EQ_RESIDUAL_TOL {
            return Ok(x);
        }
        let jac = state_jacobian(plant, &x, ubar, &fx);
        let rhs = nalgebra::DVector::from_column_slice(&fx);
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
            let ft = evaluate_dynamics(plant, &trial, ubar);
            let rt = inf_norm_vec(&ft);
            if rt < res || lambda < 1e-4 {
                x = trial;
                fx = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res < EQ_RESIDUAL_TOL {
        Ok(x)
    } else {
        Err(Error::NoEquilibrium { residual: res })
    }
}

/// Equilibrium for `ubar` by continuation from the zero-input equilibrium,
/// ramping the input in `steps` increments.
pub fn equilibrium_continuation(plant: &dyn NonlinearPlant, ubar: &[f64], steps: usize) -> Result<Vec<f64>> {
    let zero_u = vec![0.0; plant.io_dim()];
    let mut x = equilibrium_solve(plant, &zero_u, &vec![0.0; plant.state_dim()])?;
    let steps = steps.max(1);
    for k in 1..=steps {
        let s = k as f64 / steps as f64;
        let u: Vec<f64> = ubar.iter().map(|v| v * s).collect();
        x = equilibrium_solve(plant, &u, &x)?;
    }
    Ok(x)
}

/// Steady-state map from stacked plant outputs to the controller output fed back
/// to the plants: `M(0)` for a single pair, `L ⊗ M(0)` for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct DcMap {
    pub matrix: Matrix,
    pub nodes: usize,
}

impl DcMap {
    pub fn pair(controller: &StateSpace) -> Result<Self> {
        Ok(Self { matrix: dc_gain(controller)?, nodes: 1 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    /// Largest `U^T Y2 / |U|^2` over the inputs.
    pub gamma_hat: f64,
    pub argmax: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Empirical DC-loop gain bound: for every constant plant input, solve the plant
/// equilibria per node, map the outputs through `dc`, and take the largest
/// `U^T Y2 / |U|^2`.
pub fn gamma_estimate(plant: &dyn NonlinearPlant, dc: &DcMap, inputs: &[Vec<f64>]) -> Result<GammaReport> {
    let m = plant.io_dim();
    let width = m * dc.nodes;
    if dc.matrix.shape() != (width, width) {
        return Err(Error::Dimension(format!(
            "dc map is {}x{}, expected {width}x{width}",
            dc.matrix.nrows(),
            dc.matrix.ncols()
        )));
    }
    let mut ratios = Vec::with_capacity(inputs.len());
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut y = vec![0.0; m];
    for input in inputs {
        if input.len() != width {
            return Err(Error::Dimension(format!(
                "constant input has {} entries, expected {width}",
                input.len()
            )));
        }
        let norm2 = norm_sq(input);
        if norm2 == 0.0 {
            return Err(Error::InvalidParameter("gamma inputs must be nonzero".into()));
        }
        let mut y1 = Vec::with_capacity(width);
        for node in input.chunks(m) {
            let x = equilibrium_continuation(plant, node, 16)
                .map_err(|_| Error::EquilibriumFailure { input: input.clone() })?;
            plant.output(&x, &mut y);
            y1.extend_from_slice(&y);
        }
        let y2 = &dc.matrix * nalgebra::DVector::from_vec(y1);
        let ratio = dot(input, y2.as_slice()) / norm2;
        if ratio > best.0 {
            best = (ratio, input.clone());
        }
        ratios.push(ratio);
    }
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("gamma grid is empty".into()));
    }
    Ok(GammaReport { gamma_hat: best.0, argmax: best.1, ratios })
}

/// `count` evenly spaced scalar inputs over `[lo, hi]`, with exact zero dropped.
pub fn scalar_input_grid(lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
    (0..count)
        .map(|k| lo + step * k as f64)
        .filter(|u| *u != 0.0)
        .map(|u| vec![u])
        .collect()
}
