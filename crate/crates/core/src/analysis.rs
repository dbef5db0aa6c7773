//! Post-hoc verification of dissipation inequalities along recorded trajectories.
//!
//! Every residual is `lhs - rhs` of an inequality `lhs <= rhs`; a check fails when
//! the largest residual exceeds its tolerance. Rates come from exact gradients and
//! the chain rule at the recorded states, never from differencing samples.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{dot, norm_sq};
use crate::network::{CompositeStorage, ControllerNetwork, Mode, Sample};
use crate::plant::StorageFunction;
use crate::sim::{integrate_states, IntegratorConfig, Trajectory};

/// Default one-sided tolerance for trajectory checks.
pub const CHECK_TOL: f64 = 1e-6;
/// Relative tolerance for the two-node algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// `max(0, largest residual)`.
    pub max_violation: f64,
    /// Instant (s) of the largest residual.
    pub time_of_max: f64,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Scalar the check computed, where there is one (e.g. a strictness level).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl CheckReport {
    pub fn from_residuals(name: impl Into<String>, times: &[f64], residuals: &[f64], tolerance: f64) -> Self {
        let mut worst = (f64::NEG_INFINITY, 0.0);
        let mut max_abs = 0.0_f64;
        for (t, r) in times.iter().zip(residuals) {
            if *r > worst.0 || r.is_nan() {
                worst = (*r, *t);
            }
            max_abs = max_abs.max(r.abs());
        }
        let max_violation = if worst.0.is_nan() { f64::INFINITY } else { worst.0.max(0.0) };
        Self {
            name: name.into(),
            max_violation,
            time_of_max: worst.1,
            max_abs_residual: max_abs,
            tolerance,
            pass: max_violation <= tolerance,
            value: None,
        }
    }

    /// A check that measures one violation value directly.
    pub fn single(name: impl Into<String>, violation: f64, tolerance: f64) -> Self {
        Self::from_residuals(name, &[0.0], &[violation], tolerance)
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.max_violation <= tolerance;
        self
    }
}

fn check_node(traj: &Trajectory, node: usize) -> Result<()> {
    if node >= traj.layout.nodes {
        return Err(Error::Dimension(format!(
            "node {node} out of range ({} nodes)",
            traj.layout.nodes
        )));
    }
    Ok(())
}

/// `dV/dt - uᵀy'` for plant `node`.
pub fn ni_dissipation_residuals(traj: &Trajectory, v: &dyn StorageFunction, node: usize) -> Result<Vec<f64>> {
    check_node(traj, node)?;
    let l = traj.layout;
    if v.dim() != l.plant_dim {
        return Err(Error::Dimension("storage does not match plant state".into()));
    }
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let r = l.plant_range(node);
            let vdot = v.rate(&s.state[r.clone()], &s.derivative[r]);
            let io = l.io_range(node);
            vdot - dot(&s.plant_inputs[io.clone()], &s.plant_output_rates[io])
        })
        .collect())
}

pub fn check_ni_dissipation(traj: &Trajectory, v: &dyn StorageFunction, node: usize) -> Result<CheckReport> {
    let r = ni_dissipation_residuals(traj, v, node)?;
    Ok(CheckReport::from_residuals(format!("ni_dissipation[{node}]"), &traj.times, &r, CHECK_TOL))
}

/// `dV/dt - uᵀy' + delta |y'|^2` for controller `node` (the second system in pair mode).
pub fn osni_dissipation_residuals(
    traj: &Trajectory,
    v: &dyn StorageFunction,
    delta: f64,
    node: usize,
) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    check_node(traj, node)?;
    let l = traj.layout;
    if v.dim() != l.ctrl_dim {
        return Err(Error::Dimension("storage does not match controller state".into()));
    }
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let r = l.ctrl_range(node);
            let vdot = v.rate(&s.state[r.clone()], &s.derivative[r]);
            let io = l.io_range(node);
            let ydot = &s.controller_output_rates[io.clone()];
            vdot - dot(&s.controller_inputs[io], ydot) + delta * norm_sq(ydot)
        })
        .collect())
}

pub fn check_osni_dissipation(
    traj: &Trajectory,
    v: &dyn StorageFunction,
    delta: f64,
    node: usize,
) -> Result<CheckReport> {
    let r = osni_dissipation_residuals(traj, v, delta, node)?;
    Ok(CheckReport::from_residuals(format!("osni_dissipation[{node}]"), &traj.times, &r, CHECK_TOL))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

/// `sum_{(i,j)} |Δy'_ij|^2` over undirected edges, on controller output rates.
pub fn edge_rate_energy(s: &Sample, g: &Graph, m: usize) -> f64 {
    g.edges()
        .iter()
        .map(|&(i, j)| {
            let yi = &s.controller_output_rates[i * m..(i + 1) * m];
            let yj = &s.controller_output_rates[j * m..(j + 1) * m];
            norm_sq(&diff(yi, yj))
        })
        .sum()
}

fn mixed(v: &[f64], g: &Graph, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for &(i, j) in g.edges() {
        for k in 0..m {
            let d = v[i * m + k] - v[j * m + k];
            out[i * m + k] += d;
            out[j * m + k] -= d;
        }
    }
    out
}

/// Edge-wise storage inequality for the controller network:
/// `d/dt sum_e V2(Δx_e) <= U2ᵀ (L⊗I) y_c' - delta sum_e |Δy'_e|^2`,
/// with sums over undirected edges (half of the ordered-pair sums).
pub fn osni_like_network_residuals(
    traj: &Trajectory,
    v2: &dyn StorageFunction,
    g: &Graph,
    delta: f64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let l = traj.layout;
    if g.node_count() != l.nodes || v2.dim() != l.ctrl_dim {
        return Err(Error::Dimension("graph or storage does not match the trajectory".into()));
    }
    let m = l.io_dim;
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let lhs: f64 = g
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let dx = diff(&s.state[l.ctrl_range(i)], &s.state[l.ctrl_range(j)]);
                    let dxdot = diff(&s.derivative[l.ctrl_range(i)], &s.derivative[l.ctrl_range(j)]);
                    v2.rate(&dx, &dxdot)
                })
                .sum();
            let supply = dot(&s.controller_inputs, &mixed(&s.controller_output_rates, g, m));
            lhs - (supply - delta * edge_rate_energy(s, g, m))
        })
        .collect())
}

pub fn check_osni_like_network(
    traj: &Trajectory,
    v2: &dyn StorageFunction,
    g: &Graph,
    delta: f64,
) -> Result<CheckReport> {
    let r = osni_like_network_residuals(traj, v2, g, delta)?;
    Ok(CheckReport::from_residuals("osni_like_network", &traj.times, &r, CHECK_TOL))
}

/// Residuals of `ũᵀỹ' = Δuᵀ Δy'` and `|ỹ'|^2 = 2 |Δy'|^2`, each scaled by the
/// magnitude of its terms.
pub fn pair_identity_residuals(u_tilde: &[f64], ydot_tilde: &[f64], du: &[f64], dydot: &[f64]) -> (f64, f64) {
    let a = dot(u_tilde, ydot_tilde);
    let b = dot(du, dydot);
    let c = norm_sq(ydot_tilde);
    let d = 2.0 * norm_sq(dydot);
    ((a - b).abs() / (1.0 + a.abs().max(b.abs())), (c - d).abs() / (1.0 + c.max(d)))
}

/// Two-node input/output difference identities along a network trajectory.
pub fn check_pair_identities(traj: &Trajectory) -> Result<CheckReport> {
    let l = traj.layout;
    if l.nodes != 2 {
        return Err(Error::InvalidParameter(format!(
            "pair identities need exactly 2 nodes, got {}",
            l.nodes
        )));
    }
    let g = Graph::new(2, [(0, 1)])?;
    let m = l.io_dim;
    let r: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| {
            let ydot_tilde = mixed(&s.controller_output_rates, &g, m);
            let du = diff(&s.controller_inputs[..m], &s.controller_inputs[m..]);
            let dy = diff(&s.controller_output_rates[..m], &s.controller_output_rates[m..]);
            let (r1, r2) = pair_identity_residuals(&s.controller_inputs, &ydot_tilde, &du, &dy);
            r1.max(r2)
        })
        .collect();
    Ok(CheckReport::from_residuals("pair_identities", &traj.times, &r, IDENTITY_TOL))
}

/// Series behind [`check_lyapunov_monotone`].
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub values: Vec<f64>,
    pub rates: Vec<f64>,
    /// `W(t_{k+1}) - W(t_k)`, one shorter than `values`.
    pub increments: Vec<f64>,
    /// `dW/dt + (delta/2) sum_{ordered pairs} |Δy'|^2`, i.e. `delta` times the
    /// undirected-edge sum. In pair mode the sum is `|y2'|^2`.
    pub rate_bound_residuals: Vec<f64>,
}

pub fn lyapunov_series(traj: &Trajectory, cs: &CompositeStorage, delta: f64) -> Result<LyapunovSeries> {
    if !(delta > 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let cl = cs.closed_loop();
    if cl.layout() != traj.layout {
        return Err(Error::Dimension("storage built for a different loop".into()));
    }
    let m = traj.layout.io_dim;
    let values: Vec<f64> = traj.samples.iter().map(|s| cs.value_from_sample(s)).collect();
    let rates: Vec<f64> = traj.samples.iter().map(|s| cs.rate(s)).collect();
    let strict: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| match (cl.mode(), cl.graph()) {
            (Mode::Network, Some(g)) => edge_rate_energy(s, g, m),
            _ => norm_sq(&s.controller_output_rates),
        })
        .collect();
    let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
    let rate_bound_residuals = rates.iter().zip(&strict).map(|(r, e)| r + delta * e).collect();
    Ok(LyapunovSeries { values, rates, increments, rate_bound_residuals })
}

/// `W` non-increasing between samples and `dW/dt <= -(delta/2) sum |Δy'_ij|^2`,
/// both to [`CHECK_TOL`].
pub fn check_lyapunov_monotone(traj: &Trajectory, cs: &CompositeStorage, delta: f64) -> Result<CheckReport> {
    let s = lyapunov_series(traj, cs, delta)?;
    let mono = CheckReport::from_residuals("w_increment", &traj.times[1..], &s.increments, CHECK_TOL);
    let bound = CheckReport::from_residuals("w_rate_bound", &traj.times, &s.rate_bound_residuals, CHECK_TOL);
    let worst = if mono.max_violation >= bound.max_violation { &mono } else { &bound };
    Ok(CheckReport {
        name: "lyapunov_monotone".into(),
        max_violation: worst.max_violation,
        time_of_max: worst.time_of_max,
        max_abs_residual: mono.max_abs_residual.max(bound.max_abs_residual),
        tolerance: CHECK_TOL,
        pass: mono.pass && bound.pass,
        value: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusPoint {
    pub edge_max: f64,
    pub all_pairs_max: f64,
}

/// Largest output disagreement across edges and across all node pairs.
pub fn consensus_point(outputs: &[f64], g: &Graph, m: usize) -> ConsensusPoint {
    let dist = |i: usize, j: usize| norm_sq(&diff(&outputs[i * m..(i + 1) * m], &outputs[j * m..(j + 1) * m])).sqrt();
    let edge_max = g.edges().iter().map(|&(i, j)| dist(i, j)).fold(0.0, f64::max);
    let n = g.node_count();
    let mut all_pairs_max = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            all_pairs_max = all_pairs_max.max(dist(i, j));
        }
    }
    ConsensusPoint { edge_max, all_pairs_max }
}

pub fn consensus_metric(traj: &Trajectory, g: &Graph) -> Vec<ConsensusPoint> {
    traj.samples
        .iter()
        .map(|s| consensus_point(&s.plant_outputs, g, traj.layout.io_dim))
        .collect()
}

/// Which of the two consensus outcomes the run ended in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    /// Every plant state is within tolerance of zero.
    StatesToZero,
    /// Outputs agree but plants are not at rest at the origin.
    OutputConsensus,
    NotReached,
}

pub fn consensus_outcome(traj: &Trajectory, g: &Graph, tol: f64) -> ConsensusOutcome {
    let last = traj.last();
    let l = traj.layout;
    let plant_max = last.state[..l.ctrl_offset()].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if plant_max <= tol {
        ConsensusOutcome::StatesToZero
    } else if consensus_point(&last.plant_outputs, g, l.io_dim).all_pairs_max <= tol {
        ConsensusOutcome::OutputConsensus
    } else {
        ConsensusOutcome::NotReached
    }
}

/// Simulate the controller network under a constant input until transients have
/// decayed and compare the output with `[L ⊗ M(0)] ū`.
pub fn check_steady_state_relation(net: &ControllerNetwork, u2bar: &[f64]) -> Result<CheckReport> {
    let expected = &net.dc_map()?.matrix * nalgebra::DVector::from_column_slice(u2bar);
    let eig = crate::linalg::general_eigenvalues(&net.node_controller().a);
    let slowest = eig.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
    let fastest = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let outputs = if eig.is_empty() {
        net.outputs(&[], u2bar)
    } else {
        if !(slowest > 0.0) {
            return Err(Error::NotHurwitz);
        }
        let step = (0.1 / fastest).min(1e-3);
        let horizon = 40.0 / slowest;
        let steps = (horizon / step).ceil();
        let cfg = IntegratorConfig::new(step, steps * step, usize::MAX)?;
        let sys = net.driven_by(u2bar.to_vec());
        let hist = integrate_states(&sys, &vec![0.0; net.state_dim()], &cfg)?;
        net.outputs(hist.states.last().expect("non-empty"), u2bar)
    };
    let err = outputs
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CheckReport::single("steady_state_relation", err, CHECK_TOL).with_value(err))
}

/// Largest `max|x'| / max|y'|` over windows of `window` samples for plant `node`.
///
/// A finite, moderate value is the trajectory-level evidence that output rest
/// implies state rest.
pub fn output_state_rate_gain(traj: &Trajectory, node: usize, window: usize) -> Result<f64> {
    check_node(traj, node)?;
    let l = traj.layout;
    let window = window.max(1);
    let mut k_max = 0.0_f64;
    for chunk in traj.samples.chunks(window) {
        let xmax = chunk
            .iter()
            .flat_map(|s| s.derivative[l.plant_range(node)].iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let ymax = chunk
            .iter()
            .flat_map(|s| s.plant_output_rates[l.io_range(node)].iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        if ymax > 0.0 {
            k_max = k_max.max(xmax / ymax);
        } else if xmax > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(k_max)
}
