//! Closed-loop interconnections: a single plant/controller pair in positive
//! feedback, and `n` identical plants driven through a Laplacian-mixed network
//! of identical linear controllers.

mod storage;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{is_connected, laplacian, Graph};
use crate::linalg::{kron, Matrix};
use crate::linsys::{dc_gain, is_hurwitz, laplacian_kron_realization, StateSpace};
use crate::plant::{output_rate_from_derivative, DcMap, NonlinearPlant};
use crate::sim::Dynamics;

pub use storage::{composite_storage, halton, storage_positivity_scan, CompositeStorage, PositivityReport, Region};

/// `n` copies of a linear controller whose outputs are mixed by the graph Laplacian.
///
/// Controller `i` integrates `x_i' = A x_i + B u_i` on its own input; the network
/// output is `(Y2)_i = sum_j a_ij (C x_i - C x_j)` plus the same mixing of `D u`.
/// Transfer-wise this is `L ⊗ M(s)`, and edge differences `Δx_ij` evolve as a copy
/// of `M(s)` driven by `Δu_ij`.
#[derive(Debug, Clone)]
pub struct ControllerNetwork {
    node: StateSpace,
    graph: Graph,
    laplacian: Matrix,
}

pub fn build_controller_network(m_sys: &StateSpace, g: &Graph) -> Result<ControllerNetwork> {
    if m_sys.state_dim() > 0 && !is_hurwitz(m_sys) {
        return Err(Error::NotHurwitz);
    }
    if !is_connected(g) {
        log::warn!("controller network built on a disconnected graph");
    }
    Ok(ControllerNetwork { node: m_sys.clone(), graph: g.clone(), laplacian: laplacian(g) })
}

impl ControllerNetwork {
    pub fn node_controller(&self) -> &StateSpace {
        &self.node
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    pub fn nodes(&self) -> usize {
        self.graph.node_count()
    }

    pub fn io_dim(&self) -> usize {
        self.node.io_dim()
    }

    pub fn node_state_dim(&self) -> usize {
        self.node.state_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.nodes() * self.node_state_dim()
    }

    /// `(L ⊗ I_m) v` computed edge by edge.
    pub fn mix(&self, v: &[f64]) -> Vec<f64> {
        let m = self.io_dim();
        let mut out = vec![0.0; v.len()];
        for &(i, j) in self.graph.edges() {
            for k in 0..m {
                let diff = v[i * m + k] - v[j * m + k];
                out[i * m + k] += diff;
                out[j * m + k] -= diff;
            }
        }
        out
    }

    /// Per-node `C x_i` (the controllers' own outputs, before mixing and without `D u`).
    pub fn local_outputs(&self, xc: &[f64]) -> Vec<f64> {
        let (q, m) = (self.node_state_dim(), self.io_dim());
        let mut y = vec![0.0; self.nodes() * m];
        for i in 0..self.nodes() {
            let xi = &xc[i * q..(i + 1) * q];
            for r in 0..m {
                y[i * m + r] = self.node.c.row(r).iter().zip(xi).map(|(a, b)| a * b).sum();
            }
        }
        y
    }

    fn feedthrough(&self, u: &[f64]) -> Vec<f64> {
        let m = self.io_dim();
        let mut out = vec![0.0; u.len()];
        for i in 0..self.nodes() {
            for r in 0..m {
                out[i * m + r] = (0..m).map(|c| self.node.d[(r, c)] * u[i * m + c]).sum();
            }
        }
        out
    }

    /// Network output `Y2 = (L ⊗ I)(C x + D u)`.
    pub fn outputs(&self, xc: &[f64], u: &[f64]) -> Vec<f64> {
        let mut local = self.local_outputs(xc);
        for (l, d) in local.iter_mut().zip(self.feedthrough(u)) {
            *l += d;
        }
        self.mix(&local)
    }

    pub fn state_derivative(&self, xc: &[f64], u: &[f64], dxc: &mut [f64]) {
        let (q, m) = (self.node_state_dim(), self.io_dim());
        for i in 0..self.nodes() {
            let xi = &xc[i * q..(i + 1) * q];
            let ui = &u[i * m..(i + 1) * m];
            for r in 0..q {
                let ax: f64 = self.node.a.row(r).iter().zip(xi).map(|(a, b)| a * b).sum();
                let bu: f64 = self.node.b.row(r).iter().zip(ui).map(|(a, b)| a * b).sum();
                dxc[i * q + r] = ax + bu;
            }
        }
    }

    /// Equivalent single state-space system for the whole network.
    pub fn realization(&self) -> StateSpace {
        laplacian_kron_realization(&self.laplacian, &self.node)
    }

    /// `L ⊗ M(0)`.
    pub fn dc_map(&self) -> Result<DcMap> {
        Ok(DcMap { matrix: kron(&self.laplacian, &dc_gain(&self.node)?), nodes: self.nodes() })
    }

    /// Steady-state output for a constant input, by solving `A x_i = -B u_i` per node.
    pub fn steady_state_output(&self, ubar: &[f64]) -> Result<Vec<f64>> {
        let (q, m) = (self.node_state_dim(), self.io_dim());
        if ubar.len() != self.nodes() * m {
            return Err(Error::Dimension("constant input has wrong size".into()));
        }
        let lu = self.node.a.clone().lu();
        let mut xc = vec![0.0; self.state_dim()];
        for i in 0..self.nodes() {
            let ui = nalgebra::DVector::from_column_slice(&ubar[i * m..(i + 1) * m]);
            let rhs = -(&self.node.b * ui);
            let xi = if q == 0 { rhs.clone() } else { lu.solve(&rhs).ok_or(Error::NotHurwitz)? };
            xc[i * q..(i + 1) * q].copy_from_slice(xi.as_slice());
        }
        Ok(self.outputs(&xc, ubar))
    }

    /// The network driven by a fixed input, as an autonomous system on controller states.
    pub fn driven_by(&self, input: Vec<f64>) -> DrivenNetwork<'_> {
        DrivenNetwork { net: self, input }
    }
}

/// Controller network with a constant input, for open-loop simulation.
#[derive(Debug)]
pub struct DrivenNetwork<'a> {
    net: &'a ControllerNetwork,
    input: Vec<f64>,
}

impl Dynamics for DrivenNetwork<'_> {
    fn dim(&self) -> usize {
        self.net.state_dim()
    }

    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        self.net.state_derivative(x, &self.input, dx);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pair,
    Network,
}

/// Dimensions of the composite state `[x_plant_1 .. x_plant_n | x_ctrl_1 .. x_ctrl_n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub nodes: usize,
    pub plant_dim: usize,
    pub ctrl_dim: usize,
    pub io_dim: usize,
}

impl StateLayout {
    pub fn total(&self) -> usize {
        self.nodes * (self.plant_dim + self.ctrl_dim)
    }

    pub fn plant_range(&self, node: usize) -> std::ops::Range<usize> {
        node * self.plant_dim..(node + 1) * self.plant_dim
    }

    pub fn ctrl_offset(&self) -> usize {
        self.nodes * self.plant_dim
    }

    pub fn ctrl_range(&self, node: usize) -> std::ops::Range<usize> {
        let o = self.ctrl_offset();
        o + node * self.ctrl_dim..o + (node + 1) * self.ctrl_dim
    }

    pub fn io_range(&self, node: usize) -> std::ops::Range<usize> {
        node * self.io_dim..(node + 1) * self.io_dim
    }

    /// Stacks per-node plant and controller states.
    pub fn compose(&self, plants: &[Vec<f64>], ctrls: &[Vec<f64>]) -> Result<Vec<f64>> {
        if plants.len() != self.nodes || ctrls.len() != self.nodes {
            return Err(Error::Dimension(format!(
                "expected initial states for {} nodes",
                self.nodes
            )));
        }
        let mut x = Vec::with_capacity(self.total());
        for p in plants {
            if p.len() != self.plant_dim {
                return Err(Error::Dimension(format!(
                    "plant state has {} entries, expected {}",
                    p.len(),
                    self.plant_dim
                )));
            }
            x.extend_from_slice(p);
        }
        for c in ctrls {
            if c.len() != self.ctrl_dim {
                return Err(Error::Dimension(format!(
                    "controller state has {} entries, expected {}",
                    c.len(),
                    self.ctrl_dim
                )));
            }
            x.extend_from_slice(c);
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
enum Loop {
    Pair { h1: Arc<dyn NonlinearPlant>, h2: Arc<dyn NonlinearPlant> },
    Network { plant: Arc<dyn NonlinearPlant>, net: ControllerNetwork },
}

/// Every signal of the loop at one composite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub derivative: Vec<f64>,
    /// `U1`, the plant inputs.
    pub plant_inputs: Vec<f64>,
    /// `Y1`, the plant outputs.
    pub plant_outputs: Vec<f64>,
    pub plant_output_rates: Vec<f64>,
    /// `U2 = Y1`.
    pub controller_inputs: Vec<f64>,
    /// Per-node controller outputs without feedthrough (`C x_i`, or `h2(x2)` for a pair).
    pub controller_outputs: Vec<f64>,
    pub controller_output_rates: Vec<f64>,
    /// `Y2`, what is fed back to the plants.
    pub network_outputs: Vec<f64>,
    pub network_output_rates: Vec<f64>,
}

/// Positive-feedback closed loop (`u1 = y2`, `u2 = y1`).
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    inner: Loop,
    layout: StateLayout,
    feedback_sign: f64,
}

pub fn pair_interconnect(h1: Arc<dyn NonlinearPlant>, h2: Arc<dyn NonlinearPlant>) -> Result<ClosedLoop> {
    if h1.io_dim() != h2.io_dim() {
        return Err(Error::Dimension(format!(
            "pair outputs/inputs differ: {} vs {}",
            h1.io_dim(),
            h2.io_dim()
        )));
    }
    let layout = StateLayout {
        nodes: 1,
        plant_dim: h1.state_dim(),
        ctrl_dim: h2.state_dim(),
        io_dim: h1.io_dim(),
    };
    Ok(ClosedLoop { inner: Loop::Pair { h1, h2 }, layout, feedback_sign: 1.0 })
}

pub fn network_interconnect(plant: Arc<dyn NonlinearPlant>, net: &ControllerNetwork) -> Result<ClosedLoop> {
    if !is_connected(net.graph()) {
        return Err(Error::Disconnected);
    }
    if plant.io_dim() != net.io_dim() {
        return Err(Error::Dimension(format!(
            "plant io dim {} but controller io dim {}",
            plant.io_dim(),
            net.io_dim()
        )));
    }
    let layout = StateLayout {
        nodes: net.nodes(),
        plant_dim: plant.state_dim(),
        ctrl_dim: net.node_state_dim(),
        io_dim: plant.io_dim(),
    };
    Ok(ClosedLoop { inner: Loop::Network { plant, net: net.clone() }, layout, feedback_sign: 1.0 })
}

impl ClosedLoop {
    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn mode(&self) -> Mode {
        match self.inner {
            Loop::Pair { .. } => Mode::Pair,
            Loop::Network { .. } => Mode::Network,
        }
    }

    pub fn graph(&self) -> Option<&Graph> {
        match &self.inner {
            Loop::Pair { .. } => None,
            Loop::Network { net, .. } => Some(net.graph()),
        }
    }

    pub fn controller_network(&self) -> Option<&ControllerNetwork> {
        match &self.inner {
            Loop::Pair { .. } => None,
            Loop::Network { net, .. } => Some(net),
        }
    }

    /// The (first) plant and the pair's second system, if in pair mode.
    pub fn plant(&self) -> &Arc<dyn NonlinearPlant> {
        match &self.inner {
            Loop::Pair { h1, .. } => h1,
            Loop::Network { plant, .. } => plant,
        }
    }

    /// Flip the sign of the plant input, turning the loop into negative feedback.
    /// Only useful for exercising the checks against a broken loop.
    pub fn with_feedback_sign(mut self, sign: f64) -> Self {
        self.feedback_sign = sign;
        self
    }

    /// Evaluate every loop signal at composite state `x`.
    pub fn sample(&self, x: &[f64]) -> Sample {
        let l = self.layout;
        let mut dx = vec![0.0; l.total()];
        let (xp, xc) = x.split_at(l.ctrl_offset());
        let mut y1 = vec![0.0; l.nodes * l.io_dim];
        let mut buf = vec![0.0; l.io_dim];
        let plant = self.plant();
        for i in 0..l.nodes {
            plant.output(&xp[l.plant_range(i)], &mut buf);
            y1[l.io_range(i)].copy_from_slice(&buf);
        }
        let u2 = y1.clone();

        let (y_local, y2) = match &self.inner {
            Loop::Pair { h2, .. } => {
                let mut y = vec![0.0; l.io_dim];
                h2.output(xc, &mut y);
                (y.clone(), y)
            }
            Loop::Network { net, .. } => (net.local_outputs(xc), net.outputs(xc, &u2)),
        };
        let u1: Vec<f64> = y2.iter().map(|v| self.feedback_sign * v).collect();

        for i in 0..l.nodes {
            let r = l.plant_range(i);
            plant.dynamics(&xp[r.clone()], &u1[l.io_range(i)], &mut dx[r]);
        }
        let off = l.ctrl_offset();
        match &self.inner {
            Loop::Pair { h2, .. } => h2.dynamics(xc, &u2, &mut dx[off..]),
            Loop::Network { net, .. } => net.state_derivative(xc, &u2, &mut dx[off..]),
        }

        let mut y1dot = Vec::with_capacity(y1.len());
        for i in 0..l.nodes {
            let r = l.plant_range(i);
            y1dot.extend(output_rate_from_derivative(plant.as_ref(), &xp[r.clone()], &dx[r]));
        }
        let (ylocal_dot, y2dot) = match &self.inner {
            Loop::Pair { h2, .. } => {
                let r = output_rate_from_derivative(h2.as_ref(), xc, &dx[off..]);
                (r.clone(), r)
            }
            Loop::Network { net, .. } => {
                let local = net.local_outputs(&dx[off..]);
                let mut with_d = local.clone();
                for (w, d) in with_d.iter_mut().zip(net.feedthrough(&y1dot)) {
                    *w += d;
                }
                (local, net.mix(&with_d))
            }
        };

        Sample {
            state: x.to_vec(),
            derivative: dx,
            plant_inputs: u1,
            plant_outputs: y1,
            plant_output_rates: y1dot,
            controller_inputs: u2,
            controller_outputs: y_local,
            controller_output_rates: ylocal_dot,
            network_outputs: y2,
            network_output_rates: y2dot,
        }
    }
}

impl Dynamics for ClosedLoop {
    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let l = self.layout;
        let (xp, xc) = x.split_at(l.ctrl_offset());
        let plant = self.plant();
        let mut y1 = vec![0.0; l.nodes * l.io_dim];
        for i in 0..l.nodes {
            plant.output(&xp[l.plant_range(i)], &mut y1[l.io_range(i)]);
        }
        let (dxp, dxc) = dx.split_at_mut(l.ctrl_offset());
        let y2 = match &self.inner {
            Loop::Pair { h2, .. } => {
                let mut y = vec![0.0; l.io_dim];
                h2.output(xc, &mut y);
                h2.dynamics(xc, &y1, dxc);
                y
            }
            Loop::Network { net, .. } => {
                net.state_derivative(xc, &y1, dxc);
                net.outputs(xc, &y1)
            }
        };
        let mut u = vec![0.0; l.io_dim];
        for i in 0..l.nodes {
            for (k, v) in u.iter_mut().enumerate() {
                *v = self.feedback_sign * y2[i * l.io_dim + k];
            }
            let r = l.plant_range(i);
            plant.dynamics(&xp[r.clone()], &u, &mut dxp[r]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{LinearPlant, Pendulum, PendulumParams};

    fn pendulum() -> Arc<dyn NonlinearPlant> {
        Arc::new(Pendulum::new(PendulumParams::default()))
    }

    fn controller() -> StateSpace {
        StateSpace::first_order(10.0, 10.0)
    }

    #[test]
    fn pair_layout_and_signals() {
        let h2: Arc<dyn NonlinearPlant> = Arc::new(LinearPlant::new(controller()).unwrap());
        let cl = pair_interconnect(pendulum(), h2).unwrap();
        assert_eq!(cl.dim(), 3);
        let s = cl.sample(&[0.3, -0.2, 0.7]);
        assert_eq!(s.plant_inputs, vec![0.7]);
        assert_eq!(s.controller_inputs, vec![0.3]);
        assert!((s.derivative[2] - (-10.0 * 0.7 + 10.0 * 0.3)).abs() < 1e-15);

        let s0 = cl.sample(&[0.0; 3]);
        assert!(s0.derivative.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pair_rejects_dimension_mismatch() {
        let h2: Arc<dyn NonlinearPlant> = Arc::new(crate::plant::NullOutputPlant::new(2));
        assert!(pair_interconnect(pendulum(), h2).is_err());
    }

    #[test]
    fn network_dimensions() {
        let net = build_controller_network(&controller(), &Graph::pendulum_example()).unwrap();
        let cl = network_interconnect(pendulum(), &net).unwrap();
        assert_eq!(cl.dim(), 12);
        let s = cl.sample(&[0.0; 12]);
        assert!(s.derivative.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn network_requires_connected_graph() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let net = build_controller_network(&controller(), &g).unwrap();
        assert!(matches!(network_interconnect(pendulum(), &net), Err(Error::Disconnected)));
    }

    #[test]
    fn network_rejects_non_hurwitz_controller() {
        let bad = StateSpace::first_order(1.0, -1.0);
        assert!(matches!(
            build_controller_network(&bad, &Graph::pendulum_example()),
            Err(Error::NotHurwitz)
        ));
    }

    #[test]
    fn edgeless_network_outputs_zero() {
        let net = build_controller_network(&controller(), &Graph::empty(3).unwrap()).unwrap();
        assert_eq!(net.outputs(&[1.0, -2.0, 5.0], &[3.0, 1.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn two_node_realization_is_blockwise_plus_minus_m() {
        let net = build_controller_network(&controller(), &Graph::new(2, [(0, 1)]).unwrap()).unwrap();
        let r = net.realization();
        for w in [0.1, 1.0, 10.0] {
            let m = crate::linsys::freq_response(&controller(), w).unwrap()[(0, 0)];
            let big = crate::linsys::freq_response(&r, w).unwrap();
            assert!((big[(0, 0)] - m).norm() < 1e-14);
            assert!((big[(0, 1)] + m).norm() < 1e-14);
            assert!((big[(1, 0)] + m).norm() < 1e-14);
            assert!((big[(1, 1)] - m).norm() < 1e-14);
        }
    }

    #[test]
    fn steady_state_matches_dc_map() {
        let net = build_controller_network(&controller(), &Graph::new(2, [(0, 1)]).unwrap()).unwrap();
        let y = net.steady_state_output(&[1.0, 0.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] + 1.0).abs() < 1e-15);
        let dc = net.dc_map().unwrap();
        assert_eq!(dc.matrix, Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn feedback_sign_flips_plant_input() {
        let net = build_controller_network(&controller(), &Graph::new(2, [(0, 1)]).unwrap()).unwrap();
        let cl = network_interconnect(pendulum(), &net).unwrap();
        let x = [0.1, 0.0, -0.1, 0.0, 0.5, -0.5];
        let neg = cl.clone().with_feedback_sign(-1.0);
        let a = cl.sample(&x);
        let b = neg.sample(&x);
        assert_eq!(a.plant_inputs[0], -b.plant_inputs[0]);
    }

    #[test]
    fn fast_derivative_matches_sample() {
        let net = build_controller_network(&controller(), &Graph::pendulum_example()).unwrap();
        let cl = network_interconnect(pendulum(), &net).unwrap();
        let x: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut dx = vec![0.0; 12];
        cl.derivative(0.0, &x, &mut dx);
        assert_eq!(dx, cl.sample(&x).derivative);
    }
}
