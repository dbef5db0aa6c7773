use std::sync::Arc;

use serde::Serialize;

use super::{ClosedLoop, Mode, Sample};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::plant::StorageFunction;

/// Lyapunov candidate for the closed loop.
///
/// Network mode: `W = sum_i V1(x_i) + sum_{edges} V2(x_ci - x_cj) - Y1ᵀY2`, each
/// undirected edge counted once (equivalently, half the sum over ordered pairs).
/// Pair mode: `W = V1(x1) + V2(x2) - y1ᵀy2`.
#[derive(Debug, Clone)]
pub struct CompositeStorage {
    cl: ClosedLoop,
    v1: Arc<dyn StorageFunction>,
    v2: Arc<dyn StorageFunction>,
}

pub fn composite_storage(
    cl: &ClosedLoop,
    v1: Arc<dyn StorageFunction>,
    v2: Arc<dyn StorageFunction>,
) -> Result<CompositeStorage> {
    let l = cl.layout();
    if v1.dim() != l.plant_dim || v2.dim() != l.ctrl_dim {
        return Err(Error::Dimension(format!(
            "storages have dims ({}, {}), loop needs ({}, {})",
            v1.dim(),
            v2.dim(),
            l.plant_dim,
            l.ctrl_dim
        )));
    }
    Ok(CompositeStorage { cl: cl.clone(), v1, v2 })
}

/// `(V1 total, V2 total, Y1ᵀY2)` at a composite state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageParts {
    pub plants: f64,
    pub controllers: f64,
    pub cross: f64,
}

impl StorageParts {
    pub fn total(&self) -> f64 {
        self.plants + self.controllers - self.cross
    }
}

impl CompositeStorage {
    pub fn closed_loop(&self) -> &ClosedLoop {
        &self.cl
    }

    pub fn plant_storage(&self) -> &Arc<dyn StorageFunction> {
        &self.v1
    }

    pub fn controller_storage(&self) -> &Arc<dyn StorageFunction> {
        &self.v2
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.cl.graph().map(|g| g.edges().to_vec()).unwrap_or_default()
    }

    fn controller_part(&self, x: &[f64]) -> f64 {
        let l = self.cl.layout();
        match self.cl.mode() {
            Mode::Pair => self.v2.value(&x[l.ctrl_range(0)]),
            Mode::Network => self
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let d: Vec<f64> = x[l.ctrl_range(i)]
                        .iter()
                        .zip(&x[l.ctrl_range(j)])
                        .map(|(a, b)| a - b)
                        .collect();
                    self.v2.value(&d)
                })
                .sum(),
        }
    }

    fn controller_rate(&self, x: &[f64], xdot: &[f64]) -> f64 {
        let l = self.cl.layout();
        match self.cl.mode() {
            Mode::Pair => self.v2.rate(&x[l.ctrl_range(0)], &xdot[l.ctrl_range(0)]),
            Mode::Network => self
                .edges()
                .iter()
                .map(|&(i, j)| {
                    let (ri, rj) = (l.ctrl_range(i), l.ctrl_range(j));
                    let d: Vec<f64> = x[ri.clone()].iter().zip(&x[rj.clone()]).map(|(a, b)| a - b).collect();
                    let dd: Vec<f64> = xdot[ri].iter().zip(&xdot[rj]).map(|(a, b)| a - b).collect();
                    self.v2.rate(&d, &dd)
                })
                .sum(),
        }
    }

    pub fn parts(&self, x: &[f64]) -> StorageParts {
        let l = self.cl.layout();
        let s = self.cl.sample(x);
        StorageParts {
            plants: (0..l.nodes).map(|i| self.v1.value(&x[l.plant_range(i)])).sum(),
            controllers: self.controller_part(x),
            cross: dot(&s.plant_outputs, &s.network_outputs),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.parts(x).total()
    }

    /// `dW/dt` from exact gradients and the sample's recorded rates.
    pub fn rate(&self, s: &Sample) -> f64 {
        let l = self.cl.layout();
        let plants: f64 = (0..l.nodes)
            .map(|i| self.v1.rate(&s.state[l.plant_range(i)], &s.derivative[l.plant_range(i)]))
            .sum();
        let ctrl = self.controller_rate(&s.state, &s.derivative);
        let cross = dot(&s.plant_output_rates, &s.network_outputs)
            + dot(&s.plant_outputs, &s.network_output_rates);
        plants + ctrl - cross
    }

    /// Value computed from a stored sample, without re-evaluating the loop.
    pub fn value_from_sample(&self, s: &Sample) -> f64 {
        let l = self.cl.layout();
        let plants: f64 = (0..l.nodes).map(|i| self.v1.value(&s.state[l.plant_range(i)])).sum();
        plants + self.controller_part(&s.state) - dot(&s.plant_outputs, &s.network_outputs)
    }
}

/// Symmetric box `|x_k| <= half_width[k]` around the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub half_width: Vec<f64>,
}

impl Region {
    /// Same per-node plant and controller bounds for every node of the loop.
    pub fn per_node(cl: &ClosedLoop, plant: &[f64], ctrl: &[f64]) -> Result<Self> {
        let l = cl.layout();
        if plant.len() != l.plant_dim || ctrl.len() != l.ctrl_dim {
            return Err(Error::Dimension("region bounds do not match the loop".into()));
        }
        let mut half_width = Vec::with_capacity(l.total());
        for _ in 0..l.nodes {
            half_width.extend_from_slice(plant);
        }
        for _ in 0..l.nodes {
            half_width.extend_from_slice(ctrl);
        }
        Ok(Self { half_width })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub samples: usize,
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub pass: bool,
}

const ORIGIN_BALL: f64 = 1e-8;

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= k).all(|p| !k.is_multiple_of(*p)) {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Halton points in the unit cube, skipping the all-zero first point.
pub fn halton(dim: usize, count: usize) -> impl Iterator<Item = Vec<f64>> {
    let bases = primes(dim);
    (1..=count as u64).map(move |i| bases.iter().map(|&b| radical_inverse(i, b)).collect())
}

/// Evaluate the composite storage on low-discrepancy points of the region and
/// report its minimum away from the origin.
pub fn storage_positivity_scan(cs: &CompositeStorage, region: &Region, samples: usize) -> Result<PositivityReport> {
    let dim = cs.closed_loop().layout().total();
    if region.half_width.len() != dim {
        return Err(Error::Dimension(format!(
            "region has {} coordinates, state has {dim}",
            region.half_width.len()
        )));
    }
    let mut min_value = f64::INFINITY;
    let mut argmin = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for point in halton(dim, samples) {
        for k in 0..dim {
            x[k] = (2.0 * point[k] - 1.0) * region.half_width[k];
        }
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() < ORIGIN_BALL {
            continue;
        }
        let w = cs.value(&x);
        if w < min_value {
            min_value = w;
            argmin.copy_from_slice(&x);
        }
    }
    let pass = min_value > 0.0;
    if !pass {
        log::warn!("composite storage is not positive on the scanned region (min {min_value:e})");
    }
    Ok(PositivityReport { samples, min_value, argmin, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::linsys::StateSpace;
    use crate::network::{build_controller_network, network_interconnect, pair_interconnect};
    use crate::plant::{controller_storage, LinearPlant, NonlinearPlant, Pendulum, PendulumParams, PendulumStorage};
    use std::f64::consts::PI;

    fn pair(a: f64, b: f64) -> CompositeStorage {
        let p = PendulumParams::default();
        let h1: Arc<dyn NonlinearPlant> = Arc::new(Pendulum::new(p));
        let h2: Arc<dyn NonlinearPlant> = Arc::new(LinearPlant::new(StateSpace::first_order(a, b)).unwrap());
        let cl = pair_interconnect(h1, h2).unwrap();
        composite_storage(&cl, Arc::new(PendulumStorage::new(p)), Arc::new(controller_storage(a, b).unwrap())).unwrap()
    }

    fn network(a: f64, b: f64, params: PendulumParams) -> CompositeStorage {
        let net = build_controller_network(&StateSpace::first_order(a, b), &Graph::pendulum_example()).unwrap();
        let cl = network_interconnect(Arc::new(Pendulum::new(params)), &net).unwrap();
        composite_storage(
            &cl,
            Arc::new(PendulumStorage::new(params)),
            Arc::new(controller_storage(a, b).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn zero_state_has_zero_storage() {
        assert_eq!(pair(10.0, 10.0).value(&[0.0; 3]), 0.0);
        assert_eq!(network(10.0, 10.0, PendulumParams::default()).value(&[0.0; 12]), 0.0);
    }

    #[test]
    fn pair_plug_in_value() {
        let w = pair(10.0, 10.0).value(&[PI, 0.0, 1.0]);
        let expected = 2.5 * PI * PI + 9.8 + 0.5 - PI;
        assert!((w - expected).abs() < 1e-12);
        assert!((w - 31.8324).abs() < 1e-4);
    }

    #[test]
    fn consensus_manifold_reduces_to_plant_energy() {
        let cs = network(10.0, 10.0, PendulumParams::default());
        let mut x = vec![0.0; 12];
        for i in 0..4 {
            x[2 * i] = 0.8;
            x[2 * i + 1] = -0.3;
            x[8 + i] = 1.7;
        }
        let v1 = PendulumStorage::new(PendulumParams::default()).value(&[0.8, -0.3]);
        let parts = cs.parts(&x);
        assert_eq!(parts.controllers, 0.0);
        assert_eq!(parts.cross, 0.0);
        assert_eq!(cs.value(&x), 4.0 * v1);
    }

    #[test]
    fn mismatched_storage_dims_rejected() {
        let cs = pair(10.0, 10.0);
        let cl = cs.closed_loop().clone();
        let v = Arc::new(controller_storage(1.0, 1.0).unwrap());
        assert!(composite_storage(&cl, v.clone(), v).is_err());
    }

    #[test]
    fn halton_points_are_in_unit_cube_and_distinct() {
        let pts: Vec<_> = halton(3, 50).collect();
        assert!(pts.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        assert_ne!(pts[0], pts[1]);
        assert_eq!(pts[0], vec![0.5, 1.0 / 3.0, 0.2]);
    }

    #[test]
    fn stiff_spring_surrogate_passes() {
        let params = PendulumParams { kappa: 1e4, ..PendulumParams::default() };
        let cs = network(10.0, 10.0, params);
        let region = Region::per_node(cs.closed_loop(), &[1.0, 1.0], &[1.0]).unwrap();
        assert!(storage_positivity_scan(&cs, &region, 2000).unwrap().pass);
    }

    #[test]
    fn strong_coupling_fails_scan() {
        let cs = network(100.0, 1.0, PendulumParams::default());
        let region = Region::per_node(cs.closed_loop(), &[PI, 5.0], &[5.0]).unwrap();
        let r = storage_positivity_scan(&cs, &region, 5000).unwrap();
        assert!(!r.pass);
        assert!(r.min_value < 0.0);
    }
}
