//! Named verification checks, looked up by string so configs can request them.
//!
//! Static checks only need the linear controller and plant model; trajectory
//! checks also need a closed loop and a recorded [`Trajectory`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_lyapunov_monotone, check_ni_dissipation, check_osni_dissipation, check_osni_like_network,
    check_pair_identities, check_steady_state_relation, consensus_metric, CheckReport,
};
use crate::error::{Error, Result};
use crate::graph::{laplacian, Graph};
use crate::linalg::{hermitian_eigenvalues, Matrix};
use crate::linsys::{
    first_order_certificate, laplacian_kron_realization, ni_test_matrix, osni_certificate_check, osni_max_delta,
    osni_test_matrix, FreqGrid, StateSpace, PSD_TOL,
};
use crate::network::{
    build_controller_network, composite_storage, storage_positivity_scan, ClosedLoop, Region,
};
use crate::plant::{gamma_estimate, scalar_input_grid, DcMap, NonlinearPlant, StorageFunction};
use crate::sim::Trajectory;

/// Tunables for the checks that sample or search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    /// Constant-input range scanned for the gain estimate.
    pub gamma_range: [f64; 2],
    pub gamma_points: usize,
    /// Low-discrepancy input samples for the network gain estimate.
    pub gamma_network_samples: usize,
    pub positivity_samples: usize,
    /// Half-widths of the plant and controller boxes for the positivity scan.
    pub positivity_plant_box: Vec<f64>,
    pub positivity_ctrl_box: Vec<f64>,
    /// Pass when final edge disagreement is at most this fraction of the initial one.
    pub consensus_relative: f64,
    /// Optional absolute bound on final edge disagreement.
    pub consensus_absolute: Option<f64>,
    /// Certificate matrix; the analytic one is used for first-order controllers.
    pub certificate: Option<Vec<Vec<f64>>>,
    /// Constant controller input for the steady-state check; defaults to `1, 2, ..., n`.
    pub steady_state_input: Option<Vec<f64>>,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            gamma_range: [-25.0, 25.0],
            gamma_points: 201,
            gamma_network_samples: 200,
            positivity_samples: 100_000,
            positivity_plant_box: vec![PI, 5.0],
            positivity_ctrl_box: vec![5.0],
            consensus_relative: 0.02,
            consensus_absolute: None,
            certificate: None,
            steady_state_input: None,
        }
    }
}

/// Everything a check may look at.
#[derive(Debug, Clone)]
pub struct CheckContext<'a> {
    pub plant: Arc<dyn NonlinearPlant>,
    pub plant_storage: Option<Arc<dyn StorageFunction>>,
    pub controller: StateSpace,
    pub controller_storage: Option<Arc<dyn StorageFunction>>,
    /// First-order `(a, b)` parameters when the controller was given that way.
    pub first_order: Option<(f64, f64)>,
    pub graph: Option<Graph>,
    pub delta: f64,
    pub grid: FreqGrid,
    pub settings: CheckSettings,
    pub closed_loop: Option<&'a ClosedLoop>,
    pub trajectory: Option<&'a Trajectory>,
}

impl<'a> CheckContext<'a> {
    fn trajectory(&self, check: &str) -> Result<&'a Trajectory> {
        self.trajectory
            .ok_or_else(|| Error::MissingTrajectory(check.to_owned()))
    }

    fn closed_loop(&self, check: &str) -> Result<&'a ClosedLoop> {
        self.closed_loop
            .ok_or_else(|| Error::MissingTrajectory(check.to_owned()))
    }

    fn graph(&self) -> Result<&Graph> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("check needs a graph".into()))
    }

    fn plant_storage(&self) -> Result<&Arc<dyn StorageFunction>> {
        self.plant_storage
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("plant has no storage function".into()))
    }

    fn controller_storage(&self) -> Result<&Arc<dyn StorageFunction>> {
        self.controller_storage
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("controller has no storage function".into()))
    }

    fn certificate(&self) -> Result<Matrix> {
        if let Some(rows) = &self.settings.certificate {
            return crate::linsys::matrix_from_rows(rows, Some(self.controller.state_dim()));
        }
        match self.first_order {
            Some((a, b)) => Ok(first_order_certificate(a, b).0),
            None => Err(Error::InvalidParameter(
                "certificate matrix required for a non-first-order controller".into(),
            )),
        }
    }
}

pub trait Check: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the check inspects a simulated trajectory.
    fn needs_trajectory(&self) -> bool {
        false
    }

    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>>;
}

#[derive(Default)]
pub struct CheckRegistry {
    checks: BTreeMap<String, Box<dyn Check>>,
}

impl std::fmt::Debug for CheckRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.checks.keys()).finish()
    }
}

impl CheckRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(NiFreq));
        r.register(Box::new(OsniFreq));
        r.register(Box::new(OsniMaxDelta));
        r.register(Box::new(OsniCertificate));
        r.register(Box::new(PairStrictnessHalving));
        r.register(Box::new(GammaPair));
        r.register(Box::new(GammaNetwork));
        r.register(Box::new(SteadyState));
        r.register(Box::new(StoragePositivity));
        r.register(Box::new(NiDissipation));
        r.register(Box::new(OsniDissipation));
        r.register(Box::new(OsniLikeNetwork));
        r.register(Box::new(PairIdentities));
        r.register(Box::new(LyapunovMonotone));
        r.register(Box::new(Consensus));
        r
    }

    pub fn register(&mut self, check: Box<dyn Check>) {
        self.checks.insert(check.name().to_owned(), check);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.checks.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&dyn Check> {
        self.checks
            .get(name)
            .map(|c| c.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "check", name: name.to_owned() })
    }

    /// Runs the named checks in order and returns every report keyed by name.
    pub fn run_all(&self, names: &[String], ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let mut out = Vec::new();
        for name in names {
            out.extend(self.get(name)?.run(ctx)?);
        }
        Ok(out)
    }
}

fn min_eigenvalue_over_grid(grid: &FreqGrid, f: impl Fn(f64) -> Result<crate::linalg::CMatrix>) -> Result<(f64, f64)> {
    let mut worst = (f64::INFINITY, 0.0);
    for &w in grid.points() {
        let lam = hermitian_eigenvalues(&f(w)?)[0];
        if lam < worst.0 {
            worst = (lam, w);
        }
    }
    Ok(worst)
}

/// Frequency sweep report: violation is how far the smallest eigenvalue dips below zero.
fn sweep_report(name: &str, worst: (f64, f64)) -> CheckReport {
    let mut r = CheckReport::single(name, -worst.0, -PSD_TOL).with_value(worst.0);
    r.time_of_max = worst.1;
    r
}

struct NiFreq;
impl Check for NiFreq {
    fn name(&self) -> &str {
        "ni_freq_test"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let worst = min_eigenvalue_over_grid(&ctx.grid, |w| ni_test_matrix(&ctx.controller, w))?;
        Ok(vec![sweep_report(self.name(), worst)])
    }
}

struct OsniFreq;
impl Check for OsniFreq {
    fn name(&self) -> &str {
        "osni_freq_test"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        // Validates delta, Hurwitz and symmetric D before sampling.
        crate::linsys::osni_freq_test(&ctx.controller, ctx.delta, &ctx.grid)?;
        let worst = min_eigenvalue_over_grid(&ctx.grid, |w| osni_test_matrix(&ctx.controller, ctx.delta, w))?;
        Ok(vec![sweep_report(self.name(), worst)])
    }
}

/// Reports the largest admissible strictness and passes when the configured one is within it.
struct OsniMaxDelta;
impl Check for OsniMaxDelta {
    fn name(&self) -> &str {
        "osni_max_delta"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let dmax = osni_max_delta(&ctx.controller, &ctx.grid)?;
        Ok(vec![CheckReport::single(self.name(), ctx.delta - dmax, 0.0).with_value(dmax)])
    }
}

struct OsniCertificate;
impl Check for OsniCertificate {
    fn name(&self) -> &str {
        "osni_certificate"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let y = ctx.certificate()?;
        let rep = osni_certificate_check(&ctx.controller, &y, ctx.delta)?;
        let violation = rep
            .inequality_residual
            .max(rep.b_equation_residual)
            .max(if rep.y_positive_definite { 0.0 } else { f64::INFINITY });
        Ok(vec![CheckReport::single(self.name(), violation, crate::linsys::CERT_TOL)
            .with_value(rep.inequality_residual)])
    }
}

/// Strictness of `L_2 ⊗ M` is half that of `M`.
struct PairStrictnessHalving;
impl Check for PairStrictnessHalving {
    fn name(&self) -> &str {
        "pair_strictness_halving"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let single = osni_max_delta(&ctx.controller, &ctx.grid)?;
        let l2 = laplacian(&Graph::new(2, [(0, 1)])?);
        let pair = osni_max_delta(&laplacian_kron_realization(&l2, &ctx.controller), &ctx.grid)?;
        Ok(vec![CheckReport::single(self.name(), (pair - single / 2.0).abs(), 2e-6).with_value(pair)])
    }
}

struct GammaPair;
impl Check for GammaPair {
    fn name(&self) -> &str {
        "gamma_pair"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let s = &ctx.settings;
        if ctx.plant.io_dim() != 1 {
            return Err(Error::InvalidParameter("gamma_pair scans scalar inputs only".into()));
        }
        let inputs = scalar_input_grid(s.gamma_range[0], s.gamma_range[1], s.gamma_points);
        let rep = gamma_estimate(ctx.plant.as_ref(), &DcMap::pair(&ctx.controller)?, &inputs)?;
        // γ̂ < 1 is strict.
        Ok(vec![CheckReport::single(self.name(), rep.gamma_hat - 1.0 + f64::EPSILON, 0.0)
            .with_value(rep.gamma_hat)])
    }
}

struct GammaNetwork;
impl Check for GammaNetwork {
    fn name(&self) -> &str {
        "gamma_network"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let s = &ctx.settings;
        let net = build_controller_network(&ctx.controller, ctx.graph()?)?;
        let dim = net.nodes() * net.io_dim();
        let (lo, hi) = (s.gamma_range[0], s.gamma_range[1]);
        let inputs: Vec<Vec<f64>> = crate::network::halton(dim, s.gamma_network_samples)
            .map(|p| p.iter().map(|v| lo + (hi - lo) * v).collect())
            .collect();
        let rep = gamma_estimate(ctx.plant.as_ref(), &net.dc_map()?, &inputs)?;
        Ok(vec![CheckReport::single(self.name(), rep.gamma_hat - 1.0 + f64::EPSILON, 0.0)
            .with_value(rep.gamma_hat)])
    }
}

struct SteadyState;
impl Check for SteadyState {
    fn name(&self) -> &str {
        "steady_state_relation"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let net = build_controller_network(&ctx.controller, ctx.graph()?)?;
        let dim = net.nodes() * net.io_dim();
        let u = ctx
            .settings
            .steady_state_input
            .clone()
            .unwrap_or_else(|| (1..=dim).map(|k| k as f64).collect());
        if u.len() != dim {
            return Err(Error::Dimension(format!("steady-state input needs {dim} entries")));
        }
        Ok(vec![check_steady_state_relation(&net, &u)?])
    }
}

struct StoragePositivity;
impl Check for StoragePositivity {
    fn name(&self) -> &str {
        "storage_positivity"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let cl = ctx.closed_loop(self.name())?;
        let cs = composite_storage(cl, ctx.plant_storage()?.clone(), ctx.controller_storage()?.clone())?;
        let s = &ctx.settings;
        let region = Region::per_node(cl, &s.positivity_plant_box, &s.positivity_ctrl_box)?;
        let rep = storage_positivity_scan(&cs, &region, s.positivity_samples)?;
        let violation = if rep.pass { 0.0 } else { f64::MIN_POSITIVE.max(-rep.min_value) };
        Ok(vec![CheckReport::single(self.name(), violation, 0.0).with_value(rep.min_value)])
    }
}

struct NiDissipation;
impl Check for NiDissipation {
    fn name(&self) -> &str {
        "ni_dissipation"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let traj = ctx.trajectory(self.name())?;
        let v = ctx.plant_storage()?;
        let nodes = match ctx.closed_loop(self.name())?.mode() {
            crate::network::Mode::Pair => 1,
            crate::network::Mode::Network => traj.layout.nodes,
        };
        (0..nodes).map(|i| check_ni_dissipation(traj, v.as_ref(), i)).collect()
    }
}

struct OsniDissipation;
impl Check for OsniDissipation {
    fn name(&self) -> &str {
        "osni_dissipation"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let traj = ctx.trajectory(self.name())?;
        let v = ctx.controller_storage()?;
        let nodes = match ctx.closed_loop(self.name())?.mode() {
            crate::network::Mode::Pair => 1,
            crate::network::Mode::Network => traj.layout.nodes,
        };
        (0..nodes)
            .map(|i| check_osni_dissipation(traj, v.as_ref(), ctx.delta, i))
            .collect()
    }
}

struct OsniLikeNetwork;
impl Check for OsniLikeNetwork {
    fn name(&self) -> &str {
        "osni_like_network"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let traj = ctx.trajectory(self.name())?;
        Ok(vec![check_osni_like_network(
            traj,
            ctx.controller_storage()?.as_ref(),
            ctx.graph()?,
            ctx.delta,
        )?])
    }
}

struct PairIdentities;
impl Check for PairIdentities {
    fn name(&self) -> &str {
        "pair_identities"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        Ok(vec![check_pair_identities(ctx.trajectory(self.name())?)?])
    }
}

struct LyapunovMonotone;
impl Check for LyapunovMonotone {
    fn name(&self) -> &str {
        "lyapunov_monotone"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let traj = ctx.trajectory(self.name())?;
        let cl = ctx.closed_loop(self.name())?;
        let cs = composite_storage(cl, ctx.plant_storage()?.clone(), ctx.controller_storage()?.clone())?;
        Ok(vec![check_lyapunov_monotone(traj, &cs, ctx.delta)?])
    }
}

/// Final edge disagreement relative to the initial one (and optionally absolute).
struct Consensus;
impl Check for Consensus {
    fn name(&self) -> &str {
        "consensus"
    }
    fn needs_trajectory(&self) -> bool {
        true
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>> {
        let traj = ctx.trajectory(self.name())?;
        let metric = consensus_metric(traj, ctx.graph()?);
        let first = metric.first().expect("trajectory is non-empty").edge_max;
        let last = metric.last().expect("trajectory is non-empty").edge_max;
        let s = &ctx.settings;
        let ratio = if first > 0.0 { last / first } else if last > 0.0 { f64::INFINITY } else { 0.0 };
        let mut out = vec![CheckReport::single("consensus", ratio - s.consensus_relative, 0.0).with_value(last)];
        out[0].time_of_max = *traj.times.last().expect("non-empty");
        if let Some(abs) = s.consensus_absolute {
            let mut r = CheckReport::single("consensus_absolute", last - abs, 0.0).with_value(last);
            r.time_of_max = out[0].time_of_max;
            out.push(r);
        }
        Ok(out)
    }
}
