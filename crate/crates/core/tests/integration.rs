use std::sync::Arc;

use ni_consensus::analysis::{
    check_lyapunov_monotone, check_ni_dissipation, check_osni_dissipation, check_osni_like_network,
    check_pair_identities, check_steady_state_relation, consensus_outcome, osni_like_network_residuals,
    ConsensusOutcome,
};
use ni_consensus::checks::{CheckContext, CheckRegistry, CheckSettings};
use ni_consensus::network::{
    build_controller_network, composite_storage, network_interconnect, pair_interconnect, ClosedLoop,
    CompositeStorage,
};
use ni_consensus::plant::{
    controller_storage, LinearPlant, NonlinearPlant, Pendulum, PendulumParams, PendulumStorage, StorageFunction,
};
use ni_consensus::sim::{integrate, IntegratorConfig, Trajectory};
use ni_consensus::{Error, FreqGrid, Graph, StateSpace};

const PARAMS: PendulumParams = PendulumParams { m_kg: 1.0, l_m: 0.5, kappa: 5.0, g_ms2: 9.8 };

fn plant() -> Arc<dyn NonlinearPlant> {
    Arc::new(Pendulum::new(PARAMS))
}

fn v1() -> Arc<dyn StorageFunction> {
    Arc::new(PendulumStorage::new(PARAMS))
}

fn v2(a: f64, b: f64) -> Arc<dyn StorageFunction> {
    Arc::new(controller_storage(a, b).unwrap())
}

fn network(g: &Graph, a: f64, b: f64) -> ClosedLoop {
    network_interconnect(plant(), &build_controller_network(&StateSpace::first_order(a, b), g).unwrap()).unwrap()
}

fn run(cl: &ClosedLoop, x1: &[f64], t_end: f64) -> Trajectory {
    let l = cl.layout();
    let plants: Vec<Vec<f64>> = x1.iter().map(|&v| vec![v, 0.0]).collect();
    let x0 = l.compose(&plants, &vec![vec![0.0; l.ctrl_dim]; l.nodes]).unwrap();
    integrate(cl, &x0, &IntegratorConfig::new(1e-3, t_end, 1).unwrap()).unwrap()
}

fn storage(cl: &ClosedLoop, a: f64, b: f64) -> CompositeStorage {
    composite_storage(cl, v1(), v2(a, b)).unwrap()
}

#[test]
fn corrupted_plant_storage_is_detected() {
    let cl = network(&Graph::pendulum_example(), 10.0, 10.0);
    let traj = run(&cl, &[2.0, 1.0, -1.0, -2.0], 2.0);
    assert!(check_ni_dissipation(&traj, &PendulumStorage::new(PARAMS), 0).unwrap().pass);
    let bad = PendulumStorage::new(PARAMS).with_kinetic_scale(2.0);
    assert!(!check_ni_dissipation(&traj, &bad, 0).unwrap().pass);
}

#[test]
fn zero_trajectory_has_zero_residuals() {
    let cl = network(&Graph::pendulum_example(), 10.0, 10.0);
    let traj = run(&cl, &[0.0; 4], 0.1);
    let r = check_ni_dissipation(&traj, &PendulumStorage::new(PARAMS), 2).unwrap();
    assert_eq!(r.max_abs_residual, 0.0);
    assert!(check_pair_identities(&run(&network(&Graph::path(2).unwrap(), 10.0, 10.0), &[0.0; 2], 0.1))
        .unwrap()
        .pass);
}

#[test]
fn controller_strictness_boundary() {
    let cl = network(&Graph::pendulum_example(), 10.0, 10.0);
    let traj = run(&cl, &[2.0, 1.0, -1.0, -2.0], 2.0);
    let v = controller_storage(10.0, 10.0).unwrap();
    assert!(check_osni_dissipation(&traj, &v, 0.05, 1).unwrap().pass);
    let edge = check_osni_dissipation(&traj, &v, 0.1, 1).unwrap();
    assert!(edge.pass && edge.max_abs_residual < 1e-12);
    assert!(!check_osni_dissipation(&traj, &v, 0.2, 1).unwrap().pass);
    assert!(matches!(check_osni_dissipation(&traj, &v, 0.0, 1), Err(Error::InvalidDelta(_))));
}

#[test]
fn network_edge_inequality_holds_up_to_inverse_gain() {
    let g = Graph::pendulum_example();
    let cl = network(&g, 10.0, 10.0);
    let traj = run(&cl, &[2.0, 1.0, -1.0, -2.0], 3.0);
    let v = controller_storage(10.0, 10.0).unwrap();
    assert!(check_osni_like_network(&traj, &v, &g, 0.05).unwrap().pass);
    assert!(check_osni_like_network(&traj, &v, &g, 0.1).unwrap().pass);
    assert!(!check_osni_like_network(&traj, &v, &g, 0.2).unwrap().pass);

    let two = Graph::path(2).unwrap();
    let traj2 = run(&network(&two, 10.0, 10.0), &[1.5, -0.5], 3.0);
    assert!(check_osni_like_network(&traj2, &v, &two, 0.1).unwrap().pass);
}

#[test]
fn consensus_manifold_gives_zero_on_both_sides() {
    let g = Graph::pendulum_example();
    let cl = network(&g, 10.0, 10.0);
    let traj = run(&cl, &[0.7; 4], 2.0);
    let r = osni_like_network_residuals(&traj, &controller_storage(10.0, 10.0).unwrap(), &g, 0.05).unwrap();
    assert!(r.iter().all(|v| *v == 0.0));
    let rep = check_lyapunov_monotone(&traj, &storage(&cl, 10.0, 10.0), 0.05).unwrap();
    assert!(rep.pass);
}

#[test]
fn pair_identities_on_two_nodes_only() {
    let traj = run(&network(&Graph::path(2).unwrap(), 10.0, 10.0), &[2.3, -0.4], 5.0);
    let r = check_pair_identities(&traj).unwrap();
    assert!(r.pass, "{r:?}");
    let four = run(&network(&Graph::pendulum_example(), 10.0, 10.0), &[1.0; 4], 0.01);
    assert!(check_pair_identities(&four).is_err());
}

#[test]
fn flipped_feedback_breaks_the_lyapunov_bound() {
    let cl = network(&Graph::pendulum_example(), 10.0, 10.0).with_feedback_sign(-1.0);
    let traj = run(&cl, &[2.0, 1.0, -1.0, -2.0], 5.0);
    let rep = check_lyapunov_monotone(&traj, &storage(&cl, 10.0, 10.0), 0.05).unwrap();
    assert!(!rep.pass);
}

/// Lyapunov bound passing follows from plant and network inequalities passing.
#[test]
fn component_inequalities_imply_lyapunov_bound() {
    let cases: [(Graph, Vec<f64>, f64, f64, f64); 4] = [
        (Graph::pendulum_example(), vec![2.0, 1.0, -1.0, -2.0], 10.0, 10.0, 0.05),
        (Graph::path(3).unwrap(), vec![1.0, 0.0, -1.0], 5.0, 10.0, 0.2),
        (Graph::complete(4).unwrap(), vec![0.5, -1.5, 1.0, 0.0], 10.0, 20.0, 0.1),
        (Graph::path(2).unwrap(), vec![2.0, -2.0], 10.0, 10.0, 0.3),
    ];
    let mut exercised = 0;
    for (g, x1, a, b, delta) in cases {
        let cl = network(&g, a, b);
        let traj = run(&cl, &x1, 3.0);
        let ni = (0..g.node_count()).all(|i| check_ni_dissipation(&traj, v1().as_ref(), i).unwrap().pass);
        let osni = check_osni_like_network(&traj, v2(a, b).as_ref(), &g, delta).unwrap().pass;
        let lyap = check_lyapunov_monotone(&traj, &storage(&cl, a, b), delta).unwrap().pass;
        if ni && osni {
            exercised += 1;
            assert!(lyap, "component checks passed but Lyapunov bound failed (a={a}, delta={delta})");
        }
    }
    assert!(exercised >= 2);
}

#[test]
fn reports_are_reproducible() {
    let g = Graph::pendulum_example();
    let cl = network(&g, 10.0, 10.0);
    let t1 = run(&cl, &[2.0, 1.0, -1.0, -2.0], 1.0);
    let t2 = run(&cl, &[2.0, 1.0, -1.0, -2.0], 1.0);
    assert_eq!(t1, t2);
    let cs = storage(&cl, 10.0, 10.0);
    assert_eq!(check_lyapunov_monotone(&t1, &cs, 0.05).unwrap(), check_lyapunov_monotone(&t2, &cs, 0.05).unwrap());
}

#[test]
fn steady_state_examples() {
    let m = StateSpace::first_order(10.0, 10.0);
    let net = build_controller_network(&m, &Graph::pendulum_example()).unwrap();
    let r = check_steady_state_relation(&net, &[1.0; 4]).unwrap();
    assert!(r.pass && r.max_violation <= 1e-9);
    let two = build_controller_network(&m, &Graph::path(2).unwrap()).unwrap();
    assert_eq!(two.steady_state_output(&[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
    assert!(check_steady_state_relation(&two, &[1.0, 0.0]).unwrap().pass);
}

#[test]
fn pair_loop_converges_and_outcome_is_reported() {
    let m = StateSpace::first_order(10.0, 5.0);
    let cl = pair_interconnect(plant(), Arc::new(LinearPlant::new(m).unwrap())).unwrap();
    let traj = run(&cl, &[1.0], 20.0);
    assert!(traj.last().state.iter().all(|v| v.abs() < 1e-2));
    let rep = check_lyapunov_monotone(&traj, &storage(&cl, 10.0, 5.0), 0.05).unwrap();
    assert!(rep.pass);

    let g = Graph::path(2).unwrap();
    let still = run(&network(&g, 10.0, 10.0), &[0.0, 0.0], 0.1);
    assert_eq!(consensus_outcome(&still, &g, 1e-6), ConsensusOutcome::StatesToZero);
    let spread = run(&network(&g, 10.0, 10.0), &[2.0, -2.0], 0.1);
    assert_eq!(consensus_outcome(&spread, &g, 1e-6), ConsensusOutcome::NotReached);
}

#[test]
fn registry_runs_trajectory_checks() {
    let g = Graph::pendulum_example();
    let cl = network(&g, 10.0, 10.0);
    let traj = run(&cl, &[2.0, 1.0, -1.0, -2.0], 2.0);
    let ctx = CheckContext {
        plant: plant(),
        plant_storage: Some(v1()),
        controller: StateSpace::first_order(10.0, 10.0),
        controller_storage: Some(v2(10.0, 10.0)),
        first_order: Some((10.0, 10.0)),
        graph: Some(g),
        delta: 0.05,
        grid: FreqGrid::default(),
        settings: CheckSettings { positivity_samples: 2000, ..CheckSettings::default() },
        closed_loop: Some(&cl),
        trajectory: Some(&traj),
    };
    let names: Vec<String> = ["ni_dissipation", "osni_dissipation", "osni_like_network", "lyapunov_monotone", "consensus"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let reports = CheckRegistry::standard().run_all(&names, &ctx).unwrap();
    assert_eq!(reports.len(), 4 + 4 + 1 + 1 + 1);
    // Two seconds is not enough for 2% agreement.
    let failing: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    assert_eq!(failing, ["consensus"]);
    assert!(CheckRegistry::standard()
        .run_all(&["storage_positivity".to_owned()], &ctx)
        .is_ok());
}

#[test]
fn disconnected_graph_is_rejected() {
    let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
    let net = build_controller_network(&StateSpace::first_order(10.0, 10.0), &g).unwrap();
    assert!(matches!(network_interconnect(plant(), &net), Err(Error::Disconnected)));
}
