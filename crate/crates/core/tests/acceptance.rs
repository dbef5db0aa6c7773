//! Acceptance criteria, one line each. Runs without the libtest harness so every
//! verdict is printed; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ni_consensus::analysis::{
    check_lyapunov_monotone, check_ni_dissipation, check_steady_state_relation, consensus_metric, lyapunov_series,
    osni_dissipation_residuals,
};
use ni_consensus::graph::{laplacian, laplacian_spectrum, Graph};
use ni_consensus::linsys::{
    laplacian_kron_realization, osni_certificate_check, osni_max_delta, FreqGrid, StateSpace,
};
use ni_consensus::network::{
    build_controller_network, composite_storage, network_interconnect, pair_interconnect, ClosedLoop,
    ControllerNetwork,
};
use ni_consensus::plant::{
    controller_storage, gamma_estimate, scalar_input_grid, DcMap, LinearPlant, Pendulum, PendulumParams,
    PendulumStorage, StorageFunction,
};
use ni_consensus::sim::{convergence_order, integrate, integrate_states, IntegratorConfig, OrderEstimate, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PARAMS: PendulumParams = PendulumParams { m_kg: 1.0, l_m: 0.5, kappa: 5.0, g_ms2: 9.8 };
const A: f64 = 10.0;
const B: f64 = 10.0;
const DELTA: f64 = 0.05;
const X1_INIT: [f64; 4] = [2.0, 1.0, -1.0, -2.0];

fn l4_printed() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[
        3.0, -1.0, -1.0, -1.0, //
        -1.0, 2.0, -1.0, 0.0, //
        -1.0, -1.0, 2.0, 0.0, //
        -1.0, 0.0, 0.0, 1.0,
    ])
}

struct ReferenceNetwork {
    net: ControllerNetwork,
    cl: ClosedLoop,
    x0: Vec<f64>,
}

fn reference_network() -> ReferenceNetwork {
    let g = Graph::pendulum_example();
    let net = build_controller_network(&StateSpace::first_order(A, B), &g).unwrap();
    let cl = network_interconnect(Arc::new(Pendulum::new(PARAMS)), &net).unwrap();
    let plants: Vec<Vec<f64>> = X1_INIT.iter().map(|&x| vec![x, 0.0]).collect();
    let x0 = cl.layout().compose(&plants, &vec![vec![0.0]; 4]).unwrap();
    ReferenceNetwork { net, cl, x0 }
}

fn reference_trajectory() -> &'static (ReferenceNetwork, Trajectory) {
    static CELL: OnceLock<(ReferenceNetwork, Trajectory)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = reference_network();
        let traj = integrate(&s.cl, &s.x0, &IntegratorConfig::new(1e-3, 20.0, 1).unwrap()).unwrap();
        (s, traj)
    })
}

type Verdict = (bool, String);

fn c1_strictness() -> Verdict {
    let t = Instant::now();
    let grid = FreqGrid::default();
    let m = StateSpace::first_order(A, B);
    let single = osni_max_delta(&m, &grid).unwrap();
    let l2 = laplacian(&Graph::new(2, [(0, 1)]).unwrap());
    let pair = osni_max_delta(&laplacian_kron_realization(&l2, &m), &grid).unwrap();
    let elapsed = t.elapsed();
    // a - delta a^2 >= 0  =>  delta <= 1/a.
    let oracle = 1.0 / A;
    let pass = (single - oracle).abs() <= 1e-6 && (pair - oracle / 2.0).abs() <= 2e-6 && elapsed < Duration::from_secs(1);
    (pass, format!("delta_max={single:.7} (want {oracle}), L2 kron M: {pair:.7} (want {}), {elapsed:.2?}", oracle / 2.0))
}

fn c2_certificate() -> Verdict {
    let t = Instant::now();
    let sys = StateSpace::first_order(A, B);
    let y = DMatrix::from_element(1, 1, 1.0);
    let ok = osni_certificate_check(&sys, &y, 0.1).unwrap();
    let bad = osni_certificate_check(&sys, &y, 0.2).unwrap();
    let elapsed = t.elapsed();
    // AY + YA' + 2 delta (CAY)^2 = -20 + 200 delta;  B + AYC' = 10 - 10.
    let pass = ok.passed()
        && ok.inequality_residual.abs() <= 1e-9
        && ok.b_equation_residual <= 1e-9
        && !bad.passed()
        && (bad.inequality_residual - 20.0).abs() <= 1e-9
        && elapsed < Duration::from_millis(100);
    (
        pass,
        format!(
            "delta=0.1 residual {:.1e}, B residual {:.1e}; delta=0.2 residual {}, {elapsed:.2?}",
            ok.inequality_residual, ok.b_equation_residual, bad.inequality_residual
        ),
    )
}

fn c3_lossless() -> Verdict {
    let (s, traj) = reference_trajectory();
    let v = PendulumStorage::new(PARAMS);
    let l = s.cl.layout();
    let (ml2, mgl) = (PARAMS.m_kg * PARAMS.l_m.powi(2), PARAMS.m_kg * PARAMS.g_ms2 * PARAMS.l_m);
    let mut lib = 0.0_f64;
    let mut closed_form = 0.0_f64;
    for node in 0..4 {
        lib = lib.max(check_ni_dissipation(traj, &v, node).unwrap().max_abs_residual);
        for smp in &traj.samples {
            let x = &smp.state[l.plant_range(node)];
            let xd = &smp.derivative[l.plant_range(node)];
            let vdot = PARAMS.kappa * x[0] * xd[0] + ml2 * x[1] * xd[1] + mgl * x[0].sin() * xd[0];
            // y = x1, so y' = x2.
            closed_form = closed_form.max((vdot - smp.plant_inputs[node] * x[1]).abs());
        }
    }
    (lib <= 1e-9 && closed_form <= 1e-9, format!("max|V1' - u y'| = {lib:.2e} (closed form {closed_form:.2e})"))
}

fn c4_controller_identity() -> Verdict {
    let (_, traj) = reference_trajectory();
    let v = controller_storage(A, B).unwrap();
    let mut worst = 0.0_f64;
    let mut opposite_sign = 0.0_f64;
    for delta in [0.05, 0.1] {
        for node in 0..4 {
            let r = osni_dissipation_residuals(traj, &v, delta, node).unwrap();
            for (res, smp) in r.iter().zip(&traj.samples) {
                let yd = smp.controller_output_rates[node];
                // V2' - u y' + delta y'^2 = -(1/a - delta) y'^2.
                worst = worst.max((res + (1.0 / A - delta) * yd * yd).abs());
                opposite_sign = opposite_sign.max((-res + (1.0 / A - delta) * yd * yd).abs());
            }
        }
    }
    (
        worst <= 1e-9,
        format!(
            "max |(V2' - u y' + delta y'^2) + (1/a - delta) y'^2| = {worst:.2e} over delta in {{0.05, 0.1}} (with the supply-minus-storage sign: {opposite_sign:.2e})"
        ),
    )
}

fn c5_lyapunov() -> Verdict {
    let (s, traj) = reference_trajectory();
    let cs = composite_storage(
        &s.cl,
        Arc::new(PendulumStorage::new(PARAMS)),
        Arc::new(controller_storage(A, B).unwrap()),
    )
    .unwrap();
    let rep = check_lyapunov_monotone(traj, &cs, DELTA).unwrap();
    let ser = lyapunov_series(traj, &cs, DELTA).unwrap();
    let max_inc = ser.increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_bound = ser.rate_bound_residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Independent evaluation of W at each sample.
    let l = s.cl.layout();
    let edges = [(0, 1), (0, 2), (0, 3), (1, 2)];
    let mut w_err = 0.0_f64;
    for (smp, w) in traj.samples.iter().zip(&ser.values) {
        let x = &smp.state;
        let mut w_ref = 0.0;
        for i in 0..4 {
            let p = &x[l.plant_range(i)];
            w_ref += 0.5 * PARAMS.kappa * p[0] * p[0]
                + 0.5 * PARAMS.m_kg * PARAMS.l_m.powi(2) * p[1] * p[1]
                + PARAMS.m_kg * PARAMS.g_ms2 * PARAMS.l_m * (1.0 - p[0].cos());
        }
        for (i, j) in edges {
            let d = x[l.ctrl_range(i).start] - x[l.ctrl_range(j).start];
            w_ref += 0.5 * (B / A) * d * d;
        }
        w_ref -= smp.plant_outputs.iter().zip(&smp.network_outputs).map(|(a, b)| a * b).sum::<f64>();
        w_err = w_err.max((w - w_ref).abs() / (1.0 + w_ref.abs()));
    }
    let pass = rep.pass && max_inc <= 1e-6 && max_bound <= 1e-6 && w_err <= 1e-12;
    (
        pass,
        format!("max W increment {max_inc:.2e}, max rate-bound residual {max_bound:.2e}, W cross-check {w_err:.1e}"),
    )
}

fn c6_consensus() -> Verdict {
    let t = Instant::now();
    let s = reference_network();
    let traj = integrate(&s.cl, &s.x0, &IntegratorConfig::new(1e-3, 20.0, 1).unwrap()).unwrap();
    let metric = consensus_metric(&traj, s.net.graph());
    let elapsed = t.elapsed();
    let (first, last) = (metric[0].edge_max, metric.last().unwrap().edge_max);
    let rel = last / first;
    let pass = rel <= 0.02 && last <= 0.05 && elapsed < Duration::from_secs(10);
    (
        pass,
        format!(
            "edge_max {first:.3} -> {last:.5} rad at t=20 s ({:.2}% of initial, relative bound {}; absolute bound {}), {elapsed:.2?}",
            100.0 * rel,
            if rel <= 0.02 { "met" } else { "missed" },
            if last <= 0.05 { "met" } else { "missed" },
        ),
    )
}

/// Unique root of `kappa x + mgl sin x = u` (the left side is strictly increasing).
fn pendulum_equilibrium(u: f64) -> f64 {
    let f = |x: f64| PARAMS.kappa * x + PARAMS.m_kg * PARAMS.g_ms2 * PARAMS.l_m * x.sin() - u;
    let (mut lo, mut hi) = (-u.abs() - 10.0, u.abs() + 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c7_gamma() -> Verdict {
    let plant = Pendulum::new(PARAMS);
    let m = StateSpace::first_order(A, B);
    let grid = scalar_input_grid(-25.0, 25.0, 201);
    let pair = gamma_estimate(&plant, &DcMap::pair(&m).unwrap(), &grid).unwrap();
    let m0 = A / B;
    let oracle_pair = grid
        .iter()
        .map(|u| m0 * pendulum_equilibrium(u[0]) / u[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let small_signal_oracle = 1.0 / (PARAMS.kappa + PARAMS.m_kg * PARAMS.g_ms2 * PARAMS.l_m);
    let (k_min, _) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1[0].abs().total_cmp(&b.1[0].abs()))
        .unwrap();
    let small_signal = pair.ratios[k_min];

    let net = build_controller_network(&m, &Graph::pendulum_example()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.gen_range(-25.0..25.0)).collect()).collect();
    let netrep = gamma_estimate(&plant, &net.dc_map().unwrap(), &inputs).unwrap();
    let l4 = l4_printed();
    let oracle_net = inputs
        .iter()
        .map(|u| {
            let y1: Vec<f64> = u.iter().map(|&ui| pendulum_equilibrium(ui)).collect();
            let y2 = &l4 * nalgebra::DVector::from_vec(y1) * m0;
            u.iter().zip(y2.iter()).map(|(a, b)| a * b).sum::<f64>() / u.iter().map(|a| a * a).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let pass = pair.gamma_hat < 1.0
        && (pair.gamma_hat - oracle_pair).abs() <= 1e-8
        && (small_signal - small_signal_oracle).abs() <= 1e-3
        && netrep.gamma_hat < 1.0
        && (netrep.gamma_hat - oracle_net).abs() <= 1e-8;
    (
        pass,
        format!(
            "pair gamma {:.4} (oracle {oracle_pair:.4}), small-signal {small_signal:.4} (oracle {small_signal_oracle:.4}), network gamma {:.4} (oracle {oracle_net:.4})",
            pair.gamma_hat, netrep.gamma_hat
        ),
    )
}

fn c8_steady_state() -> Verdict {
    let net = build_controller_network(&StateSpace::first_order(A, B), &Graph::pendulum_example()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let l4 = l4_printed();
    let mut worst = 0.0_f64;
    let mut lib_worst = 0.0_f64;
    for _ in 0..5 {
        let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        lib_worst = lib_worst.max(check_steady_state_relation(&net, &u).unwrap().max_violation);
        // Slowest controller pole is -b, so 4 s leaves e^-40 of the transient.
        let hist = integrate_states(&net.driven_by(u.clone()), &[0.0; 4], &IntegratorConfig::new(1e-3, 4.0, usize::MAX).unwrap())
            .unwrap();
        let y2 = net.outputs(hist.states.last().unwrap(), &u);
        let expected = &l4 * nalgebra::DVector::from_vec(u.clone()) * (A / B);
        worst = worst.max(y2.iter().zip(expected.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let ones = vec![0.7; 4];
    let hist = integrate_states(&net.driven_by(ones.clone()), &[0.0; 4], &IntegratorConfig::new(1e-3, 4.0, usize::MAX).unwrap())
        .unwrap();
    let y_cons = net.outputs(hist.states.last().unwrap(), &ones).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let pass = worst <= 1e-6 && lib_worst <= 1e-6 && y_cons <= 1e-9;
    (pass, format!("random U2: max error {worst:.2e} (library check {lib_worst:.2e}); U2 = c*1: max|Y2| {y_cons:.1e}"))
}

fn c9_order() -> Verdict {
    let s = reference_network();
    let cfg = IntegratorConfig::new(0.02, 20.0, usize::MAX).unwrap();
    match convergence_order(&s.cl, &s.x0, &cfg).unwrap() {
        OrderEstimate::Order(p) => ((p - 4.0).abs() <= 0.3, format!("observed order {p:.3} from h = 0.02, 0.01, 0.005")),
        OrderEstimate::Exact => (false, "step sizes agree exactly; no order measurable".into()),
    }
}

fn c10_graph() -> Verdict {
    let g = Graph::pendulum_example();
    let l4 = laplacian(&g);
    let exact = l4 == l4_printed();
    let eig = laplacian_spectrum(&g);
    let eig_ok = eig.iter().zip([0.0, 1.0, 3.0, 4.0]).all(|(a, b)| (a - b).abs() <= 1e-10);
    let l2 = laplacian(&Graph::new(2, [(0, 1)]).unwrap());
    let sq = &l2 * &l2 == &l2 * 2.0;
    (exact && eig_ok && sq, format!("L4 exact: {exact}, spectrum {eig:.3?}, L2^2 = 2 L2: {sq}"))
}

fn c11_pair() -> Verdict {
    // Controller 10/(s+5): OSNI with level 0.1, M(0) = 2, DC loop gain about 0.51.
    let (a, b) = (10.0, 5.0);
    let m = StateSpace::first_order(a, b);
    let cl = pair_interconnect(Arc::new(Pendulum::new(PARAMS)), Arc::new(LinearPlant::new(m).unwrap())).unwrap();
    let x0 = [1.0, 0.0, 0.0];
    let traj = integrate(&cl, &x0, &IntegratorConfig::new(1e-3, 20.0, 1).unwrap()).unwrap();
    let norm = traj.last().state.iter().map(|v| v * v).sum::<f64>().sqrt();
    let v1: Arc<dyn StorageFunction> = Arc::new(PendulumStorage::new(PARAMS));
    let cs = composite_storage(&cl, v1, Arc::new(controller_storage(a, b).unwrap())).unwrap();
    let ser = lyapunov_series(&traj, &cs, DELTA).unwrap();
    let max_inc = ser.increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // The network example's controller 10/(s+10) on the same pair, for reference.
    let cl_ref = pair_interconnect(
        Arc::new(Pendulum::new(PARAMS)),
        Arc::new(LinearPlant::new(StateSpace::first_order(A, B)).unwrap()),
    )
    .unwrap();
    let traj_ref = integrate(&cl_ref, &x0, &IntegratorConfig::new(1e-3, 20.0, usize::MAX).unwrap()).unwrap();
    let norm_ref = traj_ref.last().state.iter().map(|v| v * v).sum::<f64>().sqrt();
    (
        norm <= 1e-2 && max_inc <= 1e-6,
        format!(
            "M = 10/(s+5): |x(20)| = {norm:.2e}, max W increment {max_inc:.2e}; with 10/(s+10): |x(20)| = {norm_ref:.3}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "OSNI strictness level and halving", c1_strictness),
        (2, "OSNI certificate residuals", c2_certificate),
        (3, "pendulum losslessness", c3_lossless),
        (4, "controller OSNI residual identity", c4_controller_identity),
        (5, "network Lyapunov bound", c5_lyapunov),
        (6, "output consensus at t = 20 s", c6_consensus),
        (7, "DC loop gain estimate", c7_gamma),
        (8, "steady-state relation", c8_steady_state),
        (9, "integrator order", c9_order),
        (10, "graph algebra", c10_graph),
        (11, "pair stability", c11_pair),
    ];
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        println!(
            "criterion {id:>2} {:<4} {title}: {detail} [{:.2?}]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
