//! Fixed-step classical Runge–Kutta integration and trajectory recording.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ClosedLoop, Sample, StateLayout};

/// An autonomous or time-varying vector field `x' = F(t, x)`.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

/// Closure-backed vector field, mostly for tests and small experiments.
pub struct FnDynamics<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnDynamics<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> Dynamics for FnDynamics<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub step_s: f64,
    pub t_end_s: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    1
}

impl Default for IntegratorConfig {
    /// h = 1 ms over 20 s, every step recorded.
    fn default() -> Self {
        Self { step_s: 1e-3, t_end_s: 20.0, record_every: 1 }
    }
}

impl IntegratorConfig {
    pub fn new(step_s: f64, t_end_s: f64, record_every: usize) -> Result<Self> {
        let cfg = Self { step_s, t_end_s, record_every };
        cfg.steps()?;
        Ok(cfg)
    }

    /// Number of steps; the horizon must be a whole number of steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step_s.is_finite() && self.step_s > 0.0) {
            return Err(Error::InvalidParameter(format!("step_s must be positive, got {}", self.step_s)));
        }
        if !(self.t_end_s.is_finite() && self.t_end_s >= self.step_s) {
            return Err(Error::InvalidParameter(format!(
                "t_end_s must be at least step_s, got {}",
                self.t_end_s
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be positive".into()));
        }
        let n = (self.t_end_s / self.step_s).round();
        if (n * self.step_s - self.t_end_s).abs() > 1e-9 * self.t_end_s.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end_s = {} is not a multiple of step_s = {}",
                self.t_end_s, self.step_s
            )));
        }
        Ok(n as usize)
    }

    pub fn with_step(&self, step_s: f64) -> Self {
        Self { step_s, ..*self }
    }
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }
}

fn rk4_step(sys: &(impl Dynamics + ?Sized), t: f64, h: f64, x: &mut [f64], s: &mut Rk4Scratch) {
    let n = x.len();
    sys.derivative(t, x, &mut s.k1);
    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * h * s.k1[i];
    }
    sys.derivative(t + 0.5 * h, &s.tmp, &mut s.k2);
    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * h * s.k2[i];
    }
    sys.derivative(t + 0.5 * h, &s.tmp, &mut s.k3);
    for i in 0..n {
        s.tmp[i] = x[i] + h * s.k3[i];
    }
    sys.derivative(t + h, &s.tmp, &mut s.k4);
    for i in 0..n {
        x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

/// Recorded `(t, x)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Integrate with RK4, recording every `record_every` steps plus `t = 0` and `t = t_end`.
pub fn integrate_states(sys: &(impl Dynamics + ?Sized), x0: &[f64], cfg: &IntegratorConfig) -> Result<StateHistory> {
    let n_steps = cfg.steps()?;
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, system has {}",
            x0.len(),
            sys.dim()
        )));
    }
    let h = cfg.step_s;
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    let mut scratch = Rk4Scratch::new(x.len());
    let mut hist = StateHistory { times: vec![0.0], states: vec![x.clone()] };
    for k in 1..=n_steps {
        prev.copy_from_slice(&x);
        rk4_step(sys, (k - 1) as f64 * h, h, &mut x, &mut scratch);
        let t = k as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t, last_state: prev });
        }
        if k % cfg.record_every == 0 || k == n_steps {
            hist.times.push(t);
            hist.states.push(x.clone());
        }
    }
    Ok(hist)
}

pub fn terminal_state(sys: &(impl Dynamics + ?Sized), x0: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let cfg = IntegratorConfig { record_every: usize::MAX, ..*cfg };
    let hist = integrate_states(sys, x0, &cfg)?;
    Ok(hist.states.last().cloned().expect("history holds at least x0"))
}

/// Closed-loop trajectory with every loop signal recomputed at each recorded state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub samples: Vec<Sample>,
}

pub fn integrate(cl: &ClosedLoop, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    let hist = integrate_states(cl, x0, cfg)?;
    Ok(Trajectory {
        layout: cl.layout(),
        samples: hist.states.iter().map(|x| cl.sample(x)).collect(),
        times: hist.times,
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Per-node plant output `y_i` at sample `k`.
    pub fn plant_output(&self, k: usize, node: usize) -> &[f64] {
        &self.samples[k].plant_outputs[self.layout.io_range(node)]
    }

    pub fn csv_header(&self) -> Vec<String> {
        let l = self.layout;
        let mut cols = vec!["t".to_owned()];
        for i in 0..l.nodes {
            cols.extend((0..l.plant_dim).map(|k| format!("x_plant_{}_{k}", i + 1)));
        }
        for i in 0..l.nodes {
            cols.extend((0..l.ctrl_dim).map(|k| format!("x_ctrl_{}_{k}", i + 1)));
        }
        for name in ["y1", "y2", "y1dot", "y2dot"] {
            for i in 0..l.nodes {
                cols.extend((0..l.io_dim).map(|k| format!("{name}_{}_{k}", i + 1)));
            }
        }
        cols
    }

    /// Header row, then `t`, composite state, `Y1`, `Y2`, `Y1'`, `Y2'`, then any
    /// extra per-sample columns.
    pub fn write_csv<W: Write>(&self, mut w: W, extra: &[(&str, &[f64])]) -> io::Result<()> {
        for (name, col) in extra {
            if col.len() != self.len() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("extra column `{name}` has {} rows, trajectory has {}", col.len(), self.len()),
                ));
            }
        }
        let mut header = self.csv_header();
        header.extend(extra.iter().map(|(n, _)| (*n).to_owned()));
        writeln!(w, "{}", header.join(","))?;
        for (k, (t, s)) in self.times.iter().zip(&self.samples).enumerate() {
            let mut row = vec![format!("{t}")];
            for v in s
                .state
                .iter()
                .chain(&s.plant_outputs)
                .chain(&s.network_outputs)
                .chain(&s.plant_output_rates)
                .chain(&s.network_output_rates)
            {
                row.push(format!("{v:e}"));
            }
            for (_, col) in extra {
                row.push(format!("{:e}", col[k]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderEstimate {
    Order(f64),
    /// All step sizes agree to the last bit; no error to measure.
    Exact,
}

/// Observed order from terminal states at `h`, `h/2`, `h/4`:
/// `log2(|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|)`.
pub fn convergence_order(sys: &(impl Dynamics + ?Sized), x0: &[f64], cfg: &IntegratorConfig) -> Result<OrderEstimate> {
    let x1 = terminal_state(sys, x0, cfg)?;
    let x2 = terminal_state(sys, x0, &cfg.with_step(cfg.step_s / 2.0))?;
    let x4 = terminal_state(sys, x0, &cfg.with_step(cfg.step_s / 4.0))?;
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let e1 = dist(&x1, &x2);
    let e2 = dist(&x2, &x4);
    if e1 == 0.0 && e2 == 0.0 {
        return Ok(OrderEstimate::Exact);
    }
    Ok(OrderEstimate::Order((e1 / e2).log2()))
}
