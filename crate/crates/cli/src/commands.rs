use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ni_consensus::analysis::{consensus_metric, consensus_outcome, CheckReport, ConsensusOutcome, ConsensusPoint};
use ni_consensus::checks::{CheckContext, CheckRegistry};
use ni_consensus::linsys::StateSpaceLiteral;
use ni_consensus::sim::integrate;
use ni_consensus::{Error, Graph, Mode, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{validate, ExperimentConfig};
use crate::error::CliError;
use crate::experiment::Experiment;
use crate::svg::{line_plot, Series};

/// Output agreement below which a run counts as having reached an outcome.
const OUTCOME_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct ConsensusSummary {
    pub initial: ConsensusPoint,
    #[serde(rename = "final")]
    pub last: ConsensusPoint,
    pub outcome: ConsensusOutcome,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub consensus: Option<ConsensusSummary>,
    pub reports: Vec<CheckReport>,
}

impl RunSummary {
    pub fn first_failure(&self) -> Option<&str> {
        self.reports.iter().find(|r| !r.pass).map(|r| r.name.as_str())
    }
}

fn run_checks(names: &[String], ctx: &CheckContext<'_>) -> Result<Vec<CheckReport>, CliError> {
    let registry = CheckRegistry::standard();
    for name in names {
        registry.get(name)?;
    }
    let nested: Vec<Vec<CheckReport>> = names
        .par_iter()
        .map(|name| registry.get(name).and_then(|c| c.run(ctx)))
        .collect::<Result<_, Error>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn keyed(reports: &[CheckReport]) -> BTreeMap<&str, &CheckReport> {
    reports.iter().map(|r| (r.name.as_str(), r)).collect()
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

fn plot_outputs(traj: &Trajectory) -> String {
    let l = traj.layout;
    let columns: Vec<(String, Vec<f64>)> = (0..l.nodes)
        .flat_map(|i| (0..l.io_dim).map(move |k| (i, k)))
        .map(|(i, k)| {
            let label = if l.io_dim == 1 { format!("y{}", i + 1) } else { format!("y{}[{k}]", i + 1) };
            (label, traj.samples.iter().map(|s| s.plant_outputs[i * l.io_dim + k]).collect())
        })
        .collect();
    let series: Vec<Series<'_>> = columns
        .iter()
        .map(|(label, values)| Series { label: label.clone(), values })
        .collect();
    line_plot("Plant outputs", "t (s)", "y", &traj.times, &series)
}

/// Simulate, check and write artifacts into `out`. Failing checks are reported in
/// the summary, not as an error.
pub fn run_simulation(config: ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let exp = Experiment::build(config)?;
    fs::create_dir_all(out)?;
    let traj = match integrate(&exp.closed_loop, &exp.x0, &exp.config.integrator) {
        Ok(t) => t,
        Err(e @ Error::Divergence { .. }) => {
            let Error::Divergence { t, last_state } = &e else { unreachable!() };
            write_json(
                &out.join("report.json"),
                &json!({
                    "command": "simulate",
                    "status": "diverged",
                    "diverged_at_s": t,
                    "last_finite_state": last_state,
                    "config": exp.config,
                }),
            )?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    let graph: Option<&Graph> = match exp.config.mode {
        Mode::Network => exp.config.graph.as_ref(),
        Mode::Pair => None,
    };
    let metric = graph.map(|g| consensus_metric(&traj, g));
    let consensus = graph.zip(metric.as_ref()).map(|(g, m)| ConsensusSummary {
        initial: m[0],
        last: *m.last().expect("non-empty"),
        outcome: consensus_outcome(&traj, g, OUTCOME_TOL),
    });

    let names = exp.config.checks.clone().unwrap_or_default();
    let reports = run_checks(&names, &exp.context(Some(&traj)))?;
    let summary = RunSummary { consensus, reports };

    let csv = BufWriter::new(File::create(out.join("trajectory.csv"))?);
    match &metric {
        Some(m) => {
            let edge: Vec<f64> = m.iter().map(|p| p.edge_max).collect();
            let all: Vec<f64> = m.iter().map(|p| p.all_pairs_max).collect();
            traj.write_csv(csv, &[("consensus_edge_max", &edge), ("consensus_all_pairs_max", &all)])?;
        }
        None => traj.write_csv(csv, &[])?,
    }
    fs::write(out.join("outputs.svg"), plot_outputs(&traj))?;
    write_json(
        &out.join("report.json"),
        &json!({
            "command": "simulate",
            "status": if summary.first_failure().is_some() { "check_failed" } else { "ok" },
            "samples": traj.len(),
            "checks": keyed(&summary.reports),
            "consensus": summary.consensus,
            "config": exp.config,
        }),
    )?;
    Ok(summary)
}

fn print_reports(reports: &[CheckReport]) {
    for r in reports {
        let value = r.value.map(|v| format!(", value {v:.6}")).unwrap_or_default();
        println!(
            "{:<28} {}  (max violation {:.3e}, tolerance {:.1e}{value})",
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.max_violation,
            r.tolerance
        );
    }
}

pub fn simulate(config: ExperimentConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    let summary = run_simulation(config, out)?;
    if !quiet {
        print_reports(&summary.reports);
        if let Some(c) = &summary.consensus {
            println!(
                "edge disagreement {:.4} -> {:.4}, outcome {:?}",
                c.initial.edge_max, c.last.edge_max, c.outcome
            );
        }
        println!("wrote {}", out.display());
    }
    match summary.first_failure() {
        Some(name) => Err(CliError::CheckFailed(name.to_owned())),
        None => Ok(()),
    }
}

pub fn verify(config: ExperimentConfig, out: &Path, quiet: bool) -> Result<(), CliError> {
    let exp = Experiment::build(config)?;
    let names = exp.config.verify.clone().unwrap_or_default();
    let registry = CheckRegistry::standard();
    let mut needs_traj = false;
    for name in &names {
        needs_traj |= registry.get(name)?.needs_trajectory();
    }
    let traj = if needs_traj {
        Some(integrate(&exp.closed_loop, &exp.x0, &exp.config.integrator)?)
    } else {
        None
    };
    let reports = run_checks(&names, &exp.context(traj.as_ref()))?;
    fs::create_dir_all(out)?;
    let first_failure = reports.iter().find(|r| !r.pass).map(|r| r.name.clone());
    write_json(
        &out.join("report.json"),
        &json!({
            "command": "verify",
            "status": if first_failure.is_some() { "check_failed" } else { "ok" },
            "checks": keyed(&reports),
            "config": exp.config,
        }),
    )?;
    if !quiet {
        print_reports(&reports);
    }
    match first_failure {
        Some(name) => Err(CliError::CheckFailed(name)),
        None => Ok(()),
    }
}

/// Returns a copy of `config` with one parameter replaced.
///
/// `a`, `b`: first-order controller; `delta`; `n`: path graph on `n` nodes with
/// node 0's initial state scaled linearly from `+1` to `-1` times itself;
/// `step_s`, `t_end_s`; anything else names a plant parameter.
pub fn apply_parameter(mut config: ExperimentConfig, param: &str, value: f64) -> Result<ExperimentConfig, CliError> {
    let bad = |msg: String| CliError::Config(format!("at `{param}`: {msg}"));
    match param {
        "a" | "b" => match &mut config.controller {
            StateSpaceLiteral::FirstOrder { first_order } => {
                if param == "a" {
                    first_order.a = value;
                } else {
                    first_order.b = value;
                }
            }
            StateSpaceLiteral::Full { .. } => return Err(bad("needs a first_order controller".into())),
        },
        "delta" => config.delta = value,
        "step_s" => config.integrator.step_s = value,
        "t_end_s" => config.integrator.t_end_s = value,
        "n" => {
            if value.fract() != 0.0 || value < 2.0 {
                return Err(bad(format!("node count must be an integer >= 2, got {value}")));
            }
            let n = value as usize;
            let template = config
                .initial
                .plant
                .first()
                .cloned()
                .ok_or_else(|| bad("no initial plant state to replicate".into()))?;
            config.mode = Mode::Network;
            config.graph = Some(Graph::path(n)?);
            config.initial.plant = (0..n)
                .map(|i| {
                    let s = 1.0 - 2.0 * i as f64 / (n - 1) as f64;
                    template.iter().map(|v| v * s).collect()
                })
                .collect();
            config.initial.controller = None;
        }
        _ => {
            let params = config
                .plant
                .as_object_mut()
                .and_then(|o| o.values_mut().next())
                .and_then(Value::as_object_mut)
                .filter(|p| p.contains_key(param))
                .ok_or_else(|| bad("unknown sweep parameter".into()))?;
            params.insert(param.to_owned(), json!(value));
        }
    }
    validate(&config)?;
    Ok(config)
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    index: usize,
    value: f64,
    status: &'static str,
    exit_code: i32,
    final_edge_max: Option<f64>,
    final_all_pairs_max: Option<f64>,
    message: String,
}

fn run_dir(out: &Path, index: usize, param: &str, value: f64) -> PathBuf {
    out.join(format!("run_{index:03}_{param}_{value}"))
}

pub fn sweep(config: ExperimentConfig, param: &str, values: &[f64], out: &Path, quiet: bool) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("at `--values`: sweep needs at least one value".into()));
    }
    // Reject unknown parameters before launching any run.
    apply_parameter(config.clone(), param, values[0]).map(|_| ())?;
    fs::create_dir_all(out)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            let result = apply_parameter(config.clone(), param, value)
                .and_then(|cfg| run_simulation(cfg, &run_dir(out, index, param, value)));
            let (status, exit_code, summary, message) = match result {
                Ok(s) => match s.first_failure() {
                    Some(name) => ("check_failed", 4, Some(s.clone()), format!("{name} failed")),
                    None => ("ok", 0, Some(s), String::new()),
                },
                Err(e) => ("error", e.exit_code(), None, e.to_string()),
            };
            let last = summary.as_ref().and_then(|s| s.consensus.as_ref()).map(|c| c.last);
            SweepRow {
                index,
                value,
                status,
                exit_code,
                final_edge_max: last.map(|p| p.edge_max),
                final_all_pairs_max: last.map(|p| p.all_pairs_max),
                message,
            }
        })
        .collect();

    let mut f = BufWriter::new(File::create(out.join("sweep.csv"))?);
    writeln!(f, "index,param,value,status,exit_code,final_edge_max,final_all_pairs_max,message")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &rows {
        writeln!(
            f,
            "{},{param},{},{},{},{},{},\"{}\"",
            r.index,
            r.value,
            r.status,
            r.exit_code,
            opt(r.final_edge_max),
            opt(r.final_all_pairs_max),
            r.message.replace('"', "'")
        )?;
    }
    f.flush()?;
    if !quiet {
        for r in &rows {
            println!("{param}={:<10} {:<12} final edge disagreement {}", r.value, r.status, opt(r.final_edge_max));
        }
        println!("wrote {}", out.join("sweep.csv").display());
    }
    match rows.iter().find(|r| r.exit_code != 0) {
        Some(r) => Err(CliError::SweepFailed {
            code: r.exit_code,
            failed: rows.iter().filter(|r| r.exit_code != 0).count(),
        }),
        None => Ok(()),
    }
}
