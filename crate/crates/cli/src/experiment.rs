use std::sync::Arc;

use ni_consensus::checks::CheckContext;
use ni_consensus::linsys::{StateSpaceLiteral, is_hurwitz};
use ni_consensus::network::{build_controller_network, network_interconnect, pair_interconnect};
use ni_consensus::plant::registry::{PlantModel, PlantRegistry};
use ni_consensus::plant::{controller_storage, LinearPlant, QuadraticStorage, StorageFunction};
use ni_consensus::{ClosedLoop, FreqGrid, Mode, StateSpace, Trajectory};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Checks run by `simulate` when the config lists none.
pub fn default_trajectory_checks(mode: Mode) -> Vec<String> {
    let names: &[&str] = match mode {
        Mode::Pair => &["ni_dissipation", "osni_dissipation", "lyapunov_monotone"],
        Mode::Network => &["ni_dissipation", "osni_dissipation", "osni_like_network", "lyapunov_monotone", "consensus"],
    };
    names.iter().map(|s| (*s).to_owned()).collect()
}

/// Checks run by `verify` when the config lists none.
pub fn default_verify_checks(mode: Mode, has_certificate: bool, scalar_plant: bool) -> Vec<String> {
    let mut names = vec!["ni_freq_test", "osni_freq_test", "osni_max_delta"];
    if has_certificate {
        names.push("osni_certificate");
    }
    names.push("pair_strictness_halving");
    if scalar_plant {
        names.push("gamma_pair");
    }
    if mode == Mode::Network {
        names.extend(["gamma_network", "steady_state_relation"]);
    }
    names.into_iter().map(str::to_owned).collect()
}

/// A config turned into live objects.
#[derive(Debug)]
pub struct Experiment {
    /// Resolved: defaults filled in.
    pub config: ExperimentConfig,
    pub plant: PlantModel,
    pub controller: StateSpace,
    pub controller_storage: Option<Arc<dyn StorageFunction>>,
    pub first_order: Option<(f64, f64)>,
    pub closed_loop: ClosedLoop,
    pub x0: Vec<f64>,
    pub grid: FreqGrid,
}

impl Experiment {
    pub fn build(mut config: ExperimentConfig) -> Result<Self, CliError> {
        let plant = PlantRegistry::default().build_literal(&config.plant)?;
        let controller = config.controller.build()?;
        if !is_hurwitz(&controller) {
            return Err(ni_consensus::Error::NotHurwitz.into());
        }
        let first_order = match &config.controller {
            StateSpaceLiteral::FirstOrder { first_order: p } => Some((p.a, p.b)),
            StateSpaceLiteral::Full { .. } => None,
        };
        let controller_storage: Option<Arc<dyn StorageFunction>> = match (first_order, &config.check_settings.certificate)
        {
            (_, Some(rows)) => {
                let y = ni_consensus::linsys::matrix_from_rows(rows, Some(controller.state_dim()))?;
                Some(Arc::new(QuadraticStorage::from_certificate(&y)?))
            }
            (Some((a, b)), None) => Some(Arc::new(controller_storage(a, b)?)),
            (None, None) => None,
        };
        let closed_loop = match config.mode {
            Mode::Pair => {
                let h2 = LinearPlant::new(controller.clone())
                    .map_err(|e| CliError::Config(format!(" at `controller`: {e}")))?;
                pair_interconnect(plant.plant.clone(), Arc::new(h2))?
            }
            Mode::Network => {
                let g = config.graph.as_ref().expect("validated");
                let net = build_controller_network(&controller, g)?;
                network_interconnect(plant.plant.clone(), &net)?
            }
        };
        let layout = closed_loop.layout();
        let ctrl0 = config
            .initial
            .controller
            .clone()
            .unwrap_or_else(|| vec![vec![0.0; layout.ctrl_dim]; layout.nodes]);
        let x0 = layout
            .compose(&config.initial.plant, &ctrl0)
            .map_err(|e| CliError::Config(format!(" at `initial`: {e}")))?;
        config.initial.controller = Some(ctrl0);
        if config.checks.is_none() {
            config.checks = Some(default_trajectory_checks(config.mode));
        }
        if config.verify.is_none() {
            config.verify = Some(default_verify_checks(
                config.mode,
                controller_storage.is_some(),
                plant.plant.io_dim() == 1,
            ));
        }
        let g = config.frequency_grid;
        let grid = FreqGrid::log_spaced(g.lo, g.hi, g.points)?;
        Ok(Self { config, plant, controller, controller_storage, first_order, closed_loop, x0, grid })
    }

    pub fn context<'a>(&'a self, trajectory: Option<&'a Trajectory>) -> CheckContext<'a> {
        CheckContext {
            plant: self.plant.plant.clone(),
            plant_storage: self.plant.storage.clone(),
            controller: self.controller.clone(),
            controller_storage: self.controller_storage.clone(),
            first_order: self.first_order,
            graph: match self.config.mode {
                Mode::Network => self.config.graph.clone(),
                Mode::Pair => None,
            },
            delta: self.config.delta,
            grid: self.grid.clone(),
            settings: self.config.check_settings.clone(),
            closed_loop: Some(&self.closed_loop),
            trajectory,
        }
    }
}
