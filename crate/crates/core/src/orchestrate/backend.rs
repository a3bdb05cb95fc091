use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};

use super::ScenarioSpec;
use crate::signal::compile_plan;
use crate::simkit::{
    run_external, run_toy_sim, sample_routes, ExternalRun, IntersectionControl, Network, RunResult, SimError, ToyParams,
    VehicleSpec,
};

/// A simulator the sweep runner can drive. Implementations must be safe to
/// call from several worker threads at once.
pub trait Backend: Sync {
    fn name(&self) -> &str;
    /// Fails fast when the backend cannot run at all.
    fn check_available(&self) -> Result<(), String>;
    /// Runs one scenario; `workdir` is the scenario's private output directory.
    fn run(&self, scenario: &ScenarioSpec, network: &Network, workdir: Option<&Path>) -> Result<RunResult, SimError>;
}

/// Signal controls and sampled vehicles for a scenario. Every intersection
/// runs the scenario plan; intersection `k` in network order is shifted by
/// `k * offset` modulo the cycle.
pub fn scenario_inputs(
    scenario: &ScenarioSpec,
    network: &Network,
) -> Result<(BTreeMap<String, IntersectionControl>, Vec<VehicleSpec>), SimError> {
    let timeline = compile_plan(&scenario.plan).map_err(|e| SimError::Params(e.to_string()))?;
    let cycle = scenario.plan.cycle_length;
    let controls = network
        .intersections
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let offset = (k as f64 * scenario.offset).rem_euclid(cycle);
            (id.clone(), IntersectionControl { timeline: timeline.clone(), offset })
        })
        .collect();
    let vehicles = sample_routes(&scenario.demand, network, scenario.horizon, &scenario.speed_factor, scenario.seed, scenario.arrivals)?;
    Ok((controls, vehicles))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyBackend {
    pub params: ToyParams,
}

impl Backend for ToyBackend {
    fn name(&self) -> &str {
        "toy"
    }

    fn check_available(&self) -> Result<(), String> {
        Ok(())
    }

    fn run(&self, scenario: &ScenarioSpec, network: &Network, _workdir: Option<&Path>) -> Result<RunResult, SimError> {
        let (controls, vehicles) = scenario_inputs(scenario, network)?;
        run_toy_sim(&scenario.scenario_id, network, &controls, &vehicles, &self.params)
    }
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub command_template: String,
    pub timeout_s: f64,
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn check_available(&self) -> Result<(), String> {
        if !self.command_template.contains("${config}") || !self.command_template.contains("${output}") {
            return Err("command template needs ${config} and ${output} placeholders".into());
        }
        let program = self.command_template.split_whitespace().next().unwrap_or_default();
        let found = Command::new("sh")
            .arg("-c")
            .arg(format!("command -v '{}'", program.replace('\'', "")))
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false);
        if found {
            Ok(())
        } else {
            Err(format!("{program:?} not found"))
        }
    }

    fn run(&self, scenario: &ScenarioSpec, network: &Network, workdir: Option<&Path>) -> Result<RunResult, SimError> {
        let workdir = workdir.ok_or_else(|| SimError::Params("the external backend needs an output directory".into()))?;
        let (controls, vehicles) = scenario_inputs(scenario, network)?;
        let run = ExternalRun {
            command_template: self.command_template.clone(),
            workdir: workdir.to_path_buf(),
            timeout_s: self.timeout_s,
        };
        run_external(&scenario.scenario_id, network, &controls, &vehicles, &run)
    }
}
