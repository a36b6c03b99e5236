use serde::{Deserialize, Serialize};

use super::{
    build_instances, candidate_suffixes, energy_table, flow_shares, plan_for_policy, resolve_route,
    run_single, Policy, SimError, SimOptions, SimulationTrace, VehicleConfig,
};
use crate::density::DensityProvider;
use crate::history::{EnergyModel, TripHistory};
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;
use crate::predict::Predictor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVariant {
    pub name: String,
    pub policy: Policy,
    pub energy_model: EnergyModel,
}

impl ScenarioVariant {
    pub fn new(name: impl Into<String>, policy: Policy, energy_model: EnergyModel) -> Self {
        Self {
            name: name.into(),
            policy,
            energy_model,
        }
    }
}

/// Mean-energy and max-energy forecasts under the expected-energy policy,
/// plus the uniform benchmark.
pub fn standard_variants() -> Vec<ScenarioVariant> {
    vec![
        ScenarioVariant::new("Average-Forecast", Policy::Expected, EnergyModel::Mean),
        ScenarioVariant::new("Max-Forecast", Policy::Expected, EnergyModel::Max),
        ScenarioVariant::new("None-Opt", Policy::NoneOpt, EnergyModel::Mean),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub route_id: RouteId,
    pub cumulative_objective: f64,
    pub cumulative_clean_air: f64,
    pub total_electric_kwh: f64,
    pub final_soc_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub step: usize,
    pub segment_id: SegmentId,
    pub soc_kwh: f64,
    pub cumulative_objective: f64,
    pub cumulative_clean_air: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub summaries: Vec<ScenarioSummary>,
    pub rows: Vec<ComparisonRow>,
    #[serde(skip)]
    pub traces: Vec<SimulationTrace>,
}

impl ComparisonTable {
    pub fn trace(&self, scenario: &str) -> Option<&SimulationTrace> {
        self.summaries
            .iter()
            .position(|s| s.scenario == scenario)
            .map(|i| &self.traces[i])
    }
}

/// Runs `base` once per variant with the same seed, so every variant drives
/// the same route under the same densities.
pub fn compare_scenarios(
    network: &RoadNetwork,
    history: &TripHistory,
    base: &VehicleConfig,
    variants: &[ScenarioVariant],
    density: &dyn DensityProvider,
    options: &SimOptions,
    seed: u64,
) -> Result<ComparisonTable, SimError> {
    let mut table = ComparisonTable {
        summaries: Vec::with_capacity(variants.len()),
        rows: Vec::new(),
        traces: Vec::with_capacity(variants.len()),
    };
    for variant in variants {
        let vehicle = VehicleConfig {
            policy: variant.policy.clone(),
            energy_model: variant.energy_model,
            ..base.clone()
        };
        let trace = run_single(network, history, &vehicle, density, options, seed)?;
        table.rows.extend(trace.steps.iter().map(|s| ComparisonRow {
            scenario: variant.name.clone(),
            step: s.step,
            segment_id: s.segment_id.clone(),
            soc_kwh: s.soc_kwh,
            cumulative_objective: s.cumulative_objective,
            cumulative_clean_air: s.cumulative_clean_air,
        }));
        table.summaries.push(ScenarioSummary {
            scenario: variant.name.clone(),
            route_id: trace.route_id.clone(),
            cumulative_objective: trace.cumulative_objective,
            cumulative_clean_air: trace.total_clean_air(),
            total_electric_kwh: trace.total_electric_kwh,
            final_soc_kwh: trace.final_soc().unwrap_or(vehicle.initial_soc()),
        });
        table.traces.push(trace);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub segment_id: SegmentId,
    pub p: f64,
    pub density: f64,
    /// Electric fraction averaged over all budgets.
    pub mean_x: f64,
    /// Seconds in electric mode at the configured speed, averaged over all
    /// budgets.
    pub mean_electric_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub origin: SegmentId,
    pub budgets: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub max_budget: f64,
    pub steps: usize,
    pub seed: u64,
}

/// One-shot plans at the route origin for `steps` budgets spaced evenly on
/// `[0, max_budget]`.
pub fn sweep(
    network: &RoadNetwork,
    history: &TripHistory,
    base: &VehicleConfig,
    density: &dyn DensityProvider,
    options: &SimOptions,
    spec: SweepSpec,
) -> Result<SweepResult, SimError> {
    let SweepSpec {
        max_budget,
        steps,
        seed,
    } = spec;
    if !(max_budget >= 0.0 && max_budget.is_finite()) {
        return Err(SimError::NegativeBudget(max_budget));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let route = resolve_route(network, history, base, &mut rng)?;
    let origin = route.segment_ids[0].clone();
    let prediction = Predictor::new(options.predictor, history, network)?.predict(&origin)?;
    let energies = energy_table(network, history);
    let shares = flow_shares(network, &options.flows)?;
    let instances = build_instances(
        &prediction,
        &energies,
        base.energy_model,
        density,
        0.0,
        shares.as_ref(),
    )?;
    let routes = candidate_suffixes(network, &prediction);

    let budgets: Vec<f64> = match steps {
        0 => Vec::new(),
        1 => vec![max_budget],
        n => (0..n)
            .map(|k| max_budget * k as f64 / (n - 1) as f64)
            .collect(),
    };
    let mut sums = vec![0.0; instances.len()];
    for &b in &budgets {
        let plan = plan_for_policy(&base.policy, &instances, &routes, b)?;
        for (acc, inst) in sums.iter_mut().zip(&instances) {
            *acc += plan.x_of(&inst.segment);
        }
    }
    let speed = if options.speed_mps > 0.0 {
        options.speed_mps
    } else {
        super::DEFAULT_SPEED_MPS
    };
    let count = budgets.len().max(1) as f64;
    let rows = instances
        .iter()
        .zip(sums)
        .map(|(inst, sum)| {
            let mean_x = sum / count;
            let length = network.segment(&inst.segment).map_or(0.0, |s| s.length_m);
            SweepRow {
                segment_id: inst.segment.clone(),
                p: inst.p,
                density: inst.d,
                mean_x,
                mean_electric_s: mean_x * length / speed,
            }
        })
        .collect();
    Ok(SweepResult {
        origin,
        budgets,
        rows,
    })
}
