//! Rolling-horizon execution of the allocation policies.
//!
//! A vehicle re-plans at every segment boundary with its remaining budget,
//! a fresh prediction and fresh densities, then applies the plan's fraction
//! for the segment it is on. Budget is a hard limit: if the realized energy
//! would overdraw it, the applied fraction is cut to exhaust it exactly.

mod compare;
mod fleet;
mod single;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityError, DensityProvider};
use crate::history::{EnergyEstimate, EnergyModel, HistoryError, TripHistory};
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;
use crate::optimize::{
    none_opt_plan, solve_expected, solve_flow, solve_green_zone, solve_robust, AllocationPlan,
    GreenBase, OptimizeError, SegmentInstance,
};
use crate::predict::{PredictError, PredictorKind, SegmentPrediction};

pub use compare::{
    compare_scenarios, standard_variants, sweep, ComparisonRow, ComparisonTable, ScenarioSummary,
    ScenarioVariant, SweepResult, SweepRow, SweepSpec,
};
pub use fleet::{run_fleet, FleetTrace, SegmentTotals, VehicleOutcome};
pub use single::{run_single, SimulationTrace, StepRecord};

pub const DEFAULT_BATTERY_KWH: f64 = 4.4;
pub const DEFAULT_SPEED_MPS: f64 = 30.0 / 3.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown route `{0}`")]
    UnknownRoute(RouteId),
    #[error("budget {0} kWh is negative or not finite")]
    NegativeBudget(f64),
    #[error("vehicle `{id}`: {reason}")]
    InvalidVehicle { id: String, reason: String },
    #[error("flow {value} on segment `{segment}` is negative or not finite")]
    InvalidFlow { segment: SegmentId, value: f64 },
    #[error("no vehicles to simulate")]
    NoVehicles,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Policy {
    /// Expected-energy constraint.
    #[default]
    Expected,
    /// Energy constraint on every candidate route.
    Robust,
    /// Expected-energy constraint, flow-weighted objective.
    Flow,
    GreenZone {
        segments: Vec<SegmentId>,
        #[serde(default)]
        base: GreenBase,
    },
    /// Uniform fraction over the driven route, fixed at departure.
    NoneOpt,
}

/// What a segment actually costs when driven electrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    /// The energy model's own estimate (mean or max of the samples).
    #[default]
    Forecast,
    /// A stored sample drawn with the simulation seed.
    Sampled,
}

fn default_battery() -> f64 {
    DEFAULT_BATTERY_KWH
}

fn default_count() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    pub id: String,
    #[serde(default = "default_battery")]
    pub battery_capacity_kwh: f64,
    /// Charge at departure; a full battery when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc_kwh: Option<f64>,
    pub initial_budget_kwh: f64,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub energy_model: EnergyModel,
    /// Route actually driven; drawn from the trip counts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_route: Option<RouteId>,
    /// Identical vehicles this entry stands for (fleet runs).
    #[serde(default = "default_count")]
    pub count: u32,
}

impl VehicleConfig {
    pub fn new(id: impl Into<String>, initial_budget_kwh: f64) -> Self {
        Self {
            id: id.into(),
            battery_capacity_kwh: DEFAULT_BATTERY_KWH,
            initial_soc_kwh: None,
            initial_budget_kwh,
            policy: Policy::Expected,
            energy_model: EnergyModel::Mean,
            actual_route: None,
            count: 1,
        }
    }

    pub fn initial_soc(&self) -> f64 {
        self.initial_soc_kwh.unwrap_or(self.battery_capacity_kwh)
    }

    fn validate(&self) -> Result<(), SimError> {
        let b = self.initial_budget_kwh;
        if !(b >= 0.0 && b.is_finite()) {
            return Err(SimError::NegativeBudget(b));
        }
        let invalid = |reason: String| SimError::InvalidVehicle {
            id: self.id.clone(),
            reason,
        };
        if !(self.battery_capacity_kwh > 0.0 && self.battery_capacity_kwh.is_finite()) {
            return Err(invalid(format!(
                "battery capacity {} kWh",
                self.battery_capacity_kwh
            )));
        }
        let soc = self.initial_soc();
        if !(soc >= b && soc <= self.battery_capacity_kwh) {
            return Err(invalid(format!(
                "need budget {b} <= initial charge {soc} <= capacity {} kWh",
                self.battery_capacity_kwh
            )));
        }
        if self.count == 0 {
            return Err(invalid("count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    #[serde(default)]
    pub predictor: PredictorKind,
    #[serde(default)]
    pub realization: Realization,
    /// Average speed used to advance the density clock.
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    /// Steady-state vehicle counts per segment; normalized to shares for the
    /// flow-weighted objective. Uniform when empty.
    #[serde(default)]
    pub flows: IndexMap<SegmentId, f64>,
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_MPS
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            predictor: PredictorKind::Counts,
            realization: Realization::Forecast,
            speed_mps: DEFAULT_SPEED_MPS,
            flows: IndexMap::new(),
        }
    }
}

/// Flow shares `flow_s / Σ flow`; `None` when no flows are configured.
pub(crate) fn flow_shares(
    network: &RoadNetwork,
    flows: &IndexMap<SegmentId, f64>,
) -> Result<Option<IndexMap<SegmentId, f64>>, SimError> {
    if flows.is_empty() {
        return Ok(None);
    }
    for (segment, &value) in flows {
        if !network.has_segment(segment) {
            return Err(DensityError::UnknownSegment(segment.clone()).into());
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(SimError::InvalidFlow {
                segment: segment.clone(),
                value,
            });
        }
    }
    let total: f64 = flows.values().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    Ok(Some(
        flows.iter().map(|(s, &v)| (s.clone(), v / total)).collect(),
    ))
}

/// Picks the driven route: the configured one, or a draw weighted by trip
/// counts.
pub(crate) fn resolve_route<'n>(
    network: &'n RoadNetwork,
    history: &TripHistory,
    vehicle: &VehicleConfig,
    rng: &mut impl Rng,
) -> Result<&'n crate::network::Route, SimError> {
    match &vehicle.actual_route {
        Some(id) => network
            .route(id)
            .ok_or_else(|| SimError::UnknownRoute(id.clone())),
        None => {
            let total = history.total_trips();
            if total == 0 {
                return Err(PredictError::EmptyHistory.into());
            }
            let mut pick = rng.random_range(0..total);
            for route in network.routes() {
                let n = history.count(&route.id);
                if pick < n {
                    return Ok(route);
                }
                pick -= n;
            }
            Err(PredictError::EmptyHistory.into())
        }
    }
}

/// Energy estimates for every segment with samples.
pub(crate) fn energy_table(
    network: &RoadNetwork,
    history: &TripHistory,
) -> IndexMap<SegmentId, EnergyEstimate> {
    network
        .segment_ids()
        .filter_map(|s| history.expected_energy(s).ok().map(|e| (s.clone(), e)))
        .collect()
}

pub(crate) fn energy_of(
    table: &IndexMap<SegmentId, EnergyEstimate>,
    segment: &SegmentId,
) -> Result<EnergyEstimate, SimError> {
    table
        .get(segment)
        .copied()
        .ok_or_else(|| HistoryError::NoSamples(segment.clone()).into())
}

/// Optimizer input for every segment still reachable under `prediction`.
pub(crate) fn build_instances(
    prediction: &SegmentPrediction,
    energies: &IndexMap<SegmentId, EnergyEstimate>,
    model: EnergyModel,
    density: &dyn DensityProvider,
    time_s: f64,
    shares: Option<&IndexMap<SegmentId, f64>>,
) -> Result<Vec<SegmentInstance>, SimError> {
    prediction
        .reachable()
        .map(|(segment, p)| {
            let e = energy_of(energies, segment)?.value(model);
            let d = density.density(segment, time_s)?;
            let f = shares.map_or(1.0, |m| m.get(segment).copied().unwrap_or(0.0));
            Ok(SegmentInstance::new(segment.clone(), p, d, e).with_flow(f))
        })
        .collect()
}

/// Remaining paths of every route still possible under `prediction`.
pub(crate) fn candidate_suffixes(
    network: &RoadNetwork,
    prediction: &SegmentPrediction,
) -> Vec<Vec<SegmentId>> {
    network
        .routes()
        .filter(|r| prediction.route_probs.get(&r.id).is_some_and(|&p| p > 0.0))
        .filter_map(|r| {
            r.suffix_from(&prediction.current_segment)
                .map(<[SegmentId]>::to_vec)
        })
        .collect()
}

pub(crate) fn plan_for_policy(
    policy: &Policy,
    instances: &[SegmentInstance],
    routes: &[Vec<SegmentId>],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    match policy {
        Policy::Expected => solve_expected(instances, budget),
        Policy::Flow => solve_flow(instances, budget),
        Policy::Robust => solve_robust(instances, routes, budget),
        Policy::GreenZone { segments, base } => {
            let present: Vec<SegmentId> = segments
                .iter()
                .filter(|s| instances.iter().any(|i| &i.segment == *s))
                .cloned()
                .collect();
            solve_green_zone(instances, &present, budget, *base)
        }
        Policy::NoneOpt => none_opt_plan(instances, budget),
    }
}
