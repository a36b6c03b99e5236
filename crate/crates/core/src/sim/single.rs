use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_instances, candidate_suffixes, energy_of, energy_table, flow_shares, plan_for_policy,
    resolve_route, Policy, Realization, SimError, SimOptions, VehicleConfig,
};
use crate::density::DensityProvider;
use crate::history::TripHistory;
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;
use crate::optimize::{
    none_opt_plan, solve_expected, AllocationPlan, OptimizeError, SegmentInstance,
};
use crate::predict::Predictor;

/// Slack allowed when comparing a realized draw with the remaining budget.
const CLAMP_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub segment_id: SegmentId,
    /// Battery charge after the segment.
    pub soc_kwh: f64,
    /// Applied electric fraction.
    pub x: f64,
    pub electric_kwh: f64,
    /// `d·x`
    pub clean_air: f64,
    /// `d·(1 - x)`
    pub pollutant_units: f64,
    /// Fraction the plan asked for before the budget clamp.
    pub planned_x: f64,
    pub clamped: bool,
    pub density: f64,
    /// Energy of the whole segment in electric mode.
    pub segment_energy_kwh: f64,
    pub budget_left_kwh: f64,
    /// Clock at segment entry.
    pub time_s: f64,
    pub cumulative_objective: f64,
    pub cumulative_clean_air: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub vehicle_id: String,
    pub route_id: RouteId,
    pub steps: Vec<StepRecord>,
    /// `Σ d·ē·x` over the driven segments, with ē the historical mean.
    pub cumulative_objective: f64,
    pub total_electric_kwh: f64,
    pub initial_budget_kwh: f64,
    /// Plan in force at each segment boundary.
    pub replans: Vec<AllocationPlan>,
}

impl SimulationTrace {
    pub fn final_soc(&self) -> Option<f64> {
        self.steps.last().map(|s| s.soc_kwh)
    }

    pub fn total_clean_air(&self) -> f64 {
        self.steps.iter().map(|s| s.clean_air).sum()
    }
}

/// Drives `vehicle` along its route, re-planning at every segment boundary.
pub fn run_single(
    network: &RoadNetwork,
    history: &TripHistory,
    vehicle: &VehicleConfig,
    density: &dyn DensityProvider,
    options: &SimOptions,
    seed: u64,
) -> Result<SimulationTrace, SimError> {
    vehicle.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let route = resolve_route(network, history, vehicle, &mut rng)?;
    let predictor = Predictor::new(options.predictor, history, network)?;
    let energies = energy_table(network, history);
    let shares = flow_shares(network, &options.flows)?;
    let speed = if options.speed_mps > 0.0 && options.speed_mps.is_finite() {
        options.speed_mps
    } else {
        super::DEFAULT_SPEED_MPS
    };

    let mut budget = vehicle.initial_budget_kwh;
    let mut soc = vehicle.initial_soc();
    let mut distance = 0.0;
    let mut cumulative_objective = 0.0;
    let mut cumulative_clean = 0.0;
    let mut total_electric = 0.0;
    let mut steps = Vec::with_capacity(route.segment_ids.len());
    let mut replans = Vec::with_capacity(route.segment_ids.len());
    let mut fixed_plan: Option<AllocationPlan> = None;

    for (step, segment) in route.segment_ids.iter().enumerate() {
        let time_s = distance / speed;
        let plan = match &vehicle.policy {
            Policy::NoneOpt => {
                if fixed_plan.is_none() {
                    let instances = route
                        .segment_ids
                        .iter()
                        .map(|s| {
                            let e = energy_of(&energies, s)?.value(vehicle.energy_model);
                            Ok(SegmentInstance::new(
                                s.clone(),
                                1.0,
                                density.density(s, time_s)?,
                                e,
                            ))
                        })
                        .collect::<Result<Vec<_>, SimError>>()?;
                    fixed_plan = Some(none_opt_plan(&instances, budget)?);
                }
                fixed_plan.clone().expect("set above")
            }
            policy => {
                let prediction = predictor.predict(segment)?;
                let instances = build_instances(
                    &prediction,
                    &energies,
                    vehicle.energy_model,
                    density,
                    time_s,
                    shares.as_ref(),
                )?;
                let routes = candidate_suffixes(network, &prediction);
                match plan_for_policy(policy, &instances, &routes, budget) {
                    Err(OptimizeError::InsufficientBudgetForGreenZone { .. }) if step > 0 => {
                        green_fallback(policy, &instances, budget)?
                    }
                    other => other?,
                }
            }
        };

        let estimate = energy_of(&energies, segment)?;
        let segment_energy = match options.realization {
            Realization::Forecast => estimate.value(vehicle.energy_model),
            Realization::Sampled => {
                let samples = history.samples(segment);
                samples[rng.random_range(0..samples.len())]
            }
        };
        let d = density.density(segment, time_s)?;
        let planned_x = plan.x_of(segment).clamp(0.0, 1.0);
        let mut x = planned_x;
        let mut clamped = false;
        if x * segment_energy > budget + CLAMP_EPS {
            x = (budget / segment_energy).clamp(0.0, 1.0);
            clamped = true;
        }
        let electric = (x * segment_energy).min(budget);
        budget = (budget - electric).max(0.0);
        soc = (soc - electric).max(0.0);
        total_electric += electric;
        cumulative_objective += d * estimate.mean_kwh * x;
        cumulative_clean += d * x;
        distance += network.segment(segment).map_or(0.0, |s| s.length_m);

        steps.push(StepRecord {
            step,
            segment_id: segment.clone(),
            soc_kwh: soc,
            x,
            electric_kwh: electric,
            clean_air: d * x,
            pollutant_units: d * (1.0 - x),
            planned_x,
            clamped,
            density: d,
            segment_energy_kwh: segment_energy,
            budget_left_kwh: budget,
            time_s,
            cumulative_objective,
            cumulative_clean_air: cumulative_clean,
        });
        replans.push(plan);
    }

    Ok(SimulationTrace {
        vehicle_id: vehicle.id.clone(),
        route_id: route.id.clone(),
        steps,
        cumulative_objective,
        total_electric_kwh: total_electric,
        initial_budget_kwh: vehicle.initial_budget_kwh,
        replans,
    })
}

/// After departure the green reservation can outgrow what is left (the
/// green segments became more likely). Then the remaining budget goes to
/// the green segments alone.
fn green_fallback(
    policy: &Policy,
    instances: &[SegmentInstance],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    let Policy::GreenZone { segments, .. } = policy else {
        unreachable!("only green-zone plans reserve energy")
    };
    let green: Vec<SegmentInstance> = instances
        .iter()
        .filter(|i| segments.contains(&i.segment))
        .cloned()
        .collect();
    let partial = solve_expected(&green, budget)?;
    let x: IndexMap<SegmentId, f64> = instances
        .iter()
        .map(|i| (i.segment.clone(), partial.x_of(&i.segment)))
        .collect();
    Ok(AllocationPlan { x, ..partial })
}
