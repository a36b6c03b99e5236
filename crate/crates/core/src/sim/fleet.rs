use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_instances, candidate_suffixes, energy_of, energy_table, flow_shares, plan_for_policy,
    resolve_route, SimError, SimOptions, VehicleConfig,
};
use crate::density::DensityProvider;
use crate::history::TripHistory;
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;
use crate::optimize::{solve_capped_fleet, AllocationPlan, CapStatus, FleetVehicle};
use crate::predict::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleOutcome {
    pub vehicle_id: String,
    pub count: u32,
    pub route_id: RouteId,
    pub plan: AllocationPlan,
    /// Applied fraction on each driven segment, after the budget clamp.
    pub x: IndexMap<SegmentId, f64>,
    /// Electric energy per vehicle over the route.
    pub electric_kwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTotals {
    pub vehicles: f64,
    pub density: f64,
    pub pollutant_units: f64,
    pub clean_air_units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTrace {
    pub vehicles: Vec<VehicleOutcome>,
    /// Totals for every segment driven by at least one vehicle.
    pub segments: IndexMap<SegmentId, SegmentTotals>,
    pub cap_status: CapStatus,
}

impl FleetTrace {
    pub fn pollutant_units(&self, segment: &SegmentId) -> f64 {
        self.segments
            .get(segment)
            .map_or(0.0, |t| t.pollutant_units)
    }
}

/// Plans every vehicle class once at its origin and aggregates what the
/// fleet leaves behind on each segment.
///
/// Without caps each class solves its own policy. With finite caps the
/// classes are planned jointly by the capped solver, whose objective is
/// flow-weighted (uniform weights when no flows are configured).
pub fn run_fleet(
    network: &RoadNetwork,
    history: &TripHistory,
    vehicles: &[VehicleConfig],
    density: &dyn DensityProvider,
    caps: &IndexMap<SegmentId, f64>,
    options: &SimOptions,
    seed: u64,
) -> Result<FleetTrace, SimError> {
    if vehicles.is_empty() {
        return Err(SimError::NoVehicles);
    }
    for v in vehicles {
        v.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predictor = Predictor::new(options.predictor, history, network)?;
    let energies = energy_table(network, history);
    let shares = flow_shares(network, &options.flows)?;

    let mut routes = Vec::with_capacity(vehicles.len());
    let mut classes = Vec::with_capacity(vehicles.len());
    let mut suffixes = Vec::with_capacity(vehicles.len());
    for v in vehicles {
        let route = resolve_route(network, history, v, &mut rng)?;
        let prediction = predictor.predict(&route.segment_ids[0])?;
        let instances = build_instances(
            &prediction,
            &energies,
            v.energy_model,
            density,
            0.0,
            shares.as_ref(),
        )?;
        suffixes.push(candidate_suffixes(network, &prediction));
        classes.push(FleetVehicle {
            count: f64::from(v.count),
            instances,
            budget: v.initial_budget_kwh,
        });
        routes.push(route);
    }

    let capped = caps.values().any(|c| c.is_finite());
    let (plans, cap_status) = if capped {
        let out = solve_capped_fleet(&classes, caps)?;
        (out.plans, out.status)
    } else {
        let plans = vehicles
            .iter()
            .zip(&classes)
            .zip(&suffixes)
            .map(|((v, c), r)| plan_for_policy(&v.policy, &c.instances, r, c.budget))
            .collect::<Result<Vec<_>, _>>()?;
        (plans, CapStatus::Uncapped)
    };

    let mut segments: IndexMap<SegmentId, SegmentTotals> = IndexMap::new();
    let mut outcomes = Vec::with_capacity(vehicles.len());
    for ((v, route), plan) in vehicles.iter().zip(&routes).zip(plans) {
        let n = f64::from(v.count);
        let mut budget = v.initial_budget_kwh;
        let mut applied = IndexMap::new();
        let mut electric_total = 0.0;
        for segment in &route.segment_ids {
            let e = energy_of(&energies, segment)?.value(v.energy_model);
            let mut x = plan.x_of(segment).clamp(0.0, 1.0);
            if x * e > budget {
                x = (budget / e).clamp(0.0, 1.0);
            }
            let electric = (x * e).min(budget);
            budget = (budget - electric).max(0.0);
            electric_total += electric;
            let d = density.density(segment, 0.0)?;
            let totals = segments.entry(segment.clone()).or_insert(SegmentTotals {
                vehicles: 0.0,
                density: d,
                pollutant_units: 0.0,
                clean_air_units: 0.0,
            });
            totals.vehicles += n;
            totals.pollutant_units += n * d * (1.0 - x);
            totals.clean_air_units += n * d * x;
            applied.insert(segment.clone(), x);
        }
        outcomes.push(VehicleOutcome {
            vehicle_id: v.id.clone(),
            count: v.count,
            route_id: route.id.clone(),
            plan,
            x: applied,
            electric_kwh: electric_total,
        });
    }

    Ok(FleetTrace {
        vehicles: outcomes,
        segments,
        cap_status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::StaticDensity;
    use crate::network::{build_network, Route, Segment};
    use crate::sim::Policy;

    fn y_network() -> (RoadNetwork, TripHistory) {
        let net = build_network(
            ["r1", "r2", "r3"]
                .iter()
                .map(|s| Segment::new(*s, 100.0))
                .collect(),
            vec![Route::new("A", ["r1", "r3"]), Route::new("B", ["r2", "r3"])],
        )
        .unwrap();
        let mut hist = TripHistory::from_counts(&net, [("A", 10u64), ("B", 10)], 100).unwrap();
        for s in ["r1", "r2", "r3"] {
            hist = hist.with_samples(&net, &s.into(), &[0.025]).unwrap();
        }
        (net, hist)
    }

    fn fleet(policy: Policy, budget: f64) -> Vec<VehicleConfig> {
        ["A", "B"]
            .iter()
            .map(|r| VehicleConfig {
                policy: policy.clone(),
                actual_route: Some((*r).into()),
                count: 20,
                ..VehicleConfig::new(*r, budget)
            })
            .collect()
    }

    fn opts() -> SimOptions {
        SimOptions {
            flows: [("r1", 20.0), ("r2", 20.0), ("r3", 40.0)]
                .into_iter()
                .map(|(s, f)| (SegmentId::from(s), f))
                .collect(),
            ..SimOptions::default()
        }
    }

    fn run(policy: Policy, budget: f64, caps: &IndexMap<SegmentId, f64>) -> FleetTrace {
        let (net, hist) = y_network();
        let density = StaticDensity::uniform(&net, 50.0).unwrap();
        run_fleet(
            &net,
            &hist,
            &fleet(policy, budget),
            &density,
            caps,
            &opts(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn expected_versus_flow_on_shared_segment() {
        let none = IndexMap::new();
        assert!(
            (run(Policy::Expected, 0.01, &none).pollutant_units(&"r3".into()) - 1600.0).abs()
                < 1e-6
        );
        assert!(
            (run(Policy::Flow, 0.01, &none).pollutant_units(&"r3".into()) - 1200.0).abs() < 1e-6
        );
    }

    #[test]
    fn green_zone_shared_segment() {
        let green = Policy::GreenZone {
            segments: vec!["r3".into()],
            base: Default::default(),
        };
        let out = run(green, 0.04, &IndexMap::new());
        for (s, want) in [("r1", 400.0), ("r2", 400.0), ("r3", 0.0)] {
            assert!((out.pollutant_units(&s.into()) - want).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn cap_feedback() {
        let caps: IndexMap<SegmentId, f64> = [(SegmentId::from("r3"), 800.0)].into_iter().collect();
        let met = run(Policy::Flow, 0.015, &caps);
        assert_eq!(met.cap_status, CapStatus::Satisfied);
        assert!((met.pollutant_units(&"r3".into()) - 800.0).abs() < 1e-6);
        let missed = run(Policy::Flow, 0.01, &caps);
        assert!(matches!(missed.cap_status, CapStatus::InfeasibleCap { .. }));
        assert!((missed.pollutant_units(&"r3".into()) - 1200.0).abs() < 1e-6);
    }

    #[test]
    fn conservation() {
        let out = run(Policy::Expected, 0.01, &IndexMap::new());
        for t in out.segments.values() {
            assert!((t.pollutant_units + t.clean_air_units - t.vehicles * t.density).abs() < 1e-9);
        }
    }
}
