//! Joint allocation for a fleet under per-segment pollutant caps.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::formulate::formulate_flow;
use super::lp::{BoundedLp, LpFailure};
use super::{
    build_plan, check_budget, solve_flow, validate, AllocationPlan, OptimizeError, PlanStatus,
    ProblemKind, SegmentInstance,
};
use crate::ids::SegmentId;

/// A group of identical vehicles: same candidate segments, same budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetVehicle {
    pub count: f64,
    pub instances: Vec<SegmentInstance>,
    pub budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CapStatus {
    Uncapped,
    Satisfied,
    /// No allocation meets every cap; plans minimize the largest overshoot.
    InfeasibleCap {
        max_violation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappedFleetPlan {
    pub plans: Vec<AllocationPlan>,
    pub status: CapStatus,
    /// Expected pollutant units `Σ count·p·d·(1 - x)` per segment.
    pub pollutant_units: IndexMap<SegmentId, f64>,
}

fn pollutant_units(
    vehicles: &[FleetVehicle],
    plans: &[AllocationPlan],
) -> IndexMap<SegmentId, f64> {
    let mut out: IndexMap<SegmentId, f64> = IndexMap::new();
    for (v, plan) in vehicles.iter().zip(plans) {
        for i in &v.instances {
            *out.entry(i.segment.clone()).or_default() +=
                v.count * i.p * i.d * (1.0 - plan.x_of(&i.segment));
        }
    }
    out
}

/// Maximizes the summed flow-weighted objective of all vehicles subject to
/// each vehicle's budget and, for every capped segment `s`,
/// `Σ_v count·p·d·(1 - x_{s,v}) ≤ cap_s`.
///
/// Without finite caps this is each vehicle's own flow-weighted solve. When
/// the caps cannot all be met, the largest overshoot is minimized first and
/// the objective is then maximized at that overshoot.
pub fn solve_capped_fleet(
    vehicles: &[FleetVehicle],
    caps: &IndexMap<SegmentId, f64>,
) -> Result<CappedFleetPlan, OptimizeError> {
    if vehicles.is_empty() {
        return Err(OptimizeError::EmptyInstance);
    }
    for v in vehicles {
        if !(v.count > 0.0 && v.count.is_finite()) {
            return Err(OptimizeError::InvalidVehicleCount(v.count));
        }
        check_budget(v.budget)?;
        validate(&v.instances)?;
    }
    for (segment, &cap) in caps {
        if cap.is_nan() || cap < 0.0 {
            return Err(OptimizeError::NegativeCap {
                segment: segment.clone(),
                cap,
            });
        }
    }

    let finite: Vec<(&SegmentId, f64)> = caps
        .iter()
        .filter(|(_, c)| c.is_finite())
        .map(|(s, &c)| (s, c))
        .collect();
    if finite.is_empty() {
        let plans = vehicles
            .iter()
            .map(|v| solve_flow(&v.instances, v.budget))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(CappedFleetPlan {
            pollutant_units: pollutant_units(vehicles, &plans),
            plans,
            status: CapStatus::Uncapped,
        });
    }

    let mut lp = BoundedLp::default();
    let mut var_of: Vec<Vec<usize>> = Vec::with_capacity(vehicles.len());
    for v in vehicles {
        let vars = v
            .instances
            .iter()
            .map(|i| lp.add_var(v.count * i.p * i.d * i.e * i.f, 0.0, 1.0))
            .collect::<Vec<_>>();
        lp.add_le(
            vars.iter()
                .zip(&v.instances)
                .map(|(&j, i)| (j, i.p * i.e))
                .collect(),
            v.budget,
        );
        var_of.push(vars);
    }
    let slack = lp.add_var(0.0, 0.0, f64::INFINITY);

    let mut exposure_scale: f64 = 1.0;
    for (segment, cap) in &finite {
        let mut terms = Vec::new();
        let mut exposure = 0.0;
        for (v, vars) in vehicles.iter().zip(&var_of) {
            for (i, &j) in v.instances.iter().zip(vars) {
                if &i.segment == *segment {
                    let c = v.count * i.p * i.d;
                    exposure += c;
                    terms.push((j, -c));
                }
            }
        }
        exposure_scale = exposure_scale.max(exposure);
        terms.push((slack, -1.0));
        lp.add_le(terms, cap - exposure);
    }
    let tol = 1e-9 * exposure_scale;

    let solver_err = |e: LpFailure| match e {
        LpFailure::Infeasible => {
            OptimizeError::Solver("capped fleet LP reported infeasible".into())
        }
        LpFailure::Other(msg) => OptimizeError::Solver(msg),
    };

    // phase 1: smallest achievable overshoot
    let mut phase1 = lp.clone();
    phase1.objective.iter_mut().for_each(|c| *c = 0.0);
    phase1.objective[slack] = 1.0;
    let overshoot = phase1.solve(false).map_err(solver_err)?[slack];

    let feasible = overshoot <= tol;
    lp.bounds[slack] = (0.0, if feasible { 0.0 } else { overshoot + tol });
    let x = lp.solve(true).map_err(solver_err)?;

    let status = if feasible {
        PlanStatus::Optimal
    } else {
        PlanStatus::InfeasibleCap
    };
    let plans: Vec<AllocationPlan> = vehicles
        .iter()
        .zip(&var_of)
        .map(|(v, vars)| {
            let xs: Vec<f64> = vars.iter().map(|&j| x[j]).collect();
            let program = formulate_flow(&v.instances, v.budget);
            build_plan(
                ProblemKind::Flow,
                &v.instances,
                xs,
                &program.constraints,
                status,
            )
        })
        .collect();
    Ok(CappedFleetPlan {
        pollutant_units: pollutant_units(vehicles, &plans),
        plans,
        status: if feasible {
            CapStatus::Satisfied
        } else {
            CapStatus::InfeasibleCap {
                max_violation: overshoot,
            }
        },
    })
}
