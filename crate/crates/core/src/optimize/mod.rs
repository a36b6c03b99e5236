//! Electric-energy allocation over the segments the vehicle may still drive.
//!
//! Every problem here is a linear program over `x_s ∈ [0, 1]`, the fraction
//! of segment `s` driven in electric mode:
//!
//! * expected energy ([`solve_expected`]): maximize `Σ p·d·e·x` subject to
//!   `Σ p·e·x ≤ budget`;
//! * worst-case route ([`solve_robust`]): same objective, but the energy row
//!   must hold separately, unweighted, for every candidate route;
//! * flow-weighted ([`solve_flow`]): objective `Σ p·d·e·f·x`, where `f` is
//!   the segment's share of the traffic flow;
//! * green zones ([`solve_green_zone`]) and fleet-wide pollutant caps
//!   ([`solve_capped_fleet`]).
//!
//! The single-constraint problems are fractional knapsacks and are solved
//! greedily; the rest go through an exact simplex.

pub mod fleet;
pub mod formulate;
mod greedy;
pub(crate) mod lp;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::SegmentId;
use formulate::{
    formulate_expected, formulate_flow, formulate_robust, LinearConstraint, LinearProgram,
};
use greedy::{fractional_knapsack, Item};
use lp::{shrink_into_feasible, BoundedLp, LpFailure};

pub use fleet::{solve_capped_fleet, CapStatus, CappedFleetPlan, FleetVehicle};
pub use lp::FEAS_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInstance {
    #[serde(rename = "id")]
    pub segment: SegmentId,
    pub p: f64,
    pub d: f64,
    pub e: f64,
    #[serde(default = "one")]
    pub f: f64,
}

fn one() -> f64 {
    1.0
}

impl SegmentInstance {
    pub fn new(segment: impl Into<SegmentId>, p: f64, d: f64, e: f64) -> Self {
        Self {
            segment: segment.into(),
            p,
            d,
            e,
            f: 1.0,
        }
    }

    pub fn with_flow(mut self, f: f64) -> Self {
        self.f = f;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Expected,
    Robust,
    Flow,
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "expected" => Ok(Self::Expected),
            "2" | "robust" => Ok(Self::Robust),
            "3" | "flow" => Ok(Self::Flow),
            other => Err(format!("unknown problem `{other}` (expected 1|2|3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    /// The budget covers every segment; all x = 1.
    TrivialAllOne,
    /// Pollutant caps could not all be met; see the fleet status for the
    /// residual violation.
    InfeasibleCap,
    /// Uniform benchmark allocation, not an optimization result.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub binding: bool,
}

impl ConstraintReport {
    fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            label: label.into(),
            lhs,
            rhs,
            binding: rhs - lhs <= FEAS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub x: IndexMap<SegmentId, f64>,
    pub objective: f64,
    pub budget_used: f64,
    pub status: PlanStatus,
    pub constraints: Vec<ConstraintReport>,
}

impl AllocationPlan {
    pub fn x_of(&self, segment: &SegmentId) -> f64 {
        self.x.get(segment).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("budget {0} kWh is negative or not finite")]
    NegativeBudget(f64),
    #[error("no segments to allocate over")]
    EmptyInstance,
    #[error("segment `{segment}`: {field} = {value} is out of range")]
    InvalidInstance {
        segment: SegmentId,
        field: &'static str,
        value: f64,
    },
    #[error("segment `{0}` listed twice")]
    DuplicateSegment(SegmentId),
    #[error("segment `{0}` is not part of the instance")]
    UnknownSegment(SegmentId),
    #[error("green zone needs {reserve} kWh but only {budget} kWh is available")]
    InsufficientBudgetForGreenZone { reserve: f64, budget: f64 },
    #[error("cap {cap} on segment `{segment}` is negative")]
    NegativeCap { segment: SegmentId, cap: f64 },
    #[error("fleet vehicle count must be positive, got {0}")]
    InvalidVehicleCount(f64),
    #[error("LP solver failed: {0}")]
    Solver(String),
}

fn check_budget(budget: f64) -> Result<(), OptimizeError> {
    if budget >= 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(OptimizeError::NegativeBudget(budget))
    }
}

pub(crate) fn validate(instances: &[SegmentInstance]) -> Result<(), OptimizeError> {
    if instances.is_empty() {
        return Err(OptimizeError::EmptyInstance);
    }
    let mut seen = HashSet::new();
    for i in instances {
        let bad = |field, value: f64| OptimizeError::InvalidInstance {
            segment: i.segment.clone(),
            field,
            value,
        };
        if !(0.0..=1.0).contains(&i.p) {
            return Err(bad("p", i.p));
        }
        for (field, v) in [("d", i.d), ("e", i.e), ("f", i.f)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(field, v));
            }
        }
        if !seen.insert(&i.segment) {
            return Err(OptimizeError::DuplicateSegment(i.segment.clone()));
        }
    }
    Ok(())
}

fn objective_value(kind: ProblemKind, instances: &[SegmentInstance], x: &[f64]) -> f64 {
    instances
        .iter()
        .zip(x)
        .map(|(i, &x)| {
            let v = i.p * i.d * i.e * x;
            if kind == ProblemKind::Flow {
                v * i.f
            } else {
                v
            }
        })
        .sum()
}

fn build_plan(
    kind: ProblemKind,
    instances: &[SegmentInstance],
    x: Vec<f64>,
    constraints: &[LinearConstraint],
    status: PlanStatus,
) -> AllocationPlan {
    let xmap: IndexMap<SegmentId, f64> = instances
        .iter()
        .map(|i| i.segment.clone())
        .zip(x.iter().copied())
        .collect();
    let reports: Vec<ConstraintReport> = constraints
        .iter()
        .map(|c| {
            ConstraintReport::new(
                c.label.clone(),
                c.lhs(|s| xmap.get(s).copied().unwrap_or(0.0)),
                c.rhs,
            )
        })
        .collect();
    let budget_used = reports.iter().map(|r| r.lhs).fold(0.0, f64::max);
    AllocationPlan {
        objective: objective_value(kind, instances, &x),
        x: xmap,
        budget_used,
        status,
        constraints: reports,
    }
}

fn greedy_solve(kind: ProblemKind, instances: &[SegmentInstance], budget: f64) -> AllocationPlan {
    let items: Vec<Item> = instances
        .iter()
        .map(|i| {
            let ratio = if kind == ProblemKind::Flow {
                i.d * i.f
            } else {
                i.d
            };
            Item {
                value: i.p * i.e * ratio,
                weight: i.p * i.e,
                ratio,
            }
        })
        .collect();
    let alloc = fractional_knapsack(&items, budget);
    let lp = match kind {
        ProblemKind::Flow => formulate_flow(instances, budget),
        _ => formulate_expected(instances, budget),
    };
    let status = if alloc.all_one {
        PlanStatus::TrivialAllOne
    } else {
        PlanStatus::Optimal
    };
    build_plan(kind, instances, alloc.x, &lp.constraints, status)
}

/// Expected-energy allocation: maximize `Σ p·d·e·x` s.t. `Σ p·e·x ≤ budget`.
pub fn solve_expected(
    instances: &[SegmentInstance],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    check_budget(budget)?;
    validate(instances)?;
    Ok(greedy_solve(ProblemKind::Expected, instances, budget))
}

/// Flow-weighted allocation: maximize `Σ p·d·e·f·x` s.t. `Σ p·e·x ≤ budget`.
pub fn solve_flow(
    instances: &[SegmentInstance],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    check_budget(budget)?;
    validate(instances)?;
    Ok(greedy_solve(ProblemKind::Flow, instances, budget))
}

/// Worst-case route allocation: the expected objective, with
/// `Σ_{s∈R} e·x ≤ budget` required for every route `R`.
pub fn solve_robust(
    instances: &[SegmentInstance],
    routes: &[Vec<SegmentId>],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    check_budget(budget)?;
    validate(instances)?;
    let index: IndexMap<&SegmentId, usize> = instances
        .iter()
        .enumerate()
        .map(|(k, i)| (&i.segment, k))
        .collect();
    for s in routes.iter().flatten() {
        if !index.contains_key(s) {
            return Err(OptimizeError::UnknownSegment(s.clone()));
        }
    }
    let program = formulate_robust(instances, routes, budget);

    let worst = program
        .constraints
        .iter()
        .map(|c| c.lhs(|_| 1.0))
        .fold(0.0, f64::max);
    if worst <= budget {
        let x = vec![1.0; instances.len()];
        return Ok(build_plan(
            ProblemKind::Robust,
            instances,
            x,
            &program.constraints,
            PlanStatus::TrivialAllOne,
        ));
    }

    let mut lp = BoundedLp::default();
    for term in &program.objective {
        lp.add_var(term.coefficient, 0.0, 1.0);
    }
    for c in &program.constraints {
        lp.add_le(
            c.terms
                .iter()
                .map(|t| (index[&t.segment], t.coefficient))
                .collect(),
            c.rhs,
        );
    }
    let mut x = lp.solve(true).map_err(|e| match e {
        LpFailure::Infeasible => OptimizeError::Solver("robust LP reported infeasible".into()),
        LpFailure::Other(msg) => OptimizeError::Solver(msg),
    })?;
    shrink_into_feasible(&lp, &mut x);
    Ok(build_plan(
        ProblemKind::Robust,
        instances,
        x,
        &program.constraints,
        PlanStatus::Optimal,
    ))
}

/// The LP a solver works on, for reporting.
pub fn formulate(
    kind: ProblemKind,
    instances: &[SegmentInstance],
    routes: &[Vec<SegmentId>],
    budget: f64,
) -> LinearProgram {
    match kind {
        ProblemKind::Expected => formulate_expected(instances, budget),
        ProblemKind::Flow => formulate_flow(instances, budget),
        ProblemKind::Robust => formulate_robust(instances, routes, budget),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenBase {
    #[default]
    Expected,
    Flow,
}

/// Forces electric mode on `green` segments, reserving `Σ_{green} p·e`, and
/// allocates what is left of the budget over the other segments with the
/// base problem.
pub fn solve_green_zone(
    instances: &[SegmentInstance],
    green: &[SegmentId],
    budget: f64,
    base: GreenBase,
) -> Result<AllocationPlan, OptimizeError> {
    check_budget(budget)?;
    validate(instances)?;
    let green: HashSet<&SegmentId> = green.iter().collect();
    for s in &green {
        if !instances.iter().any(|i| &i.segment == *s) {
            return Err(OptimizeError::UnknownSegment((*s).clone()));
        }
    }
    let kind = match base {
        GreenBase::Expected => ProblemKind::Expected,
        GreenBase::Flow => ProblemKind::Flow,
    };
    if green.is_empty() {
        return Ok(greedy_solve(kind, instances, budget));
    }

    let reserve: f64 = instances
        .iter()
        .filter(|i| green.contains(&i.segment))
        .map(|i| i.p * i.e)
        .sum();
    if reserve > budget {
        return Err(OptimizeError::InsufficientBudgetForGreenZone { reserve, budget });
    }
    let rest: Vec<SegmentInstance> = instances
        .iter()
        .filter(|i| !green.contains(&i.segment))
        .cloned()
        .collect();
    let remaining = budget - reserve;
    let base_plan = if rest.is_empty() {
        None
    } else {
        Some(greedy_solve(kind, &rest, remaining))
    };

    let x: Vec<f64> = instances
        .iter()
        .map(|i| {
            if green.contains(&i.segment) {
                1.0
            } else {
                base_plan.as_ref().map_or(0.0, |p| p.x_of(&i.segment))
            }
        })
        .collect();
    let program = formulate(kind, instances, &[], budget);
    let status = match &base_plan {
        Some(p) => p.status,
        None => PlanStatus::TrivialAllOne,
    };
    let mut plan = build_plan(kind, instances, x, &program.constraints, status);
    plan.constraints.insert(
        0,
        ConstraintReport::new("green zone reserve", reserve, budget),
    );
    Ok(plan)
}

/// Benchmark without optimization: the same electric fraction
/// `min(1, budget / Σ e)` on every segment.
pub fn none_opt_plan(
    instances: &[SegmentInstance],
    budget: f64,
) -> Result<AllocationPlan, OptimizeError> {
    check_budget(budget)?;
    validate(instances)?;
    let total: f64 = instances.iter().map(|i| i.e).sum();
    let frac = if total <= budget { 1.0 } else { budget / total };
    let x = vec![frac; instances.len()];
    let row = LinearConstraint {
        label: "route energy".into(),
        terms: instances
            .iter()
            .map(|i| formulate::ConstraintTerm {
                segment: i.segment.clone(),
                weight: 1.0,
                coefficient: i.e,
            })
            .collect(),
        rhs: budget,
    };
    Ok(build_plan(
        ProblemKind::Expected,
        instances,
        x,
        &[row],
        PlanStatus::Uniform,
    ))
}
