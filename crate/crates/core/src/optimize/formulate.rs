//! Explicit linear programs for the allocation problems, used both by the LP
//! path and for human-readable reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ProblemKind, SegmentInstance};
use crate::ids::SegmentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub segment: SegmentId,
    /// Probability weight in front of the term.
    pub p: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintTerm {
    pub segment: SegmentId,
    /// Probability weight in front of `e·x`; 1 for worst-case route rows.
    pub weight: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub label: String,
    pub terms: Vec<ConstraintTerm>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: impl Fn(&SegmentId) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * x(&t.segment))
            .sum()
    }
}

/// `max Σ objective·x` s.t. every constraint `≤ rhs`, `0 ≤ x ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub problem: ProblemKind,
    pub objective: Vec<ObjectiveTerm>,
    pub constraints: Vec<LinearConstraint>,
}

pub fn formulate_expected(instances: &[SegmentInstance], budget: f64) -> LinearProgram {
    single_constraint(ProblemKind::Expected, instances, budget)
}

pub fn formulate_flow(instances: &[SegmentInstance], budget: f64) -> LinearProgram {
    single_constraint(ProblemKind::Flow, instances, budget)
}

fn objective_terms(kind: ProblemKind, instances: &[SegmentInstance]) -> Vec<ObjectiveTerm> {
    instances
        .iter()
        .map(|i| ObjectiveTerm {
            segment: i.segment.clone(),
            p: i.p,
            coefficient: match kind {
                ProblemKind::Flow => i.p * i.d * i.e * i.f,
                _ => i.p * i.d * i.e,
            },
        })
        .collect()
}

fn single_constraint(
    kind: ProblemKind,
    instances: &[SegmentInstance],
    budget: f64,
) -> LinearProgram {
    LinearProgram {
        problem: kind,
        objective: objective_terms(kind, instances),
        constraints: vec![LinearConstraint {
            label: "expected energy".into(),
            terms: instances
                .iter()
                .map(|i| ConstraintTerm {
                    segment: i.segment.clone(),
                    weight: i.p,
                    coefficient: i.p * i.e,
                })
                .collect(),
            rhs: budget,
        }],
    }
}

/// One unweighted energy row per route; `routes` must only name segments in
/// `instances` (checked by the caller).
pub fn formulate_robust(
    instances: &[SegmentInstance],
    routes: &[Vec<SegmentId>],
    budget: f64,
) -> LinearProgram {
    let energy = |s: &SegmentId| {
        instances
            .iter()
            .find(|i| &i.segment == s)
            .map(|i| i.e)
            .unwrap_or(0.0)
    };
    LinearProgram {
        problem: ProblemKind::Robust,
        objective: objective_terms(ProblemKind::Robust, instances),
        constraints: routes
            .iter()
            .enumerate()
            .map(|(k, route)| LinearConstraint {
                label: format!("route {}", k + 1),
                terms: route
                    .iter()
                    .map(|s| ConstraintTerm {
                        segment: s.clone(),
                        weight: 1.0,
                        coefficient: energy(s),
                    })
                    .collect(),
                rhs: budget,
            })
            .collect(),
    }
}

fn weight_prefix(w: f64) -> String {
    if w == 1.0 {
        String::new()
    } else {
        format!("{w:.6}*")
    }
}

impl LinearProgram {
    /// Symbolic rendering, one line for the objective and one per constraint,
    /// e.g. `0.428571*d[r2]*e[r2]*x[r2]`.
    pub fn render(&self) -> String {
        let flow = if self.problem == ProblemKind::Flow {
            "*f[{}]"
        } else {
            ""
        };
        let mut out = String::from("maximize ");
        let terms: Vec<String> = self
            .objective
            .iter()
            .map(|t| {
                let f = flow.replace("{}", t.segment.as_str());
                format!(
                    "{}d[{s}]*e[{s}]{f}*x[{s}]",
                    weight_prefix(t.p),
                    s = t.segment
                )
            })
            .collect();
        out.push_str(&terms.join(" + "));
        out.push('\n');
        for c in &self.constraints {
            let terms: Vec<String> = c
                .terms
                .iter()
                .map(|t| format!("{}e[{s}]*x[{s}]", weight_prefix(t.weight), s = t.segment))
                .collect();
            let _ = writeln!(out, "{}: {} <= {}", c.label, terms.join(" + "), c.rhs);
        }
        out
    }
}
