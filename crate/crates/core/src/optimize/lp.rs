//! Exact LP path for allocations with several constraints, on top of
//! `microlp`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

/// Primal feasibility tolerance applied to returned points.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpFailure {
    Infeasible,
    Other(String),
}

/// `opt c·x` s.t. `Σ a_ij x_j ≤ b_i` and per-variable bounds.
#[derive(Debug, Clone, Default)]
pub(crate) struct BoundedLp {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl BoundedLp {
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, rhs));
    }

    pub fn solve(&self, maximize: bool) -> Result<Vec<f64>, LpFailure> {
        let dir = if maximize {
            OptimizationDirection::Maximize
        } else {
            OptimizationDirection::Minimize
        };
        let mut problem = Problem::new(dir);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (terms, rhs) in &self.rows {
            let expr: Vec<_> = terms.iter().map(|&(j, a)| (vars[j], a)).collect();
            problem.add_constraint(expr.as_slice(), ComparisonOp::Le, *rhs);
        }
        let outcome = problem.solve().map_err(|e| match e {
            microlp::Error::Infeasible => LpFailure::Infeasible,
            other => LpFailure::Other(other.to_string()),
        })?;
        let solution = outcome
            .into_solution()
            .map_err(|_| LpFailure::Other("LP solve interrupted".into()))?;
        Ok(vars
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| solution.var_value(v).clamp(lo, hi))
            .collect())
    }

    /// Largest `lhs - rhs` over all rows.
    #[cfg(test)]
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(terms, rhs)| terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - rhs)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Shrinks a point of `{A x ≤ b, 0 ≤ x}` with nonnegative `A`, `b` toward
/// the origin until every row holds exactly. Removes simplex round-off.
pub(crate) fn shrink_into_feasible(lp: &BoundedLp, x: &mut [f64]) {
    let mut scale: f64 = 1.0;
    for (terms, rhs) in &lp.rows {
        let lhs: f64 = terms.iter().map(|&(j, a)| a * x[j]).sum();
        if lhs > *rhs && lhs > 0.0 {
            scale = scale.min(rhs.max(0.0) / lhs);
        }
    }
    if scale < 1.0 {
        for v in x.iter_mut() {
            *v *= scale;
        }
    }
}
