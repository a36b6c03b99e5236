//! Fractional knapsack for the single-constraint problems.

/// One decision variable of a single-constraint allocation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Item {
    /// Objective coefficient.
    pub value: f64,
    /// Constraint coefficient.
    pub weight: f64,
    /// Ordering key; value / weight up to a common positive factor.
    pub ratio: f64,
}

const RATIO_REL_TOL: f64 = 1e-12;

fn same_ratio(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATIO_REL_TOL * a.abs().max(b.abs())
}

pub(crate) struct Allocation {
    pub x: Vec<f64>,
    pub all_one: bool,
}

/// Maximizes `Σ value·x` s.t. `Σ weight·x ≤ budget`, `0 ≤ x ≤ 1`.
///
/// Items are filled by descending ratio. Weightless items are free and get
/// x = 1. Items whose ratio ties at the point where the budget runs out share
/// what is left in proportion to weight, so they all get the same x.
pub(crate) fn fractional_knapsack(items: &[Item], budget: f64) -> Allocation {
    let total: f64 = items.iter().map(|i| i.weight).sum();
    if total <= budget {
        return Allocation {
            x: vec![1.0; items.len()],
            all_one: true,
        };
    }

    let mut x = vec![0.0; items.len()];
    let mut order: Vec<usize> = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if item.weight <= 0.0 {
            x[i] = 1.0;
        } else if item.value > 0.0 {
            order.push(i);
        }
    }
    order.sort_by(|&a, &b| items[b].ratio.total_cmp(&items[a].ratio).then(a.cmp(&b)));

    let mut remaining = budget;
    let mut start = 0;
    while start < order.len() && remaining > 0.0 {
        let lead = items[order[start]].ratio;
        let end = start
            + order[start..]
                .iter()
                .take_while(|&&i| same_ratio(items[i].ratio, lead))
                .count();
        let group = &order[start..end];
        let weight: f64 = group.iter().map(|&i| items[i].weight).sum();
        if weight <= remaining {
            for &i in group {
                x[i] = 1.0;
            }
            remaining -= weight;
        } else {
            let frac = remaining / weight;
            for &i in group {
                x[i] = frac;
            }
            remaining = 0.0;
        }
        start = end;
    }
    Allocation { x, all_one: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(value: f64, weight: f64) -> Item {
        Item {
            value,
            weight,
            ratio: value / weight,
        }
    }

    #[test]
    fn fills_best_ratio_first() {
        let a = fractional_knapsack(&[item(10.0 * 0.02, 0.02), item(20.0 * 0.02, 0.02)], 0.02);
        assert_eq!(a.x, vec![0.0, 1.0]);
        assert!(!a.all_one);
    }

    #[test]
    fn ties_share_the_remainder() {
        let a = fractional_knapsack(&[item(1.0, 0.025), item(1.0, 0.025), item(5.0, 0.01)], 0.02);
        assert_eq!(a.x[2], 1.0);
        assert!((a.x[0] - 0.2).abs() < 1e-12);
        assert_eq!(a.x[0], a.x[1]);
    }

    #[test]
    fn slack_budget_sets_everything() {
        let a = fractional_knapsack(&[item(1.0, 0.1), item(0.0, 0.1)], 0.2);
        assert!(a.all_one);
        assert_eq!(a.x, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_budget() {
        let a = fractional_knapsack(&[item(1.0, 0.1), item(2.0, 0.1)], 0.0);
        assert_eq!(a.x, vec![0.0, 0.0]);
    }
}
