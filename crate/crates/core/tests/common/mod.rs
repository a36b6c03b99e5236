//! Shared test support: an exhaustive LP oracle and random fixture builders.
//!
//! The oracle does not share code with the solvers. It enumerates every
//! basic solution of `max c·x, A x ≤ b, lo ≤ x ≤ hi`: pick k tight rows and
//! k free variables, put the others at a bound, solve the k×k system.

#![allow(dead_code)]

use pedaware::history::TripHistory;
use pedaware::network::{build_network, RoadNetwork, Route, Segment};
use pedaware::optimize::SegmentInstance;
use pedaware::SegmentId;
use rand::Rng;

pub struct Lp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, f64)>,
    pub bounds: Vec<(f64, f64)>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, rest) = a.split_at_mut(r);
                for (x, p) in rest[0][col..k].iter_mut().zip(&top[col][col..k]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut y = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * y[c]).sum();
        y[r] = (b[r] - s) / a[r][r];
    }
    Some(y)
}

impl Lp {
    /// Optimal value and a maximizer, or `None` if infeasible.
    pub fn maximize(&self) -> Option<(f64, Vec<f64>)> {
        let n = self.c.len();
        let m = self.rows.len();
        let scale = self
            .rows
            .iter()
            .flat_map(|(a, b)| a.iter().chain(std::iter::once(b)))
            .chain(self.bounds.iter().flat_map(|(l, h)| [l, h]))
            .fold(1.0f64, |s, v| s.max(v.abs()));
        let tol = 1e-9 * scale;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..=m.min(n) {
            for tight in combinations(m, k) {
                for free in combinations(n, k) {
                    let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
                    let choices = 1usize << fixed.len();
                    for mask in 0..choices {
                        let mut x = vec![0.0; n];
                        let mut dup = false;
                        for (bit, &j) in fixed.iter().enumerate() {
                            let (lo, hi) = self.bounds[j];
                            let at_hi = mask >> bit & 1 == 1;
                            if at_hi && lo == hi {
                                dup = true;
                                break;
                            }
                            x[j] = if at_hi { hi } else { lo };
                        }
                        if dup {
                            continue;
                        }
                        if k > 0 {
                            let a: Vec<Vec<f64>> = tight
                                .iter()
                                .map(|&r| free.iter().map(|&j| self.rows[r].0[j]).collect())
                                .collect();
                            let b: Vec<f64> = tight
                                .iter()
                                .map(|&r| {
                                    let (row, rhs) = &self.rows[r];
                                    rhs - fixed.iter().map(|&j| row[j] * x[j]).sum::<f64>()
                                })
                                .collect();
                            let Some(y) = solve_square(a, b) else {
                                continue;
                            };
                            for (&j, v) in free.iter().zip(y) {
                                x[j] = v;
                            }
                        }
                        let in_bounds = x
                            .iter()
                            .zip(&self.bounds)
                            .all(|(&v, &(lo, hi))| v >= lo - tol && v <= hi + tol);
                        let rows_ok = self.rows.iter().all(|(row, rhs)| {
                            row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() <= rhs + tol
                        });
                        if !(in_bounds && rows_ok) {
                            continue;
                        }
                        let obj: f64 = self.c.iter().zip(&x).map(|(c, v)| c * v).sum();
                        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                            best = Some((obj, x));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Oracle for the expected-energy problem (flow-weighted when `flow`).
pub fn oracle_expected(inst: &[SegmentInstance], budget: f64, flow: bool) -> f64 {
    Lp {
        c: inst
            .iter()
            .map(|i| i.p * i.d * i.e * if flow { i.f } else { 1.0 })
            .collect(),
        rows: vec![(inst.iter().map(|i| i.p * i.e).collect(), budget)],
        bounds: vec![(0.0, 1.0); inst.len()],
    }
    .maximize()
    .expect("x = 0 is feasible")
    .0
}

/// Oracle for the every-route problem.
pub fn oracle_robust(inst: &[SegmentInstance], routes: &[Vec<SegmentId>], budget: f64) -> f64 {
    Lp {
        c: inst.iter().map(|i| i.p * i.d * i.e).collect(),
        rows: routes
            .iter()
            .map(|r| {
                let row = inst
                    .iter()
                    .map(|i| if r.contains(&i.segment) { i.e } else { 0.0 })
                    .collect();
                (row, budget)
            })
            .collect(),
        bounds: vec![(0.0, 1.0); inst.len()],
    }
    .maximize()
    .expect("x = 0 is feasible")
    .0
}

/// Oracle for the green-zone problem: green segments pinned at 1.
pub fn oracle_green(
    inst: &[SegmentInstance],
    green: &[SegmentId],
    budget: f64,
    flow: bool,
) -> Option<f64> {
    Lp {
        c: inst
            .iter()
            .map(|i| i.p * i.d * i.e * if flow { i.f } else { 1.0 })
            .collect(),
        rows: vec![(inst.iter().map(|i| i.p * i.e).collect(), budget)],
        bounds: inst
            .iter()
            .map(|i| {
                if green.contains(&i.segment) {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            })
            .collect(),
    }
    .maximize()
    .map(|(v, _)| v)
}

/// Random instance on segments `s0..s{n-1}` with route-consistent
/// probabilities: `p_s = Σ_{R ∋ s} P(R)`.
pub struct RandomInstance {
    pub instances: Vec<SegmentInstance>,
    pub routes: Vec<Vec<SegmentId>>,
    pub budget: f64,
}

pub fn random_instance(
    rng: &mut impl Rng,
    max_segments: usize,
    max_routes: usize,
) -> RandomInstance {
    let n = rng.random_range(1..=max_segments);
    let ids: Vec<SegmentId> = (0..n).map(|i| SegmentId::new(format!("s{i}"))).collect();
    let k = rng.random_range(1..=max_routes);
    let mut routes: Vec<Vec<SegmentId>> = (0..k)
        .map(|_| {
            let r: Vec<SegmentId> = ids
                .iter()
                .filter(|_| rng.random_bool(0.5))
                .cloned()
                .collect();
            if r.is_empty() {
                vec![ids[rng.random_range(0..n)].clone()]
            } else {
                r
            }
        })
        .collect();
    // every segment lies on some route
    for s in &ids {
        if !routes.iter().any(|r| r.contains(s)) {
            let j = rng.random_range(0..routes.len());
            routes[j].push(s.clone());
        }
    }
    let weights: Vec<f64> = (0..routes.len())
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    let total: f64 = weights.iter().sum();
    let instances = ids
        .iter()
        .map(|s| {
            let p: f64 = routes
                .iter()
                .zip(&weights)
                .filter(|(r, _)| r.contains(s))
                .map(|(_, w)| w / total)
                .sum();
            let mut d = rng.random_range(0.0..100.0);
            if rng.random_bool(0.15) {
                d = 50.0; // ties
            }
            let e = if rng.random_bool(0.05) {
                0.0
            } else {
                rng.random_range(0.001..0.05)
            };
            SegmentInstance::new(s.clone(), p.min(1.0), d, e).with_flow(rng.random_range(0.0..1.0))
        })
        .collect::<Vec<_>>();
    let demand: f64 = instances.iter().map(|i| i.e).sum();
    let budget = rng.random_range(0.0..=demand * 1.1);
    RandomInstance {
        instances,
        routes,
        budget,
    }
}

/// A random tree of segments hanging off `t0`, with routes from the root to
/// some of its nodes. Returns the network and a history with random counts.
pub fn random_prefix_tree(rng: &mut impl Rng, max_nodes: usize) -> (RoadNetwork, TripHistory) {
    let n = rng.random_range(2..=max_nodes);
    let mut parent = vec![usize::MAX; n];
    for (i, p) in parent.iter_mut().enumerate().skip(1) {
        *p = rng.random_range(0..i);
    }
    let has_child: Vec<bool> = (0..n).map(|i| parent.contains(&i)).collect();
    let path = |mut i: usize| {
        let mut out = vec![i];
        while parent[i] != usize::MAX {
            i = parent[i];
            out.push(i);
        }
        out.reverse();
        out.into_iter().map(|j| format!("t{j}")).collect::<Vec<_>>()
    };
    let mut routes = Vec::new();
    for (i, &inner) in has_child.iter().enumerate() {
        // every leaf ends a route; inner nodes only sometimes
        if !inner || rng.random_bool(0.2) {
            routes.push(Route::new(format!("R{i}"), path(i)));
        }
    }
    let segments = (0..n)
        .map(|i| Segment::new(format!("t{i}"), 100.0))
        .collect();
    let net = build_network(segments, routes).expect("tree routes are valid");
    let counts: Vec<(String, u64)> = net
        .routes()
        .map(|r| (r.id.to_string(), rng.random_range(1..=50u64)))
        .collect();
    let hist = TripHistory::from_counts(&net, counts, 200).expect("counts are valid");
    (net, hist)
}

/// A random single-vehicle scenario on a random prefix tree.
pub struct RandomScenario {
    pub network: RoadNetwork,
    pub history: TripHistory,
    pub density: pedaware::density::SyntheticDensity,
    pub vehicle: pedaware::sim::VehicleConfig,
    pub options: pedaware::sim::SimOptions,
    pub seed: u64,
}

pub fn random_scenario(rng: &mut impl Rng) -> RandomScenario {
    use pedaware::history::EnergyModel;
    use pedaware::predict::PredictorKind;
    use pedaware::sim::{Policy, Realization, SimOptions, VehicleConfig};

    let (network, counts) = random_prefix_tree(rng, 10);
    let pairs: Vec<(pedaware::RouteId, u64)> =
        counts.route_counts().map(|(r, n)| (r.clone(), n)).collect();
    let history = pedaware::history::synthetic_history(
        &network,
        pairs,
        rng.random_range(1..10),
        rng.random(),
    )
    .expect("tree history");
    let density = pedaware::density::SyntheticDensity::new(&network, rng.random());
    let segs: Vec<SegmentId> = network.segment_ids().cloned().collect();
    let policy = match rng.random_range(0..5) {
        0 => Policy::Expected,
        1 => Policy::Robust,
        2 => Policy::Flow,
        3 => Policy::NoneOpt,
        _ => Policy::GreenZone {
            segments: vec![segs[rng.random_range(0..segs.len())].clone()],
            base: Default::default(),
        },
    };
    let budget = if rng.random_bool(0.1) {
        0.0
    } else {
        rng.random_range(0.0..0.3)
    };
    let vehicle = VehicleConfig {
        policy,
        energy_model: if rng.random_bool(0.5) {
            EnergyModel::Mean
        } else {
            EnergyModel::Max
        },
        ..VehicleConfig::new("v", budget)
    };
    let flows = if rng.random_bool(0.5) {
        segs.iter()
            .map(|s| (s.clone(), rng.random_range(0.0..50.0)))
            .collect()
    } else {
        Default::default()
    };
    let options = SimOptions {
        predictor: if rng.random_bool(0.5) {
            PredictorKind::Counts
        } else {
            PredictorKind::Markov
        },
        realization: if rng.random_bool(0.5) {
            Realization::Forecast
        } else {
            Realization::Sampled
        },
        flows,
        ..SimOptions::default()
    };
    RandomScenario {
        network,
        history,
        density,
        vehicle,
        options,
        seed: rng.random(),
    }
}

/// SOC non-negative and non-increasing, electric energy bounded by the
/// applied fraction and, in total, by the budget.
pub fn check_trace(
    trace: &pedaware::sim::SimulationTrace,
    vehicle: &pedaware::sim::VehicleConfig,
) -> Result<(), String> {
    let mut prev = vehicle.initial_soc();
    for s in &trace.steps {
        if s.soc_kwh < 0.0 {
            return Err(format!("step {}: negative SOC {}", s.step, s.soc_kwh));
        }
        if s.soc_kwh > prev {
            return Err(format!(
                "step {}: SOC rose from {prev} to {}",
                s.step, s.soc_kwh
            ));
        }
        prev = s.soc_kwh;
        if !(0.0..=1.0).contains(&s.x) {
            return Err(format!("step {}: x = {}", s.step, s.x));
        }
        if s.electric_kwh > s.x * s.segment_energy_kwh + 1e-12 {
            return Err(format!(
                "step {}: electric {} above x·e",
                s.step, s.electric_kwh
            ));
        }
        if (s.clean_air + s.pollutant_units - s.density).abs() > 1e-9 * (1.0 + s.density) {
            return Err(format!("step {}: clean + pollutant != density", s.step));
        }
    }
    if trace.total_electric_kwh > vehicle.initial_budget_kwh + 1e-9 {
        return Err(format!(
            "spent {} of budget {}",
            trace.total_electric_kwh, vehicle.initial_budget_kwh
        ));
    }
    Ok(())
}
