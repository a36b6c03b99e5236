//! First-order Markov chain over segment-to-segment transitions.

use indexmap::IndexMap;
use petgraph::algo::toposort;
use petgraph::graphmap::DiGraphMap;

use super::{PredictError, SegmentPrediction};
use crate::history::TripHistory;
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;

/// Transition model learned from stored routes, each hop weighted by the
/// route's trip count.
///
/// `transition` is row-stochastic over successors. Trips may also end at a
/// state while others continue through it; `continuation` holds the
/// probability of leaving a state at all (1 where no stored trip ends there).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    states: Vec<SegmentId>,
    transition: IndexMap<SegmentId, IndexMap<SegmentId, f64>>,
    continuation: IndexMap<SegmentId, f64>,
    topo_order: Vec<SegmentId>,
}

pub fn build_markov(
    history: &TripHistory,
    network: &RoadNetwork,
) -> Result<MarkovModel, PredictError> {
    if history.is_empty() {
        return Err(PredictError::EmptyHistory);
    }

    let mut visits: IndexMap<SegmentId, f64> = IndexMap::new();
    let mut counts: IndexMap<SegmentId, IndexMap<SegmentId, f64>> = IndexMap::new();
    for route in network.routes() {
        let n = history.count(&route.id) as f64;
        if n == 0.0 {
            continue;
        }
        for seg in &route.segment_ids {
            *visits.entry(seg.clone()).or_default() += n;
        }
        for hop in route.segment_ids.windows(2) {
            *counts
                .entry(hop[0].clone())
                .or_default()
                .entry(hop[1].clone())
                .or_default() += n;
        }
    }

    // keep network order for states so outputs are stable
    let states: Vec<SegmentId> = network
        .segment_ids()
        .filter(|s| visits.contains_key(*s))
        .cloned()
        .collect();
    let index: IndexMap<&SegmentId, usize> =
        states.iter().enumerate().map(|(i, s)| (s, i)).collect();

    let mut graph = DiGraphMap::<usize, ()>::new();
    for i in 0..states.len() {
        graph.add_node(i);
    }
    let mut transition = IndexMap::new();
    let mut continuation = IndexMap::new();
    for state in &states {
        let row = counts.get(state);
        let out: f64 = row.map(|r| r.values().sum()).unwrap_or(0.0);
        continuation.insert(state.clone(), out / visits[state]);
        if let Some(row) = row {
            let probs: IndexMap<SegmentId, f64> =
                row.iter().map(|(b, c)| (b.clone(), c / out)).collect();
            for b in probs.keys() {
                graph.add_edge(index[state], index[b], ());
            }
            transition.insert(state.clone(), probs);
        }
    }

    let topo_order = toposort(&graph, None)
        .map_err(|_| PredictError::CyclicTransitions)?
        .into_iter()
        .map(|i| states[i].clone())
        .collect();

    Ok(MarkovModel {
        states,
        transition,
        continuation,
        topo_order,
    })
}

impl MarkovModel {
    pub fn states(&self) -> &[SegmentId] {
        &self.states
    }

    /// `P[from][to]`, 0 when the transition was never observed.
    pub fn transition(&self, from: &SegmentId, to: &SegmentId) -> f64 {
        self.transition
            .get(from)
            .and_then(|row| row.get(to))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn row(&self, from: &SegmentId) -> Option<&IndexMap<SegmentId, f64>> {
        self.transition.get(from)
    }

    pub fn continuation(&self, state: &SegmentId) -> f64 {
        self.continuation.get(state).copied().unwrap_or(0.0)
    }

    fn check_state(&self, state: &SegmentId) -> Result<(), PredictError> {
        if self.continuation.contains_key(state) {
            Ok(())
        } else {
            Err(PredictError::UnknownState(state.clone()))
        }
    }

    /// Probability of the trip following `path` exactly and ending at its
    /// last segment, given that it is currently on `path[0]`.
    pub fn path_probability(&self, path: &[SegmentId]) -> f64 {
        let mut p = 1.0;
        for hop in path.windows(2) {
            p *= self.continuation(&hop[0]) * self.transition(&hop[0], &hop[1]);
        }
        match path.last() {
            Some(last) => p * (1.0 - self.continuation(last)),
            None => 0.0,
        }
    }

    /// Route distribution implied by the chain: each network route through
    /// `current` gets the probability of its remaining path. Routes sharing an
    /// identical remaining path split that probability evenly.
    pub fn route_probabilities(
        &self,
        network: &RoadNetwork,
        current: &SegmentId,
    ) -> Result<IndexMap<RouteId, f64>, PredictError> {
        self.check_state(current)?;
        let mut suffix_groups: IndexMap<&[SegmentId], usize> = IndexMap::new();
        for route in network.routes() {
            if let Some(suffix) = route.suffix_from(current) {
                *suffix_groups.entry(suffix).or_default() += 1;
            }
        }
        let mut probs: IndexMap<RouteId, f64> = network
            .routes()
            .map(|route| {
                let p = route
                    .suffix_from(current)
                    .map(|s| self.path_probability(s) / suffix_groups[s] as f64)
                    .unwrap_or(0.0);
                (route.id.clone(), p)
            })
            .collect();
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Err(PredictError::NoMatchingRoute(current.clone()));
        }
        for p in probs.values_mut() {
            *p /= total;
        }
        Ok(probs)
    }
}

/// Probability of ever reaching each state from `current`.
///
/// Exact forward propagation along the topological order: on a DAG every
/// path meets a state at most once, so the mass flowing into a state is its
/// reach probability. `route_probs` is left empty; the chain alone does not
/// know route identities (see [`MarkovModel::route_probabilities`]).
pub fn markov_segment_probabilities(
    model: &MarkovModel,
    current: &SegmentId,
) -> Result<SegmentPrediction, PredictError> {
    model.check_state(current)?;
    let mut mass: IndexMap<SegmentId, f64> =
        model.states.iter().map(|s| (s.clone(), 0.0)).collect();
    mass[current] = 1.0;
    let start = model
        .topo_order
        .iter()
        .position(|s| s == current)
        .expect("state in order");
    for state in &model.topo_order[start..] {
        let m = mass[state];
        if m == 0.0 {
            continue;
        }
        let leave = m * model.continuation(state);
        if let Some(row) = model.transition.get(state) {
            for (next, p) in row {
                mass[next] += leave * p;
            }
        }
    }
    for p in mass.values_mut() {
        *p = p.min(1.0);
    }
    mass[current] = 1.0;
    Ok(SegmentPrediction {
        current_segment: current.clone(),
        route_probs: IndexMap::new(),
        segment_probs: mass,
    })
}
