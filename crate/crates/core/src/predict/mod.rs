//! Route and segment probabilities conditioned on the segment the vehicle is
//! currently driving.
//!
//! Two backends produce a [`SegmentPrediction`]: the count model, which weighs
//! every stored route through the current segment by how often it was driven,
//! and a first-order Markov chain over segment transitions
//! ([`markov::MarkovModel`]).

pub mod markov;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::TripHistory;
use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;

pub use markov::{build_markov, markov_segment_probabilities, MarkovModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("no stored route passes through segment `{0}`")]
    NoMatchingRoute(SegmentId),
    #[error("history has no trips")]
    EmptyHistory,
    #[error("segment `{0}` is not a state of the Markov model")]
    UnknownState(SegmentId),
    #[error("segment transitions in the history form a cycle")]
    CyclicTransitions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub current_segment: SegmentId,
    pub route_probs: IndexMap<RouteId, f64>,
    pub segment_probs: IndexMap<SegmentId, f64>,
}

impl SegmentPrediction {
    pub fn segment_prob(&self, segment: &SegmentId) -> f64 {
        self.segment_probs.get(segment).copied().unwrap_or(0.0)
    }

    /// Segments the vehicle may still drive, i.e. those with positive
    /// probability, in network order.
    pub fn reachable(&self) -> impl Iterator<Item = (&SegmentId, f64)> {
        self.segment_probs
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (s, p))
    }
}

/// `p(R) = N_R / Σ N` over the stored routes through `current`; every other
/// network route gets 0.
pub fn route_probabilities(
    history: &TripHistory,
    network: &RoadNetwork,
    current: &SegmentId,
) -> Result<IndexMap<RouteId, f64>, PredictError> {
    let matching_total: u64 = network
        .routes()
        .filter(|r| r.contains(current))
        .map(|r| history.count(&r.id))
        .sum();
    if matching_total == 0 {
        return Err(PredictError::NoMatchingRoute(current.clone()));
    }
    Ok(network
        .routes()
        .map(|r| {
            let p = if r.contains(current) {
                history.count(&r.id) as f64 / matching_total as f64
            } else {
                0.0
            };
            (r.id.clone(), p)
        })
        .collect())
}

/// Probability of driving each segment in the rest of the trip.
///
/// Only the part of each route from `current` onward counts, so segments
/// already behind the vehicle get 0 and `current` itself gets 1.
pub fn segment_probabilities(
    history: &TripHistory,
    network: &RoadNetwork,
    current: &SegmentId,
) -> Result<SegmentPrediction, PredictError> {
    let route_probs = route_probabilities(history, network, current)?;
    let mut segment_probs: IndexMap<SegmentId, f64> =
        network.segment_ids().map(|s| (s.clone(), 0.0)).collect();
    for route in network.routes() {
        let p = route_probs[&route.id];
        if p == 0.0 {
            continue;
        }
        if let Some(suffix) = route.suffix_from(current) {
            for seg in suffix {
                *segment_probs.get_mut(seg).expect("validated network") += p;
            }
        }
    }
    for p in segment_probs.values_mut() {
        *p = p.min(1.0);
    }
    segment_probs.insert(current.clone(), 1.0);
    Ok(SegmentPrediction {
        current_segment: current.clone(),
        route_probs,
        segment_probs,
    })
}

/// Bayes update of a route distribution after observing the vehicle on
/// `segment`: routes not containing it drop to 0, the rest are rescaled.
pub fn condition_on_segment(
    route_probs: &IndexMap<RouteId, f64>,
    network: &RoadNetwork,
    segment: &SegmentId,
) -> Option<IndexMap<RouteId, f64>> {
    let keep = |id: &RouteId| network.route(id).is_some_and(|r| r.contains(segment));
    let mass: f64 = route_probs
        .iter()
        .filter(|(id, _)| keep(id))
        .map(|(_, p)| p)
        .sum();
    if mass <= 0.0 {
        return None;
    }
    Some(
        route_probs
            .iter()
            .map(|(id, &p)| (id.clone(), if keep(id) { p / mass } else { 0.0 }))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Counts,
    Markov,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counts" => Ok(Self::Counts),
            "markov" => Ok(Self::Markov),
            other => Err(format!(
                "unknown predictor `{other}` (expected counts|markov)"
            )),
        }
    }
}

/// A ready-to-query predictor over a fixed network and history.
#[derive(Debug, Clone)]
pub enum Predictor<'a> {
    Counts {
        history: &'a TripHistory,
        network: &'a RoadNetwork,
    },
    Markov {
        model: MarkovModel,
        network: &'a RoadNetwork,
    },
}

impl<'a> Predictor<'a> {
    pub fn new(
        kind: PredictorKind,
        history: &'a TripHistory,
        network: &'a RoadNetwork,
    ) -> Result<Self, PredictError> {
        Ok(match kind {
            PredictorKind::Counts => Self::Counts { history, network },
            PredictorKind::Markov => Self::Markov {
                model: build_markov(history, network)?,
                network,
            },
        })
    }

    pub fn predict(&self, current: &SegmentId) -> Result<SegmentPrediction, PredictError> {
        match self {
            Self::Counts { history, network } => segment_probabilities(history, network, current),
            Self::Markov { model, network } => {
                let reach = markov_segment_probabilities(model, current)?;
                let segment_probs = network
                    .segment_ids()
                    .map(|s| (s.clone(), reach.segment_prob(s)))
                    .collect();
                Ok(SegmentPrediction {
                    current_segment: current.clone(),
                    route_probs: model.route_probabilities(network, current)?,
                    segment_probs,
                })
            }
        }
    }
}
