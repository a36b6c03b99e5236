//! Trip history: how often each route was driven, and the electric energy
//! observed on each segment.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{RouteId, SegmentId};
use crate::network::RoadNetwork;

pub const DEFAULT_CAPACITY: usize = 100;

/// Upper bound of the synthetic per-segment electric energy, kWh.
pub const SYNTHETIC_MAX_KWH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistoryError {
    #[error("unknown route `{0}`")]
    UnknownRoute(RouteId),
    #[error("unknown segment `{0}`")]
    UnknownSegment(SegmentId),
    #[error("segment `{segment}` is not on route `{route}`")]
    SegmentNotOnRoute { route: RouteId, segment: SegmentId },
    #[error("energy sample {value} kWh on segment `{segment}` is negative or not finite")]
    NegativeEnergy { segment: SegmentId, value: f64 },
    #[error("no energy samples for segment `{0}`")]
    NoSamples(SegmentId),
    #[error("route `{0}` has a zero trip count")]
    ZeroCount(RouteId),
    #[error("history holds {routes} routes, above its capacity of {capacity}")]
    CapacityExceeded { routes: usize, capacity: usize },
    #[error("capacity must be at least 2, got {0}")]
    InvalidCapacity(usize),
    #[error("history has no trips")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mean_kwh: f64,
    pub max_kwh: f64,
    pub sample_count: usize,
}

/// Which statistic of the stored samples stands in for a segment's energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyModel {
    #[default]
    Mean,
    Max,
}

impl EnergyEstimate {
    pub fn value(&self, model: EnergyModel) -> f64 {
        match model {
            EnergyModel::Mean => self.mean_kwh,
            EnergyModel::Max => self.max_kwh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripHistory {
    route_counts: IndexMap<RouteId, u64>,
    last_recorded: IndexMap<RouteId, u64>,
    energy_samples: IndexMap<SegmentId, Vec<f64>>,
    capacity: usize,
    tick: u64,
}

impl TripHistory {
    pub fn new(capacity: usize) -> Result<Self, HistoryError> {
        // with a single slot the only stored route would be evicted even when
        // it is the most travelled one
        if capacity < 2 {
            return Err(HistoryError::InvalidCapacity(capacity));
        }
        Ok(Self {
            route_counts: IndexMap::new(),
            last_recorded: IndexMap::new(),
            energy_samples: IndexMap::new(),
            capacity,
            tick: 0,
        })
    }

    /// Builds a history from route counts alone, oldest route first.
    pub fn from_counts<R: Into<RouteId>>(
        network: &RoadNetwork,
        counts: impl IntoIterator<Item = (R, u64)>,
        capacity: usize,
    ) -> Result<Self, HistoryError> {
        let mut h = Self::new(capacity)?;
        for (route, count) in counts {
            let route = route.into();
            if network.route(&route).is_none() {
                return Err(HistoryError::UnknownRoute(route));
            }
            if count == 0 {
                return Err(HistoryError::ZeroCount(route));
            }
            h.tick += 1;
            *h.route_counts.entry(route.clone()).or_insert(0) += count;
            h.last_recorded.insert(route, h.tick);
        }
        if h.route_counts.len() > capacity {
            return Err(HistoryError::CapacityExceeded {
                routes: h.route_counts.len(),
                capacity,
            });
        }
        Ok(h)
    }

    /// Returns a copy with extra energy samples for one segment.
    pub fn with_samples(
        &self,
        network: &RoadNetwork,
        segment: &SegmentId,
        kwh: &[f64],
    ) -> Result<Self, HistoryError> {
        if !network.has_segment(segment) {
            return Err(HistoryError::UnknownSegment(segment.clone()));
        }
        check_energy(segment, kwh.iter().copied())?;
        let mut next = self.clone();
        next.energy_samples
            .entry(segment.clone())
            .or_default()
            .extend_from_slice(kwh);
        Ok(next)
    }

    /// Records one trip along `route`, returning the updated history.
    ///
    /// Energies must be keyed by segments of that route; segments without an
    /// entry simply get no new sample. When a new route would push the number
    /// of stored routes past capacity, the least-travelled stored route is
    /// evicted (oldest first on ties). Energy samples are per segment and are
    /// kept across evictions.
    pub fn record_trip(
        &self,
        network: &RoadNetwork,
        route: &RouteId,
        energies: &IndexMap<SegmentId, f64>,
    ) -> Result<Self, HistoryError> {
        let def = network
            .route(route)
            .ok_or_else(|| HistoryError::UnknownRoute(route.clone()))?;
        for (seg, &kwh) in energies {
            if !def.contains(seg) {
                return Err(HistoryError::SegmentNotOnRoute {
                    route: route.clone(),
                    segment: seg.clone(),
                });
            }
            check_energy(seg, [kwh])?;
        }

        let mut next = self.clone();
        if !next.route_counts.contains_key(route) && next.route_counts.len() >= next.capacity {
            next.evict_one();
        }
        next.tick += 1;
        *next.route_counts.entry(route.clone()).or_insert(0) += 1;
        next.last_recorded.insert(route.clone(), next.tick);
        for (seg, &kwh) in energies {
            next.energy_samples
                .entry(seg.clone())
                .or_default()
                .push(kwh);
        }
        Ok(next)
    }

    fn evict_one(&mut self) {
        let victim = self
            .route_counts
            .iter()
            .min_by_key(|(id, &count)| (count, self.last_recorded.get(*id).copied().unwrap_or(0)))
            .map(|(id, _)| id.clone());
        if let Some(id) = victim {
            self.route_counts.shift_remove(&id);
            self.last_recorded.shift_remove(&id);
        }
    }

    pub fn expected_energy(&self, segment: &SegmentId) -> Result<EnergyEstimate, HistoryError> {
        let samples = self
            .energy_samples
            .get(segment)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| HistoryError::NoSamples(segment.clone()))?;
        let mean_kwh = samples.iter().sum::<f64>() / samples.len() as f64;
        let max_kwh = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(EnergyEstimate {
            // summation rounding must not push the mean over the max
            mean_kwh: mean_kwh.min(max_kwh),
            max_kwh,
            sample_count: samples.len(),
        })
    }

    pub fn samples(&self, segment: &SegmentId) -> &[f64] {
        self.energy_samples
            .get(segment)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn count(&self, route: &RouteId) -> u64 {
        self.route_counts.get(route).copied().unwrap_or(0)
    }

    /// Stored routes with their counts, in insertion order.
    pub fn route_counts(&self) -> impl Iterator<Item = (&RouteId, u64)> {
        self.route_counts.iter().map(|(id, &c)| (id, c))
    }

    pub fn total_trips(&self) -> u64 {
        self.route_counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.route_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.route_counts.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn to_file(&self) -> HistoryFile {
        let mut trips: Vec<_> = self
            .route_counts
            .iter()
            .map(|(id, &count)| {
                (
                    self.last_recorded.get(id).copied().unwrap_or(0),
                    id.clone(),
                    count,
                )
            })
            .collect();
        trips.sort_by_key(|(tick, _, _)| *tick);
        HistoryFile {
            capacity: Some(self.capacity),
            trips: trips
                .into_iter()
                .map(|(_, route_id, count)| TripRecord { route_id, count })
                .collect(),
            energy_samples: self
                .energy_samples
                .iter()
                .map(|(segment_id, kwh)| SegmentSamples {
                    segment_id: segment_id.clone(),
                    kwh: kwh.clone(),
                })
                .collect(),
        }
    }
}

fn check_energy(
    segment: &SegmentId,
    values: impl IntoIterator<Item = f64>,
) -> Result<(), HistoryError> {
    for value in values {
        if value < 0.0 || !value.is_finite() {
            return Err(HistoryError::NegativeEnergy {
                segment: segment.clone(),
                value,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub route_id: RouteId,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSamples {
    pub segment_id: SegmentId,
    pub kwh: Vec<f64>,
}

/// On-disk history. Trips are listed oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    pub trips: Vec<TripRecord>,
    #[serde(default)]
    pub energy_samples: Vec<SegmentSamples>,
}

impl HistoryFile {
    pub fn into_history(self, network: &RoadNetwork) -> Result<TripHistory, HistoryError> {
        let mut h = TripHistory::from_counts(
            network,
            self.trips.into_iter().map(|t| (t.route_id, t.count)),
            self.capacity.unwrap_or(DEFAULT_CAPACITY),
        )?;
        for s in self.energy_samples {
            h = h.with_samples(network, &s.segment_id, &s.kwh)?;
        }
        Ok(h)
    }
}

/// A history with the given route counts and, for every segment on a counted
/// route, `samples_per_segment` energies drawn uniformly from
/// `[0, SYNTHETIC_MAX_KWH]`.
pub fn synthetic_history<R: Into<RouteId>>(
    network: &RoadNetwork,
    counts: impl IntoIterator<Item = (R, u64)>,
    samples_per_segment: usize,
    seed: u64,
) -> Result<TripHistory, HistoryError> {
    let mut h = TripHistory::from_counts(network, counts, DEFAULT_CAPACITY)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let used: Vec<SegmentId> = network
        .segment_ids()
        .filter(|s| {
            h.route_counts
                .keys()
                .any(|r| network.route(r).is_some_and(|r| r.contains(s)))
        })
        .cloned()
        .collect();
    for seg in used {
        let kwh: Vec<f64> = (0..samples_per_segment)
            .map(|_| rng.random_range(0.0..=SYNTHETIC_MAX_KWH))
            .collect();
        h.energy_samples.insert(seg, kwh);
    }
    Ok(h)
}
