//! Road segments, routes and the validated network built from them.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{RouteId, SegmentId};

/// Default upper bound on a segment's length, in meters.
pub const DEFAULT_MAX_SEGMENT_LEN_M: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub length_m: f64,
}

impl Segment {
    pub fn new(id: impl Into<SegmentId>, length_m: f64) -> Self {
        Self {
            id: id.into(),
            length_m,
        }
    }
}

/// An ordered, loop-free sequence of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: RouteId,
    pub segment_ids: Vec<SegmentId>,
}

impl Route {
    pub fn new<S: Into<SegmentId>>(
        id: impl Into<RouteId>,
        segments: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            id: id.into(),
            segment_ids: segments.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, segment: &SegmentId) -> bool {
        self.segment_ids.contains(segment)
    }

    pub fn position(&self, segment: &SegmentId) -> Option<usize> {
        self.segment_ids.iter().position(|s| s == segment)
    }

    /// The part of the route from `segment` (inclusive) to the end.
    pub fn suffix_from(&self, segment: &SegmentId) -> Option<&[SegmentId]> {
        self.position(segment).map(|i| &self.segment_ids[i..])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("network needs at least one segment and one route")]
    Empty,
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("route `{route}` references unknown segment `{segment}`")]
    UnknownSegment { route: RouteId, segment: SegmentId },
    #[error("route `{0}` has no segments")]
    EmptyRoute(RouteId),
    #[error("route `{route}` visits segment `{segment}` more than once")]
    RepeatedSegment { route: RouteId, segment: SegmentId },
    #[error("segment `{segment}` has non-positive length {length_m}")]
    NonPositiveLength { segment: SegmentId, length_m: f64 },
    #[error("segment `{segment}` is {length_m} m long, above the {max_m} m limit")]
    SegmentTooLong {
        segment: SegmentId,
        length_m: f64,
        max_m: f64,
    },
}

/// Validated, immutable road network.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    segments: IndexMap<SegmentId, Segment>,
    routes: IndexMap<RouteId, Route>,
    max_segment_len_m: f64,
}

/// Builds a network with the default 500 m segment-length limit.
pub fn build_network(
    segments: Vec<Segment>,
    routes: Vec<Route>,
) -> Result<RoadNetwork, NetworkError> {
    RoadNetwork::with_max_segment_len(segments, routes, DEFAULT_MAX_SEGMENT_LEN_M)
}

impl RoadNetwork {
    pub fn with_max_segment_len(
        segments: Vec<Segment>,
        routes: Vec<Route>,
        max_segment_len_m: f64,
    ) -> Result<Self, NetworkError> {
        if segments.is_empty() || routes.is_empty() {
            return Err(NetworkError::Empty);
        }

        let mut seg_map = IndexMap::with_capacity(segments.len());
        for seg in segments {
            if seg.length_m <= 0.0 || !seg.length_m.is_finite() {
                return Err(NetworkError::NonPositiveLength {
                    segment: seg.id,
                    length_m: seg.length_m,
                });
            }
            if seg.length_m > max_segment_len_m {
                return Err(NetworkError::SegmentTooLong {
                    segment: seg.id,
                    length_m: seg.length_m,
                    max_m: max_segment_len_m,
                });
            }
            if seg_map.contains_key(&seg.id) {
                return Err(NetworkError::DuplicateId {
                    kind: "segment",
                    id: seg.id.to_string(),
                });
            }
            seg_map.insert(seg.id.clone(), seg);
        }

        let mut route_map = IndexMap::with_capacity(routes.len());
        for route in routes {
            if route.segment_ids.is_empty() {
                return Err(NetworkError::EmptyRoute(route.id));
            }
            let mut seen = HashSet::new();
            for sid in &route.segment_ids {
                if !seg_map.contains_key(sid) {
                    return Err(NetworkError::UnknownSegment {
                        route: route.id.clone(),
                        segment: sid.clone(),
                    });
                }
                if !seen.insert(sid) {
                    return Err(NetworkError::RepeatedSegment {
                        route: route.id.clone(),
                        segment: sid.clone(),
                    });
                }
            }
            if route_map.contains_key(&route.id) {
                return Err(NetworkError::DuplicateId {
                    kind: "route",
                    id: route.id.to_string(),
                });
            }
            route_map.insert(route.id.clone(), route);
        }

        Ok(Self {
            segments: seg_map,
            routes: route_map,
            max_segment_len_m,
        })
    }

    pub fn segment(&self, id: &SegmentId) -> Option<&Segment> {
        self.segments.get(id)
    }

    pub fn route(&self, id: &RouteId) -> Option<&Route> {
        self.routes.get(id)
    }

    pub fn has_segment(&self, id: &SegmentId) -> bool {
        self.segments.contains_key(id)
    }

    /// Segments in definition order.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.values()
    }

    /// Routes in definition order.
    pub fn routes(&self) -> impl Iterator<Item = &Route> {
        self.routes.values()
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = &SegmentId> {
        self.segments.keys()
    }

    pub fn max_segment_len_m(&self) -> f64 {
        self.max_segment_len_m
    }

    /// The universe of segments that appear in at least one route, in
    /// segment definition order.
    pub fn route_universe(&self) -> Vec<SegmentId> {
        let used: HashSet<&SegmentId> = self
            .routes
            .values()
            .flat_map(|r| r.segment_ids.iter())
            .collect();
        self.segments
            .keys()
            .filter(|s| used.contains(s))
            .cloned()
            .collect()
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            max_segment_len_m: Some(self.max_segment_len_m),
            segments: self.segments.values().cloned().collect(),
            routes: self.routes.values().cloned().collect(),
        }
    }
}

/// On-disk network definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_segment_len_m: Option<f64>,
    pub segments: Vec<Segment>,
    pub routes: Vec<Route>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<RoadNetwork, NetworkError> {
        let max = self.max_segment_len_m.unwrap_or(DEFAULT_MAX_SEGMENT_LEN_M);
        RoadNetwork::with_max_segment_len(self.segments, self.routes, max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("lengths must be positive (road {road_length_m} m, max {max_len_m} m)")]
pub struct NonPositiveLength {
    pub road_length_m: f64,
    pub max_len_m: f64,
}

/// Splits a road into `ceil(road_length / max_len)` equal pieces.
pub fn segmentize(road_length_m: f64, max_len_m: f64) -> Result<Vec<f64>, NonPositiveLength> {
    let valid = |v: f64| v > 0.0 && v.is_finite();
    if !valid(road_length_m) || !valid(max_len_m) {
        return Err(NonPositiveLength {
            road_length_m,
            max_len_m,
        });
    }
    let mut pieces = (road_length_m / max_len_m).ceil() as usize;
    // ceil on an inexact quotient can undershoot by one
    if road_length_m / pieces as f64 > max_len_m {
        pieces += 1;
    }
    let piece = road_length_m / pieces as f64;
    Ok(vec![piece; pieces])
}
