//! Pedestrian density per segment: static tables, replayed snapshot feeds and
//! seeded synthetic generators.

use std::collections::HashSet;
use std::f64::consts::TAU;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::SegmentId;
use crate::network::RoadNetwork;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("unknown segment `{0}`")]
    UnknownSegment(SegmentId),
    #[error("density {value} on segment `{segment}` is negative or not finite")]
    InvalidCount { segment: SegmentId, value: f64 },
    #[error("observation weight {0} is negative or not finite")]
    NegativeWeight(f64),
    #[error("offset {offset_m} m is outside segment `{segment}` ({length_m} m)")]
    OffsetOutOfRange {
        segment: SegmentId,
        offset_m: f64,
        length_m: f64,
    },
    #[error("replay feed has no snapshots")]
    EmptyReplay,
    #[error("synthetic parameter {0} out of range")]
    InvalidParameter(&'static str),
}

/// Pedestrians per segment at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    /// Seconds since simulation start.
    pub t: f64,
    pub counts: IndexMap<SegmentId, f64>,
}

pub trait DensityProvider {
    fn density(&self, segment: &SegmentId, time_s: f64) -> Result<f64, DensityError>;
}

fn known_segments(network: &RoadNetwork) -> HashSet<SegmentId> {
    network.segment_ids().cloned().collect()
}

fn check_counts(
    known: &HashSet<SegmentId>,
    counts: &IndexMap<SegmentId, f64>,
) -> Result<(), DensityError> {
    for (segment, &value) in counts {
        if !known.contains(segment) {
            return Err(DensityError::UnknownSegment(segment.clone()));
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(DensityError::InvalidCount {
                segment: segment.clone(),
                value,
            });
        }
    }
    Ok(())
}

/// Time-independent table; segments missing from it have no pedestrians.
#[derive(Debug, Clone)]
pub struct StaticDensity {
    counts: IndexMap<SegmentId, f64>,
    known: HashSet<SegmentId>,
}

impl StaticDensity {
    pub fn new(
        network: &RoadNetwork,
        counts: IndexMap<SegmentId, f64>,
    ) -> Result<Self, DensityError> {
        let known = known_segments(network);
        check_counts(&known, &counts)?;
        Ok(Self { counts, known })
    }

    /// Same density on every segment of the network.
    pub fn uniform(network: &RoadNetwork, value: f64) -> Result<Self, DensityError> {
        Self::new(
            network,
            network.segment_ids().map(|s| (s.clone(), value)).collect(),
        )
    }
}

impl DensityProvider for StaticDensity {
    fn density(&self, segment: &SegmentId, _time_s: f64) -> Result<f64, DensityError> {
        if !self.known.contains(segment) {
            return Err(DensityError::UnknownSegment(segment.clone()));
        }
        Ok(self.counts.get(segment).copied().unwrap_or(0.0))
    }
}

/// Replays timestamped snapshots; a query sees the latest snapshot at or
/// before its time (the first one before the feed starts).
#[derive(Debug, Clone)]
pub struct ReplayDensity {
    snapshots: Vec<DensitySnapshot>,
    known: HashSet<SegmentId>,
}

impl ReplayDensity {
    pub fn new(
        network: &RoadNetwork,
        mut snapshots: Vec<DensitySnapshot>,
    ) -> Result<Self, DensityError> {
        if snapshots.is_empty() {
            return Err(DensityError::EmptyReplay);
        }
        let known = known_segments(network);
        for snap in &snapshots {
            check_counts(&known, &snap.counts)?;
        }
        snapshots.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { snapshots, known })
    }

    /// Parses one JSON snapshot per non-empty line.
    pub fn parse_jsonl(text: &str) -> Result<Vec<DensitySnapshot>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

impl DensityProvider for ReplayDensity {
    fn density(&self, segment: &SegmentId, time_s: f64) -> Result<f64, DensityError> {
        if !self.known.contains(segment) {
            return Err(DensityError::UnknownSegment(segment.clone()));
        }
        let idx = self
            .snapshots
            .partition_point(|s| s.t <= time_s)
            .saturating_sub(1);
        Ok(self.snapshots[idx]
            .counts
            .get(segment)
            .copied()
            .unwrap_or(0.0))
    }
}

/// Seeded sinusoidal density:
/// `base_s · (1 + amplitude · sin(2π t / period + phase_s))`, where the
/// per-segment base (uniform in `[base_min, base_max]`) and phase are derived
/// by hashing the seed with the segment id.
#[derive(Debug, Clone)]
pub struct SyntheticDensity {
    seed: u64,
    base_min: f64,
    base_max: f64,
    amplitude: f64,
    period_s: f64,
    known: HashSet<SegmentId>,
}

impl SyntheticDensity {
    pub fn new(network: &RoadNetwork, seed: u64) -> Self {
        Self {
            seed,
            base_min: 0.0,
            base_max: 100.0,
            amplitude: 0.3,
            period_s: 3600.0,
            known: known_segments(network),
        }
    }

    pub fn with_shape(
        mut self,
        base_min: f64,
        base_max: f64,
        amplitude: f64,
        period_s: f64,
    ) -> Result<Self, DensityError> {
        if !(base_min >= 0.0 && base_max >= base_min && base_max.is_finite()) {
            return Err(DensityError::InvalidParameter("base range"));
        }
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(DensityError::InvalidParameter("amplitude"));
        }
        if !(period_s > 0.0 && period_s.is_finite()) {
            return Err(DensityError::InvalidParameter("period"));
        }
        self.base_min = base_min;
        self.base_max = base_max;
        self.amplitude = amplitude;
        self.period_s = period_s;
        Ok(self)
    }

    fn unit_pair(&self, segment: &SegmentId) -> (f64, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(segment.as_str().as_bytes());
        let digest = h.finalize();
        let unit = |bytes: &[u8]| {
            let v = u64::from_le_bytes(bytes.try_into().expect("8 bytes"));
            (v >> 11) as f64 / (1u64 << 53) as f64
        };
        (unit(&digest[0..8]), unit(&digest[8..16]))
    }

    pub fn baseline(&self, segment: &SegmentId) -> f64 {
        let (u, _) = self.unit_pair(segment);
        self.base_min + u * (self.base_max - self.base_min)
    }
}

impl DensityProvider for SyntheticDensity {
    fn density(&self, segment: &SegmentId, time_s: f64) -> Result<f64, DensityError> {
        if !self.known.contains(segment) {
            return Err(DensityError::UnknownSegment(segment.clone()));
        }
        let (u, phase) = self.unit_pair(segment);
        let base = self.base_min + u * (self.base_max - self.base_min);
        let wave = (TAU * time_s / self.period_s + TAU * phase).sin();
        Ok((base * (1.0 + self.amplitude * wave)).max(0.0))
    }
}

/// A measurement already resolved to a segment, optionally with its position
/// along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointObservation {
    pub segment: SegmentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_m: Option<f64>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Sums observation weights per segment; segments without observations get 0.
pub fn aggregate_points(
    observations: &[PointObservation],
    network: &RoadNetwork,
) -> Result<DensitySnapshot, DensityError> {
    let mut counts: IndexMap<SegmentId, f64> =
        network.segment_ids().map(|s| (s.clone(), 0.0)).collect();
    for obs in observations {
        let seg = network
            .segment(&obs.segment)
            .ok_or_else(|| DensityError::UnknownSegment(obs.segment.clone()))?;
        if !(obs.weight >= 0.0 && obs.weight.is_finite()) {
            return Err(DensityError::NegativeWeight(obs.weight));
        }
        if let Some(offset_m) = obs.offset_m {
            if !(0.0..=seg.length_m).contains(&offset_m) {
                return Err(DensityError::OffsetOutOfRange {
                    segment: obs.segment.clone(),
                    offset_m,
                    length_m: seg.length_m,
                });
            }
        }
        counts[&obs.segment] += obs.weight;
    }
    Ok(DensitySnapshot { t: 0.0, counts })
}
