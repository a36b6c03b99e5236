//! On-disk formats: JSON inputs, scenario files and CSV outputs.
//!
//! CSV columns follow the field order of the serialized row types. Floats
//! are written in shortest round-trip form, so a file read back parses to
//! the same values.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{
    aggregate_points, DensityError, DensityProvider, PointObservation, ReplayDensity,
    StaticDensity, SyntheticDensity,
};
use crate::history::{HistoryError, HistoryFile, TripHistory};
use crate::ids::SegmentId;
use crate::network::{NetworkError, NetworkFile, RoadNetwork};
use crate::optimize::{AllocationPlan, SegmentInstance};
use crate::predict::PredictorKind;
use crate::sim::{
    ComparisonTable, FleetTrace, Realization, ScenarioVariant, SimOptions, SimulationTrace,
    StepRecord, SweepResult, VehicleConfig, DEFAULT_SPEED_MPS,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("cannot write output: {0}")]
    Write(String),
    #[error(
        "bad density source `{0}` (expected static:<file>, replay:<file> or synthetic:<seed>)"
    )]
    DensitySpec(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_network(path: &Path) -> Result<RoadNetwork, IoError> {
    Ok(read_json::<NetworkFile>(path)?.into_network()?)
}

pub fn load_history(path: &Path, network: &RoadNetwork) -> Result<TripHistory, IoError> {
    Ok(read_json::<HistoryFile>(path)?.into_history(network)?)
}

/// A standalone optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    pub segments: Vec<SegmentInstance>,
    /// Candidate routes for the robust problem, as segment lists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<Vec<SegmentId>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub green: Vec<SegmentId>,
}

/// Where densities come from: `static:<file>`, `replay:<file>` or
/// `synthetic:<seed>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DensitySource {
    Static(PathBuf),
    Replay(PathBuf),
    Synthetic(u64),
}

impl DensitySource {
    /// Parses a source string; file paths are taken relative to `base`.
    pub fn parse(spec: &str, base: &Path) -> Result<Self, IoError> {
        let bad = || IoError::DensitySpec(spec.to_string());
        let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
        match kind {
            "static" => Ok(Self::Static(base.join(arg))),
            "replay" => Ok(Self::Replay(base.join(arg))),
            "synthetic" => arg.parse().map(Self::Synthetic).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            Self::Static(p) | Self::Replay(p) => Some(p),
            Self::Synthetic(_) => None,
        }
    }

    pub fn load(&self, network: &RoadNetwork) -> Result<Box<dyn DensityProvider>, IoError> {
        Ok(match self {
            Self::Static(path) => {
                let text = read_text(path)?;
                let parse_err = |e: serde_json::Error| IoError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                };
                let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
                let counts = if value.is_array() {
                    let points: Vec<PointObservation> =
                        serde_json::from_value(value).map_err(parse_err)?;
                    aggregate_points(&points, network)?.counts
                } else {
                    serde_json::from_value(value).map_err(parse_err)?
                };
                Box::new(StaticDensity::new(network, counts)?)
            }
            Self::Replay(path) => {
                let snaps =
                    ReplayDensity::parse_jsonl(&read_text(path)?).map_err(|e| IoError::Parse {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                Box::new(ReplayDensity::new(network, snaps)?)
            }
            Self::Synthetic(seed) => Box::new(SyntheticDensity::new(network, *seed)),
        })
    }
}

fn default_density() -> String {
    "synthetic:0".into()
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_MPS
}

/// Everything a simulation run reads. Paths are relative to the scenario
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub network: PathBuf,
    pub history: PathBuf,
    #[serde(default = "default_density")]
    pub density: String,
    pub vehicles: Vec<VehicleConfig>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub flows: IndexMap<SegmentId, f64>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub caps: IndexMap<SegmentId, f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub predictor: PredictorKind,
    #[serde(default)]
    pub realization: Realization,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    /// Variants for `compare`; the standard three when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<ScenarioVariant>>,
}

pub struct Scenario {
    pub file: ScenarioFile,
    pub network: RoadNetwork,
    pub history: TripHistory,
    pub density: Box<dyn DensityProvider>,
    /// Resolved paths of every file read, scenario first.
    pub inputs: Vec<PathBuf>,
}

impl Scenario {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            predictor: self.file.predictor,
            realization: self.file.realization,
            speed_mps: self.file.speed_mps,
            flows: self.file.flows.clone(),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let file: ScenarioFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let network_path = base.join(&file.network);
    let history_path = base.join(&file.history);
    let network = load_network(&network_path)?;
    let history = load_history(&history_path, &network)?;
    let source = DensitySource::parse(&file.density, base)?;
    let density = source.load(&network)?;
    let mut inputs = vec![path.to_path_buf(), network_path, history_path];
    inputs.extend(source.path().map(Path::to_path_buf));
    Ok(Scenario {
        file,
        network,
        history,
        density,
        inputs,
    })
}

/// Provenance block embedded in every summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[PathBuf], seed: Option<u64>, output_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            output_dir: output_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

fn write_rows<W: Write, T: Serialize>(
    out: W,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| IoError::Write(e.to_string()))?;
    }
    w.flush().map_err(|e| IoError::Write(e.to_string()))
}

fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// One row per step: `step, segment_id, soc_kwh, x, electric_kwh, clean_air,
/// pollutant_units`, then the diagnostic columns.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<(), IoError> {
    write_rows(out, &trace.steps)
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<StepRecord>, csv::Error> {
    read_rows(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub segment_id: SegmentId,
    pub p: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub x: f64,
}

pub fn plan_rows(instances: &[SegmentInstance], plan: &AllocationPlan) -> Vec<PlanRow> {
    instances
        .iter()
        .map(|i| PlanRow {
            segment_id: i.segment.clone(),
            p: i.p,
            d: i.d,
            e: i.e,
            f: i.f,
            x: plan.x_of(&i.segment),
        })
        .collect()
}

pub fn write_plan_csv<W: Write>(
    instances: &[SegmentInstance],
    plan: &AllocationPlan,
    out: W,
) -> Result<(), IoError> {
    write_rows(out, plan_rows(instances, plan))
}

pub fn read_plan_csv<R: Read>(input: R) -> Result<Vec<PlanRow>, csv::Error> {
    read_rows(input)
}

/// `scenario, step, segment_id, soc_kwh, cumulative_objective,
/// cumulative_clean_air`
pub fn write_comparison_csv<W: Write>(table: &ComparisonTable, out: W) -> Result<(), IoError> {
    write_rows(out, &table.rows)
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), IoError> {
    write_rows(out, &result.rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetRow {
    pub segment_id: SegmentId,
    pub vehicles: f64,
    pub density: f64,
    pub pollutant_units: f64,
    pub clean_air_units: f64,
}

pub fn write_fleet_csv<W: Write>(trace: &FleetTrace, out: W) -> Result<(), IoError> {
    write_rows(
        out,
        trace.segments.iter().map(|(s, t)| FleetRow {
            segment_id: s.clone(),
            vehicles: t.vehicles,
            density: t.density,
            pollutant_units: t.pollutant_units,
            clean_air_units: t.clean_air_units,
        }),
    )
}
