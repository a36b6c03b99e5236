//! `pedaware`: predictions, one-shot allocations and simulations from files.

mod error;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use pedaware::history::{synthetic_history, HistoryError, TripHistory};
use pedaware::ids::{RouteId, SegmentId};
use pedaware::io::{
    load_history, load_network, load_scenario, read_json, write_comparison_csv, write_fleet_csv,
    write_plan_csv, write_sweep_csv, write_trace_csv, InstanceFile, RunManifest, Scenario,
};
use pedaware::optimize::{
    formulate, solve_expected, solve_flow, solve_green_zone, solve_robust, AllocationPlan,
    GreenBase, ProblemKind,
};
use pedaware::predict::{Predictor, PredictorKind};
use pedaware::sim::{
    compare_scenarios, run_fleet, run_single, standard_variants, sweep, Policy, SweepSpec,
    VehicleConfig,
};
use serde_json::{json, Value};

use error::{CliError, EXIT_PARSE};

/// Default output directory when `--out` is not given.
const OUT_DIR_ENV: &str = "PEDAWARE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "pedaware-out";

#[derive(Parser)]
#[command(
    name = "pedaware",
    version,
    about = "Pedestrian-aware electric-mode allocation for plug-in hybrids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that input files parse and are consistent.
    Validate(ValidateArgs),
    /// Route and segment probabilities from the current segment.
    Predict(PredictArgs),
    /// Solve one allocation problem and print its formulation and plan.
    Optimize(OptimizeArgs),
    /// Rolling-horizon run for every vehicle in a scenario.
    Simulate(ScenarioArgs),
    /// Average-Forecast, Max-Forecast and None-Opt (or the scenario's own
    /// variants) on the same route.
    Compare(ScenarioArgs),
    /// One-shot fleet plan with optional pollutant caps.
    Fleet(FleetArgs),
    /// Mean allocation per segment over evenly spaced budgets.
    Sweep(SweepArgs),
    /// Create or extend trip histories.
    #[command(subcommand)]
    History(HistoryCommand),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, requires = "network")]
    history: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    history: PathBuf,
    /// Segment the vehicle is on.
    #[arg(long)]
    at: String,
    #[arg(long, default_value = "counts")]
    predictor: PredictorKind,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    instance: PathBuf,
    /// 1 expected energy, 2 every route, 3 flow-weighted.
    #[arg(long, default_value = "1")]
    problem: ProblemKind,
    /// Overrides the instance budget (kWh).
    #[arg(long)]
    budget: Option<f64>,
    /// Comma-separated segments that must be driven electrically.
    #[arg(long, value_delimiter = ',')]
    green: Vec<String>,
    /// Also write plan.json and plan.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Vehicle used by commands that run a single one; the first by default.
    #[arg(long)]
    vehicle: Option<String>,
}

#[derive(Args)]
struct FleetArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Policy for every vehicle: expected, robust, flow or none-opt.
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated green segments; sets a green-zone policy.
    #[arg(long, value_delimiter = ',')]
    green: Vec<String>,
    /// Per-vehicle budget override (kWh).
    #[arg(long)]
    budget: Option<f64>,
    /// Pollutant cap `segment=units`, repeatable; replaces the scenario caps.
    #[arg(long = "cap")]
    caps: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Largest budget; the vehicle's initial budget by default.
    #[arg(long)]
    max_budget: Option<f64>,
}

#[derive(Subcommand)]
enum HistoryCommand {
    /// Seeded history with uniform energies on [0, 0.05] kWh.
    Synth {
        #[arg(long)]
        network: PathBuf,
        /// `route=count`, repeatable.
        #[arg(long = "count", required = true)]
        counts: Vec<String>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Add one completed trip to a history.
    Record {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        route: String,
        /// `segment=kwh`, repeatable.
        #[arg(long = "energy")]
        energy: Vec<String>,
        /// Defaults to overwriting the input history.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => cmd_validate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Fleet(a) => cmd_fleet(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::History(h) => cmd_history(h),
    }
}

fn print_json(value: &Value) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Six decimals, truncated toward zero; the tiny offset keeps values that
/// are exact up to round-off (1 computed as 0.9999999999999999) intact.
fn six_digits(v: f64) -> Value {
    json!((v * 1e6 + 1e-6).floor() / 1e6)
}

fn parse_pairs(items: &[String], what: &str) -> Result<Vec<(String, f64)>, CliError> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{what} `{item}` is not key=value")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| CliError::usage(format!("{what} `{item}` has a non-numeric value")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn history_err(e: HistoryError) -> CliError {
    CliError::usage(e.to_string())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), CliError> {
    let mut report = serde_json::Map::new();
    if let Some(path) = &a.network {
        let net = load_network(path)?;
        report.insert(
            "network".into(),
            json!({"segments": net.segments().count(), "routes": net.routes().count()}),
        );
        if let Some(h) = &a.history {
            let hist = load_history(h, &net)?;
            report.insert(
                "history".into(),
                json!({"routes": hist.len(), "trips": hist.total_trips()}),
            );
        }
    }
    if let Some(path) = &a.scenario {
        let s = load_scenario(path)?;
        report.insert(
            "scenario".into(),
            json!({"vehicles": s.file.vehicles.len(), "inputs": s.inputs.len()}),
        );
    }
    if let Some(path) = &a.instance {
        let inst: InstanceFile = read_json(path)?;
        report.insert("instance".into(), json!({"segments": inst.segments.len()}));
    }
    if report.is_empty() {
        return Err(CliError::usage("nothing to validate"));
    }
    report.insert("ok".into(), json!(true));
    print_json(&Value::Object(report))
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let net = load_network(&a.network)?;
    let hist = load_history(&a.history, &net)?;
    let predictor = Predictor::new(a.predictor, &hist, &net)?;
    let pred = predictor.predict(&SegmentId::from(a.at.as_str()))?;
    let routes: serde_json::Map<String, Value> = pred
        .route_probs
        .iter()
        .map(|(r, &p)| (r.to_string(), six_digits(p)))
        .collect();
    let segments: serde_json::Map<String, Value> = pred
        .segment_probs
        .iter()
        .map(|(s, &p)| (s.to_string(), six_digits(p)))
        .collect();
    print_json(&json!({
        "current_segment": pred.current_segment,
        "predictor": a.predictor,
        "route_probs": routes,
        "segment_probs": segments,
    }))
}

fn solve_instance(
    kind: ProblemKind,
    inst: &InstanceFile,
    green: &[SegmentId],
    budget: f64,
) -> Result<AllocationPlan, CliError> {
    if !green.is_empty() {
        let base = match kind {
            ProblemKind::Flow => GreenBase::Flow,
            ProblemKind::Expected => GreenBase::Expected,
            ProblemKind::Robust => {
                return Err(CliError::usage("green zones apply to problems 1 and 3"))
            }
        };
        return Ok(solve_green_zone(&inst.segments, green, budget, base)?);
    }
    Ok(match kind {
        ProblemKind::Expected => solve_expected(&inst.segments, budget)?,
        ProblemKind::Flow => solve_flow(&inst.segments, budget)?,
        ProblemKind::Robust => solve_robust(&inst.segments, &inst.routes, budget)?,
    })
}

fn cmd_optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let inst: InstanceFile = read_json(&a.instance)?;
    let budget = a
        .budget
        .or(inst.budget)
        .ok_or_else(|| CliError::usage("no budget: pass --budget or set it in the instance"))?;
    let mut green: Vec<SegmentId> = inst.green.clone();
    green.extend(a.green.iter().map(|s| SegmentId::from(s.as_str())));
    if a.problem == ProblemKind::Robust && inst.routes.is_empty() {
        return Err(CliError::usage("problem 2 needs `routes` in the instance"));
    }
    let plan = solve_instance(a.problem, &inst, &green, budget)?;
    let program = formulate(a.problem, &inst.segments, &inst.routes, budget);
    let rendered: Vec<String> = program.render().lines().map(str::to_string).collect();
    let inputs = vec![a.instance.clone()];
    let out = a.out.clone();
    let manifest = RunManifest::new(
        "optimize",
        &inputs,
        None,
        out.as_deref().unwrap_or(Path::new("")),
    );
    let report = json!({
        "manifest": manifest,
        "problem": a.problem,
        "budget": budget,
        "formulation": {"program": program, "rendered": rendered},
        "plan": plan,
    });
    if let Some(dir) = out {
        write_json(&dir, "plan.json", &report)?;
        let w = create(&dir, "plan.csv")?;
        write_plan_csv(&inst.segments, &plan, w)?;
    }
    print_json(&report)
}

fn select_vehicle<'s>(s: &'s Scenario, id: Option<&str>) -> Result<&'s VehicleConfig, CliError> {
    match id {
        Some(id) => s
            .file
            .vehicles
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| CliError::usage(format!("no vehicle `{id}` in scenario"))),
        None => s
            .file
            .vehicles
            .first()
            .ok_or_else(|| CliError::usage("scenario has no vehicles")),
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_simulate(a: ScenarioArgs) -> Result<(), CliError> {
    let s = load_scenario(&a.scenario)?;
    let seed = a.seed.unwrap_or(s.file.seed);
    let dir = out_dir(a.out);
    let opts = s.options();
    let vehicles: Vec<&VehicleConfig> = match &a.vehicle {
        Some(id) => vec![select_vehicle(&s, Some(id))?],
        None => s.file.vehicles.iter().collect(),
    };
    let mut summaries = Vec::new();
    for v in vehicles {
        let trace = run_single(&s.network, &s.history, v, s.density.as_ref(), &opts, seed)?;
        let stem = file_stem(&v.id);
        write_trace_csv(&trace, create(&dir, &format!("trace_{stem}.csv"))?)?;
        write_json(&dir, &format!("replans_{stem}.json"), &json!(trace.replans))?;
        summaries.push(json!({
            "vehicle_id": trace.vehicle_id,
            "route_id": trace.route_id,
            "steps": trace.steps.len(),
            "cumulative_objective": trace.cumulative_objective,
            "cumulative_clean_air": trace.total_clean_air(),
            "total_electric_kwh": trace.total_electric_kwh,
            "initial_budget_kwh": trace.initial_budget_kwh,
            "final_soc_kwh": trace.final_soc(),
            "clamped_steps": trace.steps.iter().filter(|st| st.clamped).count(),
        }));
    }
    let summary = json!({
        "manifest": RunManifest::new("simulate", &s.inputs, Some(seed), &dir),
        "vehicles": summaries,
    });
    write_json(&dir, "summary.json", &summary)?;
    print_json(&summary)
}

fn cmd_compare(a: ScenarioArgs) -> Result<(), CliError> {
    let s = load_scenario(&a.scenario)?;
    let seed = a.seed.unwrap_or(s.file.seed);
    let dir = out_dir(a.out);
    let base = select_vehicle(&s, a.vehicle.as_deref())?;
    let variants = s.file.variants.clone().unwrap_or_else(standard_variants);
    let table = compare_scenarios(
        &s.network,
        &s.history,
        base,
        &variants,
        s.density.as_ref(),
        &s.options(),
        seed,
    )?;
    write_comparison_csv(&table, create(&dir, "comparison.csv")?)?;
    for (variant, trace) in variants.iter().zip(&table.traces) {
        let name = format!("trace_{}.csv", file_stem(&variant.name));
        write_trace_csv(trace, create(&dir, &name)?)?;
    }
    let summary = json!({
        "manifest": RunManifest::new("compare", &s.inputs, Some(seed), &dir),
        "vehicle_id": base.id,
        "scenarios": table.summaries,
    });
    write_json(&dir, "summary.json", &summary)?;
    print_json(&summary)
}

fn parse_policy(name: &str) -> Result<Policy, CliError> {
    Ok(match name {
        "expected" | "1" => Policy::Expected,
        "robust" | "2" => Policy::Robust,
        "flow" | "3" => Policy::Flow,
        "none-opt" | "none_opt" => Policy::NoneOpt,
        other => {
            return Err(CliError::usage(format!(
                "unknown policy `{other}` (expected expected|robust|flow|none-opt)"
            )))
        }
    })
}

fn cmd_fleet(a: FleetArgs) -> Result<(), CliError> {
    let s = load_scenario(&a.common.scenario)?;
    let seed = a.common.seed.unwrap_or(s.file.seed);
    let dir = out_dir(a.common.out.clone());
    let policy = match (&a.policy, a.green.is_empty()) {
        (Some(_), false) => return Err(CliError::usage("use either --policy or --green")),
        (Some(p), true) => Some(parse_policy(p)?),
        (None, false) => Some(Policy::GreenZone {
            segments: a
                .green
                .iter()
                .map(|g| SegmentId::from(g.as_str()))
                .collect(),
            base: GreenBase::Expected,
        }),
        (None, true) => None,
    };
    let vehicles: Vec<VehicleConfig> = s
        .file
        .vehicles
        .iter()
        .map(|v| {
            let mut v = v.clone();
            if let Some(p) = &policy {
                v.policy = p.clone();
            }
            if let Some(b) = a.budget {
                v.initial_budget_kwh = b;
            }
            v
        })
        .collect();
    let caps: IndexMap<SegmentId, f64> = if a.caps.is_empty() {
        s.file.caps.clone()
    } else {
        parse_pairs(&a.caps, "cap")?
            .into_iter()
            .map(|(k, v)| (SegmentId::from(k), v))
            .collect()
    };
    let trace = run_fleet(
        &s.network,
        &s.history,
        &vehicles,
        s.density.as_ref(),
        &caps,
        &s.options(),
        seed,
    )?;
    write_fleet_csv(&trace, create(&dir, "fleet.csv")?)?;
    let pollutant: serde_json::Map<String, Value> = trace
        .segments
        .iter()
        .map(|(seg, t)| (seg.to_string(), json!(t.pollutant_units)))
        .collect();
    let summary = json!({
        "manifest": RunManifest::new("fleet", &s.inputs, Some(seed), &dir),
        "caps": caps,
        "cap_status": trace.cap_status,
        "pollutant_units": pollutant,
        "segments": trace.segments,
        "vehicles": trace.vehicles,
    });
    write_json(&dir, "summary.json", &summary)?;
    print_json(&summary)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let s = load_scenario(&a.common.scenario)?;
    let seed = a.common.seed.unwrap_or(s.file.seed);
    let dir = out_dir(a.common.out.clone());
    let base = select_vehicle(&s, a.common.vehicle.as_deref())?;
    let max_budget = a.max_budget.unwrap_or(base.initial_budget_kwh);
    if a.steps == 0 {
        return Err(CliError::new(EXIT_PARSE, "--steps must be at least 1"));
    }
    let result = sweep(
        &s.network,
        &s.history,
        base,
        s.density.as_ref(),
        &s.options(),
        SweepSpec {
            max_budget,
            steps: a.steps,
            seed,
        },
    )?;
    write_sweep_csv(&result, create(&dir, "sweep.csv")?)?;
    let summary = json!({
        "manifest": RunManifest::new("sweep", &s.inputs, Some(seed), &dir),
        "vehicle_id": base.id,
        "origin": result.origin,
        "steps": a.steps,
        "max_budget_kwh": max_budget,
        "segments": result.rows,
    });
    write_json(&dir, "summary.json", &summary)?;
    print_json(&summary)
}

fn save_history(path: &Path, history: &TripHistory) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(
        path,
        serde_json::to_string_pretty(&history.to_file())? + "\n",
    )?;
    Ok(())
}

fn cmd_history(cmd: HistoryCommand) -> Result<(), CliError> {
    match cmd {
        HistoryCommand::Synth {
            network,
            counts,
            samples,
            seed,
            output,
        } => {
            let net = load_network(&network)?;
            let mut parsed = Vec::new();
            for (route, n) in parse_pairs(&counts, "count")? {
                if n < 0.0 || n.fract() != 0.0 {
                    return Err(CliError::usage(format!(
                        "count for `{route}` must be a whole number"
                    )));
                }
                parsed.push((RouteId::from(route), n as u64));
            }
            let hist = synthetic_history(&net, parsed, samples, seed).map_err(history_err)?;
            save_history(&output, &hist)?;
            print_json(&json!({"output": output, "trips": hist.total_trips(), "seed": seed}))
        }
        HistoryCommand::Record {
            network,
            history,
            route,
            energy,
            output,
        } => {
            let net = load_network(&network)?;
            let hist = load_history(&history, &net)?;
            let energies: IndexMap<SegmentId, f64> = parse_pairs(&energy, "energy")?
                .into_iter()
                .map(|(k, v)| (SegmentId::from(k), v))
                .collect();
            let updated = hist
                .record_trip(&net, &RouteId::from(route.as_str()), &energies)
                .map_err(history_err)?;
            let output = output.unwrap_or(history);
            save_history(&output, &updated)?;
            print_json(&json!({"output": output, "trips": updated.total_trips()}))
        }
    }
}
