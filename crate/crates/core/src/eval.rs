//! Closed-loop evaluation: scenario suites with and without sensor faults,
//! costs normalized by the fault-free baseline, settling checks, inference
//! timing and report export.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{cost_of, CostWeights, LqrGain};
use crate::dataset::{fmt_f64, sample_fault, sample_initial_state, DEFAULT_H};
use crate::error::{DftcError, Result};
use crate::nn::ModelParams;
use crate::plant::{
    measure, step_rk4, FaultInjector, FaultMode, FaultSpec, PlantParams, PlantState, INPUT_DIM, SENSOR_COUNT, STATE_DIM,
};
use crate::policy::{BaselineController, Controller, DftcController, FnnController};
use crate::rng::{item_seed, rng_from, stream_seed};
use crate::scalar::Scalar;

pub const BASELINE_ID: &str = "baseline";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoFault,
    Fault,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::NoFault, Condition::Fault];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::NoFault => "no_fault",
            Condition::Fault => "fault",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Condition::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which fault conditions a suite runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMix {
    /// Fault-free runs only.
    None,
    /// Every scenario also runs with one sampled fault.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_scenarios: usize,
    pub fault_mix: FaultMix,
    pub duration: f64,
    pub h: f64,
    /// Fault onset range (s).
    pub fault_window: [f64; 2],
    pub settle_tol: f64,
    pub settle_hold: f64,
    /// A run is declared diverged once either link angle exceeds this (rad).
    pub divergence_angle: f64,
    /// Scenarios (lowest ids) whose time series are kept for export.
    pub trace_scenarios: usize,
    pub timing_calls: usize,
    /// Callers treat a larger diverged fraction for any controller and
    /// condition as a failed evaluation.
    pub max_diverged_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_scenarios: 100,
            fault_mix: FaultMix::Sampled,
            duration: 4.0,
            h: DEFAULT_H,
            fault_window: [0.3, 2.0],
            settle_tol: 0.05,
            settle_hold: 0.5,
            divergence_angle: std::f64::consts::FRAC_PI_2,
            trace_scenarios: 0,
            timing_calls: 1000,
            max_diverged_fraction: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.h) || !positive(self.duration) || self.steps() == 0 {
            return Err(DftcError::InvalidConfig("eval needs h > 0 and duration >= h".into()));
        }
        if !positive(self.settle_tol) || !(self.settle_hold >= 0.0) || !positive(self.divergence_angle) {
            return Err(DftcError::InvalidConfig("settling and divergence thresholds must be positive".into()));
        }
        let [a, b] = self.fault_window;
        if !(0.0 <= a && a <= b && b < self.duration) {
            return Err(DftcError::InvalidConfig(format!(
                "fault window [{a}, {b}] must lie inside the {} s rollout",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.h).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u64,
    pub initial: PlantState<f64>,
    /// Fault used by the with-fault runs.
    pub fault: Option<FaultSpec>,
    pub seed: u64,
}

/// Initial states from the sampling box and one fault per scenario, each
/// scenario on its own sub-stream of `seed`.
pub fn make_scenarios(cfg: &EvalConfig, seed: u64) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    let base = stream_seed(seed, "eval");
    (0..cfg.n_scenarios as u64)
        .map(|id| {
            let s = item_seed(base, id);
            let mut rng = rng_from(s);
            let initial = sample_initial_state(&mut rng);
            let fault = match cfg.fault_mix {
                FaultMix::None => None,
                FaultMix::Sampled => Some(sample_fault(&mut rng, cfg.h, cfg.fault_window)?),
            };
            Ok(Scenario {
                id,
                initial,
                fault,
                seed: s,
            })
        })
        .collect()
}

/// Time series of one closed-loop run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub h: f64,
    pub states: Vec<[f64; STATE_DIM]>,
    pub measurements: Vec<[f64; SENSOR_COUNT]>,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    /// Per-step LSTM block outputs, for controllers that have them.
    pub block_outputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub trace: Trace,
    /// `None` if the run diverged.
    pub cost: Option<f64>,
}

impl Rollout {
    pub fn diverged(&self) -> bool {
        self.cost.is_none()
    }
}

/// measure → fault → act → integrate, for `cfg.steps()` samples. Stops early
/// when the state leaves the divergence bound or anything turns non-finite.
pub fn rollout(
    plant: &PlantParams<f64>,
    controller: &mut dyn Controller,
    scenario: &Scenario,
    fault: Option<FaultSpec>,
    cfg: &EvalConfig,
    weights: &CostWeights,
    record_blocks: bool,
) -> Result<Rollout> {
    controller.reset();
    let mut injector = FaultInjector::new(fault)?;
    let mut noise = rng_from(scenario.seed);
    let steps = cfg.steps();
    let mut trace = Trace {
        h: cfg.h,
        ..Trace::default()
    };
    let out_of_bounds = |x: &PlantState<f64>| {
        !x.is_finite() || x.theta1().abs() > cfg.divergence_angle || x.theta2().abs() > cfg.divergence_angle
    };
    let mut x = scenario.initial;
    let mut diverged = false;
    for k in 0..steps {
        if out_of_bounds(&x) {
            diverged = true;
            break;
        }
        let t = k as f64 * cfg.h;
        let y = measure(&x, plant.noise_std, Some(&mut noise));
        let y = injector.process(&y, t)?;
        // a controller that produces non-finite values has lost the plant
        let u = match controller.act(&y) {
            Ok(u) if u.is_finite() => plant.saturate(u),
            Ok(_) | Err(DftcError::Numeric { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.states.push(x.0);
        trace.measurements.push(y);
        trace.inputs.push(u.0);
        if record_blocks {
            if let Some(b) = controller.block_outputs() {
                trace.block_outputs.push(b);
            }
        }
        if k + 1 < steps {
            match step_rk4(plant, &x, &u, cfg.h) {
                Ok(next) => x = next,
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }
    }
    let cost = if diverged {
        None
    } else {
        Some(cost_of(&trace.states, &trace.inputs, cfg.h, weights)?)
    };
    Ok(Rollout { trace, cost })
}

/// True iff both link angles stay within `tol` over the final `hold`
/// seconds of the run.
pub fn settling_check(states: &[[f64; STATE_DIM]], h: f64, tol: f64, hold: f64) -> bool {
    let tail = ((hold / h).round() as usize).max(1).min(states.len());
    states[states.len() - tail..]
        .iter()
        .all(|x| x[0].abs() <= tol && x[1].abs() <= tol)
}

/// A named controller under test; each scenario builds its own instance.
pub struct Contender {
    id: String,
    make: Box<dyn Fn() -> Result<Box<dyn Controller>> + Send + Sync>,
}

impl Contender {
    pub fn new(
        id: impl Into<String>,
        make: impl Fn() -> Result<Box<dyn Controller>> + Send + Sync + 'static,
    ) -> Self {
        Contender {
            id: id.into(),
            make: Box::new(make),
        }
    }

    pub fn baseline(gain: LqrGain<f64>, plant: PlantParams<f64>) -> Self {
        Contender::new(BASELINE_ID, move || Ok(Box::new(BaselineController::new(gain.clone(), plant))))
    }

    pub fn dftc<T: Scalar>(model: ModelParams<T>, i_max: f64) -> Self {
        Contender::new("dftc", move || Ok(Box::new(DftcController::new(model.clone(), i_max)?)))
    }

    pub fn fnn<T: Scalar>(model: ModelParams<T>, i_max: f64) -> Self {
        Contender::new("fnn", move || Ok(Box::new(FnnController::new(model.clone(), i_max)?)))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn build(&self) -> Result<Box<dyn Controller>> {
        (self.make)()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub controller: String,
    pub scenario: u64,
    pub condition: Condition,
    pub fault: Option<FaultSpec>,
    pub cost: Option<f64>,
    /// `None` when this run or its reference diverged.
    pub rho: Option<f64>,
    pub settled: bool,
    pub max_abs_dphi: f64,
}

impl RunRow {
    pub fn diverged(&self) -> bool {
        self.cost.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub controller: String,
    pub condition: Condition,
    pub mean_rho: Option<f64>,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std_rho: Option<f64>,
    /// Runs that entered the statistics.
    pub n: usize,
    /// Runs left out because they (or their reference) diverged.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracedRun {
    pub controller: String,
    pub scenario: u64,
    pub condition: Condition,
    pub trace: Trace,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub controllers: Vec<String>,
    pub conditions: Vec<Condition>,
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
    pub traces: Vec<TracedRun>,
}

/// Runs every scenario for every contender. The baseline runs fault-free
/// only and provides the cost every other run is normalized by; the other
/// contenders run fault-free and, unless the mix is `None`, with the
/// scenario's fault. Scenarios run in parallel; rows come out in scenario
/// order, then contender order, then condition order.
pub fn run_suite(
    plant: &PlantParams<f64>,
    gain: &LqrGain<f64>,
    contenders: &[Contender],
    scenarios: &[Scenario],
    cfg: &EvalConfig,
    weights: &CostWeights,
) -> Result<EvalReport> {
    cfg.validate()?;
    weights.validate()?;
    if contenders.iter().any(|c| c.id() == BASELINE_ID) {
        return Err(DftcError::InvalidInput(
            "the baseline is always run as the reference; do not pass it as a contender".into(),
        ));
    }
    let reference = Contender::baseline(gain.clone(), *plant);
    let conditions: Vec<Condition> = match cfg.fault_mix {
        FaultMix::None => vec![Condition::NoFault],
        FaultMix::Sampled => Condition::ALL.to_vec(),
    };
    let per_scenario: Vec<(Vec<RunRow>, Vec<TracedRun>)> = scenarios
        .par_iter()
        .map(|sc| run_scenario(plant, &reference, contenders, sc, &conditions, cfg, weights))
        .collect::<Result<_>>()?;
    let mut runs = Vec::new();
    let mut traces = Vec::new();
    for (r, t) in per_scenario {
        runs.extend(r);
        traces.extend(t);
    }
    let controllers: Vec<String> = std::iter::once(BASELINE_ID.to_string())
        .chain(contenders.iter().map(|c| c.id().to_string()))
        .collect();
    let aggregates = aggregate(&runs, &controllers, &conditions);
    Ok(EvalReport {
        controllers,
        conditions,
        runs,
        aggregates,
        traces,
    })
}

fn run_scenario(
    plant: &PlantParams<f64>,
    reference: &Contender,
    contenders: &[Contender],
    sc: &Scenario,
    conditions: &[Condition],
    cfg: &EvalConfig,
    weights: &CostWeights,
) -> Result<(Vec<RunRow>, Vec<TracedRun>)> {
    let keep = sc.id < cfg.trace_scenarios as u64;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut run = |c: &Contender, condition: Condition, j_ref: Option<f64>| -> Result<Option<f64>> {
        let fault = match condition {
            Condition::NoFault => None,
            Condition::Fault => sc.fault,
        };
        let mut ctrl = c.build()?;
        let r = rollout(plant, ctrl.as_mut(), sc, fault, cfg, weights, keep)?;
        let j_ref = j_ref.or(r.cost);
        let rho = match (r.cost, j_ref) {
            (Some(j), Some(j0)) if j0 > 0.0 => Some(j / j0),
            _ => None,
        };
        let settled =
            !r.diverged() && settling_check(&r.trace.states, cfg.h, cfg.settle_tol, cfg.settle_hold);
        let max_abs_dphi = r
            .trace
            .states
            .iter()
            .map(|x| x[4].abs().max(x[5].abs()))
            .fold(0.0, f64::max);
        rows.push(RunRow {
            controller: c.id().to_string(),
            scenario: sc.id,
            condition,
            fault,
            cost: r.cost,
            rho,
            settled,
            max_abs_dphi,
        });
        if keep {
            traces.push(TracedRun {
                controller: c.id().to_string(),
                scenario: sc.id,
                condition,
                trace: r.trace,
            });
        }
        Ok(r.cost)
    };
    let j_ref = run(reference, Condition::NoFault, None)?;
    for c in contenders {
        for &condition in conditions {
            // a diverged reference leaves nothing to normalize by
            run(c, condition, Some(j_ref.unwrap_or(f64::NAN)))?;
        }
    }
    Ok((rows, traces))
}

/// Mean and sample std of ρ per controller × condition over the rows that
/// have a ρ.
pub fn aggregate(runs: &[RunRow], controllers: &[String], conditions: &[Condition]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for c in controllers {
        for &cond in conditions {
            if c == BASELINE_ID && cond == Condition::Fault {
                continue;
            }
            let rows: Vec<&RunRow> = runs
                .iter()
                .filter(|r| &r.controller == c && r.condition == cond)
                .collect();
            let rhos: Vec<f64> = rows.iter().filter_map(|r| r.rho).collect();
            let n = rhos.len();
            let (mean, std) = if n == 0 {
                (None, None)
            } else {
                let mean = rhos.iter().sum::<f64>() / n as f64;
                let var = if n > 1 {
                    rhos.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                (Some(mean), Some(var.sqrt()))
            };
            out.push(Aggregate {
                controller: c.clone(),
                condition: cond,
                mean_rho: mean,
                std_rho: std,
                n,
                excluded: rows.len() - n,
            });
        }
    }
    out
}

impl EvalReport {
    pub fn aggregate_for(&self, controller: &str, condition: Condition) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.controller == controller && a.condition == condition)
    }

    pub fn rows_for<'a>(&'a self, controller: &'a str, condition: Condition) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.runs
            .iter()
            .filter(move |r| r.controller == controller && r.condition == condition)
    }

    /// Fraction of runs that diverged or failed the settling check.
    pub fn unsettled_fraction(&self, controller: &str, condition: Condition) -> Option<f64> {
        let (n, bad) = self
            .rows_for(controller, condition)
            .fold((0usize, 0usize), |(n, bad), r| (n + 1, bad + usize::from(!r.settled)));
        (n > 0).then(|| bad as f64 / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportJson {
    pub controllers: Vec<String>,
    pub conditions: Vec<String>,
    pub mean_rho: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    pub std_rho: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    pub n: BTreeMap<String, BTreeMap<String, usize>>,
    pub excluded: BTreeMap<String, BTreeMap<String, usize>>,
}

impl ReportJson {
    pub fn from_report(r: &EvalReport) -> Self {
        let mut j = ReportJson {
            controllers: r.controllers.clone(),
            conditions: r.conditions.iter().map(|c| c.as_str().to_string()).collect(),
            mean_rho: BTreeMap::new(),
            std_rho: BTreeMap::new(),
            n: BTreeMap::new(),
            excluded: BTreeMap::new(),
        };
        for a in &r.aggregates {
            let (c, k) = (a.controller.clone(), a.condition.as_str().to_string());
            j.mean_rho.entry(c.clone()).or_default().insert(k.clone(), a.mean_rho);
            j.std_rho.entry(c.clone()).or_default().insert(k.clone(), a.std_rho);
            j.n.entry(c.clone()).or_default().insert(k.clone(), a.n);
            j.excluded.entry(c).or_default().insert(k, a.excluded);
        }
        j
    }
}

pub const RUNS_HEADER: [&str; 12] = [
    "controller",
    "scenario",
    "condition",
    "fault_sensor",
    "fault_mode",
    "fault_value",
    "fault_time",
    "J",
    "rho",
    "settled",
    "diverged",
    "max_abs_dphi",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_runs<W: Write>(runs: &[RunRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RUNS_HEADER)?;
    for r in runs {
        let (sensor, mode, value, time) = match &r.fault {
            Some(f) => (
                f.sensor_index.to_string(),
                f.mode.name().to_string(),
                opt(f.mode.value()),
                fmt_f64(f.fault_time),
            ),
            None => Default::default(),
        };
        w.write_record([
            r.controller.clone(),
            r.scenario.to_string(),
            r.condition.to_string(),
            sensor,
            mode,
            value,
            time,
            opt(r.cost),
            opt(r.rho),
            r.settled.to_string(),
            r.diverged().to_string(),
            fmt_f64(r.max_abs_dphi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs<R: std::io::Read>(reader: R) -> Result<Vec<RunRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    if header.iter().ne(RUNS_HEADER) {
        return Err(DftcError::Parse {
            line: 1,
            message: format!("unexpected runs header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        let bad = |what: &str| DftcError::Parse {
            line,
            message: format!("bad {what}"),
        };
        let num = |k: usize, what: &str| -> Result<Option<f64>> {
            let s = &rec[k];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        let fault = if rec[3].is_empty() {
            None
        } else {
            let sensor = rec[3].parse().map_err(|_| bad("fault_sensor"))?;
            let mode = match &rec[4] {
                "hold" => FaultMode::HoldLast,
                "zero" => FaultMode::Zero,
                "constant" => FaultMode::Constant(num(5, "fault_value")?.ok_or_else(|| bad("fault_value"))?),
                _ => return Err(bad("fault_mode")),
            };
            let time = num(6, "fault_time")?.ok_or_else(|| bad("fault_time"))?;
            Some(FaultSpec::new(sensor, mode, time)?)
        };
        rows.push(RunRow {
            controller: rec[0].to_string(),
            scenario: rec[1].parse().map_err(|_| bad("scenario"))?,
            condition: Condition::parse(&rec[2]).ok_or_else(|| bad("condition"))?,
            fault,
            cost: num(7, "J")?,
            rho: num(8, "rho")?,
            settled: rec[9].parse().map_err(|_| bad("settled"))?,
            max_abs_dphi: num(11, "max_abs_dphi")?.ok_or_else(|| bad("max_abs_dphi"))?,
        });
    }
    Ok(rows)
}

fn write_trace(run: &TracedRun, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let blocks = run.trace.block_outputs.first().map_or(0, Vec::len);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=STATE_DIM).map(|i| format!("x{i}")));
    header.extend((1..=SENSOR_COUNT).map(|i| format!("y{i}")));
    header.extend((1..=INPUT_DIM).map(|i| format!("u{i}")));
    header.extend((0..blocks).map(|i| format!("lstm{}_{}", i / (blocks / 6), i % (blocks / 6))));
    w.write_record(&header)?;
    let tr = &run.trace;
    for k in 0..tr.states.len() {
        let mut rec = vec![fmt_f64(k as f64 * tr.h)];
        rec.extend(tr.states[k].iter().map(|&v| fmt_f64(v)));
        rec.extend(tr.measurements[k].iter().map(|&v| fmt_f64(v)));
        rec.extend(tr.inputs[k].iter().map(|&v| fmt_f64(v)));
        if let Some(b) = tr.block_outputs.get(k) {
            rec.extend(b.iter().map(|&v| fmt_f64(v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `runs.csv` and one `traj_<scenario>_<controller>_<condition>.csv`
/// per kept trace into `dir`, creating it if needed.
pub fn export_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&ReportJson::from_report(report))?;
    fs::write(dir.join("report.json"), json + "\n")?;
    write_runs(&report.runs, fs::File::create(dir.join("runs.csv"))?)?;
    for t in &report.traces {
        let name = format!("traj_{}_{}_{}.csv", t.scenario, t.controller, t.condition);
        write_trace(t, &dir.join(name))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    /// Seconds per call.
    pub mean: f64,
    pub worst: f64,
    pub calls: usize,
}

/// Wall-clock latency of `act` over `n_calls` calls, cycling through the
/// given measurements after a short warm-up. Single-threaded.
pub fn timing_stats(
    controller: &mut dyn Controller,
    measurements: &[[f64; SENSOR_COUNT]],
    n_calls: usize,
) -> Result<TimingStats> {
    if measurements.is_empty() || n_calls == 0 {
        return Err(DftcError::InvalidInput("timing needs measurements and at least one call".into()));
    }
    controller.reset();
    for y in measurements.iter().cycle().take(20) {
        controller.act(y)?;
    }
    let (mut total, mut worst) = (0.0, 0.0f64);
    for y in measurements.iter().cycle().take(n_calls) {
        let start = Instant::now();
        std::hint::black_box(controller.act(std::hint::black_box(y))?);
        let dt = start.elapsed().as_secs_f64();
        total += dt;
        worst = worst.max(dt);
    }
    let mean = total / n_calls as f64;
    Ok(TimingStats {
        mean,
        worst: if n_calls == 1 { mean } else { worst },
        calls: n_calls,
    })
}
