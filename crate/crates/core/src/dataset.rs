//! Closed-loop demonstration data: generation under the baseline
//! controller, synthetic sensor-fault augmentation, train/val/test split,
//! sliding windows, and CSV persistence.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_policy, LqrGain};
use crate::error::{DftcError, Result};
use crate::plant::{
    measure, step_rk4, FaultInjector, FaultMode, FaultSpec, PlantParams, PlantState, INPUT_DIM,
    SENSOR_COUNT, STATE_DIM,
};
use crate::rng::{item_seed, rng_from};

/// Sampling interval of every recorded trajectory (s).
pub const DEFAULT_H: f64 = 0.01;
/// Samples per trajectory (4 s at 10 ms).
pub const DEFAULT_STEPS: usize = 400;
/// Measurement rows per network input window (100 ms).
pub const DEFAULT_WINDOW: usize = 10;

/// Box the initial conditions are drawn from, per state component.
pub const INITIAL_BOX: [f64; STATE_DIM] = [
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_4,
    6.8,
    6.8,
    300.0,
    300.0,
];

pub fn sample_initial_state<R: Rng + ?Sized>(rng: &mut R) -> PlantState<f64> {
    PlantState(INITIAL_BOX.map(|b| rng.random_range(-b..=b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One uniformly sampled rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    /// Fault-free trajectory this one was derived from, if augmented.
    pub parent: Option<u64>,
    pub h: f64,
    pub states: Vec<[f64; STATE_DIM]>,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    /// Sensor readings after fault injection.
    pub measurements: Vec<[f64; SENSOR_COUNT]>,
    pub fault: Option<FaultSpec>,
    pub split: Option<Split>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn duration(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Id of the fault-free trajectory this one belongs to.
    pub fn root_id(&self) -> u64 {
        self.parent.unwrap_or(self.id)
    }
}

/// Per-channel statistics used to normalize network inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; SENSOR_COUNT],
    pub std: [f64; SENSOR_COUNT],
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            mean: [0.0; SENSOR_COUNT],
            std: [1.0; SENSOR_COUNT],
        }
    }
}

impl Normalizer {
    /// Mean and population standard deviation over all given rows. Constant
    /// channels get a unit scale.
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64; SENSOR_COUNT]>) -> Self {
        let mut n = 0usize;
        let mut mean = [0.0; SENSOR_COUNT];
        let mut m2 = [0.0; SENSOR_COUNT];
        for row in rows {
            n += 1;
            for j in 0..SENSOR_COUNT {
                let d = row[j] - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        if n == 0 {
            return Normalizer::default();
        }
        let std = m2.map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        });
        Normalizer { mean, std }
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(DftcError::InvalidInput("normalizer std must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    /// Training-split statistics, present once the dataset is split.
    pub normalizer: Option<Normalizer>,
    /// Rollouts dropped during generation because they diverged.
    pub excluded: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn split_assignment(&self) -> HashMap<u64, Split> {
        self.trajectories
            .iter()
            .filter_map(|t| t.split.map(|s| (t.id, s)))
            .collect()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(move |t| t.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    pub fn data_points(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn window_count(&self, m: usize) -> usize {
        self.trajectories
            .iter()
            .map(|t| (t.len() + 1).saturating_sub(m))
            .sum()
    }
}

/// Rollout settings for dataset generation.
#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub h: f64,
    pub steps: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            h: DEFAULT_H,
            steps: DEFAULT_STEPS,
        }
    }
}

/// Roll out the baseline controller from `x0`, recording `steps` samples.
pub fn baseline_rollout(
    plant: &PlantParams<f64>,
    gain: &LqrGain<f64>,
    x0: PlantState<f64>,
    cfg: GenConfig,
    id: u64,
) -> Result<Trajectory> {
    let mut x = x0;
    let mut states = Vec::with_capacity(cfg.steps);
    let mut inputs = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        let u = baseline_policy(gain, plant, &x);
        states.push(x.0);
        inputs.push(u.0);
        if k + 1 < cfg.steps {
            x = step_rk4(plant, &x, &u, cfg.h)?;
        }
    }
    let measurements = states
        .iter()
        .map(|s| measure::<f64, crate::rng::StreamRng>(&PlantState(*s), 0.0, None))
        .collect();
    Ok(Trajectory {
        id,
        parent: None,
        h: cfg.h,
        states,
        inputs,
        measurements,
        fault: None,
        split: None,
    })
}

/// `n_traj` fault-free baseline rollouts from initial states drawn uniformly
/// from [`INITIAL_BOX`]. Trajectory `i` draws its initial state from its own
/// stream `item_seed(seed, i)`.
pub fn generate_trajectories(
    plant: &PlantParams<f64>,
    gain: &LqrGain<f64>,
    n_traj: usize,
    seed: u64,
    cfg: GenConfig,
) -> Result<Dataset> {
    plant.validate()?;
    if cfg.steps == 0 || !(cfg.h > 0.0) {
        return Err(DftcError::InvalidConfig("rollouts need h > 0 and at least one step".into()));
    }
    let rollouts: Vec<Option<Trajectory>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(item_seed(seed, i));
            let x0 = sample_initial_state(&mut rng);
            baseline_rollout(plant, gain, x0, cfg, i).ok()
        })
        .collect();
    let excluded = rollouts.iter().filter(|r| r.is_none()).count();
    let trajectories = rollouts
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, mut t)| {
            t.id = i as u64;
            t
        })
        .collect();
    Ok(Dataset {
        trajectories,
        normalizer: None,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub copies_per_trajectory: usize,
    /// Fault onset range (s), sampled on the trajectory's time grid.
    pub fault_window: [f64; 2],
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            copies_per_trajectory: 2,
            fault_window: [0.3, 2.0],
        }
    }
}

/// Draw a fault the way augmentation does: uniform sensor, uniform onset on
/// the sample grid within `window`, and a mode that depends on the sensor
/// kind (angles: hold / zero / constant in ±π, rates: zero).
pub fn sample_fault<R: Rng + ?Sized>(rng: &mut R, h: f64, window: [f64; 2]) -> Result<FaultSpec> {
    let first = (window[0] / h - 1e-9).ceil() as usize;
    let last = (window[1] / h + 1e-9).floor() as usize;
    if first > last {
        return Err(DftcError::InvalidConfig(format!(
            "fault window {window:?} contains no sample at h = {h}"
        )));
    }
    let sensor = rng.random_range(1..=SENSOR_COUNT);
    let k = rng.random_range(first..=last);
    let mode = if sensor <= 2 {
        match rng.random_range(0..3) {
            0 => FaultMode::HoldLast,
            1 => FaultMode::Zero,
            _ => FaultMode::Constant(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
        }
    } else {
        FaultMode::Zero
    };
    FaultSpec::new(sensor, mode, k as f64 * h)
}

/// Rewrite `measurements` of a copy of `parent` through a fault.
pub fn with_fault(parent: &Trajectory, fault: FaultSpec, id: u64) -> Result<Trajectory> {
    let mut injector = FaultInjector::new(Some(fault))?;
    let measurements = parent
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| injector.process(s, parent.time(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        id,
        parent: Some(parent.id),
        h: parent.h,
        states: parent.states.clone(),
        inputs: parent.inputs.clone(),
        measurements,
        fault: Some(fault),
        split: parent.split,
    })
}

/// Append `copies_per_trajectory` faulty copies of every fault-free
/// trajectory. States and inputs are copied unchanged, so the imitation
/// target stays the fault-free baseline action.
pub fn augment(ds: &Dataset, cfg: &AugmentationConfig, seed: u64) -> Result<Dataset> {
    if ds.trajectories.iter().any(|t| t.fault.is_some()) {
        return Err(DftcError::InvalidInput("dataset is already augmented".into()));
    }
    let [lo, hi] = cfg.fault_window;
    if !(lo >= 0.0) || !(hi >= lo) {
        return Err(DftcError::InvalidConfig(format!("bad fault window {:?}", cfg.fault_window)));
    }
    if let Some(short) = ds.trajectories.iter().find(|t| t.duration() + 1e-9 < hi) {
        return Err(DftcError::InvalidConfig(format!(
            "fault window ends at {hi} s but trajectory {} lasts {} s",
            short.id,
            short.duration()
        )));
    }
    let copies = cfg.copies_per_trajectory;
    let next_id = ds.trajectories.iter().map(|t| t.id + 1).max().unwrap_or(0);
    let jobs: Vec<(usize, usize)> = (0..ds.len())
        .flat_map(|p| (0..copies).map(move |c| (p, c)))
        .collect();
    let extra = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(p, _))| {
            let id = next_id + j as u64;
            let parent = &ds.trajectories[p];
            let mut rng = rng_from(item_seed(seed, id));
            let fault = sample_fault(&mut rng, parent.h, cfg.fault_window)?;
            with_fault(parent, fault, id)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ds.clone();
    out.trajectories.extend(extra);
    Ok(out)
}

/// Shuffle fault-free trajectories by `seed` and assign 80/10/10; faulty
/// copies follow their parent. The normalizer is computed from the training
/// measurements.
pub fn split(ds: &Dataset, seed: u64) -> Result<Dataset> {
    if ds.len() < 10 {
        return Err(DftcError::InvalidConfig(format!(
            "need at least 10 trajectories to split, got {}",
            ds.len()
        )));
    }
    let mut roots: Vec<u64> = ds.trajectories.iter().map(Trajectory::root_id).collect();
    roots.sort_unstable();
    roots.dedup();
    let groups = roots.len();
    if groups < 3 {
        return Err(DftcError::InvalidConfig("need at least 3 independent trajectories".into()));
    }
    let mut rng = rng_from(seed);
    roots.shuffle(&mut rng);
    let tenth = ((groups as f64) * 0.1).round().max(1.0) as usize;
    let (n_val, n_test) = (tenth, tenth);
    let n_train = groups - n_val - n_test;
    let assign: HashMap<u64, Split> = roots
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (r, s)
        })
        .collect();
    let mut out = ds.clone();
    for t in &mut out.trajectories {
        t.split = Some(assign[&t.root_id()]);
    }
    out.normalizer = Some(Normalizer::from_rows(
        out.in_split(Split::Train).flat_map(|t| t.measurements.iter()),
    ));
    Ok(out)
}

/// `m` consecutive measurement rows and the baseline action at the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    pub step: usize,
    pub window: Vec<[f64; SENSOR_COUNT]>,
    pub target: [f64; INPUT_DIM],
}

/// One window per step `k ∈ [m−1, len−1]`.
pub fn window_samples(traj: &Trajectory, m: usize) -> Result<Vec<SampleWindow>> {
    if m == 0 || traj.len() < m {
        return Err(DftcError::InvalidInput(format!(
            "trajectory of length {} cannot hold a window of {m}",
            traj.len()
        )));
    }
    Ok((m - 1..traj.len())
        .map(|k| SampleWindow {
            step: k,
            window: traj.measurements[k + 1 - m..=k].to_vec(),
            target: traj.inputs[k],
        })
        .collect())
}

pub const CSV_HEADER: [&str; 22] = [
    "traj_id", "step", "t", "x1", "x2", "x3", "x4", "x5", "x6", "u1", "u2", "y1", "y2", "y3", "y4",
    "y5", "y6", "fault_sensor", "fault_mode", "fault_value", "fault_time", "split",
];

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(CSV_HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
    for t in &ds.trajectories {
        let (sensor, mode, value, time) = match &t.fault {
            Some(f) => (
                f.sensor_index.to_string(),
                f.mode.name().to_string(),
                f.mode.value().map(fmt_f64).unwrap_or_default(),
                fmt_f64(f.fault_time),
            ),
            None => Default::default(),
        };
        let split = t.split.map(|s| s.to_string()).unwrap_or_default();
        for k in 0..t.len() {
            row.clear();
            row.push(t.id.to_string());
            row.push(k.to_string());
            row.push(fmt_f64(t.time(k)));
            row.extend(t.states[k].iter().map(|&v| fmt_f64(v)));
            row.extend(t.inputs[k].iter().map(|&v| fmt_f64(v)));
            row.extend(t.measurements[k].iter().map(|&v| fmt_f64(v)));
            row.push(sensor.clone());
            row.push(mode.clone());
            row.push(value.clone());
            row.push(time.clone());
            row.push(split.clone());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(ds, std::io::BufWriter::new(file))
}

fn parse_field<T: FromStr>(line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| DftcError::Parse {
        line,
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

fn parse_fault(line: u64, rec: &csv::StringRecord) -> Result<Option<FaultSpec>> {
    if rec[17].is_empty() {
        return Ok(None);
    }
    let sensor: usize = parse_field(line, "fault_sensor", &rec[17])?;
    let time: f64 = parse_field(line, "fault_time", &rec[20])?;
    let mode = match &rec[18] {
        "hold" => FaultMode::HoldLast,
        "zero" => FaultMode::Zero,
        "constant" => FaultMode::Constant(parse_field(line, "fault_value", &rec[19])?),
        other => {
            return Err(DftcError::Parse {
                line,
                message: format!("unknown fault mode {other:?}"),
            })
        }
    };
    FaultSpec::new(sensor, mode, time)
        .map(Some)
        .map_err(|e| DftcError::Parse {
            line,
            message: e.to_string(),
        })
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        Some(header) => {
            let header = header?;
            if header.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(DftcError::Parse {
                    line: 1,
                    message: "unexpected header".into(),
                });
            }
        }
        None => return Ok(Dataset::default()),
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut times: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(DftcError::Parse {
                line,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let id: u64 = parse_field(line, "traj_id", &rec[0])?;
        let step: usize = parse_field(line, "step", &rec[1])?;
        let t: f64 = parse_field(line, "t", &rec[2])?;
        let mut nums = [0.0; 14];
        for (i, v) in nums.iter_mut().enumerate() {
            *v = parse_field(line, CSV_HEADER[3 + i], &rec[3 + i])?;
        }
        let fault = parse_fault(line, &rec)?;
        let split = if rec[21].is_empty() {
            None
        } else {
            Some(rec[21].parse::<Split>().map_err(|message| DftcError::Parse { line, message })?)
        };
        let new_traj = trajectories.last().is_none_or(|last| last.id != id);
        if new_traj {
            if step != 0 {
                return Err(DftcError::Parse {
                    line,
                    message: format!("trajectory {id} does not start at step 0"),
                });
            }
            trajectories.push(Trajectory {
                id,
                parent: None,
                h: DEFAULT_H,
                states: Vec::new(),
                inputs: Vec::new(),
                measurements: Vec::new(),
                fault,
                split,
            });
            times.push(Vec::new());
        }
        let traj = trajectories.last_mut().expect("pushed above");
        if step != traj.len() {
            return Err(DftcError::Parse {
                line,
                message: format!("trajectory {id}: expected step {}, found {step}", traj.len()),
            });
        }
        if traj.fault != fault || traj.split != split {
            return Err(DftcError::Parse {
                line,
                message: format!("trajectory {id}: fault or split changes mid-trajectory"),
            });
        }
        traj.states.push(std::array::from_fn(|i| nums[i]));
        traj.inputs.push([nums[6], nums[7]]);
        traj.measurements.push(std::array::from_fn(|i| nums[8 + i]));
        times.last_mut().expect("pushed above").push(t);
    }
    for (traj, ts) in trajectories.iter_mut().zip(&times) {
        if ts.len() > 1 {
            traj.h = ts[1];
        }
    }
    link_parents(&mut trajectories);
    let mut ds = Dataset {
        trajectories,
        normalizer: None,
        excluded: 0,
    };
    if ds.trajectories.iter().any(|t| t.split.is_some()) {
        ds.normalizer = Some(Normalizer::from_rows(
            ds.in_split(Split::Train).flat_map(|t| t.measurements.iter()),
        ));
    }
    Ok(ds)
}

// Faulty copies keep their parent's states bit for bit; recover the link.
fn link_parents(trajectories: &mut [Trajectory]) {
    let key = |t: &Trajectory| -> Vec<u64> {
        t.states.iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect()
    };
    let mut clean: HashMap<Vec<u64>, u64> = HashMap::new();
    for t in trajectories.iter().filter(|t| t.fault.is_none()) {
        clean.entry(key(t)).or_insert(t.id);
    }
    for t in trajectories.iter_mut().filter(|t| t.fault.is_some()) {
        t.parent = clean.get(&key(t)).copied();
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file))
}
