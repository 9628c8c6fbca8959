//! One function per pipeline stage. Stages talk to each other only through
//! the files in the output directory.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;

use dftc::baseline::design;
use dftc::dataset::{augment, generate_trajectories, load_dataset, save_dataset, split, Dataset, Split};
use dftc::eval::{
    export_report, make_scenarios, rollout, run_suite, timing_stats, Contender, TimingStats,
    BASELINE_ID,
};
use dftc::nn::{curve_csv, CurvePoint};
use dftc::observability::{rank_configurations, ranking_csv, standard_configurations};
use dftc::plant::SensorConfig;
use dftc::policy::{train_dftc, train_fnn, BaselineController, DftcController, FnnController};
use dftc::rng::{item_seed, stream_seed};
use dftc::{Gain, Model, Model32};

use crate::config::RunConfig;

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 100_000;

/// A well-formed run whose result violates a modelling assumption; exit 2.
#[derive(Debug)]
pub struct DomainViolation(pub String);

impl fmt::Display for DomainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainViolation {}

fn gain(cfg: &RunConfig) -> anyhow::Result<Gain> {
    design(&cfg.plant, cfg.dataset.h, &cfg.weights, RICCATI_TOL, RICCATI_MAX_ITER).context("LQR design failed")
}

fn prepare_out(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = &cfg.paths.out;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))
}

fn read(path: &Path, what: &str) -> anyhow::Result<Dataset> {
    if !path.exists() {
        bail!("{what} {} not found; run the previous stage first", path.display());
    }
    load_dataset(path).with_context(|| format!("cannot load {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn report_counts(label: &str, ds: &Dataset, m: usize, start: Instant) {
    eprintln!(
        "{label}: {} trajectories, {} points, {} windows ({:.1} s)",
        ds.len(),
        ds.data_points(),
        ds.window_count(m),
        start.elapsed().as_secs_f64()
    );
}

pub fn gramian(cfg: &RunConfig) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let start = Instant::now();
    let mut configs = standard_configurations();
    for extra in &cfg.gramian.extra_configs {
        configs.push(SensorConfig::new(extra.clone())?);
    }
    let gcfg = cfg.gramian.build(cfg.seed);
    let k = gain(cfg)?;
    let rows = rank_configurations(&cfg.plant, &configs, &gcfg, Some(&k))?;
    let csv = ranking_csv(&rows);
    fs::write(cfg.paths.ranking(), &csv)?;
    print!("{csv}");
    eprintln!("ranked {} configurations ({:.1} s)", rows.len(), start.elapsed().as_secs_f64());
    let unobservable: Vec<String> = rows.iter().filter(|r| r.j.is_none()).map(|r| r.config.label()).collect();
    if !unobservable.is_empty() {
        return Err(DomainViolation(format!("unobservable sensor configurations: {}", unobservable.join(", "))).into());
    }
    Ok(())
}

pub fn gen(cfg: &RunConfig) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let start = Instant::now();
    let k = gain(cfg)?;
    write_json(&cfg.paths.gain(), &k.export())?;
    let ds = generate_trajectories(
        &cfg.plant,
        &k,
        cfg.dataset.n_traj,
        stream_seed(cfg.seed, "gen"),
        cfg.dataset.gen_config(),
    )?;
    if ds.excluded > 0 {
        eprintln!("warning: {} rollouts diverged and were dropped", ds.excluded);
    }
    save_dataset(&ds, &cfg.paths.generated())?;
    report_counts("gen", &ds, cfg.dftc.window, start);
    Ok(())
}

pub fn augment_stage(cfg: &RunConfig) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let start = Instant::now();
    let ds = read(&cfg.paths.generated(), "generated dataset")?;
    let ds = augment(&ds, &cfg.dataset.augmentation, stream_seed(cfg.seed, "augment"))?;
    save_dataset(&ds, &cfg.paths.augmented())?;
    report_counts("augment", &ds, cfg.dftc.window, start);
    Ok(())
}

pub fn split_stage(cfg: &RunConfig) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let start = Instant::now();
    let ds = read(&cfg.paths.augmented(), "augmented dataset")?;
    let ds = split(&ds, stream_seed(cfg.seed, "split"))?;
    save_dataset(&ds, &cfg.paths.dataset())?;
    report_counts("split", &ds, cfg.dftc.window, start);
    eprintln!(
        "split: train {} / val {} / test {}",
        ds.count(Split::Train),
        ds.count(Split::Val),
        ds.count(Split::Test)
    );
    Ok(())
}

fn progress(kind: &'static str) -> impl FnMut(&CurvePoint) {
    let start = Instant::now();
    move |p| {
        eprintln!(
            "{kind} epoch {:>3}: train {:.6} val {:.6} ({:.0} s)",
            p.epoch,
            p.train_loss,
            p.val_loss,
            start.elapsed().as_secs_f64()
        )
    }
}

/// Training runs in single precision; the saved weights are evaluated in
/// double precision.
pub fn train(cfg: &RunConfig, with_fnn: bool) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let ds = read(&cfg.paths.dataset(), "split dataset")?;
    let tcfg = dftc::nn::TrainConfig {
        seed: stream_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let init = stream_seed(cfg.seed, "init");
    let (model, curve) = train_dftc::<f32>(&ds, cfg.dftc.clone(), &tcfg, item_seed(init, 0), progress("dftc"))?;
    save_model(cfg, "dftc", &model, &curve)?;
    if with_fnn {
        let (model, curve) = train_fnn::<f32>(&ds, cfg.fnn.clone(), &tcfg, item_seed(init, 1), progress("fnn"))?;
        save_model(cfg, "fnn", &model, &curve)?;
    }
    Ok(())
}

fn save_model(cfg: &RunConfig, kind: &str, model: &Model32, curve: &[CurvePoint]) -> anyhow::Result<()> {
    model.save(&cfg.paths.model(kind))?;
    fs::write(cfg.paths.curve(kind), curve_csv(curve))?;
    eprintln!("{kind}: {} parameters saved to {}", model.param_count(), cfg.paths.model(kind).display());
    Ok(())
}

fn load_model(cfg: &RunConfig, kind: &str) -> anyhow::Result<Model> {
    let path = cfg.paths.model(kind);
    if !path.exists() {
        bail!("model file {} not found; run `train{}` first", path.display(), if kind == "fnn" { " --fnn" } else { "" });
    }
    let m = Model32::load(&path).with_context(|| format!("cannot load {}", path.display()))?;
    Ok(m.cast())
}

#[derive(Serialize)]
struct TimingReport {
    dftc: TimingStats,
    fnn: TimingStats,
}

pub fn eval(cfg: &RunConfig, dump_traj: bool) -> anyhow::Result<()> {
    prepare_out(cfg)?;
    let start = Instant::now();
    let dftc_model = load_model(cfg, "dftc")?;
    let fnn_model = load_model(cfg, "fnn")?;
    let k = gain(cfg)?;
    let mut ecfg = cfg.eval.clone();
    ecfg.trace_scenarios = match (dump_traj, ecfg.trace_scenarios) {
        (false, _) => 0,
        (true, 0) => ecfg.n_scenarios,
        (true, n) => n,
    };
    let i_max = cfg.plant.current_limit;
    let scenarios = make_scenarios(&ecfg, cfg.seed)?;
    let contenders = [
        Contender::dftc(dftc_model.clone(), i_max),
        Contender::fnn(fnn_model.clone(), i_max),
    ];
    let report = run_suite(&cfg.plant, &k, &contenders, &scenarios, &ecfg, &cfg.weights)?;
    export_report(&report, &cfg.paths.out)?;
    eprintln!("eval: {} runs over {} scenarios ({:.1} s)", report.runs.len(), scenarios.len(), start.elapsed().as_secs_f64());
    for a in &report.aggregates {
        println!(
            "{:<8} {:<8} mean_rho {:>10} std_rho {:>10} n {:>4} excluded {:>3} unsettled {:>5.1}%",
            a.controller,
            a.condition.as_str(),
            a.mean_rho.map_or("-".into(), |v| format!("{v:.4}")),
            a.std_rho.map_or("-".into(), |v| format!("{v:.4}")),
            a.n,
            a.excluded,
            100.0 * report.unsettled_fraction(&a.controller, a.condition).unwrap_or(0.0)
        );
    }

    // latency on measurements from a representative fault-free run
    if let Some(sc) = scenarios.first() {
        let mut base = BaselineController::new(k.clone(), cfg.plant);
        let run = rollout(&cfg.plant, &mut base, sc, None, &ecfg, &cfg.weights, false)?;
        let ys = &run.trace.measurements;
        let n = cfg.eval.timing_calls;
        let timing = TimingReport {
            dftc: timing_stats(&mut DftcController::new(dftc_model, i_max)?, ys, n)?,
            fnn: timing_stats(&mut FnnController::new(fnn_model, i_max)?, ys, n)?,
        };
        write_json(&cfg.paths.timing(), &timing)?;
        for (name, t) in [("dftc", timing.dftc), ("fnn", timing.fnn)] {
            println!("{name:<8} latency mean {:.3} ms worst {:.3} ms", t.mean * 1e3, t.worst * 1e3);
        }
    }

    let limit = cfg.eval.max_diverged_fraction;
    for c in report.controllers.iter().filter(|c| c.as_str() != BASELINE_ID) {
        for &cond in &report.conditions {
            let rows: Vec<_> = report.rows_for(c, cond).collect();
            let diverged = rows.iter().filter(|r| r.diverged()).count();
            if !rows.is_empty() && diverged as f64 / rows.len() as f64 > limit {
                return Err(DomainViolation(format!(
                    "{c} diverged in {diverged} of {} {} runs",
                    rows.len(),
                    cond.as_str()
                ))
                .into());
            }
        }
    }
    Ok(())
}

pub fn pipeline(cfg: &RunConfig, skip_train: bool, dump_traj: bool) -> anyhow::Result<()> {
    let start = Instant::now();
    gen(cfg)?;
    augment_stage(cfg)?;
    split_stage(cfg)?;
    if !skip_train {
        train(cfg, true)?;
    }
    eval(cfg, dump_traj)?;
    eprintln!("pipeline finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
