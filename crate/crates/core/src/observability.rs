//! Empirical observability Gramians and the log-det observability measure
//! used to compare sensor configurations.
//!
//! For a base point `x̄` and perturbation size `ε`, each state direction `j`
//! is probed with two simulations started at `x̄ ± ε e_j`. With
//! `Δⱼ(t) = y₊ⱼ(t) − y₋ⱼ(t)` restricted to the active sensors,
//!
//! ```text
//! W_jk = 1/(4ε²) ∫₀^T Δⱼ(t)ᵀ Δₖ(t) dt
//! ```
//!
//! The integral uses the trapezoidal rule on the simulation grid. Gramians of
//! several base points are summed. Because `W` is a sum of per-channel terms,
//! all configurations are evaluated on one shared set of probe rollouts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_policy, LqrGain};
use crate::error::{DftcError, Result};
use crate::integrator::rk4_step;
use crate::linalg::Matrix;
use crate::plant::{measure, step_rk4, ControlInput, PlantParams, PlantState, SensorConfig, STATE_DIM};
use crate::scalar::Scalar;

/// Natural log of the smallest determinant still treated as nonsingular.
pub const LOG_DET_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// A system that can be simulated from an arbitrary initial state, with
/// every output channel sampled on a uniform grid.
pub trait ProbeSystem<T: Scalar, const N: usize>: Sync {
    fn output_dim(&self) -> usize;

    /// Outputs at `t = 0, step, …, (samples − 1)·step`.
    fn simulate(&self, x0: &[T; N], step: T, samples: usize) -> Result<Vec<Vec<T>>>;
}

/// `ẋ = A x`, `y = C x`.
#[derive(Clone, Debug)]
pub struct LinearSystem<T: Scalar> {
    pub a: Matrix<T>,
    pub c: Matrix<T>,
}

impl<T: Scalar, const N: usize> ProbeSystem<T, N> for LinearSystem<T> {
    fn output_dim(&self) -> usize {
        self.c.rows()
    }

    fn simulate(&self, x0: &[T; N], step: T, samples: usize) -> Result<Vec<Vec<T>>> {
        if self.a.rows() != N || self.a.cols() != N || self.c.cols() != N {
            return Err(DftcError::Shape(format!("linear system is not {N}-dimensional")));
        }
        let f = |x: &[T; N]| -> Result<[T; N]> {
            let d = self.a.mul_vec(x);
            Ok(std::array::from_fn(|i| d[i]))
        };
        let mut x = *x0;
        let mut out = Vec::with_capacity(samples);
        for i in 0..samples {
            out.push(self.c.mul_vec(&x));
            if i + 1 < samples {
                x = rk4_step(f, &x, step)?;
            }
        }
        Ok(out)
    }
}

/// How probe rollouts of the pendulum are driven.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbePolicy {
    /// Baseline LQR on the true state, sampled with a zero-order hold.
    ClosedLoopBaseline,
    /// Unforced dynamics; the default, since the open-loop origin is stable.
    ZeroInput,
}

/// The pendulum with all six sensors, optionally under baseline feedback,
/// in coordinates `z = x / scale` with outputs `y / scale`.
pub struct PlantProbe<'a, T: Scalar> {
    pub params: &'a PlantParams<T>,
    pub gain: Option<&'a LqrGain<T>>,
    /// Controller update period; a multiple of the simulation step.
    pub control_period: T,
    pub scale: [T; STATE_DIM],
}

impl<T: Scalar> ProbeSystem<T, STATE_DIM> for PlantProbe<'_, T> {
    fn output_dim(&self) -> usize {
        STATE_DIM
    }

    fn simulate(&self, x0: &[T; STATE_DIM], step: T, samples: usize) -> Result<Vec<Vec<T>>> {
        let hold = (self.control_period / step).round().to_usize().unwrap_or(1).max(1);
        let mut x = PlantState(std::array::from_fn(|i| x0[i] * self.scale[i]));
        let mut u = ControlInput::zero();
        let mut out = Vec::with_capacity(samples);
        for i in 0..samples {
            let y = measure::<T, crate::rng::StreamRng>(&x, T::zero(), None);
            out.push(y.iter().zip(&self.scale).map(|(&v, &s)| v / s).collect());
            if i + 1 == samples {
                break;
            }
            if i % hold == 0 {
                if let Some(g) = self.gain {
                    u = baseline_policy(g, self.params, &x);
                }
            }
            x = step_rk4(self.params, &x, &u, step)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramianConfig {
    pub epsilon: f64,
    /// Integration horizon `T_o` (s).
    pub horizon: f64,
    /// Simulation and quadrature step (s).
    pub step: f64,
    pub base_points: Vec<[f64; STATE_DIM]>,
    pub probe_policy: ProbePolicy,
    /// Operating range of each state and sensor. States, perturbations and
    /// outputs are divided by it, so `ε` and `J` are dimensionless.
    #[serde(default = "default_scale")]
    pub scale: [f64; STATE_DIM],
    /// Zero-order-hold period of the baseline controller during probes (s).
    #[serde(default = "default_control_period")]
    pub control_period: f64,
}

fn default_scale() -> [f64; STATE_DIM] {
    crate::dataset::INITIAL_BOX
}

fn default_control_period() -> f64 {
    crate::dataset::DEFAULT_H
}

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 4.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_BASE_POINTS: usize = 8;

impl GramianConfig {
    /// Default settings with `count` base points drawn from the initial-state box.
    pub fn sampled(seed: u64, count: usize) -> Self {
        let mut rng = crate::rng::stream(seed, "gramian");
        let base_points = (0..count)
            .map(|_| crate::dataset::sample_initial_state(&mut rng).0)
            .collect();
        Self {
            epsilon: DEFAULT_EPSILON,
            horizon: DEFAULT_HORIZON,
            step: DEFAULT_STEP,
            base_points,
            probe_policy: ProbePolicy::ZeroInput,
            scale: default_scale(),
            control_period: default_control_period(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DftcError::InvalidConfig("epsilon must lie in (0, 1)".into()));
        }
        if !(self.horizon > 0.0) || !(self.step > 0.0) || self.step > self.horizon {
            return Err(DftcError::InvalidConfig("need 0 < step <= horizon".into()));
        }
        if !(self.control_period >= self.step) {
            return Err(DftcError::InvalidConfig("control period must be at least one step".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(DftcError::InvalidConfig("scales must be positive and finite".into()));
        }
        if self.base_points.is_empty() {
            return Err(DftcError::InvalidConfig("at least one base point is required".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.horizon / self.step).round() as usize + 1
    }
}

/// Per-output-channel Gramians, summed over base points: the Gramian of any
/// channel subset is the sum of the corresponding entries.
pub fn channel_gramians<T, const N: usize, S>(
    system: &S,
    base_points: &[[T; N]],
    epsilon: T,
    step: T,
    samples: usize,
) -> Result<Vec<Matrix<T>>>
where
    T: Scalar,
    S: ProbeSystem<T, N>,
{
    if samples < 2 {
        return Err(DftcError::InvalidConfig("quadrature needs at least two samples".into()));
    }
    let probes: Vec<(usize, usize, bool)> = (0..base_points.len())
        .flat_map(|b| (0..N).flat_map(move |j| [(b, j, true), (b, j, false)]))
        .collect();
    let outputs = probes
        .par_iter()
        .map(|&(b, j, plus)| {
            let mut x0 = base_points[b];
            x0[j] += if plus { epsilon } else { -epsilon };
            system.simulate(&x0, step, samples).map_err(|e| DftcError::Divergence {
                context: format!(
                    "probe {}e_{} from base point {b}: {e}",
                    if plus { "+" } else { "-" },
                    j + 1
                ),
                state: x0.iter().map(|v| v.to_f64_lossy()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let channels = system.output_dim();
    let mut grams = vec![Matrix::zeros(N, N); channels];
    let scale = T::one() / (T::of(4.0) * epsilon * epsilon);
    let half = T::of(0.5);
    for b in 0..base_points.len() {
        let at = |j: usize, plus: bool| &outputs[(b * N + j) * 2 + usize::from(!plus)];
        // Δⱼ(t) for every direction, as [direction][sample][channel]
        let deltas: Vec<Vec<Vec<T>>> = (0..N)
            .map(|j| {
                at(j, true)
                    .iter()
                    .zip(at(j, false))
                    .map(|(p, m)| p.iter().zip(m).map(|(&a, &b)| a - b).collect())
                    .collect()
            })
            .collect();
        for (c, gram) in grams.iter_mut().enumerate() {
            for j in 0..N {
                for k in j..N {
                    let mut acc = T::zero();
                    for t in 0..samples {
                        let w = if t == 0 || t + 1 == samples { half } else { T::one() };
                        acc += w * deltas[j][t][c] * deltas[k][t][c];
                    }
                    let v = acc * step * scale;
                    gram[(j, k)] += v;
                    if k != j {
                        gram[(k, j)] += v;
                    }
                }
            }
        }
    }
    Ok(grams)
}

/// Sum of channel Gramians over `channels` (0-based), exactly symmetric.
pub fn combine<T: Scalar>(grams: &[Matrix<T>], channels: &[usize]) -> Matrix<T> {
    let n = grams.first().map_or(0, Matrix::rows);
    let mut w = Matrix::zeros(n, n);
    for &c in channels {
        w = &w + &grams[c];
    }
    w.symmetrized()
}

/// Gramian of a generic system for the given output channels.
pub fn empirical_gramian<T, const N: usize, S>(
    system: &S,
    channels: &[usize],
    base_points: &[[T; N]],
    epsilon: T,
    step: T,
    samples: usize,
) -> Result<Matrix<T>>
where
    T: Scalar,
    S: ProbeSystem<T, N>,
{
    if let Some(&bad) = channels.iter().find(|&&c| c >= system.output_dim()) {
        return Err(DftcError::InvalidConfig(format!("output channel {bad} does not exist")));
    }
    let grams = channel_gramians(system, base_points, epsilon, step, samples)?;
    Ok(combine(&grams, channels))
}

/// `J = −log det(W⁻¹) = log det W`, from a Cholesky factorization.
pub fn observability_measure<T: Scalar>(w: &Matrix<T>) -> Result<T> {
    let unobservable = |log_det: f64| DftcError::Unobservable { det: log_det.exp() };
    let l = w.cholesky().ok_or_else(|| unobservable(f64::NEG_INFINITY))?;
    let two = T::of(2.0);
    let j: T = (0..l.rows()).map(|i| two * l[(i, i)].ln()).sum();
    if !j.is_finite() || j.to_f64_lossy() <= LOG_DET_FLOOR {
        return Err(unobservable(j.to_f64_lossy()));
    }
    Ok(j)
}

#[derive(Clone, Debug)]
pub struct GramianResult<T: Scalar> {
    pub w: Matrix<T>,
    /// `None` when `W` is numerically singular.
    pub j: Option<T>,
    pub config: SensorConfig,
}

fn plant_channel_gramians<T: Scalar>(
    plant: &PlantParams<T>,
    cfg: &GramianConfig,
    baseline: Option<&LqrGain<T>>,
) -> Result<Vec<Matrix<T>>> {
    cfg.validate()?;
    plant.validate()?;
    let gain = match cfg.probe_policy {
        ProbePolicy::ClosedLoopBaseline => Some(baseline.ok_or_else(|| {
            DftcError::InvalidConfig("closed-loop probes need a baseline gain".into())
        })?),
        ProbePolicy::ZeroInput => None,
    };
    let probe = PlantProbe {
        params: plant,
        gain,
        control_period: T::of(cfg.control_period),
        scale: cfg.scale.map(T::of),
    };
    let base: Vec<[T; STATE_DIM]> = cfg
        .base_points
        .iter()
        .map(|b| std::array::from_fn(|i| T::of(b[i] / cfg.scale[i])))
        .collect();
    channel_gramians(&probe, &base, T::of(cfg.epsilon), T::of(cfg.step), cfg.samples())
}

/// Gramian and measure of one sensor configuration of the pendulum.
pub fn plant_gramian<T: Scalar>(
    plant: &PlantParams<T>,
    sensors: &SensorConfig,
    cfg: &GramianConfig,
    baseline: Option<&LqrGain<T>>,
) -> Result<GramianResult<T>> {
    let grams = plant_channel_gramians(plant, cfg, baseline)?;
    Ok(evaluate(&grams, sensors))
}

fn evaluate<T: Scalar>(grams: &[Matrix<T>], sensors: &SensorConfig) -> GramianResult<T> {
    let channels: Vec<usize> = sensors.active().iter().map(|i| i - 1).collect();
    let w = combine(grams, &channels);
    let j = observability_measure(&w).ok();
    GramianResult {
        w,
        j,
        config: sensors.clone(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingRow {
    pub config: SensorConfig,
    /// `None` for unobservable configurations.
    pub j: Option<f64>,
    pub reference: bool,
}

impl RankingRow {
    pub fn status(&self) -> &'static str {
        match (self.j.is_some(), self.reference) {
            (false, _) => "unobservable",
            (true, true) => "reference",
            (true, false) => "observable",
        }
    }
}

/// Evaluate every configuration on one shared set of probe rollouts and sort
/// by `J`, best first; unobservable configurations go last.
pub fn rank_configurations<T: Scalar>(
    plant: &PlantParams<T>,
    configs: &[SensorConfig],
    cfg: &GramianConfig,
    baseline: Option<&LqrGain<T>>,
) -> Result<Vec<RankingRow>> {
    let grams = plant_channel_gramians(plant, cfg, baseline)?;
    let mut rows: Vec<RankingRow> = configs
        .iter()
        .map(|c| {
            let r = evaluate(&grams, c);
            RankingRow {
                config: c.clone(),
                j: r.j.map(|j| j.to_f64_lossy()),
                reference: c.is_full(),
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.j, b.j) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// The full configuration followed by the six single-sensor losses.
pub fn standard_configurations() -> Vec<SensorConfig> {
    std::iter::once(SensorConfig::full())
        .chain(SensorConfig::single_drops())
        .collect()
}

/// `config,active_sensors,J,status`.
pub fn ranking_csv(rows: &[RankingRow]) -> String {
    let mut out = String::from("config,active_sensors,J,status\n");
    for r in rows {
        let name = if r.config.is_full() {
            "y".to_string()
        } else if r.config.len() == 5 {
            let dropped = (1..=6).find(|i| !r.config.active().contains(i)).unwrap_or(0);
            format!("y{dropped}")
        } else {
            format!("y{}", r.config.label().replace(['[', ']', ','], ""))
        };
        let j = r.j.map(|j| format!("{j:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{name},\"{}\",{j},{}\n",
            r.config.label(),
            r.status()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frozen() -> LinearSystem<f64> {
        LinearSystem {
            a: Matrix::from_diag(&[0.0]),
            c: Matrix::from_diag(&[1.0]),
        }
    }

    #[test]
    fn frozen_state_gives_horizon_length() {
        let w = empirical_gramian(&frozen(), &[0], &[[0.0]], 1e-4, 0.01, 201).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-9);
        let j = observability_measure(&w).unwrap();
        assert!((j - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn measure_of_simple_matrices() {
        assert_eq!(observability_measure(&Matrix::<f64>::identity(6)).unwrap(), 0.0);
        let j = observability_measure(&Matrix::from_diag(&[2.0; 6])).unwrap();
        assert!((j - 6.0 * 2f64.ln()).abs() < 1e-12);
        let singular = Matrix::from_diag(&[1.0, 1.0, 0.0]);
        assert!(matches!(observability_measure(&singular), Err(DftcError::Unobservable { .. })));
        let tiny = Matrix::from_diag(&[1e-160, 1e-160]);
        assert!(observability_measure(&tiny).is_err());
    }

    #[test]
    fn disconnected_state_is_unobservable() {
        // x2 never reaches the output
        let sys = LinearSystem {
            a: Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -0.5]]),
            c: Matrix::from_rows(&[vec![1.0, 0.0]]),
        };
        let w = empirical_gramian(&sys, &[0], &[[0.3, 0.1]], 1e-4, 0.01, 301).unwrap();
        assert_eq!(w[(1, 1)], 0.0);
        assert!(observability_measure(&w).is_err());
    }

    #[test]
    fn output_scaling_scales_the_gramian() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -1.0]]);
        let sys = LinearSystem {
            a: a.clone(),
            c: Matrix::from_rows(&[vec![1.0, 0.0]]),
        };
        let scaled = LinearSystem {
            a,
            c: Matrix::from_rows(&[vec![3.0, 0.0]]),
        };
        let w: Matrix<f64> = empirical_gramian(&sys, &[0], &[[0.0, 0.0]], 1e-4, 0.01, 401).unwrap();
        let w3: Matrix<f64> = empirical_gramian(&scaled, &[0], &[[0.0, 0.0]], 1e-4, 0.01, 401).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((w3[(i, j)] - 9.0 * w[(i, j)]).abs() < 1e-12 * (1.0 + w3[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = GramianConfig {
            epsilon: 1e-4,
            horizon: 1.0,
            step: 1e-3,
            base_points: vec![[0.0; 6]],
            probe_policy: ProbePolicy::ZeroInput,
            scale: [1.0; 6],
            control_period: 0.01,
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.samples(), 1001);
        cfg.base_points.clear();
        assert!(cfg.validate().is_err());
        cfg.base_points.push([0.0; 6]);
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-4;
        cfg.probe_policy = ProbePolicy::ClosedLoopBaseline;
        let p = PlantParams::<f64>::default();
        assert!(plant_gramian(&p, &SensorConfig::full(), &cfg, None).is_err());
    }

    #[test]
    fn csv_has_one_row_per_config() {
        let rows = vec![
            RankingRow {
                config: SensorConfig::full(),
                j: Some(1.5),
                reference: true,
            },
            RankingRow {
                config: SensorConfig::without(3).unwrap(),
                j: None,
                reference: false,
            },
        ];
        let csv = ranking_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "config,active_sensors,J,status");
        assert_eq!(lines[1], "y,\"[1,2,3,4,5,6]\",1.500000,reference");
        assert_eq!(lines[2], "y3,\"[1,2,4,5,6]\",,unobservable");
    }

    fn lti() -> LinearSystem<f64> {
        LinearSystem {
            a: Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -1.0]]),
            c: Matrix::from_rows(&[vec![1.0, 0.0]]),
        }
    }

    /// ∫₀^T e^{Aᵀt} CᵀC e^{At} dt by composite Simpson on a grid `fine`,
    /// with e^{A·fine} from a truncated Taylor series.
    fn lti_oracle(horizon: f64, fine: f64) -> nalgebra::Matrix2<f64> {
        use nalgebra::{Matrix2, RowVector2};
        let a = Matrix2::new(0.0, 1.0, -1.0, -1.0);
        let c = RowVector2::new(1.0, 0.0);
        let mut step: Matrix2<f64> = Matrix2::identity();
        let mut term: Matrix2<f64> = Matrix2::identity();
        for k in 1..25 {
            term = term * a * fine / k as f64;
            step += term;
        }
        let n = (horizon / fine).round() as usize;
        assert!(n % 2 == 0);
        let mut e: Matrix2<f64> = Matrix2::identity();
        let mut acc: Matrix2<f64> = Matrix2::zeros();
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let ce = c * e;
            acc += w * ce.transpose() * ce;
            e = step * e;
        }
        acc * fine / 3.0
    }

    #[test]
    fn lti_gramian_matches_fine_quadrature() {
        let (h, horizon) = (0.01, 10.0);
        let samples = (horizon / h) as usize + 1;
        let w = empirical_gramian(&lti(), &[0], &[[0.0, 0.0]], 1e-4, h, samples).unwrap();
        let oracle = lti_oracle(horizon, h / 100.0);
        for i in 0..2 {
            for j in 0..2 {
                let rel = (w[(i, j)] - oracle[(i, j)]).abs() / oracle.abs().max();
                assert!(rel < 1e-4, "W[{i}{j}] = {} vs {}", w[(i, j)], oracle[(i, j)]);
            }
        }
        let j = observability_measure(&w).unwrap();
        assert!((j - oracle.determinant().ln()).abs() < 1e-4);
    }

    #[test]
    fn lti_gramian_is_independent_of_base_point_and_epsilon() {
        let samples = 501;
        let w0: Matrix<f64> = empirical_gramian(&lti(), &[0], &[[0.0, 0.0]], 1e-4, 0.01, samples).unwrap();
        let w1: Matrix<f64> = empirical_gramian(&lti(), &[0], &[[1.5, -2.0]], 1e-3, 0.01, samples).unwrap();
        assert!(w0.max_abs_diff(&w1) < 1e-7 * w0.max_abs());
        let w2: Matrix<f64> =
            empirical_gramian(&lti(), &[0], &[[0.0, 0.0], [1.0, 1.0]], 1e-4, 0.01, samples).unwrap();
        assert!(w2.max_abs_diff(&w0.scale(2.0)) < 1e-7 * w2.max_abs());
    }

    fn default_setup() -> (PlantParams<f64>, LqrGain<f64>, GramianConfig) {
        let (plant, gain, mut cfg) = closed_loop_setup();
        cfg.probe_policy = ProbePolicy::ZeroInput;
        (plant, gain, cfg)
    }

    fn closed_loop_setup() -> (PlantParams<f64>, LqrGain<f64>, GramianConfig) {
        let plant = PlantParams::default();
        let gain = crate::baseline::design(
            &plant,
            crate::dataset::DEFAULT_H,
            &crate::baseline::CostWeights::default(),
            1e-12,
            100_000,
        )
        .unwrap();
        let mut cfg = GramianConfig::sampled(7, 2);
        cfg.probe_policy = ProbePolicy::ClosedLoopBaseline;
        (plant, gain, cfg)
    }

    #[test]
    fn plant_ranking_is_monotone_and_psd() {
        let (plant, gain, cfg) = default_setup();
        let grams = plant_channel_gramians(&plant, &cfg, Some(&gain)).unwrap();
        let full = evaluate(&grams, &SensorConfig::full());
        let w = &full.w;
        assert_eq!(w.max_abs_diff(&w.transpose()), 0.0);
        let na = nalgebra::DMatrix::from_fn(6, 6, |i, j| w[(i, j)]);
        let min_eig = na.symmetric_eigenvalues().min();
        assert!(min_eig > -1e-10, "{min_eig}");
        let j_full = full.j.unwrap();
        let mut five = Vec::new();
        for s in SensorConfig::single_drops() {
            let j = evaluate(&grams, &s).j.unwrap();
            assert!(j <= j_full, "{} {j} > {j_full}", s.label());
            five.push(j);
        }
        for pair in [[1, 2], [1, 4], [2, 3], [3, 4], [1, 6], [2, 5], [3, 6], [4, 5], [5, 6]] {
            let c = SensorConfig::new(pair.to_vec()).unwrap();
            let j2 = evaluate(&grams, &c).j.unwrap();
            assert!(five.iter().all(|&j| j2 < j), "{} = {j2}", c.label());
        }
        let blind = SensorConfig::new(vec![1, 3]).unwrap();
        assert!(evaluate(&grams, &blind).j.is_none());
        let rows = rank_configurations(&plant, &standard_configurations(), &cfg, Some(&gain)).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.windows(2).all(|p| p[0].j >= p[1].j));
        assert!(rows[0].reference);
    }

    #[test]
    fn closed_loop_probes_are_monotone() {
        let (plant, gain, cfg) = closed_loop_setup();
        let rows = rank_configurations(&plant, &standard_configurations(), &cfg, Some(&gain)).unwrap();
        let full = rows.iter().find(|r| r.reference).unwrap().j.unwrap();
        assert!(rows.iter().all(|r| r.j.unwrap() <= full));
    }

    #[test]
    fn plant_measure_is_robust_to_epsilon() {
        let (plant, gain, mut cfg) = default_setup();
        let j1 = plant_gramian(&plant, &SensorConfig::full(), &cfg, Some(&gain)).unwrap().j.unwrap();
        cfg.epsilon /= 2.0;
        let j2 = plant_gramian(&plant, &SensorConfig::full(), &cfg, Some(&gain)).unwrap().j.unwrap();
        assert!((j1 - j2).abs() < 0.01 * j1.abs(), "{j1} vs {j2}");
    }
}
