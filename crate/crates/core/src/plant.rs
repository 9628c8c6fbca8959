//! Dual-axis reaction-wheel inverted pendulum: dynamics, sensors and sensor
//! faults.
//!
//! Each axis is a link on a torsional spring, actuated by the reaction torque
//! of a motor-driven wheel:
//!
//! ```text
//! I_p θ̈ = ml g sin θ − k_s θ − b_th θ̇ − τ + b_ph φ̇
//! φ̈     = (τ − b_ph φ̇) / I_w − θ̈
//! τ     = k_T · sat(i, ±i_max)
//! ```
//!
//! The two axes share parameters and do not interact. The state is always
//! ordered `[θ1 θ2 θ̇1 θ̇2 φ̇1 φ̇2]` and every state is measured directly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DftcError, Result};
use crate::integrator::rk4_step;
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 2;
pub const SENSOR_COUNT: usize = 6;

/// Physical parameters. JSON keys follow the usual symbol names.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "")]
pub struct PlantParams<T: Scalar> {
    /// Link inertia about its pivot, per axis (kg m²).
    #[serde(rename = "I_p")]
    pub pendulum_inertia: T,
    /// Wheel inertia (kg m²).
    #[serde(rename = "I_w")]
    pub wheel_inertia: T,
    /// Mass times centre-of-mass distance (kg m).
    #[serde(rename = "ml")]
    pub mass_length: T,
    #[serde(rename = "g")]
    pub gravity: T,
    /// Torsional spring stiffness, per axis (N m/rad).
    #[serde(rename = "k_s")]
    pub spring_stiffness: T,
    #[serde(rename = "b_th")]
    pub link_damping: T,
    #[serde(rename = "b_ph")]
    pub wheel_damping: T,
    /// Motor torque constant (N m/A).
    #[serde(rename = "k_T")]
    pub torque_constant: T,
    /// Motor current limit (A).
    #[serde(rename = "i_max")]
    pub current_limit: T,
    /// Standard deviation of additive sensor noise; 0 disables noise.
    pub noise_std: T,
}

impl<T: Scalar> Default for PlantParams<T> {
    fn default() -> Self {
        PlantParams {
            // 160 g, 160 mm disc: ½ m r²
            wheel_inertia: T::of(0.5 * 0.16 * 0.08 * 0.08),
            pendulum_inertia: T::of(0.02),
            mass_length: T::of(0.3),
            gravity: T::of(9.81),
            spring_stiffness: T::of(5.0),
            link_damping: T::of(0.01),
            wheel_damping: T::of(1e-5),
            torque_constant: T::of(0.0369),
            current_limit: T::of(5.0),
            noise_std: T::zero(),
        }
    }
}

impl<T: Scalar> PlantParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pendulum_inertia,
            self.wheel_inertia,
            self.mass_length,
            self.gravity,
            self.spring_stiffness,
            self.link_damping,
            self.wheel_damping,
            self.torque_constant,
            self.current_limit,
            self.noise_std,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(DftcError::InvalidParams("non-finite plant parameter".into()));
        }
        let positive = [
            ("I_p", self.pendulum_inertia),
            ("I_w", self.wheel_inertia),
            ("k_T", self.torque_constant),
            ("i_max", self.current_limit),
        ];
        for (name, v) in positive {
            if v <= T::zero() {
                return Err(DftcError::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.link_damping < T::zero() || self.wheel_damping < T::zero() || self.noise_std < T::zero() {
            return Err(DftcError::InvalidParams(
                "damping and noise must be non-negative".into(),
            ));
        }
        if self.spring_stiffness <= self.mass_length * self.gravity {
            return Err(DftcError::InvalidParams(
                "k_s must exceed ml*g so the upright origin is open-loop stable".into(),
            ));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> PlantParams<U> {
        let c = |v: T| U::of(v.to_f64_lossy());
        PlantParams {
            pendulum_inertia: c(self.pendulum_inertia),
            wheel_inertia: c(self.wheel_inertia),
            mass_length: c(self.mass_length),
            gravity: c(self.gravity),
            spring_stiffness: c(self.spring_stiffness),
            link_damping: c(self.link_damping),
            wheel_damping: c(self.wheel_damping),
            torque_constant: c(self.torque_constant),
            current_limit: c(self.current_limit),
            noise_std: c(self.noise_std),
        }
    }

    /// Clamp both currents to `±i_max`.
    pub fn saturate(&self, u: ControlInput<T>) -> ControlInput<T> {
        let lim = self.current_limit;
        ControlInput(u.0.map(|i| i.max(-lim).min(lim)))
    }

    /// Per-axis energy sum that the undamped, unforced dynamics conserve.
    pub fn energy(&self, x: &PlantState<T>) -> T {
        let half = T::of(0.5);
        (0..2)
            .map(|a| {
                let (th, dth, dph) = (x.0[a], x.0[2 + a], x.0[4 + a]);
                half * self.pendulum_inertia * dth * dth
                    + half * self.wheel_inertia * (dth + dph) * (dth + dph)
                    + half * self.spring_stiffness * th * th
                    + self.mass_length * self.gravity * (th.cos() - T::one())
            })
            .sum()
    }
}

/// `[θ1 θ2 θ̇1 θ̇2 φ̇1 φ̇2]` in rad and rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PlantState<T>(pub [T; STATE_DIM]);

impl<T: Scalar> PlantState<T> {
    pub fn zero() -> Self {
        PlantState([T::zero(); STATE_DIM])
    }

    pub fn theta1(&self) -> T {
        self.0[0]
    }
    pub fn theta2(&self) -> T {
        self.0[1]
    }
    pub fn dtheta1(&self) -> T {
        self.0[2]
    }
    pub fn dtheta2(&self) -> T {
        self.0[3]
    }
    pub fn dphi1(&self) -> T {
        self.0[4]
    }
    pub fn dphi2(&self) -> T {
        self.0[5]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Swap the roles of the two axes.
    pub fn swap_axes(&self) -> Self {
        let x = self.0;
        PlantState([x[1], x[0], x[3], x[2], x[5], x[4]])
    }
}

/// Motor currents `[i1 i2]` in A.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ControlInput<T>(pub [T; INPUT_DIM]);

impl<T: Scalar> ControlInput<T> {
    pub fn zero() -> Self {
        ControlInput([T::zero(); INPUT_DIM])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// State derivative `[θ̇1 θ̇2 θ̈1 θ̈2 φ̈1 φ̈2]`.
pub fn dynamics<T: Scalar>(
    params: &PlantParams<T>,
    state: &PlantState<T>,
    input: &ControlInput<T>,
) -> Result<[T; STATE_DIM]> {
    if !state.is_finite() || !input.is_finite() {
        return Err(DftcError::InvalidInput(
            "non-finite state or input passed to dynamics".into(),
        ));
    }
    let p = params;
    let x = &state.0;
    let mut dx = [T::zero(); STATE_DIM];
    let lim = p.current_limit;
    for axis in 0..2 {
        let th = x[axis];
        let dth = x[2 + axis];
        let dph = x[4 + axis];
        let torque = p.torque_constant * input.0[axis].max(-lim).min(lim);
        let ddth = (p.mass_length * p.gravity * th.sin() - p.spring_stiffness * th
            - p.link_damping * dth
            - torque
            + p.wheel_damping * dph)
            / p.pendulum_inertia;
        let ddph = (torque - p.wheel_damping * dph) / p.wheel_inertia - ddth;
        dx[axis] = dth;
        dx[2 + axis] = ddth;
        dx[4 + axis] = ddph;
    }
    Ok(dx)
}

/// One RK4 step of length `h` with the input held constant.
pub fn step_rk4<T: Scalar>(
    params: &PlantParams<T>,
    state: &PlantState<T>,
    input: &ControlInput<T>,
    h: T,
) -> Result<PlantState<T>> {
    if !(h > T::zero()) {
        return Err(DftcError::InvalidInput("step size must be positive".into()));
    }
    let f = |x: &[T; STATE_DIM]| dynamics(params, &PlantState(*x), input);
    rk4_step(f, &state.0, h).map(PlantState)
}

/// Sensor readings: the state itself, plus optional Gaussian noise.
pub fn measure<T: Scalar, R: Rng + ?Sized>(
    state: &PlantState<T>,
    noise_std: T,
    rng: Option<&mut R>,
) -> [T; SENSOR_COUNT] {
    let mut y = state.0;
    if noise_std > T::zero() {
        if let Some(rng) = rng {
            // noise_std > 0 and finite was validated with the params
            let normal = Normal::new(0.0, noise_std.to_f64_lossy()).expect("valid std");
            for v in y.iter_mut() {
                *v += T::of(normal.sample(rng));
            }
        }
    }
    y
}

/// Indices (1-based) of the sensors that deliver readings.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorConfig {
    active: Vec<usize>,
}

impl SensorConfig {
    pub fn new(mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.is_empty() {
            return Err(DftcError::InvalidConfig("sensor configuration is empty".into()));
        }
        if let Some(bad) = active.iter().find(|&&i| i == 0 || i > SENSOR_COUNT) {
            return Err(DftcError::InvalidConfig(format!("sensor index {bad} outside 1..=6")));
        }
        Ok(SensorConfig { active })
    }

    pub fn full() -> Self {
        SensorConfig {
            active: (1..=SENSOR_COUNT).collect(),
        }
    }

    /// Every sensor except `dropped`.
    pub fn without(dropped: usize) -> Result<Self> {
        Self::new((1..=SENSOR_COUNT).filter(|&i| i != dropped).collect())
    }

    /// The six configurations that lose exactly one sensor.
    pub fn single_drops() -> Vec<Self> {
        (1..=SENSOR_COUNT)
            .map(|i| Self::without(i).expect("valid index"))
            .collect()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.active.len() == SENSOR_COUNT
    }

    pub fn is_subset_of(&self, other: &SensorConfig) -> bool {
        self.active.iter().all(|i| other.active.contains(i))
    }

    /// `"[1,2,3]"`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.active.iter().map(|i| i.to_string()).collect();
        format!("[{}]", parts.join(","))
    }
}

/// What a faulty sensor reports from the fault time on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value")]
pub enum FaultMode {
    /// Frozen at the last reading before the fault.
    HoldLast,
    Zero,
    /// Stuck at a fixed value (e.g. the sensor's range limit).
    Constant(f64),
}

impl FaultMode {
    pub fn name(&self) -> &'static str {
        match self {
            FaultMode::HoldLast => "hold",
            FaultMode::Zero => "zero",
            FaultMode::Constant(_) => "constant",
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            FaultMode::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

/// A single abrupt sensor fault.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// 1-based sensor index.
    pub sensor_index: usize,
    pub mode: FaultMode,
    /// Seconds from the start of the rollout.
    pub fault_time: f64,
}

impl FaultSpec {
    pub fn new(sensor_index: usize, mode: FaultMode, fault_time: f64) -> Result<Self> {
        let spec = FaultSpec {
            sensor_index,
            mode,
            fault_time,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_index == 0 || self.sensor_index > SENSOR_COUNT {
            return Err(DftcError::InvalidSpec(format!(
                "sensor index {} outside 1..=6",
                self.sensor_index
            )));
        }
        if !(self.fault_time >= 0.0) || !self.fault_time.is_finite() {
            return Err(DftcError::InvalidSpec("fault time must be finite and >= 0".into()));
        }
        if let FaultMode::Constant(v) = self.mode {
            if !v.is_finite() {
                return Err(DftcError::InvalidSpec("constant fault value must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.fault_time
    }

    /// Column (0-based) of the faulty sensor.
    pub fn column(&self) -> usize {
        self.sensor_index - 1
    }
}

/// Replace the faulty channel of `y` for `t >= t_f`.
///
/// `history_value` is the faulty sensor's last reading before `t_f`; it is
/// only used by [`FaultMode::HoldLast`].
pub fn apply_fault<T: Scalar>(
    y: &[T; SENSOR_COUNT],
    history_value: T,
    spec: &FaultSpec,
    t: f64,
) -> Result<[T; SENSOR_COUNT]> {
    spec.validate()?;
    let mut out = *y;
    if spec.is_active(t) {
        out[spec.column()] = match spec.mode {
            FaultMode::HoldLast => history_value,
            FaultMode::Zero => T::zero(),
            FaultMode::Constant(v) => T::of(v),
        };
    }
    Ok(out)
}

/// Applies a fault along a rollout, tracking the pre-fault reading the
/// hold-last mode needs.
#[derive(Clone, Debug)]
pub struct FaultInjector<T> {
    spec: Option<FaultSpec>,
    last_healthy: Option<T>,
}

impl<T: Scalar> FaultInjector<T> {
    pub fn new(spec: Option<FaultSpec>) -> Result<Self> {
        if let Some(s) = &spec {
            s.validate()?;
        }
        Ok(FaultInjector {
            spec,
            last_healthy: None,
        })
    }

    pub fn spec(&self) -> Option<&FaultSpec> {
        self.spec.as_ref()
    }

    /// Feed the healthy reading at time `t`, get the (possibly faulty) one.
    /// Samples must arrive in time order.
    pub fn process(&mut self, y: &[T; SENSOR_COUNT], t: f64) -> Result<[T; SENSOR_COUNT]> {
        let Some(spec) = self.spec else {
            return Ok(*y);
        };
        if !spec.is_active(t) {
            self.last_healthy = Some(y[spec.column()]);
            return Ok(*y);
        }
        // a fault at the very first sample freezes that sample's reading
        let held = *self.last_healthy.get_or_insert(y[spec.column()]);
        apply_fault(y, held, &spec, t)
    }
}
