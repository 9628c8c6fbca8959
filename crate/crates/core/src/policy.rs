//! Closed-loop controllers: the LQR baseline, the recurrent fault-tolerant
//! controller over a sliding measurement window, and the dense comparison
//! controller on the current measurement only.

use std::collections::VecDeque;

use crate::baseline::LqrGain;
use crate::dataset::{Dataset, Split};
use crate::error::{DftcError, Result};
use crate::nn::{model_forward, train, Arch, CurvePoint, ModelKind, ModelParams, TrainConfig, WindowSet, Workspace};
use crate::plant::{ControlInput, PlantParams, PlantState, SENSOR_COUNT};
use crate::scalar::Scalar;

/// A stateful policy mapping each new (possibly faulty) measurement to a
/// saturated input.
pub trait Controller: Send {
    fn act(&mut self, y: &[f64; SENSOR_COUNT]) -> Result<ControlInput<f64>>;

    /// Forget all history; the next call behaves like a fresh controller.
    fn reset(&mut self);

    fn name(&self) -> &'static str;

    /// Per-block LSTM outputs behind the last action, if the model has any.
    fn block_outputs(&self) -> Option<Vec<f64>> {
        None
    }
}

fn check_measurement(y: &[f64; SENSOR_COUNT]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DftcError::numeric("measurement"))
    }
}

fn saturate(u: [f64; 2], i_max: f64) -> ControlInput<f64> {
    ControlInput(u.map(|v| v.clamp(-i_max, i_max)))
}

/// Full-state feedback on the measurement, `u = sat(−K y)`.
#[derive(Clone, Debug)]
pub struct BaselineController {
    gain: LqrGain<f64>,
    plant: PlantParams<f64>,
}

impl BaselineController {
    pub fn new(gain: LqrGain<f64>, plant: PlantParams<f64>) -> Self {
        BaselineController { gain, plant }
    }
}

impl Controller for BaselineController {
    fn act(&mut self, y: &[f64; SENSOR_COUNT]) -> Result<ControlInput<f64>> {
        check_measurement(y)?;
        Ok(crate::baseline::baseline_policy(&self.gain, &self.plant, &PlantState(*y)))
    }

    fn reset(&mut self) {}

    fn name(&self) -> &'static str {
        "baseline"
    }
}

/// Recurrent controller over the last `m` raw measurements. Before `m`
/// measurements have arrived the window is padded with the first one.
#[derive(Clone, Debug)]
pub struct DftcController<T: Scalar> {
    model: ModelParams<T>,
    i_max: f64,
    buffer: VecDeque<[f64; SENSOR_COUNT]>,
    ws: Workspace<T>,
    window: Vec<[f64; SENSOR_COUNT]>,
}

impl<T: Scalar> DftcController<T> {
    pub fn new(model: ModelParams<T>, i_max: f64) -> Result<Self> {
        if model.arch().kind != ModelKind::Dftc {
            return Err(DftcError::InvalidInput("the recurrent controller needs a DFTC model".into()));
        }
        let m = model.arch().window;
        Ok(DftcController {
            model,
            i_max,
            buffer: VecDeque::with_capacity(m),
            ws: Workspace::new(),
            window: Vec::with_capacity(m),
        })
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.model
    }

    /// Window the next action is computed from, oldest row first.
    pub fn window(&self) -> Vec<[f64; SENSOR_COUNT]> {
        self.buffer.iter().copied().collect()
    }
}

impl<T: Scalar> Controller for DftcController<T> {
    fn act(&mut self, y: &[f64; SENSOR_COUNT]) -> Result<ControlInput<f64>> {
        check_measurement(y)?;
        let m = self.model.arch().window;
        if self.buffer.is_empty() {
            self.buffer.extend(std::iter::repeat_n(*y, m));
        } else {
            self.buffer.pop_front();
            self.buffer.push_back(*y);
        }
        self.window.clear();
        self.window.extend(self.buffer.iter().copied());
        let u = model_forward(&self.model, &self.window, &mut self.ws)?;
        Ok(saturate(u.map(|v| v.to_f64_lossy()), self.i_max))
    }

    fn reset(&mut self) {
        self.buffer.clear();
    }

    fn name(&self) -> &'static str {
        "dftc"
    }

    fn block_outputs(&self) -> Option<Vec<f64>> {
        (self.ws.batch() == 1).then(|| self.ws.head_input(0).iter().map(|v| v.to_f64_lossy()).collect())
    }
}

/// Dense controller on the current measurement; stateless.
#[derive(Clone, Debug)]
pub struct FnnController<T: Scalar> {
    model: ModelParams<T>,
    i_max: f64,
    ws: Workspace<T>,
}

impl<T: Scalar> FnnController<T> {
    pub fn new(model: ModelParams<T>, i_max: f64) -> Result<Self> {
        if model.arch().kind != ModelKind::Fnn {
            return Err(DftcError::InvalidInput("the dense controller needs an FNN model".into()));
        }
        Ok(FnnController {
            model,
            i_max,
            ws: Workspace::new(),
        })
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.model
    }
}

impl<T: Scalar> Controller for FnnController<T> {
    fn act(&mut self, y: &[f64; SENSOR_COUNT]) -> Result<ControlInput<f64>> {
        check_measurement(y)?;
        let u = model_forward(&self.model, std::slice::from_ref(y), &mut self.ws)?;
        Ok(saturate(u.map(|v| v.to_f64_lossy()), self.i_max))
    }

    fn reset(&mut self) {}

    fn name(&self) -> &'static str {
        "fnn"
    }
}

/// Train the recurrent controller on the (augmented) train split, validating
/// on the val split.
pub fn train_dftc<T: Scalar>(
    ds: &Dataset,
    arch: Arch,
    cfg: &TrainConfig,
    init_seed: u64,
    on_epoch: impl FnMut(&CurvePoint),
) -> Result<(ModelParams<T>, Vec<CurvePoint>)> {
    if arch.kind != ModelKind::Dftc {
        return Err(DftcError::InvalidConfig("train_dftc needs a DFTC architecture".into()));
    }
    train_on(ds, arch, cfg, init_seed, false, on_epoch)
}

/// Train the dense controller on fault-free trajectories only, one
/// measurement per sample.
pub fn train_fnn<T: Scalar>(
    ds: &Dataset,
    arch: Arch,
    cfg: &TrainConfig,
    init_seed: u64,
    on_epoch: impl FnMut(&CurvePoint),
) -> Result<(ModelParams<T>, Vec<CurvePoint>)> {
    if arch.kind != ModelKind::Fnn {
        return Err(DftcError::InvalidConfig("train_fnn needs an FNN architecture".into()));
    }
    train_on(ds, arch, cfg, init_seed, true, on_epoch)
}

fn train_on<T: Scalar>(
    ds: &Dataset,
    arch: Arch,
    cfg: &TrainConfig,
    init_seed: u64,
    fault_free_only: bool,
    on_epoch: impl FnMut(&CurvePoint),
) -> Result<(ModelParams<T>, Vec<CurvePoint>)> {
    let normalizer = ds
        .normalizer
        .ok_or_else(|| DftcError::InvalidInput("dataset must be split and normalized before training".into()))?;
    let m = arch.window;
    let pick = |split: Split| {
        ds.in_split(split)
            .filter(move |t| !fault_free_only || t.fault.is_none())
    };
    let train_set = WindowSet::new(pick(Split::Train), &normalizer, m)?;
    let val_set = WindowSet::new(pick(Split::Val), &normalizer, m)?;
    let model = ModelParams::init(arch, normalizer, init_seed)?;
    train(model, &train_set, &val_set, cfg, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Normalizer;
    use crate::nn::forward;
    use crate::rng::rng_from;
    use rand::Rng;

    fn dftc() -> DftcController<f64> {
        let model = ModelParams::init(Arch::dftc(), Normalizer::default(), 1).unwrap();
        DftcController::new(model, 5.0).unwrap()
    }

    fn measurement(rng: &mut impl Rng) -> [f64; 6] {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn first_call_pads_with_the_first_measurement() {
        let mut c = dftc();
        let y = [0.1, -0.2, 1.0, -1.0, 50.0, -50.0];
        c.act(&y).unwrap();
        assert_eq!(c.window(), vec![y; 10]);
        let z = [0.0; 6];
        c.act(&z).unwrap();
        let w = c.window();
        assert_eq!(&w[..9], &[y; 9]);
        assert_eq!(w[9], z);
    }

    #[test]
    fn output_equals_model_on_literal_window() {
        let mut c = dftc();
        let mut rng = rng_from(2);
        let history: Vec<[f64; 6]> = (0..15).map(|_| measurement(&mut rng)).collect();
        let mut u = ControlInput::zero();
        for y in &history {
            u = c.act(y).unwrap();
        }
        let oracle = model_forward(c.model(), &history[5..], &mut Workspace::new()).unwrap();
        assert_eq!(u.0, oracle.map(|v| v.clamp(-5.0, 5.0)));
        let block = c.block_outputs().unwrap();
        assert_eq!(block.len(), 192);
    }

    #[test]
    fn output_depends_only_on_the_window_suffix() {
        let mut rng = rng_from(3);
        let suffix: Vec<[f64; 6]> = (0..10).map(|_| measurement(&mut rng)).collect();
        let mut a = dftc();
        let mut b = dftc();
        for _ in 0..7 {
            a.act(&measurement(&mut rng)).unwrap();
        }
        for _ in 0..3 {
            b.act(&measurement(&mut rng)).unwrap();
        }
        let (mut ua, mut ub) = (ControlInput::zero(), ControlInput::zero());
        for y in &suffix {
            ua = a.act(y).unwrap();
            ub = b.act(y).unwrap();
        }
        assert_eq!(ua, ub);
    }

    #[test]
    fn reset_restores_fresh_behaviour() {
        let mut rng = rng_from(4);
        let y0 = measurement(&mut rng);
        let mut fresh = dftc();
        let expected = fresh.act(&y0).unwrap();
        let mut c = dftc();
        for _ in 0..12 {
            c.act(&measurement(&mut rng)).unwrap();
        }
        let weights = c.model().clone();
        c.reset();
        c.reset();
        assert_eq!(c.act(&y0).unwrap(), expected);
        assert_eq!(c.model(), &weights);
    }

    #[test]
    fn zero_weights_give_saturated_bias() {
        let mut model = ModelParams::<f64>::zeros(Arch::dftc(), Normalizer::default()).unwrap();
        model.group_mut("out.b").unwrap().copy_from_slice(&[0.5, -9.0]);
        let mut c = DftcController::new(model.clone(), 5.0).unwrap();
        assert_eq!(c.act(&[0.3; 6]).unwrap().0, [0.5, -5.0]);
        let mut f = FnnController::new(
            {
                let mut m = ModelParams::<f64>::zeros(Arch::fnn(), Normalizer::default()).unwrap();
                m.group_mut("out.b").unwrap().copy_from_slice(&[7.0, 0.25]);
                m
            },
            5.0,
        )
        .unwrap();
        assert_eq!(f.act(&[0.3; 6]).unwrap().0, [5.0, 0.25]);
    }

    #[test]
    fn outputs_are_always_saturated_and_deterministic() {
        let mut rng = rng_from(5);
        let mut model = ModelParams::<f64>::init(Arch::fnn(), Normalizer::default(), 6).unwrap();
        for v in model.params_mut() {
            *v *= 40.0;
        }
        let mut f = FnnController::new(model, 5.0).unwrap();
        let mut d = dftc();
        for _ in 0..200 {
            let y = measurement(&mut rng).map(|v| v * 300.0);
            let u = f.act(&y).unwrap();
            assert!(u.0.iter().all(|v| v.abs() <= 5.0));
            assert_eq!(f.act(&y).unwrap(), u);
            assert!(d.act(&y).unwrap().0.iter().all(|v| v.abs() <= 5.0));
        }
    }

    #[test]
    fn wrong_model_kind_and_bad_input_are_rejected() {
        let fnn = ModelParams::<f64>::init(Arch::fnn(), Normalizer::default(), 1).unwrap();
        assert!(DftcController::new(fnn, 5.0).is_err());
        let mut c = dftc();
        assert!(c.act(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn fnn_forward_is_the_dense_network() {
        let model = ModelParams::<f64>::init(Arch::fnn(), Normalizer::default(), 8).unwrap();
        let mut f = FnnController::new(model.clone(), 100.0).unwrap();
        let y = [0.1, 0.2, -0.3, 0.4, 5.0, -6.0];
        let mut ws = Workspace::new();
        let out = forward(&model, &y, 1, &mut ws).unwrap().to_vec();
        assert_eq!(f.act(&y).unwrap().0, [out[0], out[1]]);
    }
}
