use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Arch, Group, Layout, ModelKind};
use crate::dataset::Normalizer;
use crate::error::{DftcError, Result};
use crate::plant::SENSOR_COUNT;
use crate::rng::rng_from;
use crate::scalar::Scalar;

/// All trainable parameters of a model as one flat vector, plus the input
/// normalization it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar> {
    arch: Arch,
    normalizer: Normalizer,
    layout: Layout,
    params: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn from_params(arch: Arch, normalizer: Normalizer, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        normalizer.validate()?;
        let layout = arch.layout();
        if params.len() != layout.len {
            return Err(DftcError::Shape(format!(
                "architecture needs {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(ModelParams {
            arch,
            normalizer,
            layout,
            params,
        })
    }

    pub fn zeros(arch: Arch, normalizer: Normalizer) -> Result<Self> {
        let n = arch.layout().len;
        Self::from_params(arch, normalizer, vec![T::zero(); n])
    }

    /// Uniform `±1/√fan_in` per layer; LSTM gates see `1 + H` inputs. The
    /// forget-gate bias starts at zero.
    pub fn init(arch: Arch, normalizer: Normalizer, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch, normalizer)?;
        let mut rng = rng_from(seed);
        let h = model.arch.hidden;
        let mut dense = model.arch.dense_dims().into_iter();
        let mut fan_in = 0;
        let groups = model.layout.groups.clone();
        for g in &groups {
            if g.name.starts_with("lstm") {
                fan_in = 1 + h;
            } else if g.weight {
                fan_in = dense.next().map_or(1, |d| d.0);
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let slice = &mut model.params[g.range()];
            for v in slice.iter_mut() {
                *v = T::of(rng.random_range(-bound..=bound));
            }
            if g.name.ends_with(".b") && g.name.starts_with("lstm") {
                slice[h..2 * h].fill(T::zero());
            }
        }
        Ok(model)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn find(&self, name: &str) -> Result<&Group> {
        self.layout
            .group(name)
            .ok_or_else(|| DftcError::InvalidInput(format!("no parameter group {name}")))
    }

    pub fn group(&self, name: &str) -> Result<&[T]> {
        let r = self.find(name)?.range();
        Ok(&self.params[r])
    }

    pub fn group_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let r = self.find(name)?.range();
        Ok(&mut self.params[r])
    }

    /// `Σ V²` over weights, biases excluded.
    pub fn weight_sq_sum(&self) -> T {
        self.layout
            .groups
            .iter()
            .filter(|g| g.weight)
            .flat_map(|g| self.params[g.range()].iter())
            .map(|&v| v * v)
            .sum()
    }

    pub fn normalize(&self, y: &[f64; SENSOR_COUNT]) -> [T; SENSOR_COUNT] {
        std::array::from_fn(|j| T::of((y[j] - self.normalizer.mean[j]) / self.normalizer.std[j]))
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Result<Self> {
        normalizer.validate()?;
        self.normalizer = normalizer;
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            normalizer: self.normalizer,
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn is_dftc(&self) -> bool {
        self.arch.kind == ModelKind::Dftc
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            arch: self.arch.clone(),
            normalizer: self.normalizer,
            param_count: self.params.len(),
            weights: self
                .layout
                .groups
                .iter()
                .map(|g| NamedArray {
                    name: g.name.clone(),
                    shape: g.shape.clone(),
                    data: self.params[g.range()].iter().map(|v| v.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        file.arch.validate()?;
        let layout = file.arch.layout();
        if file.param_count != layout.len {
            return Err(DftcError::Shape(format!(
                "param_count {} does not match the architecture ({})",
                file.param_count, layout.len
            )));
        }
        if file.weights.len() != layout.groups.len() {
            return Err(DftcError::Shape(format!(
                "expected {} weight arrays, found {}",
                layout.groups.len(),
                file.weights.len()
            )));
        }
        let mut params = vec![T::zero(); layout.len];
        for g in &layout.groups {
            let a = file
                .weights
                .iter()
                .find(|a| a.name == g.name)
                .ok_or_else(|| DftcError::Shape(format!("missing weight array {}", g.name)))?;
            if a.shape != g.shape || a.data.len() != g.len() {
                return Err(DftcError::Shape(format!(
                    "{}: expected shape {:?}, found {:?} with {} values",
                    g.name,
                    g.shape,
                    a.shape,
                    a.data.len()
                )));
            }
            for (p, &v) in params[g.range()].iter_mut().zip(&a.data) {
                *p = T::of(v);
            }
        }
        Self::from_params(file.arch, file.normalizer, params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| DftcError::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    arch: Arch,
    normalizer: Normalizer,
    param_count: usize,
    weights: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}
