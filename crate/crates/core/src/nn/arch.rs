use serde::{Deserialize, Serialize};

use crate::error::{DftcError, Result};
use crate::plant::{INPUT_DIM, SENSOR_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One LSTM block per sensor channel over a window, then a dense head.
    Dftc,
    /// Dense network on the current measurement only.
    Fnn,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub kind: ModelKind,
    /// LSTM hidden size per block; unused by the dense model.
    #[serde(rename = "H")]
    pub hidden: usize,
    /// Window length in samples.
    #[serde(rename = "m")]
    pub window: usize,
    pub fc_sizes: Vec<usize>,
}

impl Arch {
    pub fn dftc() -> Self {
        Arch {
            kind: ModelKind::Dftc,
            hidden: 32,
            window: 10,
            fc_sizes: vec![64, 64],
        }
    }

    pub fn fnn() -> Self {
        Arch {
            kind: ModelKind::Fnn,
            hidden: 0,
            window: 1,
            fc_sizes: vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DftcError::InvalidConfig(m.into()));
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.fc_sizes.contains(&0) {
            return bad("dense layers need at least one unit");
        }
        match self.kind {
            ModelKind::Dftc if self.hidden == 0 => bad("LSTM hidden size must be positive"),
            ModelKind::Fnn if self.window != 1 => bad("the dense model uses a window of 1"),
            _ => Ok(()),
        }
    }

    /// Width of the dense head's input.
    pub fn head_input(&self) -> usize {
        match self.kind {
            ModelKind::Dftc => SENSOR_COUNT * self.hidden,
            ModelKind::Fnn => SENSOR_COUNT,
        }
    }

    pub fn blocks(&self) -> usize {
        match self.kind {
            ModelKind::Dftc => SENSOR_COUNT,
            ModelKind::Fnn => 0,
        }
    }

    /// `(fan_in, fan_out)` of every dense layer including the output layer.
    pub fn dense_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.fc_sizes.len() + 1);
        let mut fan_in = self.head_input();
        for &n in self.fc_sizes.iter().chain(std::iter::once(&INPUT_DIM)) {
            dims.push((fan_in, n));
            fan_in = n;
        }
        dims
    }

    pub fn layout(&self) -> Layout {
        let mut groups = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, weight: bool| {
            let len = shape.iter().product::<usize>();
            groups.push(Group {
                name,
                shape,
                offset,
                weight,
            });
            offset += len;
        };
        let h = self.hidden;
        for j in 1..=self.blocks() {
            push(format!("lstm{j}.w_ih"), vec![4 * h, 1], true);
            push(format!("lstm{j}.w_hh"), vec![4 * h, h], true);
            push(format!("lstm{j}.b"), vec![4 * h], false);
        }
        let dims = self.dense_dims();
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let name = if l + 1 == dims.len() {
                "out".to_string()
            } else {
                format!("fc{}", l + 1)
            };
            push(format!("{name}.w"), vec![fan_out, fan_in], true);
            push(format!("{name}.b"), vec![fan_out], false);
        }
        Layout { groups, len: offset }
    }
}

/// A named slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Weights are L2-regularized; biases are not.
    pub weight: bool,
}

impl Group {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub groups: Vec<Group>,
    pub len: usize,
}

impl Layout {
    pub fn group(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Parameters of one LSTM block, which are contiguous.
    pub fn block_len(&self, arch: &Arch) -> usize {
        let h = arch.hidden;
        4 * h + 4 * h * h + 4 * h
    }

    /// Start of the dense head.
    pub fn head_offset(&self, arch: &Arch) -> usize {
        arch.blocks() * self.block_len(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dftc_parameter_count() {
        let arch = Arch::dftc();
        let layout = arch.layout();
        assert_eq!(layout.len, 42754);
        assert_eq!(layout.block_len(&arch), 4352);
        assert_eq!(layout.group("fc1.w").unwrap().shape, vec![64, 192]);
        assert_eq!(layout.group("out.b").unwrap().range(), 42752..42754);
        assert_eq!(layout.group("fc1.w").unwrap().offset, layout.head_offset(&arch));
    }

    #[test]
    fn fnn_parameter_count() {
        let layout = Arch::fnn().layout();
        assert_eq!(layout.len, 6 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert!(layout.group("lstm1.w_ih").is_none());
    }

    #[test]
    fn groups_tile_the_vector() {
        let arch = Arch {
            kind: ModelKind::Dftc,
            hidden: 3,
            window: 4,
            fc_sizes: vec![5],
        };
        let layout = arch.layout();
        let mut next = 0;
        for g in &layout.groups {
            assert_eq!(g.offset, next);
            next += g.len();
        }
        assert_eq!(next, layout.len);
    }

    #[test]
    fn validation() {
        assert!(Arch::dftc().validate().is_ok());
        let mut a = Arch::fnn();
        a.window = 3;
        assert!(a.validate().is_err());
        let mut a = Arch::dftc();
        a.hidden = 0;
        assert!(a.validate().is_err());
    }
}
