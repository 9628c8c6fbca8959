//! Recurrent imitation network: one LSTM block per sensor channel, a dense
//! head on the concatenated block outputs, and the training machinery.

pub mod arch;
pub mod fpmode;
pub mod model;
pub mod net;
pub mod optim;
pub mod tensor;
pub mod train;

pub use arch::{Arch, ModelKind};
pub use model::ModelParams;
pub use net::{backward, forward, loss, lstm_forward, model_forward, regularized_loss, Workspace};
pub use tensor::Tensor;
pub use optim::RmsProp;
pub use train::{curve_csv, evaluate_loss, parse_curve, train, CurvePoint, TrainConfig, WindowSet};
