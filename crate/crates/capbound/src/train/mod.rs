//! Small conv nets trained by projected SGD on synthetic tasks.

pub mod data;
pub mod margin;
pub mod net;
pub mod sgd;
pub mod sweep;

pub use data::{synth_data, LabeledData, Task};
pub use net::{BlockArch, LayerConstraint, NetArch, PoolSpec, ShortcutKind, TinyNet};
pub use sgd::{train_projected, EpochRecord, TrainConfig, TrainOutcome, TrainStatus};
