//! A minimal tape-based reverse-mode differentiation engine over dense
//! 5-d tensors, with the layers the super-resolution networks use.

mod adam;
mod checkpoint;
mod conv;
pub mod ops;
mod scalar;
mod tape;
mod tensor;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{checkpoint_header_path, checkpoint_payload_path, Checkpoint};
pub use ops::RunningStats;
pub use scalar::Scalar;
pub use tape::{Mode, Tape, Var};
pub use tensor::Tensor;
