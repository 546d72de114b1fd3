//! Dense primitives with analytic gradients, the parameter store, SGD,
//! finite-difference gradient checking and checkpoint I/O.

mod checkpoint;
mod gradcheck;
pub mod ops;
mod store;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader, SlotRecord, CHECKPOINT_VERSION, MAGIC};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport, SlotError, REL_ERR_FLOOR};
pub use store::{LrGroup, ParameterStore, SlotId};
pub use tensor::{Shape, Tensor};
