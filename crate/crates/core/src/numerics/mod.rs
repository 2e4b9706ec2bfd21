//! Differentiable-computation substrate: tensors, a reverse-mode tape,
//! standard layers, an adaptive-moment optimizer, parameter bundles with a
//! binary checkpoint format, and a finite-difference gradient checker.

pub mod adam;
pub mod engine;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{clip_global_norm, Adam, OptimError};
pub use engine::{Engine, TapeEngine, ValueEngine};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use params::{
    init_bias, init_weight, load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta,
    ParamBundle, CHECKPOINT_FORMAT_VERSION,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ShapeError, Tensor};
