//! Dense tensors, a reverse-mode tape, MLPs and Adam.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, Layer, MlpParams};
pub use tape::{ColumnTable, GatherMap, Gradients, SoftmaxAxis, Tape, Var};
pub use tensor::{ShapeError, Tensor};
