//! MLP encoder plus linear classifier with hand-written backpropagation,
//! cross-entropy loss and Adam.

mod adam;
mod checkpoint;
mod mlp;

pub(crate) use mlp::{affine, column_sums};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{from_checkpoint_str, load_checkpoint, save_checkpoint, to_checkpoint_string};
pub use mlp::{
    accuracy, backward, cross_entropy, encode, forward, softmax_rows, ForwardCache, ForwardOutput, GradientBundle,
    MlpParams,
};
