//! Minimal dense network engine: matrices, MLPs, a reverse-mode tape, Adam,
//! and the scalar losses the alignment objectives are built from.

mod adam;
mod io;
mod loss;
mod matrix;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamState};
pub use io::{
    digest_params, hex, load_params, params_from_bytes, params_to_bytes, save_params,
    PARAMS_MAGIC, PARAMS_VERSION,
};
pub(crate) use io::{read_params_block, write_params_block};
pub use loss::{bce_with_logits, gan_losses, l1_loss};
pub use matrix::{axpy, dot, Matrix};
pub use mlp::{sigmoid, softplus, Activation, MlpParams, MlpSpec};
pub use tape::{Backprop, GradStore, MlpGrads, NetKey, Tape, Var};
