//! CNN + GRU regressor with hand-written forward and backward passes.

pub mod checkpoint;
pub mod conv;
pub mod gru;
pub mod loss;
pub mod net;
pub mod optim;
pub mod real;

pub use checkpoint::{load_checkpoint, load_checkpoint_with_arch, save_checkpoint, Checkpoint};
pub use conv::{Conv2d, ConvGrads, ConvSpec, Volume};
pub use gru::{Gru, GruGrads, GruTrace};
pub use loss::{cents_from_mse, mse_loss};
pub use net::{
    gru_hidden_init, AutotunerNet, Gradients, NetArch, Trace, GRU_HIDDEN, INPUT_BINS,
    MIN_NOTE_FRAMES, TABLE1,
};
pub use optim::{clip_gradients, AdamConfig, AdamState, DEFAULT_CLIP};
pub use real::Real;
