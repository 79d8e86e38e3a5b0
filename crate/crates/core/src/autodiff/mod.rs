//! Input-derivative jets, activations and the scalar reverse-mode tape.

mod activation;
mod jet;
mod tape;

pub use activation::{relu_kink_hits, Activation};
pub use jet::{
    hess_index, jet_activate, jet_affine, Component, Jet4, JetOrder, HESS_LEN, HESS_PAIRS, JET_LEN, NUM_INPUTS, TIME,
};
pub use tape::{Tape, Var};
