//! Attention actor-critic with exact reverse-mode gradients.
//!
//! Ownship and intruder rows pass through separate two-layer LeakyReLU
//! encoders. The ownship embedding queries the valid intruder embeddings
//! through multi-head attention; the pooled context is concatenated with the
//! ownship embedding and feeds a policy head (three logits) and a value head.

mod checkpoint;
mod dist;
mod layout;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use dist::{kl_from_logits, log_softmax, ActionDistribution, PROB_FLOOR};
pub use layout::{Block, Layout};
pub use model::{Featurizer, Forward, NetConfig, Network, Tape, INTRUDER_FEATURES, NUM_ACTIONS};
