//! Ownship-centred observations and the box-bounded corruption model.

mod corruption;
mod normalize;
mod state;

pub use corruption::{
    in_box, project_to_box, sample_observation, sample_observation_with, BoxViolation, CorruptionBounds, ObservationSample,
};
pub use normalize::Normalizer;
pub use state::{assemble_state, col, StateMatrix, MAX_INTRUDERS, ROWS, STATE_DIM};
