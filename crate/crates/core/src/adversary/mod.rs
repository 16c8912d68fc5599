//! First-order worst-case observation perturbations and the oracles used to
//! certify them.
//!
//! The adversary linearises the value function around the true next state and
//! moves every coordinate to the face of the uncertainty box that decreases
//! the linear model: `Xi = S - kappa * sign(grad V(S))`.

mod fixtures;
mod oracle;

pub use fixtures::{LinearValue, QuadraticValue, TanhMlp};
pub use oracle::{
    brute_force_worst_case, estimate_lipschitz_grad, fo_point, remainder_bound_check, BoundReport, BoxDomain,
    NetworkValue, OracleOptions, ValueFunction, WorstCase,
};

use crate::error::{Error, Result};
use crate::observation::{col, CorruptionBounds, StateMatrix, ROWS, STATE_DIM};
use crate::sim::wrap_angle;

pub type Gradient = [[f64; STATE_DIM]; ROWS];

/// Result of the closed-form adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoAdversaryOutput {
    pub xi: StateMatrix,
    /// `sum kappa * |grad|` over valid rows: the first-order value drop.
    pub predicted_drop: f64,
    pub gradient: Gradient,
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_inputs(grad: &Gradient) -> Result<()> {
    if grad.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("value gradient"));
    }
    Ok(())
}

/// `Xi = S - kappa * sign(grad)` on the valid rows of `s`; headings are
/// wrapped and masked rows are copied unchanged.
pub fn fo_perturbation(s: &StateMatrix, grad: &Gradient, kappa: &CorruptionBounds) -> Result<FoAdversaryOutput> {
    check_inputs(grad)?;
    let mut xi = *s;
    let mut drop = 0.0;
    for r in s.valid_rows() {
        for c in 0..STATE_DIM {
            let (k, g) = (kappa.kappa[r][c], grad[r][c]);
            let v = s.rows[r][c] - k * sign0(g);
            xi.rows[r][c] = if c == col::HEADING { wrap_angle(v) } else { v };
            drop += k * g.abs();
        }
    }
    Ok(FoAdversaryOutput { xi, predicted_drop: drop, gradient: *grad })
}

/// First-order estimate of the worst-case value: `V - sum kappa * |grad|`.
pub fn fo_value_drop(value: f64, s: &StateMatrix, grad: &Gradient, kappa: &CorruptionBounds) -> Result<f64> {
    check_inputs(grad)?;
    let drop: f64 = s
        .valid_rows()
        .flat_map(|r| (0..STATE_DIM).map(move |c| (r, c)))
        .map(|(r, c)| kappa.kappa[r][c] * grad[r][c].abs())
        .sum();
    Ok(value - drop)
}
