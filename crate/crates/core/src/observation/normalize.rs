use super::state::{StateMatrix, ROWS, STATE_DIM};
use crate::error::{Error, Result};

/// Per-column affine map `(v - offset) / scale`, applied to every row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub offset: [f64; STATE_DIM],
    pub scale: [f64; STATE_DIM],
}

impl Normalizer {
    pub fn new(offset: [f64; STATE_DIM], scale: [f64; STATE_DIM]) -> Result<Self> {
        if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) || offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("normalizer scales must be finite and non-zero".into()));
        }
        Ok(Self { offset, scale })
    }

    pub fn identity() -> Self {
        Self { offset: [0.0; STATE_DIM], scale: [1.0; STATE_DIM] }
    }

    /// Masked rows come out as zeros.
    pub fn normalize(&self, s: &StateMatrix) -> [[f64; STATE_DIM]; ROWS] {
        let mut out = [[0.0; STATE_DIM]; ROWS];
        for r in s.valid_rows() {
            for c in 0..STATE_DIM {
                out[r][c] = (s.rows[r][c] - self.offset[c]) / self.scale[c];
            }
        }
        out
    }

    pub fn denormalize(&self, z: &[[f64; STATE_DIM]; ROWS], mask: [bool; ROWS - 1]) -> StateMatrix {
        let mut s = StateMatrix { mask, ..StateMatrix::default() };
        for r in s.valid_rows().collect::<Vec<_>>() {
            for c in 0..STATE_DIM {
                s.rows[r][c] = z[r][c] * self.scale[c] + self.offset[c];
            }
        }
        s
    }
}

impl Default for Normalizer {
    /// Centred on the default airspace: positions and distance-to-go over
    /// +/-5 km, heading over +/-pi, speed over the envelope, command in quanta.
    fn default() -> Self {
        Self {
            offset: [3500.0, 3500.0, 0.0, 21.75, 5000.0, 0.0],
            scale: [3500.0, 3500.0, std::f64::consts::PI, 14.25, 5000.0, crate::sim::DELTA_V],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::MAX_INTRUDERS;
    use proptest::prelude::*;

    #[test]
    fn identity_passthrough() {
        let mut s = StateMatrix::ownship_only([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        s.rows[1] = [7.0; STATE_DIM];
        s.mask[0] = true;
        let z = Normalizer::identity().normalize(&s);
        assert_eq!(z, s.rows);
    }

    #[test]
    fn scale_and_zero_scale() {
        let mut scale = [1.0; STATE_DIM];
        scale[0] = 2.0;
        let n = Normalizer::new([0.0; STATE_DIM], scale).unwrap();
        let s = StateMatrix::ownship_only([10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(n.normalize(&s)[0][0], 5.0);
        scale[3] = 0.0;
        assert!(Normalizer::new([0.0; STATE_DIM], scale).is_err());
    }

    #[test]
    fn masked_rows_zeroed() {
        let mut s = StateMatrix::ownship_only([1.0; STATE_DIM]);
        s.rows[2] = [5.0; STATE_DIM];
        let z = Normalizer::default().normalize(&s);
        assert_eq!(z[2], [0.0; STATE_DIM]);
    }

    proptest! {
        #[test]
        fn round_trip(vals in prop::collection::vec(-1e4..1e4f64, ROWS * STATE_DIM), bits in 0u8..32) {
            let mut mask = [false; MAX_INTRUDERS];
            for (i, m) in mask.iter_mut().enumerate() { *m = bits >> i & 1 == 1; }
            let mut s = StateMatrix::from_flat(&vals, mask).unwrap();
            s.scrub_masked();
            let n = Normalizer::default();
            let back = n.denormalize(&n.normalize(&s), mask);
            for (a, b) in back.rows.iter().flatten().zip(s.rows.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
