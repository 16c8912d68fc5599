use rand::Rng;

use super::state::{col, StateMatrix, ROWS, STATE_DIM};
use crate::error::{Error, Result};
use crate::sim::wrap_angle;

/// Element-wise half-widths of the uncertainty box around the true state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionBounds {
    pub kappa: [[f64; STATE_DIM]; ROWS],
}

impl CorruptionBounds {
    /// Urban GNSS magnitudes: 60 m position, 5 deg heading, 2 m/s speed,
    /// 60 m distance-to-go; the previous command is known exactly.
    pub const DEFAULT_COLUMNS: [f64; STATE_DIM] = [60.0, 60.0, 5.0 * std::f64::consts::PI / 180.0, 2.0, 60.0, 0.0];

    /// Same bounds on every row.
    pub fn from_columns(cols: [f64; STATE_DIM]) -> Result<Self> {
        Self::new([cols; ROWS])
    }

    pub fn new(kappa: [[f64; STATE_DIM]; ROWS]) -> Result<Self> {
        if kappa.iter().flatten().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::InvalidArgument("corruption bounds must be finite and non-negative".into()));
        }
        Ok(Self { kappa })
    }

    pub fn zero() -> Self {
        Self { kappa: [[0.0; STATE_DIM]; ROWS] }
    }

    /// Squared Euclidean norm over the rows that are valid in `s`.
    pub fn norm_sq_on(&self, s: &StateMatrix) -> f64 {
        s.valid_rows().flat_map(|r| self.kappa[r].iter()).map(|k| k * k).sum()
    }

    /// Scale every bound by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut k = self.kappa;
        k.iter_mut().flatten().for_each(|v| *v *= factor);
        Self { kappa: k }
    }
}

impl Default for CorruptionBounds {
    fn default() -> Self {
        Self { kappa: [Self::DEFAULT_COLUMNS; ROWS] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxViolation {
    pub row: usize,
    pub col: usize,
    pub excess: f64,
}

/// Signed difference `a - b` for column `c`, wrapping headings.
#[inline]
pub(crate) fn column_diff(c: usize, a: f64, b: f64) -> f64 {
    if c == col::HEADING {
        wrap_angle(a - b)
    } else {
        a - b
    }
}

/// Check `|candidate - center| <= kappa` on every valid row of `center`.
/// A few ulps of slack absorb the rounding of `center -/+ kappa` itself.
pub fn in_box(candidate: &StateMatrix, center: &StateMatrix, kappa: &CorruptionBounds) -> Result<(), BoxViolation> {
    for r in center.valid_rows() {
        for c in 0..STATE_DIM {
            let (a, b, k) = (candidate.rows[r][c], center.rows[r][c], kappa.kappa[r][c]);
            let d = column_diff(c, a, b).abs();
            let slack = 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0);
            if !(d <= k + slack) {
                return Err(BoxViolation { row: r, col: c, excess: d - k });
            }
        }
    }
    Ok(())
}

/// Clamp `candidate` into the box around `center`. Masked rows pass through.
pub fn project_to_box(candidate: &StateMatrix, center: &StateMatrix, kappa: &CorruptionBounds) -> StateMatrix {
    let mut out = *candidate;
    out.mask = center.mask;
    for r in center.valid_rows() {
        for c in 0..STATE_DIM {
            let (s, k) = (center.rows[r][c], kappa.kappa[r][c]);
            out.rows[r][c] = if c == col::HEADING {
                let d = wrap_angle(candidate.rows[r][c] - s);
                if d.abs() <= k {
                    wrap_angle(candidate.rows[r][c])
                } else {
                    wrap_angle(s + d.clamp(-k, k))
                }
            } else {
                candidate.rows[r][c].clamp(s - k, s + k)
            };
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationSample {
    pub observed: StateMatrix,
    pub corrupted: bool,
    pub true_state: StateMatrix,
}

/// R-contamination kernel: the true state with probability `1 - rate`,
/// otherwise the supplied adversarial state. Exactly one uniform is drawn per
/// call regardless of `rate`, so runs at different rates stay in lock-step.
///
/// `rate = 1` is accepted so evaluation grids can include the always-corrupt
/// endpoint.
pub fn sample_observation<R: Rng + ?Sized>(
    true_next: &StateMatrix,
    rate: f64,
    adversarial: &StateMatrix,
    kappa: &CorruptionBounds,
    rng: &mut R,
) -> Result<ObservationSample> {
    if let Err(v) = in_box(adversarial, true_next, kappa) {
        return Err(Error::OutsideBox { row: v.row, col: v.col });
    }
    sample_observation_with(true_next, rate, kappa, rng, |_| Ok(*adversarial))
}

/// As [`sample_observation`], but the adversarial state is only built when
/// the draw selects it.
pub fn sample_observation_with<R, F>(
    true_next: &StateMatrix,
    rate: f64,
    kappa: &CorruptionBounds,
    rng: &mut R,
    adversary: F,
) -> Result<ObservationSample>
where
    R: Rng + ?Sized,
    F: FnOnce(&StateMatrix) -> Result<StateMatrix>,
{
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("corruption rate must lie in [0, 1], got {rate}")));
    }
    let corrupted = rng.random::<f64>() < rate;
    let observed = if corrupted {
        let xi = adversary(true_next)?;
        if let Err(v) = in_box(&xi, true_next, kappa) {
            return Err(Error::OutsideBox { row: v.row, col: v.col });
        }
        xi
    } else {
        *true_next
    };
    Ok(ObservationSample { observed, corrupted, true_state: *true_next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::MAX_INTRUDERS;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn sample_state() -> StateMatrix {
        let mut s = StateMatrix::ownship_only([1000.0, 2000.0, 0.5, 20.0, 6000.0, 2.5722]);
        s.rows[1] = [1200.0, 2100.0, 1.5, 15.0, 5000.0, 0.0];
        s.mask[0] = true;
        s
    }

    fn offset(s: &StateMatrix, k: &CorruptionBounds, f: f64) -> StateMatrix {
        let mut out = *s;
        for r in s.valid_rows() {
            for c in 0..STATE_DIM {
                out.rows[r][c] += f * k.kappa[r][c];
            }
        }
        out
    }

    #[test]
    fn projection_cases() {
        let (s, k) = (sample_state(), CorruptionBounds::default());
        assert_eq!(project_to_box(&s, &s, &k), s);
        assert_eq!(project_to_box(&offset(&s, &k, 2.0), &s, &k), offset(&s, &k, 1.0));
        let inside = offset(&s, &k, -0.5);
        assert_eq!(project_to_box(&inside, &s, &k), inside);
    }

    #[test]
    fn projection_passes_masked_rows() {
        let (s, k) = (sample_state(), CorruptionBounds::default());
        let mut cand = offset(&s, &k, 3.0);
        cand.rows[4] = [9e9; STATE_DIM];
        let p = project_to_box(&cand, &s, &k);
        assert_eq!(p.rows[4], [9e9; STATE_DIM]);
        assert!(in_box(&p, &s, &k).is_ok());
    }

    #[test]
    fn heading_box_wraps() {
        let mut s = StateMatrix::ownship_only([0.0, 0.0, 3.1, 20.0, 100.0, 0.0]);
        s.mask = [false; MAX_INTRUDERS];
        let k = CorruptionBounds::default();
        let mut c = s;
        c.rows[0][col::HEADING] = wrap_angle(3.1 + 0.05);
        assert!(c.rows[0][col::HEADING] < 0.0);
        assert!(in_box(&c, &s, &k).is_ok());
        c.rows[0][col::HEADING] = wrap_angle(3.1 + 0.2);
        let p = project_to_box(&c, &s, &k);
        assert!((column_diff(col::HEADING, p.rows[0][2], 3.1) - k.kappa[0][2]).abs() < 1e-12);
    }

    #[test]
    fn rejects_adversary_outside_box() {
        let (s, k) = (sample_state(), CorruptionBounds::default());
        let bad = offset(&s, &k, 1.5);
        let mut rng = stream(&[1]);
        assert!(matches!(
            sample_observation(&s, 0.5, &bad, &k, &mut rng),
            Err(Error::OutsideBox { .. })
        ));
        assert!(sample_observation(&s, -0.1, &s, &k, &mut rng).is_err());
    }

    #[test]
    fn zero_rate_is_always_clean() {
        let (s, k) = (sample_state(), CorruptionBounds::default());
        let adv = offset(&s, &k, -1.0);
        let mut rng = stream(&[2]);
        for _ in 0..10_000 {
            let o = sample_observation(&s, 0.0, &adv, &k, &mut rng).unwrap();
            assert!(!o.corrupted);
            assert_eq!(o.observed, s);
        }
    }

    #[test]
    fn corrupted_fraction_within_binomial_interval() {
        let (s, k) = (sample_state(), CorruptionBounds::default());
        let adv = offset(&s, &k, 1.0);
        let mut rng = stream(&[3]);
        let n = 100_000usize;
        for rate in [0.05, 0.35, 0.5, 0.95] {
            let mut hits = 0usize;
            for _ in 0..n {
                let o = sample_observation(&s, rate, &adv, &k, &mut rng).unwrap();
                if o.corrupted {
                    assert_eq!(o.observed, adv);
                    hits += 1;
                } else {
                    assert_eq!(o.observed, s);
                }
            }
            let sigma = (rate * (1.0 - rate) / n as f64).sqrt();
            let frac = hits as f64 / n as f64;
            assert!((frac - rate).abs() <= 3.0 * sigma, "rate {rate}: {frac}");
        }
    }

    proptest! {
        #[test]
        fn projection_lands_in_box(
            vals in prop::collection::vec(-1e4..1e4f64, ROWS * STATE_DIM),
            scale in 0.0..3.0f64,
        ) {
            let s = sample_state();
            let k = CorruptionBounds::default().scaled(scale);
            let cand = StateMatrix::from_flat(&vals, s.mask).unwrap();
            let p = project_to_box(&cand, &s, &k);
            prop_assert!(in_box(&p, &s, &k).is_ok());
            // idempotent
            prop_assert_eq!(project_to_box(&p, &s, &k), p);
        }
    }
}
