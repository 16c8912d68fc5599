//! Poisson arrivals with a minimum headway.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Spawn times in `[0, horizon)` for one route.
///
/// Inter-arrival gaps are exponential with the given rate; a gap shorter than
/// `min_headway` is stretched to exactly `min_headway`. The first arrival is
/// measured from time zero under the same rule.
pub fn spawn_traffic<R: Rng + ?Sized>(
    rng: &mut R,
    rate: f64,
    min_headway: f64,
    horizon: f64,
) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("arrival rate must be positive, got {rate}")));
    }
    if !(min_headway >= 0.0) {
        return Err(Error::InvalidArgument("minimum headway must be non-negative".into()));
    }
    let exp = Exp::new(rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng).max(min_headway);
        if t >= horizon {
            break;
        }
        times.push(t);
    }
    Ok(times)
}

/// Mean of `max(X, h)` for `X ~ Exp(rate)`: `h + exp(-rate h) / rate`.
pub fn censored_mean_gap(rate: f64, min_headway: f64) -> f64 {
    min_headway + (-rate * min_headway).exp() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn headway_is_respected() {
        let mut rng = stream(&[11]);
        let t = spawn_traffic(&mut rng, 1.0 / 20.0, 30.0, 3.0e6).unwrap();
        assert!(t.len() > 10_000);
        // exact up to the rounding of the running sum
        assert!(t.windows(2).all(|w| w[1] - w[0] >= 30.0 - 1e-9 * w[1]));
        assert!(t[0] >= 30.0);
    }

    #[test]
    fn vanishing_rate_spawns_nothing() {
        let mut rng = stream(&[12]);
        for _ in 0..100 {
            assert!(spawn_traffic(&mut rng, 1e-12, 30.0, 3000.0).unwrap().is_empty());
        }
    }

    #[test]
    fn mean_gap_matches_censored_exponential() {
        // Monte Carlo over 1e5 arrivals against E[max(X, h)].
        let mut rng = stream(&[13]);
        for rate in [1.0 / 60.0, 1.0 / 10.0] {
            let n = 100_000usize;
            let times = spawn_traffic(&mut rng, rate, 30.0, 2.0e7).unwrap();
            assert!(times.len() > n);
            let mean = times[n - 1] / n as f64;
            let expect = censored_mean_gap(rate, 30.0).max(1.0 / rate);
            assert!((mean - expect).abs() / expect < 0.02, "rate {rate}: {mean} vs {expect}");
        }
    }

    #[test]
    fn rejects_bad_rate() {
        let mut rng = stream(&[14]);
        assert!(spawn_traffic(&mut rng, 0.0, 30.0, 10.0).is_err());
        assert!(spawn_traffic(&mut rng, -1.0, 30.0, 10.0).is_err());
    }
}
