use rand::Rng;
use serde::Serialize;

use super::sign0;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::observation::{CorruptionBounds, StateMatrix, MAX_INTRUDERS, ROWS, STATE_DIM};

/// A scalar function with an analytic gradient, over flat vectors.
pub trait ValueFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Axis-aligned box `|x - center| <= kappa`. Coordinates with `kappa = 0`
/// are frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub center: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl BoxDomain {
    pub fn new(center: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        if center.len() != kappa.len() {
            return Err(Error::Shape(format!("center has {} entries, kappa {}", center.len(), kappa.len())));
        }
        if kappa.iter().any(|k| !(k.is_finite() && *k >= 0.0)) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("box centre and radii must be finite, radii non-negative".into()));
        }
        Ok(Self { center, kappa })
    }

    /// Flattened state box; masked rows get zero radius. Headings are not
    /// wrapped here, the box lives in the unwrapped chart around `s`.
    pub fn from_state(s: &StateMatrix, kappa: &CorruptionBounds) -> Self {
        let mut k = vec![0.0; ROWS * STATE_DIM];
        for r in s.valid_rows() {
            k[r * STATE_DIM..(r + 1) * STATE_DIM].copy_from_slice(&kappa.kappa[r]);
        }
        Self { center: s.flatten().to_vec(), kappa: k }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.kappa[i] > 0.0).collect()
    }

    pub fn kappa_norm_sq(&self) -> f64 {
        self.kappa.iter().map(|k| k * k).sum()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.center[i] - self.kappa[i], self.center[i] + self.kappa[i]);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.kappa)
            .map(|(c, k)| if *k > 0.0 { c + k * rng.random_range(-1.0..=1.0) } else { *c })
            .collect()
    }
}

/// `center - kappa * sign(grad)`.
pub fn fo_point(domain: &BoxDomain, grad: &[f64]) -> Vec<f64> {
    domain.center.iter().zip(&domain.kappa).zip(grad).map(|((c, k), g)| c - k * sign0(*g)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub grid_per_dim: usize,
    /// Exhaustive grid up to this many active dimensions.
    pub grid_max_dims: usize,
    /// Corner enumeration up to this many active dimensions.
    pub corner_max_dims: usize,
    pub pgd_steps: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { grid_per_dim: 5, grid_max_dims: 8, corner_max_dims: 20, pgd_steps: 100 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluations: usize,
}

/// Odometer over `levels^k` combinations.
fn for_each_combination(k: usize, levels: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; k];
    loop {
        visit(&idx);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            idx[i] += 1;
            if idx[i] < levels {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Sampled minimum of `f` over the box: an exhaustive grid (which contains
/// every corner) for few active dimensions, all corners otherwise, followed
/// by projected gradient descent from the best point found. The returned
/// value is an upper bound on the true minimum.
pub fn brute_force_worst_case<F: ValueFunction + ?Sized>(
    f: &F,
    domain: &BoxDomain,
    opts: &OracleOptions,
) -> Result<WorstCase> {
    if f.dim() != domain.dim() {
        return Err(Error::Shape(format!("value function has dim {}, box {}", f.dim(), domain.dim())));
    }
    let active = domain.active();
    let k = active.len();
    let taus: Vec<f64> = if k <= opts.grid_max_dims {
        let n = opts.grid_per_dim.max(2);
        (0..n).map(|j| if j == 0 { -1.0 } else if j == n - 1 { 1.0 } else { -1.0 + 2.0 * j as f64 / (n - 1) as f64 }).collect()
    } else if k <= opts.corner_max_dims {
        vec![-1.0, 1.0]
    } else {
        return Err(Error::DimensionBudget { active: k, limit: opts.corner_max_dims });
    };

    let mut x = domain.center.clone();
    let mut best = WorstCase { value: f.value(&x), argmin: x.clone(), evaluations: 1 };
    if k == 0 {
        return Ok(best);
    }
    for_each_combination(k, taus.len(), |idx| {
        for (&i, &j) in active.iter().zip(idx) {
            x[i] = domain.center[i] + taus[j] * domain.kappa[i];
        }
        let v = f.value(&x);
        best.evaluations += 1;
        if v < best.value {
            best.value = v;
            best.argmin.copy_from_slice(&x);
        }
    });

    let mut x = best.argmin.clone();
    for _ in 0..opts.pgd_steps {
        let g = f.gradient(&x);
        let scale = active.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if !(scale > 0.0) {
            break;
        }
        for &i in &active {
            x[i] -= 0.1 * domain.kappa[i] * g[i] / scale;
        }
        domain.project(&mut x);
        let v = f.value(&x);
        best.evaluations += 1;
        if v < best.value {
            best.value = v;
            best.argmin.copy_from_slice(&x);
        }
    }
    Ok(best)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Largest observed `|grad f(x) - grad f(y)| / |x - y|` over sampled pairs in
/// the box. Half the pairs are independent, half are close neighbours so
/// local curvature is probed. A lower estimate of the true constant.
pub fn estimate_lipschitz_grad<F: ValueFunction + ?Sized, R: Rng + ?Sized>(
    f: &F,
    domain: &BoxDomain,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("Lipschitz estimate needs at least two samples".into()));
    }
    let mut best: f64 = 0.0;
    for i in 0..samples {
        let x = domain.sample(rng);
        let y = if i % 2 == 0 {
            domain.sample(rng)
        } else {
            let mut y: Vec<f64> = x
                .iter()
                .zip(&domain.kappa)
                .map(|(v, k)| v + 1e-2 * k * rng.random_range(-1.0..=1.0))
                .collect();
            domain.project(&mut y);
            y
        };
        let d = dist(&x, &y);
        if d == 0.0 {
            continue;
        }
        let ratio = dist(&f.gradient(&x), &f.gradient(&y)) / d;
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// One certification of the second-order remainder of the first-order
/// worst-case estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub trial: usize,
    pub oracle_min: f64,
    pub fo_estimate: f64,
    pub gap: f64,
    pub bound: f64,
    /// Gradient Lipschitz constant used for the bound (exact or sampled).
    pub lipschitz: f64,
    pub pass: bool,
}

pub const BOUND_SLACK: f64 = 1e-9;

/// Compare the oracle minimum with `V(S) - |kappa * grad V(S)|_1` against
/// `L/2 * |kappa|^2`.
pub fn remainder_bound_check<F: ValueFunction + ?Sized>(
    f: &F,
    domain: &BoxDomain,
    lipschitz: f64,
    opts: &OracleOptions,
) -> Result<BoundReport> {
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(Error::InvalidArgument(format!("Lipschitz constant must be finite and non-negative, got {lipschitz}")));
    }
    let v0 = f.value(&domain.center);
    let g = f.gradient(&domain.center);
    let drop: f64 = domain.kappa.iter().zip(&g).map(|(k, g)| k * g.abs()).sum();
    let fo_estimate = v0 - drop;
    let oracle = brute_force_worst_case(f, domain, opts)?;
    let gap = (oracle.value - fo_estimate).abs();
    let bound = 0.5 * lipschitz * domain.kappa_norm_sq();
    Ok(BoundReport {
        trial: 0,
        oracle_min: oracle.value,
        fo_estimate,
        gap,
        bound,
        lipschitz,
        pass: gap <= bound + BOUND_SLACK,
    })
}

/// Critic of a network viewed as a function of the flattened state.
pub struct NetworkValue<'a> {
    pub net: &'a Network,
    pub mask: [bool; MAX_INTRUDERS],
}

impl NetworkValue<'_> {
    fn state(&self, x: &[f64]) -> StateMatrix {
        StateMatrix::from_flat(x, self.mask).expect("flat state has the network input size")
    }
}

impl ValueFunction for NetworkValue<'_> {
    fn dim(&self) -> usize {
        ROWS * STATE_DIM
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.net.evaluate(&self.state(x)).map(|o| o.value).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.net.input_gradient(&self.state(x)) {
            Ok((_, g)) => g.iter().flatten().copied().collect(),
            Err(_) => vec![f64::NAN; self.dim()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{LinearValue, QuadraticValue};
    use super::*;
    use crate::rng::stream;

    #[test]
    fn linear_minimum_is_the_fo_corner() {
        let mut rng = stream(&[1]);
        for _ in 0..50 {
            let f = LinearValue::random(6, &mut rng);
            let d = BoxDomain::new(vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0], vec![0.3, 0.0, 1.0, 2.0, 0.1, 0.5]).unwrap();
            let wc = brute_force_worst_case(&f, &d, &OracleOptions::default()).unwrap();
            let fo = fo_point(&d, &f.gradient(&d.center));
            assert_eq!(wc.value, f.value(&fo));
        }
    }

    #[test]
    fn concave_quadratic_minimum_at_corner() {
        let n = 4;
        let f = QuadraticValue::scaled_identity(n, -2.0);
        let d = BoxDomain::new(vec![0.0; n], vec![1.0, 0.5, 2.0, 0.25]).unwrap();
        let wc = brute_force_worst_case(&f, &d, &OracleOptions::default()).unwrap();
        let expect = -d.kappa_norm_sq();
        assert!((wc.value - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_kappa_returns_centre_value() {
        let f = QuadraticValue::scaled_identity(3, 1.0);
        let d = BoxDomain::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
        let wc = brute_force_worst_case(&f, &d, &OracleOptions::default()).unwrap();
        assert_eq!(wc.value, 7.0);
        assert_eq!(wc.evaluations, 1);
    }

    #[test]
    fn corner_mode_and_budget() {
        let mut rng = stream(&[2]);
        let f = LinearValue::random(12, &mut rng);
        let d = BoxDomain::new(vec![0.0; 12], vec![1.0; 12]).unwrap();
        let wc = brute_force_worst_case(&f, &d, &OracleOptions::default()).unwrap();
        assert!(wc.evaluations >= 1 << 12);
        let expect = f.value(&d.center) - f.weights.iter().map(|w| w.abs()).sum::<f64>();
        assert!((wc.value - expect).abs() < 1e-12);
        let f = LinearValue::random(21, &mut rng);
        let d = BoxDomain::new(vec![0.0; 21], vec![1.0; 21]).unwrap();
        assert!(matches!(
            brute_force_worst_case(&f, &d, &OracleOptions::default()),
            Err(Error::DimensionBudget { active: 21, limit: 20 })
        ));
    }

    #[test]
    fn enlarging_kappa_never_raises_minimum() {
        let mut rng = stream(&[3]);
        for _ in 0..20 {
            let f = QuadraticValue::random(4, &mut rng);
            let small = BoxDomain::new(vec![0.2; 4], vec![0.5; 4]).unwrap();
            let big = BoxDomain::new(vec![0.2; 4], vec![1.0; 4]).unwrap();
            let o = OracleOptions::default();
            let (a, b) = (brute_force_worst_case(&f, &small, &o).unwrap(), brute_force_worst_case(&f, &big, &o).unwrap());
            assert!(b.value <= a.value + 1e-12);
            assert!(a.value <= f.value(&small.center));
        }
    }

    #[test]
    fn lipschitz_estimates() {
        let mut rng = stream(&[4]);
        let lin = LinearValue::random(5, &mut rng);
        let d = BoxDomain::new(vec![0.0; 5], vec![1.0; 5]).unwrap();
        assert_eq!(estimate_lipschitz_grad(&lin, &d, 100, &mut rng).unwrap(), 0.0);
        let q = QuadraticValue::random(5, &mut rng);
        let est = estimate_lipschitz_grad(&q, &d, 2000, &mut rng).unwrap();
        let exact = q.lipschitz();
        assert!(est >= 0.0 && est <= exact * (1.0 + 1e-9));
        assert!(est > 0.5 * exact);
        assert!(estimate_lipschitz_grad(&q, &d, 1, &mut rng).is_err());
    }

    #[test]
    fn tight_quadratic_remainder() {
        let n = 5;
        let f = QuadraticValue::scaled_identity(n, -2.0);
        let d = BoxDomain::new(vec![0.0; n], vec![1.0; n]).unwrap();
        let rep = remainder_bound_check(&f, &d, 2.0, &OracleOptions::default()).unwrap();
        assert_eq!(rep.fo_estimate, 0.0);
        assert_eq!(rep.oracle_min, -(n as f64));
        assert_eq!(rep.gap, rep.bound);
        assert!(rep.pass);
        let rep = remainder_bound_check(&f, &d, 1.0, &OracleOptions::default()).unwrap();
        assert!(!rep.pass);
    }
}
