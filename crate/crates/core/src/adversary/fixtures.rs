//! Value functions with known structure for certifying the oracle and the
//! remainder bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::oracle::ValueFunction;

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `w . x + b`.
#[derive(Clone, Debug)]
pub struct LinearValue {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearValue {
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self { weights: normals(n, rng), bias: rng.sample(StandardNormal) }
    }
}

impl ValueFunction for LinearValue {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// `1/2 x'Qx + b'x + c` with symmetric `Q`; the gradient is
/// `|Q|_2`-Lipschitz.
#[derive(Clone, Debug)]
pub struct QuadraticValue {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl QuadraticValue {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Self {
        let q = (&q + q.transpose()) * 0.5;
        Self { q, b, c }
    }

    /// `scale/2 * |x|^2`.
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        Self::new(DMatrix::identity(n, n) * scale, DVector::zeros(n), 0.0)
    }

    /// Symmetrised Gaussian `Q` (generally indefinite) and Gaussian `b`, `c`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let a = DMatrix::from_vec(n, n, normals(n * n, rng));
        Self::new(a, DVector::from_vec(normals(n, rng)), rng.sample(StandardNormal))
    }

    /// Spectral norm of `Q`.
    pub fn lipschitz(&self) -> f64 {
        SymmetricEigen::new(self.q.clone()).eigenvalues.iter().fold(0.0, |m: f64, e| m.max(e.abs()))
    }
}

impl ValueFunction for QuadraticValue {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q * &x)) + self.b.dot(&x) + self.c
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.q * x + &self.b).iter().copied().collect()
    }
}

/// One hidden tanh layer: `w2 . tanh(W1 x + b1) + b2`.
#[derive(Clone, Debug)]
pub struct TanhMlp {
    pub inputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl TanhMlp {
    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let s = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            w1: normals(inputs * hidden, rng).into_iter().map(|v| v * s).collect(),
            b1: normals(hidden, rng),
            w2: normals(hidden, rng).into_iter().map(|v| v / (hidden as f64).sqrt()).collect(),
            b2: rng.sample(StandardNormal),
        }
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.b1
            .iter()
            .enumerate()
            .map(|(h, b)| (b + self.w1[h * self.inputs..(h + 1) * self.inputs].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh())
            .collect()
    }
}

impl ValueFunction for TanhMlp {
    fn dim(&self) -> usize {
        self.inputs
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.hidden(x).iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.inputs];
        for (h, a) in self.hidden(x).iter().enumerate() {
            let d = self.w2[h] * (1.0 - a * a);
            for (gi, w) in g.iter_mut().zip(&self.w1[h * self.inputs..(h + 1) * self.inputs]) {
                *gi += d * w;
            }
        }
        g
    }
}
