use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::dist::ActionDistribution;
use super::layout::Layout;
use crate::error::{Error, Result};
use crate::observation::{col, Normalizer, StateMatrix, MAX_INTRUDERS, ROWS, STATE_DIM};

pub const NUM_ACTIONS: usize = 3;
/// Normalised intruder row plus its position relative to the ownship.
pub const INTRUDER_FEATURES: usize = STATE_DIM + 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    /// Encoder width.
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Hidden width of the policy and value heads.
    pub head_hidden: usize,
    pub leaky_slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: 64, heads: 4, head_dim: 16, head_hidden: 64, leaky_slope: 0.01 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.head_dim == 0 || self.head_hidden == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config("leaky slope must be non-negative".into()));
        }
        Ok(())
    }

    fn attn(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Physical state matrix to network inputs: per-column normalisation of
/// every row, plus each intruder's offset from the ownship divided by
/// `rel_scale`. Linear, so gradients map back exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Featurizer {
    pub norm: Normalizer,
    pub rel_scale: f64,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self { norm: Normalizer::default(), rel_scale: 500.0 }
    }
}

impl Featurizer {
    pub fn validate(&self) -> Result<()> {
        Normalizer::new(self.norm.offset, self.norm.scale)?;
        if !(self.rel_scale.is_finite() && self.rel_scale > 0.0) {
            return Err(Error::Config("relative-position scale must be positive".into()));
        }
        Ok(())
    }

    fn apply(&self, s: &StateMatrix, own: &mut [f64; STATE_DIM], intr: &mut [[f64; INTRUDER_FEATURES]; MAX_INTRUDERS]) {
        let z = self.norm.normalize(s);
        *own = z[0];
        for j in 0..MAX_INTRUDERS {
            let f = &mut intr[j];
            if s.mask[j] {
                f[..STATE_DIM].copy_from_slice(&z[j + 1]);
                f[STATE_DIM] = (s.rows[j + 1][col::X] - s.rows[0][col::X]) / self.rel_scale;
                f[STATE_DIM + 1] = (s.rows[j + 1][col::Y] - s.rows[0][col::Y]) / self.rel_scale;
            } else {
                *f = [0.0; INTRUDER_FEATURES];
            }
        }
    }

    /// Pull feature-space gradients back to the physical matrix.
    fn pullback(
        &self,
        mask: &[bool; MAX_INTRUDERS],
        d_own: &[f64],
        d_intr: &[[f64; INTRUDER_FEATURES]; MAX_INTRUDERS],
    ) -> [[f64; STATE_DIM]; ROWS] {
        let mut g = [[0.0; STATE_DIM]; ROWS];
        for c in 0..STATE_DIM {
            g[0][c] = d_own[c] / self.norm.scale[c];
        }
        for j in 0..MAX_INTRUDERS {
            if !mask[j] {
                continue;
            }
            let d = &d_intr[j];
            for c in 0..STATE_DIM {
                g[j + 1][c] = d[c] / self.norm.scale[c];
            }
            let (dx, dy) = (d[STATE_DIM] / self.rel_scale, d[STATE_DIM + 1] / self.rel_scale);
            g[j + 1][col::X] += dx;
            g[j + 1][col::Y] += dy;
            g[0][col::X] -= dx;
            g[0][col::Y] -= dy;
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Forward {
    pub logits: [f64; NUM_ACTIONS],
    pub value: f64,
}

impl Forward {
    pub fn dist(&self) -> ActionDistribution {
        ActionDistribution::from_logits(&self.logits)
    }
}

/// Activations recorded by [`Network::forward`] for the reverse pass.
/// Allocate once per network shape and reuse.
#[derive(Clone, Debug)]
pub struct Tape {
    mask: [bool; MAX_INTRUDERS],
    own_in: [f64; STATE_DIM],
    int_in: [[f64; INTRUDER_FEATURES]; MAX_INTRUDERS],
    own_h1: Vec<f64>,
    own_a1: Vec<f64>,
    own_h2: Vec<f64>,
    own_e: Vec<f64>,
    int_h1: Vec<f64>,
    int_a1: Vec<f64>,
    int_h2: Vec<f64>,
    int_e: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    alpha: Vec<f64>,
    cat: Vec<f64>,
    pol_h: Vec<f64>,
    pol_a: Vec<f64>,
    val_h: Vec<f64>,
    val_a: Vec<f64>,
    out: Forward,
    // scratch for the reverse pass
    d_cat: Vec<f64>,
    d_q: Vec<f64>,
    d_e: Vec<f64>,
    d_h: Vec<f64>,
    d_h2: Vec<f64>,
}

impl Tape {
    pub fn new(cfg: &NetConfig) -> Self {
        let (h, a, f) = (cfg.hidden, cfg.attn(), cfg.head_hidden);
        let m = MAX_INTRUDERS;
        let z = |n: usize| vec![0.0; n];
        Self {
            mask: [false; MAX_INTRUDERS],
            own_in: [0.0; STATE_DIM],
            int_in: [[0.0; INTRUDER_FEATURES]; MAX_INTRUDERS],
            own_h1: z(h),
            own_a1: z(h),
            own_h2: z(h),
            own_e: z(h),
            int_h1: z(m * h),
            int_a1: z(m * h),
            int_h2: z(m * h),
            int_e: z(m * h),
            q: z(a),
            k: z(m * a),
            v: z(m * a),
            alpha: z(cfg.heads * m),
            cat: z(h + a),
            pol_h: z(f),
            pol_a: z(f),
            val_h: z(f),
            val_a: z(f),
            out: Forward { logits: [0.0; NUM_ACTIONS], value: 0.0 },
            d_cat: z(h + a),
            d_q: z(a),
            d_e: z(m * h),
            d_h: z(h.max(f)),
            d_h2: z(h.max(f)),
        }
    }

    pub fn output(&self) -> Forward {
        self.out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `out = W x (+ b)` with `W` row-major `[out.len(), x.len()]`.
#[inline]
fn affine(w: &[f64], b: Option<&[f64]>, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, (o, row)) in out.iter_mut().zip(w.chunks_exact(n)).enumerate() {
        *o = dot(row, x) + b.map_or(0.0, |b| b[i]);
    }
}

/// `dx += W^T dy`.
#[inline]
fn affine_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let n = dx.len();
    for (row, &g) in w.chunks_exact(n).zip(dy) {
        if g != 0.0 {
            for (d, wv) in dx.iter_mut().zip(row) {
                *d += g * wv;
            }
        }
    }
}

/// `gW += dy x^T`.
#[inline]
fn outer_acc(gw: &mut [f64], dy: &[f64], x: &[f64]) {
    let n = x.len();
    for (row, &g) in gw.chunks_exact_mut(n).zip(dy) {
        if g != 0.0 {
            for (d, xv) in row.iter_mut().zip(x) {
                *d += g * xv;
            }
        }
    }
}

#[inline]
fn leaky(pre: &[f64], post: &mut [f64], slope: f64) {
    for (p, &x) in post.iter_mut().zip(pre) {
        *p = if x > 0.0 { x } else { slope * x };
    }
}

#[inline]
fn leaky_back(pre: &[f64], d: &mut [f64], slope: f64) {
    for (g, &x) in d.iter_mut().zip(pre) {
        if x <= 0.0 {
            *g *= slope;
        }
    }
}

/// Shared actor-critic: parameters plus the fixed input featurisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: NetConfig,
    features: Featurizer,
    layout: Layout,
    params: Vec<f64>,
}

impl Network {
    /// Fresh network with He-style initialisation; the policy output layer
    /// starts near zero so the initial policy is close to uniform.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, features: Featurizer, rng: &mut R) -> Result<Self> {
        config.validate()?;
        features.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        for b in &layout.blocks {
            if b.shape.len() != 2 {
                continue; // biases start at zero
            }
            let fan_in = b.shape[1] as f64;
            let std = match b.name {
                "attention.wq" | "attention.wk" | "attention.wv" => (1.0 / fan_in).sqrt(),
                "policy.w2" => 0.01 * (1.0 / fan_in).sqrt(),
                "value.w2" => (1.0 / fan_in).sqrt(),
                _ => (2.0 / fan_in).sqrt(),
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[b.range()] {
                *p = normal.sample(rng);
            }
        }
        Ok(Self { config, features, layout, params })
    }

    pub fn from_params(config: NetConfig, features: Featurizer, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        features.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { config, features, layout, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn features(&self) -> &Featurizer {
        &self.features
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn tape(&self) -> Tape {
        Tape::new(&self.config)
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn evaluate(&self, s: &StateMatrix) -> Result<Forward> {
        let mut tape = self.tape();
        self.forward(s, &mut tape)
    }

    pub fn forward(&self, s: &StateMatrix, t: &mut Tape) -> Result<Forward> {
        let cfg = &self.config;
        let l = &self.layout;
        let p = &self.params[..];
        let (h, a, f, dh) = (cfg.hidden, cfg.attn(), cfg.head_hidden, cfg.head_dim);
        let slope = cfg.leaky_slope;
        let w = |off: usize, len: usize| &p[off..off + len];

        t.mask = s.mask;
        self.features.apply(s, &mut t.own_in, &mut t.int_in);

        affine(w(l.own_w1, h * STATE_DIM), Some(w(l.own_b1, h)), &t.own_in, &mut t.own_h1);
        leaky(&t.own_h1, &mut t.own_a1, slope);
        affine(w(l.own_w2, h * h), Some(w(l.own_b2, h)), &t.own_a1, &mut t.own_h2);
        leaky(&t.own_h2, &mut t.own_e, slope);

        affine(w(l.wq, a * h), None, &t.own_e, &mut t.q);
        let mut any = false;
        for j in 0..MAX_INTRUDERS {
            if !s.mask[j] {
                continue;
            }
            any = true;
            let r = j * h..(j + 1) * h;
            affine(w(l.int_w1, h * INTRUDER_FEATURES), Some(w(l.int_b1, h)), &t.int_in[j], &mut t.int_h1[r.clone()]);
            leaky(&t.int_h1[r.clone()], &mut t.int_a1[r.clone()], slope);
            affine(w(l.int_w2, h * h), Some(w(l.int_b2, h)), &t.int_a1[r.clone()], &mut t.int_h2[r.clone()]);
            leaky(&t.int_h2[r.clone()], &mut t.int_e[r.clone()], slope);
            let ra = j * a..(j + 1) * a;
            affine(w(l.wk, a * h), None, &t.int_e[r.clone()], &mut t.k[ra.clone()]);
            affine(w(l.wv, a * h), None, &t.int_e[r], &mut t.v[ra]);
        }

        t.cat[..h].copy_from_slice(&t.own_e);
        let ctx = &mut t.cat[h..];
        ctx.fill(0.0);
        if any {
            let scale = 1.0 / (dh as f64).sqrt();
            for head in 0..cfg.heads {
                let hs = head * dh..(head + 1) * dh;
                let qh = &t.q[hs.clone()];
                let alpha = &mut t.alpha[head * MAX_INTRUDERS..(head + 1) * MAX_INTRUDERS];
                let mut max = f64::NEG_INFINITY;
                for j in 0..MAX_INTRUDERS {
                    if s.mask[j] {
                        let kj = &t.k[j * a + head * dh..j * a + (head + 1) * dh];
                        alpha[j] = dot(qh, kj) * scale;
                        max = max.max(alpha[j]);
                    } else {
                        alpha[j] = 0.0;
                    }
                }
                let mut z = 0.0;
                for j in 0..MAX_INTRUDERS {
                    if s.mask[j] {
                        alpha[j] = (alpha[j] - max).exp();
                        z += alpha[j];
                    }
                }
                for j in 0..MAX_INTRUDERS {
                    if s.mask[j] {
                        alpha[j] /= z;
                        let vj = &t.v[j * a + head * dh..j * a + (head + 1) * dh];
                        for (c, v) in ctx[hs.clone()].iter_mut().zip(vj) {
                            *c += alpha[j] * v;
                        }
                    }
                }
            }
        }

        affine(w(l.pol_w1, f * (h + a)), Some(w(l.pol_b1, f)), &t.cat, &mut t.pol_h);
        leaky(&t.pol_h, &mut t.pol_a, slope);
        let mut logits = [0.0; NUM_ACTIONS];
        affine(w(l.pol_w2, NUM_ACTIONS * f), Some(w(l.pol_b2, NUM_ACTIONS)), &t.pol_a, &mut logits);

        affine(w(l.val_w1, f * (h + a)), Some(w(l.val_b1, f)), &t.cat, &mut t.val_h);
        leaky(&t.val_h, &mut t.val_a, slope);
        let value = dot(w(l.val_w2, f), &t.val_a) + p[l.val_b2];

        if !value.is_finite() || logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        t.out = Forward { logits, value };
        Ok(t.out)
    }

    /// Reverse pass for the scalar `dlogits . logits + dvalue * value`.
    ///
    /// Parameter gradients are added into `grads` when given. Returns the
    /// gradient with respect to the physical state matrix; masked rows are
    /// exactly zero.
    pub fn backward(
        &self,
        t: &mut Tape,
        dlogits: &[f64; NUM_ACTIONS],
        dvalue: f64,
        mut grads: Option<&mut [f64]>,
    ) -> [[f64; STATE_DIM]; ROWS] {
        let cfg = &self.config;
        let l = &self.layout;
        let p = &self.params[..];
        let (h, a, f, dh) = (cfg.hidden, cfg.attn(), cfg.head_hidden, cfg.head_dim);
        let slope = cfg.leaky_slope;
        let cat_n = h + a;
        let w = |off: usize, len: usize| &p[off..off + len];
        macro_rules! g {
            ($off:expr, $len:expr) => {
                grads.as_deref_mut().map(|g| &mut g[$off..$off + $len])
            };
        }

        t.d_cat.fill(0.0);

        // value head
        let dv = &mut t.d_h[..f];
        for (d, wv) in dv.iter_mut().zip(w(l.val_w2, f)) {
            *d = dvalue * wv;
        }
        if let Some(gw) = g!(l.val_w2, f) {
            outer_acc(gw, &[dvalue], &t.val_a);
        }
        if let Some(gb) = g!(l.val_b2, 1) {
            gb[0] += dvalue;
        }
        leaky_back(&t.val_h, dv, slope);
        if let Some(gw) = g!(l.val_w1, f * cat_n) {
            outer_acc(gw, dv, &t.cat);
        }
        if let Some(gb) = g!(l.val_b1, f) {
            gb.iter_mut().zip(dv.iter()).for_each(|(g, d)| *g += d);
        }
        affine_t_acc(w(l.val_w1, f * cat_n), dv, &mut t.d_cat);

        // policy head
        let dp = &mut t.d_h[..f];
        dp.fill(0.0);
        affine_t_acc(w(l.pol_w2, NUM_ACTIONS * f), dlogits, dp);
        if let Some(gw) = g!(l.pol_w2, NUM_ACTIONS * f) {
            outer_acc(gw, dlogits, &t.pol_a);
        }
        if let Some(gb) = g!(l.pol_b2, NUM_ACTIONS) {
            gb.iter_mut().zip(dlogits).for_each(|(g, d)| *g += d);
        }
        leaky_back(&t.pol_h, dp, slope);
        if let Some(gw) = g!(l.pol_w1, f * cat_n) {
            outer_acc(gw, dp, &t.cat);
        }
        if let Some(gb) = g!(l.pol_b1, f) {
            gb.iter_mut().zip(dp.iter()).for_each(|(g, d)| *g += d);
        }
        affine_t_acc(w(l.pol_w1, f * cat_n), dp, &mut t.d_cat);

        // attention
        let mut d_int = [[0.0; INTRUDER_FEATURES]; MAX_INTRUDERS];
        t.d_q.fill(0.0);
        t.d_e.fill(0.0);
        let any = t.mask.iter().any(|m| *m);
        if any {
            let scale = 1.0 / (dh as f64).sqrt();
            let mut dk = vec![0.0; MAX_INTRUDERS * a];
            let mut dvv = vec![0.0; MAX_INTRUDERS * a];
            for head in 0..cfg.heads {
                let hs = head * dh..(head + 1) * dh;
                let dctx = &t.d_cat[h + head * dh..h + (head + 1) * dh];
                let alpha = &t.alpha[head * MAX_INTRUDERS..(head + 1) * MAX_INTRUDERS];
                let mut dalpha = [0.0; MAX_INTRUDERS];
                let mut mean = 0.0;
                for j in 0..MAX_INTRUDERS {
                    if t.mask[j] {
                        let base = j * a + head * dh;
                        dalpha[j] = dot(dctx, &t.v[base..base + dh]);
                        mean += alpha[j] * dalpha[j];
                        for (d, c) in dvv[base..base + dh].iter_mut().zip(dctx) {
                            *d += alpha[j] * c;
                        }
                    }
                }
                for j in 0..MAX_INTRUDERS {
                    if t.mask[j] {
                        let ds = alpha[j] * (dalpha[j] - mean) * scale;
                        let base = j * a + head * dh;
                        for (d, kv) in t.d_q[hs.clone()].iter_mut().zip(&t.k[base..base + dh]) {
                            *d += ds * kv;
                        }
                        for (d, qv) in dk[base..base + dh].iter_mut().zip(&t.q[hs.clone()]) {
                            *d += ds * qv;
                        }
                    }
                }
            }
            for j in 0..MAX_INTRUDERS {
                if !t.mask[j] {
                    continue;
                }
                let ra = j * a..(j + 1) * a;
                let r = j * h..(j + 1) * h;
                if let Some(gw) = g!(l.wk, a * h) {
                    outer_acc(gw, &dk[ra.clone()], &t.int_e[r.clone()]);
                }
                if let Some(gw) = g!(l.wv, a * h) {
                    outer_acc(gw, &dvv[ra.clone()], &t.int_e[r.clone()]);
                }
                let de = &mut t.d_e[r.clone()];
                affine_t_acc(w(l.wk, a * h), &dk[ra.clone()], de);
                affine_t_acc(w(l.wv, a * h), &dvv[ra], de);

                // intruder encoder
                leaky_back(&t.int_h2[r.clone()], de, slope);
                if let Some(gw) = g!(l.int_w2, h * h) {
                    outer_acc(gw, de, &t.int_a1[r.clone()]);
                }
                if let Some(gb) = g!(l.int_b2, h) {
                    gb.iter_mut().zip(de.iter()).for_each(|(g, d)| *g += d);
                }
                let d1 = &mut t.d_h2[..h];
                d1.fill(0.0);
                affine_t_acc(w(l.int_w2, h * h), de, d1);
                leaky_back(&t.int_h1[r], d1, slope);
                if let Some(gw) = g!(l.int_w1, h * INTRUDER_FEATURES) {
                    outer_acc(gw, d1, &t.int_in[j]);
                }
                if let Some(gb) = g!(l.int_b1, h) {
                    gb.iter_mut().zip(d1.iter()).for_each(|(g, d)| *g += d);
                }
                affine_t_acc(w(l.int_w1, h * INTRUDER_FEATURES), d1, &mut d_int[j]);
            }
            if let Some(gw) = g!(l.wq, a * h) {
                outer_acc(gw, &t.d_q, &t.own_e);
            }
        }

        // ownship encoder
        let de = &mut t.d_h[..h];
        de.copy_from_slice(&t.d_cat[..h]);
        if any {
            affine_t_acc(w(l.wq, a * h), &t.d_q, de);
        }
        leaky_back(&t.own_h2, de, slope);
        if let Some(gw) = g!(l.own_w2, h * h) {
            outer_acc(gw, de, &t.own_a1);
        }
        if let Some(gb) = g!(l.own_b2, h) {
            gb.iter_mut().zip(de.iter()).for_each(|(g, d)| *g += d);
        }
        let d1 = &mut t.d_h2[..h];
        d1.fill(0.0);
        affine_t_acc(w(l.own_w2, h * h), de, d1);
        leaky_back(&t.own_h1, d1, slope);
        if let Some(gw) = g!(l.own_w1, h * STATE_DIM) {
            outer_acc(gw, d1, &t.own_in);
        }
        if let Some(gb) = g!(l.own_b1, h) {
            gb.iter_mut().zip(d1.iter()).for_each(|(g, d)| *g += d);
        }
        let mut d_own = [0.0; STATE_DIM];
        affine_t_acc(w(l.own_w1, h * STATE_DIM), d1, &mut d_own);

        self.features.pullback(&t.mask, &d_own, &d_int)
    }

    /// Value and its gradient with respect to the physical state matrix.
    pub fn input_gradient(&self, s: &StateMatrix) -> Result<(f64, [[f64; STATE_DIM]; ROWS])> {
        let mut tape = self.tape();
        self.input_gradient_with(s, &mut tape)
    }

    pub fn input_gradient_with(&self, s: &StateMatrix, tape: &mut Tape) -> Result<(f64, [[f64; STATE_DIM]; ROWS])> {
        let out = self.forward(s, tape)?;
        let g = self.backward(tape, &[0.0; NUM_ACTIONS], 1.0, None);
        if g.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input gradient"));
        }
        Ok((out.value, g))
    }
}
