use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{logistic, relu_step, softplus, Tape, TapeModel, Var};
use crate::error::{Error, Result};
use crate::nets::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// `SP_τ(z) = (1/τ) ln(1 + e^{τz})`.
    Softplus(f64),
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus(tau) => softplus(z, tau),
        }
    }

    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => relu_step(z),
            Activation::Softplus(tau) => logistic(z, tau),
        }
    }

    #[inline]
    pub fn second_deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Softplus(tau) => {
                let s = logistic(z, tau);
                tau * s * (1.0 - s)
            }
        }
    }

    /// `(σ(z), σ'(z), σ''(z))` with a single exponential.
    #[inline]
    pub fn triple(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Relu => (z.max(0.0), relu_step(z), 0.0),
            Activation::Softplus(tau) => {
                let t = tau * z;
                let e = (-t.abs()).exp();
                let sp = (t.max(0.0) + e.ln_1p()) / tau;
                let s = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (sp, s, tau * s * (1.0 - s))
            }
        }
    }

    fn record<'t>(self, z: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => z.relu(),
            Activation::Softplus(tau) => z.softplus(tau),
        }
    }
}

/// `φ(x) = c + (1/m) Σ_k a_k σ(ω_k·x + b_k)` on `Ω = [-1, 1]^d`.
///
/// Membership in the bounded class means `|c| ≤ 2B`, `|a_k| ≤ 16B`,
/// `|ω_k|₁ = 1` and `|b_k| ≤ 1`; [`TwoLayerNet::project`] enforces it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    pub c: f64,
    pub a: Vec<f64>,
    /// `m × d`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
    pub bound: f64,
    d: usize,
}

/// Uniform sample on the unit ℓ₁ sphere of `R^d`.
pub(crate) fn sample_l1_sphere<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
        if rng.random::<bool>() {
            *x = -*x;
        }
    }
    v
}

impl TwoLayerNet {
    /// Builds a net from explicit parameters. `w` is `m × d` row-major.
    pub fn from_parts(
        c: f64,
        a: Vec<f64>,
        w: Vec<f64>,
        b: Vec<f64>,
        activation: Activation,
        bound: f64,
    ) -> Result<Self> {
        let m = a.len();
        if m == 0 || b.len() != m || w.len() % m != 0 || w.is_empty() {
            return Err(Error::Domain(format!(
                "inconsistent shapes: a={}, b={}, w={}",
                a.len(),
                b.len(),
                w.len()
            )));
        }
        let d = w.len() / m;
        Ok(Self {
            c,
            a,
            w,
            b,
            activation,
            bound,
            d,
        })
    }

    /// Random member of the bounded class: `ω_k` uniform on the ℓ₁ sphere,
    /// `b_k ~ U[-1, 1]`, and `a_k, c ~ U[-0.1B, 0.1B]`.
    pub fn init(m: usize, d: usize, bound: f64, activation: Activation, seed: u64) -> Self {
        assert!(m >= 1 && d >= 1 && bound > 0.0, "init_two_layer needs m, d >= 1 and B > 0");
        let mut rng = crate::seeded_rng(seed);
        let mut w = Vec::with_capacity(m * d);
        for _ in 0..m {
            w.extend(sample_l1_sphere(&mut rng, d));
        }
        let b = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let a = (0..m).map(|_| rng.random_range(-0.1 * bound..=0.1 * bound)).collect();
        let c = rng.random_range(-0.1 * bound..=0.1 * bound);
        Self {
            c,
            a,
            w,
            b,
            activation,
            bound,
            d,
        }
    }

    /// Random member of the class with parameters spread over the whole box
    /// (`a_k ~ U[-16B, 16B]`, `c ~ U[-2B, 2B]`).
    pub fn sample_in_class(m: usize, d: usize, bound: f64, activation: Activation, seed: u64) -> Self {
        let mut net = Self::init(m, d, bound, activation, seed);
        let mut rng = crate::seeded_rng(crate::mix_seed(seed, 0x5eed));
        for a in &mut net.a {
            *a = rng.random_range(-16.0 * bound..=16.0 * bound);
        }
        net.c = rng.random_range(-2.0 * bound..=2.0 * bound);
        net
    }

    /// Parameter mask selecting `c` and the `a_k` (the outer layer).
    pub fn outer_mask(&self) -> Vec<bool> {
        let m = self.width();
        let mut mask = vec![false; 1 + m * (2 + self.d)];
        mask[..1 + m].iter_mut().for_each(|t| *t = true);
        mask
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.d..(k + 1) * self.d]
    }

    #[inline]
    fn pre(&self, k: usize, x: &[f64]) -> f64 {
        self.row(k).iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b[k]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Domain(format!("input has dimension {}, net expects {}", x.len(), self.d)));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    /// Unchecked evaluation.
    pub fn value(&self, x: &[f64]) -> f64 {
        let m = self.width();
        let mut s = 0.0;
        for k in 0..m {
            s += self.a[k] * self.activation.eval(self.pre(k, x));
        }
        self.c + s / m as f64
    }

    /// Value and input gradient.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.width();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut s = 0.0;
        for k in 0..m {
            let z = self.pre(k, x);
            s += self.a[k] * self.activation.eval(z);
            let t = self.a[k] * self.activation.deriv(z) / m as f64;
            for (g, w) in grad.iter_mut().zip(self.row(k)) {
                *g += t * w;
            }
        }
        self.c + s / m as f64
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let m = self.width();
        (0..m)
            .map(|k| {
                let z = self.pre(k, x);
                let w2: f64 = self.row(k).iter().map(|w| w * w).sum();
                self.a[k] * self.activation.second_deriv(z) * w2
            })
            .sum::<f64>()
            / m as f64
    }

    /// Whether the box constraints of the class with bound `bound` hold
    /// (ℓ₁ norms within `tol`).
    pub fn in_class(&self, bound: f64, tol: f64) -> bool {
        let eps = 1e-12 * bound.max(1.0);
        self.c.abs() <= 2.0 * bound + eps
            && self.a.iter().all(|a| a.abs() <= 16.0 * bound + eps)
            && self.b.iter().all(|b| b.abs() <= 1.0 + 1e-12)
            && (0..self.width()).all(|k| (self.row(k).iter().map(|w| w.abs()).sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Clips `c`, `a_k`, `b_k` to their boxes and rescales each `ω_k` to unit
    /// ℓ₁ norm (a zero row becomes `e₁`).
    pub fn projected(mut self, bound: f64) -> Self {
        self.project_in_place(bound);
        self
    }

    pub fn project_in_place(&mut self, bound: f64) {
        self.c = self.c.clamp(-2.0 * bound, 2.0 * bound);
        for a in &mut self.a {
            *a = a.clamp(-16.0 * bound, 16.0 * bound);
        }
        for b in &mut self.b {
            *b = b.clamp(-1.0, 1.0);
        }
        let d = self.d;
        for row in self.w.chunks_mut(d) {
            let n: f64 = row.iter().map(|w| w.abs()).sum();
            if n == 0.0 || !n.is_finite() {
                row.iter_mut().for_each(|w| *w = 0.0);
                row[0] = 1.0;
            } else if (n - 1.0).abs() > 4.0 * d as f64 * f64::EPSILON {
                // A row normalized once sums to 1 only up to rounding;
                // dividing again would move it, so projection would not be
                // idempotent.
                row.iter_mut().for_each(|w| *w /= n);
            }
        }
    }
}

impl TapeModel for TwoLayerNet {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn domain(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn record<'t>(&self, tape: &'t Tape, params: &[Var<'t>], x: &[Var<'t>]) -> Vec<Var<'t>> {
        let m = self.width();
        let d = self.d;
        let (c, rest) = params.split_at(1);
        let (a, rest) = rest.split_at(m);
        let (w, b) = rest.split_at(m * d);
        let mut terms = Vec::with_capacity(m);
        for k in 0..m {
            let mut z = b[k];
            for j in 0..d {
                z = z + w[k * d + j] * x[j];
            }
            terms.push(a[k] * self.activation.record(z));
        }
        vec![c[0] + tape.sum(&terms) * (1.0 / m as f64)]
    }
}

impl Model for TwoLayerNet {
    fn num_params(&self) -> usize {
        1 + self.width() * (2 + self.d)
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.push(self.c);
        p.extend_from_slice(&self.a);
        p.extend_from_slice(&self.w);
        p.extend_from_slice(&self.b);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let m = self.width();
        let d = self.d;
        assert_eq!(p.len(), self.num_params());
        self.c = p[0];
        self.a.copy_from_slice(&p[1..1 + m]);
        self.w.copy_from_slice(&p[1 + m..1 + m + m * d]);
        self.b.copy_from_slice(&p[1 + m + m * d..]);
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        vec![self.value(x)]
    }

    fn backward(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) {
        let m = self.width();
        let d = self.d;
        let u = upstream[0];
        let inv = u / m as f64;
        grad[0] += u;
        let (ga, rest) = grad[1..].split_at_mut(m);
        let (gw, gb) = rest.split_at_mut(m * d);
        for k in 0..m {
            let z = self.pre(k, x);
            ga[k] += inv * self.activation.eval(z);
            let t = inv * self.a[k] * self.activation.deriv(z);
            gb[k] += t;
            for j in 0..d {
                gw[k * d + j] += t * x[j];
            }
        }
    }

    fn input_grad(&self, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.value_grad(x, &mut g);
        g.iter_mut().for_each(|v| *v *= upstream[0]);
        g
    }

    fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.value_grad(x, &mut g);
        g
    }

    fn jacobian_backward(&self, x: &[f64], g: &[f64], grad: &mut [f64]) {
        let m = self.width();
        let d = self.d;
        let inv = 1.0 / m as f64;
        let (ga, rest) = grad[1..].split_at_mut(m);
        let (gw, gb) = rest.split_at_mut(m * d);
        for k in 0..m {
            let z = self.pre(k, x);
            let row = self.row(k);
            let s: f64 = row.iter().zip(g).map(|(w, g)| w * g).sum();
            let d1 = self.activation.deriv(z);
            let d2 = self.activation.second_deriv(z);
            ga[k] += inv * d1 * s;
            gb[k] += inv * self.a[k] * d2 * s;
            for j in 0..d {
                gw[k * d + j] += inv * self.a[k] * (d2 * x[j] * s + d1 * g[j]);
            }
        }
    }

    fn forward_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.width();
        let mut g = vec![0.0; self.d];
        let mut s = 0.0;
        for k in 0..m {
            let (v, d1, _) = self.activation.triple(self.pre(k, x));
            s += self.a[k] * v;
            let t = self.a[k] * d1 / m as f64;
            for (g, w) in g.iter_mut().zip(self.row(k)) {
                *g += t * w;
            }
        }
        (vec![self.c + s / m as f64], g)
    }

    fn backward_with_jacobian(&self, x: &[f64], upstream: &[f64], g: &[f64], grad: &mut [f64]) {
        let m = self.width();
        let d = self.d;
        let inv = 1.0 / m as f64;
        let u = upstream[0];
        grad[0] += u;
        let (ga, rest) = grad[1..].split_at_mut(m);
        let (gw, gb) = rest.split_at_mut(m * d);
        for k in 0..m {
            let (v, d1, d2) = self.activation.triple(self.pre(k, x));
            let row = self.row(k);
            let s: f64 = row.iter().zip(g).map(|(w, g)| w * g).sum();
            let ak = self.a[k];
            ga[k] += inv * (u * v + d1 * s);
            let t = inv * ak * (u * d1 + d2 * s);
            gb[k] += t;
            for j in 0..d {
                gw[k * d + j] += t * x[j] + inv * ak * d1 * g[j];
            }
        }
    }

    fn project(&mut self, bound: f64) {
        self.project_in_place(bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitudes_give_constant() {
        let mut net = TwoLayerNet::init(5, 2, 1.0, Activation::Relu, 1);
        net.a.iter_mut().for_each(|a| *a = 0.0);
        assert_eq!(net.eval(&[0.3, -0.2]).unwrap(), net.c);
    }

    #[test]
    fn single_relu_unit() {
        let net = TwoLayerNet::from_parts(0.0, vec![2.0], vec![1.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        assert_eq!(net.eval(&[0.5]).unwrap(), 1.0);
        assert!(matches!(net.eval(&[0.5, 0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn init_is_in_class_and_deterministic() {
        let a = TwoLayerNet::init(16, 3, 2.0, Activation::Softplus(4.0), 9);
        let b = TwoLayerNet::init(16, 3, 2.0, Activation::Softplus(4.0), 9);
        assert_eq!(a, b);
        assert!(a.in_class(2.0, 1e-12));
        for k in 0..16 {
            let n: f64 = a.row(k).iter().map(|w| w.abs()).sum();
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_clips_and_normalizes() {
        let net = TwoLayerNet::from_parts(5.0, vec![20.0], vec![2.0, 2.0], vec![-3.0], Activation::Relu, 1.0).unwrap();
        let p = net.projected(1.0);
        assert_eq!(p.a[0], 16.0);
        assert_eq!(p.c, 2.0);
        assert_eq!(p.b[0], -1.0);
        assert_eq!(p.row(0), &[0.5, 0.5]);

        let z = TwoLayerNet::from_parts(0.0, vec![1.0], vec![0.0, 0.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        assert_eq!(z.projected(1.0).row(0), &[1.0, 0.0]);
    }

    #[test]
    fn laplacian_matches_second_difference() {
        let net = TwoLayerNet::init(8, 2, 1.0, Activation::Softplus(3.0), 4);
        let x = [0.2, -0.4];
        let h = 1e-4;
        let f0 = net.value(&x);
        let mut lap = 0.0;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            lap += (net.value(&xp) - 2.0 * f0 + net.value(&xm)) / (h * h);
        }
        assert!((lap - net.laplacian(&x)).abs() < 1e-5);
    }
}
