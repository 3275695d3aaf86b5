//! Quadrature on `Ω = [-1, 1]^d`.
//!
//! A rule carries its measure. Lebesgue weights sum to `2^d`; the uniform
//! probability measure uses the same nodes with every weight scaled by
//! `2^{-d}`, so values under the two measures differ by exactly that factor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    GaussLegendreTensor,
    SobolQmc,
    UniformMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Lebesgue,
    UniformProbability,
}

/// Something with a value and gradient at every point of `Ω`.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    /// Returns `f(x)` and writes `∇f(x)` into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl Field for crate::nets::TwoLayerNet {
    fn dim(&self) -> usize {
        crate::nets::TwoLayerNet::dim(self)
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        crate::nets::TwoLayerNet::value_grad(self, x, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    d: usize,
    pub kind: RuleKind,
    pub measure: Measure,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// `P_n` from the Chebyshev initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Points per axis (tensor rule) or node count (sampling rules) used when a
/// caller does not choose.
pub fn default_resolution(d: usize) -> usize {
    match d {
        1 => 64,
        2 => 48,
        3 => 24,
        _ => 1 << 16,
    }
}

impl QuadratureRule {
    /// Builds a rule under the Lebesgue measure. `resolution` is points per
    /// axis for the tensor rule and the node count otherwise. Sobol and
    /// Monte Carlo nodes depend on `seed`; the tensor rule ignores it.
    pub fn build(d: usize, kind: RuleKind, resolution: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if resolution < 2 {
            return Err(Error::Domain("resolution must be at least 2".into()));
        }
        let vol = (2.0f64).powi(d as i32);
        let (nodes, weights) = match kind {
            RuleKind::GaussLegendreTensor => {
                if d > 3 {
                    return Err(Error::UnsupportedDimension(d));
                }
                let (x1, w1) = gauss_legendre(resolution);
                let n = resolution.pow(d as u32);
                let mut nodes = Vec::with_capacity(n * d);
                let mut weights = Vec::with_capacity(n);
                for flat in 0..n {
                    let mut rem = flat;
                    let mut w = 1.0;
                    let start = nodes.len();
                    nodes.resize(start + d, 0.0);
                    for axis in (0..d).rev() {
                        let i = rem % resolution;
                        rem /= resolution;
                        nodes[start + axis] = x1[i];
                        w *= w1[i];
                    }
                    weights.push(w);
                }
                (nodes, weights)
            }
            RuleKind::SobolQmc => {
                if d > 256 {
                    return Err(Error::UnsupportedDimension(d));
                }
                let s = (seed ^ (seed >> 32)) as u32;
                let mut nodes = Vec::with_capacity(resolution * d);
                for i in 0..resolution {
                    for axis in 0..d {
                        let u = sobol_burley::sample(i as u32, axis as u32, s) as f64;
                        nodes.push(2.0 * u - 1.0);
                    }
                }
                (nodes, vec![vol / resolution as f64; resolution])
            }
            RuleKind::UniformMc => {
                let mut rng = crate::seeded_rng(seed);
                let nodes = (0..resolution * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (nodes, vec![vol / resolution as f64; resolution])
            }
        };
        Ok(Self {
            nodes,
            weights,
            d,
            kind,
            measure: Measure::Lebesgue,
        })
    }

    /// Gauss–Legendre tensor rule with the default resolution for `d ≤ 3`,
    /// a Sobol rule with `2^16` nodes otherwise.
    pub fn default_for(d: usize) -> Result<Self> {
        let kind = if d <= 3 { RuleKind::GaussLegendreTensor } else { RuleKind::SobolQmc };
        Self::build(d, kind, default_resolution(d), 0)
    }

    /// The first `n` nodes of a Sobol or Monte Carlo rule, reweighted
    /// equally. Nested prefixes share their nodes.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if self.kind == RuleKind::GaussLegendreTensor {
            return Err(Error::Precondition("a tensor rule has no nested prefix".into()));
        }
        if n == 0 || n > self.len() {
            return Err(Error::Domain(format!("prefix of {n} nodes from a rule of {}", self.len())));
        }
        let total: f64 = self.weights.iter().sum();
        Ok(Self {
            nodes: self.nodes[..n * self.d].to_vec(),
            weights: vec![total / n as f64; n],
            d: self.d,
            kind: self.kind,
            measure: self.measure,
        })
    }

    /// Same nodes, weights rescaled for `measure`.
    pub fn with_measure(mut self, measure: Measure) -> Self {
        if measure != self.measure {
            let vol = (2.0f64).powi(self.d as i32);
            let f = match measure {
                Measure::Lebesgue => vol,
                Measure::UniformProbability => 1.0 / vol,
            };
            for w in &mut self.weights {
                *w *= f;
            }
            self.measure = measure;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.d..(i + 1) * self.d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_i w_i f(x_i)` with the fixed-chunk reduction order of [`par`].
    pub fn integrate<F>(&self, mode: ExecMode, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par::chunked_sum(mode, self.len(), 1, |i, acc| {
            acc[0] += self.weights[i] * f(self.node(i));
        })[0]
    }
}

/// `Σ w_i (|f − g|² + |∇f − ∇g|²)` under the rule's measure.
pub fn h1_norm_sq(f: &dyn Field, g: &dyn Field, rule: &QuadratureRule) -> f64 {
    let d = rule.dim();
    assert!(f.dim() == d && g.dim() == d, "field dimension does not match rule");
    rule.integrate(ExecMode::Parallel, |x| {
        let mut gf = vec![0.0; d];
        let mut gg = vec![0.0; d];
        let diff = f.value_grad(x, &mut gf) - g.value_grad(x, &mut gg);
        diff * diff + gf.iter().zip(&gg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    })
}

/// `‖f‖²_{H¹}` under the rule's measure.
pub fn h1_self_norm_sq(f: &dyn Field, rule: &QuadratureRule) -> f64 {
    let d = rule.dim();
    rule.integrate(ExecMode::Parallel, |x| {
        let mut g = vec![0.0; d];
        let v = f.value_grad(x, &mut g);
        v * v + g.iter().map(|t| t * t).sum::<f64>()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Tv,
    Tik,
}

impl Functional {
    /// Integrand `u² − 2uy + |∇u|` or `u² − 2uy + |∇u|²`.
    #[inline]
    pub fn integrand(self, u: f64, y: f64, grad_sq: f64) -> f64 {
        let reg = match self {
            Functional::Tv => grad_sq.sqrt(),
            Functional::Tik => grad_sq,
        };
        u * u - 2.0 * u * y + reg
    }
}

/// Quadrature value of the TV or Tikhonov functional of `u` against data `y`.
pub fn expected_loss<Y>(u: &dyn Field, y: Y, reg: Functional, rule: &QuadratureRule) -> f64
where
    Y: Fn(&[f64]) -> f64 + Sync + Send,
{
    let d = rule.dim();
    rule.integrate(ExecMode::Parallel, |x| {
        let mut g = vec![0.0; d];
        let v = u.value_grad(x, &mut g);
        reg.integrand(v, y(x), g.iter().map(|t| t * t).sum())
    })
}

/// `|L^Tik(v) − L^Tik(û) − ‖v − û‖²_{H¹}|` under the rule's measure.
///
/// `y` must equal `û − Δû`; this is spot-checked at 8 random points.
pub fn sobolev_identity_residual<Y>(
    v: &dyn Field,
    u_hat: &crate::barron::BarronFunction,
    y: Y,
    rule: &QuadratureRule,
) -> Result<f64>
where
    Y: Fn(&[f64]) -> f64 + Sync + Send,
{
    let d = rule.dim();
    let mut rng = crate::seeded_rng(0x50b0);
    for _ in 0..8 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let (val, _, lap) = u_hat.eval_derivs(&x);
        let want = val - lap;
        let got = y(&x);
        if (got - want).abs() > 1e-8 * (1.0 + want.abs()) {
            return Err(Error::Precondition(format!(
                "y({x:?}) = {got}, but û − Δû = {want}"
            )));
        }
    }
    let lv = expected_loss(v, &y, Functional::Tik, rule);
    let lu = expected_loss(u_hat, &y, Functional::Tik, rule);
    let h1 = h1_norm_sq(v, u_hat, rule);
    Ok((lv - lu - h1).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barron::BarronFunction;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_degree_nine_exact() {
        let rule = QuadratureRule::build(1, RuleKind::GaussLegendreTensor, 5, 0).unwrap();
        let v = rule.integrate(ExecMode::Sequential, |x| x[0].powi(8));
        assert!((v - 2.0 / 9.0).abs() < 1e-12);
        let odd = rule.integrate(ExecMode::Sequential, |x| x[0].powi(9));
        assert!(odd.abs() < 1e-12);
    }

    #[test]
    fn tensor_rule_is_exact_to_per_axis_degree() {
        let n = 6;
        let rule = QuadratureRule::build(3, RuleKind::GaussLegendreTensor, n, 0).unwrap();
        let deg = 2 * n as i32 - 2;
        let v = rule.integrate(ExecMode::Sequential, |x| x[0].powi(deg) * x[1].powi(2) * x[2].powi(4));
        let exact = 2.0 / (deg as f64 + 1.0) * (2.0 / 3.0) * (2.0 / 5.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn weight_sums() {
        let r = QuadratureRule::build(2, RuleKind::GaussLegendreTensor, 10, 0).unwrap();
        assert!((r.weights().iter().sum::<f64>() - 4.0).abs() < 1e-12);
        let p = r.with_measure(Measure::UniformProbability);
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let s = QuadratureRule::build(5, RuleKind::SobolQmc, 1000, 3).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 32.0).abs() < 1e-9);
    }

    #[test]
    fn sobol_is_reproducible_and_seeded() {
        let a = QuadratureRule::build(3, RuleKind::SobolQmc, 128, 9).unwrap();
        let b = QuadratureRule::build(3, RuleKind::SobolQmc, 128, 9).unwrap();
        let c = QuadratureRule::build(3, RuleKind::SobolQmc, 128, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.nodes, c.nodes);
        assert!(a.nodes.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn prefix_is_nested() {
        let r = QuadratureRule::build(2, RuleKind::UniformMc, 100, 4).unwrap();
        let p = r.prefix(10).unwrap();
        assert_eq!(p.nodes[..], r.nodes[..20]);
        assert!((p.weights().iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert!(r.prefix(101).is_err());
        let gl = QuadratureRule::default_for(1).unwrap();
        assert!(gl.prefix(3).is_err());
    }

    #[test]
    fn tensor_rule_rejects_high_dimension() {
        let err = QuadratureRule::build(4, RuleKind::GaussLegendreTensor, 4, 0).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDimension(4)));
    }

    #[test]
    fn h1_norm_of_cosine() {
        let f = BarronFunction::cosine(1.0, vec![PI], 0.0);
        let zero = BarronFunction::zero(1);
        let rule = QuadratureRule::default_for(1).unwrap();
        let leb = h1_norm_sq(&f, &zero, &rule);
        assert!((leb - (1.0 + PI * PI)).abs() < 1e-10);
        let prob = h1_norm_sq(&f, &zero, &rule.with_measure(Measure::UniformProbability));
        assert_eq!(prob, leb / 2.0);
        assert_eq!(h1_norm_sq(&f, &f, &QuadratureRule::default_for(1).unwrap()), 0.0);
    }

    #[test]
    fn expected_loss_of_constant() {
        let k = BarronFunction::cosine(0.7, vec![0.0], 0.0);
        let rule = QuadratureRule::default_for(1).unwrap();
        let v = expected_loss(&k, |_| 0.0, Functional::Tik, &rule);
        assert!((v - 2.0 * 0.49).abs() < 1e-12);
        let tv = expected_loss(&k, |_| 0.0, Functional::Tv, &rule);
        assert_eq!(v, tv);
        let zero = BarronFunction::zero(1);
        assert_eq!(expected_loss(&zero, |x| x[0].sin(), Functional::Tv, &rule), 0.0);
    }

    #[test]
    fn sobolev_identity_for_exact_minimizer() {
        let u = BarronFunction::cosine(1.0, vec![PI], 0.0);
        let rule = QuadratureRule::default_for(1).unwrap();
        let y = |x: &[f64]| (1.0 + PI * PI) * (PI * x[0]).cos();
        assert!(sobolev_identity_residual(&u, &u, y, &rule).unwrap() < 1e-10);
        let bad = |x: &[f64]| (PI * x[0]).cos();
        assert!(matches!(
            sobolev_identity_residual(&u, &u, bad, &rule),
            Err(Error::Precondition(_))
        ));
    }
}
