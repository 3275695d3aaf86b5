//! Barron functions as finite cosine-atom measures, and their constructive
//! approximation by two-layer ReLU and SoftPlus networks.
//!
//! For `f(x) = Σ_j c_j cos(ω_j·x + ζ_j)` the Fourier measure is discrete, so
//! the Barron norm is exact and the sampling law `F̂` is categorical with
//! `p_j ∝ |c_j| (1 + |ω_j|₁)²`.

use std::fmt::Write as _;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Activation, TwoLayerNet};
use crate::quadrature::{h1_norm_sq, Field, QuadratureRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub amplitude: f64,
    pub freq: Vec<f64>,
    pub phase: f64,
}

impl Atom {
    pub fn l1(&self) -> f64 {
        self.freq.iter().map(|w| w.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarronFunction {
    atoms: Vec<Atom>,
    d: usize,
}

impl BarronFunction {
    pub fn new(d: usize, atoms: Vec<Atom>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        for a in &atoms {
            if a.freq.len() != d {
                return Err(Error::Domain(format!(
                    "atom frequency has {} components, expected {d}",
                    a.freq.len()
                )));
            }
            if !a.amplitude.is_finite() || !a.phase.is_finite() || a.freq.iter().any(|w| !w.is_finite()) {
                return Err(Error::Domain("atom parameters must be finite".into()));
            }
        }
        Ok(Self { atoms, d })
    }

    pub fn zero(d: usize) -> Self {
        Self { atoms: Vec::new(), d }
    }

    /// `amplitude · cos(freq·x + phase)`.
    pub fn cosine(amplitude: f64, freq: Vec<f64>, phase: f64) -> Self {
        let d = freq.len();
        Self {
            atoms: vec![Atom {
                amplitude,
                freq,
                phase,
            }],
            d,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Atom-list concatenation, i.e. the sum of the two functions.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::Domain("dimension mismatch".into()));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(Self { atoms, d: self.d })
    }

    /// Multiplies every amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.amplitude *= s;
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.amplitude * (dot(&a.freq, x) + a.phase).cos())
            .sum()
    }

    /// Value, gradient and Laplacian at `x`, atom by atom in closed form.
    pub fn eval_derivs(&self, x: &[f64]) -> (f64, Vec<f64>, f64) {
        let mut grad = vec![0.0; self.d];
        let mut v = 0.0;
        let mut lap = 0.0;
        for a in &self.atoms {
            let t = dot(&a.freq, x) + a.phase;
            let (s, c) = t.sin_cos();
            v += a.amplitude * c;
            for (g, w) in grad.iter_mut().zip(&a.freq) {
                *g -= a.amplitude * s * w;
            }
            lap -= a.amplitude * c * a.freq.iter().map(|w| w * w).sum::<f64>();
        }
        (v, grad, lap)
    }

    /// `f − Δf`, the data of the manufactured problem `u − Δu = y`.
    pub fn pde_rhs(&self, x: &[f64]) -> f64 {
        let (v, _, lap) = self.eval_derivs(x);
        v - lap
    }

    /// Plain-text atom table: one atom per line, `amplitude phase ω_1 … ω_d`.
    /// Blank lines and lines starting with `#` are skipped on read.
    pub fn to_table(&self) -> String {
        let mut s = format!("# amplitude phase freq[{}]\n", self.d);
        for a in &self.atoms {
            let _ = write!(s, "{:?} {:?}", a.amplitude, a.phase);
            for w in &a.freq {
                let _ = write!(s, " {w:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_table(text: &str, d: usize) -> Result<Self> {
        let mut atoms = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("atom table line {}: {e}", no + 1)))?;
            if vals.len() != d + 2 {
                return Err(Error::Parse(format!(
                    "atom table line {}: expected {} numbers, found {}",
                    no + 1,
                    d + 2,
                    vals.len()
                )));
            }
            atoms.push(Atom {
                amplitude: vals[0],
                phase: vals[1],
                freq: vals[2..].to_vec(),
            });
        }
        Self::new(d, atoms)
    }
}

impl Field for BarronFunction {
    fn dim(&self) -> usize {
        self.d
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut v = 0.0;
        for a in &self.atoms {
            let (s, c) = (dot(&a.freq, x) + a.phase).sin_cos();
            v += a.amplitude * c;
            for (g, w) in grad.iter_mut().zip(&a.freq) {
                *g -= a.amplitude * s * w;
            }
        }
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_j |c_j| (1 + |ω_j|₁)^s`.
pub fn barron_norm(f: &BarronFunction, s: f64) -> f64 {
    f.atoms.iter().map(|a| a.amplitude.abs() * (1.0 + a.l1()).powf(s)).sum()
}

/// The ridge profile `g̃(z) = γ (cos(rz + ζ) − cos ζ)/(1+r)² + a₀ z` with
/// `a₀ = γ r sin ζ/(1+r)²`, so that `g̃(0) = g̃′(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeProfile {
    pub gamma: f64,
    /// `|ω|₁`.
    pub r: f64,
    pub zeta: f64,
}

impl RidgeProfile {
    fn scale(&self) -> f64 {
        self.gamma / (1.0 + self.r).powi(2)
    }

    /// Slope `a₀` of the linear correction.
    pub fn linear_slope(&self) -> f64 {
        self.scale() * self.r * self.zeta.sin()
    }

    /// Uncorrected profile `g(z)`.
    pub fn raw(&self, z: f64) -> f64 {
        self.scale() * ((self.r * z + self.zeta).cos() - self.zeta.cos())
    }

    pub fn raw_deriv(&self, z: f64) -> f64 {
        -self.scale() * self.r * (self.r * z + self.zeta).sin()
    }

    pub fn value(&self, z: f64) -> f64 {
        self.raw(z) + self.linear_slope() * z
    }

    pub fn deriv(&self, z: f64) -> f64 {
        self.raw_deriv(z) + self.linear_slope()
    }

    pub fn second_deriv(&self, z: f64) -> f64 {
        -self.scale() * self.r * self.r * (self.r * z + self.zeta).cos()
    }
}

/// One draw from `F̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub atom: usize,
    /// `ω_j/|ω_j|₁`, or `e₁` for a constant atom.
    pub direction: Vec<f64>,
    pub profile: RidgeProfile,
}

/// Categorical sampler over the atoms of `f` with `p_j ∝ |c_j|(1+|ω_j|₁)²`.
#[derive(Debug, Clone)]
pub struct RidgeSampler {
    dist: WeightedIndex<f64>,
    ridges: Vec<Ridge>,
    probs: Vec<f64>,
    norm: f64,
}

impl RidgeSampler {
    pub fn new(f: &BarronFunction) -> Result<Self> {
        Self::with_norm(f, barron_norm(f, 2.0))
    }

    /// Uses `c_f ≥ ‖f‖_B` as the profile amplitude.
    pub fn with_norm(f: &BarronFunction, c_f: f64) -> Result<Self> {
        let weights: Vec<f64> = f
            .atoms
            .iter()
            .map(|a| a.amplitude.abs() * (1.0 + a.l1()).powi(2))
            .collect();
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::EmptyMeasure)?;
        let ridges = f
            .atoms
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let r = a.l1();
                let direction = if r > 0.0 {
                    a.freq.iter().map(|w| w / r).collect()
                } else {
                    let mut e = vec![0.0; f.d];
                    e[0] = 1.0;
                    e
                };
                Ridge {
                    atom: j,
                    direction,
                    profile: RidgeProfile {
                        gamma: c_f.copysign(a.amplitude),
                        r,
                        zeta: a.phase,
                    },
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            dist,
            ridges,
            probs,
            norm: c_f,
        })
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn ridges(&self) -> &[Ridge] {
        &self.ridges
    }

    /// Sampling probability of each atom.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> &Ridge {
        &self.ridges[self.dist.sample(rng)]
    }
}

/// Draws one ridge from `F̂`.
pub fn sample_ridge<R: Rng>(f: &BarronFunction, rng: &mut R) -> Result<Ridge> {
    Ok(RidgeSampler::new(f)?.sample(rng).clone())
}

/// Monte Carlo approximant `f(0) + (1/m) Σ_k g(x, ω_k)` with `ω_k ~ F̂`.
#[derive(Debug, Clone)]
pub struct McApprox {
    pub offset: f64,
    pub ridges: Vec<Ridge>,
    d: usize,
}

impl McApprox {
    pub fn width(&self) -> usize {
        self.ridges.len()
    }
}

impl Field for McApprox {
    fn dim(&self) -> usize {
        self.d
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let m = self.ridges.len() as f64;
        let mut v = 0.0;
        for r in &self.ridges {
            let z = dot(&r.direction, x);
            v += r.profile.raw(z);
            let dz = r.profile.raw_deriv(z);
            for (g, u) in grad.iter_mut().zip(&r.direction) {
                *g += dz * u / m;
            }
        }
        self.offset + v / m
    }
}

pub fn mc_cosine_approx(f: &BarronFunction, m: usize, seed: u64) -> Result<McApprox> {
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let sampler = RidgeSampler::new(f)?;
    let mut rng = crate::seeded_rng(seed);
    let ridges = (0..m).map(|_| sampler.sample(&mut rng).clone()).collect();
    Ok(McApprox {
        offset: f.value(&vec![0.0; f.d]),
        ridges,
        d: f.d,
    })
}

/// A single unit `ReLU(ε z + b)` with `ε ∈ {−1, 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluUnit {
    pub a: f64,
    pub eps: f64,
    pub b: f64,
}

/// `c + (1/2m) Σ_k a_k ReLU(ε_k z + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interp1d {
    pub c: f64,
    pub units: Vec<ReluUnit>,
    pub m: usize,
}

impl Interp1d {
    pub fn value(&self, z: f64) -> f64 {
        let s: f64 = self.units.iter().map(|u| u.a * (u.eps * z + u.b).max(0.0)).sum();
        self.c + s / (2 * self.m) as f64
    }

    /// Derivative, with the ReLU step taken as 0 at its kink.
    pub fn slope(&self, z: f64) -> f64 {
        let s: f64 = self
            .units
            .iter()
            .map(|u| if u.eps * z + u.b > 0.0 { u.a * u.eps } else { 0.0 })
            .sum();
        s / (2 * self.m) as f64
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=2 * self.m).map(|k| -1.0 + k as f64 / self.m as f64)
    }
}

/// Fourth-order central difference at 0, used to check `g′(0) = 0`.
fn deriv_at_zero(g: &impl Fn(f64) -> f64) -> f64 {
    let h = 1e-3;
    (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
}

/// Piecewise-linear interpolant of `g` on the knots `−1 + k/m`, written as a
/// constant plus `2m` ReLU units: units `ReLU(z − i/m)` carry the slope
/// changes on `[0, 1]` and units `ReLU(−z − i/m)` those on `[−1, 0]`.
pub fn relu_interp_1d(g: impl Fn(f64) -> f64, m: usize) -> Result<Interp1d> {
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let d0 = deriv_at_zero(&g);
    if d0.abs() > 1e-8 {
        return Err(Error::Precondition(format!("profile has g'(0) = {d0:e}, expected 0")));
    }
    let mf = m as f64;
    let g0 = g(0.0);
    let scale = 2.0 * mf;
    let mut units = Vec::with_capacity(2 * m);
    for eps in [1.0, -1.0] {
        let mut prev = 0.0;
        let mut left = g0;
        for i in 0..m {
            let right = g(eps * (i + 1) as f64 / mf);
            let slope = (right - left) * mf;
            units.push(ReluUnit {
                a: scale * (slope - prev),
                eps,
                b: -(i as f64) / mf,
            });
            prev = slope;
            left = right;
        }
    }
    Ok(Interp1d { c: g0, units, m })
}

/// The `F^m(B)`-class bounds of the constructive approximation theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBound {
    pub m: usize,
    pub c_f: f64,
    /// `√1345 c_f/√m`.
    pub relu_bound: f64,
    /// `c_f (24 ln m + 65)/√m`.
    pub sp_bound: f64,
}

pub fn theory_bounds(m: usize, c_f: f64) -> TheoryBound {
    let sm = (m as f64).sqrt();
    TheoryBound {
        m,
        c_f,
        relu_bound: 1345f64.sqrt() * c_f / sm,
        sp_bound: c_f * (24.0 * (m as f64).ln() + 65.0) / sm,
    }
}

/// Relative slack `η/‖f‖_B` added to the Barron norm.
pub const NORM_SLACK: f64 = 1e-6;

/// Per-atom ReLU decomposition `Σ_k w_k ReLU(ε_k u·x + b_k)` of the ridge
/// function `g(u·x)`, up to the constant `a₀`, with cumulative magnitudes
/// for the second sampling level.
struct RidgeUnits {
    units: Vec<ReluUnit>,
    cumulative: Vec<f64>,
    total: f64,
}

impl RidgeUnits {
    fn build(p: &RidgeProfile, m: usize) -> Result<Self> {
        let interp = relu_interp_1d(|z| p.value(z), m)?;
        let a0 = p.linear_slope();
        let scale = 1.0 / (2 * m) as f64;
        let mut units: Vec<ReluUnit> = interp
            .units
            .iter()
            .map(|u| ReluUnit { a: u.a * scale, ..*u })
            .collect();
        // g = g̃ − a₀ z and −a₀ z = −a₀ ReLU(z + 1) + a₀ on [−1, 1]
        units.push(ReluUnit { a: -a0, eps: 1.0, b: 1.0 });
        let mut cumulative = Vec::with_capacity(units.len());
        let mut total = 0.0;
        for u in &units {
            total += u.a.abs();
            cumulative.push(total);
        }
        Ok(Self {
            units,
            cumulative,
            total,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Option<ReluUnit> {
        if self.total <= 0.0 {
            return None;
        }
        let t = rng.random::<f64>() * self.total;
        let k = self.cumulative.partition_point(|&c| c <= t).min(self.units.len() - 1);
        Some(self.units[k])
    }
}

/// Outcome of a constructive approximation: the net and its measured error.
#[derive(Debug, Clone)]
pub struct Construction {
    pub net: TwoLayerNet,
    /// `‖f − φ‖_{H¹(Ω)}` under the Lebesgue measure.
    pub error: f64,
    pub bound: f64,
    pub attempts: usize,
    pub c_f: f64,
}

fn sample_relu_net(
    f: &BarronFunction,
    sampler: &RidgeSampler,
    per_atom: &[RidgeUnits],
    m: usize,
    activation: Activation,
    seed: u64,
) -> Result<TwoLayerNet> {
    let d = f.d;
    let mut rng = crate::seeded_rng(seed);
    let mut c = f.value(&vec![0.0; d]);
    for (p, r) in sampler.probabilities().iter().zip(sampler.ridges()) {
        c += p * r.profile.linear_slope();
    }
    let mut a = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m * d);
    let mut b = Vec::with_capacity(m);
    for _ in 0..m {
        let ridge = sampler.sample(&mut rng);
        let units = &per_atom[ridge.atom];
        match units.sample(&mut rng) {
            Some(u) => {
                a.push(units.total.copysign(u.a));
                w.extend(ridge.direction.iter().map(|v| v * u.eps));
                b.push(u.b);
            }
            None => {
                a.push(0.0);
                w.extend(ridge.direction.iter().copied());
                b.push(0.0);
            }
        }
    }
    TwoLayerNet::from_parts(c, a, w, b, activation, sampler.norm())
}

fn construct(
    f: &BarronFunction,
    m: usize,
    seed: u64,
    max_retries: usize,
    activation: Activation,
    bound: impl Fn(f64) -> f64,
    rule: &QuadratureRule,
) -> Result<Construction> {
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let norm = barron_norm(f, 2.0);
    let c_f = norm * (1.0 + NORM_SLACK);
    let bound = bound(c_f);
    let d = f.d;
    if norm == 0.0 {
        let net = TwoLayerNet::from_parts(0.0, vec![0.0; m], unit_rows(m, d), vec![0.0; m], activation, 1.0)?;
        let error = h1_norm_sq(f, &net, rule).sqrt();
        return Ok(Construction {
            net,
            error,
            bound,
            attempts: 1,
            c_f,
        });
    }
    let sampler = RidgeSampler::with_norm(f, c_f)?;
    let per_atom = sampler
        .ridges()
        .iter()
        .map(|r| RidgeUnits::build(&r.profile, m))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(TwoLayerNet, f64)> = None;
    let attempts = max_retries.max(1);
    for attempt in 0..attempts {
        let net = sample_relu_net(f, &sampler, &per_atom, m, activation, crate::mix_seed(seed, attempt as u64))?;
        debug_assert!(net.in_class(c_f, 1e-9));
        if !net.in_class(c_f, 1e-9) {
            return Err(Error::Precondition("constructed net left the bounded class".into()));
        }
        let error = h1_norm_sq(f, &net, rule).sqrt();
        if error <= bound {
            return Ok(Construction {
                net,
                error,
                bound,
                attempts: attempt + 1,
                c_f,
            });
        }
        if best.as_ref().is_none_or(|(_, e)| error < *e) {
            best = Some((net, error));
        }
    }
    let (net, error) = best.expect("at least one attempt");
    Err(Error::BoundUnmet {
        best: Box::new(net),
        error,
        bound,
        attempts,
    })
}

fn unit_rows(m: usize, d: usize) -> Vec<f64> {
    let mut w = vec![0.0; m * d];
    for k in 0..m {
        w[k * d] = 1.0;
    }
    w
}

/// ReLU net in `F^m_ReLU(c_f)` with `H¹` error at most `√1345 c_f/√m`,
/// where `c_f = ‖f‖_B (1 + 1e-6)`. Resamples up to `max_retries` times.
pub fn construct_relu_approx(f: &BarronFunction, m: usize, seed: u64, max_retries: usize) -> Result<Construction> {
    let rule = QuadratureRule::default_for(f.d)?;
    construct(
        f,
        m,
        seed,
        max_retries,
        Activation::Relu,
        |c_f| theory_bounds(m, c_f).relu_bound,
        &rule,
    )
}

/// The same construction with every activation replaced by `SP_τ`, `τ = √m`;
/// the bound is `c_f (24 ln m + 65)/√m`.
pub fn construct_softplus_approx(f: &BarronFunction, m: usize, seed: u64, max_retries: usize) -> Result<Construction> {
    if m < 2 {
        return Err(Error::Domain("softplus construction needs m >= 2".into()));
    }
    let rule = QuadratureRule::default_for(f.d)?;
    construct(
        f,
        m,
        seed,
        max_retries,
        Activation::Softplus((m as f64).sqrt()),
        |c_f| theory_bounds(m, c_f).sp_bound,
        &rule,
    )
}

/// Sup-norm gap allowed between matched SoftPlus and ReLU constructions,
/// `16 c_f (8/m + 4 e^{−τ/m})` with `τ = √m`, times `slack`.
pub fn softplus_gap_bound(m: usize, c_f: f64, slack: f64) -> f64 {
    let mf = m as f64;
    16.0 * c_f * (8.0 / mf + 4.0 * (-mf.sqrt() / mf).exp()) * slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cos_pi() -> BarronFunction {
        BarronFunction::cosine(1.0, vec![PI], 0.0)
    }

    #[test]
    fn norm_examples() {
        assert_eq!(barron_norm(&BarronFunction::zero(2), 2.0), 0.0);
        let unit = BarronFunction::cosine(1.0, vec![0.5, -0.5], 0.3);
        assert!((barron_norm(&unit, 2.0) - 4.0).abs() < 1e-15);
        assert!((barron_norm(&cos_pi(), 2.0) - (1.0 + PI).powi(2)).abs() < 1e-12);
        assert!((barron_norm(&cos_pi(), 2.0) - 17.1528).abs() < 1e-4);
    }

    #[test]
    fn derivs_of_cosine() {
        let f = cos_pi();
        for x in [-0.9, -0.2, 0.0, 0.4, 1.0] {
            let (v, g, lap) = f.eval_derivs(&[x]);
            assert!((lap + PI * PI * (PI * x).cos()).abs() < 1e-12);
            assert!((v - lap - (1.0 + PI * PI) * (PI * x).cos()).abs() < 1e-12);
            let h = 1e-5;
            let fd = (f.value(&[x + h]) - f.value(&[x - h])) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-7);
        }
        let k = BarronFunction::cosine(2.0, vec![0.0, 0.0], 0.4);
        let (_, g, lap) = k.eval_derivs(&[0.3, 0.1]);
        assert_eq!(g, vec![0.0, 0.0]);
        assert_eq!(lap, 0.0);
    }

    #[test]
    fn table_round_trip() {
        let f = BarronFunction::new(
            2,
            vec![
                Atom { amplitude: 0.5, freq: vec![PI, 0.0], phase: 0.1 },
                Atom { amplitude: -1.0 / 3.0, freq: vec![2.0 * PI, -PI], phase: 0.0 },
            ],
        )
        .unwrap();
        let back = BarronFunction::from_table(&f.to_table(), 2).unwrap();
        assert_eq!(back, f);
        assert!(BarronFunction::from_table("1 2\n", 2).is_err());
    }

    #[test]
    fn profile_vanishes_to_first_order() {
        let f = BarronFunction::cosine(-0.8, vec![1.3, -0.4], 0.9);
        let mut rng = crate::seeded_rng(1);
        let r = sample_ridge(&f, &mut rng).unwrap();
        assert_eq!(r.atom, 0);
        assert_eq!(r.profile.value(0.0), 0.0);
        assert!(r.profile.deriv(0.0).abs() <= 1e-10);
        let c_f = barron_norm(&f, 2.0);
        for k in 0..=200 {
            let z = -1.0 + k as f64 / 100.0;
            assert!(r.profile.value(z).abs() <= 2.0 * c_f);
            assert!(r.profile.deriv(z).abs() <= 2.0 * c_f);
            assert!(r.profile.second_deriv(z).abs() <= 2.0 * c_f);
        }
    }

    #[test]
    fn zero_function_has_empty_measure() {
        let mut rng = crate::seeded_rng(0);
        assert!(matches!(sample_ridge(&BarronFunction::zero(1), &mut rng), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn sampling_frequencies_follow_norms() {
        // norms 4 and 8
        let f = BarronFunction::new(
            1,
            vec![
                Atom { amplitude: 1.0, freq: vec![1.0], phase: 0.0 },
                Atom { amplitude: 2.0, freq: vec![-1.0], phase: 0.5 },
            ],
        )
        .unwrap();
        let s = RidgeSampler::new(&f).unwrap();
        let mut rng = crate::seeded_rng(7);
        let n = 100_000;
        let hits = (0..n).filter(|_| s.sample(&mut rng).atom == 0).count();
        assert!((hits as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn interp_of_zero_is_zero() {
        let it = relu_interp_1d(|_| 0.0, 8).unwrap();
        assert_eq!(it.c, 0.0);
        assert!(it.units.iter().all(|u| u.a == 0.0));
    }

    #[test]
    fn interp_error_and_knots() {
        for m in [8, 32, 128] {
            let it = relu_interp_1d(|z: f64| 1.0 - z.cos(), m).unwrap();
            assert_eq!(it.units.len(), 2 * m);
            for z in it.knots() {
                assert!((it.value(z) - (1.0 - z.cos())).abs() <= 1e-12);
            }
            let mut err: f64 = 0.0;
            for k in 0..10_000 {
                let z = -1.0 + 2.0 * (k as f64 + 0.5) / 10_000.0;
                err = err.max((it.value(z) - (1.0 - z.cos())).abs());
                err = err.max((it.slope(z) - z.sin()).abs());
            }
            assert!(err <= 2.0 * 2.0 / m as f64, "m={m}: {err}");
            for u in &it.units {
                assert!(u.a.abs() <= 8.0 && u.b.abs() <= 1.0 && u.eps.abs() == 1.0);
            }
        }
    }

    #[test]
    fn interp_rejects_sloped_profile() {
        assert!(matches!(relu_interp_1d(|z| z, 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn mc_is_exact_for_single_atom() {
        let f = BarronFunction::cosine(0.7, vec![PI, -2.0 * PI], 0.3);
        let rule = QuadratureRule::default_for(2).unwrap();
        for m in [1, 5, 40] {
            let approx = mc_cosine_approx(&f, m, 3).unwrap();
            assert!(h1_norm_sq(&f, &approx, &rule).sqrt() <= 1e-10);
        }
    }

    #[test]
    fn theory_bound_arithmetic() {
        assert!((theory_bounds(1345, 1.0).relu_bound - 1.0).abs() < 1e-12);
        assert!((theory_bounds(100, 1.0).sp_bound - 17.552).abs() < 1e-3);
        let z = theory_bounds(10, 0.0);
        assert_eq!((z.relu_bound, z.sp_bound), (0.0, 0.0));
        let c = (1.0 + PI).powi(2);
        assert!((theory_bounds(100, c).sp_bound - 301.1).abs() < 0.1);
        assert!((theory_bounds(256, c).relu_bound - 39.3).abs() < 0.05);
    }

    #[test]
    fn constant_function_is_reproduced() {
        let f = BarronFunction::cosine(0.6, vec![0.0], 0.0);
        let c = construct_relu_approx(&f, 16, 0, 10).unwrap();
        assert!(c.net.a.iter().all(|&a| a == 0.0));
        assert!((c.net.c - 0.6).abs() < 1e-15);
        assert!(c.error < 1e-14);
    }

    #[test]
    fn relu_construction_meets_bound_and_class() {
        let f = cos_pi();
        let c = construct_relu_approx(&f, 256, 1, 10).unwrap();
        assert!(c.error <= c.bound);
        assert_eq!(c.net.width(), 256);
        assert!(c.net.in_class(c.c_f, 1e-9));
    }
}
