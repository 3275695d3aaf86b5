//! Variational experiments: manufactured `u − Δu = y` problems, Tikhonov and
//! TV training studies, the 1D ROF oracle, quadrature-gap and Rademacher
//! estimates, and log–log power-law fits.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barron::{barron_norm, Atom, BarronFunction};
use crate::error::{Error, Result};
use crate::losses::{DataTerm, LossSpec, RegKind};
use crate::nets::{Activation, TwoLayerNet};
use crate::par::{self, ExecMode};
use crate::quadrature::{
    expected_loss, h1_norm_sq, h1_self_norm_sq, sobolev_identity_residual, Field, Functional, Measure,
    QuadratureRule, RuleKind,
};
use crate::stats::{mean, median};
use crate::trainer::{train, TrainConfig, TrainData, TrainReport};

/// `û` built from products of `cos(π k x_i)`, together with its data
/// `y = û − Δû` and the norms the bounds consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedProblem {
    pub u_hat: BarronFunction,
    pub d: usize,
    /// `Σ |c_j| (1 + |ω_j|₁)²`.
    pub barron_norm: f64,
    /// `‖û‖²_{H¹}` over `[-1, 1]^d` (Lebesgue).
    pub h1_norm_sq: f64,
    /// Uniform bound of `y`: `Σ |c_j| (1 + |ω_j|₂²)`.
    pub y_bound: f64,
}

impl ManufacturedProblem {
    pub fn new(u_hat: BarronFunction) -> Result<Self> {
        let d = u_hat.dim();
        let rule = if d <= 3 {
            QuadratureRule::default_for(d)?
        } else {
            QuadratureRule::build(d, RuleKind::SobolQmc, 1 << 16, 0)?
        };
        let h1 = h1_self_norm_sq(&u_hat, &rule);
        let y_bound = u_hat
            .atoms()
            .iter()
            .map(|a| a.amplitude.abs() * (1.0 + a.freq.iter().map(|w| w * w).sum::<f64>()))
            .sum();
        Ok(Self {
            barron_norm: barron_norm(&u_hat, 2.0),
            h1_norm_sq: h1,
            y_bound,
            d,
            u_hat,
        })
    }

    /// `coef · Π_i cos(π k_i x_i)` expanded into cosine atoms.
    pub fn cosine_product(coef: f64, ks: &[usize]) -> Result<Self> {
        let mut acc = BTreeMap::new();
        add_product(&mut acc, coef, ks);
        Self::new(atoms_from(ks.len(), acc)?)
    }

    /// Atomwise closed form `Σ c_j (1 + |ω_j|²) cos(ω_j·x + ζ_j)`.
    pub fn y(&self, x: &[f64]) -> f64 {
        self.u_hat
            .atoms()
            .iter()
            .map(|a| {
                let t: f64 = a.freq.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + a.phase;
                a.amplitude * (1.0 + a.freq.iter().map(|w| w * w).sum::<f64>()) * t.cos()
            })
            .sum()
    }

    /// Largest `|y − (û − Δû)|` over 8 random points of the cube.
    pub fn check(&self, seed: u64) -> f64 {
        let mut rng = crate::seeded_rng(seed);
        (0..8)
            .map(|_| {
                let x: Vec<f64> = (0..self.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                (self.y(&x) - self.u_hat.pde_rhs(&x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

// Π_i cos(θ_i) = 2^{-d} Σ_{s ∈ {±1}^d} cos(Σ_i s_i θ_i); frequencies are keyed
// by signed integer wavenumbers with the first nonzero entry made positive.
fn add_product(acc: &mut BTreeMap<Vec<i64>, f64>, coef: f64, ks: &[usize]) {
    let d = ks.len();
    let scale = coef / (1u64 << d) as f64;
    for mask in 0..(1u64 << d) {
        let mut key: Vec<i64> = ks
            .iter()
            .enumerate()
            .map(|(i, &k)| if mask >> i & 1 == 1 { -(k as i64) } else { k as i64 })
            .collect();
        if key.iter().find(|&&k| k != 0).is_some_and(|&k| k < 0) {
            key.iter_mut().for_each(|k| *k = -*k);
        }
        *acc.entry(key).or_insert(0.0) += scale;
    }
}

fn atoms_from(d: usize, acc: BTreeMap<Vec<i64>, f64>) -> Result<BarronFunction> {
    let atoms = acc
        .into_iter()
        .filter(|(_, c)| c.abs() > 1e-15)
        .map(|(k, c)| Atom {
            amplitude: c,
            freq: k.iter().map(|&k| PI * k as f64).collect(),
            phase: 0.0,
        })
        .collect();
    BarronFunction::new(d, atoms)
}

/// Random sum of one to three products `c Π_i cos(π k_i x_i)`, with
/// `c ~ U[-1, 1]` and `k_i ≤ max_wavenumber`.
pub fn make_problem(d: usize, max_wavenumber: usize, seed: u64) -> Result<ManufacturedProblem> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let mut rng = crate::seeded_rng(seed);
    let terms = rng.random_range(1..=3);
    let mut acc = BTreeMap::new();
    for _ in 0..terms {
        let coef = rng.random_range(-1.0..=1.0);
        let ks: Vec<usize> = (0..d).map(|_| rng.random_range(0..=max_wavenumber)).collect();
        add_product(&mut acc, coef, &ks);
    }
    ManufacturedProblem::new(atoms_from(d, acc)?)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub log_prefactor: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_power_law(xs: &[f64], errs: &[f64]) -> Result<PowerLaw> {
    if xs.len() != errs.len() || xs.len() < 2 {
        return Err(Error::Fit(format!("need matching grids of at least 2 points, got {} and {}", xs.len(), errs.len())));
    }
    if let Some(v) = xs.iter().chain(errs).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit(format!("non-positive or non-finite value {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - log_prefactor - exponent * x).powi(2)).sum();
    Ok(PowerLaw {
        exponent,
        log_prefactor,
        residual: (ss / lx.len() as f64).sqrt(),
    })
}

/// Measured `(grid value, error)` pairs with their power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub grid: Vec<(f64, f64)>,
    pub fit: PowerLaw,
}

impl ScalingFit {
    pub fn new(grid: Vec<(f64, f64)>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::Fit(format!("scaling fit needs at least 3 grid points, got {}", grid.len())));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid.iter().copied().unzip();
        let fit = fit_power_law(&xs, &ys)?;
        Ok(Self { grid, fit })
    }

    pub fn exponent(&self) -> f64 {
        self.fit.exponent
    }
}

fn uniform_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = crate::seeded_rng(seed);
    (0..n * d).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Optimizer settings for the PDE study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSettings {
    pub epochs: usize,
    pub lr: f64,
    /// Projection bound as a multiple of `‖û‖_B`.
    pub bound_factor: f64,
    pub alpha: f64,
    /// Train `ω_k, b_k` too; otherwise they stay at their random draw.
    pub train_inner: bool,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for PdeSettings {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.1,
            bound_factor: 1.1,
            alpha: 1.0,
            train_inner: true,
            mode: ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TikCell {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// `‖φ̂^N − û‖²_{H¹}`.
    pub error_sq: f64,
    /// Sobolev identity residual of the trained net (`NaN` when `α ≠ 1`).
    pub identity_residual: f64,
    pub report: TrainReport,
}

/// Trains one SoftPlus net (`τ = √m`, projected to `bound_factor · ‖û‖_B`)
/// on `N` uniform samples of the Tikhonov energy.
pub fn tik_cell(problem: &ManufacturedProblem, m: usize, n: usize, seed: u64, s: &PdeSettings) -> Result<TikCell> {
    let d = problem.d;
    let bound = s.bound_factor * problem.barron_norm;
    let x = uniform_points(n, d, crate::mix_seed(seed, 1));
    let values = x.chunks(d).map(|p| problem.y(p)).collect();
    let data = TrainData::valued(x, d, values)?;
    let mut net = TwoLayerNet::init(m, d, bound, Activation::Softplus((m as f64).sqrt()), crate::mix_seed(seed, 2));
    let spec = LossSpec::new(DataTerm::Quadratic, RegKind::Tik, s.alpha);
    let cfg = TrainConfig {
        epochs: s.epochs,
        batch_size: None,
        lr: s.lr,
        weight_decay: 0.0,
        seed,
        project_to: Some(bound),
        trainable: (!s.train_inner).then(|| net.outer_mask()),
        mode: s.mode,
    };
    let report = train(&mut net, &data, &spec, &cfg)?;
    let rule = QuadratureRule::default_for(d)?;
    let error_sq = h1_norm_sq(&net, &problem.u_hat, &rule);
    let identity_residual = if s.alpha == 1.0 {
        sobolev_identity_residual(&net, &problem.u_hat, |x| problem.y(x), &rule)?
    } else {
        f64::NAN
    };
    Ok(TikCell {
        m,
        n,
        seed,
        error_sq,
        identity_residual,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TikScaling {
    pub cells: Vec<TikCell>,
    /// Median error² against `N` at the largest `m`.
    pub vs_n: ScalingFit,
    /// Median error² against `m` at the largest `N`.
    pub vs_m: ScalingFit,
}

pub fn run_tik_scaling(
    problem: &ManufacturedProblem,
    m_grid: &[usize],
    n_grid: &[usize],
    seeds: &[u64],
    s: &PdeSettings,
) -> Result<TikScaling> {
    if m_grid.len() < 3 || n_grid.len() < 3 || seeds.is_empty() {
        return Err(Error::Precondition("grids need at least 3 points and one seed".into()));
    }
    let m_max = *m_grid.iter().max().unwrap();
    let n_max = *n_grid.iter().max().unwrap();
    let mut grid: Vec<(usize, usize)> = n_grid.iter().map(|&n| (m_max, n)).collect();
    grid.extend(m_grid.iter().filter(|&&m| m != m_max).map(|&m| (m, n_max)));
    let jobs: Vec<(usize, usize, u64)> = grid
        .iter()
        .flat_map(|&(m, n)| seeds.iter().map(move |&sd| (m, n, sd)))
        .collect();
    let inner = PdeSettings {
        mode: ExecMode::Sequential,
        ..*s
    };
    let cells = par::map(s.mode, &jobs, |&(m, n, sd)| tik_cell(problem, m, n, sd, &inner))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let med = |m: usize, n: usize| {
        let v: Vec<f64> = cells.iter().filter(|c| c.m == m && c.n == n).map(|c| c.error_sq).collect();
        median(&v)
    };
    let vs_n = ScalingFit::new(n_grid.iter().map(|&n| (n as f64, med(m_max, n))).collect())?;
    let vs_m = ScalingFit::new(m_grid.iter().map(|&m| (m as f64, med(m, n_max))).collect())?;
    Ok(TikScaling { cells, vs_n, vs_m })
}

/// Discrete ROF minimizer with its primal-dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RofSolution {
    pub u: Vec<f64>,
    /// `Σ (u_i² − 2 u_i y_i) h + α Σ |u_{i+1} − u_i|`.
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub const ORACLE_GAP: f64 = 1e-8;
const ORACLE_MAX_ITERS: usize = 2_000_000;

/// Minimizes `Σ (u_i² − 2 u_i y_i) h + Σ |u_{i+1} − u_i|`.
pub fn rof_oracle_1d(y: &[f64], h: f64) -> Result<RofSolution> {
    rof_oracle_weighted(y, h, 1.0)
}

fn rof_primal(u: &[f64], y: &[f64], h: f64, alpha: f64) -> f64 {
    let data: f64 = u.iter().zip(y).map(|(u, y)| u * u - 2.0 * u * y).sum::<f64>() * h;
    let tv: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    data + alpha * tv
}

// (Dᵀp)_i = p_{i-1} − p_i with p_{-1} = p_{n-1} = 0.
fn div_t(p: &[f64], out: &mut [f64]) {
    let n = out.len();
    for i in 0..n {
        let left = if i > 0 { p[i - 1] } else { 0.0 };
        let right = if i + 1 < n { p[i] } else { 0.0 };
        out[i] = left - right;
    }
}

/// Primal-dual scheme on `min_u G(u) + α‖Du‖₁`, `G` being the data term.
/// The dual `max_{|p| ≤ α} −Σ (2h y_i − (Dᵀp)_i)² / (4h)` is solved by
/// accelerated projected gradient with adaptive restart; each dual iterate
/// gives the primal point `y − Dᵀp / (2h)`, and the loop stops on the
/// duality gap.
pub fn rof_oracle_weighted(y: &[f64], h: f64, alpha: f64) -> Result<RofSolution> {
    let n = y.len();
    if n < 2 || !(h > 0.0) || !(alpha >= 0.0) {
        return Err(Error::Precondition("ROF oracle needs at least 2 samples, h > 0, α ≥ 0".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { op: "rof_oracle_1d" });
    }
    // ‖DDᵀ‖ < 4, so 1/L = 2h/4.
    let step = h / 2.0;
    let mut p = vec![0.0; n - 1];
    let mut p_next = vec![0.0; n - 1];
    let mut q = p.clone();
    let mut t = 1.0f64;
    let mut dtp = vec![0.0; n];
    let mut u = vec![0.0; n];
    let primal_of = |p: &[f64], dtp: &mut [f64], u: &mut [f64]| {
        div_t(p, dtp);
        for i in 0..n {
            u[i] = y[i] - dtp[i] / (2.0 * h);
        }
    };
    let mut best_gap = f64::INFINITY;
    for it in 1..=ORACLE_MAX_ITERS {
        primal_of(&q, &mut dtp, &mut u);
        for i in 0..n - 1 {
            p_next[i] = (q[i] + step * (u[i + 1] - u[i])).clamp(-alpha, alpha);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart: f64 = (0..n - 1).map(|i| (q[i] - p_next[i]) * (p_next[i] - p[i])).sum();
        if restart > 0.0 {
            t = 1.0;
            q.copy_from_slice(&p_next);
        } else {
            let beta = (t - 1.0) / t_next;
            for i in 0..n - 1 {
                q[i] = p_next[i] + beta * (p_next[i] - p[i]);
            }
            t = t_next;
        }
        std::mem::swap(&mut p, &mut p_next);
        if it % 25 == 0 {
            primal_of(&p, &mut dtp, &mut u);
            let dual = -y.iter().zip(&dtp).map(|(y, d)| (2.0 * h * y - d).powi(2)).sum::<f64>() / (4.0 * h);
            let objective = rof_primal(&u, y, h, alpha);
            let gap = (objective - dual).max(0.0);
            best_gap = best_gap.min(gap);
            if gap <= ORACLE_GAP {
                return Ok(RofSolution {
                    u,
                    objective,
                    gap,
                    iterations: it,
                });
            }
        }
    }
    Err(Error::Oracle {
        gap: best_gap,
        iterations: ORACLE_MAX_ITERS,
    })
}

/// Data for the 1D TV study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "param")]
pub enum TvData {
    Constant(f64),
    /// `A cos(πx)`.
    Cosine(f64),
    /// `A tanh(s x)`, a smooth step of height `2A`.
    Ramp(f64, f64),
    /// `−1` on `x < 0`, `1` on `x ≥ 0`.
    Step,
}

impl TvData {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TvData::Constant(c) => c,
            TvData::Cosine(amp) => amp * (PI * x).cos(),
            TvData::Ramp(amp, s) => amp * (s * x).tanh(),
            TvData::Step => {
                if x < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            TvData::Constant(c) => format!("constant({c})"),
            TvData::Cosine(amp) => format!("cosine({amp})"),
            TvData::Ramp(amp, s) => format!("ramp({amp};{s})"),
            TvData::Step => "step".into(),
        }
    }
}

/// Oracle optimum of the continuum TV problem by grid refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    /// `(grid size, objective, duality gap)` for each level.
    pub levels: Vec<(usize, f64, f64)>,
    /// Extrapolated continuum optimum.
    pub optimum: f64,
    /// Size of the last refinement step, a bound on the discretization error.
    pub tolerance: f64,
}

pub const REFINEMENT: [usize; 3] = [256, 512, 1024];

pub fn refined_oracle(data: TvData, alpha: f64) -> Result<OracleEstimate> {
    let mut levels = Vec::new();
    for &n in &REFINEMENT {
        let h = 2.0 / n as f64;
        let y: Vec<f64> = (0..n).map(|i| data.eval(-1.0 + (i as f64 + 0.5) * h)).collect();
        let sol = rof_oracle_weighted(&y, h, alpha)?;
        levels.push((n, sol.objective, sol.gap));
    }
    let (o1, o2, o3) = (levels[0].1, levels[1].1, levels[2].1);
    let (d1, d2) = (o2 - o1, o3 - o2);
    // Richardson step with the observed order when the differences contract.
    let optimum = if d2 != 0.0 && d1 / d2 > 1.0 {
        o3 + d2 / (d1 / d2 - 1.0)
    } else {
        o3
    };
    Ok(OracleEstimate {
        levels,
        optimum,
        tolerance: d2.abs().max((optimum - o3).abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvSettings {
    pub epochs: usize,
    pub lr: f64,
    pub bound: f64,
    pub alpha: f64,
    /// Gauss–Legendre nodes for the continuum objective.
    pub eval_nodes: usize,
    /// Train `ω_k, b_k` too; otherwise they stay at their random draw.
    pub train_inner: bool,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for TvSettings {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 0.5,
            bound: 16.0,
            alpha: 1.0,
            eval_nodes: 512,
            train_inner: false,
            mode: ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvCell {
    pub seed: u64,
    /// `∫ (u² − 2uy) + α|u'|` over `[-1, 1]`.
    pub objective: f64,
    /// `∫ |u'|` of the trained net.
    pub total_variation: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub data: TvData,
    pub m: usize,
    pub n: usize,
    pub oracle: OracleEstimate,
    pub cells: Vec<TvCell>,
    pub median_objective: f64,
    /// `(median objective − optimum) / |optimum|`.
    pub relative_gap: f64,
}

/// Continuum TV objective of a 1D field against `data`.
pub fn tv_objective(u: &dyn Field, data: TvData, alpha: f64, nodes: usize) -> Result<(f64, f64)> {
    let rule = QuadratureRule::build(1, RuleKind::GaussLegendreTensor, nodes, 0)?;
    let parts = par::chunked_sum(ExecMode::Parallel, rule.len(), 2, |i, acc| {
        let x = rule.node(i);
        let mut g = [0.0];
        let v = u.value_grad(x, &mut g);
        let w = rule.weights()[i];
        acc[0] += w * (v * v - 2.0 * v * data.eval(x[0]));
        acc[1] += w * g[0].abs();
    });
    let (data_part, tv) = (parts[0], parts[1]);
    Ok((data_part + alpha * tv, tv))
}

pub fn tv_cell(data: TvData, m: usize, n: usize, seed: u64, s: &TvSettings) -> Result<TvCell> {
    let x = uniform_points(n, 1, crate::mix_seed(seed, 1));
    let values = x.iter().map(|&p| data.eval(p)).collect();
    let train_data = TrainData::valued(x, 1, values)?;
    let mut net = TwoLayerNet::init(m, 1, s.bound, Activation::Softplus((m as f64).sqrt()), crate::mix_seed(seed, 2));
    let spec = LossSpec::new(DataTerm::Quadratic, RegKind::Tv, s.alpha);
    let cfg = TrainConfig {
        epochs: s.epochs,
        batch_size: None,
        lr: s.lr,
        weight_decay: 0.0,
        seed,
        project_to: Some(s.bound),
        trainable: (!s.train_inner).then(|| net.outer_mask()),
        mode: s.mode,
    };
    let report = train(&mut net, &train_data, &spec, &cfg)?;
    let (objective, total_variation) = tv_objective(&net, data, s.alpha, s.eval_nodes)?;
    Ok(TvCell {
        seed,
        objective,
        total_variation,
        report,
    })
}

pub fn run_tv_experiment(data: TvData, m: usize, n: usize, seeds: &[u64], s: &TvSettings) -> Result<TvReport> {
    if seeds.is_empty() {
        return Err(Error::Precondition("at least one seed is required".into()));
    }
    let oracle = refined_oracle(data, s.alpha)?;
    let inner = TvSettings {
        mode: ExecMode::Sequential,
        ..*s
    };
    let cells = par::map(s.mode, seeds, |&sd| tv_cell(data, m, n, sd, &inner))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let objs: Vec<f64> = cells.iter().map(|c| c.objective).collect();
    let median_objective = median(&objs);
    Ok(TvReport {
        data,
        m,
        n,
        relative_gap: (median_objective - oracle.optimum) / oracle.optimum.abs(),
        oracle,
        cells,
        median_objective,
    })
}

/// `max_φ |L_N(φ) − L(φ)|` over `nets`, with `L_N` from `sample` and `L`
/// from `reference`.
pub fn ensemble_gap<Y>(
    nets: &[TwoLayerNet],
    y: Y,
    functional: Functional,
    sample: &QuadratureRule,
    reference: &QuadratureRule,
) -> f64
where
    Y: Fn(&[f64]) -> f64 + Sync + Send,
{
    nets.iter()
        .map(|net| (expected_loss(net, &y, functional, sample) - expected_loss(net, &y, functional, reference)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSettings {
    pub bound: f64,
    pub ensemble: usize,
    pub functional: Functional,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for GapSettings {
    fn default() -> Self {
        Self {
            bound: 1.0,
            ensemble: 32,
            functional: Functional::Tik,
            mode: ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    /// `gaps[i][s]`: gap at the `i`-th `N` for the `s`-th seed.
    pub gaps: Vec<Vec<f64>>,
    /// Seed-mean gap against `N`.
    pub fit: ScalingFit,
}

/// Quadrature gap of the empirical (uniform Monte Carlo) loss against a
/// Gauss–Legendre reference, both under the uniform probability measure,
/// for ensembles of random class members with data from `problem`. Each
/// seed draws one sample stream; `L_N` uses its first `N` points.
pub fn quadrature_gap(
    problem: &ManufacturedProblem,
    m: usize,
    n_grid: &[usize],
    seeds: &[u64],
    s: &GapSettings,
) -> Result<GapStudy> {
    if s.ensemble < 32 {
        return Err(Error::Precondition(format!("ensemble must hold at least 32 nets, got {}", s.ensemble)));
    }
    if seeds.is_empty() {
        return Err(Error::Precondition("at least one seed is required".into()));
    }
    let d = problem.d;
    let res = if d == 1 { 256 } else { crate::quadrature::default_resolution(d) };
    let kind = if d <= 3 { RuleKind::GaussLegendreTensor } else { RuleKind::SobolQmc };
    let reference = QuadratureRule::build(d, kind, res, 0)?.with_measure(Measure::UniformProbability);
    let y = |x: &[f64]| problem.y(x);
    let per_seed = par::map(s.mode, seeds, |&seed| -> Result<Vec<f64>> {
        let nets: Vec<TwoLayerNet> = (0..s.ensemble)
            .map(|j| {
                TwoLayerNet::sample_in_class(
                    m,
                    d,
                    s.bound,
                    Activation::Softplus((m as f64).sqrt()),
                    crate::mix_seed(seed, j as u64),
                )
            })
            .collect();
        let n_max = n_grid.iter().copied().max().unwrap_or(0);
        let stream = QuadratureRule::build(d, RuleKind::UniformMc, n_max, crate::mix_seed(seed, 1 << 40))?
            .with_measure(Measure::UniformProbability);
        n_grid
            .iter()
            .map(|&n| Ok(ensemble_gap(&nets, y, s.functional, &stream.prefix(n)?, &reference)))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<Vec<f64>> = (0..n_grid.len()).map(|i| per_seed.iter().map(|g| g[i]).collect()).collect();
    let fit = ScalingFit::new(n_grid.iter().zip(&gaps).map(|(&n, g)| (n as f64, mean(g))).collect())?;
    Ok(GapStudy { gaps, fit })
}

/// Mean over `n_sigma` Rademacher draws of `max_f |(1/N) Σ_i σ_i f(x_i)|`,
/// for the `n_funcs × N` row-major matrix `values`.
pub fn empirical_rademacher(values: &[f64], n_funcs: usize, n_sigma: usize, seed: u64) -> Result<f64> {
    if n_funcs == 0 || values.is_empty() || values.len() % n_funcs != 0 {
        return Err(Error::Domain(format!("{} values do not form {n_funcs} rows", values.len())));
    }
    if n_sigma == 0 {
        return Err(Error::Precondition("need at least one sign draw".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { op: "empirical_rademacher" });
    }
    let n = values.len() / n_funcs;
    let draws = par::map_range(ExecMode::Parallel, n_sigma, |t| {
        let mut rng = crate::seeded_rng(crate::mix_seed(seed, t as u64));
        let sigma: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        values
            .chunks(n)
            .map(|row| (row.iter().zip(&sigma).map(|(f, s)| f * s).sum::<f64>() / n as f64).abs())
            .fold(0.0, f64::max)
    });
    Ok(draws.iter().sum::<f64>() / n_sigma as f64)
}

/// Empirical Rademacher estimate for an ensemble of random class members
/// at uniform points, against `N`.
pub fn rademacher_study(
    m: usize,
    d: usize,
    bound: f64,
    ensemble: usize,
    n_grid: &[usize],
    n_sigma: usize,
    seed: u64,
) -> Result<ScalingFit> {
    let nets: Vec<TwoLayerNet> = (0..ensemble)
        .map(|j| TwoLayerNet::sample_in_class(m, d, bound, Activation::Softplus((m as f64).sqrt()), crate::mix_seed(seed, j as u64)))
        .collect();
    let mut grid = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let x = uniform_points(n, d, crate::mix_seed(seed, 1 << 40 | n as u64));
        let values: Vec<f64> = nets.iter().flat_map(|net| x.chunks(d).map(|p| net.value(p))).collect();
        grid.push((n as f64, empirical_rademacher(&values, ensemble, n_sigma, crate::mix_seed(seed, n as u64))?));
    }
    ScalingFit::new(grid)
}
