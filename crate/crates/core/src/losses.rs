//! Empirical losses: data terms, gradient penalties (TV, Tikhonov), graph
//! penalties, adversarial training and logit pairing.
//!
//! Every loss exists twice. The `record_*` functions build it on an autodiff
//! tape with parameters as variables; [`loss_and_grad`] evaluates the same
//! value with the analytic passes of [`Model`]. The tape version is the
//! reference the analytic one is tested against.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackConfig};
use crate::autodiff::{input_gradient, Tape, TapeModel, Var};
use crate::error::{Error, Result};
use crate::nets::Model;
use crate::par::{self, ExecMode};

/// Default smoothing of `|v|` as `√(|v|² + ε²)`.
pub const TV_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataTerm {
    /// `−log softmax(φ)[y]`.
    Nll,
    /// `u² − 2uy` for a scalar output `u`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    None,
    Tv,
    Tik,
    Gtv,
    Gtik,
    L2,
    At,
    Alp,
}

impl RegKind {
    pub const ALL: [RegKind; 8] = [
        RegKind::None,
        RegKind::Tv,
        RegKind::Tik,
        RegKind::Gtv,
        RegKind::Gtik,
        RegKind::L2,
        RegKind::At,
        RegKind::Alp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegKind::None => "baseline",
            RegKind::Tv => "tv",
            RegKind::Tik => "tik",
            RegKind::Gtv => "gtv",
            RegKind::Gtik => "gtik",
            RegKind::L2 => "l2",
            RegKind::At => "at",
            RegKind::Alp => "alp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }

    pub fn needs_attack(self) -> bool {
        matches!(self, RegKind::At | RegKind::Alp)
    }

    pub fn is_graph(self) -> bool {
        matches!(self, RegKind::Gtv | RegKind::Gtik)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub data: DataTerm,
    pub reg: RegKind,
    pub alpha: f64,
    /// Present iff `reg` is AT or ALP.
    pub attack: Option<AttackConfig>,
    pub neighbors_per_sample: usize,
    pub tv_smoothing: f64,
}

impl LossSpec {
    pub fn new(data: DataTerm, reg: RegKind, alpha: f64) -> Self {
        Self {
            data,
            reg,
            alpha,
            attack: reg.needs_attack().then(AttackConfig::default),
            neighbors_per_sample: 2,
            tv_smoothing: TV_SMOOTHING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.reg.needs_attack() != self.attack.is_some() {
            return Err(Error::Config("an attack is configured iff the regularizer is AT or ALP".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub enum Target {
    Label(usize),
    Value(f64),
}

/// `N` points of dimension `d`, row-major, with their targets.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a [f64],
    pub d: usize,
    pub targets: Targets<'a>,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a [f64], d: usize, targets: Targets<'a>) -> Result<Self> {
        let n = match targets {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.len(),
        };
        if d == 0 || x.len() != n * d {
            return Err(Error::Domain(format!("batch of {n} targets has {} coordinates at d = {d}", x.len())));
        }
        Ok(Self { x, d, targets })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> Target {
        match self.targets {
            Targets::Labels(l) => Target::Label(l[i]),
            Targets::Values(v) => Target::Value(v[i]),
        }
    }

    pub fn labels(&self) -> Option<&'a [usize]> {
        match self.targets {
            Targets::Labels(l) => Some(l),
            Targets::Values(_) => None,
        }
    }
}

/// Same-class neighbor lists; every listed pair has weight 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNeighborhood {
    pub lists: Vec<Vec<usize>>,
}

impl GraphNeighborhood {
    /// Pair weight: 1 iff the labels agree.
    pub fn weight(labels: &[usize], i: usize, j: usize) -> f64 {
        if labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.lists.len() != n {
            return Err(Error::Index { index: self.lists.len(), len: n });
        }
        for l in &self.lists {
            if let Some(&j) = l.iter().find(|&&j| j >= n) {
                return Err(Error::Index { index: j, len: n });
            }
        }
        Ok(())
    }
}

/// For each sample, up to `k` other indices of the same class, drawn
/// without replacement.
pub fn build_neighborhood(labels: &[usize], k: usize, seed: u64) -> GraphNeighborhood {
    let mut rng = crate::seeded_rng(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let lists = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut peers: Vec<usize> = members[y].iter().copied().filter(|&j| j != i).collect();
            if peers.len() > k {
                let (chosen, _) = peers.partial_shuffle(&mut rng, k);
                let mut v = chosen.to_vec();
                v.sort_unstable();
                v
            } else {
                peers.shrink_to_fit();
                peers
            }
        })
        .collect();
    GraphNeighborhood { lists }
}

/// Inputs a loss needs beyond the batch: graph neighbors (GTV/GTik) and
/// adversarial points (AT/ALP), both held fixed while differentiating.
#[derive(Debug, Clone, Default)]
pub struct LossContext {
    pub neighborhood: Option<GraphNeighborhood>,
    /// Row-major, same shape as the batch.
    pub perturbed: Option<Vec<f64>>,
}

impl LossContext {
    /// Builds what `spec` needs: neighbors from `seed`, perturbations from
    /// the configured attack run against the current `model`.
    pub fn prepare<M: Model>(model: &M, batch: &Batch, spec: &LossSpec, seed: u64, mode: ExecMode) -> Result<Self> {
        let mut ctx = Self::default();
        if spec.reg.is_graph() {
            let labels = batch
                .labels()
                .ok_or_else(|| Error::Precondition("graph regularizers need class labels".into()))?;
            ctx.neighborhood = Some(build_neighborhood(labels, spec.neighbors_per_sample, seed));
        }
        if spec.reg.needs_attack() {
            let cfg = spec
                .attack
                .as_ref()
                .ok_or_else(|| Error::Config("AT/ALP need an attack".into()))?;
            ctx.perturbed = Some(attacks::perturb_batch(model, batch, spec.data, cfg, mode)?);
        }
        Ok(ctx)
    }
}

// ---------------------------------------------------------------------------
// Plain-value data terms

/// `D(scores, target)` and `∂D/∂scores`.
pub fn data_value_grad(term: DataTerm, scores: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
    match (term, target) {
        (DataTerm::Nll, Target::Label(y)) => {
            if y >= scores.len() {
                return Err(Error::Label { label: y, classes: scores.len() });
            }
            let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            let loss = z.ln() + mx - scores[y];
            let mut g: Vec<f64> = exps.iter().map(|e| e / z).collect();
            g[y] -= 1.0;
            Ok((loss, g))
        }
        (DataTerm::Quadratic, Target::Value(y)) => {
            if scores.len() != 1 {
                return Err(Error::Domain("quadratic data term needs a scalar output".into()));
            }
            let u = scores[0];
            Ok((u * u - 2.0 * u * y, vec![2.0 * u - 2.0 * y]))
        }
        _ => Err(Error::Precondition("data term does not match target kind".into())),
    }
}

#[inline]
fn smoothed_norm(sq: f64, eps: f64) -> f64 {
    (sq + eps * eps).sqrt()
}

/// `1/‖v‖`, taken as 0 where the norm vanishes (only possible when ε = 0).
#[inline]
fn inv_or_zero(norm: f64) -> f64 {
    if norm > 0.0 {
        1.0 / norm
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Tape versions

/// `−log softmax(scores)[label]` with max-subtraction.
pub fn data_nll<'t>(scores: &[Var<'t>], label: usize) -> Result<Var<'t>> {
    if label >= scores.len() {
        return Err(Error::Label { label, classes: scores.len() });
    }
    let tape = scores[0].tape();
    let mx = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<Var<'t>> = scores.iter().map(|&s| s - mx).collect();
    let exps: Vec<Var<'t>> = shifted.iter().map(|s| s.exp()).collect();
    Ok(tape.sum(&exps).ln() - shifted[label])
}

/// `u² − 2uy`.
pub fn data_quadratic<'t>(u: Var<'t>, y: f64) -> Var<'t> {
    u * u - u * (2.0 * y)
}

fn record_data<'t>(term: DataTerm, scores: &[Var<'t>], target: Target) -> Result<Var<'t>> {
    match (term, target) {
        (DataTerm::Nll, Target::Label(y)) => data_nll(scores, y),
        (DataTerm::Quadratic, Target::Value(y)) => {
            if scores.len() != 1 {
                return Err(Error::Domain("quadratic data term needs a scalar output".into()));
            }
            Ok(data_quadratic(scores[0], y))
        }
        _ => Err(Error::Precondition("data term does not match target kind".into())),
    }
}

fn record_grad_penalty<'t, M: TapeModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    xs: &[f64],
    squared: bool,
    eps: f64,
) -> Result<Var<'t>> {
    let d = model.input_dim();
    let n = xs.len() / d;
    let mut terms = Vec::new();
    for i in 0..n {
        let ig = input_gradient(tape, model, params, &xs[i * d..(i + 1) * d])?;
        for g in &ig.grads {
            let sq = tape.sum(&g.iter().map(|v| v.square()).collect::<Vec<_>>());
            terms.push(if squared { sq } else { (sq + eps * eps).sqrt() });
        }
    }
    Ok(tape.sum(&terms) / n as f64)
}

/// `(1/N) Σ_i Σ_k √(|∇_x φ_k(x_i)|² + ε²)`.
pub fn reg_tv<'t, M: TapeModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    xs: &[f64],
    eps: f64,
) -> Result<Var<'t>> {
    record_grad_penalty(tape, model, params, xs, false, eps)
}

/// `(1/N) Σ_i Σ_k |∇_x φ_k(x_i)|²`.
pub fn reg_tik<'t, M: TapeModel + ?Sized>(tape: &'t Tape, model: &M, params: &[Var<'t>], xs: &[f64]) -> Result<Var<'t>> {
    record_grad_penalty(tape, model, params, xs, true, 0.0)
}

/// `(1/N) Σ_i Σ_{j ∈ N_i} ‖φ(x_j) − φ(x_i)‖` (smoothed) or its square.
pub fn reg_graph<'t, M: TapeModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    xs: &[f64],
    neighborhood: &GraphNeighborhood,
    squared: bool,
    eps: f64,
) -> Result<Var<'t>> {
    let d = model.input_dim();
    let n = xs.len() / d;
    neighborhood.check(n)?;
    let outs: Vec<Vec<Var<'t>>> = (0..n)
        .map(|i| model.record(tape, params, &tape.vars(&xs[i * d..(i + 1) * d])))
        .collect();
    let mut terms = Vec::new();
    for (i, list) in neighborhood.lists.iter().enumerate() {
        for &j in list {
            let sq: Vec<Var<'t>> = outs[j].iter().zip(&outs[i]).map(|(&a, &b)| (a - b).square()).collect();
            let sq = tape.sum(&sq);
            terms.push(if squared { sq } else { (sq + eps * eps).sqrt() });
        }
    }
    tape.check()?;
    Ok(tape.sum(&terms) / n as f64)
}

/// The full regularized loss on a tape. Perturbed points in `ctx` enter as
/// constants.
pub fn record_loss<'t, M: TapeModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    batch: &Batch,
    spec: &LossSpec,
    ctx: &LossContext,
) -> Result<Var<'t>> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let alpha = spec.alpha;
    let mut data = Vec::with_capacity(n);
    let mut extra = Vec::new();
    for i in 0..n {
        let out = model.record(tape, params, &tape.vars(batch.point(i)));
        let d_clean = record_data(spec.data, &out, batch.target(i))?;
        match spec.reg {
            RegKind::At | RegKind::Alp => {
                let pert = perturbed_rows(ctx, batch)?;
                let adv = model.record(tape, params, &tape.vars(&pert[i * batch.d..(i + 1) * batch.d]));
                if spec.reg == RegKind::At {
                    let d_adv = record_data(spec.data, &adv, batch.target(i))?;
                    data.push(d_clean * (1.0 - alpha) + d_adv * alpha);
                } else {
                    data.push(d_clean);
                    let sq: Vec<Var<'t>> = adv.iter().zip(&out).map(|(&a, &b)| (a - b).square()).collect();
                    extra.push((tape.sum(&sq) + spec.tv_smoothing * spec.tv_smoothing).sqrt());
                }
            }
            _ => data.push(d_clean),
        }
    }
    let mut total = tape.sum(&data) / n as f64;
    match spec.reg {
        RegKind::Tv => total = total + reg_tv(tape, model, params, batch.x, spec.tv_smoothing)? * alpha,
        RegKind::Tik => total = total + reg_tik(tape, model, params, batch.x)? * alpha,
        RegKind::Gtv | RegKind::Gtik => {
            let nb = ctx
                .neighborhood
                .as_ref()
                .ok_or_else(|| Error::Precondition("graph regularizer without neighborhood".into()))?;
            let g = reg_graph(tape, model, params, batch.x, nb, spec.reg == RegKind::Gtik, spec.tv_smoothing)?;
            total = total + g * alpha;
        }
        RegKind::Alp => total = total + tape.sum(&extra) * (alpha / n as f64),
        RegKind::None | RegKind::L2 | RegKind::At => {}
    }
    tape.check()?;
    Ok(total)
}

/// Adversarial-training loss: perturbations from the configured attack,
/// then `(1/N) Σ (1−α) D(φ(x_i)) + α D(φ(x_i + δ_i))`.
pub fn loss_at<'t, M: Model>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    batch: &Batch,
    spec: &LossSpec,
) -> Result<Var<'t>> {
    if spec.reg != RegKind::At {
        return Err(Error::Precondition("loss_at needs reg = AT".into()));
    }
    let ctx = LossContext::prepare(model, batch, spec, 0, ExecMode::Sequential)?;
    record_loss(tape, model, params, batch, spec, &ctx)
}

/// Logit-pairing loss `(1/N) Σ D(φ(x_i)) + α ‖φ(x_i + δ_i) − φ(x_i)‖`.
pub fn loss_alp<'t, M: Model>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    batch: &Batch,
    spec: &LossSpec,
) -> Result<Var<'t>> {
    if spec.reg != RegKind::Alp {
        return Err(Error::Precondition("loss_alp needs reg = ALP".into()));
    }
    let ctx = LossContext::prepare(model, batch, spec, 0, ExecMode::Sequential)?;
    record_loss(tape, model, params, batch, spec, &ctx)
}

fn perturbed_rows<'c>(ctx: &'c LossContext, batch: &Batch) -> Result<&'c [f64]> {
    let p = ctx
        .perturbed
        .as_deref()
        .ok_or_else(|| Error::Precondition("AT/ALP loss without perturbed points".into()))?;
    if p.len() != batch.x.len() {
        return Err(Error::Domain("perturbed batch has the wrong shape".into()));
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Analytic version

/// Loss value and parameter gradient by the analytic passes of `model`.
/// Agrees with [`record_loss`] up to roundoff.
pub fn loss_and_grad<M: Model>(
    model: &M,
    batch: &Batch,
    spec: &LossSpec,
    ctx: &LossContext,
    mode: ExecMode,
) -> Result<(f64, Vec<f64>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let p = model.num_params();
    let alpha = spec.alpha;
    let eps = spec.tv_smoothing;
    let pert = if spec.reg.needs_attack() { Some(perturbed_rows(ctx, batch)?) } else { None };
    let nb = if spec.reg.is_graph() {
        let nb = ctx
            .neighborhood
            .as_ref()
            .ok_or_else(|| Error::Precondition("graph regularizer without neighborhood".into()))?;
        nb.check(n)?;
        Some(nb)
    } else {
        None
    };
    // Validate targets up front so the parallel body cannot fail.
    let need_jac = matches!(spec.reg, RegKind::Tv | RegKind::Tik);
    let (outs, jacs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = par::map_range(mode, n, |i| {
        if need_jac {
            model.forward_jacobian(batch.point(i))
        } else {
            (model.forward(batch.point(i)), Vec::new())
        }
    })
    .into_iter()
    .unzip();
    for (i, o) in outs.iter().enumerate() {
        data_value_grad(spec.data, o, batch.target(i))?;
    }
    let d = batch.d;
    let acc = par::chunked_sum(mode, n, p + 1, |i, acc| {
        let x = batch.point(i);
        let (loss_slot, grad) = acc.split_first_mut().expect("width >= 1");
        let (dv, mut up) = data_value_grad(spec.data, &outs[i], batch.target(i)).expect("validated");
        match spec.reg {
            RegKind::At => {
                let xa = &pert.expect("checked")[i * d..(i + 1) * d];
                let oa = model.forward(xa);
                let (av, mut aup) = data_value_grad(spec.data, &oa, batch.target(i)).expect("validated");
                *loss_slot += (1.0 - alpha) * dv + alpha * av;
                up.iter_mut().for_each(|u| *u *= 1.0 - alpha);
                aup.iter_mut().for_each(|u| *u *= alpha);
                model.backward(x, &up, grad);
                model.backward(xa, &aup, grad);
            }
            RegKind::Alp => {
                let xa = &pert.expect("checked")[i * d..(i + 1) * d];
                let oa = model.forward(xa);
                let diff: Vec<f64> = oa.iter().zip(&outs[i]).map(|(a, b)| a - b).collect();
                let norm = smoothed_norm(diff.iter().map(|t| t * t).sum(), eps);
                *loss_slot += dv + alpha * norm;
                let pair: Vec<f64> = diff.iter().map(|t| alpha * t * inv_or_zero(norm)).collect();
                model.backward(xa, &pair, grad);
                for (u, q) in up.iter_mut().zip(&pair) {
                    *u -= q;
                }
                model.backward(x, &up, grad);
            }
            RegKind::Tv | RegKind::Tik => *loss_slot += dv,
            _ => {
                *loss_slot += dv;
                model.backward(x, &up, grad);
            }
        }
        match spec.reg {
            RegKind::Tv | RegKind::Tik => {
                let jac = &jacs[i];
                let mut g = vec![0.0; jac.len()];
                for (k, row) in jac.chunks(d).enumerate() {
                    let sq: f64 = row.iter().map(|t| t * t).sum();
                    let (val, coef) = if spec.reg == RegKind::Tik {
                        (sq, 2.0 * alpha)
                    } else {
                        let nrm = smoothed_norm(sq, eps);
                        (nrm, alpha * inv_or_zero(nrm))
                    };
                    *loss_slot += alpha * val;
                    for (gk, r) in g[k * d..(k + 1) * d].iter_mut().zip(row) {
                        *gk = coef * r;
                    }
                }
                model.backward_with_jacobian(x, &up, &g, grad);
            }
            RegKind::Gtv | RegKind::Gtik => {
                for &j in &nb.expect("checked").lists[i] {
                    let diff: Vec<f64> = outs[j].iter().zip(&outs[i]).map(|(a, b)| a - b).collect();
                    let sq: f64 = diff.iter().map(|t| t * t).sum();
                    let (val, coef) = if spec.reg == RegKind::Gtik {
                        (sq, 2.0 * alpha)
                    } else {
                        let nrm = smoothed_norm(sq, eps);
                        (nrm, alpha * inv_or_zero(nrm))
                    };
                    *loss_slot += alpha * val;
                    let up: Vec<f64> = diff.iter().map(|t| coef * t).collect();
                    model.backward(batch.point(j), &up, grad);
                    let neg: Vec<f64> = up.iter().map(|t| -t).collect();
                    model.backward(x, &neg, grad);
                }
            }
            _ => {}
        }
    });
    let inv = 1.0 / n as f64;
    let loss = acc[0] * inv;
    let grad: Vec<f64> = acc[1..].iter().map(|g| g * inv).collect();
    if !loss.is_finite() {
        return Err(Error::NonFiniteValue { op: "loss" });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteValue { op: "gradient" });
    }
    Ok((loss, grad))
}

/// Loss value only.
pub fn loss_value<M: Model>(model: &M, batch: &Batch, spec: &LossSpec, ctx: &LossContext, mode: ExecMode) -> Result<f64> {
    loss_and_grad(model, batch, spec, ctx, mode).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{func, Tape};
    use crate::nets::{Activation, Mlp, TwoLayerNet};

    fn tape_loss_grad<M: Model>(model: &M, batch: &Batch, spec: &LossSpec, ctx: &LossContext) -> (f64, Vec<f64>) {
        let tape = Tape::new();
        let params = tape.vars(&model.params());
        let l = record_loss(&tape, model, &params, batch, spec, ctx).unwrap();
        let g = tape.gradient(l, &params).unwrap();
        (l.value(), g)
    }

    #[test]
    fn nll_examples() {
        let tape = Tape::new();
        let s = tape.vars(&[0.3, 0.3, 0.3]);
        assert!((data_nll(&s, 1).unwrap().value() - 3f64.ln()).abs() < 1e-15);
        let s = tape.vars(&[2.0, 0.0]);
        assert!((data_nll(&s, 0).unwrap().value() - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);
        assert!((data_nll(&s, 0).unwrap().value() - 0.1269).abs() < 1e-4);
        let s = tape.vars(&[20.0, 0.0]);
        assert!(data_nll(&s, 0).unwrap().value() <= 1e-8);
        assert!(matches!(data_nll(&s, 2), Err(Error::Label { label: 2, classes: 2 })));
    }

    #[test]
    fn quadratic_examples() {
        let tape = Tape::new();
        let u = tape.var(1.5);
        assert_eq!(data_quadratic(u, 1.5).value(), -2.25);
        assert_eq!(data_quadratic(tape.var(0.0), 3.0).value(), 0.0);
    }

    /// Linear scalar net `φ(x) = 3x₁ + 4x₂` as a one-unit ReLU net kept on
    /// the active side.
    fn three_four() -> TwoLayerNet {
        // φ = c + a·ReLU(ω·x + b), ω = (3/7, 4/7), a = 7, b = 1 keeps z > 0 on Ω
        TwoLayerNet::from_parts(-7.0, vec![7.0], vec![3.0 / 7.0, 4.0 / 7.0], vec![1.0], Activation::Relu, 10.0).unwrap()
    }

    #[test]
    fn gradient_penalties_on_three_four() {
        let net = three_four();
        let tape = Tape::new();
        let p = tape.vars(&net.params());
        let tv = reg_tv(&tape, &net, &p, &[0.1, 0.2], TV_SMOOTHING).unwrap().value();
        assert!((tv - 5.0).abs() < 1e-12);
        let tik = reg_tik(&tape, &net, &p, &[0.1, 0.2]).unwrap().value();
        assert!((tik - 25.0).abs() < 1e-12);
        let flat = TwoLayerNet::from_parts(0.5, vec![0.0], vec![1.0, 0.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        let p = tape.vars(&flat.params());
        assert!(reg_tik(&tape, &flat, &p, &[0.1, 0.2, 0.3, 0.4]).unwrap().value() == 0.0);
        let tv = reg_tv(&tape, &flat, &p, &[0.1, 0.2, 0.3, 0.4], TV_SMOOTHING).unwrap().value();
        assert!(tv <= 2e-8);
    }

    #[test]
    fn graph_penalty_examples() {
        // scalar outputs 0.2 and 0.6
        let net = |c: f64| TwoLayerNet::from_parts(c, vec![0.0], vec![1.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        let tape = Tape::new();
        let n0 = net(0.2);
        let p = tape.vars(&n0.params());
        let nb = GraphNeighborhood { lists: vec![vec![1], vec![0]] };
        let v = reg_graph(&tape, &n0, &p, &[0.0, 0.5], &nb, true, 0.0).unwrap().value();
        assert_eq!(v, 0.0);
        let bad = GraphNeighborhood { lists: vec![vec![5], vec![]] };
        assert!(matches!(
            reg_graph(&tape, &n0, &p, &[0.0, 0.5], &bad, true, 0.0),
            Err(Error::Index { index: 5, len: 2 })
        ));
        // A ramp giving 0.2 at x=0 and 0.6 at x=0.4
        let ramp = TwoLayerNet::from_parts(0.2, vec![1.0], vec![1.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        let p = tape.vars(&ramp.params());
        let v = reg_graph(&tape, &ramp, &p, &[0.0, 0.4], &nb, true, 0.0).unwrap().value();
        // two ordered pairs of 0.16, averaged over N = 2
        assert!((v - 0.16).abs() < 1e-12);
    }

    #[test]
    fn neighborhoods_are_same_class() {
        let labels = [0, 1, 0, 0, 2, 1, 0];
        let nb = build_neighborhood(&labels, 2, 3);
        for (i, l) in nb.lists.iter().enumerate() {
            assert!(l.len() <= 2);
            for &j in l {
                assert_ne!(i, j);
                assert_eq!(GraphNeighborhood::weight(&labels, i, j), 1.0);
            }
        }
        assert!(nb.lists[4].is_empty());
        assert_eq!(nb.lists[1], vec![5]);
        assert_eq!(build_neighborhood(&labels, 2, 3), nb);
        let all = build_neighborhood(&labels, 10, 0);
        assert_eq!(all.lists[0], vec![2, 3, 6]);
    }

    fn mlp_fixture() -> (Mlp, Vec<f64>, Vec<usize>) {
        let mlp = Mlp::new(&[3, 5, 4, 3], 11);
        let x = vec![0.2, 0.7, 0.1, 0.9, 0.3, 0.5, 0.4, 0.6, 0.8, 0.05, 0.95, 0.5];
        (mlp, x, vec![0, 2, 1, 2])
    }

    #[test]
    fn analytic_matches_tape_for_every_regularizer_on_mlp() {
        let (mlp, x, y) = mlp_fixture();
        let batch = Batch::new(&x, 3, Targets::Labels(&y)).unwrap();
        for reg in RegKind::ALL {
            let mut spec = LossSpec::new(DataTerm::Nll, reg, 0.3);
            if let Some(a) = spec.attack.as_mut() {
                a.iterations = 3;
            }
            let ctx = LossContext::prepare(&mlp, &batch, &spec, 5, ExecMode::Sequential).unwrap();
            let (la, ga) = loss_and_grad(&mlp, &batch, &spec, &ctx, ExecMode::Parallel).unwrap();
            let (lt, gt) = tape_loss_grad(&mlp, &batch, &spec, &ctx);
            assert!((la - lt).abs() < 1e-12, "{reg:?}: {la} vs {lt}");
            for (a, t) in ga.iter().zip(&gt) {
                assert!((a - t).abs() < 1e-10 * (1.0 + t.abs()), "{reg:?}: {a} vs {t}");
            }
        }
    }

    #[test]
    fn analytic_matches_tape_on_two_layer_quadratic() {
        let net = TwoLayerNet::init(6, 2, 2.0, Activation::Softplus(3.0), 4);
        let x = [0.1, -0.4, 0.8, 0.3, -0.9, 0.6];
        let y = [0.5, -1.0, 2.0];
        let batch = Batch::new(&x, 2, Targets::Values(&y)).unwrap();
        for reg in [RegKind::None, RegKind::Tv, RegKind::Tik] {
            let spec = LossSpec::new(DataTerm::Quadratic, reg, 1.0);
            let ctx = LossContext::default();
            let (la, ga) = loss_and_grad(&net, &batch, &spec, &ctx, ExecMode::Sequential).unwrap();
            let (lt, gt) = tape_loss_grad(&net, &batch, &spec, &ctx);
            assert!((la - lt).abs() < 1e-12);
            for (a, t) in ga.iter().zip(&gt) {
                assert!((a - t).abs() < 1e-10 * (1.0 + t.abs()));
            }
        }
    }

    #[test]
    fn alpha_zero_is_baseline() {
        let (mlp, x, y) = mlp_fixture();
        let batch = Batch::new(&x, 3, Targets::Labels(&y)).unwrap();
        let base = LossSpec::new(DataTerm::Nll, RegKind::None, 0.0);
        let l0 = loss_value(&mlp, &batch, &base, &LossContext::default(), ExecMode::Sequential).unwrap();
        for reg in RegKind::ALL {
            let spec = LossSpec::new(DataTerm::Nll, reg, 0.0);
            let ctx = LossContext::prepare(&mlp, &batch, &spec, 1, ExecMode::Sequential).unwrap();
            let l = loss_value(&mlp, &batch, &spec, &ctx, ExecMode::Sequential).unwrap();
            assert!((l - l0).abs() <= 1e-15, "{reg:?}");
        }
    }

    #[test]
    fn at_with_zero_budget_is_plain_loss() {
        let (mlp, x, y) = mlp_fixture();
        let batch = Batch::new(&x, 3, Targets::Labels(&y)).unwrap();
        let base = LossSpec::new(DataTerm::Nll, RegKind::None, 0.0);
        let l0 = loss_value(&mlp, &batch, &base, &LossContext::default(), ExecMode::Sequential).unwrap();
        for alpha in [0.0, 0.4, 1.0] {
            let mut spec = LossSpec::new(DataTerm::Nll, RegKind::At, alpha);
            spec.attack.as_mut().unwrap().bound = 0.0;
            let tape = Tape::new();
            let p = tape.vars(&mlp.params());
            let l = loss_at(&tape, &mlp, &p, &batch, &spec).unwrap().value();
            assert!((l - l0).abs() < 1e-12);
        }
    }

    #[test]
    fn alp_pairing_of_scalar_outputs() {
        let net = TwoLayerNet::from_parts(1.0, vec![0.0], vec![1.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        let moved = TwoLayerNet::from_parts(1.0, vec![1.0], vec![1.0], vec![0.0], Activation::Relu, 1.0).unwrap();
        // outputs 1.0 at x = 0 and 1.3 at x = 0.3
        let x = [0.0];
        let y = [0.0];
        let batch = Batch::new(&x, 1, Targets::Values(&y)).unwrap();
        let mut spec = LossSpec::new(DataTerm::Quadratic, RegKind::Alp, 1.0);
        spec.tv_smoothing = 0.0;
        let ctx = LossContext { neighborhood: None, perturbed: Some(vec![0.3]) };
        let base = loss_value(&net, &batch, &LossSpec::new(DataTerm::Quadratic, RegKind::None, 0.0), &LossContext::default(), ExecMode::Sequential).unwrap();
        let l = loss_value(&moved, &batch, &spec, &ctx, ExecMode::Sequential).unwrap();
        assert!((l - base - 0.3).abs() < 1e-12);
        let same = LossContext { neighborhood: None, perturbed: Some(vec![0.0]) };
        assert!((loss_value(&moved, &batch, &spec, &same, ExecMode::Sequential).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn tv_is_root_of_tik_per_channel() {
        let net = TwoLayerNet::init(5, 3, 1.0, Activation::Softplus(2.0), 9);
        let x = [0.3, -0.2, 0.5];
        let tape = Tape::new();
        let p = tape.vars(&net.params());
        let tv = reg_tv(&tape, &net, &p, &x, 0.0).unwrap().value();
        let tik = reg_tik(&tape, &net, &p, &x).unwrap().value();
        assert!((tv * tv - tik).abs() < 1e-9);
    }

    #[test]
    fn tik_two_layer_gradient_check() {
        let net = TwoLayerNet::init(4, 2, 1.0, Activation::Softplus(2.0), 2);
        let x = [0.3, -0.2, -0.6, 0.1];
        let y = [1.0, -0.5];
        let n = net.num_params();
        let f = func(n, move |tape, p| {
            let batch = Batch::new(&x, 2, Targets::Values(&y)).unwrap();
            let spec = LossSpec::new(DataTerm::Quadratic, RegKind::Tik, 0.7);
            record_loss(tape, &net, p, &batch, &spec, &LossContext::default()).unwrap()
        });
        let params = TwoLayerNet::init(4, 2, 1.0, Activation::Softplus(2.0), 2).params();
        assert!(crate::autodiff::check_gradient(&f, &params, 1e-4) <= 1e-5);
    }
}
