//! FGSM, PGD and substitute-model transfer attacks, and robust accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{data_value_grad, Batch, DataTerm, LossSpec, RegKind, Target};
use crate::nets::{Mlp, Model};
use crate::par::{self, ExecMode};
use crate::trainer::{train, TrainConfig, TrainData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Transfer,
}

/// Substitute network and training budget for the transfer attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubstituteConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub pool_size: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for SubstituteConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            pool_size: 200,
            lr: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Step `δ`.
    pub step: f64,
    /// Perturbation bound `ε` (ℓ∞).
    pub bound: f64,
    pub iterations: usize,
    pub substitute: SubstituteConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Pgd,
            step: 0.01,
            bound: 0.1,
            iterations: 40,
            substitute: SubstituteConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0 && self.bound >= 0.0) {
            return Err(Error::Config("attack step and bound must be >= 0".into()));
        }
        if self.kind != AttackKind::Fgsm && self.iterations == 0 {
            return Err(Error::Config("PGD needs at least one iteration".into()));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `∇_x D(φ(x), y)`.
pub fn loss_input_grad<M: Model>(model: &M, term: DataTerm, x: &[f64], target: Target) -> Result<Vec<f64>> {
    let out = model.forward(x);
    let (_, up) = data_value_grad(term, &out, target)?;
    Ok(model.input_grad(x, &up))
}

/// `x + δ sign(g)` with `sign(0) = 0`, no clipping.
pub fn fgsm_from_grad(x: &[f64], grad: &[f64], step: f64) -> Vec<f64> {
    x.iter().zip(grad).map(|(xi, g)| xi + step * sign(*g)).collect()
}

/// One fast-gradient-sign step on the NLL loss.
pub fn fgsm<M: Model>(model: &M, x: &[f64], label: usize, step: f64) -> Result<Vec<f64>> {
    let g = loss_input_grad(model, DataTerm::Nll, x, Target::Label(label))?;
    Ok(fgsm_from_grad(x, &g, step))
}

/// `v ∈ [x − ε, x + ε] ∩ [0, 1]` coordinatewise, with the interval ends
/// rounded as computed.
pub fn within_constraints(v: &[f64], x: &[f64], eps: f64) -> bool {
    v.iter()
        .zip(x)
        .all(|(vi, xi)| *vi >= xi - eps && *vi <= xi + eps && (0.0..=1.0).contains(vi))
}

fn pgd_with<F>(x: &[f64], step: f64, eps: f64, iterations: usize, mut grad: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut cur = x.to_vec();
    for _ in 0..iterations {
        let g = grad(&cur)?;
        for ((c, xi), gi) in cur.iter_mut().zip(x).zip(&g) {
            let cand = *c + step * sign(*gi);
            *c = cand.clamp(xi - eps, xi + eps).clamp(0.0, 1.0);
        }
    }
    assert!(within_constraints(&cur, x, eps), "PGD iterate left the feasible set");
    Ok(cur)
}

/// Projected gradient ascent on `D` from `x₀ = x`: each iterate moves by
/// `δ sign(∇D)`, the total perturbation is clipped to `[−ε, ε]` and the
/// point to `[0, 1]`.
pub fn pgd<M: Model>(model: &M, x: &[f64], label: usize, step: f64, eps: f64, iterations: usize) -> Result<Vec<f64>> {
    pgd_target(model, DataTerm::Nll, x, Target::Label(label), step, eps, iterations)
}

pub fn pgd_target<M: Model>(
    model: &M,
    term: DataTerm,
    x: &[f64],
    target: Target,
    step: f64,
    eps: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("PGD input must lie in [0, 1]^d".into()));
    }
    if !(eps >= 0.0 && step >= 0.0) {
        return Err(Error::Domain("PGD step and bound must be >= 0".into()));
    }
    pgd_with(x, step, eps, iterations, |p| loss_input_grad(model, term, p, target))
}

/// Runs the white-box attack of `cfg` (FGSM or PGD) on every batch point.
pub fn perturb_batch<M: Model>(model: &M, batch: &Batch, term: DataTerm, cfg: &AttackConfig, mode: ExecMode) -> Result<Vec<f64>> {
    let rows = par::map_range(mode, batch.len(), |i| {
        let x = batch.point(i);
        let t = batch.target(i);
        match cfg.kind {
            AttackKind::Fgsm => loss_input_grad(model, term, x, t).map(|g| fgsm_from_grad(x, &g, cfg.step)),
            AttackKind::Pgd | AttackKind::Transfer => pgd_target(model, term, x, t, cfg.step, cfg.bound, cfg.iterations),
        }
    });
    let mut out = Vec::with_capacity(batch.x.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Black-box transfer attack: a substitute MLP trained on the target's
/// argmax labels over a query pool, then attacked with PGD.
#[derive(Debug, Clone)]
pub struct TransferAttack {
    pub substitute: Mlp,
    /// Points the target oracle was queried with, in order.
    pub queries: Vec<Vec<f64>>,
}

impl TransferAttack {
    /// Labels `pool` (row-major, dimension `d`) with `oracle` and trains the
    /// substitute on them.
    pub fn fit<O>(oracle: O, pool: &[f64], d: usize, classes: usize, cfg: &SubstituteConfig, seed: u64) -> Result<Self>
    where
        O: Fn(&[f64]) -> usize,
    {
        let mut queries = Vec::with_capacity(pool.len() / d.max(1));
        let mut labels = Vec::with_capacity(queries.capacity());
        for x in pool.chunks(d) {
            queries.push(x.to_vec());
            labels.push(oracle(x));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label: bad, classes });
        }
        let mut substitute = Mlp::new(&[d, cfg.hidden, classes], crate::mix_seed(seed, 0x5b));
        let data = TrainData::labeled(pool.to_vec(), d, labels, classes)?;
        let spec = LossSpec::new(DataTerm::Nll, RegKind::None, 0.0);
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: Some(cfg.batch_size),
            lr: cfg.lr,
            seed,
            ..TrainConfig::default()
        };
        let report = train(&mut substitute, &data, &spec, &tc)?;
        if !report.final_loss.is_finite() {
            return Err(Error::Training {
                epoch: cfg.epochs,
                reason: "substitute loss is not finite".into(),
            });
        }
        Ok(Self {
            substitute,
            queries,
        })
    }

    /// Uses `model` itself as the substitute (no queries).
    pub fn from_model(model: Mlp) -> Self {
        Self {
            substitute: model,
            queries: Vec::new(),
        }
    }

    pub fn attack(&self, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
        pgd(&self.substitute, x, label, cfg.step, cfg.bound, cfg.iterations)
    }
}

/// Trains a substitute and attacks every victim point with it.
pub fn transfer_attack<O>(
    oracle: O,
    pool: &[f64],
    victims: &[f64],
    labels: &[usize],
    classes: usize,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<(Vec<f64>, TransferAttack)>
where
    O: Fn(&[f64]) -> usize,
{
    let d = victims.len() / labels.len().max(1);
    let ta = TransferAttack::fit(oracle, pool, d, classes, &cfg.substitute, seed)?;
    let mut out = Vec::with_capacity(victims.len());
    for (x, &y) in victims.chunks(d).zip(labels) {
        out.extend(ta.attack(x, y, cfg)?);
    }
    Ok((out, ta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    pub constraint_violations: usize,
    pub linf_norms: Vec<f64>,
}

/// Which attack [`robust_accuracy`] runs.
#[derive(Debug, Clone, Copy)]
pub enum Attacker<'a> {
    WhiteBox(&'a AttackConfig),
    Transfer(&'a TransferAttack, &'a AttackConfig),
}

/// Clean accuracy, and accuracy after the attack when one is given.
pub fn robust_accuracy<M: Model>(
    model: &M,
    x: &[f64],
    labels: &[usize],
    attacker: Option<Attacker>,
    mode: ExecMode,
) -> Result<RobustnessResult> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Precondition("robust_accuracy needs a nonempty dataset".into()));
    }
    let d = x.len() / n;
    let per = par::map_range(mode, n, |i| -> Result<(bool, bool, f64, bool)> {
        let xi = &x[i * d..(i + 1) * d];
        let y = labels[i];
        let clean = model.predict(xi) == y;
        let Some(att) = attacker else {
            return Ok((clean, clean, 0.0, false));
        };
        let (adv, cfg) = match att {
            Attacker::WhiteBox(cfg) => match cfg.kind {
                AttackKind::Fgsm => (fgsm(model, xi, y, cfg.step)?, cfg),
                AttackKind::Pgd => (pgd(model, xi, y, cfg.step, cfg.bound, cfg.iterations)?, cfg),
                AttackKind::Transfer => {
                    return Err(Error::Config("transfer attacks need a fitted substitute".into()));
                }
            },
            Attacker::Transfer(t, cfg) => (t.attack(xi, y, cfg)?, cfg),
        };
        let linf = adv.iter().zip(xi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let violated = cfg.kind != AttackKind::Fgsm && !within_constraints(&adv, xi, cfg.bound);
        Ok((clean, model.predict(&adv) == y, linf, violated))
    });
    let mut clean = 0;
    let mut attacked = 0;
    let mut violations = 0;
    let mut norms = Vec::with_capacity(n);
    for r in per {
        let (c, a, l, v) = r?;
        clean += c as usize;
        attacked += a as usize;
        violations += v as usize;
        norms.push(l);
    }
    Ok(RobustnessResult {
        clean_accuracy: clean as f64 / n as f64,
        attacked_accuracy: attacked as f64 / n as f64,
        constraint_violations: violations,
        linf_norms: norms,
    })
}

/// Accuracy on `labels` of the predictions at `x`.
pub fn accuracy<M: Model>(model: &M, x: &[f64], labels: &[usize]) -> f64 {
    let d = x.len() / labels.len().max(1);
    let hits = x.chunks(d).zip(labels).filter(|(xi, &y)| model.predict(xi) == y).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Mlp;

    /// One-layer net whose NLL input gradient at label 0 is `(−2, 0.3)·k`.
    fn linear(w: Vec<f64>) -> Mlp {
        Mlp::from_layers(vec![w], vec![vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn fgsm_sign_arithmetic() {
        assert_eq!(fgsm_from_grad(&[0.5, 0.5], &[-2.0, 0.3], 0.1), vec![0.4, 0.6]);
        assert_eq!(fgsm_from_grad(&[0.5, 0.2], &[-2.0, 0.3], 0.0), vec![0.5, 0.2]);
        assert_eq!(fgsm_from_grad(&[0.5, 0.2], &[0.0, 0.0], 0.3), vec![0.5, 0.2]);
    }

    #[test]
    fn fgsm_on_zero_net_is_identity() {
        let m = Mlp::zeros(&[2, 3, 2]);
        assert_eq!(fgsm(&m, &[0.3, 0.7], 1, 0.1).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn fgsm_is_odd_in_gradient() {
        let m = linear(vec![1.0, -2.0, 0.5, 0.25]);
        let x = [0.4, 0.6];
        let g = loss_input_grad(&m, DataTerm::Nll, &x, Target::Label(0)).unwrap();
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let a = fgsm_from_grad(&x, &g, 0.1);
        let b = fgsm_from_grad(&x, &neg, 0.1);
        for i in 0..2 {
            assert!(((a[i] - x[i]) + (b[i] - x[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn pgd_zero_budget_and_one_step() {
        let m = linear(vec![1.0, -2.0, 0.5, 0.25]);
        let x = [0.4, 0.6];
        assert_eq!(pgd(&m, &x, 0, 0.01, 0.0, 10).unwrap(), x.to_vec());
        let one = pgd(&m, &x, 0, 0.05, 0.1, 1).unwrap();
        let f: Vec<f64> = fgsm(&m, &x, 0, 0.05).unwrap().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        assert_eq!(one, f);
    }

    #[test]
    fn pgd_respects_constraints_near_box_edge() {
        let m = linear(vec![-3.0, 1.0, 0.5, -0.25]);
        for x in [[0.0, 1.0], [0.99, 0.02], [0.5, 0.5]] {
            let adv = pgd(&m, &x, 1, 0.03, 0.1, 40).unwrap();
            assert!(within_constraints(&adv, &x, 0.1));
        }
    }

    #[test]
    fn robust_accuracy_of_constant_net() {
        let m = Mlp::zeros(&[2, 4, 2]);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let y = [0, 1, 0, 1];
        let r = robust_accuracy(&m, &x, &y, None, ExecMode::Sequential).unwrap();
        assert_eq!(r.clean_accuracy, 0.5);
        let cfg = AttackConfig::default();
        let r = robust_accuracy(&m, &x, &y, Some(Attacker::WhiteBox(&cfg)), ExecMode::Sequential).unwrap();
        assert_eq!(r.constraint_violations, 0);
        assert_eq!(r.attacked_accuracy, 0.5);
    }

    #[test]
    fn transfer_with_zero_budget_leaves_victims() {
        let target = linear(vec![1.0, -1.0, -1.0, 1.0]);
        let pool: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).fract()).collect();
        let cfg = AttackConfig {
            bound: 0.0,
            substitute: SubstituteConfig { epochs: 5, ..SubstituteConfig::default() },
            ..AttackConfig::default()
        };
        let victims = [0.2, 0.9, 0.6, 0.1];
        let (adv, ta) = transfer_attack(|x| target.predict(x), &pool, &victims, &[1, 0], 2, &cfg, 3).unwrap();
        assert_eq!(adv, victims.to_vec());
        let expected: Vec<Vec<f64>> = pool.chunks(2).map(|c| c.to_vec()).collect();
        assert_eq!(ta.queries, expected);
    }
}
