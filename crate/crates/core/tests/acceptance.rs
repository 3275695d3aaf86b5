//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line (straight to stderr, so it shows even
//! when output is captured) before asserting.

use std::io::Write;
use std::time::Instant;

use rand::Rng;

use gradreg::autodiff::{check_gradient, func, value_and_gradient};
use gradreg::losses::{record_loss, Batch, DataTerm, LossContext, LossSpec, RegKind, Targets};
use gradreg::nets::{Activation, Mlp, Model, TwoLayerNet};
use gradreg::par::ExecMode;

fn report_line(n: u32, pass: bool, detail: &str, started: Instant) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {status} {detail} ({:.1} s)\n", started.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

const FD_STEP: f64 = 1e-4;
/// Draws with a ReLU pre-activation closer than this to zero are resampled.
const KINK_MARGIN: f64 = 1e-3;
/// The smoothed TV term has a kink wherever one output's input gradient
/// vanishes; draws with a row norm below this are resampled.
const TV_NORM_MARGIN: f64 = 0.05;
/// Central differences carry roundoff near eps * |f| / h, so a nonzero
/// component below RESOLUTION * |f| cannot be checked to 1e-5 relative.
const RESOLUTION: f64 = 1e-6;

/// Smallest |pre-activation| of any hidden ReLU unit over the points.
fn mlp_kink_distance(net: &Mlp, points: &[f64]) -> f64 {
    let d = net.widths()[0];
    let layers: Vec<_> = net.layers().collect();
    let mut worst = f64::INFINITY;
    for x in points.chunks(d) {
        let mut a = x.to_vec();
        for (w, b) in &layers[..layers.len() - 1] {
            let z: Vec<f64> = (0..b.len())
                .map(|o| b[o] + w[o * a.len()..(o + 1) * a.len()].iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>())
                .collect();
            worst = z.iter().fold(worst, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    worst
}

fn two_layer_kink_distance(net: &TwoLayerNet, points: &[f64]) -> f64 {
    if net.activation != Activation::Relu {
        return f64::INFINITY;
    }
    let d = net.dim();
    let mut worst = f64::INFINITY;
    for x in points.chunks(d) {
        for k in 0..net.width() {
            let z = net.row(k).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + net.b[k];
            worst = worst.min(z.abs());
        }
    }
    worst
}

/// Smallest per-output input-gradient norm over the points.
fn min_row_norm<M: Model>(net: &M, x: &[f64], d: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for xi in x.chunks(d) {
        for row in net.jacobian(xi).chunks(d) {
            worst = worst.min(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    worst
}

enum Owned {
    Labels(Vec<usize>),
    Values(Vec<f64>),
}

/// Relative error of the tape gradient of the full loss against central
/// differences, with perturbations and neighbors frozen in `ctx`. `None`
/// when the oracle cannot resolve some component.
fn fd_error<M: Model + 'static>(model: &M, x: Vec<f64>, d: usize, targets: Owned, spec: &LossSpec, ctx: LossContext) -> Option<f64> {
    let params = model.params();
    let model = model.clone();
    let spec = spec.clone();
    let f = func(params.len(), move |tape, p| {
        let t = match &targets {
            Owned::Labels(l) => Targets::Labels(l),
            Owned::Values(v) => Targets::Values(v),
        };
        let batch = Batch::new(&x, d, t).expect("batch");
        record_loss(tape, &model, p, &batch, &spec, &ctx).expect("loss records")
    });
    let (value, ad) = value_and_gradient(&f, &params).expect("gradient records");
    let floor = RESOLUTION * value.abs().max(1.0);
    if ad.iter().any(|g| *g != 0.0 && g.abs() < floor) {
        return None;
    }
    Some(check_gradient(&f, &params, FD_STEP))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Loss {
    Plain,
    Tik,
    Tv,
    Alp,
}

fn spec_for(loss: Loss, data: DataTerm, alpha: f64) -> LossSpec {
    let reg = match loss {
        Loss::Plain => RegKind::None,
        Loss::Tik => RegKind::Tik,
        Loss::Tv => RegKind::Tv,
        Loss::Alp => RegKind::Alp,
    };
    let mut spec = LossSpec::new(data, reg, alpha);
    if let Some(a) = spec.attack.as_mut() {
        a.iterations = 3;
        a.step = 0.05;
        a.bound = 0.1;
    }
    spec
}

fn perturbed_points(x: &[f64], ctx: &LossContext) -> Vec<f64> {
    let mut pts = x.to_vec();
    if let Some(p) = &ctx.perturbed {
        pts.extend(p);
    }
    pts
}

/// One fuzzed MLP case; `None` when the draw is ill-conditioned.
fn mlp_case(loss: Loss, seed: u64) -> Option<f64> {
    let mut rng = gradreg::seeded_rng(seed);
    let d = rng.random_range(1..=4);
    let classes = rng.random_range(2..=4);
    let mut widths = vec![d];
    for _ in 0..rng.random_range(1..=2) {
        widths.push(rng.random_range(2..=6));
    }
    widths.push(classes);
    let net = Mlp::new(&widths, rng.random());
    let n = rng.random_range(1..=4);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let spec = spec_for(loss, DataTerm::Nll, rng.random_range(0.1..2.0));
    let batch = Batch::new(&x, d, Targets::Labels(&labels)).ok()?;
    let ctx = LossContext::prepare(&net, &batch, &spec, seed, ExecMode::Sequential).ok()?;
    if mlp_kink_distance(&net, &perturbed_points(&x, &ctx)) < KINK_MARGIN {
        return None;
    }
    if loss == Loss::Tv && min_row_norm(&net, &x, d) < TV_NORM_MARGIN {
        return None;
    }
    fd_error(&net, x, d, Owned::Labels(labels), &spec, ctx)
}

/// One fuzzed two-layer case. The scalar output uses the quadratic data
/// term; ALP perturbations come from PGD on that term.
fn two_layer_case(loss: Loss, seed: u64) -> Option<f64> {
    let mut rng = gradreg::seeded_rng(seed);
    let d = rng.random_range(1..=3);
    let m = rng.random_range(2..=8);
    let act = if rng.random::<bool>() { Activation::Relu } else { Activation::Softplus(rng.random_range(1.0..8.0)) };
    let net = TwoLayerNet::init(m, d, rng.random_range(0.5..2.0), act, rng.random());
    let n = rng.random_range(1..=4);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = spec_for(loss, DataTerm::Quadratic, rng.random_range(0.1..2.0));
    let batch = Batch::new(&x, d, Targets::Values(&y)).ok()?;
    let ctx = LossContext::prepare(&net, &batch, &spec, seed, ExecMode::Sequential).ok()?;
    if two_layer_kink_distance(&net, &perturbed_points(&x, &ctx)) < KINK_MARGIN {
        return None;
    }
    if loss == Loss::Tv && min_row_norm(&net, &x, d) < TV_NORM_MARGIN {
        return None;
    }
    fd_error(&net, x, d, Owned::Values(y), &spec, ctx)
}

#[test]
fn criterion_01_gradient_correctness() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut cases = 0;
    let mut resampled = 0;
    for loss in [Loss::Plain, Loss::Tik, Loss::Tv, Loss::Alp] {
        for (model, case) in [("mlp", mlp_case as fn(Loss, u64) -> Option<f64>), ("two-layer", two_layer_case)] {
            let mut done = 0;
            let mut seed = 0u64;
            while done < 100 {
                seed += 1;
                assert!(seed < 100_000, "no well-conditioned {model} {loss:?} draws");
                let Some(e) = case(loss, seed) else {
                    resampled += 1;
                    continue;
                };
                done += 1;
                cases += 1;
                let e = if e.is_nan() { f64::INFINITY } else { e };
                if e > worst {
                    worst = e;
                    worst_at = format!("{model} {loss:?} seed {seed}");
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && secs <= 60.0;
    report_line(1, pass, &format!("{cases} cases ({resampled} draws resampled), max relative error {worst:.3e} at {worst_at}"), t);
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Harness-backed criteria

use gradreg::harness::report::ExperimentReport;
use gradreg::harness::{run, ExperimentConfig};

fn run_sub(sub: &str, text: &str) -> ExperimentReport {
    let cfg = ExperimentConfig::parse(sub, text).expect("valid config");
    run(&cfg).expect("run succeeds")
}

/// Whether every check (hard and soft) held, with the failures or, when
/// none failed, the details of the checks named in `show`.
fn verdict(report: &ExperimentReport, show: &[&str]) -> (bool, String) {
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.held)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if !failed.is_empty() {
        return (false, failed.join("; "));
    }
    let shown: Vec<String> = report
        .checks
        .iter()
        .filter(|c| show.iter().any(|s| c.name.starts_with(s)))
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    (true, format!("{} checks held; {}", report.checks.len(), shown.join("; ")))
}

fn harness_criterion(n: u32, sub: &str, text: &str, show: &[&str], budget_secs: f64) {
    let t = Instant::now();
    let report = run_sub(sub, text);
    let (held, detail) = verdict(&report, show);
    let secs = t.elapsed().as_secs_f64();
    let pass = held && secs <= budget_secs;
    report_line(n, pass, &format!("{detail}; budget {budget_secs} s"), t);
    assert!(pass);
}

#[test]
fn criterion_02_relu_construction_bound() {
    harness_criterion(2, "approx", "[approx]\nactivations = [\"relu\"]\n", &["relu_exponent", "relu_bound_m=1024", "mc_m=1024"], 300.0);
}

#[test]
fn criterion_03_softplus_construction_bound() {
    harness_criterion(
        3,
        "approx",
        "[approx]\nactivations = [\"softplus\"]\n",
        &["softplus_exponent", "softplus_bound_m=1024", "sp_relu_gap_m=1024"],
        300.0,
    );
}

#[test]
fn criterion_05_tikhonov_generalization() {
    harness_criterion(5, "pde", "", &["median_decreasing_in_n", "exponent_vs_n", "final_relative_error"], 900.0);
}

#[test]
fn criterion_06_tv_against_oracle() {
    harness_criterion(6, "rof", "", &["median_gap"], 900.0);
}

#[test]
fn criterion_07_quadrature_gap_scaling() {
    harness_criterion(7, "quadgap", "", &["tv_exponent", "tik_exponent"], 600.0);
}

// ---------------------------------------------------------------------------
// 4. Sobolev identity

use gradreg::quadrature::{sobolev_identity_residual, QuadratureRule, RuleKind};
use gradreg::variational::ManufacturedProblem;

#[test]
fn criterion_04_sobolev_identity() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (ks, per_axis) in [(&[1usize][..], 64), (&[1, 1][..], 48)] {
        let problem = ManufacturedProblem::cosine_product(1.0, ks).unwrap();
        let d = ks.len();
        let rule = QuadratureRule::build(d, RuleKind::GaussLegendreTensor, per_axis, 0).unwrap();
        let bound = 1.1 * problem.barron_norm;
        for seed in 0..10 {
            let net = TwoLayerNet::sample_in_class(32, d, bound, Activation::Softplus(4.0), seed);
            let r = sobolev_identity_residual(&net, &problem.u_hat, |x: &[f64]| problem.y(x), &rule).unwrap();
            worst = worst.max(r);
        }
    }
    let pass = worst <= 1e-5 && t.elapsed().as_secs_f64() <= 30.0;
    report_line(4, pass, &format!("20 nets, max residual {worst:.3e} <= 1e-5"), t);
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Attack invariants

use gradreg::attacks::{fgsm, pgd, within_constraints};
use gradreg::variational::empirical_rademacher;

#[test]
fn criterion_08_attack_invariants() {
    let t = Instant::now();
    let mut violations = 0;
    let mut mismatches = 0;
    for run in 0..1000u64 {
        let mut rng = gradreg::seeded_rng(gradreg::mix_seed(run, 8));
        let d = rng.random_range(1..=6);
        let classes = rng.random_range(2..=4);
        let net = Mlp::new(&[d, rng.random_range(2..=8), classes], rng.random());
        // Some coordinates sit on the box faces.
        let x: Vec<f64> = (0..d)
            .map(|_| match rng.random_range(0..6) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            })
            .collect();
        let label = rng.random_range(0..classes);
        let eps = rng.random_range(0.0..0.5);
        let step = rng.random_range(0.0..0.2);
        let iters = rng.random_range(1..=20);
        let adv = pgd(&net, &x, label, step, eps, iters).unwrap();
        if !within_constraints(&adv, &x, eps) {
            violations += 1;
        }
        // One PGD step with delta <= eps against FGSM clipped to the box.
        let delta = eps * rng.random_range(0.0..=1.0);
        let one = pgd(&net, &x, label, delta, eps, 1).unwrap();
        let clipped: Vec<f64> = fgsm(&net, &x, label, delta).unwrap().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        if one.iter().zip(&clipped).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
    }
    let n = 1024;
    let rad = empirical_rademacher(&vec![1.0; n], 1, 2000, 8).unwrap();
    let theory = (2.0 / (std::f64::consts::PI * n as f64)).sqrt();
    let rel = (rad - theory).abs() / theory;
    let pass = violations == 0 && mismatches == 0 && rel <= 0.2 && t.elapsed().as_secs_f64() <= 120.0;
    report_line(
        8,
        pass,
        &format!("1000 PGD runs, {violations} violations, {mismatches} FGSM mismatches; Rademacher(1) {rad:.5} vs {theory:.5} ({:.1}%)", 100.0 * rel),
        t,
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. Robustness ordering

#[test]
fn criterion_09_robustness_ordering() {
    let t = Instant::now();
    let report = run_sub("classify", "");
    let (mut pass, mut detail) = verdict(&report, &["tv_pgd", "tik_pgd", "alp_pgd"]);
    detail = format!("two-moons: {detail}");
    // MNIST-100 runs only when the IDX files are supplied.
    if let (Ok(images), Ok(labels)) = (std::env::var("GRADREG_MNIST_IMAGES"), std::env::var("GRADREG_MNIST_LABELS")) {
        let report = run_sub("classify", &format!("[classify]\ndataset = \"mnist-100\"\nimages = {images:?}\nlabels = {labels:?}\n"));
        let (held, d) = verdict(&report, &["tv_pgd", "tik_pgd", "alp_pgd"]);
        pass &= held;
        detail.push_str(&format!(" | mnist-100: {d}"));
    } else {
        detail.push_str(" | mnist-100 skipped (GRADREG_MNIST_IMAGES/LABELS unset)");
    }
    pass &= t.elapsed().as_secs_f64() <= 1800.0;
    report_line(9, pass, &detail, t);
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. Determinism

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let configs = [
        ("approx", "seeds = [0, 1]\n[approx]\nm_grid = [16, 64]\nsup_points = 100\n"),
        ("pde", "seeds = [0, 1]\n[pde]\nm_grid = [8]\nn_grid = [64, 128]\ntrain = { epochs = 20 }\n"),
        ("rof", "seeds = [0]\n[rof]\nm = 8\nn = 64\ntrain = { epochs = 20 }\n"),
        ("quadgap", "seeds = [0, 1]\n[quadgap]\nm = 8\nn_grid = [64, 128, 256]\nensemble = 32\n"),
        ("rademacher", "seeds = [0]\n[rademacher]\nensemble = 4\nn_grid = [64, 128, 256]\nn_sigma = 20\n"),
        ("classify", "seeds = [0, 1]\n[classify]\ntrain_size = 20\nval_size = 10\ntest_size = 20\nhidden = [8]\nepochs = 5\n"),
        (
            "attack-eval",
            "seeds = [0]\n[attack-eval]\nmethods = [\"baseline\", \"tv\"]\ntrain_size = 20\nval_size = 10\ntest_size = 10\nhidden = [8]\nepochs = 5\n\
             attack = { step = 0.01, bound = 0.05, iterations = 5, substitute = { epochs = 3, hidden = 8 } }\n",
        ),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for (sub, text) in configs {
        let out = dir.path().join(format!("{sub}.csv"));
        let cfg = ExperimentConfig::parse(sub, &format!("output = {out:?}\n{text}")).expect("valid config");
        gradreg::harness::write_report(&run(&cfg).unwrap(), &out).unwrap();
        let first = std::fs::read(&out).unwrap();
        gradreg::harness::write_report(&run(&cfg).unwrap(), &out).unwrap();
        if std::fs::read(&out).unwrap() != first {
            differing.push(sub);
        }
    }
    let pass = differing.is_empty();
    report_line(10, pass, &format!("{} subcommands re-run, differing: {differing:?}", configs.len()), t);
    assert!(pass);
}
