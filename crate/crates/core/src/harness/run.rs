//! Subcommand dispatch.

use std::path::Path;

use rand::seq::SliceRandom;

use super::config::{
    ApproxConfig, ClassifyConfig, DatasetKind, ExperimentConfig, PdeConfig, QuadgapConfig, RademacherConfig, RofConfig,
    Section, Subcommand,
};
use super::data::{gen_two_moons, load_idx, Dataset, Split};
use super::report::ExperimentReport;
use crate::attacks::{robust_accuracy, AttackConfig, AttackKind, Attacker, TransferAttack};
use crate::barron::{
    barron_norm, construct_relu_approx, construct_softplus_approx, mc_cosine_approx, softplus_gap_bound, theory_bounds,
    Construction,
};
use crate::error::{Error, Result};
use crate::losses::{DataTerm, LossSpec, RegKind};
use crate::nets::{Activation, Mlp, Model};
use crate::par::{self, ExecMode};
use crate::quadrature::{h1_norm_sq, QuadratureRule};
use crate::stats::{mean, median, paired_t_greater};
use crate::trainer::{train, TrainConfig, TrainData, TrainReport};
use crate::variational::{
    empirical_rademacher, fit_power_law, quadrature_gap, rademacher_study, run_tv_experiment, tik_cell,
    GapSettings, ManufacturedProblem, PdeSettings, ScalingFit, TvSettings, ORACLE_GAP,
};

/// Significance level of the paired ordering checks.
pub const SIGNIFICANCE: f64 = 0.05;

/// Runs the configured subcommand. Hard-invariant failures are recorded in
/// the report, not returned as errors.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let seeds = &config.seeds;
    let mut report = match &config.section {
        Section::Approx(c) => run_approx(c, seeds)?,
        Section::Pde(c) => run_pde(c, seeds)?,
        Section::Rof(c) => run_rof(c, seeds)?,
        Section::Quadgap(c) => run_quadgap(c, seeds)?,
        Section::Rademacher(c) => run_rademacher(c, seeds)?,
        Section::Classify(c) => run_classify(c, seeds, Subcommand::Classify)?,
        Section::AttackEval(c) => run_classify(c, seeds, Subcommand::AttackEval)?,
    };
    report.echo = config.to_toml().lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    Ok(report)
}

/// Parses the config at `path`, runs it and writes the CSV and plot
/// script to the configured output.
pub fn run_file(subcommand: &str, path: &Path) -> Result<ExperimentReport> {
    let config = ExperimentConfig::load(subcommand, path)?;
    let report = run(&config)?;
    super::report::write_report(&report, &config.output)?;
    Ok(report)
}

fn row_count_check(report: &mut ExperimentReport, methods: usize, seeds: usize, cells: usize) {
    let want = methods * seeds * cells;
    let got = report.rows.len();
    report.check(
        "row_count",
        true,
        got == want,
        format!("{got} rows for {methods} methods x {seeds} seeds x {cells} cells"),
    );
}

fn finite_check(report: &mut ExperimentReport, columns: &[&str]) {
    let ks: Vec<usize> = columns.iter().filter_map(|c| report.column(c)).collect();
    let bad = report.rows.iter().filter(|r| ks.iter().any(|&k| !r.values[k].is_finite())).count();
    report.check("finite", true, bad == 0, format!("{bad} rows with non-finite {}", columns.join("/")));
}

fn exponent_check(report: &mut ExperimentReport, name: &str, fit: &ScalingFit, lo: f64, hi: f64) {
    let e = fit.exponent();
    report.notes.push(format!("fit {name}: exponent {e:.6} log_prefactor {:.6}", fit.fit.log_prefactor));
    report.check(name, false, (lo..=hi).contains(&e), format!("exponent {e:.4} in [{lo}, {hi}]"));
}

fn cosine_target(ks: &[usize]) -> Result<ManufacturedProblem> {
    ManufacturedProblem::cosine_product(1.0, ks)
}

fn run_approx(c: &ApproxConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    let problem = cosine_target(&c.wavenumbers)?;
    let f = &problem.u_hat;
    let d = problem.d;
    let c_f = barron_norm(f, 2.0);
    let rule = QuadratureRule::default_for(d)?;
    let mut report = ExperimentReport::new(&[
        "m",
        "h1_error",
        "bound",
        "attempts",
        "mc_error_sq",
        "mc_limit",
        "sup_gap",
        "gap_bound",
    ]);
    // The sup gap compares a SoftPlus net with the ReLU net it was built
    // from, on a uniform grid along the first axis.
    let grid: Vec<Vec<f64>> = (0..c.sup_points)
        .map(|i| {
            let mut x = vec![0.0; d];
            x[0] = -1.0 + 2.0 * i as f64 / (c.sup_points - 1) as f64;
            x
        })
        .collect();
    let unpack = |r: Result<Construction>| -> Result<(f64, f64, usize, Option<crate::nets::TwoLayerNet>)> {
        match r {
            Ok(con) => Ok((con.error, con.bound, con.attempts, Some(con.net))),
            Err(Error::BoundUnmet {
                best,
                error,
                bound,
                attempts,
            }) => Ok((error, bound, attempts, Some(*best))),
            Err(e) => Err(e),
        }
    };
    let jobs: Vec<(usize, u64, usize)> = (0..c.activations.len())
        .flat_map(|a| seeds.iter().flat_map(move |&s| c.m_grid.iter().map(move |&m| (a, s, m))))
        .collect();
    let rows = par::map(ExecMode::Parallel, &jobs, |&(a, seed, m)| -> Result<Vec<f64>> {
        let relu = c.activations[a] == "relu";
        let tb = theory_bounds(m, c_f);
        let mc_limit = c.mc_slack * 2.0 * c_f * c_f / m as f64;
        if relu {
            let (err, _, attempts, _) = unpack(construct_relu_approx(f, m, seed, c.max_retries))?;
            let mc = mc_cosine_approx(f, m, seed)?;
            let mc_err = h1_norm_sq(f, &mc, &rule);
            Ok(vec![m as f64, err, tb.relu_bound, attempts as f64, mc_err, mc_limit, f64::NAN, f64::NAN])
        } else {
            let (err, _, attempts, _) = unpack(construct_softplus_approx(f, m, seed, c.max_retries))?;
            let (_, _, _, relu_net) = unpack(construct_relu_approx(f, m, seed, c.max_retries))?;
            let relu_net = relu_net.expect("construction returns a net");
            let mut sp = relu_net.clone();
            sp.activation = Activation::Softplus((m as f64).sqrt());
            let gap = grid.iter().map(|x| (sp.value(x) - relu_net.value(x)).abs()).fold(0.0, f64::max);
            let gap_bound = softplus_gap_bound(m, c_f * (1.0 + crate::barron::NORM_SLACK), c.gap_slack);
            Ok(vec![m as f64, err, tb.sp_bound, attempts as f64, f64::NAN, f64::NAN, gap, gap_bound])
        }
    });
    for (&(a, seed, m), values) in jobs.iter().zip(rows) {
        report.push(&c.activations[a], seed, &format!("m={m}"), values?);
    }
    row_count_check(&mut report, c.activations.len(), seeds.len(), c.m_grid.len());
    finite_check(&mut report, &["h1_error"]);
    for act in &c.activations {
        let mut medians = Vec::new();
        for &m in &c.m_grid {
            let cell = format!("m={m}");
            let errs = report.values(act, &cell, "h1_error");
            let bound = report.values(act, &cell, "bound")[0];
            let med = median(&errs);
            medians.push((m as f64, med));
            report.check(
                &format!("{act}_bound_{cell}"),
                true,
                med <= bound,
                format!("median error {med:.6e} <= bound {bound:.6e}"),
            );
            if act == "relu" {
                let mc = mean(&report.values(act, &cell, "mc_error_sq"));
                let lim = report.values(act, &cell, "mc_limit")[0];
                report.check(
                    &format!("mc_{cell}"),
                    true,
                    mc <= lim,
                    format!("mean Monte Carlo error^2 {mc:.6e} <= {lim:.6e}"),
                );
            } else if m >= 16 {
                let gap = report.values(act, &cell, "sup_gap").into_iter().fold(0.0, f64::max);
                let gb = report.values(act, &cell, "gap_bound")[0];
                report.check(
                    &format!("sp_relu_gap_{cell}"),
                    true,
                    gap <= gb,
                    format!("max sup gap {gap:.6e} <= {gb:.6e}"),
                );
            }
        }
        if medians.len() >= 3 {
            let fit = ScalingFit::new(medians)?;
            exponent_check(&mut report, &format!("{act}_exponent"), &fit, -0.65, -0.35);
        }
    }
    Ok(report)
}

fn run_pde(c: &PdeConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    let problem = cosine_target(&c.wavenumbers)?;
    let jobs: Vec<(usize, usize, u64)> = seeds
        .iter()
        .flat_map(|&s| c.m_grid.iter().flat_map(move |&m| c.n_grid.iter().map(move |&n| (m, n, s))))
        .collect();
    let inner = PdeSettings {
        mode: ExecMode::Sequential,
        ..c.train
    };
    let cells = par::map(ExecMode::Parallel, &jobs, |&(m, n, s)| tik_cell(&problem, m, n, s, &inner));
    let mut report = ExperimentReport::new(&["m", "n", "error_sq", "relative_error_sq", "identity_residual", "final_loss", "delta_achieved"]);
    for cell in cells {
        let t = cell?;
        report.push(
            "tik",
            t.seed,
            &format!("m={};n={}", t.m, t.n),
            vec![
                t.m as f64,
                t.n as f64,
                t.error_sq,
                t.error_sq / problem.h1_norm_sq,
                t.identity_residual,
                t.report.final_loss,
                t.report.delta_achieved,
            ],
        );
    }
    report.notes.push(format!("h1_norm_sq {:.8e} barron_norm {:.8e}", problem.h1_norm_sq, problem.barron_norm));
    row_count_check(&mut report, 1, seeds.len(), c.m_grid.len() * c.n_grid.len());
    finite_check(&mut report, &["error_sq", "final_loss"]);
    if c.train.alpha == 1.0 {
        let worst = report.rows.iter().map(|r| r.values[4]).fold(0.0, f64::max);
        report.check("sobolev_identity", true, worst <= 1e-5, format!("max residual {worst:.3e} <= 1e-5"));
    }
    let m_max = *c.m_grid.iter().max().expect("validated");
    let n_max = *c.n_grid.iter().max().expect("validated");
    let med = |r: &ExperimentReport, m: usize, n: usize| median(&r.values("tik", &format!("m={m};n={n}"), "error_sq"));
    let by_n: Vec<(f64, f64)> = c.n_grid.iter().map(|&n| (n as f64, med(&report, m_max, n))).collect();
    if by_n.len() >= 2 {
        let decreasing = by_n.windows(2).all(|w| w[1].1 < w[0].1);
        let list: Vec<String> = by_n.iter().map(|(n, e)| format!("{n}:{e:.4e}")).collect();
        report.check("median_decreasing_in_n", false, decreasing, list.join(" "));
    }
    if by_n.len() >= 3 {
        let fit = ScalingFit::new(by_n)?;
        let e = fit.exponent();
        report.notes.push(format!("fit error_sq vs n: exponent {e:.6}"));
        report.check("exponent_vs_n", false, e <= -0.3, format!("exponent {e:.4} <= -0.3"));
    }
    let last = med(&report, m_max, n_max) / problem.h1_norm_sq;
    report.check("final_relative_error", false, last <= 0.05, format!("median error^2 / |u|^2 = {last:.4e} <= 0.05"));
    if c.m_grid.len() >= 3 {
        let fit = ScalingFit::new(c.m_grid.iter().map(|&m| (m as f64, med(&report, m, n_max))).collect())?;
        report.notes.push(format!("fit error_sq vs m: exponent {:.6}", fit.exponent()));
    }
    Ok(report)
}

fn run_rof(c: &RofConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(&["objective", "oracle", "relative_gap", "total_variation", "final_loss"]);
    let s = TvSettings { ..c.train };
    for &data in &c.data {
        let tv = run_tv_experiment(data, c.m, c.n, seeds, &s)?;
        let opt = tv.oracle.optimum;
        for cell in &tv.cells {
            report.push(
                "tv",
                cell.seed,
                &data.name(),
                vec![
                    cell.objective,
                    opt,
                    (cell.objective - opt) / opt.abs(),
                    cell.total_variation,
                    cell.report.final_loss,
                ],
            );
        }
        let worst_gap = tv.oracle.levels.iter().map(|l| l.2).fold(0.0, f64::max);
        report.notes.push(format!(
            "oracle {}: optimum {opt:.8e} tolerance {:.3e} max duality gap {worst_gap:.3e}",
            data.name(),
            tv.oracle.tolerance
        ));
        report.check(
            &format!("oracle_gap_{}", data.name()),
            true,
            worst_gap <= ORACLE_GAP,
            format!("duality gap {worst_gap:.3e} <= {ORACLE_GAP:e}"),
        );
        let lowest = tv.cells.iter().map(|c| c.objective).fold(f64::INFINITY, f64::min);
        report.check(
            &format!("above_oracle_{}", data.name()),
            true,
            lowest >= opt - 1e-3,
            format!("lowest objective {lowest:.6e} >= oracle - 1e-3 = {:.6e}", opt - 1e-3),
        );
        report.check(
            &format!("median_gap_{}", data.name()),
            false,
            tv.relative_gap <= c.tolerance,
            format!("median relative gap {:.4e} <= {}", tv.relative_gap, c.tolerance),
        );
    }
    row_count_check(&mut report, 1, seeds.len(), c.data.len());
    finite_check(&mut report, &["objective"]);
    Ok(report)
}

fn run_quadgap(c: &QuadgapConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    let problem = cosine_target(&c.wavenumbers)?;
    let mut report = ExperimentReport::new(&["n", "gap"]);
    for &functional in &c.functionals {
        let s = GapSettings {
            bound: c.bound,
            ensemble: c.ensemble,
            functional,
            mode: ExecMode::Parallel,
        };
        let study = quadrature_gap(&problem, c.m, &c.n_grid, seeds, &s)?;
        let name = match functional {
            crate::quadrature::Functional::Tv => "tv",
            crate::quadrature::Functional::Tik => "tik",
        };
        for (k, &seed) in seeds.iter().enumerate() {
            for (i, &n) in c.n_grid.iter().enumerate() {
                report.push(name, seed, &format!("n={n}"), vec![n as f64, study.gaps[i][k]]);
            }
        }
        exponent_check(&mut report, &format!("{name}_exponent"), &study.fit, -0.65, -0.35);
    }
    row_count_check(&mut report, c.functionals.len(), seeds.len(), c.n_grid.len());
    finite_check(&mut report, &["gap"]);
    Ok(report)
}

fn run_rademacher(c: &RademacherConfig, seeds: &[u64]) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(&["n", "rademacher", "constant_one", "constant_one_theory"]);
    for &seed in seeds {
        let fit = rademacher_study(c.m, c.d, c.bound, c.ensemble, &c.n_grid, c.n_sigma, seed)?;
        for &(n, value) in &fit.grid {
            let ones = vec![1.0; n as usize];
            let one = empirical_rademacher(&ones, 1, c.n_sigma, crate::mix_seed(seed, 7))?;
            let theory = (2.0 / (std::f64::consts::PI * n)).sqrt();
            report.push("softplus", seed, &format!("n={n}"), vec![n, value, one, theory]);
        }
    }
    row_count_check(&mut report, 1, seeds.len(), c.n_grid.len());
    finite_check(&mut report, &["rademacher"]);
    if c.n_grid.len() >= 2 {
        let xs: Vec<f64> = c.n_grid.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = c
            .n_grid
            .iter()
            .map(|n| mean(&report.values("softplus", &format!("n={n}"), "rademacher")))
            .collect();
        let fit = fit_power_law(&xs, &ys)?;
        report.notes.push(format!("fit rademacher vs n: exponent {:.6}", fit.exponent));
        report.check(
            "rademacher_exponent",
            false,
            (-0.65..=-0.35).contains(&fit.exponent),
            format!("exponent {:.4} in [-0.65, -0.35]", fit.exponent),
        );
    }
    Ok(report)
}

/// The splits of one seed.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Source images for the MNIST protocol.
struct ImagePool {
    train: Dataset,
    test: Option<Dataset>,
}

impl ImagePool {
    fn load(c: &ClassifyConfig) -> Result<Self> {
        let (Some(images), Some(labels)) = (&c.images, &c.labels) else {
            return Err(Error::Config("mnist-100 needs `images` and `labels` paths".into()));
        };
        let train = load_idx(images, labels)?;
        let test = match (&c.test_images, &c.test_labels) {
            (Some(i), Some(l)) => Some(load_idx(i, l)?),
            _ => None,
        };
        let need = c.train_size + c.val_size + if test.is_none() { c.test_size } else { 0 };
        if train.len() < need {
            return Err(Error::Config(format!("{} images available, {need} needed", train.len())));
        }
        if let Some(t) = &test {
            if t.len() < c.test_size || t.d != train.d {
                return Err(Error::Config("test files are too small or have another image size".into()));
            }
        }
        Ok(Self { train, test })
    }

    fn splits(&self, c: &ClassifyConfig, seed: u64) -> Result<Splits> {
        let mut idx: Vec<usize> = (0..self.train.len()).collect();
        idx.shuffle(&mut crate::seeded_rng(crate::mix_seed(seed, 11)));
        let (tr, rest) = idx.split_at(c.train_size);
        let (va, rest) = rest.split_at(c.val_size);
        let test = match &self.test {
            Some(t) => {
                let mut ti: Vec<usize> = (0..t.len()).collect();
                ti.shuffle(&mut crate::seeded_rng(crate::mix_seed(seed, 12)));
                t.select(&ti[..c.test_size], Split::Test)?
            }
            None => self.train.select(&rest[..c.test_size], Split::Test)?,
        };
        Ok(Splits {
            train: self.train.select(tr, Split::Train)?,
            val: self.train.select(va, Split::Validation)?,
            test,
        })
    }
}

fn make_splits(c: &ClassifyConfig, seeds: &[u64]) -> Result<Vec<Splits>> {
    match c.dataset {
        DatasetKind::TwoMoons => seeds
            .iter()
            .map(|&s| {
                let gen = |n: usize, salt: u64, split: Split| -> Result<Dataset> {
                    let mut ds = gen_two_moons(n, c.noise, crate::mix_seed(s, salt))?;
                    ds.split = split;
                    Ok(ds)
                };
                Ok(Splits {
                    train: gen(c.train_size, 1, Split::Train)?,
                    val: gen(c.val_size, 2, Split::Validation)?,
                    test: gen(c.test_size, 3, Split::Test)?,
                })
            })
            .collect(),
        DatasetKind::Mnist100 => {
            let pool = ImagePool::load(c)?;
            seeds.iter().map(|&s| pool.splits(c, s)).collect()
        }
    }
}

fn loss_spec(c: &ClassifyConfig, reg: RegKind, alpha: f64) -> LossSpec {
    let mut spec = LossSpec::new(DataTerm::Nll, reg, alpha);
    spec.neighbors_per_sample = c.neighbors_per_sample;
    if reg.needs_attack() {
        spec.attack = Some(c.attack.clone());
    }
    spec
}

/// Trains one classifier. The initial weights depend only on the seed, so
/// methods are compared from the same start.
pub fn train_classifier(
    c: &ClassifyConfig,
    train_set: &Dataset,
    reg: RegKind,
    alpha: f64,
    seed: u64,
) -> Result<(Mlp, TrainReport)> {
    let mut widths = vec![train_set.d];
    widths.extend(&c.hidden);
    widths.push(train_set.classes);
    let mut net = Mlp::new(&widths, crate::mix_seed(seed, 3));
    let data = TrainData::labeled(train_set.samples().to_vec(), train_set.d, train_set.labels.clone(), train_set.classes)?;
    let cfg = TrainConfig {
        epochs: c.epochs,
        batch_size: Some(c.batch_size),
        lr: c.lr,
        seed,
        mode: ExecMode::Sequential,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &data, &loss_spec(c, reg, alpha), &cfg)?;
    Ok((net, report))
}

struct Trained {
    net: Mlp,
    report: TrainReport,
    alpha: f64,
}

fn fit_cell(c: &ClassifyConfig, splits: &Splits, reg: RegKind, seed: u64) -> Result<Trained> {
    if !c.select_alpha || reg == RegKind::None {
        let alpha = c.alpha_for(reg);
        let (net, report) = train_classifier(c, &splits.train, reg, alpha, seed)?;
        return Ok(Trained { net, report, alpha });
    }
    let mut best: Option<(f64, Trained)> = None;
    for &alpha in &c.alpha_grid {
        let (net, report) = train_classifier(c, &splits.train, reg, alpha, seed)?;
        let acc = crate::attacks::accuracy(&net, splits.val.samples(), &splits.val.labels);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, Trained { net, report, alpha }));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

fn run_classify(c: &ClassifyConfig, seeds: &[u64], sub: Subcommand) -> Result<ExperimentReport> {
    let regs = c.regs()?;
    let splits = make_splits(c, seeds)?;
    let jobs: Vec<(RegKind, usize)> = regs.iter().flat_map(|&r| (0..seeds.len()).map(move |k| (r, k))).collect();

    // Every network is trained before any test point is read.
    let trained = par::map(ExecMode::Parallel, &jobs, |&(reg, k)| fit_cell(c, &splits[k], reg, seeds[k]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let test_reads: usize = splits.iter().map(|s| s.test.reads()).sum();

    let pgd = AttackConfig {
        kind: AttackKind::Pgd,
        ..c.attack.clone()
    };
    let columns: &[&str] = match sub {
        Subcommand::Classify => &[
            "alpha",
            "clean_acc",
            "pgd_acc",
            "max_linf",
            "violations",
            "final_loss",
            "delta_achieved",
        ],
        _ => &["alpha", "clean_acc", "attacked_acc", "max_linf", "violations", "final_loss", "delta_achieved"],
    };
    let mut report = ExperimentReport::new(columns);
    let attacks: Vec<AttackKind> = if sub == Subcommand::Classify { vec![AttackKind::Pgd] } else { c.attacks.clone() };
    let eval_jobs: Vec<(usize, AttackKind)> =
        (0..jobs.len()).flat_map(|j| attacks.iter().map(move |&a| (j, a))).collect();
    let results = par::map(ExecMode::Parallel, &eval_jobs, |&(j, kind)| -> Result<Vec<f64>> {
        let (_, k) = jobs[j];
        let t = &trained[j];
        let test = &splits[k].test;
        let x = test.samples();
        let r = match kind {
            AttackKind::Pgd => robust_accuracy(&t.net, x, &test.labels, Some(Attacker::WhiteBox(&pgd)), ExecMode::Sequential)?,
            AttackKind::Fgsm => {
                let fgsm = AttackConfig {
                    kind: AttackKind::Fgsm,
                    step: c.attack.bound,
                    ..c.attack.clone()
                };
                robust_accuracy(&t.net, x, &test.labels, Some(Attacker::WhiteBox(&fgsm)), ExecMode::Sequential)?
            }
            AttackKind::Transfer => {
                // The attacker queries the victim on the training and
                // validation inputs, never on the evaluation points.
                let s = &splits[k];
                let mut pool = s.train.samples().to_vec();
                pool.extend_from_slice(s.val.samples());
                pool.truncate(c.attack.substitute.pool_size * s.train.d);
                let net = &t.net;
                let ta = TransferAttack::fit(
                    |q: &[f64]| net.predict(q),
                    &pool,
                    s.train.d,
                    s.train.classes,
                    &c.attack.substitute,
                    crate::mix_seed(seeds[k], 21),
                )?;
                robust_accuracy(net, x, &test.labels, Some(Attacker::Transfer(&ta, &pgd)), ExecMode::Sequential)?
            }
        };
        let linf = r.linf_norms.iter().copied().fold(0.0, f64::max);
        Ok(vec![
            t.alpha,
            r.clean_accuracy,
            r.attacked_accuracy,
            linf,
            r.constraint_violations as f64,
            t.report.final_loss,
            t.report.delta_achieved,
        ])
    });
    for (&(j, kind), values) in eval_jobs.iter().zip(results) {
        let (reg, k) = jobs[j];
        let cell = match (sub, c.dataset) {
            (Subcommand::Classify, DatasetKind::TwoMoons) => "two-moons".to_string(),
            (Subcommand::Classify, DatasetKind::Mnist100) => "mnist-100".to_string(),
            _ => format!("{kind:?}").to_lowercase(),
        };
        report.push(reg.name(), seeds[k], &cell, values?);
    }
    // Rows are assembled attack-major within a cell; reorder to (method,
    // seed, cell).
    let order = |m: &str| regs.iter().position(|r| r.name() == m).unwrap_or(usize::MAX);
    let seed_pos = |s: u64| seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    let cell_pos = |cell: &str| attacks.iter().position(|a| format!("{a:?}").to_lowercase() == cell).unwrap_or(0);
    report.rows.sort_by_key(|r| (order(&r.method), seed_pos(r.seed), cell_pos(&r.cell)));

    report.check(
        "test_unread_during_training",
        true,
        test_reads == 0,
        format!("{test_reads} test reads before evaluation"),
    );
    row_count_check(&mut report, regs.len(), seeds.len(), attacks.len());
    let violations: f64 = report.rows.iter().map(|r| r.values[4]).sum();
    report.check("attack_constraints", true, violations == 0.0, format!("{violations} constraint violations"));
    finite_check(&mut report, &["final_loss"]);
    if sub == Subcommand::Classify {
        ordering_checks(&mut report, &regs);
    }
    Ok(report)
}

/// Paired one-sided comparisons over seeds. A strict ordering needs a
/// significant test; `≥` needs the reverse test to be insignificant.
fn ordering_checks(report: &mut ExperimentReport, regs: &[RegKind]) {
    let Some(cell) = report.rows.first().map(|r| r.cell.clone()) else { return };
    let get = |r: &ExperimentReport, m: RegKind, col: &str| r.values(m.name(), &cell, col);
    let has = |m: RegKind| regs.contains(&m);
    let base = RegKind::None;
    let base_pgd = get(report, base, "pgd_acc");
    let base_clean = get(report, base, "clean_acc");
    for m in [RegKind::Tv, RegKind::Tik] {
        if has(m) {
            let v = get(report, m, "pgd_acc");
            let p = paired_t_greater(&v, &base_pgd);
            report.check(
                &format!("{}_pgd_above_baseline", m.name()),
                false,
                p < SIGNIFICANCE,
                format!("mean {:.4} vs {:.4}, p = {p:.4}", mean(&v), mean(&base_pgd)),
            );
        }
    }
    if has(RegKind::Alp) {
        let alp = get(report, RegKind::Alp, "pgd_acc");
        let mut rivals = vec![(base, base_pgd.clone())];
        if has(RegKind::At) {
            rivals.push((RegKind::At, get(report, RegKind::At, "pgd_acc")));
        }
        for (m, v) in rivals {
            let p = paired_t_greater(&v, &alp);
            report.check(
                &format!("alp_pgd_not_below_{}", m.name()),
                false,
                p >= SIGNIFICANCE,
                format!("mean {:.4} vs {:.4}, reverse p = {p:.4}", mean(&alp), mean(&v)),
            );
        }
    }
    let shifted: Vec<f64> = base_clean.iter().map(|b| b - 0.02).collect();
    for &m in regs.iter().filter(|&&m| m != base) {
        let v = get(report, m, "clean_acc");
        let p = paired_t_greater(&shifted, &v);
        report.check(
            &format!("{}_clean_within_2pp", m.name()),
            false,
            p >= SIGNIFICANCE,
            format!("mean {:.4} vs baseline {:.4}, reverse p = {p:.4}", mean(&v), mean(&base_clean)),
        );
    }
    for m in [RegKind::Gtv, RegKind::Gtik] {
        if has(m) {
            let v = get(report, m, "clean_acc");
            let p = paired_t_greater(&base_clean, &v);
            report.check(
                &format!("{}_clean_not_below_baseline", m.name()),
                false,
                p >= SIGNIFICANCE,
                format!("mean {:.4} vs {:.4}, reverse p = {p:.4}", mean(&v), mean(&base_clean)),
            );
        }
    }
}
