//! Experiment configuration: a TOML file with top-level `seeds` and
//! `output`, plus one optional section per subcommand.
//!
//! Every section rejects unknown keys, and [`ExperimentConfig::parse`]
//! validates the resolved values, so a bad file fails before any compute.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackKind};
use crate::error::{Error, Result};
use crate::losses::RegKind;
use crate::quadrature::Functional;
use crate::variational::{GapSettings, PdeSettings, TvData, TvSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Approx,
    Pde,
    Rof,
    Quadgap,
    Rademacher,
    Classify,
    AttackEval,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Approx,
        Subcommand::Pde,
        Subcommand::Rof,
        Subcommand::Quadgap,
        Subcommand::Rademacher,
        Subcommand::Classify,
        Subcommand::AttackEval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Approx => "approx",
            Subcommand::Pde => "pde",
            Subcommand::Rof => "rof",
            Subcommand::Quadgap => "quadgap",
            Subcommand::Rademacher => "rademacher",
            Subcommand::Classify => "classify",
            Subcommand::AttackEval => "attack-eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!("unknown subcommand `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Regularization weights used when a method's `α` is not given.
pub fn table1_alpha(reg: RegKind) -> f64 {
    match reg {
        RegKind::None => 0.0,
        RegKind::Tv => 0.005,
        RegKind::Tik => 0.001,
        RegKind::Gtv => 0.001,
        RegKind::Gtik => 0.005,
        RegKind::L2 => 0.05,
        RegKind::At | RegKind::Alp => 1.0,
    }
}

/// Candidate weights for validation-based selection.
pub const ALPHA_GRID: [f64; 6] = [1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxConfig {
    pub m_grid: Vec<usize>,
    /// `"relu"` and/or `"softplus"`.
    pub activations: Vec<String>,
    pub max_retries: usize,
    /// Target `Π cos(π k_i x_i)`; the dimension is the length.
    pub wavenumbers: Vec<usize>,
    pub sup_points: usize,
    pub gap_slack: f64,
    /// Allowed ratio of the mean Monte Carlo error² to `2 C_f²/m`.
    pub mc_slack: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![16, 64, 256, 1024],
            activations: vec!["relu".into(), "softplus".into()],
            max_retries: 10,
            wavenumbers: vec![1],
            sup_points: 1000,
            gap_slack: 2.0,
            mc_slack: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    pub wavenumbers: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub train: PdeSettings,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            wavenumbers: vec![1],
            m_grid: vec![64],
            n_grid: vec![128, 512, 2048, 8192],
            train: PdeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RofConfig {
    pub m: usize,
    pub n: usize,
    pub data: Vec<TvData>,
    /// Largest allowed relative gap of the median objective to the oracle.
    pub tolerance: f64,
    pub train: TvSettings,
}

impl Default for RofConfig {
    fn default() -> Self {
        let a = 1.0 + std::f64::consts::PI.powi(2);
        Self {
            m: 128,
            n: 2048,
            data: vec![TvData::Constant(1.0), TvData::Cosine(a), TvData::Ramp(a, 4.0)],
            tolerance: 0.05,
            train: TvSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadgapConfig {
    pub wavenumbers: Vec<usize>,
    pub m: usize,
    pub n_grid: Vec<usize>,
    pub functionals: Vec<Functional>,
    pub bound: f64,
    pub ensemble: usize,
}

impl Default for QuadgapConfig {
    fn default() -> Self {
        let g = GapSettings::default();
        Self {
            wavenumbers: vec![1],
            m: 64,
            n_grid: vec![256, 1024, 4096, 16384],
            functionals: vec![Functional::Tv, Functional::Tik],
            bound: g.bound,
            ensemble: g.ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RademacherConfig {
    pub m: usize,
    pub d: usize,
    pub bound: f64,
    pub ensemble: usize,
    pub n_grid: Vec<usize>,
    pub n_sigma: usize,
}

impl Default for RademacherConfig {
    fn default() -> Self {
        Self {
            m: 64,
            d: 1,
            bound: 1.0,
            ensemble: 32,
            n_grid: vec![256, 1024, 4096],
            n_sigma: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    TwoMoons,
    #[serde(rename = "mnist-100")]
    Mnist100,
}

/// Shared by `classify` and `attack-eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub dataset: DatasetKind,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    /// Two-moons noise (raw coordinates).
    pub noise: f64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Evaluation files; without them evaluation rows come from the
    /// training files, disjoint from the training and validation rows.
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub methods: Vec<String>,
    /// Per-method `α`; missing methods get the Table 1 weights.
    pub alpha: BTreeMap<String, f64>,
    /// Pick each method's `α` from `alpha_grid` by validation accuracy.
    pub select_alpha: bool,
    pub alpha_grid: Vec<f64>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub neighbors_per_sample: usize,
    /// Used for AT/ALP training and for evaluation.
    pub attack: AttackConfig,
    /// `attack-eval` only: which attacks to run.
    pub attacks: Vec<AttackKind>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::TwoMoons,
            train_size: 100,
            val_size: 100,
            test_size: 1000,
            noise: 0.3,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            methods: RegKind::ALL.iter().map(|r| r.name().to_string()).collect(),
            alpha: BTreeMap::new(),
            select_alpha: false,
            alpha_grid: ALPHA_GRID.to_vec(),
            hidden: vec![64],
            epochs: 2000,
            lr: 1e-2,
            batch_size: 32,
            neighbors_per_sample: 2,
            attack: AttackConfig {
                step: 0.005,
                bound: 0.05,
                ..AttackConfig::default()
            },
            attacks: vec![AttackKind::Fgsm, AttackKind::Pgd, AttackKind::Transfer],
        }
    }
}

impl ClassifyConfig {
    /// Parsed methods in configured order.
    pub fn regs(&self) -> Result<Vec<RegKind>> {
        self.methods
            .iter()
            .map(|m| RegKind::parse(m).ok_or_else(|| Error::Config(format!("unknown method `{m}`"))))
            .collect()
    }

    pub fn alpha_for(&self, reg: RegKind) -> f64 {
        self.alpha.get(reg.name()).copied().unwrap_or_else(|| table1_alpha(reg))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seeds: Option<Vec<u64>>,
    output: Option<PathBuf>,
    approx: Option<ApproxConfig>,
    pde: Option<PdeConfig>,
    rof: Option<RofConfig>,
    quadgap: Option<QuadgapConfig>,
    rademacher: Option<RademacherConfig>,
    classify: Option<ClassifyConfig>,
    #[serde(rename = "attack-eval")]
    attack_eval: Option<ClassifyConfig>,
}

/// The resolved settings of one subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Section {
    Approx(ApproxConfig),
    Pde(PdeConfig),
    Rof(RofConfig),
    Quadgap(QuadgapConfig),
    Rademacher(RademacherConfig),
    Classify(ClassifyConfig),
    AttackEval(ClassifyConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub section: Section,
}

#[derive(Serialize)]
struct Echo<'a> {
    subcommand: &'a str,
    seeds: &'a [u64],
    output: &'a PathBuf,
    #[serde(flatten)]
    section: &'a Section,
}

fn default_seeds(sub: Subcommand) -> Vec<u64> {
    let n = match sub {
        Subcommand::Approx => 20,
        Subcommand::Pde | Subcommand::Rof => 5,
        Subcommand::Rademacher => 1,
        Subcommand::Quadgap | Subcommand::Classify | Subcommand::AttackEval => 10,
    };
    (0..n).collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_grid(name: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(bad(format!("{name} must be a nonempty list of positive sizes")));
    }
    Ok(())
}

fn check_wavenumbers(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.len() > 3 || ks.contains(&0) {
        return Err(bad("wavenumbers must hold 1 to 3 positive integers"));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn validate_classify(c: &mut ClassifyConfig, sub: Subcommand) -> Result<()> {
    let regs = c.regs()?;
    if regs.is_empty() {
        return Err(bad("methods must not be empty"));
    }
    if !regs.contains(&RegKind::None) && sub == Subcommand::Classify {
        return Err(bad("classify needs the baseline method for its comparisons"));
    }
    for (k, &a) in &c.alpha {
        if RegKind::parse(k).is_none() {
            return Err(bad(format!("alpha given for unknown method `{k}`")));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(bad(format!("alpha for `{k}` must be finite and >= 0")));
        }
    }
    // Resolve every weight so the echo is complete.
    for &r in &regs {
        let a = c.alpha_for(r);
        c.alpha.insert(r.name().to_string(), a);
    }
    if c.select_alpha && (c.alpha_grid.is_empty() || c.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite()))) {
        return Err(bad("alpha_grid must be a nonempty list of finite weights >= 0"));
    }
    match c.dataset {
        DatasetKind::TwoMoons => {
            for (name, n) in [("train_size", c.train_size), ("val_size", c.val_size), ("test_size", c.test_size)] {
                if n == 0 || n % 2 != 0 {
                    return Err(bad(format!("{name} must be positive and even for two-moons")));
                }
            }
            if !(c.noise >= 0.0 && c.noise.is_finite()) {
                return Err(bad("noise must be finite and >= 0"));
            }
        }
        DatasetKind::Mnist100 => {
            if c.images.is_none() || c.labels.is_none() {
                return Err(bad("mnist-100 needs `images` and `labels` paths"));
            }
            if c.test_images.is_some() != c.test_labels.is_some() {
                return Err(bad("give both test_images and test_labels or neither"));
            }
            if c.train_size == 0 || c.test_size == 0 {
                return Err(bad("train_size and test_size must be positive"));
            }
        }
    }
    if c.hidden.contains(&0) {
        return Err(bad("hidden widths must be positive"));
    }
    if c.epochs == 0 || c.batch_size == 0 {
        return Err(bad("epochs and batch_size must be positive"));
    }
    check_positive("lr", c.lr)?;
    c.attack.validate()?;
    if c.attack.kind != AttackKind::Pgd {
        return Err(bad("the training/evaluation attack must be pgd; list others under `attacks`"));
    }
    if c.attack.bound <= 0.0 {
        return Err(bad("attack bound must be positive"));
    }
    match sub {
        Subcommand::Classify => {
            if c.attacks != [AttackKind::Pgd] && c.attacks != ClassifyConfig::default().attacks {
                return Err(bad("classify always evaluates pgd; `attacks` belongs to attack-eval"));
            }
            c.attacks = vec![AttackKind::Pgd];
        }
        _ => {
            if c.attacks.is_empty() {
                return Err(bad("attacks must not be empty"));
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates `text` for `subcommand`.
    pub fn parse(subcommand: &str, text: &str) -> Result<Self> {
        let sub = Subcommand::parse(subcommand)?;
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let seeds = raw.seeds.unwrap_or_else(|| default_seeds(sub));
        if seeds.is_empty() {
            return Err(bad("seeds must not be empty"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(bad("seeds must be distinct"));
        }
        let output = raw.output.unwrap_or_else(|| PathBuf::from(format!("{}.csv", sub.name())));
        let section = match sub {
            Subcommand::Approx => {
                let c = raw.approx.unwrap_or_default();
                check_grid("m_grid", &c.m_grid)?;
                check_wavenumbers(&c.wavenumbers)?;
                if c.activations.is_empty() || c.activations.iter().any(|a| a != "relu" && a != "softplus") {
                    return Err(bad("activations must be a nonempty subset of [\"relu\", \"softplus\"]"));
                }
                if c.sup_points < 2 {
                    return Err(bad("sup_points must be at least 2"));
                }
                check_positive("gap_slack", c.gap_slack)?;
                check_positive("mc_slack", c.mc_slack)?;
                Section::Approx(c)
            }
            Subcommand::Pde => {
                let c = raw.pde.unwrap_or_default();
                check_wavenumbers(&c.wavenumbers)?;
                check_grid("m_grid", &c.m_grid)?;
                check_grid("n_grid", &c.n_grid)?;
                check_positive("lr", c.train.lr)?;
                check_positive("bound_factor", c.train.bound_factor)?;
                if !(c.train.alpha >= 0.0) {
                    return Err(bad("alpha must be >= 0"));
                }
                Section::Pde(c)
            }
            Subcommand::Rof => {
                let c = raw.rof.unwrap_or_default();
                if c.m == 0 || c.n == 0 || c.data.is_empty() {
                    return Err(bad("rof needs positive m and n and at least one data set"));
                }
                check_positive("lr", c.train.lr)?;
                check_positive("bound", c.train.bound)?;
                check_positive("alpha", c.train.alpha)?;
                check_positive("tolerance", c.tolerance)?;
                if c.train.eval_nodes == 0 {
                    return Err(bad("eval_nodes must be positive"));
                }
                Section::Rof(c)
            }
            Subcommand::Quadgap => {
                let c = raw.quadgap.unwrap_or_default();
                check_wavenumbers(&c.wavenumbers)?;
                check_grid("n_grid", &c.n_grid)?;
                if c.n_grid.len() < 3 {
                    return Err(bad("quadgap fits an exponent and needs at least 3 n_grid sizes"));
                }
                if c.m == 0 || c.functionals.is_empty() {
                    return Err(bad("quadgap needs positive m and at least one functional"));
                }
                if c.ensemble < 32 {
                    return Err(bad("ensemble must hold at least 32 nets"));
                }
                check_positive("bound", c.bound)?;
                Section::Quadgap(c)
            }
            Subcommand::Rademacher => {
                let c = raw.rademacher.unwrap_or_default();
                check_grid("n_grid", &c.n_grid)?;
                if c.n_grid.len() < 3 {
                    return Err(bad("rademacher fits an exponent and needs at least 3 n_grid sizes"));
                }
                if c.m == 0 || c.d == 0 || c.ensemble == 0 || c.n_sigma == 0 {
                    return Err(bad("m, d, ensemble and n_sigma must be positive"));
                }
                check_positive("bound", c.bound)?;
                Section::Rademacher(c)
            }
            Subcommand::Classify => {
                let mut c = raw.classify.unwrap_or_default();
                validate_classify(&mut c, sub)?;
                Section::Classify(c)
            }
            Subcommand::AttackEval => {
                let mut c = raw.attack_eval.unwrap_or_default();
                validate_classify(&mut c, sub)?;
                Section::AttackEval(c)
            }
        };
        Ok(Self {
            subcommand: sub,
            seeds,
            output,
            section,
        })
    }

    pub fn load(subcommand: &str, path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(subcommand, &text)
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        let echo = Echo {
            subcommand: self.subcommand.name(),
            seeds: &self.seeds,
            output: &self.output,
            section: &self.section,
        };
        toml::to_string(&echo).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_and_field_rejected() {
        assert!(matches!(ExperimentConfig::parse("train", ""), Err(Error::Config(_))));
        let err = ExperimentConfig::parse("pde", "[pde]\nepochs = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(ExperimentConfig::parse("pde", "sedes = [1]").is_err());
        assert!(ExperimentConfig::parse("classify", "[classify]\nmethods = [\"baseline\", \"dropout\"]").is_err());
    }

    #[test]
    fn mnist_alpha_defaults_injected() {
        let text = "[classify]\ndataset = \"mnist-100\"\nimages = \"a\"\nlabels = \"b\"\n";
        let cfg = ExperimentConfig::parse("classify", text).unwrap();
        let Section::Classify(c) = &cfg.section else { panic!() };
        assert_eq!(c.alpha["tv"], 0.005);
        assert_eq!(c.alpha["gtik"], 0.005);
        assert_eq!(c.alpha["alp"], 1.0);
        let text = "[classify]\nmethods = [\"baseline\", \"tv\"]\nalpha = { tv = 0.02 }\n";
        let cfg = ExperimentConfig::parse("classify", text).unwrap();
        let Section::Classify(c) = &cfg.section else { panic!() };
        assert_eq!(c.alpha["tv"], 0.02);
        assert_eq!(c.alpha.len(), 2);
    }

    #[test]
    fn echo_round_trips_through_sections() {
        let cfg = ExperimentConfig::parse("rof", "seeds = [3, 4]\n[rof]\nm = 16\n").unwrap();
        let text = cfg.to_toml();
        assert!(text.contains("subcommand = \"rof\""), "{text}");
        let mut lines: Vec<&str> = text.lines().filter(|l| !l.starts_with("subcommand")).collect();
        lines.retain(|l| !l.is_empty());
        let again = ExperimentConfig::parse("rof", &lines.join("\n")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn attack_eval_reads_its_own_section() {
        let cfg = ExperimentConfig::parse("attack-eval", "[attack-eval]\nattacks = [\"fgsm\"]\n").unwrap();
        let Section::AttackEval(c) = &cfg.section else { panic!() };
        assert_eq!(c.attacks, vec![AttackKind::Fgsm]);
        assert!(ExperimentConfig::parse("classify", "[classify]\nattacks = [\"fgsm\"]\n").is_err());
    }
}
