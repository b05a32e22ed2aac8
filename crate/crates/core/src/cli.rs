//! Command-line experiment driver: config resolution, subcommand dispatch and
//! CSV/JSON emission.
//!
//! Every CSV starts with a `#` line holding the resolved config and seed.
//! Outputs are assembled in memory and written only after the whole
//! computation succeeded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::circuit::{ansatz_block, build_brickwise, build_model_circuit, extract_lightcone, AnsatzKind, BrickwiseLayout};
use crate::error::{QfmError, Result};
use crate::fourier::{coefficient_statistics, extract_coefficients, norm_bound_check};
use crate::moments::{empirical_epsilon_monomial, empirical_epsilon_spectral, MAX_SPECTRAL_DIM};
use crate::rng::{par_map, task_rng, with_threads, SEED_ENV};
use crate::simulator::{evaluate, Observable, Params};
use crate::spectrum::{build_encoding, full_redundancy, CustomEigs, EncodingSpec, RedundancyTable, Strategy};
use crate::theory::{
    bound_approx_2design, bound_local_2design, reuploading_tables, var_2design_exact, var_2design_lightcone,
    var_2design_reuploading, var_2design_single, LocalCase, NormKind, TheoryInputs,
};
use crate::trainer::{train, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    VarianceMc,
    VarianceTheory,
    Bounds,
    Epsilon,
    Lightcone,
    Train,
    NormCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::VarianceMc => "variance-mc",
            Command::VarianceTheory => "variance-theory",
            Command::Bounds => "bounds",
            Command::Epsilon => "epsilon",
            Command::Lightcone => "lightcone",
            Command::Train => "train",
            Command::NormCheck => "norm-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzName {
    #[value(alias = "sel")]
    StronglyEntangling,
    TwoDesign,
    Haar,
    LocalBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableName {
    /// `|0…0⟩⟨0…0|`.
    Global,
    /// Average of single-qubit `|0⟩⟨0|`.
    Local,
    /// Rank-`r` projector on a few qubits.
    Projector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Nonzero frequency of largest redundancy.
    High,
    /// Largest frequency.
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingSection {
    pub strategy: Strategy,
    pub n: usize,
    pub layers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomEigs>,
}

impl Default for EncodingSection {
    fn default() -> Self {
        EncodingSection {
            strategy: Strategy::Pauli,
            n: 2,
            layers: 1,
            custom: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzSection {
    pub kind: AnsatzName,
    pub reps: usize,
    pub depth: usize,
    /// Locality `m`: block size of local blocks and brickwise bricks.
    pub m: usize,
    pub rows: usize,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        AnsatzSection {
            kind: AnsatzName::Haar,
            reps: 5,
            depth: 2,
            m: 2,
            rows: 2,
        }
    }
}

impl AnsatzSection {
    pub fn kind(&self) -> AnsatzKind {
        match self.kind {
            AnsatzName::StronglyEntangling => AnsatzKind::StronglyEntangling { reps: self.reps },
            AnsatzName::TwoDesign => AnsatzKind::SimplifiedTwoDesign { depth: self.depth },
            AnsatzName::Haar => AnsatzKind::Haar,
            AnsatzName::LocalBlocks => AnsatzKind::LocalBlocks {
                m: self.m,
                rows: self.rows,
                reps: self.reps,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrickwiseSection {
    pub l1: usize,
    pub l2: usize,
    pub site: usize,
}

impl Default for BrickwiseSection {
    fn default() -> Self {
        BrickwiseSection { l1: 1, l2: 1, site: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservableSection {
    pub kind: ObservableName,
    pub rank: usize,
    /// Projector qubits; defaults to the first `m` qubits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubits: Option<Vec<usize>>,
}

impl Default for ObservableSection {
    fn default() -> Self {
        ObservableSection {
            kind: ObservableName::Global,
            rank: 1,
            qubits: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    /// Use the exact recursion instead of the closed forms.
    pub exact: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub eps: f64,
    /// `None` emits every norm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSection {
    pub spectral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Physical target frequency; overrides `target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    pub target: TargetKind,
    pub amplitude: f64,
    pub offset: f64,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    pub snapshot_period: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            omega: None,
            target: TargetKind::High,
            amplitude: t.amplitude,
            offset: t.offset,
            epochs: t.epochs,
            lr: t.lr,
            optimizer: t.optimizer,
            grid: None,
            snapshot_period: t.snapshot_period,
        }
    }
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Command>,
    pub encoding: EncodingSection,
    pub ansatz: AnsatzSection,
    pub brickwise: BrickwiseSection,
    pub observable: ObservableSection,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub theory: TheorySection,
    pub bounds: BoundsSection,
    pub epsilon: EpsilonSection,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            subcommand: None,
            encoding: EncodingSection::default(),
            ansatz: AnsatzSection::default(),
            brickwise: BrickwiseSection::default(),
            observable: ObservableSection::default(),
            samples: 1000,
            seed: None,
            output: None,
            threads: None,
            theory: TheorySection::default(),
            bounds: BoundsSection::default(),
            epsilon: EpsilonSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| QfmError::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| QfmError::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Config as recorded in output headers: no output path or thread count,
    /// so reruns elsewhere or on other pools compare byte for byte.
    pub fn header_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.threads = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfm", version, about = "Quantum Fourier model spectra, coefficient statistics and variance bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Frequency spectrum with redundancies.
    Spectrum(Common),
    /// Monte-Carlo mean and variance of every Fourier coefficient.
    VarianceMc(Common),
    /// Closed-form 2-design coefficient variances.
    VarianceTheory {
        #[command(flatten)]
        common: Common,
        /// Exact recursion instead of the closed forms.
        #[arg(long)]
        exact: bool,
    },
    /// Approximate 2-design variance bounds for a given ε.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
        /// diamond, spectral or monomial (default: all).
        #[arg(long)]
        norm: Option<NormKind>,
    },
    /// Distance of a trainable block to a unitary 2-design.
    Epsilon {
        #[command(flatten)]
        common: Common,
        /// Also estimate the spectral-norm distance (d ≤ 8).
        #[arg(long)]
        spectral: bool,
    },
    /// Brickwise light-cone variances against the local bounds.
    Lightcone {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        l1: Option<usize>,
        #[arg(long)]
        l2: Option<usize>,
        /// Observable brick in the final row.
        #[arg(long)]
        site: Option<usize>,
    },
    /// Fit `offset + amplitude·cos(ωx)` by gradient descent.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Check `Σ|c_ω|² ≤ ‖O‖∞²` over random parameters.
    NormCheck(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pauli, exponential, golomb or custom.
    #[arg(long = "encoding")]
    pub strategy: Option<Strategy>,
    #[arg(short = 'n', long = "qubits")]
    pub n: Option<usize>,
    #[arg(short = 'L', long = "layers")]
    pub layers: Option<usize>,
    #[arg(long)]
    pub ansatz: Option<AnsatzName>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Locality of local blocks and brickwise bricks.
    #[arg(short = 'm', long = "locality")]
    pub m: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub observable: Option<ObservableName>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Master seed (falls back to the config, then QFM_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (directory for `train`); stdout when omitted.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Physical target frequency.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Pick the target from the spectrum when no ω is given.
    #[arg(long)]
    pub target: Option<TargetKind>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    /// Grid points per period (default: Nyquist count).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub snapshot_period: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        set!(cfg.encoding.strategy, self.strategy);
        set!(cfg.encoding.n, self.n);
        set!(cfg.encoding.layers, self.layers);
        set!(cfg.ansatz.kind, self.ansatz);
        set!(cfg.ansatz.reps, self.reps);
        set!(cfg.ansatz.depth, self.depth);
        set!(cfg.ansatz.m, self.m);
        set!(cfg.ansatz.rows, self.rows);
        set!(cfg.observable.kind, self.observable);
        set!(cfg.observable.rank, self.rank);
        set!(cfg.samples, self.samples);
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
    }
}

impl CliCommand {
    fn common(&self) -> &Common {
        match self {
            CliCommand::Spectrum(c) | CliCommand::VarianceMc(c) | CliCommand::NormCheck(c) => c,
            CliCommand::VarianceTheory { common, .. }
            | CliCommand::Bounds { common, .. }
            | CliCommand::Epsilon { common, .. }
            | CliCommand::Lightcone { common, .. }
            | CliCommand::Train { common, .. } => common,
        }
    }

    fn command(&self) -> Command {
        match self {
            CliCommand::Spectrum(_) => Command::Spectrum,
            CliCommand::VarianceMc(_) => Command::VarianceMc,
            CliCommand::VarianceTheory { .. } => Command::VarianceTheory,
            CliCommand::Bounds { .. } => Command::Bounds,
            CliCommand::Epsilon { .. } => Command::Epsilon,
            CliCommand::Lightcone { .. } => Command::Lightcone,
            CliCommand::Train { .. } => Command::Train,
            CliCommand::NormCheck(_) => Command::NormCheck,
        }
    }

    /// Merges the config file, flags and seed fallbacks.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let common = self.common();
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let cmd = self.command();
        if let Some(file_cmd) = cfg.subcommand {
            if file_cmd != cmd {
                return Err(QfmError::InvalidArgument(format!(
                    "config is for '{}' but '{}' was requested",
                    file_cmd.name(),
                    cmd.name()
                )));
            }
        }
        cfg.subcommand = Some(cmd);
        common.apply(&mut cfg);
        match self {
            CliCommand::VarianceTheory { exact, .. } => cfg.theory.exact |= *exact,
            CliCommand::Bounds { eps, norm, .. } => {
                set!(cfg.bounds.eps, *eps);
                if norm.is_some() {
                    cfg.bounds.norm = *norm;
                }
            }
            CliCommand::Epsilon { spectral, .. } => cfg.epsilon.spectral |= *spectral,
            CliCommand::Lightcone { l1, l2, site, .. } => {
                set!(cfg.brickwise.l1, *l1);
                set!(cfg.brickwise.l2, *l2);
                set!(cfg.brickwise.site, *site);
            }
            CliCommand::Train { train: t, .. } => {
                if t.omega.is_some() {
                    cfg.train.omega = t.omega;
                }
                set!(cfg.train.target, t.target);
                set!(cfg.train.amplitude, t.amplitude);
                set!(cfg.train.offset, t.offset);
                set!(cfg.train.epochs, t.epochs);
                set!(cfg.train.lr, t.lr);
                set!(cfg.train.optimizer, t.optimizer);
                if t.grid.is_some() {
                    cfg.train.grid = t.grid;
                }
                set!(cfg.train.snapshot_period, t.snapshot_period);
            }
            _ => {}
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(match std::env::var(SEED_ENV) {
                Ok(s) => s
                    .trim()
                    .parse()
                    .map_err(|_| QfmError::InvalidArgument(format!("{SEED_ENV}='{s}' is not a u64")))?,
                Err(_) => 0,
            });
        }
        Ok(cfg)
    }
}

/// One output file: a name inside the output directory (`train`) or `None`
/// for the single output of the other subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: Option<&'static str>,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

fn header(cfg: &ExperimentConfig) -> String {
    format!(
        "# qfm {} seed={} config={}\n",
        cfg.subcommand.map_or("?", |c| c.name()),
        cfg.seed(),
        cfg.header_json()
    )
}

fn csv(cfg: &ExperimentConfig, columns: &str) -> String {
    let mut s = header(cfg);
    s.push_str(columns);
    s.push('\n');
    s
}

fn encoding(cfg: &ExperimentConfig) -> Result<EncodingSpec> {
    let e = &cfg.encoding;
    if e.strategy == Strategy::Custom && e.custom.is_none() {
        return Err(QfmError::InvalidArgument(
            "custom encoding needs an encoding.custom section in the config".into(),
        ));
    }
    build_encoding(e.strategy, e.n, e.layers, e.custom.as_ref())
}

fn observable(cfg: &ExperimentConfig, n: usize) -> Result<Observable> {
    match cfg.observable.kind {
        ObservableName::Global => Ok(Observable::global_zero(n)),
        ObservableName::Local => Ok(Observable::local_zero_average(n)),
        ObservableName::Projector => {
            let qubits = match &cfg.observable.qubits {
                Some(q) => q.clone(),
                None => (0..cfg.ansatz.m.min(n)).collect(),
            };
            Observable::local_projector(n, &qubits, cfg.observable.rank)
        }
    }
}

fn need_samples(cfg: &ExperimentConfig, min: usize) -> Result<()> {
    if cfg.samples < min {
        return Err(QfmError::InvalidArgument(format!(
            "at least {min} samples are required (got {})",
            cfg.samples
        )));
    }
    Ok(())
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let table = full_redundancy(&encoding(cfg)?)?;
    let mut out = csv(cfg, "omega,redundancy,normalized_redundancy");
    for (w, r) in table.iter() {
        writeln!(out, "{},{},{}", table.physical(w), r, table.normalized(w)).unwrap();
    }
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!(
            "spectrum: {} frequencies, {} paths",
            table.len(),
            table.total_paths()
        ),
    })
}

fn run_variance_mc(cfg: &ExperimentConfig) -> Result<Outcome> {
    need_samples(cfg, 2)?;
    let spec = encoding(cfg)?;
    let table = full_redundancy(&spec)?;
    let circuit = build_model_circuit(&spec, cfg.ansatz.kind())?;
    let obs = observable(cfg, spec.n_qubits)?;
    let stats = coefficient_statistics(&circuit, &obs, cfg.samples, cfg.seed())?;
    let mut out = csv(cfg, "omega,redundancy,mean_re,mean_im,var_mc,stderr");
    for e in stats.entries.iter().filter(|e| table.get(e.omega) > 0) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            table.physical(e.omega),
            table.get(e.omega),
            e.mean.re,
            e.mean.im,
            e.variance,
            e.stderr
        )
        .unwrap();
    }
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!("variance-mc: {} frequencies from {} samples", table.len(), cfg.samples),
    })
}

fn run_variance_theory(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = encoding(cfg)?;
    let table = full_redundancy(&spec)?;
    let t = TheoryInputs::from_observable(&observable(cfg, spec.n_qubits)?);
    let mut out = csv(cfg, "omega,redundancy,var_theory,flag");
    let mut row = |w: i64, value: f64, flag: &str| {
        writeln!(out, "{},{},{},{}", table.physical(w), table.get(w), value, flag).unwrap();
    };
    let method = if cfg.theory.exact {
        let exact = var_2design_exact(&t, &spec)?;
        for (w, _) in table.iter() {
            row(w, exact.get(&w).copied().unwrap_or(0.0), "exact");
        }
        "exact recursion"
    } else if spec.n_layers() == 1 {
        for (w, r) in table.iter() {
            let v = var_2design_single(&t, w, r);
            row(w, v.value, v.flag());
        }
        "single layer"
    } else {
        let tables = reuploading_tables(&spec)?;
        for (w, _) in table.iter() {
            let v = var_2design_reuploading(&t, w, &tables);
            row(w, v.value, v.flag());
        }
        "reuploading"
    };
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!("variance-theory: {} frequencies ({method})", table.len()),
    })
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = encoding(cfg)?;
    if spec.n_layers() != 1 {
        return Err(QfmError::Unsupported("approximate 2-design bounds cover single-layer models".into()));
    }
    let table = full_redundancy(&spec)?;
    let t = TheoryInputs::from_observable(&observable(cfg, spec.n_qubits)?);
    let kinds = match cfg.bounds.norm {
        Some(k) => vec![k],
        None => vec![NormKind::Diamond, NormKind::Spectral, NormKind::Monomial],
    };
    let mut out = csv(cfg, "omega,bound_kind,value");
    for (w, r) in table.iter() {
        for &k in &kinds {
            let v = bound_approx_2design(&t, k, cfg.bounds.eps, w, r)?;
            writeln!(out, "{},{},{}", table.physical(w), k.name(), v).unwrap();
        }
    }
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!("bounds: {} frequencies × {} norms at ε={}", table.len(), kinds.len(), cfg.bounds.eps),
    })
}

#[derive(Serialize)]
struct EpsilonJson<'a> {
    d: usize,
    samples: usize,
    seed: u64,
    epsilon_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_inf: Option<f64>,
    stderr: f64,
    argmax_indices: [usize; 8],
    empirical: [f64; 2],
    haar: f64,
    warnings: &'a [String],
    config: serde_json::Value,
}

fn run_epsilon(cfg: &ExperimentConfig) -> Result<Outcome> {
    need_samples(cfg, 2)?;
    let block = ansatz_block(cfg.ansatz.kind(), cfg.encoding.n)?;
    let d = 1usize << block.n_qubits;
    if cfg.epsilon.spectral && d > MAX_SPECTRAL_DIM {
        return Err(QfmError::InvalidArgument(format!(
            "spectral distance needs d <= {MAX_SPECTRAL_DIM} (got {d})"
        )));
    }
    let report = empirical_epsilon_monomial(&block, cfg.samples, cfg.seed())?;
    let epsilon_inf = if cfg.epsilon.spectral {
        Some(empirical_epsilon_spectral(&block, cfg.samples, cfg.seed())?)
    } else {
        None
    };
    let json = EpsilonJson {
        d,
        samples: report.samples,
        seed: report.seed,
        epsilon_m: report.epsilon_m,
        epsilon_inf,
        stderr: report.stderr,
        argmax_indices: report.argmax,
        empirical: [report.empirical.re, report.empirical.im],
        haar: report.haar,
        warnings: &report.warnings,
        config: serde_json::from_str(&cfg.header_json()).expect("config round-trips"),
    };
    let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
    text.push('\n');
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: text }],
        summary: format!(
            "epsilon: d={d}, ε_M={} ± {}{}",
            report.epsilon_m,
            report.stderr,
            epsilon_inf.map_or(String::new(), |e| format!(", ε_∞={e}"))
        ),
    })
}

/// Largest |full − light-cone| expectation over a few random draws.
pub fn lightcone_expectation_gap(
    layout: &BrickwiseLayout,
    circuit: &crate::circuit::Circuit,
    cone: &crate::circuit::LightCone,
    rank: usize,
    seed: u64,
) -> Result<f64> {
    let full_obs = Observable::local_projector(layout.n_qubits, &layout.site_qubits(), rank)?;
    let cone_obs = Observable::local_projector(cone.support.len(), &cone.site, rank)?;
    let mut gap = 0.0f64;
    for draw in 0..4u64 {
        let mut rng = task_rng(seed, u64::MAX - draw);
        let p = Params::sample(circuit, &mut rng);
        let sub = p.restrict(cone);
        for x in [0.0, 0.7, 2.3] {
            let a = evaluate(circuit, &p, &full_obs, x)?;
            let b = evaluate(&cone.sub_circuit, &sub, &cone_obs, x)?;
            gap = gap.max((a - b).abs());
        }
    }
    Ok(gap)
}

fn run_lightcone(cfg: &ExperimentConfig) -> Result<Outcome> {
    need_samples(cfg, 2)?;
    let spec = encoding(cfg)?;
    let layout = BrickwiseLayout {
        n_qubits: spec.n_qubits,
        m: cfg.ansatz.m,
        l1: cfg.brickwise.l1,
        l2: cfg.brickwise.l2,
        site: cfg.brickwise.site,
    };
    let rank = cfg.observable.rank;
    let circuit = build_brickwise(&layout, &spec, cfg.ansatz.kind())?;
    let cone = extract_lightcone(&circuit, &layout)?;
    let cone_obs = Observable::local_projector(cone.support.len(), &cone.site, rank)?;
    let case = LocalCase::Projector { rank };
    bound_local_2design(case, layout.m, layout.l2, 1)?;
    let gap = lightcone_expectation_gap(&layout, &circuit, &cone, rank, cfg.seed())?;
    let stats = coefficient_statistics(&cone.sub_circuit, &cone_obs, cfg.samples, cfg.seed())?;
    let table: &RedundancyTable = &cone.redundancy;
    let mut out = csv(cfg, "omega,redundancy,var_mc,stderr,var_lightcone,bound_local");
    let mut above = 0;
    for e in stats.entries.iter().filter(|e| table.get(e.omega) > 0) {
        let r = table.get(e.omega);
        let bound = bound_local_2design(case, layout.m, layout.l2, r)?;
        let lc = if e.omega == 0 {
            String::new()
        } else {
            var_2design_lightcone(layout.m, layout.l1, layout.l2, rank as f64, rank as f64, e.omega, r)?.to_string()
        };
        above += usize::from(bound >= e.variance);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            table.physical(e.omega),
            r,
            e.variance,
            e.stderr,
            lc,
            bound
        )
        .unwrap();
    }
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!(
            "lightcone: {} cone qubits, bound holds at {above}/{} frequencies, expectation gap {gap:e}",
            cone.support.len(),
            table.len()
        ),
    })
}

fn run_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = encoding(cfg)?;
    let table = full_redundancy(&spec)?;
    let circuit = build_model_circuit(&spec, cfg.ansatz.kind())?;
    let obs = observable(cfg, spec.n_qubits)?;
    let t = &cfg.train;
    let omega = match (t.omega, t.target) {
        (Some(w), _) => w,
        (None, TargetKind::High) => table.physical(
            table
                .max_redundancy_nonzero()
                .ok_or_else(|| QfmError::InvalidArgument("spectrum has no nonzero frequency".into()))?,
        ),
        (None, TargetKind::Low) => table.physical(*table.frequencies().last().expect("spectrum is nonempty")),
    };
    let trace = train(
        &circuit,
        &obs,
        &TrainConfig {
            omega,
            amplitude: t.amplitude,
            offset: t.offset,
            grid: t.grid,
            epochs: t.epochs,
            lr: t.lr,
            optimizer: t.optimizer,
            seed: cfg.seed(),
            snapshot_period: t.snapshot_period,
        },
    )?;
    let mut loss = csv(cfg, "epoch,loss");
    for (e, l) in trace.loss.iter().enumerate() {
        writeln!(loss, "{e},{l}").unwrap();
    }
    let mut coeffs = csv(cfg, "epoch,omega,abs_c");
    for s in &trace.snapshots {
        for (w, c) in &s.coeffs {
            writeln!(coeffs, "{},{w},{c}", s.epoch).unwrap();
        }
    }
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: Some("loss.csv"),
                contents: loss,
            },
            Artifact {
                name: Some("coeffs.csv"),
                contents: coeffs,
            },
        ],
        summary: format!(
            "train: ω={omega} (R={}), final loss {} after {} epochs",
            table.get((omega * table.lattice_scale() as f64).round() as i64),
            trace.final_loss(),
            t.epochs
        ),
    })
}

fn run_norm_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    need_samples(cfg, 1)?;
    let spec = encoding(cfg)?;
    let circuit = build_model_circuit(&spec, cfg.ansatz.kind())?;
    let obs = observable(cfg, spec.n_qubits)?;
    let seed = cfg.seed();
    let reports = par_map(cfg.samples, |i| {
        let p = Params::sample(&circuit, &mut task_rng(seed, i as u64));
        extract_coefficients(&circuit, &p, &obs).map(|cs| norm_bound_check(&cs, &obs))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut out = csv(cfg, "sample,sum_sq,bound,pass");
    for (i, r) in reports.iter().enumerate() {
        writeln!(out, "{i},{},{},{}", r.sum_sq, r.bound, r.pass).unwrap();
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok(Outcome {
        artifacts: vec![Artifact { name: None, contents: out }],
        summary: format!("norm-check: {passed}/{} pass", reports.len()),
    })
}

/// Runs a resolved config on its worker pool.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cmd = cfg
        .subcommand
        .ok_or_else(|| QfmError::InvalidArgument("no subcommand given".into()))?;
    if cmd == Command::Train && cfg.output.is_none() {
        return Err(QfmError::InvalidArgument("train writes loss.csv and coeffs.csv; pass --output DIR".into()));
    }
    if cfg.threads == Some(0) {
        return Err(QfmError::InvalidArgument("--threads must be at least 1".into()));
    }
    with_threads(cfg.threads.unwrap_or(0), || match cmd {
        Command::Spectrum => run_spectrum(cfg),
        Command::VarianceMc => run_variance_mc(cfg),
        Command::VarianceTheory => run_variance_theory(cfg),
        Command::Bounds => run_bounds(cfg),
        Command::Epsilon => run_epsilon(cfg),
        Command::Lightcone => run_lightcone(cfg),
        Command::Train => run_train(cfg),
        Command::NormCheck => run_norm_check(cfg),
    })
}

/// Writes every artifact to a temporary sibling, then renames them into place.
pub fn write_outcome(output: Option<&Path>, outcome: &Outcome) -> Result<()> {
    let Some(output) = output else {
        for a in &outcome.artifacts {
            print!("{}", a.contents);
        }
        return Ok(());
    };
    let mut staged = Vec::new();
    for a in &outcome.artifacts {
        let target = match a.name {
            Some(name) => {
                fs::create_dir_all(output)?;
                output.join(name)
            }
            None => output.to_path_buf(),
        };
        let file_name = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = target.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
        fs::write(&tmp, &a.contents)?;
        staged.push((tmp, target));
    }
    for (tmp, target) in staged {
        fs::rename(&tmp, &target)?;
    }
    Ok(())
}

/// Resolves, runs and writes; returns the summary line and whether the data
/// went to stdout.
pub fn run(cli: &Cli) -> Result<(String, bool)> {
    let cfg = cli.command.resolve()?;
    let outcome = execute(&cfg)?;
    write_outcome(cfg.output.as_deref(), &outcome)?;
    Ok((outcome.summary, cfg.output.is_none()))
}

/// Process exit code for an error.
pub fn exit_code(e: &QfmError) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}
