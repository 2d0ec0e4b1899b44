//! Run configuration: a flat document of dotted keys (`dgp.p = 50`) with a
//! comment above each key. Missing keys take their defaults and unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dnnate::dgp::DgpConfig;
use dnnate::estimators::{ClipSpec, Method, OutcomeSpec, PropensitySpec};
use dnnate::harness::{ExperimentConfig, Nuisance};
use dnnate::ingest::Standardize;
use dnnate::net::{Activation, Architecture, InitScheme, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Dense,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    Fixed,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub threads: usize,
    pub out: String,
    pub ci_level: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            out: "out".into(),
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSection {
    pub p: usize,
    pub tau: f64,
    pub noise_sd: f64,
}

impl Default for DgpSection {
    fn default() -> Self {
        let d = DgpConfig::default();
        Self {
            p: d.p,
            tau: d.tau,
            noise_sd: d.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n: usize,
    pub c: usize,
    pub replications: usize,
    pub estimators: Vec<Method>,
    pub nuisance: Nuisance,
    pub kde_points: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            n: e.inference_n,
            c: e.train_ratio,
            replications: e.replications,
            estimators: e.estimators,
            nuisance: e.nuisance,
            kde_points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSection {
    pub arch: ArchKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub level: usize,
    pub k: usize,
    pub p_star: usize,
    pub m: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub trunc_const: f64,
}

impl Default for OutcomeSection {
    fn default() -> Self {
        Self {
            arch: ArchKind::Dense,
            hidden: vec![51, 51, 51],
            activation: Activation::Sigmoid,
            level: 0,
            k: 1,
            p_star: 2,
            m: 8,
            alpha: 10.0,
            epochs: 800,
            lr: 0.001,
            batch_size: 128,
            trunc_const: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensitySection {
    pub arch: ArchKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub level: usize,
    pub k: usize,
    pub p_star: usize,
    pub m: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip: ClipMode,
    pub clip_lo: f64,
    pub clip_c2: f64,
}

impl Default for PropensitySection {
    fn default() -> Self {
        let o = OutcomeSection::default();
        Self {
            arch: o.arch,
            hidden: o.hidden,
            activation: o.activation,
            level: o.level,
            k: o.k,
            p_star: o.p_star,
            m: o.m,
            alpha: o.alpha,
            epochs: 100,
            lr: o.lr,
            batch_size: o.batch_size,
            clip: ClipMode::Fixed,
            clip_lo: 0.01,
            clip_c2: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub init: InitScheme,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            beta1: t.adam_beta1,
            beta2: t.adam_beta2,
            epsilon: t.adam_epsilon,
            init: t.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: String,
    pub outcome_column: String,
    pub treatment_column: String,
    pub covariates: Vec<String>,
    pub standardize: Standardize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: String::new(),
            outcome_column: "y".into(),
            treatment_column: "t".into(),
            covariates: Vec::new(),
            standardize: Standardize::Minmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub estimators: Vec<Method>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            fractions: vec![0.2, 0.3, 0.4, 0.5],
            repeats: 100,
            estimators: vec![Method::Split, Method::DrSplit],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub dgp: DgpSection,
    pub experiment: ExperimentSection,
    pub outcome: OutcomeSection,
    pub propensity: PropensitySection,
    pub train: TrainSection,
    pub data: DataSection,
    pub estimate: EstimateSection,
}

/// Every configuration key with its description, in document order.
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", "Master seed. Every random stream (data, splits, initialization, batching) derives from it."),
    ("run.threads", "Worker threads for replications and repeats; 0 uses all cores. Results do not depend on it."),
    ("run.out", "Output directory."),
    ("run.ci_level", "Confidence level of the reported intervals, in (0, 1)."),
    ("dgp.p", "Number of uniform covariates in the simulation design (at least 3)."),
    ("dgp.tau", "Constant treatment effect of the simulation design."),
    ("dgp.noise_sd", "Standard deviation of the Gaussian outcome noise."),
    ("experiment.n", "Inference sample size n of each replication."),
    ("experiment.c", "Training-to-inference ratio c; each replication draws (c + 1) n rows and trains on c n of them."),
    ("experiment.replications", "Number of independent replications R."),
    ("experiment.estimators", "Estimators to run: any of \"split\" and \"dr_split\"."),
    ("experiment.nuisance", "\"fitted\" trains networks in each replication; \"oracle\" uses the true regression and propensity."),
    ("experiment.kde_points", "Grid points of the exported density estimates."),
    ("outcome.arch", "Outcome network family: \"dense\" or \"hierarchical\"."),
    ("outcome.hidden", "Hidden layer widths of a dense outcome network."),
    ("outcome.activation", "Hidden activation: \"sigmoid\" or \"relu\"."),
    ("outcome.level", "Hierarchical networks: composition depth l."),
    ("outcome.k", "Hierarchical networks: blocks summed per level, K."),
    ("outcome.p_star", "Hierarchical networks: arity p* of each block."),
    ("outcome.m", "Hierarchical networks: outer units per block, M."),
    ("outcome.alpha", "Hierarchical networks: coefficient bound alpha."),
    ("outcome.epochs", "Training epochs of the outcome network."),
    ("outcome.lr", "Adam learning rate of the outcome network."),
    ("outcome.batch_size", "Mini-batch size of the outcome network."),
    ("outcome.trunc_const", "Outcome predictions are truncated to +-trunc_const * ln(n_train)."),
    ("propensity.arch", "Propensity network family: \"dense\" or \"hierarchical\"."),
    ("propensity.hidden", "Hidden layer widths of a dense propensity network."),
    ("propensity.activation", "Hidden activation: \"sigmoid\" or \"relu\"."),
    ("propensity.level", "Hierarchical networks: composition depth l."),
    ("propensity.k", "Hierarchical networks: blocks summed per level, K."),
    ("propensity.p_star", "Hierarchical networks: arity p* of each block."),
    ("propensity.m", "Hierarchical networks: outer units per block, M."),
    ("propensity.alpha", "Hierarchical networks: coefficient bound alpha."),
    ("propensity.epochs", "Training epochs of the propensity network."),
    ("propensity.lr", "Adam learning rate of the propensity network."),
    ("propensity.batch_size", "Mini-batch size of the propensity network."),
    ("propensity.clip", "\"fixed\" clips to [clip_lo, 1 - clip_lo]; \"log\" uses clip_lo = 1 / (clip_c2 ln n_train)."),
    ("propensity.clip_lo", "Lower clipping level in fixed mode, in (0, 0.5)."),
    ("propensity.clip_c2", "Constant of the log clipping mode."),
    ("train.beta1", "Adam first-moment decay (both networks)."),
    ("train.beta2", "Adam second-moment decay (both networks)."),
    ("train.epsilon", "Adam denominator offset (both networks)."),
    ("train.init", "Weight initialization: \"glorot_uniform\" or \"he_uniform\"."),
    ("data.path", "CSV file for the estimate command."),
    ("data.outcome_column", "Outcome column name."),
    ("data.treatment_column", "Treatment column name; values must be 0 or 1."),
    ("data.covariates", "Covariate column names; empty means every other column, in file order."),
    ("data.standardize", "Covariate scaling: \"none\", \"zscore\" or \"minmax\"."),
    ("estimate.fractions", "Inference-set fractions of the data, each in (0, 1)."),
    ("estimate.repeats", "Random splits per fraction; medians and robust SDs are reported over them."),
    ("estimate.estimators", "Estimators to run: any of \"split\" and \"dr_split\"."),
];

/// Help text listing every key, its default and its meaning.
pub fn keys_help() -> String {
    let defaults = RunConfig::default().to_table();
    let mut s = String::from("Configuration keys (set in --config files or with --set KEY=VALUE):\n");
    for (key, doc) in KEYS {
        let default = lookup(&defaults, key).map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("  {key} = {default}\n      {doc}\n"));
    }
    s
}

fn lookup<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let (section, name) = key.split_once('.')?;
    table.get(section)?.as_table()?.get(name)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl RunConfig {
    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("configuration serializes to a table")
    }

    /// Parses a configuration document.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| invalid(format!("config: {e}")))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {}", e.message())))
    }

    /// Parses a document and applies `KEY=VALUE` overrides. Values are TOML
    /// literals; anything that does not parse as one is taken as a string.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| invalid(format!("config: {e}")))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("override {item:?} is not KEY=VALUE")))?;
            let key = key.trim();
            let (section, name) = key
                .split_once('.')
                .ok_or_else(|| invalid(format!("override key {key:?} is not section.name")))?;
            let value = format!("v = {}", raw.trim())
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let section_table = entry
                .as_table_mut()
                .ok_or_else(|| invalid(format!("config: {section} is not a section")))?;
            section_table.insert(name.to_string(), value);
        }
        Self::from_table(table)
    }

    /// The configuration as a commented document; loading the result gives
    /// back an equal configuration and dumping that reproduces the text.
    pub fn dump(&self) -> String {
        let table = self.to_table();
        let mut s = String::from("# dnnate run configuration. Keys are section.name; unknown keys are rejected.\n");
        let mut section = "";
        for (key, doc) in KEYS {
            let this = key.split_once('.').map(|(a, _)| a).unwrap_or("");
            if this != section {
                s.push('\n');
                section = this;
            }
            let value = lookup(&table, key).expect("every documented key is serialized");
            s.push_str(&format!("# {doc}\n{key} = {value}\n"));
        }
        s
    }

    /// SHA-256 of the dump with `run.threads` and `run.out` reset, so the
    /// hash identifies the results rather than where or how they were made.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.run.threads = 0;
        normalized.run.out = String::new();
        hex::encode(Sha256::digest(normalized.dump().as_bytes()))
    }

    fn train_config(&self, epochs: usize, lr: f64, batch_size: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            batch_size,
            epochs,
            adam_beta1: self.train.beta1,
            adam_beta2: self.train.beta2,
            adam_epsilon: self.train.epsilon,
            seed: 0,
            init: self.train.init,
        }
    }

    pub fn outcome_spec(&self) -> OutcomeSpec {
        let o = &self.outcome;
        OutcomeSpec {
            arch: architecture(o.arch, &o.hidden, o.activation, [o.level, o.k, o.p_star, o.m], o.alpha),
            train: self.train_config(o.epochs, o.lr, o.batch_size),
            trunc_const: o.trunc_const,
        }
    }

    pub fn propensity_spec(&self) -> PropensitySpec {
        let p = &self.propensity;
        PropensitySpec {
            arch: architecture(p.arch, &p.hidden, p.activation, [p.level, p.k, p.p_star, p.m], p.alpha),
            train: self.train_config(p.epochs, p.lr, p.batch_size),
            clip: match p.clip {
                ClipMode::Fixed => ClipSpec::Fixed { lo: p.clip_lo },
                ClipMode::Log => ClipSpec::Log { c2: p.clip_c2 },
            },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dgp: DgpConfig {
                n: self.experiment.n,
                p: self.dgp.p,
                tau: self.dgp.tau,
                noise_sd: self.dgp.noise_sd,
                seed: 0,
            },
            inference_n: self.experiment.n,
            train_ratio: self.experiment.c,
            estimators: self.experiment.estimators.clone(),
            nuisance: self.experiment.nuisance,
            outcome: self.outcome_spec(),
            propensity: self.propensity_spec(),
            replications: self.experiment.replications,
            master_seed: self.run.seed,
            ci_level: self.run.ci_level,
        }
    }

    /// Checks every setting the simulate command uses.
    pub fn validate_simulate(&self) -> Result<(), CliError> {
        if self.experiment.kde_points < 2 {
            return Err(invalid("experiment.kde_points must be at least 2"));
        }
        self.experiment().validate().map_err(CliError::from)
    }

    /// Checks every setting the estimate command uses, short of reading the
    /// data file.
    pub fn validate_estimate(&self) -> Result<(), CliError> {
        let e = &self.estimate;
        if e.fractions.is_empty() {
            return Err(invalid("estimate.fractions is empty"));
        }
        if let Some(f) = e.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(invalid(format!("estimate.fractions entry {f} is not in (0, 1)")));
        }
        if e.repeats < 1 {
            return Err(invalid("estimate.repeats must be at least 1"));
        }
        if self.data.path.is_empty() {
            return Err(invalid("no data file: set data.path or pass --data"));
        }
        // Reuse the experiment checks for the estimator list and both
        // network specifications.
        let mut exp = self.experiment();
        exp.estimators = e.estimators.clone();
        exp.nuisance = Nuisance::Fitted;
        exp.validate().map_err(CliError::from)
    }
}

fn architecture(
    kind: ArchKind,
    hidden: &[usize],
    activation: Activation,
    [level, k, p_star, m]: [usize; 4],
    alpha: f64,
) -> Architecture {
    match kind {
        ArchKind::Dense => Architecture::Dense {
            hidden: hidden.to_vec(),
            activation,
        },
        ArchKind::Hierarchical => Architecture::Hierarchical {
            level,
            k,
            p_star,
            m,
            alpha,
            activation,
        },
    }
}
