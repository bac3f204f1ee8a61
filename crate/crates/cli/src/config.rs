//! Experiment configuration: the TOML schema behind every subcommand, its
//! validation, and the provenance hash stamped on every CSV row.
//!
//! A config names a dataset, an architecture, one of the seven training
//! regimes, an attack schedule, a list of properties to evaluate, an epsilon
//! sweep, and the seeds to repeat everything over. Parsing is strict
//! (unknown keys are errors) and validation happens eagerly at load time so
//! a sweep cannot die hours in on a typo.

use std::fs;
use std::path::Path;

use robnet_core::attack::AttackParams;
use robnet_core::loss::{Aggregate, LossConfig, Sampler};
use robnet_core::nn::Activation;
use robnet_core::properties::{Metric, PropertyKind, PropertySpec, Robustness};
use robnet_core::train::{TrainConfig, TrainingMode};
use robnet_core::verifier::Budget;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {reason}")]
    Invalid { reason: String },
}

fn invalid(reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { reason: reason.into() }
}

/// The seven training regimes. The kebab-case spelling below is the one the
/// TOML `mode` key and the CSV `regime` column use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Baseline,
    DataAugRu,
    DataAugFgsm,
    Adversarial,
    ConstraintSr,
    ConstraintScr,
    ConstraintLr,
}

pub const ALL_REGIMES: [Regime; 7] = [
    Regime::Baseline,
    Regime::DataAugRu,
    Regime::DataAugFgsm,
    Regime::Adversarial,
    Regime::ConstraintSr,
    Regime::ConstraintScr,
    Regime::ConstraintLr,
];

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::DataAugRu => "data-aug-ru",
            Regime::DataAugFgsm => "data-aug-fgsm",
            Regime::Adversarial => "adversarial",
            Regime::ConstraintSr => "constraint-sr",
            Regime::ConstraintScr => "constraint-scr",
            Regime::ConstraintLr => "constraint-lr",
        }
    }

    pub fn training_mode(self) -> TrainingMode {
        match self {
            Regime::Baseline => TrainingMode::Baseline,
            Regime::DataAugRu => TrainingMode::DataAugRu,
            Regime::DataAugFgsm => TrainingMode::DataAugFgsm,
            Regime::Adversarial => TrainingMode::Adversarial,
            Regime::ConstraintSr | Regime::ConstraintScr | Regime::ConstraintLr => {
                TrainingMode::Constraint
            }
        }
    }

    /// Property kind a constraint regime trains against; `None` for the rest.
    pub fn property_kind(self) -> Option<PropertyKind> {
        match self {
            Regime::ConstraintSr => Some(PropertyKind::Sr),
            Regime::ConstraintScr => Some(PropertyKind::Scr),
            Regime::ConstraintLr => Some(PropertyKind::Lr),
            _ => None,
        }
    }
}

/// Serialized form of a property: `{kind, epsilon, delta?, eta?, L?,
/// probability?, in_metric, out_metric}`. The same struct backs the TOML
/// `[[property]]` tables, the `[training.property]` table, and the JSON
/// `property` field of verification queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyFile {
    pub kind: String,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// SCR only: interpret `eta` as a softmax probability threshold.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub probability: bool,
    #[serde(default = "default_metric")]
    pub in_metric: String,
    #[serde(default = "default_metric")]
    pub out_metric: String,
}

fn default_metric() -> String {
    String::from("linf")
}

fn parse_metric(name: &str, which: &str) -> Result<Metric, ConfigError> {
    match name {
        "linf" => Ok(Metric::Linf),
        "l1" => Ok(Metric::L1),
        "l2" => Ok(Metric::L2),
        other => Err(invalid(format!("{which} \"{other}\" (expected linf, l1, or l2)"))),
    }
}

impl PropertyFile {
    pub fn to_spec(&self) -> Result<PropertySpec, ConfigError> {
        let reject = |field: &str| invalid(format!("property kind \"{}\" does not take {field}", self.kind));
        let spec = match self.kind.as_str() {
            "sr" => {
                let delta = self.delta.ok_or_else(|| invalid("sr property needs delta"))?;
                if self.eta.is_some() { return Err(reject("eta")); }
                if self.lipschitz.is_some() { return Err(reject("L")); }
                PropertySpec::standard(self.epsilon, delta)
            }
            "cr" => {
                if self.delta.is_some() { return Err(reject("delta")); }
                if self.eta.is_some() { return Err(reject("eta")); }
                if self.lipschitz.is_some() { return Err(reject("L")); }
                PropertySpec::classification(self.epsilon)
            }
            "scr" => {
                let eta = self.eta.ok_or_else(|| invalid("scr property needs eta"))?;
                if self.delta.is_some() { return Err(reject("delta")); }
                if self.lipschitz.is_some() { return Err(reject("L")); }
                PropertySpec::strong_classification(self.epsilon, eta, self.probability)
            }
            "lr" => {
                let lipschitz = self.lipschitz.ok_or_else(|| invalid("lr property needs L"))?;
                if self.delta.is_some() { return Err(reject("delta")); }
                if self.eta.is_some() { return Err(reject("eta")); }
                PropertySpec::lipschitz(self.epsilon, lipschitz)
            }
            other => {
                return Err(invalid(format!("unknown property kind \"{other}\" (expected sr, cr, scr, or lr)")))
            }
        };
        if self.probability && self.kind != "scr" {
            return Err(invalid(format!("property kind \"{}\" does not take probability", self.kind)));
        }
        let spec = spec.map_err(|e| invalid(format!("property: {e}")))?;
        Ok(spec.with_metrics(
            parse_metric(&self.in_metric, "in_metric")?,
            parse_metric(&self.out_metric, "out_metric")?,
        ))
    }

    pub fn from_spec(spec: &PropertySpec) -> PropertyFile {
        let (delta, eta, lipschitz, probability) = match spec.robustness {
            Robustness::Standard { delta } => (Some(delta), None, None, false),
            Robustness::Classification => (None, None, None, false),
            Robustness::StrongClassification { eta, probability } => (None, Some(eta), None, probability),
            Robustness::Lipschitz { lipschitz } => (None, None, Some(lipschitz), false),
        };
        PropertyFile {
            kind: String::from(spec.kind().name()),
            epsilon: spec.epsilon,
            delta,
            eta,
            lipschitz,
            probability,
            in_metric: String::from(spec.in_metric.name()),
            out_metric: String::from(spec.out_metric.name()),
        }
    }
}

/// Rebuilds `spec` at a different radius; everything else is kept.
pub fn spec_at_epsilon(spec: &PropertySpec, epsilon: f64) -> PropertySpec {
    PropertySpec { epsilon, ..spec.clone() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    TwoMoons {
        n: usize,
        noise: f64,
    },
    Blobs {
        n: usize,
        k_classes: usize,
        centers: Vec<Vec<f64>>,
        sigma: f64,
    },
    Idx {
        images: String,
        labels: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
    Csv {
        path: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Hidden layer widths; the output layer is added automatically with an
    /// identity activation so the network emits logits.
    pub hidden: Vec<usize>,
    /// Hidden activation: "relu" (default) or "clamp" with `clamp_lo`/`clamp_hi`.
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_hi: Option<f64>,
}

fn default_activation() -> String {
    String::from("relu")
}

impl ArchitectureConfig {
    pub fn hidden_activation(&self) -> Result<Activation, ConfigError> {
        match self.activation.as_str() {
            "relu" => {
                if self.clamp_lo.is_some() || self.clamp_hi.is_some() {
                    return Err(invalid("clamp_lo/clamp_hi only apply to activation = \"clamp\""));
                }
                Ok(Activation::Relu)
            }
            "clamp" => {
                let lo = self.clamp_lo.ok_or_else(|| invalid("activation = \"clamp\" needs clamp_lo"))?;
                let hi = self.clamp_hi.ok_or_else(|| invalid("activation = \"clamp\" needs clamp_hi"))?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid(format!("clamp bounds must be finite with lo < hi, got [{lo}, {hi}]")));
                }
                Ok(Activation::Clamp { lo, hi })
            }
            other => Err(invalid(format!("unknown activation \"{other}\" (expected relu or clamp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    Pgd,
    RandomUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateChoice {
    Max,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub mode: Regime,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Cross-entropy weight in the combined loss.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Constraint-loss weight; only constraint regimes read it.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_samples_per_point")]
    pub samples_per_point: usize,
    /// Candidate search for the constraint loss; "pgd" reuses `[attack]`.
    #[serde(default = "default_sampler")]
    pub sampler: SamplerChoice,
    #[serde(default = "default_aggregate")]
    pub aggregate: AggregateChoice,
    /// Property a constraint regime trains against; its kind must match the
    /// mode. Forbidden for the other regimes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<PropertyFile>,
}

fn default_epochs() -> usize { 100 }
fn default_batch_size() -> usize { 128 }
fn default_learning_rate() -> f64 { 1e-4 }
fn default_alpha() -> f64 { 1.0 }
fn default_beta() -> f64 { 0.2 }
fn default_samples_per_point() -> usize { 1 }
fn default_sampler() -> SamplerChoice { SamplerChoice::Pgd }
fn default_aggregate() -> AggregateChoice { AggregateChoice::Max }

/// PGD schedule for augmentation, adversarial training, the constraint-loss
/// sampler, and the security metric. Omitted step counts fall back to the
/// standard schedule for the given radius (20 steps of ε/10).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default = "default_true")]
    pub random_start: bool,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_true() -> bool { true }
fn default_restarts() -> usize { 1 }

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            epsilon: 0.1,
            steps: None,
            step_size: None,
            random_start: true,
            restarts: 1,
        }
    }
}

impl AttackSection {
    pub fn to_params(&self) -> AttackParams {
        self.params_at(self.epsilon)
    }

    /// The section's schedule transplanted to radius `epsilon`: an explicit
    /// step size scales proportionally so sweep attacks keep the same
    /// relative step; at the section's own radius this is `to_params`.
    pub fn params_at(&self, epsilon: f64) -> AttackParams {
        let mut params = AttackParams::new(epsilon);
        if let Some(steps) = self.steps {
            params.steps = steps;
        }
        if let Some(step_size) = self.step_size {
            params.step_size = step_size * (epsilon / self.epsilon);
        }
        params.random_start = self.random_start;
        params.restarts = self.restarts;
        params
    }
}

/// Verifier budget. A present `[budget]` table replaces the default
/// entirely: omitting `max_seconds` there means "no time cap", not 30 s.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default = "default_max_nodes")]
    pub max_nodes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

fn default_max_nodes() -> u64 { 100_000 }

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection { max_nodes: default_max_nodes(), max_seconds: None }
    }
}

impl BudgetSection {
    pub fn to_budget(&self) -> Budget {
        Budget {
            max_nodes: self.max_nodes,
            max_millis: self.max_seconds.map(|s| (s * 1000.0).round() as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricChoice {
    Satisfaction,
    Security,
    Accuracy,
}

impl MetricChoice {
    pub fn name(self) -> &'static str {
        match self {
            MetricChoice::Satisfaction => "satisfaction",
            MetricChoice::Security => "security",
            MetricChoice::Accuracy => "accuracy",
        }
    }
}

fn default_metrics() -> Vec<MetricChoice> {
    vec![MetricChoice::Satisfaction, MetricChoice::Security, MetricChoice::Accuracy]
}

fn default_train_frac() -> f64 { 0.75 }
fn default_out_dir() -> String { String::from("out") }

/// One experiment, end to end. See `configs/` for worked examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub training: TrainingSection,
    #[serde(default)]
    pub attack: AttackSection,
    /// Properties to evaluate; each is rerun at every sweep radius.
    #[serde(rename = "property", default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<PropertyFile>,
    /// Attack/ball radii for the evaluate sweep. Must be non-empty.
    pub sweep: Vec<f64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() {
            return Err(invalid("name must be non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds must be non-empty"));
        }
        if self.sweep.is_empty() {
            return Err(invalid("sweep must be non-empty"));
        }
        if self.sweep.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(invalid("sweep radii must be finite and >= 0"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(invalid(format!("train_frac must lie in (0, 1), got {}", self.train_frac)));
        }
        if self.metrics.is_empty() {
            return Err(invalid("metrics must be non-empty"));
        }
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be >= 1"));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be finite and > 0"));
        }
        if !(t.alpha >= 0.0 && t.beta >= 0.0 && t.alpha.is_finite() && t.beta.is_finite()) {
            return Err(invalid("alpha and beta must be finite and >= 0"));
        }
        if t.samples_per_point == 0 {
            return Err(invalid("samples_per_point must be >= 1"));
        }
        let a = &self.attack;
        if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
            return Err(invalid("attack.epsilon must be finite and > 0"));
        }
        if a.steps == Some(0) || a.restarts == 0 {
            return Err(invalid("attack.steps and attack.restarts must be >= 1"));
        }
        if matches!(a.step_size, Some(s) if !(s > 0.0 && s.is_finite())) {
            return Err(invalid("attack.step_size must be finite and > 0"));
        }
        self.architecture.hidden_activation()?;
        match t.mode.property_kind() {
            Some(kind) => {
                let file = t.property.as_ref().ok_or_else(|| {
                    invalid(format!("mode \"{}\" needs a [training.property] table", t.mode.name()))
                })?;
                let spec = file.to_spec()?;
                if spec.kind() != kind {
                    return Err(invalid(format!(
                        "mode \"{}\" trains a {} property, but [training.property] has kind \"{}\"",
                        t.mode.name(),
                        kind.name(),
                        file.kind
                    )));
                }
            }
            None => {
                if t.property.is_some() {
                    return Err(invalid(format!(
                        "[training.property] is only used by constraint modes, not \"{}\"",
                        t.mode.name()
                    )));
                }
            }
        }
        for file in &self.properties {
            file.to_spec()?;
        }
        Ok(())
    }

    /// Assembles the trainer configuration for one seed. `validate` must
    /// have passed; the regime's property requirements are enforced there.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, ConfigError> {
        let t = &self.training;
        let attack = self.attack.to_params();
        let sampler = match t.sampler {
            SamplerChoice::Pgd => Sampler::Pgd(attack.clone()),
            SamplerChoice::RandomUniform => Sampler::RandomUniform,
        };
        let aggregate = match t.aggregate {
            AggregateChoice::Max => Aggregate::Max,
            AggregateChoice::Mean => Aggregate::Mean,
        };
        let mut cfg = TrainConfig {
            mode: t.mode.training_mode(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: robnet_core::optim::AdamParams {
                lr: t.learning_rate,
                ..Default::default()
            },
            loss: LossConfig {
                alpha: t.alpha,
                beta: t.beta,
                samples_per_point: t.samples_per_point,
                sampler,
                aggregate,
            },
            attack,
            property: None,
            seed,
        };
        if let Some(file) = &t.property {
            cfg.property = Some(file.to_spec()?);
        }
        Ok(cfg)
    }

    /// Parsed evaluation properties, in file order.
    pub fn property_specs(&self) -> Result<Vec<PropertySpec>, ConfigError> {
        self.properties.iter().map(|f| f.to_spec()).collect()
    }

    pub fn budget(&self) -> Budget {
        self.budget.as_ref().map(BudgetSection::to_budget).unwrap_or_default()
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

/// 12 hex characters of SHA-256 over the canonical re-serialized config.
/// Canonicalizing first makes the hash blind to comments and key order but
/// sensitive to every effective value, including defaults.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = toml::to_string(cfg).expect("a validated config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}
