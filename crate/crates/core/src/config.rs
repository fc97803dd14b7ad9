//! Experiment configuration (TOML) and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierConfig, ClassifierKind};
use crate::coex::RateLevel;
use crate::data::{Caps, ClassAssignment, DatasetFormat, PartitionOptions};
use crate::error::{Error, Result};
use crate::expert::Tier;
use crate::metrics::DrawPolicy;
use crate::rejector::{ScorerHyper, ScorerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    /// `kdd-csv` or `generic-csv`.
    pub format: String,
    /// Share of group `A` used for training.
    #[serde(default = "default_split")]
    pub split: f64,
    /// Class kept aside instead of dropped when it is in no group.
    #[serde(default)]
    pub keep_aside: Option<String>,
}

fn default_split() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentSection {
    /// `kdd`, `mnist` or `custom`.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub c_a: Vec<String>,
    #[serde(default)]
    pub c_b: Vec<String>,
    #[serde(default)]
    pub c_c: Vec<String>,
}

fn default_preset() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub partition: u64,
    pub training: u64,
    pub draws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectorSection {
    pub kind: String,
    pub q: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default)]
    pub max_reference: Option<usize>,
}

fn default_k() -> usize {
    5
}

fn default_components() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub kind: String,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

fn default_hidden() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_tiers")]
    pub tiers: Vec<u8>,
    #[serde(default = "default_rates")]
    pub rates: Vec<String>,
    /// `seeded` or `stratified`.
    #[serde(default = "default_draws")]
    pub draws: String,
}

fn default_tiers() -> Vec<u8> {
    vec![1, 2, 3]
}

fn default_rates() -> Vec<String> {
    RateLevel::ALL.iter().map(|r| r.label().to_string()).collect()
}

fn default_draws() -> String {
    "seeded".into()
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            tiers: default_tiers(),
            rates: default_rates(),
            draws: default_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaSection {
    #[serde(default = "default_persona")]
    pub name: String,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_model")]
    pub analyst_model: String,
    #[serde(default = "default_model")]
    pub collaborator_model: String,
    /// Escalated samples sent to sessions.
    #[serde(default = "default_sessions")]
    pub samples: usize,
}

fn default_persona() -> String {
    "jordan".into()
}

fn default_budget() -> usize {
    crate::persona::DEFAULT_BUDGET
}

fn default_model() -> String {
    "gpt-4o-mini".into()
}

fn default_sessions() -> usize {
    7
}

impl Default for PersonaSection {
    fn default() -> Self {
        PersonaSection {
            name: default_persona(),
            budget: default_budget(),
            analyst_model: default_model(),
            collaborator_model: default_model(),
            samples: default_sessions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub assignment: AssignmentSection,
    #[serde(default)]
    pub caps: Caps,
    pub seeds: Seeds,
    pub rejector: RejectorSection,
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub grid: GridSection,
    pub output: OutputSection,
    #[serde(default)]
    pub persona: PersonaSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a config. Relative dataset and output paths are
    /// taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.path.is_relative() {
            cfg.dataset.path = base.join(&cfg.dataset.path);
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without loading the dataset.
    pub fn validate(&self) -> Result<()> {
        if !self.dataset.path.is_file() {
            return Err(Error::Config(format!("dataset file {} does not exist", self.dataset.path.display())));
        }
        self.validate_offline()
    }

    /// `validate` minus the filesystem check.
    pub fn validate_offline(&self) -> Result<()> {
        self.dataset_format()?;
        self.assignment()?.validate()?;
        if !(self.dataset.split > 0.0 && self.dataset.split < 1.0) {
            return Err(Error::Config(format!("dataset.split must lie in (0, 1), got {}", self.dataset.split)));
        }
        if !(self.rejector.q > 0.0 && self.rejector.q < 1.0) {
            return Err(Error::Config(format!("rejector.q must lie in (0, 1), got {}", self.rejector.q)));
        }
        self.scorer_kind()?;
        self.classifier_config()?;
        if self.classifier.epochs == 0 || !(self.classifier.learning_rate > 0.0) {
            return Err(Error::Config("classifier.epochs and classifier.learning_rate must be positive".into()));
        }
        self.tiers()?;
        self.rates()?;
        self.draw_policy()?;
        if self.persona.budget == 0 {
            return Err(Error::Config("persona.budget must be positive".into()));
        }
        Ok(())
    }

    pub fn dataset_format(&self) -> Result<DatasetFormat> {
        self.dataset.format.parse()
    }

    pub fn assignment(&self) -> Result<ClassAssignment> {
        let a = &self.assignment;
        let explicit = !(a.c_a.is_empty() && a.c_b.is_empty() && a.c_c.is_empty());
        let asg = match a.preset.as_str() {
            "kdd" if !explicit => ClassAssignment::kdd(),
            "mnist" if !explicit => ClassAssignment::mnist(),
            "custom" => ClassAssignment::new(a.c_a.clone(), a.c_b.clone(), a.c_c.clone()),
            "kdd" | "mnist" => {
                return Err(Error::Config("assignment: give either a preset or explicit class lists, not both".into()))
            }
            other => return Err(Error::Config(format!("unknown assignment preset `{other}`"))),
        };
        if asg.c_a.is_empty() {
            return Err(Error::Config("assignment: group A needs at least one class".into()));
        }
        Ok(asg)
    }

    pub fn partition_options(&self) -> PartitionOptions {
        PartitionOptions {
            caps: (!self.caps.is_empty()).then(|| self.caps.clone()),
            seed: self.seeds.partition,
            keep_aside: self.dataset.keep_aside.clone(),
        }
    }

    pub fn scorer_kind(&self) -> Result<ScorerKind> {
        self.rejector.kind.parse()
    }

    pub fn scorer_hyper(&self) -> ScorerHyper {
        ScorerHyper {
            k: self.rejector.k,
            components: self.rejector.components,
            max_reference: self.rejector.max_reference,
            seed: self.seeds.training,
        }
    }

    pub fn classifier_config(&self) -> Result<ClassifierConfig> {
        Ok(ClassifierConfig {
            kind: ClassifierKind::parse(&self.classifier.kind, self.classifier.hidden)?,
            epochs: self.classifier.epochs,
            learning_rate: self.classifier.learning_rate,
            seed: self.seeds.training,
        })
    }

    pub fn tiers(&self) -> Result<Vec<Tier>> {
        if self.grid.tiers.is_empty() {
            return Err(Error::Config("grid.tiers is empty".into()));
        }
        self.grid.tiers.iter().map(|&t| Tier::from_number(t)).collect()
    }

    pub fn rates(&self) -> Result<Vec<RateLevel>> {
        if self.grid.rates.is_empty() {
            return Err(Error::Config("grid.rates is empty".into()));
        }
        self.grid.rates.iter().map(|r| r.parse()).collect()
    }

    pub fn draw_policy(&self) -> Result<DrawPolicy> {
        match self.grid.draws.as_str() {
            "seeded" => Ok(DrawPolicy::Seeded { seed: self.seeds.draws }),
            "stratified" => Ok(DrawPolicy::Stratified),
            other => Err(Error::Config(format!("grid.draws must be `seeded` or `stratified`, got `{other}`"))),
        }
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything needed to re-run a command: the resolved config, the command
/// line overrides, crate version and the input digest. No timestamps, so
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub overrides: Vec<(String, String)>,
    pub version: String,
    pub dataset_sha256: Option<String>,
    pub config: ExperimentConfig,
    /// Extra free-form lines, e.g. the partition manifest.
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            command: command.into(),
            overrides: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            dataset_sha256: None,
            config: config.clone(),
            notes: Vec::new(),
        }
    }

    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# a2c run manifest");
        let _ = writeln!(out, "# command: {}", self.command);
        for (k, v) in &self.overrides {
            let _ = writeln!(out, "# override: {k} = {v}");
        }
        let _ = writeln!(out, "# a2c-core version: {}", self.version);
        if let Some(d) = &self.dataset_sha256 {
            let _ = writeln!(out, "# dataset sha256: {d}");
        }
        for n in &self.notes {
            for line in n.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push('\n');
        out.push_str(&self.config.to_toml()?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[dataset]
path = "kdd.csv"
format = "kdd-csv"

[assignment]
preset = "kdd"

[caps.per_group]
A = 400

[seeds]
partition = 1
training = 2
draws = 3

[rejector]
kind = "pca-reconstruction"
q = 0.05
components = 4

[classifier]
kind = "softmax-linear"
epochs = 100
learning_rate = 0.5

[output]
dir = "out"
"#;

    #[test]
    fn parses_sample_with_defaults() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.validate_offline().unwrap();
        assert_eq!(cfg.tiers().unwrap(), Tier::ALL.to_vec());
        assert_eq!(cfg.rates().unwrap(), RateLevel::ALL.to_vec());
        assert_eq!(cfg.draw_policy().unwrap(), DrawPolicy::Seeded { seed: 3 });
        assert_eq!(cfg.assignment().unwrap(), ClassAssignment::kdd());
        assert_eq!(cfg.partition_options().caps.unwrap().per_group[&crate::data::Group::A], 400);
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn overlapping_assignment_is_rejected_before_compute() {
        let text = SAMPLE.replace(
            "preset = \"kdd\"",
            "c_a = [\"x\", \"y\"]\nc_b = [\"y\"]\nc_c = [\"z\"]",
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(matches!(cfg.validate_offline(), Err(Error::OverlappingAssignment(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for (from, to) in [
            ("q = 0.05", "q = 1.5"),
            ("kind = \"pca-reconstruction\"", "kind = \"forest\""),
            ("epochs = 100", "epochs = 0"),
        ] {
            let cfg = ExperimentConfig::parse(&SAMPLE.replace(from, to)).unwrap();
            assert!(cfg.validate_offline().is_err(), "{to}");
        }
        assert!(ExperimentConfig::parse(&SAMPLE.replace("[output]", "[outptu]")).is_err());
        assert!(ExperimentConfig::parse(&format!("{SAMPLE}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn load_resolves_paths_and_checks_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("exp.toml");
        fs::write(&cfg_path, SAMPLE).unwrap();
        assert!(matches!(ExperimentConfig::load(&cfg_path), Err(Error::Config(_))));
        fs::write(dir.path().join("kdd.csv"), "x").unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.output.dir, dir.path().join("out"));
        let m = RunManifest::new("grid", &cfg).render().unwrap();
        assert!(m.contains("# command: grid"));
        assert!(m.contains("[rejector]"));
    }
}
