//! Run manifests: one TOML document describing a generation or benchmark run.
//!
//! Every field has a default, so an empty document is a valid manifest for
//! commands that do not need prompts. Relative paths resolve against the
//! manifest's own directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoding::SamplingConfig;
use crate::error::{Error, Result};
use crate::memory::SHORT_ANSWER_MIN;
use crate::pipeline::{AnnealTrigger, GenerationConfig};
use crate::scorers::{ScorerKind, DEFAULT_EMBEDDING_WIDTH, DEFAULT_REG_ALPHA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    /// Responses per prompt.
    pub n: usize,
    pub prompts: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Prompts generated concurrently.
    pub parallelism: usize,
    /// Use batch-wise generation, one prompt per slot.
    pub batch: bool,
    pub model: ModelSection,
    pub sampling: SamplingSection,
    pub features: FeatureSection,
    pub scorers: ScorerSection,
    pub bench: BenchSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            seed: 0,
            n: 10,
            prompts: None,
            labels: None,
            output_dir: PathBuf::from("out"),
            parallelism: 1,
            batch: false,
            model: ModelSection::default(),
            sampling: SamplingSection::default(),
            features: FeatureSection::default(),
            scorers: ScorerSection::default(),
            bench: BenchSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Toy model definition file.
    pub toy: Option<PathBuf>,
    /// `host:port` of a logit server.
    pub remote: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Used when neither `toy` nor `remote` is set.
    pub builtin: BuiltinModel,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            toy: None,
            remote: None,
            timeout_ms: 30_000,
            retries: 2,
            builtin: BuiltinModel::default(),
        }
    }
}

/// A peaked toy model needing no files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuiltinModel {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub eos: u32,
    pub p_top: f64,
    pub seed: u64,
}

impl Default for BuiltinModel {
    fn default() -> Self {
        BuiltinModel {
            vocab_size: 32,
            hidden_dim: 16,
            eos: 0,
            p_top: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub temperature: f64,
    /// Hard-decoding confidence threshold.
    pub gamma: f64,
    /// Annealing speed.
    pub eta: f64,
    /// Non-exact-answer selection factor.
    pub alpha: f64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub max_generation: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            temperature: 0.8,
            gamma: 0.8,
            eta: 1.4,
            alpha: 0.9,
            top_k: None,
            top_p: None,
            max_generation: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub selective_inference: bool,
    pub hard_decoding: bool,
    pub annealed_decoding: bool,
    pub anneal_trigger: AnnealTrigger,
    pub short_answer_min: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            selective_inference: true,
            hard_decoding: true,
            annealed_decoding: true,
            anneal_trigger: AnnealTrigger::OnDuplicate,
            short_answer_min: SHORT_ANSWER_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingChoice {
    /// Hashed bag of words.
    Hashed,
    /// The logit server's `embed` operation.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntailmentChoice {
    Containment,
    Equality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub enabled: Vec<ScorerKind>,
    pub embedding: EmbeddingChoice,
    pub embedding_width: usize,
    pub entailment: EntailmentChoice,
    pub reg_alpha: f64,
    /// Score with the probabilities actually sampled from (after annealing).
    pub post_anneal_probabilities: bool,
}

impl Default for ScorerSection {
    fn default() -> Self {
        ScorerSection {
            enabled: ScorerKind::ALL.to_vec(),
            embedding: EmbeddingChoice::Hashed,
            embedding_width: DEFAULT_EMBEDDING_WIDTH,
            entailment: EntailmentChoice::Containment,
            reg_alpha: DEFAULT_REG_ALPHA,
            post_anneal_probabilities: true,
        }
    }
}

/// A generation setting compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Every step is a forward pass.
    Baseline,
    /// Selective inference only.
    Selective,
    /// Selective inference and hard decoding.
    SelectiveHard,
    /// Selective inference, hard and annealed decoding.
    SelectiveHardAnneal,
    /// Whatever `[features]` enables.
    Dmp,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Selective => "selective",
            Condition::SelectiveHard => "selective_hard",
            Condition::SelectiveHardAnneal => "selective_hard_anneal",
            Condition::Dmp => "dmp",
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Condition::Baseline,
            Condition::Selective,
            Condition::SelectiveHard,
            Condition::SelectiveHardAnneal,
            Condition::Dmp,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::manifest("bench.conditions", format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub conditions: Vec<Condition>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            conditions: vec![Condition::Baseline, Condition::Dmp],
        }
    }
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .filter(|_| e.message().starts_with("unknown field"))
                .unwrap_or("(document)")
                .to_string();
            Error::manifest(field, e.message().trim().to_string())
        })?;
        m.base_dir = base_dir.to_path_buf();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::manifest("(file)", format!("cannot read {}: {e}", path.display())))?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("manifest serialization: {e}")))
    }

    /// Resolve a manifest-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        let f = &self.features;
        let check = |ok: bool, field: &str, msg: &str| if ok { Ok(()) } else { Err(Error::manifest(field, msg)) };
        check(self.n >= 1, "n", "must be at least 1")?;
        check(self.parallelism >= 1, "parallelism", "must be at least 1")?;
        check(s.temperature > 0.0 && s.temperature.is_finite(), "sampling.temperature", "must be positive")?;
        check(s.gamma > 0.0 && s.gamma <= 1.0, "sampling.gamma", "must lie in (0, 1]")?;
        check(s.eta > 1.0 && s.eta.is_finite(), "sampling.eta", "must exceed 1")?;
        check(s.alpha > 0.0 && s.alpha.is_finite(), "sampling.alpha", "must be positive")?;
        check(s.max_generation >= 1, "sampling.max_generation", "must be at least 1")?;
        check(s.top_k != Some(0), "sampling.top_k", "must be at least 1")?;
        check(
            s.top_p.is_none_or(|p| p > 0.0 && p <= 1.0),
            "sampling.top_p",
            "must lie in (0, 1]",
        )?;
        check(
            !f.hard_decoding || f.selective_inference,
            "features.hard_decoding",
            "requires selective_inference",
        )?;
        check(
            !f.annealed_decoding || f.selective_inference,
            "features.annealed_decoding",
            "requires selective_inference",
        )?;
        check(
            !(self.model.toy.is_some() && self.model.remote.is_some()),
            "model",
            "set at most one of `toy` and `remote`",
        )?;
        check(self.model.timeout_ms > 0, "model.timeout_ms", "must be positive")?;
        check(
            self.scorers.reg_alpha > 0.0 && self.scorers.reg_alpha.is_finite(),
            "scorers.reg_alpha",
            "must be positive",
        )?;
        check(self.scorers.embedding_width >= 1, "scorers.embedding_width", "must be positive")?;
        check(
            self.scorers.embedding != EmbeddingChoice::Remote || self.model.remote.is_some(),
            "scorers.embedding",
            "`remote` embeddings need a remote model",
        )?;
        check(!self.bench.conditions.is_empty(), "bench.conditions", "must not be empty")?;
        Ok(())
    }

    /// Generation settings for a benchmark condition.
    pub fn generation_config(&self, condition: Condition) -> GenerationConfig {
        let (si, hard, anneal) = match condition {
            Condition::Baseline => (false, false, false),
            Condition::Selective => (true, false, false),
            Condition::SelectiveHard => (true, true, false),
            Condition::SelectiveHardAnneal => (true, true, true),
            Condition::Dmp => (
                self.features.selective_inference,
                self.features.hard_decoding,
                self.features.annealed_decoding,
            ),
        };
        let s = &self.sampling;
        GenerationConfig {
            sampling: SamplingConfig {
                temperature: s.temperature,
                hard_threshold: hard.then_some(s.gamma),
                anneal_eta: anneal.then_some(s.eta),
                alpha: s.alpha,
                seed: self.seed,
                top_k: s.top_k,
                top_p: s.top_p,
            },
            selective_inference: si,
            anneal_trigger: self.features.anneal_trigger,
            short_answer_min: self.features.short_answer_min,
            max_generation: Some(s.max_generation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_has_reference_defaults() {
        let m = Manifest::parse("", Path::new(".")).unwrap();
        m.validate().unwrap();
        let c = m.generation_config(Condition::Dmp);
        assert_eq!(c.sampling.temperature, 0.8);
        assert_eq!(c.sampling.hard_threshold, Some(0.8));
        assert_eq!(c.sampling.anneal_eta, Some(1.4));
        assert_eq!(c.sampling.alpha, 0.9);
        assert!(c.selective_inference);
        c.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 7
n = 4
prompts = "prompts.jsonl"
[model]
toy = "model.toml"
[sampling]
top_k = 5
[features]
annealed_decoding = false
anneal_trigger = "on_skip"
[scorers]
enabled = ["lexical", "eigenscore"]
"#;
        let a = Manifest::parse(text, Path::new("/x")).unwrap();
        let b = Manifest::parse(&a.to_toml().unwrap(), Path::new("/x")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.resolve(Path::new("prompts.jsonl")), PathBuf::from("/x/prompts.jsonl"));
    }

    #[test]
    fn dependency_rules_name_the_field() {
        let m = Manifest::parse("[features]\nselective_inference = false\nhard_decoding = false\n", Path::new(".")).unwrap();
        match m.validate() {
            Err(Error::Manifest { field, .. }) => assert_eq!(field, "features.annealed_decoding"),
            other => panic!("{other:?}"),
        }
        let m = Manifest::parse("n = 0", Path::new(".")).unwrap();
        assert!(matches!(m.validate(), Err(Error::Manifest { field, .. }) if field == "n"));
        match Manifest::parse("bogus = 1", Path::new(".")) {
            Err(Error::Manifest { field, .. }) => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
    }
}
