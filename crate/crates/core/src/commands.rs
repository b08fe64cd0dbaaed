//! The operations behind each command-line subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::eval::{generate_questions, prefix_sharing_stats, run_benchmark, score_questions, BenchReport, RedundancyStats};
use crate::manifest::{Condition, EmbeddingChoice, Manifest};
use crate::provider::Provider;
use crate::records::{load_prompts, load_questions, write_questions, QuestionRecord};
use crate::remote::{StubServer, StubService};
use crate::scorers::ScorerKind;

/// Command-line values that replace manifest fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub prompts: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub batch: Option<bool>,
    pub toy_model: Option<PathBuf>,
    pub remote: Option<String>,
    pub temperature: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub max_generation: Option<usize>,
    pub selective_inference: Option<bool>,
    pub hard_decoding: Option<bool>,
    pub annealed_decoding: Option<bool>,
    pub scorers: Option<Vec<ScorerKind>>,
    pub conditions: Option<Vec<Condition>>,
}

impl Overrides {
    /// Apply to `m`. Paths given on the command line are relative to the
    /// working directory, so they are made absolute first.
    pub fn apply(&self, m: &mut Manifest) -> Result<()> {
        let cwd = std::env::current_dir()?;
        let abs = |p: &PathBuf| cwd.join(p);
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$src { m.$($dst).+ = v.clone().into(); })*
            };
        }
        set!(
            seed => seed,
            n => n,
            parallelism => parallelism,
            batch => batch,
            temperature => sampling.temperature,
            gamma => sampling.gamma,
            eta => sampling.eta,
            alpha => sampling.alpha,
            max_generation => sampling.max_generation,
            selective_inference => features.selective_inference,
            hard_decoding => features.hard_decoding,
            annealed_decoding => features.annealed_decoding,
            scorers => scorers.enabled,
            conditions => bench.conditions,
        );
        if let Some(k) = self.top_k {
            m.sampling.top_k = Some(k);
        }
        if let Some(p) = self.top_p {
            m.sampling.top_p = Some(p);
        }
        if let Some(p) = &self.prompts {
            m.prompts = Some(abs(p));
        }
        if let Some(p) = &self.labels {
            m.labels = Some(abs(p));
        }
        if let Some(p) = &self.output_dir {
            m.output_dir = abs(p);
        }
        if let Some(p) = &self.toy_model {
            m.model.toy = Some(abs(p));
            m.model.remote = None;
        }
        if let Some(r) = &self.remote {
            m.model.remote = Some(r.clone());
            m.model.toy = None;
        }
        Ok(())
    }
}

fn require_prompts(m: &Manifest) -> Result<Vec<crate::records::PromptRecord>> {
    let path = m.prompts.as_ref().ok_or_else(|| Error::manifest("prompts", "a prompts file is required"))?;
    let path = m.resolve(path);
    if !path.exists() {
        return Err(Error::manifest("prompts", format!("{} does not exist", path.display())));
    }
    load_prompts(&path)
}

fn create_output_dir(m: &Manifest) -> Result<PathBuf> {
    let dir = m.output_dir();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub const RESPONSES_FILE: &str = "responses.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub questions: Vec<QuestionRecord>,
    pub responses_path: PathBuf,
    /// Skipped forwards over all generated tokens.
    pub reuse_ratio: f64,
}

/// Generate responses and traces with the manifest's features.
pub fn cmd_generate(m: &Manifest) -> Result<GenerateSummary> {
    m.validate()?;
    let prompts = require_prompts(m)?;
    let provider = Provider::open(m)?;
    let questions = generate_questions(m, &provider, &prompts, Condition::Dmp)?;
    let dir = create_output_dir(m)?;
    let responses_path = dir.join(RESPONSES_FILE);
    write_questions(&responses_path, &questions)?;
    let mut tsv = String::from("question\tresponses\ttokens\tforwarded\treused\thard_decoded\treuse_ratio\n");
    let (mut tokens, mut skipped) = (0usize, 0usize);
    for q in &questions {
        let (mut f, mut r, mut h) = (0, 0, 0);
        for resp in &q.responses {
            let t = resp.trace.totals();
            f += t.forwarded;
            r += t.reused;
            h += t.hard_decoded;
        }
        tokens += f + r + h;
        skipped += r + h;
        writeln!(tsv, "{}\t{}\t{}\t{f}\t{r}\t{h}\t{}", q.id, q.responses.len(), f + r + h, q.reuse_ratio).unwrap();
    }
    let reuse_ratio = if tokens == 0 { 0.0 } else { skipped as f64 / tokens as f64 };
    writeln!(tsv, "all\t{}\t{tokens}\t{}\t-\t-\t{reuse_ratio}", questions.iter().map(|q| q.responses.len()).sum::<usize>(), tokens - skipped).unwrap();
    std::fs::write(dir.join("summary.tsv"), tsv)?;
    Ok(GenerateSummary {
        questions,
        responses_path,
        reuse_ratio,
    })
}

/// `path` itself, or `responses.jsonl` inside it when it is a directory.
pub fn responses_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(RESPONSES_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Score stored responses; writes `scores.tsv` into the output directory.
pub fn cmd_score(m: &Manifest, responses: &Path) -> Result<PathBuf> {
    m.validate()?;
    let questions = load_questions(&responses_file(responses))?;
    let provider = match m.scorers.embedding {
        EmbeddingChoice::Remote => Some(Provider::open(m)?),
        EmbeddingChoice::Hashed => None,
    };
    let rows = score_questions(m, provider.as_ref(), &questions)?;
    let mut tsv = String::from("question\tscorer\tscore\n");
    for r in rows {
        writeln!(tsv, "{}\t{}\t{}", r.question, r.scorer, r.score).unwrap();
    }
    let path = create_output_dir(m)?.join("scores.tsv");
    std::fs::write(&path, tsv)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsSummary {
    /// Over whitespace words of the renderings.
    pub words: RedundancyStats,
    /// Over token ids.
    pub tokens: RedundancyStats,
}

impl StatsSummary {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("level\tmetric\tvalue\n");
        for (level, r) in [("word", &self.words), ("token", &self.tokens)] {
            for (k, v) in [
                ("questions", r.questions as f64),
                ("responses_per_question", r.responses_per_question as f64),
                ("pairs", r.pairs as f64),
                ("sharing_pairs", r.sharing_pairs as f64),
                ("total_length", r.total_words as f64),
                ("shared_length", r.shared_words as f64),
                ("p_sentence", r.p_sentence),
                ("p_word", r.p_word),
                ("p_word_plain", r.p_word_plain),
            ] {
                writeln!(s, "{level}\t{k}\t{v}").unwrap();
            }
        }
        s
    }
}

/// Prefix-sharing statistics of stored responses; writes `stats.tsv` to `out_dir`.
pub fn cmd_stats(responses: &Path, out_dir: &Path) -> Result<StatsSummary> {
    let questions = load_questions(&responses_file(responses))?;
    if let Some(q) = questions.iter().find(|q| q.responses.len() < 2) {
        return Err(Error::input(format!("question {:?} has fewer than 2 responses", q.id)));
    }
    let words: Vec<Vec<Vec<String>>> = questions.iter().map(|q| q.responses.iter().map(|r| r.words.clone()).collect()).collect();
    let tokens: Vec<Vec<Vec<u32>>> = questions.iter().map(|q| q.responses.iter().map(|r| r.tokens.clone()).collect()).collect();
    let summary = StatsSummary {
        words: prefix_sharing_stats(&words)?,
        tokens: prefix_sharing_stats(&tokens)?,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("stats.tsv"), summary.to_tsv())?;
    Ok(summary)
}

/// Run the benchmark; writes `report.tsv`, `timings.tsv` and per-condition responses.
pub fn cmd_bench(m: &Manifest) -> Result<BenchReport> {
    m.validate()?;
    let prompts = require_prompts(m)?;
    if let Some(l) = &m.labels {
        let path = m.resolve(l);
        if !path.exists() {
            return Err(Error::manifest("labels", format!("labels file {} does not exist", path.display())));
        }
    }
    let provider = Provider::open(m)?;
    let report = run_benchmark(m, &provider, &prompts)?;
    let dir = create_output_dir(m)?;
    std::fs::write(dir.join("report.tsv"), report.to_tsv())?;
    std::fs::write(dir.join("timings.tsv"), report.timings_tsv())?;
    for c in &m.bench.conditions {
        write_questions(&dir.join(format!("responses.{}.jsonl", c.name())), &report.questions[c])?;
    }
    Ok(report)
}

/// Serve the manifest's toy model over the wire protocol.
pub fn cmd_serve_stub(m: &Manifest, addr: &str) -> Result<StubServer> {
    m.validate()?;
    match Provider::open(m)? {
        Provider::Toy { model, vocab } => StubServer::spawn(addr, StubService::new(Arc::new(model), vocab, "consistency-engine-stub")),
        Provider::Remote(_) => Err(Error::manifest("model.remote", "the stub serves local models only")),
    }
}
