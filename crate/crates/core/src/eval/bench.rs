//! Benchmark orchestration: generate under each condition, score, and
//! aggregate into a report.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use super::{oriented_auroc, prefix_sharing_stats, LabeledScore, RedundancyStats};
use crate::error::{Error, Result};
use crate::manifest::{Condition, Manifest};
use crate::pipeline::{generate_batch, generate_prompts, greedy_decode};
use crate::provider::{entailment_oracle, Provider};
use crate::records::{load_labels, GreedyRecord, PromptRecord, QuestionRecord, ResponseRecord};
use crate::scorers::{normalize_words, score, ScorerKind, ScoringContext};

/// Generate `manifest.n` responses per prompt under `condition`.
pub fn generate_questions(
    manifest: &Manifest,
    provider: &Provider,
    prompts: &[PromptRecord],
    condition: Condition,
) -> Result<Vec<QuestionRecord>> {
    let config = manifest.generation_config(condition);
    let model = provider.model();
    let encoded = prompts.iter().map(|p| provider.encode_prompt(p)).collect::<Result<Vec<_>>>()?;
    let generations = if manifest.batch {
        generate_batch(model, &encoded, manifest.n, &config)?
    } else {
        generate_prompts(model, &encoded, manifest.n, &config, manifest.parallelism)?
    };
    prompts
        .iter()
        .zip(generations)
        .map(|(p, g)| {
            let (greedy, _) = greedy_decode(model, &g.prompt, manifest.sampling.max_generation)?;
            let responses = g
                .outputs
                .iter()
                .map(|o| Ok(ResponseRecord::new(o, provider.words(&o.response)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(QuestionRecord {
                id: p.id.clone(),
                reference: p.reference.clone(),
                greedy: GreedyRecord {
                    words: provider.words(&greedy)?,
                    tokens: greedy,
                },
                reuse_ratio: g.reuse_ratio()?,
                prompt: g.prompt,
                responses,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub question: String,
    pub scorer: ScorerKind,
    pub score: f64,
}

/// Score every question with every enabled scorer.
pub fn score_questions(manifest: &Manifest, provider: Option<&Provider>, questions: &[QuestionRecord]) -> Result<Vec<ScoreRow>> {
    let embedding = match provider {
        Some(p) => p.embedding_oracle(manifest)?,
        None => Box::new(crate::scorers::HashedBagOfWords {
            width: manifest.scorers.embedding_width,
        }),
    };
    let entailment = entailment_oracle(manifest.scorers.entailment);
    let ctx = ScoringContext {
        embedding: embedding.as_ref(),
        entailment: entailment.as_ref(),
        reg_alpha: manifest.scorers.reg_alpha,
    };
    let mut rows = Vec::new();
    for q in questions {
        let set = q.scored_set(manifest.scorers.post_anneal_probabilities);
        for &kind in &manifest.scorers.enabled {
            let value = score(kind, &set, &ctx).map_err(|e| Error::input(format!("question {:?}, scorer {kind}: {e}", q.id)))?;
            rows.push(ScoreRow {
                question: q.id.clone(),
                scorer: kind,
                score: value,
            });
        }
    }
    Ok(rows)
}

/// Correctness labels: from the labels file when the manifest names one,
/// otherwise by exact match of the greedy answer against each prompt's
/// reference. `None` when neither source is available.
pub fn resolve_labels(manifest: &Manifest, questions: &[QuestionRecord]) -> Result<Option<HashMap<String, bool>>> {
    if let Some(path) = &manifest.labels {
        let labels = load_labels(&manifest.resolve(path))?;
        if let Some(q) = questions.iter().find(|q| !labels.contains_key(&q.id)) {
            return Err(Error::manifest("labels", format!("no label for question {:?}", q.id)));
        }
        return Ok(Some(labels));
    }
    if questions.iter().all(|q| q.reference.is_some()) {
        return Ok(Some(
            questions
                .iter()
                .map(|q| {
                    let reference: Vec<String> = q.reference.as_deref().unwrap_or("").split_whitespace().map(String::from).collect();
                    (q.id.clone(), normalize_words(&q.greedy.words) == normalize_words(&reference))
                })
                .collect(),
        ));
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub question: String,
    pub condition: Condition,
    pub scorer: ScorerKind,
    pub score: f64,
    pub label: Option<bool>,
    pub reuse_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub condition: Condition,
    /// `None` when AUROC is undefined (one label class) or no labels exist.
    pub auroc: Vec<(ScorerKind, Option<f64>)>,
    pub mean_reuse_ratio: f64,
    pub redundancy: Option<RedundancyStats>,
    pub generation_ms: u128,
    pub scoring_ms: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<ConditionSummary>,
    pub questions: HashMap<Condition, Vec<QuestionRecord>>,
}

pub const REPORT_HEADER: &str = "question\tcondition\tscorer\tscore\tlabel\treuse_ratio";
pub const SUMMARY_HEADER: &str = "condition\tmetric\tvalue";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl BenchReport {
    /// Report file: a row table, a blank line, then a summary table.
    /// Timings are excluded so reruns are byte-identical.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_HEADER}").unwrap();
        for r in &self.rows {
            let label = r.label.map_or("-", |l| if l { "1" } else { "0" });
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.question,
                r.condition.name(),
                r.scorer,
                r.score,
                label,
                r.reuse_ratio
            )
            .unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "{SUMMARY_HEADER}").unwrap();
        for c in &self.summaries {
            let name = c.condition.name();
            for (kind, a) in &c.auroc {
                writeln!(s, "{name}\tauroc.{kind}\t{}", fmt_opt(*a)).unwrap();
            }
            writeln!(s, "{name}\tmean_reuse_ratio\t{}", c.mean_reuse_ratio).unwrap();
            if let Some(r) = &c.redundancy {
                writeln!(s, "{name}\tp_sentence\t{}", r.p_sentence).unwrap();
                writeln!(s, "{name}\tp_word\t{}", r.p_word).unwrap();
                writeln!(s, "{name}\tp_word_plain\t{}", r.p_word_plain).unwrap();
            }
        }
        s
    }

    pub fn timings_tsv(&self) -> String {
        let mut s = String::from("condition\tstage\tmillis\n");
        for c in &self.summaries {
            writeln!(s, "{}\tgeneration\t{}", c.condition.name(), c.generation_ms).unwrap();
            writeln!(s, "{}\tscoring\t{}", c.condition.name(), c.scoring_ms).unwrap();
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let kinds: Vec<ScorerKind> = self.summaries.first().map(|c| c.auroc.iter().map(|(k, _)| *k).collect()).unwrap_or_default();
        write!(s, "{:<22}{:>12}", "condition", "reuse_ratio").unwrap();
        for k in &kinds {
            write!(s, "{:>20}", k.name()).unwrap();
        }
        writeln!(s).unwrap();
        for c in &self.summaries {
            write!(s, "{:<22}{:>12.4}", c.condition.name(), c.mean_reuse_ratio).unwrap();
            for (_, a) in &c.auroc {
                match a {
                    Some(v) => write!(s, "{v:>20.4}").unwrap(),
                    None => write!(s, "{:>20}", "undefined").unwrap(),
                }
            }
            writeln!(s).unwrap();
        }
        s
    }
}

/// Run every benchmark condition over the prompts.
pub fn run_benchmark(manifest: &Manifest, provider: &Provider, prompts: &[PromptRecord]) -> Result<BenchReport> {
    manifest.validate()?;
    let mut report = BenchReport {
        rows: Vec::new(),
        summaries: Vec::new(),
        questions: HashMap::new(),
    };
    let mut labels: Option<Option<HashMap<String, bool>>> = None;
    for &condition in &manifest.bench.conditions {
        let t0 = Instant::now();
        let questions = generate_questions(manifest, provider, prompts, condition)?;
        let generation_ms = t0.elapsed().as_millis();
        if labels.is_none() {
            labels = Some(resolve_labels(manifest, &questions)?);
        }
        let labels = labels.as_ref().unwrap();
        let t1 = Instant::now();
        let scores = score_questions(manifest, Some(provider), &questions)?;
        let scoring_ms = t1.elapsed().as_millis();
        let reuse: HashMap<&str, f64> = questions.iter().map(|q| (q.id.as_str(), q.reuse_ratio)).collect();
        for s in &scores {
            report.rows.push(ReportRow {
                question: s.question.clone(),
                condition,
                scorer: s.scorer,
                score: s.score,
                label: labels.as_ref().map(|l| l[&s.question]),
                reuse_ratio: reuse[s.question.as_str()],
            });
        }
        let auroc = manifest
            .scorers
            .enabled
            .iter()
            .map(|&kind| {
                let value = labels.as_ref().and_then(|l| {
                    let items: Vec<LabeledScore> = scores
                        .iter()
                        .filter(|s| s.scorer == kind)
                        .map(|s| LabeledScore::new(s.question.clone(), s.score, l[&s.question]))
                        .collect();
                    oriented_auroc(&items, kind.higher_is_factual()).ok()
                });
                (kind, value)
            })
            .collect();
        let redundancy = if manifest.n >= 2 {
            let groups: Vec<Vec<Vec<String>>> = questions
                .iter()
                .map(|q| q.responses.iter().map(|r| r.words.clone()).collect())
                .collect();
            Some(prefix_sharing_stats(&groups)?)
        } else {
            None
        };
        report.summaries.push(ConditionSummary {
            condition,
            auroc,
            mean_reuse_ratio: questions.iter().map(|q| q.reuse_ratio).sum::<f64>() / questions.len() as f64,
            redundancy,
            generation_ms,
            scoring_ms,
        });
        report.questions.insert(condition, questions);
    }
    Ok(report)
}
