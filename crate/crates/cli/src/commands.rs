//! The subcommands. Each reads its inputs from the workdir, writes its
//! artifacts there, and returns a summary of what it did.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use pts_core::align::{full_summary_targets, AlignmentRecord, Metric, PageTarget};
use pts_core::corpus::{load_corpus, PaginatedRecord, ProcessedDocument, RejectReason};
use pts_core::distill::{
    assigned_counts, student_sentence_count, DistributionRecord, StudentSource,
};
use pts_core::embed::{fit_embedder, load_external_embeddings, Backend, Embedder, EmbedderState};
use pts_core::metrics::{corpus_report, rouge_n, CorpusReport};
use pts_core::synth::{generate_corpus, GoldAlignment};
use pts_core::toymodel::{
    grad_check, load_checkpoint, prepare_document, save_checkpoint, toy_instance, train,
    Evaluation, GradCheckReport, ModelParams, ToyModel, UNK,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SplitSizes, TargetMode, ValidationMetric};
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, read_json, read_jsonl, write_json, write_jsonl};
use crate::pipeline::{
    align_all, build_vocabulary, detokenize, fit_sentence_embedder, mean_embed_f1, preprocess_all,
    summarize_all, teacher_for, TeacherSettings,
};

pub const GOLD: &str = "gold.jsonl";
pub const PAGINATED: &str = "paginated.jsonl";
pub const REJECTIONS: &str = "rejections.json";
pub const EMBEDDER: &str = "embedder.json";
pub const ALIGNMENTS: &str = "alignments";
pub const COMPARISON: &str = "alignment_comparison.json";
pub const DISTRIBUTIONS: &str = "distributions.jsonl";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const VALIDATION_LOG: &str = "validation.jsonl";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const SUMMARIES: &str = "summaries.jsonl";
pub const REFERENCES: &str = "references.jsonl";
pub const REPORT: &str = "report.json";
pub const GRADCHECK: &str = "gradcheck.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

pub fn alignment_path(workdir: &Path, metric: Metric) -> PathBuf {
    workdir.join(ALIGNMENTS).join(format!("{metric}.jsonl"))
}

/// Writes the config with every default filled in next to the artifacts.
pub fn write_effective_config(cfg: &RunConfig) -> Result<()> {
    ensure_dir(cfg.workdir())?;
    write_json(&cfg.workdir().join(EFFECTIVE_CONFIG), cfg)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

pub fn load_documents(cfg: &RunConfig) -> Result<Vec<ProcessedDocument>> {
    let records: Vec<PaginatedRecord> = read_jsonl(&cfg.workdir().join(PAGINATED))?;
    records
        .into_iter()
        .map(|r| ProcessedDocument::try_from(r).map_err(CliError::from))
        .collect()
}

pub fn load_embedder(cfg: &RunConfig) -> Result<Embedder> {
    let state: EmbedderState = read_json(&cfg.workdir().join(EMBEDDER))?;
    let external = external_table(cfg, state.backend)?;
    Ok(Embedder::from_state(state, external)?)
}

fn external_table(
    cfg: &RunConfig,
    backend: Backend,
) -> Result<Option<pts_core::embed::ExternalEmbeddings>> {
    if backend != Backend::External {
        return Ok(None);
    }
    let path = cfg
        .paths
        .embeddings
        .as_ref()
        .ok_or_else(|| invalid("the external embedder needs paths.embeddings"))?;
    Ok(Some(load_external_embeddings(path)?))
}

fn load_alignments(cfg: &RunConfig, metric: Metric) -> Result<HashMap<String, AlignmentRecord>> {
    let rows: Vec<AlignmentRecord> = read_jsonl(&alignment_path(cfg.workdir(), metric))?;
    Ok(rows.into_iter().map(|r| (r.doc_id.clone(), r)).collect())
}

fn aligned_targets(
    doc: &ProcessedDocument,
    alignments: &HashMap<String, AlignmentRecord>,
) -> Result<Vec<PageTarget>> {
    let rec = alignments
        .get(doc.doc_id())
        .ok_or_else(|| invalid(format!("no alignment for document {}", doc.doc_id())))?;
    if rec.page_targets.len() != doc.doc.num_pages() {
        return Err(invalid(format!(
            "alignment for {} has {} pages, the document has {}",
            doc.doc_id(),
            rec.page_targets.len(),
            doc.doc.num_pages()
        )));
    }
    Ok(rec.page_targets())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutcome {
    pub documents: usize,
    pub corpus: PathBuf,
    /// Tokens per synthetic page; `page_limit` should match it.
    pub page_tokens: usize,
}

/// Writes a synthetic corpus and its gold alignment.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthOutcome> {
    let (raw, gold) = generate_corpus(&cfg.synth)?;
    let corpus = cfg.corpus_path();
    write_jsonl(&corpus, &raw)?;
    write_jsonl(&cfg.workdir().join(GOLD), &gold)?;
    Ok(SynthOutcome {
        documents: raw.len(),
        corpus,
        page_tokens: cfg.synth.page_tokens(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedDocument {
    pub doc_id: String,
    pub reason: String,
}

/// Rejection counts per reason, plus the ids rejected after cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejections {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
    pub rejected_documents: Vec<RejectedDocument>,
}

/// Cleans, splits and paginates the corpus, then fits the similarity
/// embedder on the result.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<Rejections> {
    let (raw, mut report) = load_corpus(cfg.corpus_path(), cfg.limit)?;
    let (docs, rejected) = preprocess_all(&raw, cfg.page_limit);
    for (_, reason) in &rejected {
        report.accepted -= 1;
        report.rejected += 1;
        *report
            .reasons
            .entry(reason.as_str().to_string())
            .or_default() += 1;
    }
    let rejections = Rejections {
        total: report.total,
        accepted: report.accepted,
        rejected: report.rejected,
        reasons: report.reasons,
        rejected_documents: rejected
            .into_iter()
            .map(
                |(doc_id, reason): (String, RejectReason)| RejectedDocument {
                    doc_id,
                    reason: reason.as_str().to_string(),
                },
            )
            .collect(),
    };
    let dir = cfg.workdir();
    let records: Vec<PaginatedRecord> = docs.iter().map(PaginatedRecord::from).collect();
    write_jsonl(&dir.join(PAGINATED), &records)?;
    write_json(&dir.join(REJECTIONS), &rejections)?;
    if docs.is_empty() {
        return Err(invalid("no usable documents in the corpus"));
    }
    let external = external_table(cfg, cfg.embedder.backend)?;
    let embedder = fit_sentence_embedder(&docs, cfg.embedder.backend, cfg.embedder.dim, external)?;
    write_json(&dir.join(EMBEDDER), &embedder.to_state())?;
    Ok(rejections)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub documents: usize,
    pub sentences: usize,
    /// Sentences whose best score was shared by another page.
    pub ties: usize,
    /// Fraction of sentences on their gold page; absent without gold data.
    pub accuracy: Option<f64>,
}

pub fn load_gold(workdir: &Path) -> Result<Option<HashMap<String, Vec<usize>>>> {
    let path = workdir.join(GOLD);
    if !path.exists() {
        return Ok(None);
    }
    let rows: Vec<GoldAlignment> = read_jsonl(&path)?;
    Ok(Some(
        rows.into_iter()
            .map(|g| (g.doc_id, g.gold_assignment))
            .collect(),
    ))
}

/// Aligns every summary sentence under each metric and compares the results
/// with the gold alignment when the corpus is synthetic.
pub fn cmd_align(cfg: &RunConfig, metrics: &[Metric]) -> Result<Vec<ComparisonRow>> {
    let docs = load_documents(cfg)?;
    let embedder = load_embedder(cfg)?;
    let gold = load_gold(cfg.workdir())?;
    let mut rows = Vec::with_capacity(metrics.len());
    for &metric in metrics {
        let alignments = align_all(&docs, metric, Some(&embedder))?;
        let records: Vec<AlignmentRecord> = alignments.iter().map(AlignmentRecord::from).collect();
        write_jsonl(&alignment_path(cfg.workdir(), metric), &records)?;
        let sentences = alignments.iter().map(|a| a.assignment.len()).sum();
        let ties = alignments
            .iter()
            .map(|a| a.tie_flags.iter().filter(|&&t| t).count())
            .sum();
        let accuracy = gold.as_ref().map(|g| {
            let (mut hits, mut total) = (0usize, 0usize);
            for a in &alignments {
                if let Some(expected) = g.get(&a.doc_id) {
                    total += expected.len();
                    hits += a
                        .assignment
                        .iter()
                        .zip(expected)
                        .filter(|(p, e)| p == e)
                        .count();
                }
            }
            if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            }
        });
        rows.push(ComparisonRow {
            metric,
            documents: alignments.len(),
            sentences,
            ties,
            accuracy,
        });
    }
    write_json(&cfg.workdir().join(COMPARISON), &rows)?;
    Ok(rows)
}

/// Plain-text table of an alignment comparison.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<14} {:>9} {:>9} {:>6} {:>9}\n",
        "metric", "documents", "sentences", "ties", "accuracy"
    );
    for r in rows {
        let acc = r
            .accuracy
            .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        out.push_str(&format!(
            "{:<14} {:>9} {:>9} {:>6} {:>9}\n",
            r.metric.as_str(),
            r.documents,
            r.sentences,
            r.ties,
            acc
        ));
    }
    out
}

/// Teacher page-importance distributions, each paired with the model-free
/// sentence-count student.
pub fn cmd_teacher(cfg: &RunConfig) -> Result<Vec<DistributionRecord>> {
    let docs = load_documents(cfg)?;
    let embedder = load_embedder(cfg)?;
    let alignments = load_alignments(cfg, cfg.alignment.metric)?;
    let settings = TeacherSettings {
        mode: cfg.teacher.mode,
        k: cfg.teacher.k,
        temperature: cfg.teacher.temperature,
    };
    let records = docs
        .par_iter()
        .map(|doc| {
            let targets = aligned_targets(doc, &alignments)?;
            let teacher = teacher_for(doc, &embedder, settings)?;
            let student = student_sentence_count(
                doc.doc_id(),
                &assigned_counts(&targets),
                cfg.student.epsilon,
            )?;
            for (name, probs) in [("teacher", &teacher.probs), ("student", &student.probs)] {
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!(
                        "{} distribution of {} sums to {sum}",
                        name,
                        doc.doc_id()
                    )));
                }
            }
            Ok(DistributionRecord {
                doc_id: teacher.doc_id,
                alphas: teacher.alphas,
                teacher: teacher.probs,
                student: student.probs,
                source: StudentSource::SentenceCount,
                temperature: teacher.temperature,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&cfg.workdir().join(DISTRIBUTIONS), &records)?;
    Ok(records)
}

/// Documents in corpus order, cut into training, validation and test parts.
pub struct Splits<'a> {
    pub train: &'a [ProcessedDocument],
    pub validation: &'a [ProcessedDocument],
    pub test: &'a [ProcessedDocument],
}

pub fn split_documents<'a>(cfg: &RunConfig, docs: &'a [ProcessedDocument]) -> Result<Splits<'a>> {
    let SplitSizes {
        train, validation, ..
    } = cfg.split.sizes(docs.len())?;
    let (train_docs, rest) = docs.split_at(train);
    let (validation_docs, test_docs) = rest.split_at(validation);
    Ok(Splits {
        train: train_docs,
        validation: validation_docs,
        test: test_docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_docs: usize,
    pub validation_docs: usize,
    pub test_docs: usize,
    pub vocab_size: usize,
    pub steps: usize,
    pub stopped_early: bool,
    pub best_step: Option<usize>,
    pub best_score: Option<f64>,
    pub initial_total: Option<f64>,
    pub final_total: Option<f64>,
    pub truncated_targets: usize,
    pub dropped_pages: usize,
}

/// Trains the toy model on the training split and keeps the parameters that
/// scored best on the validation split.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let docs = load_documents(cfg)?;
    let splits = split_documents(cfg, &docs)?;
    let alignments = load_alignments(cfg, cfg.alignment.metric)?;
    let distributions: HashMap<String, DistributionRecord> =
        read_jsonl::<DistributionRecord>(&cfg.workdir().join(DISTRIBUTIONS))?
            .into_iter()
            .map(|r| (r.doc_id.clone(), r))
            .collect();
    let embedder = load_embedder(cfg)?;

    let vocab = build_vocabulary(splits.train, cfg.model.max_vocab);
    let model_config = cfg.model.model_config(vocab.len());
    let base = ToyModel::<f64>::new(model_config.clone(), vocab.clone())?;
    let init = base.params.clone();

    let mut truncated_targets = 0;
    let mut dropped_pages = 0;
    let mut prepared = Vec::with_capacity(splits.train.len());
    for doc in splits.train {
        let targets = match cfg.train.targets {
            TargetMode::Aligned => aligned_targets(doc, &alignments)?,
            TargetMode::FullSummary => full_summary_targets(doc.doc.num_pages(), doc.summary.len()),
        };
        let dist = distributions
            .get(doc.doc_id())
            .ok_or_else(|| invalid(format!("no teacher distribution for {}", doc.doc_id())))?;
        let p = prepare_document(&base, doc, &targets, &dist.teacher)?;
        truncated_targets += p.truncated_targets;
        dropped_pages += p.dropped_pages;
        let mut d = p.doc;
        if cfg.student.source == StudentSource::SentenceCount {
            let kept = &targets[..d.pages.len()];
            d.count_student = Some(
                student_sentence_count(doc.doc_id(), &assigned_counts(kept), cfg.student.epsilon)?
                    .probs,
            );
        }
        prepared.push(d);
    }

    let val_pages: Vec<Vec<Vec<u32>>> = splits
        .validation
        .iter()
        .map(|d| base.encode_pages(d))
        .collect();
    let val_refs: Vec<Vec<String>> = splits
        .validation
        .iter()
        .map(|d| d.summary_tokens())
        .collect();
    let max_len = cfg.summarize.max_len;
    let metric = cfg.train.validation_metric;
    let validate = |p: &ModelParams<f64>| -> pts_core::Result<f64> {
        let outputs: Vec<Vec<String>> = summarize_all(p, &vocab, &val_pages, max_len)?
            .into_iter()
            .map(|(tokens, _)| tokens)
            .collect();
        match metric {
            ValidationMetric::EmbedF1 => mean_embed_f1(&outputs, &val_refs, &embedder),
            ValidationMetric::Rouge1 => Ok(outputs
                .iter()
                .zip(&val_refs)
                .map(|(o, r)| rouge_n::<f64, _>(o, r, 1).f1)
                .sum::<f64>()
                / outputs.len() as f64),
        }
    };
    let train_config = cfg.train_config();
    let outcome = if val_pages.is_empty() {
        train(
            init,
            &model_config,
            &prepared,
            &train_config,
            None::<fn(&ModelParams<f64>) -> pts_core::Result<f64>>,
        )?
    } else {
        train(
            init,
            &model_config,
            &prepared,
            &train_config,
            Some(validate),
        )?
    };

    let dir = cfg.workdir();
    let best = outcome.evaluations.iter().rfind(|e| e.improved).cloned();
    let mut model = ToyModel::new(model_config, vocab)?;
    model.params = outcome.params;
    save_checkpoint(dir.join(CHECKPOINT), &model)?;
    write_jsonl(&dir.join(TRAIN_LOG), &outcome.log)?;
    write_jsonl::<Evaluation, _>(&dir.join(VALIDATION_LOG), &outcome.evaluations)?;
    let report = TrainReport {
        train_docs: splits.train.len(),
        validation_docs: splits.validation.len(),
        test_docs: splits.test.len(),
        vocab_size: model.vocab.len(),
        steps: outcome.log.len(),
        stopped_early: outcome.stopped_early,
        best_step: best.as_ref().map(|e| e.step),
        best_score: best.as_ref().map(|e| e.score),
        initial_total: outcome.log.first().map(|r| r.total),
        final_total: outcome.log.last().map(|r| r.total),
        truncated_targets,
        dropped_pages,
    };
    write_json(&dir.join(TRAIN_REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum SplitChoice {
    /// The test split, or every document when it is empty.
    #[default]
    Auto,
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub text: String,
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub text: String,
}

/// Fused greedy summaries for the chosen split, plus the matching references.
pub fn cmd_summarize(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    split: SplitChoice,
) -> Result<Vec<SummaryRecord>> {
    let path = checkpoint.map_or_else(|| cfg.workdir().join(CHECKPOINT), Path::to_path_buf);
    let model: ToyModel<f64> = load_checkpoint(&path)?;
    let docs = load_documents(cfg)?;
    let splits = split_documents(cfg, &docs)?;
    let chosen = match split {
        SplitChoice::Auto if splits.test.is_empty() => &docs[..],
        SplitChoice::Auto | SplitChoice::Test => splits.test,
        SplitChoice::Train => splits.train,
        SplitChoice::Validation => splits.validation,
        SplitChoice::All => &docs[..],
    };
    let pages: Vec<Vec<Vec<u32>>> = chosen.iter().map(|d| model.encode_pages(d)).collect();
    let (unknown, total) = pages
        .iter()
        .flatten()
        .flatten()
        .fold((0usize, 0usize), |(u, t), &id| {
            (u + usize::from(id == UNK), t + 1)
        });
    if total > 0 && unknown as f64 / total as f64 > cfg.summarize.max_oov_rate {
        return Err(invalid(format!(
            "{unknown} of {total} page tokens are unknown to the checkpoint vocabulary; \
             was it trained on this corpus?"
        )));
    }
    let outputs = summarize_all(&model.params, &model.vocab, &pages, cfg.summarize.max_len)?;
    let summaries: Vec<SummaryRecord> = chosen
        .iter()
        .zip(outputs)
        .map(|(d, (tokens, confidence))| SummaryRecord {
            doc_id: d.doc_id().to_string(),
            text: detokenize(&tokens),
            tokens,
            confidence,
        })
        .collect();
    let references: Vec<ReferenceRecord> = chosen
        .iter()
        .map(|d| {
            let tokens = d.summary_tokens();
            ReferenceRecord {
                doc_id: d.doc_id().to_string(),
                text: detokenize(&tokens),
                tokens,
            }
        })
        .collect();
    write_jsonl(&cfg.workdir().join(SUMMARIES), &summaries)?;
    write_jsonl(&cfg.workdir().join(REFERENCES), &references)?;
    Ok(summaries)
}

#[derive(Deserialize)]
struct TokenRow {
    doc_id: String,
    tokens: Vec<String>,
}

/// Scores system summaries against references. Uses the corpus embedder when
/// one has been fitted, otherwise fits TF-IDF on the reference summaries.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    system: Option<&Path>,
    references: Option<&Path>,
) -> Result<CorpusReport<f64>> {
    let dir = cfg.workdir();
    let system = system.map_or_else(|| dir.join(SUMMARIES), Path::to_path_buf);
    let references = references.map_or_else(|| dir.join(REFERENCES), Path::to_path_buf);
    let rows = |p: &Path| -> Result<Vec<(String, Vec<String>)>> {
        Ok(read_jsonl::<TokenRow>(p)?
            .into_iter()
            .map(|r| (r.doc_id, r.tokens))
            .collect())
    };
    let (sys, refs) = (rows(&system)?, rows(&references)?);
    let embedder = if dir.join(EMBEDDER).exists() {
        load_embedder(cfg)?
    } else {
        let units: Vec<&[String]> = refs.iter().map(|(_, t)| t.as_slice()).collect();
        fit_embedder(units, Backend::Tfidf, None)?
    };
    let report = corpus_report(&sys, &refs, &embedder)?;
    write_json(&dir.join(REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOutcome {
    pub passed: bool,
    pub tolerance: f64,
    pub runs: Vec<GradCheckReport>,
}

/// Finite-difference check of the analytic gradients on the fixed toy
/// instance, once per configured lambda.
pub fn cmd_gradcheck(cfg: &RunConfig, corrupt_gradient: bool) -> Result<GradCheckOutcome> {
    let (_, params, doc) = toy_instance(cfg.gradcheck.seed)?;
    let mut options = cfg.gradcheck_options();
    options.corrupt_gradient = corrupt_gradient;
    let runs = cfg
        .gradcheck
        .lambdas
        .iter()
        .map(|&lambda| {
            grad_check(
                &params,
                &doc,
                lambda,
                StudentSource::ConfidenceHead,
                &options,
            )
        })
        .collect::<pts_core::Result<Vec<_>>>()?;
    let passed = runs
        .iter()
        .all(|r| r.max_relative_error <= cfg.gradcheck.tolerance);
    let outcome = GradCheckOutcome {
        passed,
        tolerance: cfg.gradcheck.tolerance,
        runs,
    };
    ensure_dir(cfg.workdir())?;
    write_json(&cfg.workdir().join(GRADCHECK), &outcome)?;
    Ok(outcome)
}
