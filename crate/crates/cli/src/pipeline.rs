//! In-memory pipeline stages. The subcommands wrap these with file I/O.

use pts_core::align::{assign_sentences, score_matrix, Alignment, Metric};
use pts_core::corpus::{
    clean_text, preprocess_document, tokenize, ProcessedDocument, RawDocument, RejectReason,
};
use pts_core::distill::{
    provisional_page_summary, teacher_distribution, ProvisionalMode, TeacherDistribution,
};
use pts_core::embed::{fit_embedder, Backend, Embedder, ExternalEmbeddings};
use pts_core::metrics::embed_f1;
use pts_core::toymodel::{generate_summary, ModelParams, Vocabulary};
use pts_core::Result;
use rayon::prelude::*;

/// Preprocesses every document, keeping input order. Documents whose article
/// or abstract clean down to nothing are returned as rejections.
pub fn preprocess_all(
    raw: &[RawDocument],
    page_limit: usize,
) -> (Vec<ProcessedDocument>, Vec<(String, RejectReason)>) {
    let results: Vec<_> = raw
        .par_iter()
        .map(|d| (d, preprocess_document(d, page_limit)))
        .collect();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (doc, result) in results {
        match result {
            Ok(p) => kept.push(p),
            Err(_) => {
                let reason = if tokenize(&clean_text(&doc.article)).is_empty() {
                    RejectReason::EmptyArticle
                } else {
                    RejectReason::EmptyAbstract
                };
                rejected.push((doc.id.clone(), reason));
            }
        }
    }
    (kept, rejected)
}

/// Fits the similarity embedder. Document frequencies count sentences, both
/// article and summary sentences, so terms shared by every page still get a
/// low weight.
pub fn fit_sentence_embedder(
    docs: &[ProcessedDocument],
    backend: Backend,
    dim: Option<usize>,
    external: Option<ExternalEmbeddings>,
) -> Result<Embedder> {
    if backend == Backend::External {
        let table = external.ok_or_else(|| {
            pts_core::Error::InvalidArgument("external backend needs an embeddings file".into())
        })?;
        return Ok(Embedder::external(table));
    }
    let units = docs.iter().flat_map(|d| {
        d.doc
            .sentences
            .iter()
            .map(|s| s.tokens.as_slice())
            .chain(d.summary.iter().map(|s| s.tokens.as_slice()))
    });
    fit_embedder(units, backend, dim)
}

pub fn align_document(
    doc: &ProcessedDocument,
    metric: Metric,
    embedder: Option<&Embedder>,
) -> Result<Alignment<f64>> {
    let matrix = score_matrix(&doc.doc, &doc.summary_sentence_tokens(), metric, embedder)?;
    Ok(assign_sentences(&matrix))
}

pub fn align_all(
    docs: &[ProcessedDocument],
    metric: Metric,
    embedder: Option<&Embedder>,
) -> Result<Vec<Alignment<f64>>> {
    docs.par_iter()
        .map(|d| align_document(d, metric, embedder))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherSettings {
    pub mode: ProvisionalMode,
    pub k: usize,
    pub temperature: f64,
}

pub fn teacher_for(
    doc: &ProcessedDocument,
    embedder: &Embedder,
    settings: TeacherSettings,
) -> Result<TeacherDistribution<f64>> {
    let gold = doc.summary_tokens();
    let provisionals = (0..doc.doc.num_pages())
        .map(|j| {
            provisional_page_summary(
                &doc.doc.page_sentences(j),
                &gold,
                settings.mode,
                settings.k,
                embedder,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    teacher_distribution(
        doc.doc_id(),
        &provisionals,
        &gold,
        embedder,
        settings.temperature,
    )
}

/// Vocabulary over page tokens and summary tokens of the given documents.
pub fn build_vocabulary(docs: &[ProcessedDocument], max_size: Option<usize>) -> Vocabulary {
    let streams: Vec<Vec<String>> = docs
        .iter()
        .flat_map(|d| {
            [
                d.doc.tokens().iter().map(|t| t.to_string()).collect(),
                d.summary_tokens(),
            ]
        })
        .collect();
    Vocabulary::build(streams.iter().map(Vec::as_slice), max_size)
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Greedy fused summaries for `pages`, decoded back to tokens.
pub fn summarize_all(
    params: &ModelParams<f64>,
    vocab: &Vocabulary,
    pages: &[Vec<Vec<u32>>],
    max_len: usize,
) -> Result<Vec<(Vec<String>, Vec<f64>)>> {
    pages
        .par_iter()
        .map(|p| {
            let g = generate_summary(params, p, max_len)?;
            Ok((vocab.decode(&g.tokens), g.confidence))
        })
        .collect()
}

/// Mean embedding F1 of generated summaries against references.
pub fn mean_embed_f1(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    embedder: &Embedder,
) -> Result<f64> {
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let scores: Vec<f64> = candidates
        .par_iter()
        .zip(references)
        .map(|(c, r)| embed_f1::<f64, _>(c, r, embedder).map(|s| s.score.f1))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
