#![allow(dead_code)]

use pts_core::align::{assign_sentences, score_matrix, Alignment, Metric};
use pts_core::corpus::{preprocess_document, ProcessedDocument};
use pts_core::embed::{fit_embedder, Backend, Embedder};
use pts_core::synth::{generate_corpus, GoldAlignment, SynthSpec};

pub struct SynthCorpus {
    pub docs: Vec<ProcessedDocument>,
    pub gold: Vec<GoldAlignment>,
    pub embedder: Embedder,
}

/// Generates, paginates at the synthetic page size and fits TF-IDF with one
/// IDF unit per article or summary sentence.
pub fn synth_corpus(spec: &SynthSpec) -> SynthCorpus {
    let (raw, gold) = generate_corpus(spec).unwrap();
    let docs: Vec<ProcessedDocument> = raw
        .iter()
        .map(|r| preprocess_document(r, spec.page_tokens()).unwrap())
        .collect();
    let units: Vec<Vec<String>> = docs
        .iter()
        .flat_map(|d| d.doc.sentences.iter().chain(&d.summary))
        .map(|s| s.tokens.clone())
        .collect();
    let embedder = fit_embedder(&units, Backend::Tfidf, None).unwrap();
    SynthCorpus {
        docs,
        gold,
        embedder,
    }
}

pub fn align(doc: &ProcessedDocument, metric: Metric, embedder: &Embedder) -> Alignment<f64> {
    let m = score_matrix(
        &doc.doc,
        &doc.summary_sentence_tokens(),
        metric,
        Some(embedder),
    )
    .unwrap();
    assign_sentences(&m)
}
