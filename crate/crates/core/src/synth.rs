//! Synthetic corpora with known sentence-to-page alignment.
//!
//! Page `j` of every document draws its words from vocabulary slice `j`, so
//! pages share nothing but the sentence terminator. Summary sentences are
//! copies of uniformly chosen document sentences, optionally perturbed by
//! resampling tokens inside the source page's slice.

use std::ops::Range;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub pages_per_doc: usize,
    pub sentences_per_page: usize,
    /// Words per sentence, excluding the final `.`.
    pub sentence_len: usize,
    pub summary_sentences_per_doc: usize,
    /// Per-token replacement probability for copied sentences.
    pub noise: f64,
    /// Total topic vocabulary, split evenly into one slice per page.
    pub vocab_size: usize,
    pub seed: u64,
    /// Relative chance that a summary sentence is copied from each page.
    /// `None` picks summary sentences uniformly over the whole document.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub page_weights: Option<Vec<f64>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_docs: 50,
            pages_per_doc: 4,
            sentences_per_page: 5,
            sentence_len: 8,
            summary_sentences_per_doc: 3,
            noise: 0.0,
            vocab_size: 160,
            seed: 7,
            page_weights: None,
        }
    }
}

impl SynthSpec {
    pub fn slice_size(&self) -> usize {
        self.vocab_size / self.pages_per_doc.max(1)
    }

    pub fn slice(&self, page: usize) -> Range<usize> {
        let s = self.slice_size();
        page * s..(page + 1) * s
    }

    /// Tokens per generated page, including sentence terminators. Paginating
    /// with this limit reproduces the generator's pages exactly.
    pub fn page_tokens(&self) -> usize {
        self.sentences_per_page * (self.sentence_len + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.pages_per_doc == 0 || self.sentences_per_page == 0 || self.sentence_len == 0 {
            return bad("pages, sentences per page and sentence length must be >= 1".into());
        }
        if self.summary_sentences_per_doc == 0 {
            return bad("a summary needs at least one sentence".into());
        }
        if self.summary_sentences_per_doc > self.pages_per_doc * self.sentences_per_page {
            return bad(format!(
                "{} summary sentences exceed the {} document sentences",
                self.summary_sentences_per_doc,
                self.pages_per_doc * self.sentences_per_page
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1], got {}", self.noise));
        }
        if let Some(w) = &self.page_weights {
            if w.len() != self.pages_per_doc {
                return bad(format!(
                    "{} page weights for {} pages",
                    w.len(),
                    self.pages_per_doc
                ));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("page weights must be finite, >= 0 and not all zero".into());
            }
            let reachable: usize = w.iter().filter(|v| **v > 0.0).count() * self.sentences_per_page;
            if self.summary_sentences_per_doc > reachable {
                return bad(format!(
                    "{} summary sentences exceed the {reachable} sentences on weighted pages",
                    self.summary_sentences_per_doc
                ));
            }
        }
        let slice = self.slice_size();
        if slice < self.sentence_len.max(2) {
            return bad(format!(
                "vocabulary of {} gives {} words per page slice; need at least {}",
                self.vocab_size,
                slice,
                self.sentence_len.max(2)
            ));
        }
        Ok(())
    }
}

/// Ground truth for one synthetic document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAlignment {
    pub doc_id: String,
    /// Source page per summary sentence.
    pub gold_assignment: Vec<usize>,
    /// Source sentence (document ordinal) per summary sentence.
    pub source_sentences: Vec<usize>,
    /// Summary sentences copied from each page.
    pub gold_counts: Vec<usize>,
}

pub fn word(id: usize) -> String {
    format!("w{id}")
}

fn sentence_text(ids: &[usize]) -> String {
    let mut words: Vec<String> = ids.iter().map(|&i| word(i)).collect();
    if let Some(first) = words.first_mut() {
        *first = first.to_uppercase();
    }
    format!("{}.", words.join(" "))
}

/// Resamples each token from `slice` with probability `noise`. Returns the
/// new tokens and how many draws replaced a token.
pub fn perturb<R: Rng + ?Sized>(
    tokens: &[usize],
    slice: Range<usize>,
    noise: f64,
    rng: &mut R,
) -> (Vec<usize>, usize) {
    let mut replaced = 0;
    let out = tokens
        .iter()
        .map(|&t| {
            if rng.gen::<f64>() < noise {
                replaced += 1;
                rng.gen_range(slice.clone())
            } else {
                t
            }
        })
        .collect();
    (out, replaced)
}

/// Per-document stream: identical output regardless of generation order.
pub fn doc_rng(seed: u64, doc_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc_index as u64);
    rng
}

pub fn generate_document(spec: &SynthSpec, index: usize) -> (RawDocument, GoldAlignment) {
    let mut rng = doc_rng(spec.seed, index);
    let spp = spec.sentences_per_page;
    let mut sentences: Vec<Vec<usize>> = Vec::with_capacity(spec.pages_per_doc * spp);
    for page in 0..spec.pages_per_doc {
        let slice = spec.slice(page);
        for _ in 0..spp {
            let picks = sample(&mut rng, slice.len(), spec.sentence_len);
            sentences.push(picks.into_iter().map(|i| slice.start + i).collect());
        }
    }
    let mut chosen = match &spec.page_weights {
        None => sample(&mut rng, sentences.len(), spec.summary_sentences_per_doc).into_vec(),
        Some(weights) => weighted_sentences(spec, weights, &mut rng),
    };
    chosen.sort_unstable();

    let mut gold_counts = vec![0; spec.pages_per_doc];
    let mut gold_assignment = Vec::with_capacity(chosen.len());
    let mut summary = Vec::with_capacity(chosen.len());
    for &pos in &chosen {
        let page = pos / spp;
        gold_counts[page] += 1;
        gold_assignment.push(page);
        let (copy, _) = perturb(&sentences[pos], spec.slice(page), spec.noise, &mut rng);
        summary.push(sentence_text(&copy));
    }

    let doc_id = format!("synth-{index:05}");
    let article = sentences
        .iter()
        .map(|s| sentence_text(s))
        .collect::<Vec<_>>()
        .join(" ");
    (
        RawDocument {
            id: doc_id.clone(),
            article,
            abstract_text: summary.join(" "),
        },
        GoldAlignment {
            doc_id,
            gold_assignment,
            source_sentences: chosen,
            gold_counts,
        },
    )
}

/// Draws distinct sentence ordinals: a page by weight, then an unused
/// sentence on it. Pages run dry are redrawn.
fn weighted_sentences<R: Rng + ?Sized>(
    spec: &SynthSpec,
    weights: &[f64],
    rng: &mut R,
) -> Vec<usize> {
    let spp = spec.sentences_per_page;
    let mut left: Vec<Vec<usize>> = (0..spec.pages_per_doc)
        .map(|p| (p * spp..(p + 1) * spp).collect())
        .collect();
    let mut chosen = Vec::with_capacity(spec.summary_sentences_per_doc);
    while chosen.len() < spec.summary_sentences_per_doc {
        let live: Vec<f64> = weights
            .iter()
            .zip(&left)
            .map(|(&w, l)| if l.is_empty() { 0.0 } else { w })
            .collect();
        let page = WeightedIndex::new(&live)
            .expect("validated weights leave a page with sentences")
            .sample(rng);
        let pick = rng.gen_range(0..left[page].len());
        chosen.push(left[page].swap_remove(pick));
    }
    chosen
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<(Vec<RawDocument>, Vec<GoldAlignment>)> {
    spec.validate()?;
    Ok((0..spec.num_docs)
        .map(|i| generate_document(spec, i))
        .unzip())
}
