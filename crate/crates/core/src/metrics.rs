//! ROUGE-1/2/L and a greedy embedding-matching F-score.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder, EmbeddingVector};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RougeScore<F> {
    #[serde(rename = "p")]
    pub precision: F,
    #[serde(rename = "r")]
    pub recall: F,
    pub f1: F,
}

impl<F: Scalar> RougeScore<F> {
    pub fn from_pr(precision: F, recall: F) -> Self {
        let sum = precision + recall;
        let f1 = if sum > F::zero() {
            (F::one() + F::one()) * precision * recall / sum
        } else {
            F::zero()
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                F::zero()
            } else {
                F::from_count(num) / F::from_count(den)
            }
        };
        Self::from_pr(ratio(overlap, cand_total), ratio(overlap, ref_total))
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_default() += 1;
    }
    counts
}

/// ROUGE-N with clipped n-gram counts.
pub fn rouge_n<F: Scalar, S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    n: usize,
) -> RougeScore<F> {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| refs.get(g).map_or(0, |&r| c.min(r)))
        .sum();
    RougeScore::from_counts(overlap, cand.values().sum(), refs.values().sum())
}

/// Longest common subsequence length, two-row dynamic program.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L over whole token sequences.
pub fn rouge_l<F: Scalar, S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore<F> {
    let lcs = lcs_len(candidate, reference);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedF1<F> {
    pub score: RougeScore<F>,
    /// Every token vector on at least one side was zero.
    pub degenerate: bool,
}

/// Greedy token matching: precision is the mean over candidate tokens of the
/// best cosine against any reference token, recall the converse.
pub fn embed_f1<F: Scalar, S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    embedder: &Embedder,
) -> Result<EmbedF1<F>> {
    let mut cache: HashMap<&str, EmbeddingVector<F>> = HashMap::new();
    for t in candidate.iter().chain(reference) {
        let t = t.as_ref();
        if !cache.contains_key(t) {
            cache.insert(t, embedder.embed(&[t])?);
        }
    }
    let vectors = |side: &[S]| side.iter().map(|t| &cache[t.as_ref()]).collect::<Vec<_>>();
    let (cand, refs) = (vectors(candidate), vectors(reference));
    let degenerate = cand.iter().all(|v| v.is_zero()) || refs.iter().all(|v| v.is_zero());
    if degenerate {
        return Ok(EmbedF1 {
            score: RougeScore::default(),
            degenerate: true,
        });
    }
    let greedy = |from: &[&EmbeddingVector<F>], to: &[&EmbeddingVector<F>]| -> Result<F> {
        let mut total = F::zero();
        for u in from {
            let mut best = F::zero();
            for (k, v) in to.iter().enumerate() {
                let c = cosine(u, v)?.value;
                if k == 0 || c > best {
                    best = c;
                }
            }
            total += best;
        }
        Ok(total / F::from_count(from.len()))
    };
    let precision = greedy(&cand, &refs)?;
    let recall = greedy(&refs, &cand)?;
    Ok(EmbedF1 {
        score: RougeScore::from_pr(precision, recall),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DocScores<F> {
    pub doc_id: String,
    pub rouge1: RougeScore<F>,
    pub rouge2: RougeScore<F>,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore<F>,
    pub embed_f1: RougeScore<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MeanScores<F> {
    pub rouge1: F,
    pub rouge2: F,
    #[serde(rename = "rougeL")]
    pub rouge_l: F,
    pub embed_f1: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CorpusReport<F> {
    pub n_docs: usize,
    pub means: MeanScores<F>,
    pub per_doc: Vec<DocScores<F>>,
}

pub fn score_document<F: Scalar, S: AsRef<str>>(
    doc_id: &str,
    candidate: &[S],
    reference: &[S],
    embedder: &Embedder,
) -> Result<DocScores<F>> {
    Ok(DocScores {
        doc_id: doc_id.to_string(),
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
        embed_f1: embed_f1(candidate, reference, embedder)?.score,
    })
}

/// Scores system summaries against references matched by document id.
/// Per-document rows come out sorted by id.
pub fn corpus_report<F: Scalar, S: AsRef<str>>(
    system: &[(String, Vec<S>)],
    references: &[(String, Vec<S>)],
    embedder: &Embedder,
) -> Result<CorpusReport<F>> {
    let sys: BTreeMap<&str, &[S]> = system
        .iter()
        .map(|(id, t)| (id.as_str(), t.as_slice()))
        .collect();
    let refs: BTreeMap<&str, &[S]> = references
        .iter()
        .map(|(id, t)| (id.as_str(), t.as_slice()))
        .collect();
    let sys_ids: BTreeSet<&str> = sys.keys().copied().collect();
    let ref_ids: BTreeSet<&str> = refs.keys().copied().collect();
    if sys_ids != ref_ids || sys.len() != system.len() || refs.len() != references.len() {
        return Err(Error::IdMismatch {
            missing_system: ref_ids
                .difference(&sys_ids)
                .map(|s| s.to_string())
                .collect(),
            missing_references: sys_ids
                .difference(&ref_ids)
                .map(|s| s.to_string())
                .collect(),
        });
    }
    let per_doc = sys
        .iter()
        .map(|(id, cand)| score_document(id, cand, refs[id], embedder))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_scores(per_doc))
}

pub fn summarize_scores<F: Scalar>(per_doc: Vec<DocScores<F>>) -> CorpusReport<F> {
    let n = per_doc.len();
    let mean = |f: &dyn Fn(&DocScores<F>) -> F| {
        if n == 0 {
            F::zero()
        } else {
            per_doc.iter().map(f).sum::<F>() / F::from_count(n)
        }
    };
    let means = MeanScores {
        rouge1: mean(&|d| d.rouge1.f1),
        rouge2: mean(&|d| d.rouge2.f1),
        rouge_l: mean(&|d| d.rouge_l.f1),
        embed_f1: mean(&|d| d.embed_f1.f1),
    };
    CorpusReport {
        n_docs: n,
        means,
        per_doc,
    }
}
