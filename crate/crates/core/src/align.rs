//! Sentence-to-page alignment: every summary sentence goes to the page it is
//! most similar to, yielding one page-specific reference summary per page.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::PaginatedDocument;
use crate::embed::{cosine, Embedder, EmbeddingVector};
use crate::metrics::{rouge_l, rouge_n};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "embed-cosine")]
    EmbedCosine,
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::EmbedCosine,
        Metric::Rouge1,
        Metric::Rouge2,
        Metric::RougeL,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::EmbedCosine => "embed-cosine",
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown alignment metric {s:?}")))
    }
}

/// `scores[k][j]`: similarity of summary sentence `k` to page `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<F> {
    pub doc_id: String,
    pub metric: Metric,
    pub scores: Vec<Vec<F>>,
    num_pages: usize,
}

impl<F: Scalar> ScoreMatrix<F> {
    pub fn new(doc_id: impl Into<String>, metric: Metric, scores: Vec<Vec<F>>) -> Result<Self> {
        let num_pages = scores.first().map_or(0, Vec::len);
        if num_pages == 0 && !scores.is_empty() {
            return Err(Error::InvalidArgument("score matrix has zero pages".into()));
        }
        if scores.iter().any(|r| r.len() != num_pages) {
            return Err(Error::InvalidArgument("ragged score matrix".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite similarity score".into()));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            metric,
            scores,
            num_pages,
        })
    }

    pub fn rows(&self) -> usize {
        self.scores.len()
    }

    pub fn cols(&self) -> usize {
        self.num_pages
    }
}

/// Scores every (summary sentence, page) pair. ROUGE metrics treat the
/// sentence as candidate and the full page text as reference (F1).
pub fn score_matrix<F: Scalar, S: AsRef<str>>(
    doc: &PaginatedDocument,
    summary_sentences: &[Vec<S>],
    metric: Metric,
    embedder: Option<&Embedder>,
) -> Result<ScoreMatrix<F>> {
    if doc.pages.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let pages: Vec<Vec<String>> = (0..doc.num_pages()).map(|j| doc.page_tokens(j)).collect();
    let scores = match metric {
        Metric::EmbedCosine => {
            let embedder = embedder.ok_or_else(|| {
                Error::InvalidArgument("embed-cosine alignment needs an embedder".into())
            })?;
            let page_vecs = pages
                .iter()
                .map(|p| embedder.embed(p))
                .collect::<Result<Vec<EmbeddingVector<F>>>>()?;
            summary_sentences
                .iter()
                .map(|s| {
                    let sv: EmbeddingVector<F> = embedder.embed(s)?;
                    page_vecs
                        .iter()
                        .map(|pv| cosine(pv, &sv).map(|c| c.value))
                        .collect::<Result<Vec<F>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
        Metric::Rouge1 | Metric::Rouge2 | Metric::RougeL => summary_sentences
            .iter()
            .map(|s| {
                let s: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
                pages
                    .iter()
                    .map(|p| {
                        let p: Vec<&str> = p.iter().map(String::as_str).collect();
                        match metric {
                            Metric::Rouge1 => rouge_n::<F, _>(&s, &p, 1).f1,
                            Metric::Rouge2 => rouge_n::<F, _>(&s, &p, 2).f1,
                            _ => rouge_l::<F, _>(&s, &p).f1,
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    let mut m = ScoreMatrix::new(doc.doc_id.clone(), metric, scores)?;
    m.num_pages = doc.num_pages();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<F> {
    pub doc_id: String,
    pub metric: Metric,
    pub num_pages: usize,
    /// Winning page per summary sentence.
    pub assignment: Vec<usize>,
    pub winning_scores: Vec<F>,
    /// Another page matched the winning score exactly.
    pub tie_flags: Vec<bool>,
}

/// Argmax per row; ties go to the lowest page index and are flagged.
pub fn assign_sentences<F: Scalar>(matrix: &ScoreMatrix<F>) -> Alignment<F> {
    let mut assignment = Vec::with_capacity(matrix.rows());
    let mut winning_scores = Vec::with_capacity(matrix.rows());
    let mut tie_flags = Vec::with_capacity(matrix.rows());
    for row in &matrix.scores {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        let tie = row
            .iter()
            .enumerate()
            .any(|(j, &v)| j != best && v == row[best]);
        assignment.push(best);
        winning_scores.push(row[best]);
        tie_flags.push(tie);
    }
    Alignment {
        doc_id: matrix.doc_id.clone(),
        metric: matrix.metric,
        num_pages: matrix.cols(),
        assignment,
        winning_scores,
        tie_flags,
    }
}

/// Page-specific reference summary: indices of the summary sentences
/// assigned to the page, in summary order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTarget {
    pub page_index: usize,
    pub sentences: Vec<usize>,
}

impl PageTarget {
    pub fn tokens<S: Clone>(&self, summary_sentences: &[Vec<S>]) -> Vec<S> {
        self.sentences
            .iter()
            .flat_map(|&k| summary_sentences[k].iter().cloned())
            .collect()
    }
}

pub fn build_page_targets<F>(alignment: &Alignment<F>) -> Vec<PageTarget> {
    let mut targets: Vec<PageTarget> = (0..alignment.num_pages)
        .map(|page_index| PageTarget {
            page_index,
            sentences: Vec::new(),
        })
        .collect();
    for (k, &j) in alignment.assignment.iter().enumerate() {
        targets[j].sentences.push(k);
    }
    targets
}

/// Every page gets the whole summary; the PageSum-style training target.
pub fn full_summary_targets(num_pages: usize, num_sentences: usize) -> Vec<PageTarget> {
    (0..num_pages)
        .map(|page_index| PageTarget {
            page_index,
            sentences: (0..num_sentences).collect(),
        })
        .collect()
}

pub fn alignment_accuracy<F: Scalar>(predicted: &[usize], gold: &[usize]) -> Result<F> {
    if predicted.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Ok(F::one());
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(F::from_count(hits) / F::from_count(gold.len()))
}

/// One line of an alignment JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub doc_id: String,
    pub metric: Metric,
    pub assignment: Vec<usize>,
    pub tie_flags: Vec<bool>,
    pub page_targets: Vec<Vec<usize>>,
    pub winning_scores: Vec<f64>,
}

impl<F: Scalar> From<&Alignment<F>> for AlignmentRecord {
    fn from(a: &Alignment<F>) -> Self {
        AlignmentRecord {
            doc_id: a.doc_id.clone(),
            metric: a.metric,
            assignment: a.assignment.clone(),
            tie_flags: a.tie_flags.clone(),
            page_targets: build_page_targets(a)
                .into_iter()
                .map(|t| t.sentences)
                .collect(),
            winning_scores: a.winning_scores.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

impl AlignmentRecord {
    pub fn page_targets(&self) -> Vec<PageTarget> {
        self.page_targets
            .iter()
            .enumerate()
            .map(|(page_index, s)| PageTarget {
                page_index,
                sentences: s.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{paginate, Sentence};
    use crate::embed::{fit_embedder, Backend};

    fn doc_from(pages: &[&str]) -> PaginatedDocument {
        let sentences: Vec<Sentence> = pages
            .iter()
            .enumerate()
            .map(|(i, p)| Sentence {
                index: i,
                tokens: p.split_whitespace().map(String::from).collect(),
                char_span: (0, 0),
            })
            .collect();
        let limit = sentences.iter().map(|s| s.tokens.len()).max().unwrap();
        PaginatedDocument {
            doc_id: "d".into(),
            page_limit: limit,
            pages: paginate(&sentences, limit).unwrap(),
            sentences,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn rouge1_containment_and_hand_value() {
        let doc = doc_from(&["the cat sat"]);
        let m: ScoreMatrix<f64> =
            score_matrix(&doc, &[toks("the cat ran")], Metric::Rouge1, None).unwrap();
        assert!((m.scores[0][0] - 2.0 / 3.0).abs() < 1e-12);
        let m: ScoreMatrix<f64> =
            score_matrix(&doc, &[toks("cat sat")], Metric::Rouge1, None).unwrap();
        assert!(m.scores[0][0] > 0.0);
    }

    #[test]
    fn disjoint_sentence_scores_zero_row() {
        let doc = doc_from(&["a b c", "d e f"]);
        let m: ScoreMatrix<f64> =
            score_matrix(&doc, &[toks("x y z")], Metric::Rouge2, None).unwrap();
        assert_eq!(m.scores[0], vec![0.0, 0.0]);
        assert_eq!((m.rows(), m.cols()), (1, 2));
    }

    #[test]
    fn embed_cosine_requires_embedder() {
        let doc = doc_from(&["a b"]);
        assert!(
            score_matrix::<f64, String>(&doc, &[toks("a")], Metric::EmbedCosine, None).is_err()
        );
    }

    #[test]
    fn argmax_and_ties() {
        let m =
            ScoreMatrix::new("d", Metric::Rouge1, vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let a = assign_sentences(&m);
        assert_eq!(a.assignment, vec![0, 1]);
        assert_eq!(a.tie_flags, vec![false, false]);
        let m = ScoreMatrix::new("d", Metric::Rouge1, vec![vec![0.5, 0.5]]).unwrap();
        let a = assign_sentences(&m);
        assert_eq!(a.assignment, vec![0]);
        assert_eq!(a.tie_flags, vec![true]);
    }

    #[test]
    fn verbatim_copy_goes_to_its_page() {
        let doc = doc_from(&["alpha beta gamma", "delta epsilon zeta", "eta theta iota"]);
        let units: Vec<Vec<String>> = (0..3).map(|j| doc.page_tokens(j)).collect();
        let e = fit_embedder(&units, Backend::Tfidf, None).unwrap();
        let m: ScoreMatrix<f64> = score_matrix(
            &doc,
            &[toks("eta theta iota")],
            Metric::EmbedCosine,
            Some(&e),
        )
        .unwrap();
        let a = assign_sentences(&m);
        assert_eq!(a.assignment, vec![2]);
        assert!(!a.tie_flags[0]);
    }

    #[test]
    fn page_targets_group_in_order() {
        let a = Alignment::<f64> {
            doc_id: "d".into(),
            metric: Metric::Rouge1,
            num_pages: 2,
            assignment: vec![1, 0, 1],
            winning_scores: vec![1.0; 3],
            tie_flags: vec![false; 3],
        };
        let t = build_page_targets(&a);
        assert_eq!(t[0].sentences, vec![1]);
        assert_eq!(t[1].sentences, vec![0, 2]);

        let a = Alignment::<f64> {
            assignment: vec![0, 0],
            ..a
        };
        let t = build_page_targets(&a);
        assert_eq!(t[0].sentences, vec![0, 1]);
        assert!(t[1].sentences.is_empty());
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(alignment_accuracy::<f64>(&[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(alignment_accuracy::<f64>(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(
            alignment_accuracy::<f64>(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(),
            0.75
        );
        assert!(alignment_accuracy::<f64>(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn metric_names() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
            assert_eq!(
                serde_json::to_string(&m).unwrap(),
                format!("\"{}\"", m.as_str())
            );
        }
    }
}
