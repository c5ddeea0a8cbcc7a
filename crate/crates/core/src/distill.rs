//! Teacher/student page-importance distributions, the KL distillation term
//! and the combined training objective.

use serde::{Deserialize, Serialize};

use crate::align::PageTarget;
use crate::embed::{cosine, Embedder, EmbeddingVector};
use crate::scalar::softmax;
use crate::{Error, Result, Scalar};

/// Student probabilities are floored here (then renormalized) before KL.
pub const STUDENT_FLOOR: f64 = 1e-8;

/// Default weight of the KL term.
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProvisionalMode {
    /// The `k` page sentences closest to the gold summary, in page order.
    #[default]
    ExtractiveTopk,
    WholePage,
}

/// Builds a model-free provisional summary for one page.
pub fn provisional_page_summary<S: AsRef<str>>(
    page_sentences: &[&[S]],
    gold_summary: &[S],
    mode: ProvisionalMode,
    k: usize,
    embedder: &Embedder,
) -> Result<Vec<String>> {
    let owned = |s: &[S]| s.iter().map(|t| t.as_ref().to_string()).collect::<Vec<_>>();
    match mode {
        ProvisionalMode::WholePage => Ok(page_sentences.iter().flat_map(|s| owned(s)).collect()),
        ProvisionalMode::ExtractiveTopk => {
            if page_sentences.len() <= k {
                return Ok(page_sentences.iter().flat_map(|s| owned(s)).collect());
            }
            let gold: EmbeddingVector<f64> = embedder.embed(gold_summary)?;
            let mut ranked = page_sentences
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let v: EmbeddingVector<f64> = embedder.embed(s)?;
                    Ok((i, cosine(&v, &gold)?.value))
                })
                .collect::<Result<Vec<_>>>()?;
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut chosen: Vec<usize> = ranked.into_iter().take(k).map(|(i, _)| i).collect();
            chosen.sort_unstable();
            Ok(chosen
                .into_iter()
                .flat_map(|i| owned(page_sentences[i]))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TeacherDistribution<F> {
    pub doc_id: String,
    pub alphas: Vec<F>,
    pub probs: Vec<F>,
    pub temperature: F,
    /// The gold summary embedded to the zero vector; `probs` is uniform.
    pub degenerate: bool,
}

/// Temperature softmax over page similarities, max-subtracted.
pub fn teacher_from_alphas<F: Scalar>(alphas: &[F], temperature: F) -> Result<Vec<F>> {
    if alphas.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if !(temperature > F::zero()) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let scaled: Vec<F> = alphas.iter().map(|&a| a / temperature).collect();
    Ok(softmax(&scaled))
}

pub fn teacher_distribution<F: Scalar, S: AsRef<str>>(
    doc_id: &str,
    provisionals: &[Vec<S>],
    gold_summary: &[S],
    embedder: &Embedder,
    temperature: F,
) -> Result<TeacherDistribution<F>> {
    if provisionals.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let gold: EmbeddingVector<F> = embedder.embed(gold_summary)?;
    let alphas = provisionals
        .iter()
        .map(|p| {
            let v: EmbeddingVector<F> = embedder.embed(p)?;
            Ok(cosine(&v, &gold)?.value)
        })
        .collect::<Result<Vec<F>>>()?;
    let degenerate = gold.is_zero();
    let softened = teacher_from_alphas(&alphas, temperature)?;
    let probs = if degenerate {
        vec![F::one() / F::from_count(alphas.len()); alphas.len()]
    } else {
        softened
    };
    Ok(TeacherDistribution {
        doc_id: doc_id.to_string(),
        alphas,
        probs,
        temperature,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudentSource {
    #[default]
    ConfidenceHead,
    SentenceCount,
}

/// What the sentence-count student counts per page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountBasis {
    /// `|S_j|`, summary sentences aligned to the page.
    #[default]
    AssignedSummary,
    /// Article sentences on the page.
    PageSentences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StudentDistribution<F> {
    pub doc_id: String,
    pub probs: Vec<F>,
    pub source: StudentSource,
}

impl<F: Scalar> StudentDistribution<F> {
    /// Wraps confidence-head output, applying the probability floor.
    pub fn from_confidence(doc_id: &str, probs: &[F]) -> Result<Self> {
        Ok(Self {
            doc_id: doc_id.to_string(),
            probs: floor_and_renormalize(probs)?,
            source: StudentSource::ConfidenceHead,
        })
    }
}

pub fn assigned_counts(targets: &[PageTarget]) -> Vec<usize> {
    targets.iter().map(|t| t.sentences.len()).collect()
}

/// `Z_j = (n_j + eps) / Σ_k (n_k + eps)`.
pub fn student_sentence_count<F: Scalar>(
    doc_id: &str,
    counts: &[usize],
    epsilon: F,
) -> Result<StudentDistribution<F>> {
    if counts.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if epsilon < F::zero() || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let smoothed: Vec<F> = counts.iter().map(|&n| F::from_count(n) + epsilon).collect();
    let total: F = smoothed.iter().copied().sum();
    if total.is_zero() {
        return Err(Error::InvalidArgument(
            "all sentence counts are zero and epsilon is 0".into(),
        ));
    }
    let probs: Vec<F> = smoothed.into_iter().map(|v| v / total).collect();
    Ok(StudentDistribution {
        doc_id: doc_id.to_string(),
        probs: floor_and_renormalize(&probs)?,
        source: StudentSource::SentenceCount,
    })
}

fn floor_and_renormalize<F: Scalar>(probs: &[F]) -> Result<Vec<F>> {
    if probs.iter().any(|p| !p.is_finite() || *p < F::zero()) {
        return Err(Error::InvalidArgument(
            "student probabilities must be finite and >= 0".into(),
        ));
    }
    let floor = F::from_f64_lossy(STUDENT_FLOOR);
    if probs.iter().all(|&p| p >= floor) {
        return Ok(probs.to_vec());
    }
    let floored: Vec<F> = probs.iter().map(|&p| p.max(floor)).collect();
    let total: F = floored.iter().copied().sum();
    Ok(floored.into_iter().map(|p| p / total).collect())
}

/// `Σ_j T_j ln(T_j / Z_j)` with `0 ln 0 = 0`; the student is floored at
/// [`STUDENT_FLOOR`] and renormalized first.
pub fn kl_divergence<F: Scalar>(teacher: &[F], student: &[F]) -> Result<F> {
    if teacher.len() != student.len() {
        return Err(Error::DimensionMismatch {
            expected: teacher.len(),
            actual: student.len(),
        });
    }
    let z = floor_and_renormalize(student)?;
    let mut kl = F::zero();
    for (&t, &z) in teacher.iter().zip(&z) {
        if t > F::zero() {
            kl += t * (t / z).ln();
        }
    }
    Ok(kl)
}

pub fn distribution_kl<F: Scalar>(
    teacher: &TeacherDistribution<F>,
    student: &StudentDistribution<F>,
) -> Result<F> {
    kl_divergence(&teacher.probs, &student.probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LossBreakdown<F> {
    pub xent: F,
    pub kl: F,
    pub lambda: F,
    pub total: F,
}

/// `(1 - λ) xent + λ kl`.
pub fn combined_loss<F: Scalar>(xent: F, kl: F, lambda: F) -> Result<LossBreakdown<F>> {
    if !(lambda >= F::zero() && lambda <= F::one()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if kl < F::from_f64_lossy(-1e-12) {
        return Err(Error::InvalidArgument(format!("kl must be >= 0, got {kl}")));
    }
    Ok(LossBreakdown {
        xent,
        kl,
        lambda,
        total: (F::one() - lambda) * xent + lambda * kl,
    })
}

/// One line of the teacher/student dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub doc_id: String,
    pub alphas: Vec<f64>,
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
    pub source: StudentSource,
    pub temperature: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{fit_embedder, Backend};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn teacher_uniform_for_equal_alphas() {
        let t = teacher_from_alphas(&[0.3f64; 4], 1.0).unwrap();
        for p in t {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn teacher_hand_softmax() {
        let t = teacher_from_alphas(&[0.0f64, 2f64.ln()], 1.0).unwrap();
        assert!((t[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((t[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(teacher_from_alphas(&[0.7f64], 1.0).unwrap(), vec![1.0]);
        assert!(teacher_from_alphas(&[0.7f64], 0.0).is_err());
    }

    #[test]
    fn teacher_degenerate_gold() {
        let e = fit_embedder([toks("a b"), toks("c")], Backend::Tfidf, None).unwrap();
        let t = teacher_distribution::<f64, String>(
            "d",
            &[toks("a"), toks("c")],
            &toks("zzz"),
            &e,
            1.0,
        )
        .unwrap();
        assert!(t.degenerate);
        assert_eq!(t.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn sentence_count_student() {
        let z = student_sentence_count::<f64>("d", &[3, 1], 1.0).unwrap();
        assert!((z.probs[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((z.probs[1] - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            student_sentence_count::<f64>("d", &[0, 0], 1.0)
                .unwrap()
                .probs,
            vec![0.5, 0.5]
        );
        assert_eq!(
            student_sentence_count::<f64>("d", &[5], 1.0).unwrap().probs,
            vec![1.0]
        );
        assert!(student_sentence_count::<f64>("d", &[0, 0], 0.0).is_err());
    }

    #[test]
    fn kl_hand_values() {
        assert_eq!(kl_divergence(&[0.3f64, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = kl_divergence(&[0.5f64, 0.5], &[0.25, 0.75]).unwrap();
        assert!((v - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
        let v = kl_divergence(&[1.0f64, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert!(kl_divergence(&[1.0f64], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_with_zero_student_is_finite() {
        let v = kl_divergence(&[0.5f64, 0.5], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite());
        assert!(v > 5.0);
    }

    #[test]
    fn combined_loss_boundaries() {
        let l = combined_loss(2.0f64, 0.5, 0.0).unwrap();
        assert_eq!(l.total, 2.0);
        let l = combined_loss(2.0f64, 0.5, 1.0).unwrap();
        assert_eq!(l.total, 0.5);
        let l = combined_loss(2.0f64, 0.5, 0.1).unwrap();
        assert_eq!(l.total, 1.85);
        assert!(combined_loss(2.0f64, 0.5, 1.5).is_err());
        assert!(combined_loss(2.0f64, 0.5, -0.1).is_err());
    }

    #[test]
    fn provisional_modes() {
        let e = fit_embedder([toks("a b"), toks("c d"), toks("e")], Backend::Tfidf, None).unwrap();
        let s1 = toks("a b");
        let s2 = toks("c d");
        let page: Vec<&[String]> = vec![&s1, &s2];
        let p = provisional_page_summary(&page, &toks("a"), ProvisionalMode::ExtractiveTopk, 3, &e)
            .unwrap();
        assert_eq!(p, toks("a b c d"));
        let p = provisional_page_summary(&page, &toks("c"), ProvisionalMode::ExtractiveTopk, 1, &e)
            .unwrap();
        assert_eq!(p, toks("c d"));
        let p =
            provisional_page_summary(&page, &toks("x"), ProvisionalMode::WholePage, 1, &e).unwrap();
        assert_eq!(p, toks("a b c d"));
    }
}
