//! Toy page-fused encoder-decoder.
//!
//! Every page is encoded by single-head self-attention and decoded by a
//! cross-attention step conditioned on the previous token and the step
//! position. Training decodes
//! each page against its own target sentences; a confidence head over the
//! pooled page encodings is trained through the KL term only. Inference fuses
//! the page decoder states with the confidence weights.

mod checkpoint;
mod generate;
mod gradcheck;
mod model;
mod params;
mod train;
mod vocab;

pub use checkpoint::{
    load_checkpoint, parameter_bytes, read_checkpoint, save_checkpoint, write_checkpoint,
};
pub use generate::{argmax, generate_summary, greedy_decode_page, pick_token, Generation};
pub use gradcheck::{
    grad_check, relative_error, toy_instance, toy_instance_scaled, GradCheckOptions,
    GradCheckReport, GRADCHECK_INIT_SCALE,
};
pub use model::{
    batch_loss, confidence_logits, confidence_weights, cross_memory, decode_page_teacher_forced,
    encode_page, fuse_states, fused_next_token_dist, next_token_dist, step_encoding, step_state,
    CrossMemory, PageDecode, PageEncoding, PreparedDocument,
};
pub use params::{Adam, ModelConfig, ModelParams, PARAM_NAMES};
pub use train::{train, train_step, Evaluation, LogRecord, StepReport, TrainConfig, TrainOutcome};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SPECIAL_TOKENS, UNK};

use crate::align::PageTarget;
use crate::corpus::ProcessedDocument;
use crate::{Error, Result, Scalar};

/// Configuration, vocabulary and parameters travelling together.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<F> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams<F>,
}

impl<F: Scalar> ToyModel<F> {
    /// Freshly initialized model. `config.vocab_size` must equal the
    /// vocabulary size.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                actual: config.vocab_size,
            });
        }
        let params = ModelParams::init(&config)?;
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    /// Token ids per page, limited to `max_pages`.
    pub fn encode_pages(&self, doc: &ProcessedDocument) -> Vec<Vec<u32>> {
        (0..doc.doc.num_pages().min(self.config.max_pages))
            .map(|j| self.vocab.encode(&doc.doc.page_tokens(j)))
            .collect()
    }

    pub fn summarize(&self, doc: &ProcessedDocument, max_len: usize) -> Result<Generation<F>> {
        generate_summary(&self.params, &self.encode_pages(doc), max_len)
    }
}

/// Result of turning a processed document into training input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared<F> {
    pub doc: PreparedDocument<F>,
    /// Page targets cut to `max_target_len`.
    pub truncated_targets: usize,
    /// Pages dropped beyond `max_pages`.
    pub dropped_pages: usize,
}

/// Builds decoder targets `BOS + S_j + EOS` per page (`BOS + EOS` for an
/// empty `S_j`). Over-long targets keep their first tokens and EOS. Pages past
/// `max_pages` are dropped and the teacher is renormalized over the rest.
pub fn prepare_document<F: Scalar>(
    model: &ToyModel<F>,
    doc: &ProcessedDocument,
    targets: &[PageTarget],
    teacher: &[F],
) -> Result<Prepared<F>> {
    let num_pages = doc.doc.num_pages();
    for len in [targets.len(), teacher.len()] {
        if len != num_pages {
            return Err(Error::DimensionMismatch {
                expected: num_pages,
                actual: len,
            });
        }
    }
    let kept = num_pages.min(model.config.max_pages);
    let summary = doc.summary_sentence_tokens();
    let room = model.config.max_target_len - 2;
    let mut truncated_targets = 0;
    let page_targets = targets[..kept]
        .iter()
        .map(|t| {
            let mut ids = model.vocab.encode(&t.tokens(&summary));
            if ids.len() > room {
                ids.truncate(room);
                truncated_targets += 1;
            }
            let mut seq = Vec::with_capacity(ids.len() + 2);
            seq.push(BOS);
            seq.extend(ids);
            seq.push(EOS);
            seq
        })
        .collect();
    let mut kept_teacher = teacher[..kept].to_vec();
    if kept < num_pages {
        let total: F = kept_teacher.iter().copied().sum();
        if total > F::zero() {
            kept_teacher.iter_mut().for_each(|t| *t /= total);
        } else {
            kept_teacher.fill(F::one() / F::from_count(kept));
        }
    }
    Ok(Prepared {
        doc: PreparedDocument {
            doc_id: doc.doc_id().to_string(),
            pages: model.encode_pages(doc),
            targets: page_targets,
            teacher: kept_teacher,
            count_student: None,
        },
        truncated_targets,
        dropped_pages: num_pages - kept,
    })
}

#[cfg(test)]
mod tests;
