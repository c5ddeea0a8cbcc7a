use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::{Result, Scalar};

use super::model::{
    confidence_weights, cross_memory, encode_page, fused_next_token_dist, next_token_dist,
    step_state,
};
use super::params::ModelParams;
use super::vocab::{BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Generation<F> {
    /// Emitted tokens, without BOS and EOS.
    pub tokens: Vec<u32>,
    /// Page weights used for fusion.
    pub confidence: Vec<F>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy choice among emittable tokens: PAD and BOS are never produced.
pub fn pick_token<F: Scalar>(dist: &[F]) -> u32 {
    let mut best = EOS as usize;
    for (i, v) in dist.iter().enumerate() {
        if i == PAD as usize || i == BOS as usize {
            continue;
        }
        if *v > dist[best] || (*v == dist[best] && i < best) {
            best = i;
        }
    }
    best as u32
}

/// Greedy decoding with confidence-weighted fusion. Page weights are computed
/// once from the pooled encodings; every page decoder then reads the same
/// generated prefix.
pub fn generate_summary<F: Scalar>(
    params: &ModelParams<F>,
    pages: &[Vec<u32>],
    max_len: usize,
) -> Result<Generation<F>> {
    let encodings = pages
        .iter()
        .map(|p| encode_page(params, p))
        .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<_> = encodings.iter().map(|e| e.pooled.clone()).collect();
    let confidence = confidence_weights(params, &pooled);
    let memories: Vec<_> = encodings.iter().map(|e| cross_memory(params, e)).collect();
    let mut tokens = Vec::new();
    let mut prev = BOS;
    while tokens.len() < max_len {
        let states = memories
            .iter()
            .map(|m| step_state(params, m, prev, tokens.len()))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<ArrayView1<F>> = states.iter().map(|s| s.view()).collect();
        let dist = fused_next_token_dist(params, &views, &confidence)?;
        let next = pick_token(&dist);
        if next == EOS {
            break;
        }
        tokens.push(next);
        prev = next;
    }
    Ok(Generation { tokens, confidence })
}

/// Plain greedy decoding of one page, without any fusion.
pub fn greedy_decode_page<F: Scalar>(
    params: &ModelParams<F>,
    page: &[u32],
    max_len: usize,
) -> Result<Vec<u32>> {
    let memory = cross_memory(params, &encode_page(params, page)?);
    let mut tokens = Vec::new();
    let mut prev = BOS;
    while tokens.len() < max_len {
        let h = step_state(params, &memory, prev, tokens.len())?;
        let next = pick_token(&next_token_dist(params, h.view()));
        if next == EOS {
            break;
        }
        tokens.push(next);
        prev = next;
    }
    Ok(tokens)
}
