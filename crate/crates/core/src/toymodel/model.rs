use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::distill::{combined_loss, kl_divergence, LossBreakdown, StudentSource};
use crate::scalar::{log_sum_exp, softmax};
use crate::{Error, Result, Scalar};

use super::params::ModelParams;

/// Encoder activations for one page. `states` are the per-token encodings,
/// `pooled` their mean.
#[derive(Debug, Clone)]
pub struct PageEncoding<F> {
    tokens: Vec<u32>,
    x: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    attn: Array2<F>,
    pub states: Array2<F>,
    pub pooled: Array1<F>,
}

/// Cross-attention keys and values derived from one page's encodings.
#[derive(Debug, Clone)]
pub struct CrossMemory<F> {
    keys: Array2<F>,
    values: Array2<F>,
}

/// Teacher-forced decoder pass over one page.
#[derive(Debug, Clone)]
pub struct PageDecode<F> {
    inputs: Vec<u32>,
    gold: Vec<u32>,
    x: Array2<F>,
    q: Array2<F>,
    memory: CrossMemory<F>,
    attn: Array2<F>,
    /// One row per step: `h_j^i`.
    pub hidden: Array2<F>,
    pub probs: Array2<F>,
    pub xent: F,
}

fn inv_sqrt<F: Scalar>(d: usize) -> F {
    F::one() / F::from_count(d).sqrt()
}

fn gather<F: Scalar>(embedding: &Array2<F>, ids: &[u32]) -> Result<Array2<F>> {
    let vocab = embedding.nrows();
    let mut out = Array2::zeros((ids.len(), embedding.ncols()));
    for (r, &id) in ids.iter().enumerate() {
        if id as usize >= vocab {
            return Err(Error::InvalidArgument(format!(
                "token id {id} outside vocabulary of {vocab}"
            )));
        }
        out.row_mut(r).assign(&embedding.row(id as usize));
    }
    Ok(out)
}

fn scatter_rows<F: Scalar>(target: &mut Array2<F>, ids: &[u32], rows: &Array2<F>) {
    for (r, &id) in ids.iter().enumerate() {
        let mut dst = target.row_mut(id as usize);
        dst += &rows.row(r);
    }
}

fn softmax_rows<F: Scalar>(scores: &mut Array2<F>) {
    for mut row in scores.rows_mut() {
        let p = softmax(row.as_slice().expect("standard layout"));
        row.assign(&ArrayView1::from(&p[..]));
    }
}

/// Back-propagates through a row-wise softmax: `P ⊙ (dP − rowsum(dP ⊙ P))`.
fn softmax_rows_backward<F: Scalar>(p: &Array2<F>, dp: &Array2<F>) -> Array2<F> {
    let mut out = Array2::zeros(p.raw_dim());
    for ((p_row, dp_row), mut o) in p.rows().into_iter().zip(dp.rows()).zip(out.rows_mut()) {
        let dot: F = p_row.iter().zip(dp_row.iter()).map(|(&a, &b)| a * b).sum();
        for ((o, &pv), &dv) in o.iter_mut().zip(p_row.iter()).zip(dp_row.iter()) {
            *o = pv * (dv - dot);
        }
    }
    out
}

/// Single-head scaled dot-product self-attention over the page's token
/// embeddings, mean-pooled into `g_j`.
pub fn encode_page<F: Scalar>(params: &ModelParams<F>, tokens: &[u32]) -> Result<PageEncoding<F>> {
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let x = gather(&params.embedding, tokens)?;
    let q = x.dot(&params.enc_query);
    let k = x.dot(&params.enc_key);
    let v = x.dot(&params.enc_value);
    let mut attn = q.dot(&k.t()) * inv_sqrt::<F>(params.embedding.ncols());
    softmax_rows(&mut attn);
    let states = attn.dot(&v);
    let pooled = states.sum_axis(Axis(0)) / F::from_count(tokens.len());
    Ok(PageEncoding {
        tokens: tokens.to_vec(),
        x,
        q,
        k,
        v,
        attn,
        states,
        pooled,
    })
}

pub fn cross_memory<F: Scalar>(params: &ModelParams<F>, enc: &PageEncoding<F>) -> CrossMemory<F> {
    CrossMemory {
        keys: enc.states.dot(&params.dec_cross_key),
        values: enc.states.dot(&params.dec_cross_value),
    }
}

/// Fixed sinusoidal encoding of decoding step `step`, width `dim`.
pub fn step_encoding<F: Scalar>(step: usize, dim: usize) -> Array1<F> {
    Array1::from_shape_fn(dim, |i| {
        let rate = 10000f64.powf((i - i % 2) as f64 / dim as f64);
        let angle = step as f64 / rate;
        F::from_f64_lossy(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Decoder inputs `x`, queries, attention weights and attended states.
type Attended<F> = (Array2<F>, Array2<F>, Array2<F>, Array2<F>);

/// Decoder inputs are previous-token embeddings plus the step encoding,
/// starting at step `first_step`.
fn attend<F: Scalar>(
    params: &ModelParams<F>,
    memory: &CrossMemory<F>,
    prev: &[u32],
    first_step: usize,
) -> Result<Attended<F>> {
    let mut x = gather(&params.embedding, prev)?;
    let dim = x.ncols();
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &step_encoding::<F>(first_step + i, dim);
    }
    let q = x.dot(&params.dec_in);
    let mut attn = q.dot(&memory.keys.t()) * inv_sqrt::<F>(params.embedding.ncols());
    softmax_rows(&mut attn);
    let hidden = attn.dot(&memory.values);
    Ok((x, q, attn, hidden))
}

/// Decoder state `h` at decoding step `step` given the previous token.
pub fn step_state<F: Scalar>(
    params: &ModelParams<F>,
    memory: &CrossMemory<F>,
    prev: u32,
    step: usize,
) -> Result<Array1<F>> {
    let (_, _, _, hidden) = attend(params, memory, &[prev], step)?;
    Ok(hidden.row(0).to_owned())
}

fn output_logits<F: Scalar>(params: &ModelParams<F>, h: ArrayView1<F>) -> Vec<F> {
    (h.dot(&params.out_proj) + &params.out_bias).to_vec()
}

/// `softmax(W h + b)` for a single decoder state.
pub fn next_token_dist<F: Scalar>(params: &ModelParams<F>, h: ArrayView1<F>) -> Vec<F> {
    softmax(&output_logits(params, h))
}

/// Teacher forcing against `target` (BOS, tokens, EOS): step `i` reads
/// `target[i]` and predicts `target[i + 1]`.
pub fn decode_page_teacher_forced<F: Scalar>(
    params: &ModelParams<F>,
    enc: &PageEncoding<F>,
    target: &[u32],
) -> Result<PageDecode<F>> {
    if target.len() < 2 {
        return Err(Error::InvalidArgument(
            "decoder target needs at least BOS and EOS".into(),
        ));
    }
    let memory = cross_memory(params, enc);
    let inputs = target[..target.len() - 1].to_vec();
    let gold = target[1..].to_vec();
    let (x, q, attn, hidden) = attend(params, &memory, &inputs, 0)?;
    let vocab = params.out_bias.len();
    let mut probs = Array2::zeros((gold.len(), vocab));
    let mut nll = F::zero();
    for (i, &y) in gold.iter().enumerate() {
        if y as usize >= vocab {
            return Err(Error::InvalidArgument(format!(
                "token id {y} outside vocabulary of {vocab}"
            )));
        }
        let logits = output_logits(params, hidden.row(i));
        nll += log_sum_exp(&logits) - logits[y as usize];
        probs
            .row_mut(i)
            .assign(&ArrayView1::from(&softmax(&logits)[..]));
    }
    let xent = nll / F::from_count(gold.len());
    Ok(PageDecode {
        inputs,
        gold,
        x,
        q,
        memory,
        attn,
        hidden,
        probs,
        xent,
    })
}

pub fn confidence_logits<F: Scalar>(params: &ModelParams<F>, pooled: &[Array1<F>]) -> Vec<F> {
    pooled.iter().map(|g| params.confidence.dot(g)).collect()
}

/// Page weights `c = softmax(conf · g_j)`.
pub fn confidence_weights<F: Scalar>(params: &ModelParams<F>, pooled: &[Array1<F>]) -> Vec<F> {
    softmax(&confidence_logits(params, pooled))
}

/// `Σ_j c_j h_j`, accumulated in page order from a zero vector.
pub fn fuse_states<F: Scalar>(states: &[ArrayView1<F>], weights: &[F]) -> Result<Array1<F>> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidArgument(
            "fusion needs at least one page".into(),
        ));
    };
    if states.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            actual: weights.len(),
        });
    }
    let total: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= F::zero())) {
        return Err(Error::InvalidArgument(format!(
            "page weights must form a distribution, sum is {total}"
        )));
    }
    let mut acc = Array1::zeros(first.len());
    for (h, &c) in states.iter().zip(weights) {
        if h.len() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                actual: h.len(),
            });
        }
        acc.scaled_add(c, h);
    }
    Ok(acc)
}

/// Fused next-token distribution `softmax(W (Σ_j c_j h_j) + b)`.
pub fn fused_next_token_dist<F: Scalar>(
    params: &ModelParams<F>,
    states: &[ArrayView1<F>],
    weights: &[F],
) -> Result<Vec<F>> {
    let fused = fuse_states(states, weights)?;
    Ok(next_token_dist(params, fused.view()))
}

/// A document ready for training: token ids per page, decoder targets per
/// page and the teacher distribution over pages.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDocument<F> {
    pub doc_id: String,
    pub pages: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
    pub teacher: Vec<F>,
    /// Sentence-count student, used when the student source asks for it.
    pub count_student: Option<Vec<F>>,
}

impl<F: Scalar> PreparedDocument<F> {
    pub fn validate(&self) -> Result<()> {
        let p = self.pages.len();
        if p == 0 {
            return Err(Error::EmptyDocument);
        }
        for len in [self.targets.len(), self.teacher.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: len,
                });
            }
        }
        if let Some(z) = &self.count_student {
            if z.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: z.len(),
                });
            }
        }
        Ok(())
    }
}

/// Loss of a batch plus, optionally, its gradient.
///
/// `total = (1 − λ)·mean over (doc, page) of xent_j + λ·mean over docs of
/// KL(T ‖ c)`. With the sentence-count student the KL term does not depend
/// on the parameters and contributes no gradient.
pub fn batch_loss<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[PreparedDocument<F>],
    lambda: F,
    student: StudentSource,
    with_grad: bool,
) -> Result<(LossBreakdown<F>, Option<ModelParams<F>>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    if !(lambda >= F::zero() && lambda <= F::one()) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    let total_pages: usize = batch.iter().map(|d| d.pages.len()).sum();
    let xent_scale = (F::one() - lambda) / F::from_count(total_pages);
    let kl_scale = lambda / F::from_count(batch.len());
    let inv = inv_sqrt::<F>(params.embedding.ncols());
    let mut grads = with_grad.then(|| zeros_like(params));
    let mut xent_sum = F::zero();
    let mut kl_sum = F::zero();

    for doc in batch {
        doc.validate()?;
        let encodings = doc
            .pages
            .iter()
            .map(|p| encode_page(params, p))
            .collect::<Result<Vec<_>>>()?;
        let decodes = encodings
            .iter()
            .zip(&doc.targets)
            .map(|(e, t)| decode_page_teacher_forced(params, e, t))
            .collect::<Result<Vec<_>>>()?;
        let pooled: Vec<Array1<F>> = encodings.iter().map(|e| e.pooled.clone()).collect();
        let logits = confidence_logits(params, &pooled);
        let c = softmax(&logits);
        let kl = match student {
            StudentSource::ConfidenceHead => {
                let lse = log_sum_exp(&logits);
                doc.teacher
                    .iter()
                    .zip(&logits)
                    .filter(|(t, _)| **t > F::zero())
                    .map(|(&t, &l)| t * (t.ln() - (l - lse)))
                    .sum()
            }
            StudentSource::SentenceCount => {
                let z = doc.count_student.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "document {} has no sentence-count student",
                        doc.doc_id
                    ))
                })?;
                kl_divergence(&doc.teacher, z)?
            }
        };
        let doc_xent: F = decodes.iter().map(|d| d.xent).sum();
        if !doc_xent.is_finite() || !kl.is_finite() {
            return Err(Error::NonFiniteLoss {
                doc_id: doc.doc_id.clone(),
                detail: format!("xent sum {doc_xent}, kl {kl}"),
            });
        }
        xent_sum += doc_xent;
        kl_sum += kl;

        let Some(g) = grads.as_mut() else { continue };
        let mut d_states: Vec<Array2<F>> = encodings
            .iter()
            .map(|e| Array2::zeros(e.states.raw_dim()))
            .collect();
        for (j, dec) in decodes.iter().enumerate() {
            decoder_backward(
                params,
                &encodings[j],
                dec,
                xent_scale,
                inv,
                g,
                &mut d_states[j],
            );
        }
        if student == StudentSource::ConfidenceHead {
            for j in 0..encodings.len() {
                let dl = kl_scale * (c[j] - doc.teacher[j]);
                g.confidence.scaled_add(dl, &pooled[j]);
                let n = F::from_count(encodings[j].tokens.len());
                let d_pooled = &params.confidence * (dl / n);
                for mut row in d_states[j].rows_mut() {
                    row += &d_pooled;
                }
            }
        }
        for (enc, ds) in encodings.iter().zip(&d_states) {
            encoder_backward(params, enc, ds, inv, g);
        }
    }

    let xent = xent_sum / F::from_count(total_pages);
    let kl = kl_sum / F::from_count(batch.len());
    let breakdown = combined_loss(xent, kl, lambda)?;
    Ok((breakdown, grads))
}

fn zeros_like<F: Scalar>(params: &ModelParams<F>) -> ModelParams<F> {
    let mut z = params.clone();
    for (_, t) in z.tensors_mut() {
        t.fill(F::zero());
    }
    z
}

fn decoder_backward<F: Scalar>(
    params: &ModelParams<F>,
    enc: &PageEncoding<F>,
    dec: &PageDecode<F>,
    scale: F,
    inv: F,
    g: &mut ModelParams<F>,
    d_states: &mut Array2<F>,
) {
    let steps = F::from_count(dec.gold.len());
    let mut d_logits = dec.probs.clone();
    for (i, &y) in dec.gold.iter().enumerate() {
        d_logits[[i, y as usize]] -= F::one();
    }
    d_logits *= scale / steps;
    g.out_proj += &dec.hidden.t().dot(&d_logits);
    g.out_bias += &d_logits.sum_axis(Axis(0));
    let d_hidden = d_logits.dot(&params.out_proj.t());
    let d_attn = d_hidden.dot(&dec.memory.values.t());
    let d_values = dec.attn.t().dot(&d_hidden);
    let d_scores = softmax_rows_backward(&dec.attn, &d_attn) * inv;
    let d_q = d_scores.dot(&dec.memory.keys);
    let d_keys = d_scores.t().dot(&dec.q);
    g.dec_in += &dec.x.t().dot(&d_q);
    let d_x = d_q.dot(&params.dec_in.t());
    scatter_rows(&mut g.embedding, &dec.inputs, &d_x);
    g.dec_cross_key += &enc.states.t().dot(&d_keys);
    g.dec_cross_value += &enc.states.t().dot(&d_values);
    *d_states += &d_keys.dot(&params.dec_cross_key.t());
    *d_states += &d_values.dot(&params.dec_cross_value.t());
}

fn encoder_backward<F: Scalar>(
    params: &ModelParams<F>,
    enc: &PageEncoding<F>,
    d_states: &Array2<F>,
    inv: F,
    g: &mut ModelParams<F>,
) {
    let d_attn = d_states.dot(&enc.v.t());
    let d_v = enc.attn.t().dot(d_states);
    let d_scores = softmax_rows_backward(&enc.attn, &d_attn) * inv;
    let d_q = d_scores.dot(&enc.k);
    let d_k = d_scores.t().dot(&enc.q);
    g.enc_query += &enc.x.t().dot(&d_q);
    g.enc_key += &enc.x.t().dot(&d_k);
    g.enc_value += &enc.x.t().dot(&d_v);
    let d_x = d_q.dot(&params.enc_query.t())
        + d_k.dot(&params.enc_key.t())
        + d_v.dot(&params.enc_value.t());
    scatter_rows(&mut g.embedding, &enc.tokens, &d_x);
}
