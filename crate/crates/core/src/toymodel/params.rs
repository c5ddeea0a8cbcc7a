use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

use super::vocab::SPECIAL_TOKENS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Pages beyond this count are dropped when a document is prepared.
    pub max_pages: usize,
    /// Longest decoder sequence, BOS and EOS included.
    pub max_target_len: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: SPECIAL_TOKENS.len(),
            embed_dim: 32,
            hidden_dim: 32,
            max_pages: 64,
            max_target_len: 128,
            seed: 42,
            init_scale: 0.08,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < SPECIAL_TOKENS.len() {
            return Err(Error::InvalidArgument(format!(
                "vocab_size {} cannot hold the {} reserved tokens",
                self.vocab_size,
                SPECIAL_TOKENS.len()
            )));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.max_pages == 0 {
            return Err(Error::InvalidArgument(
                "model dimensions must be >= 1".into(),
            ));
        }
        if self.max_target_len < 2 {
            return Err(Error::InvalidArgument(
                "max_target_len must fit BOS and EOS".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument(
                "init_scale must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Every learnable tensor of the toy encoder-decoder.
///
/// Row-vector convention throughout: a projection maps `x` to `x · M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    /// Token embeddings, `vocab × d`.
    pub embedding: Array2<F>,
    /// Encoder self-attention projections, `d × d` each.
    pub enc_query: Array2<F>,
    pub enc_key: Array2<F>,
    pub enc_value: Array2<F>,
    /// Decoder input projection producing the cross-attention query, `d × d`.
    pub dec_in: Array2<F>,
    /// Cross-attention key (`d × d`) and value (`d × hidden`) projections.
    pub dec_cross_key: Array2<F>,
    pub dec_cross_value: Array2<F>,
    /// Output projection `W` (`hidden × vocab`) and bias `b`.
    pub out_proj: Array2<F>,
    pub out_bias: Array1<F>,
    /// Confidence head, scores a pooled page vector.
    pub confidence: Array1<F>,
}

/// Names in manifest (and checkpoint) order.
pub const PARAM_NAMES: [&str; 10] = [
    "embedding",
    "enc_query",
    "enc_key",
    "enc_value",
    "dec_in",
    "dec_cross_key",
    "dec_cross_value",
    "out_proj",
    "out_bias",
    "confidence",
];

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        Self {
            embedding: Array2::zeros((v, d)),
            enc_query: Array2::zeros((d, d)),
            enc_key: Array2::zeros((d, d)),
            enc_value: Array2::zeros((d, d)),
            dec_in: Array2::zeros((d, d)),
            dec_cross_key: Array2::zeros((d, d)),
            dec_cross_value: Array2::zeros((d, h)),
            out_proj: Array2::zeros((h, v)),
            out_bias: Array1::zeros(v),
            confidence: Array1::zeros(d),
        }
    }

    /// Uniform `[-init_scale, init_scale]` draws from ChaCha8 seeded with
    /// `config.seed`, filled in manifest order; the output bias starts at 0.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.init_scale;
        for (name, values) in params.tensors_mut() {
            if name == "out_bias" {
                continue;
            }
            for v in values.iter_mut() {
                *v = F::from_f64_lossy(if scale > 0.0 {
                    rng.gen_range(-scale..=scale)
                } else {
                    0.0
                });
            }
        }
        Ok(params)
    }

    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("embedding", self.embedding.shape().to_vec()),
            ("enc_query", self.enc_query.shape().to_vec()),
            ("enc_key", self.enc_key.shape().to_vec()),
            ("enc_value", self.enc_value.shape().to_vec()),
            ("dec_in", self.dec_in.shape().to_vec()),
            ("dec_cross_key", self.dec_cross_key.shape().to_vec()),
            ("dec_cross_value", self.dec_cross_value.shape().to_vec()),
            ("out_proj", self.out_proj.shape().to_vec()),
            ("out_bias", self.out_bias.shape().to_vec()),
            ("confidence", self.confidence.shape().to_vec()),
        ]
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[F])> {
        fn s<'a, F>(a: &'static str, v: Option<&'a [F]>) -> (&'static str, &'a [F]) {
            (a, v.expect("standard layout"))
        }
        vec![
            s("embedding", self.embedding.as_slice()),
            s("enc_query", self.enc_query.as_slice()),
            s("enc_key", self.enc_key.as_slice()),
            s("enc_value", self.enc_value.as_slice()),
            s("dec_in", self.dec_in.as_slice()),
            s("dec_cross_key", self.dec_cross_key.as_slice()),
            s("dec_cross_value", self.dec_cross_value.as_slice()),
            s("out_proj", self.out_proj.as_slice()),
            s("out_bias", self.out_bias.as_slice()),
            s("confidence", self.confidence.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [F])> {
        fn s<'a, F>(a: &'static str, v: Option<&'a mut [F]>) -> (&'static str, &'a mut [F]) {
            (a, v.expect("standard layout"))
        }
        vec![
            s("embedding", self.embedding.as_slice_mut()),
            s("enc_query", self.enc_query.as_slice_mut()),
            s("enc_key", self.enc_key.as_slice_mut()),
            s("enc_value", self.enc_value.as_slice_mut()),
            s("dec_in", self.dec_in.as_slice_mut()),
            s("dec_cross_key", self.dec_cross_key.as_slice_mut()),
            s("dec_cross_value", self.dec_cross_value.as_slice_mut()),
            s("out_proj", self.out_proj.as_slice_mut()),
            s("out_bias", self.out_bias.as_slice_mut()),
            s("confidence", self.confidence.as_slice_mut()),
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Flat index into manifest order, as `(tensor, offset)`.
    pub fn locate(&self, flat: usize) -> Option<(usize, usize)> {
        let mut rest = flat;
        for (i, (_, t)) in self.tensors().iter().enumerate() {
            if rest < t.len() {
                return Some((i, rest));
            }
            rest -= t.len();
        }
        None
    }

    pub fn get_flat(&self, flat: usize) -> F {
        let (t, o) = self.locate(flat).expect("index in range");
        self.tensors()[t].1[o]
    }

    pub fn set_flat(&mut self, flat: usize, value: F) {
        let (t, o) = self.locate(flat).expect("index in range");
        self.tensors_mut()[t].1[o] = value;
    }

    /// Human-readable name like `out_proj[3,17]`.
    pub fn describe_flat(&self, flat: usize) -> String {
        let (t, o) = self.locate(flat).expect("index in range");
        let (name, shape) = &self.shapes()[t];
        if shape.len() == 2 {
            format!("{name}[{},{}]", o / shape[1], o % shape[1])
        } else {
            format!("{name}[{o}]")
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn squared_norm(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|&v| v * v)
            .sum()
    }

    pub fn scale(&mut self, factor: F) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// First-order adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    step: i32,
    first: ModelParams<F>,
    second: ModelParams<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: &ModelConfig, learning_rate: F) -> Self {
        Self {
            learning_rate,
            beta1: F::from_f64_lossy(0.9),
            beta2: F::from_f64_lossy(0.999),
            epsilon: F::from_f64_lossy(1e-8),
            step: 0,
            first: ModelParams::zeros(config),
            second: ModelParams::zeros(config),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>) {
        self.step += 1;
        let one = F::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
