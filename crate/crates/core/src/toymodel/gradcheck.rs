use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distill::StudentSource;
use crate::{Error, Result};

use super::model::{batch_loss, PreparedDocument};
use super::params::{ModelConfig, ModelParams};
use super::vocab::{BOS, EOS, SPECIAL_TOKENS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    /// Negative control: perturbs every analytic gradient before comparing.
    #[serde(skip)]
    pub corrupt_gradient: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            samples: 256,
            seed: 42,
            corrupt_gradient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub lambda: f64,
    pub loss: f64,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub worst_parameter: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients of the batch loss for `doc` with central
/// finite differences on a seeded sample of scalar parameters.
pub fn grad_check(
    params: &ModelParams<f64>,
    doc: &PreparedDocument<f64>,
    lambda: f64,
    student: StudentSource,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-4).contains(&options.h) {
        return Err(Error::InvalidArgument(format!(
            "perturbation {} outside [1e-6, 1e-4]",
            options.h
        )));
    }
    let batch = std::slice::from_ref(doc);
    let (loss, grads) = batch_loss(params, batch, lambda, student, true)?;
    let grads = grads.expect("gradient requested");
    let total = params.num_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut picks = sample(&mut rng, total, options.samples.min(total)).into_vec();
    picks.sort_unstable();

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        lambda,
        loss: loss.total,
        checked: picks.len(),
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_parameter: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for flat in picks {
        let original = probe.get_flat(flat);
        probe.set_flat(flat, original + options.h);
        let up = batch_loss(&probe, batch, lambda, student, false)?.0.total;
        probe.set_flat(flat, original - options.h);
        let down = batch_loss(&probe, batch, lambda, student, false)?.0.total;
        probe.set_flat(flat, original);
        let numeric = (up - down) / (2.0 * options.h);
        let mut analytic = grads.get_flat(flat);
        if options.corrupt_gradient {
            analytic = analytic * 1.5 + 1e-3;
        }
        report.max_absolute_error = report.max_absolute_error.max((analytic - numeric).abs());
        let err = relative_error(analytic, numeric);
        if err > report.max_relative_error || report.worst_parameter.is_empty() {
            report.max_relative_error = err;
            report.worst_parameter = params.describe_flat(flat);
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

/// Weight scale of the gradient-check instance. At the training default of
/// 0.08 the encoder key gradients are around 1e-10, below what a central
/// difference of a loss near 4 can resolve in double precision.
pub const GRADCHECK_INIT_SCALE: f64 = 1.0;

/// Small fixed problem for gradient checking: vocabulary 50, width 8, two
/// pages of which the second has an empty target. Tokens above 30 never
/// occur, so their embedding rows are unreachable from the loss.
pub fn toy_instance(seed: u64) -> Result<(ModelConfig, ModelParams<f64>, PreparedDocument<f64>)> {
    toy_instance_scaled(seed, GRADCHECK_INIT_SCALE)
}

pub fn toy_instance_scaled(
    seed: u64,
    init_scale: f64,
) -> Result<(ModelConfig, ModelParams<f64>, PreparedDocument<f64>)> {
    let config = ModelConfig {
        vocab_size: 50,
        embed_dim: 8,
        hidden_dim: 8,
        max_pages: 2,
        max_target_len: 16,
        seed,
        init_scale,
    };
    let params = ModelParams::init(&config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let first = SPECIAL_TOKENS.len() as u32;
    let mut draw = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.gen_range(first..30)).collect() };
    let pages = vec![draw(7), draw(5)];
    let mut target = vec![BOS];
    target.extend(draw(4));
    target.push(EOS);
    let doc = PreparedDocument {
        doc_id: "toy".to_string(),
        pages,
        targets: vec![target, vec![BOS, EOS]],
        teacher: vec![0.7, 0.3],
        count_student: Some(vec![0.6, 0.4]),
    };
    Ok((config, params, doc))
}
