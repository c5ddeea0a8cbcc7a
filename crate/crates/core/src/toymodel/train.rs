use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::distill::{LossBreakdown, StudentSource};
use crate::synth::doc_rng;
use crate::{Error, Result, Scalar};

use super::model::{batch_loss, PreparedDocument};
use super::params::{Adam, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub student_source: StudentSource,
    pub grad_clip: f64,
    pub seed: u64,
    /// Reshuffle the documents at the start of every epoch.
    pub shuffle: bool,
    /// Validation rounds without improvement before training stops.
    pub patience: usize,
    pub min_delta: f64,
    /// Validate every this many steps; `None` validates once per epoch.
    pub eval_every_steps: Option<usize>,
    /// Longest summary generated during validation.
    pub max_summary_len: usize,
    /// Record real elapsed time in the log; off keeps logs reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 3,
            epochs: 3,
            lambda: 0.1,
            student_source: StudentSource::ConfidenceHead,
            grad_clip: 1.0,
            seed: 42,
            shuffle: true,
            patience: 2,
            min_delta: 1e-4,
            eval_every_steps: None,
            max_summary_len: 64,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip must be > 0, got {}", self.grad_clip));
        }
        if self.eval_every_steps == Some(0) {
            return bad("eval_every_steps must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StepReport<F> {
    pub loss: LossBreakdown<F>,
    /// Global gradient norm before clipping.
    pub grad_norm: F,
}

/// One optimizer step on `batch`: analytic gradient, global-norm clipping,
/// then an Adam update.
pub fn train_step<F: Scalar>(
    params: &mut ModelParams<F>,
    optimizer: &mut Adam<F>,
    batch: &[PreparedDocument<F>],
    config: &TrainConfig,
) -> Result<StepReport<F>> {
    let lambda = F::from_f64_lossy(config.lambda);
    let (loss, grads) = batch_loss(params, batch, lambda, config.student_source, true)?;
    let mut grads = grads.expect("gradient requested");
    let grad_norm = grads.squared_norm().sqrt();
    if !grad_norm.is_finite() {
        let doc_id = batch.first().map(|d| d.doc_id.clone()).unwrap_or_default();
        return Err(Error::NonFiniteLoss {
            doc_id,
            detail: format!("gradient norm {grad_norm}"),
        });
    }
    let clip = F::from_f64_lossy(config.grad_clip);
    if grad_norm > clip {
        grads.scale(clip / grad_norm);
    }
    optimizer.update(params, &grads);
    Ok(StepReport { loss, grad_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub xent: f64,
    pub kl: f64,
    pub lambda: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub step: usize,
    pub epoch: usize,
    pub score: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Best parameters by validation score, or the final ones without a
    /// validator.
    pub params: ModelParams<F>,
    pub log: Vec<LogRecord>,
    pub evaluations: Vec<Evaluation>,
    pub stopped_early: bool,
}

/// Epoch loop with per-epoch reshuffling and early stopping on the score
/// returned by `validate` (higher is better).
pub fn train<F, V>(
    init: ModelParams<F>,
    model_config: &ModelConfig,
    docs: &[PreparedDocument<F>],
    config: &TrainConfig,
    mut validate: Option<V>,
) -> Result<TrainOutcome<F>>
where
    F: Scalar,
    V: FnMut(&ModelParams<F>) -> Result<f64>,
{
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidArgument("no training documents".into()));
    }
    let started = Instant::now();
    let mut params = init;
    let mut optimizer = Adam::new(model_config, F::from_f64_lossy(config.learning_rate));
    let mut log = Vec::new();
    let mut evaluations = Vec::new();
    let mut best: Option<(f64, ModelParams<F>)> = None;
    let mut stale = 0;
    let mut step = 0;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        if config.shuffle {
            order.shuffle(&mut doc_rng(config.seed, epoch));
        }
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (b, ids) in batches.iter().enumerate() {
            let batch: Vec<PreparedDocument<F>> = ids.iter().map(|&i| docs[i].clone()).collect();
            let report = train_step(&mut params, &mut optimizer, &batch, config)?;
            step += 1;
            log.push(LogRecord {
                step,
                epoch,
                xent: report.loss.xent.to_f64_lossy(),
                kl: report.loss.kl.to_f64_lossy(),
                lambda: config.lambda,
                total: report.loss.total.to_f64_lossy(),
                grad_norm: report.grad_norm.to_f64_lossy(),
                wall_ms: if config.record_wall_time {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
            let due = match config.eval_every_steps {
                Some(k) => step % k == 0,
                None => b + 1 == batches.len(),
            };
            let Some(validator) = validate.as_mut() else {
                continue;
            };
            if !due {
                continue;
            }
            let score = validator(&params)?;
            let improved = best
                .as_ref()
                .is_none_or(|(s, _)| score > s + config.min_delta);
            evaluations.push(Evaluation {
                step,
                epoch,
                score,
                improved,
            });
            if improved {
                best = Some((score, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    return Ok(TrainOutcome {
                        params: best.map(|(_, p)| p).unwrap_or(params),
                        log,
                        evaluations,
                        stopped_early: true,
                    });
                }
            }
        }
    }
    Ok(TrainOutcome {
        params: best.map(|(_, p)| p).unwrap_or(params),
        log,
        evaluations,
        stopped_early: false,
    })
}
