use ndarray::{Array1, ArrayView1};

use super::*;
use crate::distill::StudentSource;

fn small_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        embed_dim: 6,
        hidden_dim: 5,
        max_pages: 4,
        max_target_len: 12,
        seed: 3,
        ..ModelConfig::default()
    }
}

fn params() -> ModelParams<f64> {
    ModelParams::init(&small_config()).unwrap()
}

#[test]
fn singleton_page_encodes_to_value_projection() {
    let p = params();
    let enc = encode_page(&p, &[7]).unwrap();
    let expected = p.embedding.row(7).dot(&p.enc_value);
    for (a, b) in enc.pooled.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn pages_are_encoded_independently() {
    let p = params();
    let a = encode_page(&p, &[4, 5, 6]).unwrap();
    let b1 = encode_page(&p, &[9, 10, 11, 12]).unwrap();
    let b2 = encode_page(&p, &[12, 9, 11, 10]).unwrap();
    let a_again = encode_page(&p, &[4, 5, 6]).unwrap();
    assert_eq!(a.pooled, a_again.pooled);
    // permutation inside the other page changes nothing here, and the
    // pooled vector itself is permutation invariant up to rounding
    for (x, y) in b1.pooled.iter().zip(b2.pooled.iter()) {
        assert!((x - y).abs() < 1e-14);
    }
    assert!(encode_page(&p, &[]).is_err());
    assert!(encode_page(&p, &[20]).is_err());
}

#[test]
fn empty_target_is_single_eos_step() {
    let p = params();
    let enc = encode_page(&p, &[4, 5]).unwrap();
    let dec = decode_page_teacher_forced(&p, &enc, &[BOS, EOS]).unwrap();
    assert_eq!(dec.hidden.nrows(), 1);
    let dist = next_token_dist(&p, dec.hidden.row(0));
    assert!((dec.xent + dist[EOS as usize].ln()).abs() < 1e-12);
}

#[test]
fn untrained_xent_near_uniform_entropy() {
    let config = ModelConfig {
        vocab_size: 50,
        embed_dim: 8,
        hidden_dim: 8,
        ..ModelConfig::default()
    };
    let p = ModelParams::<f64>::init(&config).unwrap();
    let enc = encode_page(&p, &[4, 8, 15, 16, 23, 42]).unwrap();
    let dec = decode_page_teacher_forced(&p, &enc, &[BOS, 10, 11, 12, EOS]).unwrap();
    let uniform = 50f64.ln();
    assert!((dec.xent - uniform).abs() / uniform < 0.1, "{}", dec.xent);
}

#[test]
fn confidence_weight_cases() {
    let p = params();
    let g = encode_page(&p, &[4, 5]).unwrap().pooled;
    assert_eq!(confidence_weights(&p, std::slice::from_ref(&g)), vec![1.0]);
    let c = confidence_weights(&p, &[g.clone(), g.clone(), g.clone()]);
    assert!(c.iter().all(|&v| v == c[0]));
    let mut zero = p.clone();
    zero.confidence.fill(0.0);
    let other = encode_page(&p, &[9]).unwrap().pooled;
    assert_eq!(confidence_weights(&zero, &[g, other]), vec![0.5, 0.5]);
}

#[test]
fn single_page_fusion_is_bit_identical() {
    let p = params();
    let h = Array1::from(vec![0.3, -1.2, 0.05, 2.0, -0.7]);
    let fused = fused_next_token_dist(&p, &[h.view()], &[1.0]).unwrap();
    assert_eq!(fused, next_token_dist(&p, h.view()));
}

#[test]
fn equal_states_fusion_is_convex() {
    let p = params();
    let h = Array1::from(vec![0.4, 0.1, -0.9, 1.5, 0.2]);
    let views: Vec<ArrayView1<f64>> = vec![h.view(); 3];
    let fused = fused_next_token_dist(&p, &views, &[0.2, 0.5, 0.3]).unwrap();
    let single = next_token_dist(&p, h.view());
    for (a, b) in fused.iter().zip(&single) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn opposite_states_cancel_to_bias() {
    let mut p = params();
    for (i, b) in p.out_bias.iter_mut().enumerate() {
        *b = (i as f64 * 0.37).sin();
    }
    let h = Array1::from(vec![0.4, 0.1, -0.9, 1.5, 0.2]);
    let neg = -&h;
    let fused = fused_next_token_dist(&p, &[h.view(), neg.view()], &[0.5, 0.5]).unwrap();
    let bias_only = crate::scalar::softmax(p.out_bias.as_slice().unwrap());
    for (a, b) in fused.iter().zip(&bias_only) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn fusion_rejects_bad_weights() {
    let p = params();
    let h = Array1::from(vec![0.0; 5]);
    assert!(fused_next_token_dist(&p, &[h.view(), h.view()], &[0.5, 0.6]).is_err());
    assert!(fused_next_token_dist(&p, &[h.view()], &[0.5, 0.5]).is_err());
}

#[test]
fn gradient_check_passes_for_all_lambdas() {
    let (_, p, doc) = toy_instance(42).unwrap();
    for lambda in [0.0, 0.1, 1.0] {
        let r = grad_check(
            &p,
            &doc,
            lambda,
            StudentSource::ConfidenceHead,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_relative_error <= 1e-4, "{r:?}");
        assert!(r.checked >= 200);
    }
}

#[test]
fn default_scale_gradients_agree_absolutely() {
    let (_, p, doc) = toy_instance_scaled(42, 0.08).unwrap();
    let r = grad_check(
        &p,
        &doc,
        0.1,
        StudentSource::ConfidenceHead,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.max_absolute_error < 1e-9, "{r:?}");
}

#[test]
fn gradient_check_detects_corruption() {
    let (_, p, doc) = toy_instance(42).unwrap();
    let options = GradCheckOptions {
        corrupt_gradient: true,
        ..GradCheckOptions::default()
    };
    let r = grad_check(&p, &doc, 0.1, StudentSource::ConfidenceHead, &options).unwrap();
    assert!(r.max_relative_error > 1e-4);
    assert!(!r.worst_parameter.is_empty());
}

#[test]
fn unused_embedding_row_has_zero_gradient() {
    let (_, p, doc) = toy_instance(42).unwrap();
    let (_, g) = batch_loss(&p, &[doc], 0.1, StudentSource::ConfidenceHead, true).unwrap();
    let g = g.unwrap();
    assert!(g.embedding.row(45).iter().all(|&v| v == 0.0));
    assert_eq!(relative_error(0.0, 0.0), 0.0);
}

#[test]
fn lambda_zero_leaves_confidence_without_gradient() {
    let (_, p, doc) = toy_instance(42).unwrap();
    let (loss, g) = batch_loss(&p, &[doc], 0.0, StudentSource::ConfidenceHead, true).unwrap();
    assert!(g.unwrap().confidence.iter().all(|&v| v == 0.0));
    assert_eq!(loss.total, loss.xent);
    assert!(loss.kl > 0.0);
}

#[test]
fn sentence_count_student_gives_constant_kl() {
    let (_, p, doc) = toy_instance(42).unwrap();
    let (loss, g) = batch_loss(&p, &[doc], 1.0, StudentSource::SentenceCount, true).unwrap();
    let expected = 0.7 * (0.7f64 / 0.6).ln() + 0.3 * (0.3f64 / 0.4).ln();
    assert!((loss.kl - expected).abs() < 1e-12);
    assert!(g
        .unwrap()
        .tensors()
        .iter()
        .all(|(_, t)| t.iter().all(|&v| v == 0.0)));
}

fn overfit_setup() -> (ModelConfig, ModelParams<f64>, PreparedDocument<f64>) {
    let config = ModelConfig {
        vocab_size: 30,
        embed_dim: 16,
        hidden_dim: 16,
        seed: 11,
        ..ModelConfig::default()
    };
    let p = ModelParams::init(&config).unwrap();
    let doc = PreparedDocument {
        doc_id: "one".into(),
        pages: vec![vec![4, 5, 6, 7, 8, 9], vec![10, 11, 12, 13, 14]],
        targets: vec![vec![BOS, 5, 7, 9, EOS], vec![BOS, EOS]],
        teacher: vec![0.9, 0.1],
        count_student: None,
    };
    (config, p, doc)
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (config, init, doc) = overfit_setup();
    let tc = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut p = init.clone();
        let mut opt = Adam::new(&config, tc.learning_rate);
        let losses: Vec<f64> = (0..60)
            .map(|_| {
                train_step(&mut p, &mut opt, std::slice::from_ref(&doc), &tc)
                    .unwrap()
                    .loss
                    .total
            })
            .collect();
        (p, losses)
    };
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert_eq!(p1, p2);
    assert_eq!(l1, l2);
    assert!(l1[59] < 0.5 * l1[0], "{} -> {}", l1[0], l1[59]);
}

#[test]
fn generation_budget_and_single_page_identity() {
    let p = params();
    let g = generate_summary(&p, &[vec![4, 5, 6]], 1).unwrap();
    assert!(g.tokens.len() <= 1);
    assert_eq!(g.confidence, vec![1.0]);
    let fused = generate_summary(&p, &[vec![4, 5, 6, 7]], 10).unwrap();
    assert_eq!(
        fused.tokens,
        greedy_decode_page(&p, &[4, 5, 6, 7], 10).unwrap()
    );
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (config, _, doc) = overfit_setup();
    let vocab = Vocabulary::from(
        SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain((4..30).map(|i| format!("t{i}")))
            .collect::<Vec<_>>(),
    );
    let mut model = ToyModel::<f64>::new(config.clone(), vocab).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let mut opt = Adam::new(&config, tc.learning_rate);
    for _ in 0..20 {
        train_step(&mut model.params, &mut opt, std::slice::from_ref(&doc), &tc).unwrap();
    }
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    let back: ToyModel<f64> = read_checkpoint(&bytes[..]).unwrap();
    assert_eq!(back, model);
    let a = generate_summary(&model.params, &doc.pages, 8).unwrap();
    let b = generate_summary(&back.params, &doc.pages, 8).unwrap();
    assert_eq!(a, b);
    assert!(read_checkpoint::<f64, _>(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn early_stopping_keeps_best_parameters() {
    let (config, init, doc) = overfit_setup();
    let tc = TrainConfig {
        epochs: 10,
        batch_size: 1,
        patience: 2,
        ..TrainConfig::default()
    };
    let scores = [0.1, 0.5, 0.5, 0.4, 0.9];
    let mut calls = 0;
    let mut seen = Vec::new();
    let outcome = train(
        init,
        &config,
        std::slice::from_ref(&doc),
        &tc,
        Some(|p: &ModelParams<f64>| {
            seen.push(p.clone());
            calls += 1;
            Ok(scores[calls - 1])
        }),
    )
    .unwrap();
    assert!(outcome.stopped_early);
    assert_eq!(outcome.evaluations.len(), 4);
    assert_eq!(outcome.params, seen[1]);
    assert_eq!(outcome.log.len(), 4);
    assert!(outcome.log.iter().all(|r| r.wall_ms == 0));
}
