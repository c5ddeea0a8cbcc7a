mod common;

use common::{align, synth_corpus};
use pts_core::align::{build_page_targets, Metric};
use pts_core::distill::{provisional_page_summary, teacher_distribution, ProvisionalMode};
use pts_core::synth::SynthSpec;
use pts_core::toymodel::{
    generate_summary, prepare_document, read_checkpoint, train, write_checkpoint, ModelConfig,
    ModelParams, PreparedDocument, ToyModel, TrainConfig, Vocabulary,
};

fn one_document() -> (ToyModel<f64>, PreparedDocument<f64>, Vec<Vec<u32>>) {
    let corpus = synth_corpus(&SynthSpec {
        num_docs: 1,
        ..SynthSpec::default()
    });
    let doc = &corpus.docs[0];
    let targets = build_page_targets(&align(doc, Metric::EmbedCosine, &corpus.embedder));
    let gold = doc.summary_tokens();
    let provisionals: Vec<Vec<String>> = (0..doc.doc.num_pages())
        .map(|j| {
            provisional_page_summary(
                &doc.doc.page_sentences(j),
                &gold,
                ProvisionalMode::ExtractiveTopk,
                3,
                &corpus.embedder,
            )
            .unwrap()
        })
        .collect();
    let teacher =
        teacher_distribution(doc.doc_id(), &provisionals, &gold, &corpus.embedder, 1.0).unwrap();
    let tokens: Vec<String> = doc.doc.tokens().into_iter().map(String::from).collect();
    let vocab = Vocabulary::build([tokens.as_slice(), gold.as_slice()], None);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::default()
    };
    let model = ToyModel::new(config, vocab).unwrap();
    let prepared = prepare_document(&model, doc, &targets, &teacher.probs).unwrap();
    let pages = model.encode_pages(doc);
    (model, prepared.doc, pages)
}

fn overfit(model: &ToyModel<f64>, doc: &PreparedDocument<f64>) -> (ModelParams<f64>, Vec<f64>) {
    let tc = TrainConfig {
        batch_size: 1,
        epochs: 500,
        ..TrainConfig::default()
    };
    let out = train(
        model.params.clone(),
        &model.config,
        std::slice::from_ref(doc),
        &tc,
        None::<fn(&ModelParams<f64>) -> pts_core::Result<f64>>,
    )
    .unwrap();
    (out.params, out.log.iter().map(|r| r.total).collect())
}

#[test]
fn overfitting_one_document_decreases_loss() {
    let (model, doc, _) = one_document();
    let (_, totals) = overfit(&model, &doc);
    assert_eq!(totals.len(), 500);
    let rises = totals.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 25, "loss rose on {rises} of 500 steps");
    assert!(
        totals[499] < 0.5 * totals[0],
        "{} -> {}",
        totals[0],
        totals[499]
    );
}

#[test]
fn training_trajectory_is_reproducible() {
    let (model, doc, _) = one_document();
    let (p1, l1) = overfit(&model, &doc);
    let (p2, l2) = overfit(&model, &doc);
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
}

#[test]
fn checkpoint_round_trip_preserves_generation() {
    let (mut model, doc, pages) = one_document();
    model.params = overfit(&model, &doc).0;
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    let restored: ToyModel<f64> = read_checkpoint(bytes.as_slice()).unwrap();
    assert_eq!(restored, model);
    let a = generate_summary(&model.params, &pages, 40).unwrap();
    let b = generate_summary(&restored.params, &pages, 40).unwrap();
    assert_eq!(a.tokens, b.tokens);
    assert_eq!(
        a.confidence.iter().map(|c| c.to_bits()).collect::<Vec<_>>(),
        b.confidence.iter().map(|c| c.to_bits()).collect::<Vec<_>>()
    );
}
