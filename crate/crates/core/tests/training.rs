use std::collections::HashMap;

use smartbullets::classifier::{
    encode_examples, evaluate, init_model, load_model, predict_mask, save_model, train,
    train_with, EncodedExample, ModelConfig, ModelError, Pipeline, TrainConfig, TrainedModel,
};
use smartbullets::corpus::ScoredRecord;
use smartbullets::preprocess::{
    aggregate, apply_labels, build_vocabulary, split_train_test, Label, LabeledExample,
};
use smartbullets::synth::{generate, SynthConfig};
use smartbullets::{Execution, Lexicon, StopwordSet, Vocabulary};

fn small_config(vocab: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        embed_dim: 16,
        filter_widths: vec![2, 3],
        feature_maps: 8,
        dropout_rate: 0.5,
        max_len: 8,
        seed,
    }
}

/// 200 examples of filler tokens; label is negative exactly when the marker
/// token "bad" is present.
fn separable_set() -> (Vocabulary, Vec<EncodedExample>) {
    let fillers = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let mut examples = Vec::new();
    for i in 0..200usize {
        let mut tokens: Vec<String> = (0..3 + i % 4)
            .map(|k| fillers[(i * 7 + k * 3) % fillers.len()].to_string())
            .collect();
        let label = if i % 2 == 0 {
            tokens.insert((i / 2) % tokens.len(), "bad".into());
            Label::Negative
        } else {
            Label::Positive
        };
        examples.push(LabeledExample { tokens, label, score: 0 });
    }
    let vocab = build_vocabulary(&examples, 1);
    let encoded = encode_examples(&examples, &vocab, 8);
    (vocab, encoded)
}

#[test]
fn learns_a_separable_set() {
    let (vocab, data) = separable_set();
    let model = init_model(&small_config(vocab.len(), 1)).unwrap();
    let tcfg = TrainConfig {
        max_steps: 500,
        batch_size: 32,
        eval_every: 100,
        ..TrainConfig::default()
    };
    let (model, report) = train(model, &data, &[], &tcfg).unwrap();
    let m = evaluate(&model, &data).unwrap();
    assert!(m.accuracy >= 0.99, "training accuracy {}", m.accuracy);
    assert_eq!(report.final_metrics, m);
    assert_eq!(report.records.len(), 501);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (vocab, data) = separable_set();
    let model = init_model(&small_config(vocab.len(), 2)).unwrap();
    let tcfg = TrainConfig {
        lr: 0.0,
        max_steps: 20,
        ..TrainConfig::default()
    };
    let (after, _) = train(model.clone(), &data, &data[..10], &tcfg).unwrap();
    assert_eq!(after, model);
}

#[test]
fn training_is_deterministic() {
    let (vocab, data) = separable_set();
    let tcfg = TrainConfig {
        max_steps: 30,
        eval_every: 10,
        batch_size: 16,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = |exec| {
        let model = init_model(&small_config(vocab.len(), 3)).unwrap();
        train_with(model, &data[..150], &data[150..], &tcfg, exec).unwrap()
    };
    let (m1, r1) = run(Execution::default());
    let (m2, r2) = run(Execution::default());
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    let (m3, r3) = run(Execution::Sequential);
    assert_eq!(r1.to_json_lines(), r3.to_json_lines());
    assert_eq!(m1, m3);
}

#[test]
fn rejects_empty_training_set() {
    let model = init_model(&small_config(5, 0)).unwrap();
    assert!(matches!(
        train(model.clone(), &[], &[], &TrainConfig::default()),
        Err(ModelError::EmptyDataset)
    ));
    assert!(matches!(evaluate(&model, &[]), Err(ModelError::EmptyDataset)));
}

struct SynthData {
    vocab: Vocabulary,
    train: Vec<EncodedExample>,
    test: Vec<EncodedExample>,
}

fn synth_data(size: usize, seed: u64) -> SynthData {
    let corpus = generate(&SynthConfig::new(size, seed)).unwrap();
    let records: Vec<ScoredRecord> = corpus.bullets.iter().map(ScoredRecord::from).collect();
    let labels: HashMap<String, Label> = corpus.labels.iter().cloned().collect();
    let outcome = apply_labels(
        &aggregate(&records),
        &labels,
        &Lexicon::bundled(),
        &StopwordSet::bundled(),
    );
    let (train, test) = split_train_test(outcome.examples, 0.2, seed).unwrap();
    let vocab = build_vocabulary(&train, 1);
    SynthData {
        train: encode_examples(&train, &vocab, 32),
        test: encode_examples(&test, &vocab, 32),
        vocab,
    }
}

#[test]
fn test_loss_drops_by_step_500() {
    for seed in [1u64, 2] {
        let data = synth_data(1000, seed);
        let mut cfg = ModelConfig::new(data.vocab.len());
        cfg.seed = seed;
        let tcfg = TrainConfig {
            max_steps: 500,
            seed,
            ..TrainConfig::default()
        };
        let (_, report) = train(init_model(&cfg).unwrap(), &data.train, &data.test, &tcfg).unwrap();
        let start = report.test_metrics_at(0).unwrap().loss;
        let end = report.test_metrics_at(500).unwrap().loss;
        assert!(end < start, "seed {seed}: loss {start} -> {end}");
    }
}

fn trained_small_model() -> (TrainedModel, SynthData) {
    let data = synth_data(600, 9);
    let mut cfg = small_config(data.vocab.len(), 9);
    cfg.max_len = 32;
    let tcfg = TrainConfig {
        max_steps: 150,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (params, _) = train(init_model(&cfg).unwrap(), &data.train, &data.test, &tcfg).unwrap();
    (
        TrainedModel {
            params,
            vocab: data.vocab.clone(),
        },
        data,
    )
}

#[test]
fn save_load_round_trip() {
    let (model, _) = trained_small_model();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    save_model(&model, &a).unwrap();
    save_model(&model, &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let loaded = load_model(&a).unwrap();
    assert_eq!(loaded, model);
    let bits = |m: &TrainedModel| -> Vec<u64> {
        m.params.tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&loaded), bits(&model));

    let pipeline = Pipeline::bundled(model.vocab.clone());
    let corpus = generate(&SynthConfig::new(300, 77)).unwrap();
    let contents: Vec<String> = corpus.bullets.iter().map(|b| b.content.clone()).collect();
    assert_eq!(
        predict_mask(&loaded.params, &contents, &pipeline),
        predict_mask(&model.params, &contents, &pipeline)
    );

    let header: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(header["magic"], "smartbullets-model");
    assert_eq!(header["version"], 1);
    assert!(header["params"]["conv"]["2"]["W"].is_array());
    assert_eq!(
        header["vocab"].as_array().unwrap().len() + 2,
        model.params.config.vocab_size
    );
}

#[test]
fn load_rejects_bad_files() {
    let (model, _) = trained_small_model();
    let bytes = model.to_json_bytes();

    let truncated = &bytes[..bytes.len() / 2];
    assert!(matches!(
        TrainedModel::from_json_bytes(truncated),
        Err(ModelError::Format(_))
    ));

    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["version"] = 2.into();
    assert!(matches!(
        TrainedModel::from_json_bytes(&serde_json::to_vec(&v).unwrap()),
        Err(ModelError::Format(_))
    ));

    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["magic"] = "something-else".into();
    assert!(matches!(
        TrainedModel::from_json_bytes(&serde_json::to_vec(&v).unwrap()),
        Err(ModelError::Format(_))
    ));

    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["params"]["dense"]["b"] = serde_json::json!([0.0]);
    assert!(matches!(
        TrainedModel::from_json_bytes(&serde_json::to_vec(&v).unwrap()),
        Err(ModelError::Format(_))
    ));

    assert!(matches!(
        load_model("/nonexistent/model.json"),
        Err(ModelError::Io(_))
    ));
}

#[test]
fn dense_bias_shift_keeps_predictions() {
    let (model, data) = trained_small_model();
    let mut shifted = model.params.clone();
    for b in &mut shifted.dense_b {
        *b += 3.25;
    }
    for ex in data.test.iter().take(100) {
        let p = smartbullets::classifier::predict_probs(&model.params, &ex.ids).unwrap();
        let q = smartbullets::classifier::predict_probs(&shifted, &ex.ids).unwrap();
        assert_eq!(
            smartbullets::classifier::argmax(&p),
            smartbullets::classifier::argmax(&q)
        );
    }
}

#[test]
fn evaluate_agrees_with_predict_mask() {
    let (model, _) = trained_small_model();
    let corpus = generate(&SynthConfig::new(400, 31)).unwrap();
    let pipeline = Pipeline::bundled(model.vocab.clone());
    let (lex, stop) = (&pipeline.lexicon, &pipeline.stopwords);

    let mut contents = Vec::new();
    let mut examples = Vec::new();
    for (content, label) in &corpus.labels {
        let tokens = smartbullets::preprocess::preprocess_text(content, lex, stop);
        if tokens.is_empty() {
            continue;
        }
        contents.push(content.clone());
        examples.push(LabeledExample { tokens, label: *label, score: 0 });
    }
    let encoded = encode_examples(&examples, &model.vocab, model.params.config.max_len);
    let metrics = evaluate(&model.params, &encoded).unwrap();

    let mask = predict_mask(&model.params, &contents, &pipeline);
    let correct = mask
        .iter()
        .zip(&examples)
        .filter(|(m, e)| (**m == 1) == (e.label == Label::Positive))
        .count();
    assert_eq!(correct as f64 / examples.len() as f64, metrics.accuracy);
}
