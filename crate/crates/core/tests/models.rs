use ssc_core::corpus::{Dataset, Label, Tweet};
use ssc_core::models::train::{split_validation, validation_metrics};
use ssc_core::models::{
    build_ccnn, build_wcnn, select_best_epoch, train, AuxMode, Batch, CCnnConfig, CnnArch, CnnKind, Encoder,
    InputPath, Network, Prediction, TrainConfig, WCnnConfig,
};
use ssc_core::nn::Tensor;
use ssc_core::synth::{embedding_table, feature_tables};
use ssc_core::Executor;

fn small_char() -> CCnnConfig {
    CCnnConfig {
        filters_per_size: 8,
        char_dim: 8,
        ..CCnnConfig::default()
    }
}

fn toy_dataset() -> Dataset {
    let pos = ["took xanax again", "need more oxy", "popping xanax all day", "oxy and xanax", "score some oxy"];
    let neg = ["lovely sunny day", "my cat is asleep", "going for a walk", "coffee with friends", "reading a book"];
    let mut items = Vec::new();
    for i in 0..10 {
        items.push(Tweet::new(format!("p{i}"), format!("{} {i}", pos[i % 5]), Some(Label::Positive)).unwrap());
        items.push(Tweet::new(format!("n{i}"), format!("{} {i}", neg[i % 5]), Some(Label::Negative)).unwrap());
    }
    Dataset::new(items).unwrap()
}

#[test]
fn wcnn_parameter_count_matches_closed_form() {
    let cfg = WCnnConfig::default();
    let (d, f) = (cfg.embed_dim, cfg.filters_per_size);
    // same-padded convs, two pools of 2: 40 -> 20 -> 10
    let convs: usize = cfg.kernel_sizes.iter().map(|&k| k * d * f + f + k * f * f + f).sum();
    let flat = cfg.kernel_sizes.len() * 10 * f;
    let dense = flat * 1024 + 1024 + 1024 * 1024 + 1024;
    let out = (1024 + 154) * 2 + 2;
    let expected = convs + dense + out;
    assert_eq!(expected, 5_796_918);

    let net = build_wcnn::<f32>(&cfg, 0).unwrap();
    assert_eq!(net.params().numel(), expected);
}

#[test]
fn fixed_dense_block_is_enforced() {
    let wide = WCnnConfig {
        dense_units: 512,
        ..WCnnConfig::default()
    };
    assert!(build_wcnn::<f32>(&wide, 0).is_err());
    let deep = CCnnConfig {
        dense_layers: 3,
        ..small_char()
    };
    assert!(build_ccnn::<f32>(&deep, 0).is_err());
}

#[test]
fn plain_char_model_has_154_fewer_output_inputs() {
    let full = build_ccnn::<f32>(&small_char(), 0).unwrap();
    let none = build_ccnn::<f32>(
        &CCnnConfig {
            aux_mode: AuxMode::None,
            ..small_char()
        },
        0,
    )
    .unwrap();
    let out_rows = |n: &Network<f32>| {
        let i = n.params().index_of("out.w").unwrap();
        n.params().value(i).shape()[0]
    };
    assert_eq!(out_rows(&full) - out_rows(&none), 154);
    assert_eq!(full.params().numel() - none.params().numel(), 154 * 2);
}

#[test]
fn zero_input_gives_a_probability_pair() {
    let cfg = WCnnConfig {
        embed_dim: 6,
        filters_per_size: 4,
        ..WCnnConfig::default()
    };
    let net = build_wcnn::<f64>(&cfg, 3).unwrap();
    let batch = Batch {
        size: 2,
        words: Some(Tensor::new(&[2, 40, 6], vec![0.0; 480]).unwrap()),
        chars: Vec::new(),
        aux: Tensor::new(&[2, 154], vec![0.0; 308]).unwrap(),
        gold: Vec::new(),
    };
    for p in net.probabilities(&batch).unwrap() {
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.0 && p[1] > 0.0);
    }
}

#[test]
fn pad_region_permutation_is_invisible() {
    let tables = feature_tables();
    let set = Encoder::new(&tables, None).encode_texts(["short text here"]);
    for kind in [CnnKind::CharAux, CnnKind::CharCnn] {
        let net = Network::<f64>::build(kind, &CnnArch { char: small_char(), ..CnnArch::default() }, 5).unwrap();
        let batch: Batch<f64> = net.batch(&set, &[0]).unwrap();
        let real = "short text here".chars().count();
        let max_k = 7;
        assert!(real < 280 - max_k);
        let mut permuted = batch.clone();
        permuted.chars[real + max_k..].reverse();
        permuted.chars[real + max_k..].rotate_left(13);
        let a = net.probabilities(&batch).unwrap();
        let b = net.probabilities(&permuted).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn aux_wiring() {
    let tables = feature_tables();
    let set = Encoder::new(&tables, None).encode_texts(["xanax and oxy tonight"]);
    let arch = CnnArch {
        char: small_char(),
        ..CnnArch::default()
    };
    for (kind, wired) in [(CnnKind::CharAux, true), (CnnKind::CharCnn, false)] {
        let net = Network::<f64>::build(kind, &arch, 9).unwrap();
        let batch: Batch<f64> = net.batch(&set, &[0]).unwrap();
        let mut scaled = batch.clone();
        let doubled: Vec<f64> = batch.aux.data().iter().map(|v| v * 3.0 + 1.0).collect();
        scaled.aux = Tensor::new(&[1, 154], doubled).unwrap();
        let a = net.probabilities(&batch).unwrap();
        let b = net.probabilities(&scaled).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a != b, wired, "{kind:?}");
    }
}

#[test]
fn prediction_tie_goes_negative() {
    let p = Prediction::from_probs(0.2, 0.8);
    assert_eq!((p.label, p.positive_prob), (Label::Positive, 0.8));
    assert_eq!(Prediction::from_probs(0.5, 0.5).label, Label::Negative);
}

#[test]
fn toy_set_is_memorized() {
    let tables = feature_tables();
    let data = toy_dataset();
    let set = Encoder::new(&tables, None).encode(&data);
    let mut net = Network::<f32>::build(
        CnnKind::CharCnn,
        &CnnArch {
            char: small_char(),
            ..CnnArch::default()
        },
        1,
    )
    .unwrap();
    let cps = train(
        &mut net,
        &set,
        &TrainConfig {
            epochs: 30,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(cps.len(), 30);
    assert!(cps.iter().all(|c| c.metric("train_loss").unwrap().is_finite()));
    let preds = net.predict_set(&set, Executor::Sequential).unwrap();
    let correct = preds.iter().zip(&set.labels).filter(|(p, l)| p.label == **l).count();
    assert_eq!(correct, set.len());
}

#[test]
fn training_is_reproducible_and_checkpoints_revalidate() {
    let tables = feature_tables();
    let emb = embedding_table(8, 4);
    let data = toy_dataset();
    let set = Encoder::new(&tables, Some(&emb)).encode(&data);
    let arch = CnnArch {
        word: WCnnConfig {
            embed_dim: 8,
            filters_per_size: 4,
            ..WCnnConfig::default()
        },
        ..CnnArch::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 5,
        seed: 11,
        validation_fraction: 0.2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Network::<f32>::build(CnnKind::WordAux, &arch, 6).unwrap();
        train(&mut net, &set, &cfg).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first.len(), 3);
    let metrics: Vec<_> = first.iter().map(|c| c.metrics.clone()).collect();
    let again: Vec<_> = second.iter().map(|c| c.metrics.clone()).collect();
    assert_eq!(metrics, again);

    let (_, val) = split_validation(&set.labels, cfg.validation_fraction, cfg.seed);
    let val_set = set.select(&val);
    for cp in &first {
        let net = Network::<f32>::from_checkpoint(cp).unwrap();
        for (k, v) in validation_metrics(&net, &val_set).unwrap() {
            assert_eq!(cp.metric(k), Some(v), "epoch {} {k}", cp.epoch);
        }
    }
    let best = select_best_epoch(&first, "f1_p").unwrap();
    let top = first.iter().map(|c| c.metric("f1_p").unwrap()).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.metric("f1_p"), Some(top));
    assert_eq!(best.epoch, first.iter().find(|c| c.metric("f1_p") == Some(top)).unwrap().epoch);
}

#[test]
fn training_rejects_degenerate_sets() {
    let tables = feature_tables();
    let one_class = Dataset::new(vec![
        Tweet::new("a", "xanax", Some(Label::Positive)).unwrap(),
        Tweet::new("b", "oxy", Some(Label::Positive)).unwrap(),
    ])
    .unwrap();
    let set = Encoder::new(&tables, None).encode(&one_class);
    let mut net = build_ccnn::<f32>(&small_char(), 0).unwrap();
    assert!(train(&mut net, &set, &TrainConfig::default()).is_err());
    let empty = set.select(&[]);
    assert!(train(&mut net, &empty, &TrainConfig::default()).is_err());
}

#[test]
fn word_model_needs_matching_vectors() {
    let tables = feature_tables();
    let set = Encoder::new(&tables, None).encode_texts(["hello"]);
    let net = build_wcnn::<f32>(
        &WCnnConfig {
            embed_dim: 8,
            filters_per_size: 4,
            ..WCnnConfig::default()
        },
        0,
    )
    .unwrap();
    assert!(net.batch(&set, &[0]).is_err());
    let emb = embedding_table(6, 1);
    let set = Encoder::new(&tables, Some(&emb)).encode_texts(["hello"]);
    assert!(net.batch(&set, &[0]).is_err());
    assert_eq!(InputPath::Words, net.input_path());
}
