//! Sequential vs rayon execution of the data-parallel hot spots.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ssc_core::baselines::{featurize, train_rf, RfConfig, TfidfVectorizer};
use ssc_core::features::tokenize;
use ssc_core::models::{CCnnConfig, CnnArch, CnnKind, Encoder, Network};
use ssc_core::parallel::Executor;
use ssc_core::synth::{feature_tables, generate_dataset, SynthConfig};

const MODES: [(&str, Executor); 2] = [("sequential", Executor::Sequential), ("parallel", Executor::Parallel)];

fn batch_inference(c: &mut Criterion) {
    let data = generate_dataset(&SynthConfig {
        positives: 128,
        negatives: 128,
        ..SynthConfig::default()
    });
    let tables = feature_tables();
    let set = Encoder::new(&tables, None).encode(&data);
    let arch = CnnArch {
        char: CCnnConfig {
            filters_per_size: 16,
            char_dim: 16,
            ..CCnnConfig::default()
        },
        ..CnnArch::default()
    };
    let net = Network::<f32>::build(CnnKind::CharCnn, &arch, 1).unwrap();
    let mut g = c.benchmark_group("char_cnn_inference_256");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(net.predict_set(&set, exec).unwrap()))
        });
    }
    g.finish();
}

fn forest_training(c: &mut Criterion) {
    let data = generate_dataset(&SynthConfig {
        positives: 300,
        negatives: 300,
        ..SynthConfig::default()
    });
    let tables = feature_tables();
    let texts: Vec<&str> = data.texts().collect();
    let toks: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
    let v = TfidfVectorizer::fit(&toks);
    let xs = featurize(&v, &tables, &texts);
    let ys = data.labels().unwrap();
    let cfg = RfConfig {
        trees: 16,
        ..RfConfig::default()
    };
    let mut g = c.benchmark_group("random_forest_train_16_trees");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(train_rf(&xs, &ys, &cfg, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, batch_inference, forest_training);
criterion_main!(benches);
