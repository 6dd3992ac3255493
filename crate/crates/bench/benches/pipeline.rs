use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fedhunter_core::detectors::{CnnGruConfig, CnnGruModel, EGraphSageConfig, EGraphSageModel, GraphTensors};
use fedhunter_core::explain::{gradient_shap, kernel_shap, GradientShapConfig, MaskingConfig};
use fedhunter_core::federated::{aggregate, ClientUpdate};
use fedhunter_core::netflow::{normalize_record, FeatureVector};
use fedhunter_core::nn::layer_records;
use fedhunter_core::provenance::{build_graph, BuildOptions};
use fedhunter_core::synth::{synth_netflow, synth_provenance, NetflowSynthConfig, ProvenanceSynthConfig};

fn flows(n: usize) -> Vec<FeatureVector> {
    let rows = synth_netflow(&NetflowSynthConfig::new(n, 0.95, 1)).unwrap();
    rows.iter().map(|r| normalize_record(r, false, false).unwrap().0).collect()
}

fn netflow(c: &mut Criterion) {
    let rows = synth_netflow(&NetflowSynthConfig::new(1000, 0.95, 1)).unwrap();
    c.bench_function("normalize 1000 records", |b| {
        b.iter(|| rows.iter().map(|r| normalize_record(black_box(r), false, false).unwrap().0.values[0]).sum::<f64>())
    });
}

fn detectors(c: &mut Criterion) {
    let model = CnnGruModel::new(CnnGruConfig::default(), 1);
    let x: Vec<f64> = flows(512).iter().flat_map(|v| v.values).collect();
    c.bench_function("cnn-gru predict 512 flows", |b| b.iter(|| model.predict_values(black_box(&x)).unwrap()));

    let events = synth_provenance(&ProvenanceSynthConfig { nodes: 400, edges: 2000, attack_rate: 0.007, seed: 1 }).unwrap();
    let graph = GraphTensors::from_graph(&build_graph(&events, BuildOptions::default()).unwrap()).unwrap();
    let egs = EGraphSageModel::new(EGraphSageConfig::default(), 1);
    c.bench_function("e-graphsage predict 2000 edges", |b| b.iter(|| egs.predict_edges(black_box(&graph)).unwrap()));
}

fn explainers(c: &mut Criterion) {
    let model = CnnGruModel::new(CnnGruConfig::default(), 2);
    let data = flows(101);
    let background: Vec<Vec<f64>> = data[1..].iter().map(|v| v.values.to_vec()).collect();
    let masking = MaskingConfig::new(&background).unwrap();
    let x = data[0].values.to_vec();
    let mut group = c.benchmark_group("explain");
    group.sample_size(10);
    group.bench_function("kernel-shap full, 100 background rows", |b| {
        b.iter(|| kernel_shap(&model, black_box(&x), &masking, 2048, 0).unwrap())
    });
    let cfg = GradientShapConfig::from_background(&masking, 50, 0);
    group.bench_function("gradient-shap, 50 samples", |b| b.iter(|| gradient_shap(&model, black_box(&x), &cfg).unwrap()));
    group.finish();
}

fn federated(c: &mut Criterion) {
    let updates: Vec<ClientUpdate> = (0..10)
        .map(|k| ClientUpdate { client_id: k, layers: layer_records(&CnnGruModel::new(CnnGruConfig::default(), k as u64)), n_k: 100 + k })
        .collect();
    c.bench_function("aggregate 10 cnn-gru clients", |b| b.iter(|| aggregate(black_box(&updates)).unwrap()));
}

criterion_group!(benches, netflow, detectors, explainers, federated);
criterion_main!(benches);
