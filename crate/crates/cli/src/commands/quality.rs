use anyhow::Result;
use fedhunter_core::detectors::{CnnGruModel, EGraphSageModel};
use fedhunter_core::quality::{
    build_quality_dataset, check_decision, export_embeddings, split_by_category, DistanceMetric, QualityDataset,
};
use serde_json::json;

use super::{check_index, load_model, write_json, DataFile, LoadedModel, Outcome};
use crate::args::{MetricArg, Quality, QualityBuildArgs, QualityCheckArgs};

pub fn run(cmd: &Quality) -> Result<Outcome> {
    match cmd {
        Quality::Build(a) => build(a),
        Quality::Check(a) => check(a),
    }
}

fn build_with<D: DataFile>(model: &D, a: &QualityBuildArgs) -> Result<QualityDataset> {
    let data = D::load_data(&a.data)?;
    let split = split_by_category(model, &data, a.threshold)?;
    println!("prediction outcomes [TP, TN, FP, FN]: {:?}", split.sizes());
    Ok(build_quality_dataset(model, &data, &split, a.per_class, a.seed)?)
}

fn build(a: &QualityBuildArgs) -> Result<Outcome> {
    let set = match &load_model(&a.checkpoint)?.0 {
        LoadedModel::CnnGru(m) => build_with(m, a)?,
        LoadedModel::EGraphSage(m) => build_with(m, a)?,
    };
    let metric = match a.metric {
        MetricArg::Euclidean => DistanceMetric::Euclidean,
        MetricArg::Manhattan => DistanceMetric::Manhattan,
    };
    let set = set.with_metric(metric);
    set.save(&a.output)?;
    let mut outputs = vec![a.output.clone()];
    if let Some(p) = &a.embeddings {
        export_embeddings(&set, p)?;
        outputs.push(p.clone());
    }
    println!("quality dataset sizes [TP, TN, FP, FN]: {:?}, dim {} -> {}", set.sizes(), set.dim, a.output.display());
    Ok(Outcome {
        config: json!({ "per_class": a.per_class, "threshold": a.threshold, "metric": metric }),
        seed: Some(a.seed),
        inputs: vec![a.checkpoint.clone(), a.data.clone()],
        outputs,
    })
}

fn check(a: &QualityCheckArgs) -> Result<Outcome> {
    let set = QualityDataset::load(&a.dataset)?;
    let verdict = match &load_model(&a.checkpoint)?.0 {
        LoadedModel::CnnGru(m) => {
            let data = CnnGruModel::load_data(&a.data)?;
            check_index(a.instance_index, data.len())?;
            check_decision(m, &data, a.instance_index, &set)?
        }
        LoadedModel::EGraphSage(m) => {
            let data = EGraphSageModel::load_data(&a.data)?;
            check_index(a.instance_index, data.edge_count())?;
            check_decision(m, &data, a.instance_index, &set)?
        }
    };
    println!("verdict: {}", verdict.category);
    for (c, d) in verdict.distances.iter() {
        match d {
            Some(d) => println!("  {c}: {d:.6}"),
            None => println!("  {c}: empty"),
        }
    }
    let outputs = match &a.output {
        Some(p) => {
            write_json(p, &verdict)?;
            vec![p.clone()]
        }
        None => vec![],
    };
    Ok(Outcome {
        config: json!({ "instance_index": a.instance_index }),
        seed: None,
        inputs: vec![a.checkpoint.clone(), a.data.clone(), a.dataset.clone()],
        outputs,
    })
}
