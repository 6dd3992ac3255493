use std::path::PathBuf;

use anyhow::Result;
use fedhunter_core::detectors::{
    evaluate as evaluate_model, CnnGruConfig, CnnGruModel, DetectionReport, EGraphSageConfig, EGraphSageModel,
};
use fedhunter_core::federated::{run_federated, FederatedConfig};
use fedhunter_core::netflow::stratified_split;
use fedhunter_core::nn::CheckpointMetadata;
use serde_json::json;

use super::{load_model, write_json, DataFile, LoadedModel, Outcome};
use crate::args::{BatchArg, EvaluateArgs, ModelArg, TrainArgs};

pub fn train(a: &TrainArgs) -> Result<Outcome> {
    match a.model {
        ModelArg::CnnGru => train_with(a, CnnGruModel::new(CnnGruConfig::default(), a.seed)),
        ModelArg::EGraphsage => train_with(a, EGraphSageModel::new(EGraphSageConfig::default(), a.seed)),
    }
}

fn log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| a.output.with_extension("rounds.jsonl"))
}

fn train_with<D: DataFile>(a: &TrainArgs, initial: D) -> Result<Outcome> {
    let mut config = FederatedConfig::defaults_for(D::KIND);
    config.clients = a.clients;
    config.rounds = a.rounds;
    config.lr = a.lr;
    config.seed = a.seed;
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    match a.batch_size {
        Some(BatchArg::Full) => config.batch_size = None,
        Some(BatchArg::Size(n)) => config.batch_size = Some(n),
        None => {}
    }
    config.validate()?;

    let data = D::load_data(&a.data)?;
    let mut inputs = vec![a.data.clone()];
    let (train, test) = match (a.holdout, &a.test) {
        (Some(frac), _) => {
            let labels = D::labels(&data);
            let idx: Vec<usize> = (0..labels.len()).collect();
            let split = stratified_split(&idx, |&i| labels[i], 1.0 - frac, a.seed)?;
            (D::subset(&data, &split.train), Some(D::subset(&data, &split.test)))
        }
        (None, Some(path)) => {
            inputs.push(path.clone());
            (data, Some(D::load_data(path)?))
        }
        (None, None) => (data, None),
    };
    log::info!("training {} on {} samples", D::KIND, D::sample_count(&train));

    let outcome = run_federated(&config, initial, &train, test.as_ref(), |log| {
        let loss: f64 = log.clients.iter().filter_map(|c| c.losses.last()).sum::<f64>() / log.clients.len() as f64;
        match &log.test {
            Some(r) => println!(
                "round {:>3}: mean final loss {loss:.6}, test accuracy {:.4}, f1 {}",
                log.round + 1,
                r.accuracy,
                r.f1.map_or("undefined".into(), |f| format!("{f:.4}"))
            ),
            None => println!("round {:>3}: mean final loss {loss:.6}", log.round + 1),
        }
        Ok(())
    })?;

    let history = outcome.logs.iter().map(|l| json!({ "round": l.round, "test": l.test })).collect();
    let ckpt = outcome.model.to_checkpoint(CheckpointMetadata { round: config.rounds, seed: config.seed, metrics_history: history });
    ckpt.save(&a.output)?;
    let mut jsonl = Vec::new();
    for l in &outcome.logs {
        serde_json::to_writer(&mut jsonl, l)?;
        jsonl.push(b'\n');
    }
    let log_path = log_path(a);
    fedhunter_core::fsutil::write_atomic(&log_path, &jsonl)?;
    println!("checkpoint {} (fingerprint {})", a.output.display(), &ckpt.fingerprint()[..16]);
    Ok(Outcome {
        config: json!({ "federated": config, "holdout": a.holdout }),
        seed: Some(a.seed),
        inputs,
        outputs: vec![a.output.clone(), log_path],
    })
}

pub fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let (model, _) = load_model(&a.checkpoint)?;
    let report: DetectionReport = match &model {
        LoadedModel::CnnGru(m) => evaluate_model(m, &CnnGruModel::load_data(&a.data)?, a.threshold)?,
        LoadedModel::EGraphSage(m) => evaluate_model(m, &EGraphSageModel::load_data(&a.data)?, a.threshold)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    let outputs = match &a.output {
        Some(p) => {
            write_json(p, &report)?;
            vec![p.clone()]
        }
        None => vec![],
    };
    Ok(Outcome {
        config: json!({ "threshold": a.threshold }),
        seed: None,
        inputs: vec![a.checkpoint.clone(), a.data.clone()],
        outputs,
    })
}
