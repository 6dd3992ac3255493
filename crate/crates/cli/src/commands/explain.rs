use anyhow::Result;
use fedhunter_core::explain::{
    explain_edge, gradient_shap, kernel_shap, shapley_exact, EdgeExplainConfig, GradientMode, GradientShapConfig,
    MaskingConfig, ShapExplanation,
};
use fedhunter_core::netflow::{load_features, FEATURE_NAMES};
use fedhunter_core::provenance::ProvenanceGraph;
use serde_json::json;

use super::{background_rows, check_index, load_cnn, load_model, write_json, LoadedModel, Outcome, UsageError};
use crate::args::{Explain, GradientModeArg, GradientShapArgs, KernelShapArgs};

pub fn run(cmd: &Explain) -> Result<Outcome> {
    match cmd {
        Explain::KernelShap(a) => kernel(a),
        Explain::GradientShap(a) if a.graph.is_some() => edge(a),
        Explain::GradientShap(a) => flow_gradient(a),
    }
}

fn print_top(e: &ShapExplanation) {
    let mut order: Vec<usize> = (0..e.phi.len()).collect();
    order.sort_by(|&i, &j| e.phi[j].abs().total_cmp(&e.phi[i].abs()));
    println!("f(x) = {:.6}, base value {:.6}", e.f_x, e.phi0);
    for &i in order.iter().take(5) {
        println!("  {:<28} {:+.6}", e.feature_names[i], e.phi[i]);
    }
}

fn kernel(a: &KernelShapArgs) -> Result<Outcome> {
    let model = load_cnn(&a.checkpoint)?;
    let data = load_features(&a.data)?;
    check_index(a.instance_index, data.len())?;
    let masking = MaskingConfig::new(&background_rows(&data, a.background, a.seed))?;
    let x = data[a.instance_index].values;
    let e = if a.exact { shapley_exact(&model, &x, &masking)? } else { kernel_shap(&model, &x, &masking, a.budget, a.seed)? };
    let e = e.with_feature_names(&FEATURE_NAMES)?;
    if e.ridge_fallback {
        log::warn!("regression was singular; ridge fallback used");
    }
    write_json(&a.output, &e)?;
    print_top(&e);
    Ok(Outcome {
        config: json!({
            "instance_index": a.instance_index,
            "background": masking.len(),
            "budget": a.budget,
            "mode": e.mode,
        }),
        seed: Some(a.seed),
        inputs: vec![a.checkpoint.clone(), a.data.clone()],
        outputs: vec![a.output.clone()],
    })
}

fn mode(arg: GradientModeArg) -> GradientMode {
    match arg {
        GradientModeArg::ExpectedGradients => GradientMode::ExpectedGradients,
        GradientModeArg::NormalizedWeights => GradientMode::NormalizedWeights,
    }
}

fn flow_gradient(a: &GradientShapArgs) -> Result<Outcome> {
    let (Some(data_path), Some(index)) = (&a.data, a.instance_index) else {
        return Err(UsageError("gradient-shap on flows needs --data and --instance-index".into()).into());
    };
    let model = load_cnn(&a.checkpoint)?;
    let data = load_features(data_path)?;
    check_index(index, data.len())?;
    let masking = MaskingConfig::new(&background_rows(&data, a.background, a.seed))?;
    let cfg = GradientShapConfig::from_background(&masking, a.samples, a.seed).with_mode(mode(a.mode));
    let e = gradient_shap(&model, &data[index].values, &cfg)?.with_feature_names(&FEATURE_NAMES)?;
    write_json(&a.output, &e)?;
    print_top(&e);
    Ok(Outcome {
        config: json!({ "instance_index": index, "samples": a.samples, "background": masking.len(), "mode": e.mode }),
        seed: Some(a.seed),
        inputs: vec![a.checkpoint.clone(), data_path.clone()],
        outputs: vec![a.output.clone()],
    })
}

fn edge(a: &GradientShapArgs) -> Result<Outcome> {
    let graph_path = a.graph.as_ref().expect("dispatched on --graph");
    let Some(edge_id) = &a.edge_id else {
        return Err(UsageError("gradient-shap on a graph needs --edge-id".into()).into());
    };
    if a.mode != GradientModeArg::ExpectedGradients {
        return Err(UsageError("edge explanations support only --mode expected-gradients".into()).into());
    }
    let LoadedModel::EGraphSage(model) = load_model(&a.checkpoint)?.0 else {
        return Err(fedhunter_core::Error::ModelKind { expected: "e_graphsage".into(), found: "cnn_gru".into() }.into());
    };
    let graph = ProvenanceGraph::load(graph_path)?;
    let e = explain_edge(&model, &graph, edge_id, a.hops, &EdgeExplainConfig { samples: a.samples, seed: a.seed })?;
    let dot = a.output.with_extension("dot");
    write_json(&a.output, &e)?;
    fedhunter_core::fsutil::write_atomic(&dot, e.to_dot().as_bytes())?;
    println!(
        "edge {} predicted class {} (p = {:.4}); center node {}; {} nodes, {} edges -> {}",
        e.edge_id,
        e.predicted_class,
        e.probability,
        e.center,
        e.nodes.len(),
        e.edges.len(),
        dot.display()
    );
    Ok(Outcome {
        config: json!({ "edge_id": edge_id, "hops": a.hops, "samples": a.samples, "mode": e.mode }),
        seed: Some(a.seed),
        inputs: vec![a.checkpoint.clone(), graph_path.clone()],
        outputs: vec![a.output.clone(), dot],
    })
}
