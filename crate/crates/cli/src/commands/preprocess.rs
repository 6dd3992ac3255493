use std::io::BufReader;

use anyhow::{Context, Result};
use fedhunter_core::netflow::{ingest_csv, save_features, IngestOptions};
use fedhunter_core::provenance::{build_graph, parse_events, BuildOptions};
use serde_json::json;

use super::Outcome;
use crate::args::Preprocess;

pub fn run(cmd: &Preprocess) -> Result<Outcome> {
    match cmd {
        Preprocess::Netflow(a) => {
            let opts = IngestOptions { strict: a.strict, clamp: a.clamp, drop_ports: a.drop_ports };
            let report = ingest_csv(&a.input, &opts)?;
            for e in report.row_errors.iter().take(20) {
                log::warn!("{}: {e}", a.input.display());
            }
            if report.row_errors.len() > 20 {
                log::warn!("{} more malformed rows", report.row_errors.len() - 20);
            }
            save_features(&a.output, &report.vectors)?;
            let attacks = report.vectors.iter().filter(|v| v.is_attack()).count();
            println!(
                "{} vectors ({attacks} attack), {} rows rejected, {} clamped -> {}",
                report.vectors.len(),
                report.row_errors.len(),
                report.clamped_rows,
                a.output.display()
            );
            Ok(Outcome {
                config: json!({
                    "strict": a.strict,
                    "clamp": a.clamp,
                    "drop_ports": a.drop_ports,
                    "vectors": report.vectors.len(),
                    "rejected_rows": report.row_errors.len(),
                    "clamped_rows": report.clamped_rows,
                }),
                seed: None,
                inputs: vec![a.input.clone()],
                outputs: vec![a.output.clone()],
            })
        }
        Preprocess::Provenance(a) => {
            let file = std::fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
            let events = parse_events(BufReader::new(file))?;
            let graph = build_graph(&events, BuildOptions { two_pass: !a.single_pass })?;
            graph.save(&a.output)?;
            let attacks = graph.edge_labels().iter().filter(|&&l| l == 1).count();
            println!(
                "{} nodes, {} edges ({attacks} attack) -> {}",
                graph.node_count(),
                graph.edge_count(),
                a.output.display()
            );
            Ok(Outcome {
                config: json!({ "two_pass": !a.single_pass, "nodes": graph.node_count(), "edges": graph.edge_count() }),
                seed: None,
                inputs: vec![a.input.clone()],
                outputs: vec![a.output.clone()],
            })
        }
    }
}
