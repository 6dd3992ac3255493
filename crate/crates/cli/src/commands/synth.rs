use anyhow::{Context, Result};
use fedhunter_core::netflow::write_csv;
use fedhunter_core::synth::{synth_netflow, synth_provenance, NetflowSynthConfig, ProvenanceSynthConfig};
use serde_json::json;

use super::Outcome;
use crate::args::Synth;

pub fn run(cmd: &Synth) -> Result<Outcome> {
    match cmd {
        Synth::Netflow(a) => {
            let cfg = NetflowSynthConfig { n: a.n, separation: a.separation, attack_fraction: a.attack_fraction, seed: a.seed };
            let rows = synth_netflow(&cfg)?;
            let mut bytes = Vec::new();
            write_csv(&mut bytes, &rows)?;
            fedhunter_core::fsutil::write_atomic(&a.output, &bytes)?;
            let attacks = rows.iter().filter(|r| r.label == 1).count();
            println!("{} flows ({attacks} attack) -> {}", rows.len(), a.output.display());
            Ok(Outcome {
                config: json!({ "n": a.n, "separation": a.separation, "attack_fraction": a.attack_fraction }),
                seed: Some(a.seed),
                inputs: vec![],
                outputs: vec![a.output.clone()],
            })
        }
        Synth::Provenance(a) => {
            let cfg = ProvenanceSynthConfig { nodes: a.nodes, edges: a.edges, attack_rate: a.attack_rate, seed: a.seed };
            let events = synth_provenance(&cfg)?;
            let mut bytes = Vec::new();
            for e in &events {
                serde_json::to_writer(&mut bytes, e).context("serializing event")?;
                bytes.push(b'\n');
            }
            fedhunter_core::fsutil::write_atomic(&a.output, &bytes)?;
            println!("{} events -> {}", events.len(), a.output.display());
            Ok(Outcome {
                config: json!({ "nodes": a.nodes, "edges": a.edges, "attack_rate": a.attack_rate }),
                seed: Some(a.seed),
                inputs: vec![],
                outputs: vec![a.output.clone()],
            })
        }
    }
}
