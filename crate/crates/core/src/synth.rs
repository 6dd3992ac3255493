//! Seeded generators for class-separable test data in the real schemas.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netflow::RawFlowRecord;
use crate::provenance::{EdgeType, Event, NodeType};

/// Attack share of the reference NetFlow corpus.
pub const DEFAULT_ATTACK_FRACTION: f64 = 0.804;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetflowSynthConfig {
    pub n: usize,
    /// Probability that a row is drawn from its class profile rather than
    /// from a profile shared by both classes. `1.0` gives disjoint supports.
    pub separation: f64,
    pub attack_fraction: f64,
    pub seed: u64,
}

impl NetflowSynthConfig {
    pub fn new(n: usize, separation: f64, seed: u64) -> Self {
        Self { n, separation, attack_fraction: DEFAULT_ATTACK_FRACTION, seed }
    }
}

/// Exactly `round(n · rate)`.
pub fn count_at_rate(n: usize, rate: f64) -> usize {
    (n as f64 * rate).round() as usize
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn ip(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    format!("{prefix}.{}.{}", rng.gen_range(0..=255), rng.gen_range(1..=254))
}

fn benign_flow(rng: &mut ChaCha8Rng) -> RawFlowRecord {
    RawFlowRecord {
        src_addr: ip(rng, "192.168"),
        dst_addr: ip(rng, "10.0"),
        protocol: *[6u64, 17].choose(rng).unwrap(),
        l4_src_port: rng.gen_range(32768..61000),
        l4_dst_port: *[80u64, 443, 53, 22, 123].choose(rng).unwrap(),
        in_pkts: rng.gen_range(10..60),
        out_pkts: rng.gen_range(10..60),
        in_bytes: rng.gen_range(400..6000),
        out_bytes: rng.gen_range(1500..40000),
        tcp_flags: *[24u64, 27, 30].choose(rng).unwrap(),
        flow_duration_ms: rng.gen_range(200..4000),
        l7_proto: *[7u64, 91, 5, 188].choose(rng).unwrap(),
        label: 0,
    }
}

fn attack_flow(rng: &mut ChaCha8Rng) -> RawFlowRecord {
    RawFlowRecord {
        src_addr: ip(rng, "172.16"),
        dst_addr: ip(rng, "10.0"),
        protocol: 6,
        l4_src_port: rng.gen_range(1024..65536),
        l4_dst_port: rng.gen_range(1..1024),
        in_pkts: rng.gen_range(1..4),
        out_pkts: rng.gen_range(0..3),
        in_bytes: rng.gen_range(40..200),
        out_bytes: rng.gen_range(0..120),
        tcp_flags: *[2u64, 4, 20].choose(rng).unwrap(),
        flow_duration_ms: rng.gen_range(0..50),
        l7_proto: 0,
        label: 1,
    }
}

fn ambiguous_flow(rng: &mut ChaCha8Rng, label: u8) -> RawFlowRecord {
    RawFlowRecord {
        src_addr: ip(rng, "192.168"),
        dst_addr: ip(rng, "10.0"),
        protocol: *[6u64, 17].choose(rng).unwrap(),
        l4_src_port: rng.gen_range(1024..65536),
        l4_dst_port: rng.gen_range(1..65536),
        in_pkts: rng.gen_range(1..60),
        out_pkts: rng.gen_range(0..60),
        in_bytes: rng.gen_range(40..6000),
        out_bytes: rng.gen_range(0..40000),
        tcp_flags: rng.gen_range(0..32),
        flow_duration_ms: rng.gen_range(0..4000),
        l7_proto: rng.gen_range(0..200),
        label,
    }
}

/// Raw flow records with `round(n · attack_fraction)` attacks in shuffled order.
pub fn synth_netflow(cfg: &NetflowSynthConfig) -> Result<Vec<RawFlowRecord>> {
    check_rate("separation", cfg.separation)?;
    check_rate("attack fraction", cfg.attack_fraction)?;
    let attacks = count_at_rate(cfg.n, cfg.attack_fraction);
    let mut labels: Vec<u8> = (0..cfg.n).map(|i| u8::from(i < attacks)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    labels.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .map(|label| {
            if rng.gen::<f64>() >= cfg.separation {
                ambiguous_flow(&mut rng, label)
            } else if label == 1 {
                attack_flow(&mut rng)
            } else {
                benign_flow(&mut rng)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProvenanceSynthConfig {
    pub nodes: usize,
    pub edges: usize,
    pub attack_rate: f64,
    pub seed: u64,
}

const BENIGN_PROGRAMS: [&str; 12] =
    ["bash", "sshd", "cron", "ls", "vim", "python3", "sendmail", "imapd", "find", "tar", "grep", "nginx"];
const BENIGN_ARGS: [&str; 8] = ["-la /home", "--daemon", "-r /var/log", "-c config", "status", "-q", "-v", "--help"];
const ATTACK_PROGRAMS: [&str; 5] = ["drakon", "loaderdrakon", "microapt", "netrecon", "implant"];
const ATTACK_ARGS: [&str; 4] = ["-p 4444 --beacon", "--inject pid", "-x /tmp/payload", "--exfil 80"];
const FILE_KINDS: [&str; 4] = ["file", "dir", "link", "socket"];
const SUBJECT_KINDS: [&str; 2] = ["process", "thread"];

fn attrs(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// A provenance event log.
///
/// Nodes are 40% subjects, 40% files, 15% network flows and 5% pipes. A
/// handful of subjects are attackers; every edge they originate is an attack
/// drawn from a separate program vocabulary, and exactly
/// `round(edges · attack_rate)` edges are attacks.
pub fn synth_provenance(cfg: &ProvenanceSynthConfig) -> Result<Vec<Event>> {
    check_rate("attack rate", cfg.attack_rate)?;
    if cfg.nodes < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 nodes, got {}", cfg.nodes)));
    }
    let attacks = count_at_rate(cfg.edges, cfg.attack_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_subject = (cfg.nodes * 40 / 100).max(2);
    let n_file = cfg.nodes * 40 / 100;
    let n_flow = cfg.nodes * 15 / 100;
    let n_pipe = cfg.nodes - n_subject - n_file - n_flow;
    let mut events = Vec::with_capacity(cfg.nodes + cfg.edges);
    let ids = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let subjects = ids("s", n_subject);
    let files = ids("f", n_file);
    let flows = ids("nf", n_flow);
    let pipes = ids("p", n_pipe);
    for id in &subjects {
        let sub = SUBJECT_KINDS.choose(&mut rng).unwrap().to_string();
        events.push(Event::Node { id: id.clone(), node_type: NodeType::Subject, attrs: attrs(&[("sub_type", sub)]) });
    }
    for id in &files {
        let sub = FILE_KINDS.choose(&mut rng).unwrap().to_string();
        events.push(Event::Node { id: id.clone(), node_type: NodeType::File, attrs: attrs(&[("sub_type", sub)]) });
    }
    for id in &flows {
        let a = attrs(&[
            ("local_address", ip(&mut rng, "10.0")),
            ("local_port", rng.gen_range(1..65536).to_string()),
            ("remote_address", ip(&mut rng, "128.55")),
            ("remote_port", rng.gen_range(1..65536).to_string()),
        ]);
        events.push(Event::Node { id: id.clone(), node_type: NodeType::NetFlow, attrs: a });
    }
    for id in &pipes {
        events.push(Event::Node { id: id.clone(), node_type: NodeType::UnnamedPipe, attrs: BTreeMap::new() });
    }

    let n_attackers = attacks.div_ceil(10).clamp(usize::from(attacks > 0), n_subject - 1);
    let (attackers, benign_subjects) = subjects.split_at(n_attackers);
    let mut is_attack: Vec<bool> = (0..cfg.edges).map(|i| i < attacks).collect();
    is_attack.shuffle(&mut rng);
    for (i, attack) in is_attack.into_iter().enumerate() {
        let src = if attack { attackers } else { benign_subjects }.choose(&mut rng).unwrap().clone();
        let (programs, args): (&[&str], &[&str]) =
            if attack { (&ATTACK_PROGRAMS, &ATTACK_ARGS) } else { (&BENIGN_PROGRAMS, &BENIGN_ARGS) };
        let exec = programs.choose(&mut rng).unwrap().to_string();
        let kind = rng.gen_range(0..5);
        let (edge_type, dst, a) = match kind {
            0 if !files.is_empty() => {
                let cmd = format!("{exec} {}", args.choose(&mut rng).unwrap());
                (EdgeType::Execute, files.choose(&mut rng).unwrap(), attrs(&[("exec", exec), ("cmd_line", cmd)]))
            }
            1 if !flows.is_empty() => {
                let address = if attack { ip(&mut rng, "81.4") } else { ip(&mut rng, "128.55") };
                let port = if attack { rng.gen_range(4000..5000) } else { *[22, 80, 443].choose(&mut rng).unwrap() };
                let a = attrs(&[("address", address), ("port", port.to_string()), ("exec", exec)]);
                (EdgeType::Accept, flows.choose(&mut rng).unwrap(), a)
            }
            2 => (EdgeType::ModifyProcess, subjects.choose(&mut rng).unwrap(), attrs(&[("exec", exec)])),
            3 => {
                let pool = if pipes.is_empty() || rng.gen_bool(0.7) { &files } else { &pipes };
                let dst = pool.choose(&mut rng).unwrap_or_else(|| subjects.choose(&mut rng).unwrap());
                (EdgeType::CreateObject, dst, attrs(&[("exec", exec)]))
            }
            _ => {
                let dst = files.choose(&mut rng).unwrap_or_else(|| subjects.choose(&mut rng).unwrap());
                (EdgeType::Rename, dst, attrs(&[("exec", exec)]))
            }
        };
        events.push(Event::Edge {
            id: format!("e{i}"),
            edge_type,
            src,
            dst: dst.clone(),
            attrs: a,
            label: u8::from(attack),
        });
    }
    Ok(events)
}
