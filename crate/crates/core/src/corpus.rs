//! Seeded random scenarios for property campaigns.
//!
//! Slice topologies come from three families, picked uniformly:
//!
//! * threshold: every node's slices are all `t`-subsets containing it, with
//!   `t` uniform in `n/2+1..=n`;
//! * random: one to three slices per node, each the node plus every other
//!   node independently with probability 1/2;
//! * split: two groups, each a threshold system over itself, and every node
//!   gets one extra slice spanning both groups with probability 1/2.
//!
//! Each node is faulty with probability `fault_rate` until `max_faulty` is
//! reached; a faulty node is malicious with probability `malicious_rate`,
//! otherwise it crashes at a uniform time in `0..=30`. At most
//! `max_malicious` nodes are malicious. A malicious node runs one to four
//! random sends at times `0..=40` and stops at time 60; with probability 1/2
//! it also shows every correct node a different, random set of slices.
//!
//! Delays are random with GST uniform in `0..=30`, delta in `1..=3`,
//! pre-GST maximum in `delta..=10`, timeout base in `8..=16`, and skew in
//! `0..=3`. Correct nodes propose uniformly from `1..=K` (or a random vote
//! for federated voting), with K uniform in `2..=3`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ballot::{Ballot, Value};
use crate::bv::{BvMessage, Phase};
use crate::fbqs::{Fbqs, NodeId, NodeSet};
use crate::fv::{FvKind, FvMessage};
use crate::node::Input;
use crate::scenario::{Action, DelayMode, Fault, ProtocolKind, Scenario, ScriptAction, Timing};
use crate::trace::Message;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub protocol: ProtocolKind,
    /// Node counts are drawn from `min_nodes..=nodes`.
    pub min_nodes: usize,
    pub nodes: usize,
    pub max_faulty: usize,
    pub max_malicious: usize,
    pub fault_rate: f64,
    pub malicious_rate: f64,
    pub max_time: u64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            protocol: ProtocolKind::Cscp,
            min_nodes: 3,
            nodes: 5,
            max_faulty: 1,
            max_malicious: 1,
            fault_rate: 0.3,
            malicious_rate: 0.5,
            max_time: 20_000,
            seed: 0,
        }
    }
}

fn threshold_slices(v: NodeId, group: NodeSet, t: usize) -> Vec<NodeSet> {
    group
        .subsets()
        .filter(|s| s.len() == t && s.contains(v))
        .collect()
}

fn random_subset(rng: &mut ChaCha8Rng, v: NodeId, universe: NodeSet) -> NodeSet {
    universe
        .iter()
        .filter(|u| *u == v || rng.gen_bool(0.5))
        .collect()
}

/// A random slice system over `n` nodes from one of the three families.
pub fn random_fbqs(rng: &mut ChaCha8Rng, n: usize) -> Fbqs {
    let universe = NodeSet::first(n);
    let lists: Vec<Vec<NodeSet>> = match rng.gen_range(0..3) {
        0 => {
            let t = rng.gen_range(n / 2 + 1..=n);
            universe
                .iter()
                .map(|v| threshold_slices(v, universe, t))
                .collect()
        }
        1 => universe
            .iter()
            .map(|v| {
                let m = rng.gen_range(1..=3);
                let mut list: Vec<NodeSet> =
                    (0..m).map(|_| random_subset(rng, v, universe)).collect();
                list.sort();
                list.dedup();
                list
            })
            .collect(),
        _ => {
            let cut = rng.gen_range(1..n.max(2));
            let left = NodeSet::first(cut);
            let right = universe.difference(left);
            universe
                .iter()
                .map(|v| {
                    let group = if left.contains(v) { left } else { right };
                    let t = rng.gen_range(group.len() / 2 + 1..=group.len());
                    let mut list = threshold_slices(v, group, t);
                    if rng.gen_bool(0.5) {
                        list.push(random_subset(rng, v, universe).union(NodeSet::singleton(v)));
                    }
                    list.sort();
                    list.dedup();
                    list
                })
                .collect()
        }
    };
    Fbqs::from_lists(&lists).expect("generated slices contain their node")
}

fn random_ballot(rng: &mut ChaCha8Rng, k: u32) -> Ballot {
    if rng.gen_bool(0.1) {
        Ballot::Null
    } else {
        Ballot::new(rng.gen_range(1..=3), rng.gen_range(1..=k))
    }
}

fn random_message(rng: &mut ChaCha8Rng, protocol: ProtocolKind, k: u32) -> Message {
    let kind = if rng.gen_bool(0.5) {
        FvKind::Vote
    } else {
        FvKind::Ready
    };
    match protocol {
        ProtocolKind::Fv => Message::Fv(FvMessage {
            kind,
            tag: 0,
            value: rng.gen_bool(0.5),
        }),
        ProtocolKind::Cscp => {
            let phase = if rng.gen_bool(0.6) {
                Phase::Prep
            } else {
                Phase::Cmt
            };
            Message::Bv(BvMessage::new(kind, phase, random_ballot(rng, k)))
        }
        ProtocolKind::Ascp => {
            let value = rng.gen_bool(0.6);
            let mut tags: Vec<Ballot> = (0..rng.gen_range(1..=3))
                .map(|_| random_ballot(rng, k))
                .collect();
            tags.sort();
            tags.dedup();
            Message::Batch(
                tags.into_iter()
                    .map(|tag| FvMessage { kind, tag, value })
                    .collect(),
            )
        }
    }
}

fn random_script(
    rng: &mut ChaCha8Rng,
    protocol: ProtocolKind,
    k: u32,
    universe: NodeSet,
) -> Vec<ScriptAction> {
    let mut script: Vec<ScriptAction> = (0..rng.gen_range(1..=4))
        .map(|_| {
            let to = if rng.gen_bool(0.5) {
                universe
            } else {
                let s: NodeSet = universe.iter().filter(|_| rng.gen_bool(0.5)).collect();
                if s.is_empty() {
                    universe
                } else {
                    s
                }
            };
            ScriptAction {
                at: rng.gen_range(0..=40),
                action: Action::Send {
                    msg: random_message(rng, protocol, k),
                    to,
                    delay: None,
                },
            }
        })
        .collect();
    script.sort_by_key(|a| a.at);
    script.push(ScriptAction {
        at: 60,
        action: Action::Stop,
    });
    script
}

/// Scenario number `index` of the corpus described by `cfg`.
pub fn random_scenario(cfg: &CorpusConfig, index: usize) -> Scenario {
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = rng.gen_range(cfg.min_nodes.max(1)..=cfg.nodes.max(cfg.min_nodes.max(1)));
    let universe = NodeSet::first(n);
    let k = if cfg.protocol == ProtocolKind::Fv {
        2
    } else {
        rng.gen_range(2..=3)
    };
    let system = random_fbqs(&mut rng, n);

    let mut order: Vec<NodeId> = universe.iter().collect();
    order.shuffle(&mut rng);
    let mut faults = BTreeMap::new();
    let mut malicious = 0;
    for v in order {
        if faults.len() >= cfg.max_faulty || !rng.gen_bool(cfg.fault_rate) {
            continue;
        }
        if malicious < cfg.max_malicious && rng.gen_bool(cfg.malicious_rate) {
            malicious += 1;
            faults.insert(
                v,
                Fault::Malicious {
                    script: random_script(&mut rng, cfg.protocol, k, universe),
                },
            );
        } else {
            faults.insert(
                v,
                Fault::Crash {
                    at: rng.gen_range(0..=30),
                },
            );
        }
    }

    let correct: Vec<NodeId> = universe
        .iter()
        .filter(|v| !faults.contains_key(v))
        .collect();
    let mut views: BTreeMap<NodeId, BTreeMap<NodeId, Vec<NodeSet>>> = BTreeMap::new();
    for (f, fault) in &faults {
        if matches!(fault, Fault::Malicious { .. }) && rng.gen_bool(0.5) {
            for v in &correct {
                let list = vec![random_subset(&mut rng, *f, universe)];
                views.entry(*v).or_default().insert(*f, list);
            }
        }
    }

    let proposals = universe
        .iter()
        .filter(|v| !matches!(faults.get(v), Some(Fault::Malicious { .. })))
        .map(|v| {
            let input = match cfg.protocol {
                ProtocolKind::Fv => Input::Vote(rng.gen_bool(0.5)),
                _ => Input::Value(Value(rng.gen_range(1..=k))),
            };
            (v, input)
        })
        .collect();

    let delta = rng.gen_range(1..=3);
    let timing = Timing {
        gst: rng.gen_range(0..=30),
        delta,
        pre_gst_max: rng.gen_range(delta..=10),
        mode: DelayMode::Random,
        timeout_base: rng.gen_range(8..=16),
        skew: rng.gen_range(0..=3),
        max_time: cfg.max_time,
    };

    Scenario {
        name: format!("corpus-{}-{index:04}", cfg.seed),
        protocol: cfg.protocol,
        nodes: n,
        values: k,
        system,
        views,
        faults,
        proposals,
        timing,
        seed: rng.gen(),
    }
}

pub fn generate(cfg: &CorpusConfig, count: usize) -> Vec<Scenario> {
    (0..count).map(|i| random_scenario(cfg, i)).collect()
}
