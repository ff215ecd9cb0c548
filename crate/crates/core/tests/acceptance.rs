//! Acceptance run: one line per criterion. Every criterion runs even when an
//! earlier one fails; the exit status is non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::cells::{cell_mismatch, ABSTRACT_ROWS, CONCRETE_ROWS, FV_ROWS, INTACT};
use common::{covers_oracle, lemma_violations, random_subjective, set};
use scp_core::ballot::{ballots_up_to, prep_covers, Ballot, Value};
use scp_core::corpus::{generate, CorpusConfig};
use scp_core::fbqs::{NodeId, NodeSet};
use scp_core::golden::{self, GoldenOutcome};
use scp_core::refine::{self, check_abstract, project, sigma};
use scp_core::scenario::{ProtocolKind, Scenario};
use scp_core::sim::{self, Simulation};
use scp_core::trace::{EventKind, SimEvent, Trace};
use scp_core::verdicts::{self, Status};

const SPLIT_QUORUMS: usize = 9;
const DIGEST_SEEDS: [u64; 3] = [1, 2, 3];
const REFINE_SCENARIOS: usize = 50;
const REFINE_SEED: u64 = 600;
const REFINE_BUDGET: Duration = Duration::from_secs(120);
const LEMMA_SYSTEMS: u64 = 200;
const LEMMA_MAX_NODES: usize = 6;
const COVER_MAX_ROUND: u32 = 5;
const COVER_MAX_K: u32 = 4;
const CONSENSUS_SCENARIOS: usize = 100;
const CONSENSUS_SEED: u64 = 900;
const CHECKPOINTS: usize = 25;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_golden(name: &str) -> Result<(Scenario, GoldenOutcome), String> {
    let case = golden::find(name).map_err(|e| e.to_string())?;
    let s = case.scenario().map_err(|e| e.to_string())?;
    let o = case.run(None).map_err(|e| e.to_string())?;
    Ok((s, o))
}

fn passes(r: &verdicts::Report, props: &[&str]) -> Result<(), String> {
    for p in props {
        let st = r.get(p).map(|v| v.status);
        ensure(st == Some(Status::Pass), || format!("{p} is {st:?}"))?;
    }
    Ok(())
}

fn decisions_of(trace: &Trace, nodes: NodeSet) -> BTreeMap<NodeId, Value> {
    refine::decisions(trace)
        .into_iter()
        .filter(|(v, _)| nodes.contains(*v))
        .collect()
}

fn all_decide(trace: &Trace, nodes: NodeSet, x: u32) -> Result<(), String> {
    let d = decisions_of(trace, nodes);
    ensure(
        d.len() == nodes.len() && d.values().all(|v| *v == Value(x)),
        || format!("decisions {d:?}, want {x} at {nodes}"),
    )
}

fn c1_quorums() -> Outcome {
    let (s, _) = run_golden("split-system")?;
    let q = s.system.enumerate_quorums().map_err(|e| e.to_string())?;
    ensure(q.len() == SPLIT_QUORUMS, || format!("{} quorums", q.len()))?;
    Ok(format!("{} quorums", q.len()))
}

fn c2_intact() -> Outcome {
    let mut out = Vec::new();
    for (name, want) in [
        ("split-system", vec![set(&[4]), set(&[1, 2])]),
        ("threefplusone-f1", vec![set(&[1, 2, 4])]),
    ] {
        let (s, _) = run_golden(name)?;
        ensure(s.correct() == set(&[1, 2, 4]), || {
            format!("{name}: correct {}", s.correct())
        })?;
        let mut got = s
            .subjective()
            .and_then(|sub| sub.maximal_intact_sets())
            .map_err(|e| e.to_string())?;
        got.sort();
        ensure(got == want, || format!("{name}: {got:?}"))?;
        let text: Vec<String> = got.iter().map(ToString::to_string).collect();
        out.push(format!("{name} {}", text.join(" ")));
    }
    Ok(out.join("; "))
}

fn c3_fv() -> Outcome {
    let (_, o) = run_golden("fv-example3")?;
    let delivered: BTreeMap<NodeId, bool> = o
        .trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Deliver { value, .. } => Some((e.node?, value)),
            _ => None,
        })
        .collect();
    let want: BTreeMap<NodeId, bool> = set(&[1, 2, 4]).iter().map(|v| (v, false)).collect();
    ensure(delivered == want, || format!("deliveries {delivered:?}"))?;
    passes(
        &o.report,
        &["no-duplication", "totality", "consistency", "validity"],
    )?;
    if let Some(m) = cell_mismatch(&o.trace, &["v1", "v2", "v3", "v4"], FV_ROWS) {
        return Err(m);
    }
    ensure(o.digest_matches(), || {
        format!("digest {} is not the frozen one", o.digest)
    })?;
    for seed in DIGEST_SEEDS {
        let d = golden::find("fv-example3")
            .unwrap()
            .run(Some(seed))
            .map_err(|e| e.to_string())?
            .digest;
        ensure(d == o.digest, || format!("seed {seed} gives {d}"))?;
    }
    Ok(format!(
        "deliver false at v1,v2,v4; digest {} over seeds {DIGEST_SEEDS:?}",
        &o.digest[..12]
    ))
}

fn c4_cscp() -> Outcome {
    let (s, o) = run_golden("cscp-example")?;
    if let Some(m) = cell_mismatch(&o.trace, INTACT, CONCRETE_ROWS) {
        return Err(m);
    }
    ensure(o.digest_matches(), || {
        format!("digest {} is not the frozen one", o.digest)
    })?;
    let i = set(&[1, 2, 4]);
    all_decide(&o.trace, i, 2)?;
    ensure(o.report.ok(), || {
        format!("{:?}", o.report.failures().collect::<Vec<_>>())
    })?;
    passes(
        &o.report,
        &["integrity", "agreement", "ballot-lemmas", "no-forgery"],
    )?;
    let proposed = s.proposed_values(s.correct());
    ensure(!proposed.contains(&Value(2)), || {
        format!("2 was proposed: {proposed:?}")
    })?;
    let text: Vec<String> = proposed.iter().map(ToString::to_string).collect();
    Ok(format!(
        "v1,v2,v4 decide 2; correct nodes proposed {}",
        text.join(",")
    ))
}

fn c5_ascp() -> Outcome {
    let (_, o) = run_golden("ascp-example")?;
    if let Some(m) = cell_mismatch(&o.trace, INTACT, ABSTRACT_ROWS) {
        return Err(m);
    }
    all_decide(&o.trace, set(&[1, 2, 4]), 2)?;
    ensure(o.report.ok(), || {
        format!("{:?}", o.report.failures().collect::<Vec<_>>())
    })?;
    Ok(format!(
        "{} cells match, v1,v2,v4 decide 2",
        ABSTRACT_ROWS.len()
    ))
}

fn c6_refinement() -> Outcome {
    let start = Instant::now();
    let (s, o) = run_golden("cscp-example")?;
    let r = refine::refinement_report(&o.trace, &s).map_err(|e| e.to_string())?;
    ensure(r.sets.len() == 1 && r.ok(), || format!("golden: {r}"))?;
    let cfg = CorpusConfig {
        protocol: ProtocolKind::Cscp,
        nodes: 5,
        max_faulty: 1,
        max_malicious: 1,
        seed: REFINE_SEED,
        ..CorpusConfig::default()
    };
    let scenarios = generate(&cfg, REFINE_SCENARIOS);
    let mut sets = 0;
    for sc in &scenarios {
        ensure(
            sc.nodes <= 5 && sc.values <= 3 && sc.malicious().len() <= 1,
            || format!("{} is out of range", sc.name),
        )?;
        let t = sim::run(sc).into_trace();
        let r = refine::refinement_report(&t, sc).map_err(|e| e.to_string())?;
        ensure(r.ok(), || format!("{}: {r}", sc.name))?;
        sets += r.sets.len();
    }
    let took = start.elapsed();
    ensure(took <= REFINE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "golden ok; {} scenarios, {sets} intact sets refined in {:.2}s",
        scenarios.len(),
        took.as_secs_f64()
    ))
}

fn c7_lemmas() -> Outcome {
    let mut nodes = 0;
    for seed in 0..LEMMA_SYSTEMS {
        let r = random_subjective(seed, LEMMA_MAX_NODES);
        nodes += r.base.universe().len();
        let bad = lemma_violations(&r);
        ensure(bad.is_empty(), || format!("seed {seed}: {bad:?}"))?;
    }
    Ok(format!(
        "{LEMMA_SYSTEMS} systems ({nodes} nodes), 0 violations"
    ))
}

fn c8_covers() -> Outcome {
    let mut pairs = 0;
    for k in 1..=COVER_MAX_K {
        let all = ballots_up_to(COVER_MAX_ROUND, k);
        for &bu in &all {
            for &b in &all {
                ensure(prep_covers(bu, b, k) == covers_oracle(bu, b, k), || {
                    format!("bu={bu} b={b} k={k}")
                })?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs agree"))
}

fn c9_consensus() -> Outcome {
    let cfg = CorpusConfig {
        protocol: ProtocolKind::Cscp,
        nodes: 6,
        max_faulty: 2,
        max_malicious: 1,
        seed: CONSENSUS_SEED,
        ..CorpusConfig::default()
    };
    let (mut crashy, mut malicious, mut honest, mut checkpoints) = (0, 0, 0, 0);
    for sc in generate(&cfg, CONSENSUS_SCENARIOS) {
        let full = sim::run(&sc);
        let end = full.now();
        let t = full.into_trace();
        let r = verdicts::check(&sc, &t).map_err(|e| e.to_string())?;
        passes(&r, &["integrity", "agreement"]).map_err(|e| format!("{}: {e}", sc.name))?;
        let crashed = sc.correct().len() + sc.malicious().len() < sc.nodes;
        crashy += usize::from(crashed);
        if sc.malicious().is_empty() {
            honest += 1;
            passes(&r, &["weak-validity"]).map_err(|e| format!("{}: {e}", sc.name))?;
        } else {
            malicious += 1;
        }
        let intact = sc
            .subjective()
            .and_then(|sub| sub.maximal_intact_sets())
            .map_err(|e| e.to_string())?;
        if checkpoints < CHECKPOINTS && !intact.is_empty() {
            let at = end / 2;
            let mut cp = Simulation::new(&sc);
            cp.run_until(at);
            for i in intact {
                let rep = sim::check_non_blocking(&cp, i);
                ensure(rep.holds(), || {
                    format!("{} at t={at} intact {i}: {rep:?}", sc.name)
                })?;
            }
            checkpoints += 1;
        }
    }
    ensure(crashy > 0 && malicious > 0, || {
        format!("{crashy} with crashes, {malicious} malicious")
    })?;
    ensure(checkpoints == CHECKPOINTS, || {
        format!("only {checkpoints} checkpoints")
    })?;
    Ok(format!(
        "{CONSENSUS_SCENARIOS} runs ({crashy} with crashes, {malicious} with malicious, {honest} honest); {checkpoints} checkpoints decide in budget"
    ))
}

fn c10_negative() -> Outcome {
    let (s, o) = run_golden("cscp-example")?;

    // Double decide, flagged by the integrity verdict.
    let mut t = o.trace.clone();
    let first = t
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Decide(_)))
        .cloned()
        .ok_or("no decision")?;
    let end = t.events.pop().ok_or("empty trace")?;
    let seq = end.seq;
    t.events.push(SimEvent {
        seq,
        time: end.time,
        ..first
    });
    t.events.push(SimEvent {
        seq: seq + 1,
        ..end
    });
    let r = verdicts::check(&s, &t).map_err(|e| e.to_string())?;
    let v = r.get("integrity").ok_or("no integrity verdict")?;
    ensure(
        v.status == Status::Fail && v.witnesses.last() == Some(&seq),
        || format!("double decide at seq {seq}: {v}"),
    )?;

    // Unearned deliver-batch, flagged by the abstract checker.
    let i = set(&[1, 2, 4]);
    let mut abs = sigma(&project(&o.trace, i), s.values).map_err(|e| e.to_string())?;
    check_abstract(&abs, &s, i).map_err(|e| format!("unmutated: {e}"))?;
    let at = abs
        .events
        .iter()
        .position(|e| matches!(e.kind, EventKind::DeliverBatch { value: false, .. }))
        .ok_or("no deliver-batch")?;
    abs.events[at].kind = EventKind::DeliverBatch {
        ballots: vec![Ballot::new(3, 1)],
        value: false,
    };
    let want = abs.events[at].seq;
    match check_abstract(&abs, &s, i) {
        Err(v) if v.seq == want => {}
        other => return Err(format!("unearned deliver-batch at seq {want}: {other:?}")),
    }
    Ok(format!(
        "double decide at seq {seq}, unearned deliver-batch at seq {want}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("quorum enumeration", c1_quorums),
        ("maximal intact sets", c2_intact),
        ("federated voting golden", c3_fv),
        ("concrete consensus golden", c4_cscp),
        ("abstract consensus golden", c5_ascp),
        ("refinement", c6_refinement),
        ("intact-set lemma campaign", c7_lemmas),
        ("prep_covers oracle", c8_covers),
        ("consensus campaign", c9_consensus),
        ("negative controls", c10_negative),
    ];
    let mut failed = Vec::new();
    for (n, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", n + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name}: {why}", n + 1);
                failed.push(n + 1);
            }
        }
    }
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", criteria.len());
}
