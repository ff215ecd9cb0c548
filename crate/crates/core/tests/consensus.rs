use scp_core::ballot::Value;
use scp_core::corpus::{generate, CorpusConfig};
use scp_core::golden;
use scp_core::scenario::{ProtocolKind, Scenario};
use scp_core::sim::{self, Simulation};
use scp_core::trace::{EventKind, SimEvent, Trace};
use scp_core::verdicts::{self, Status};

fn corpus(protocol: ProtocolKind, seed: u64, count: usize) -> Vec<Scenario> {
    let cfg = CorpusConfig {
        protocol,
        seed,
        nodes: 6,
        max_faulty: 2,
        max_malicious: 2,
        ..CorpusConfig::default()
    };
    generate(&cfg, count)
}

fn status(r: &verdicts::Report, p: &str) -> Status {
    r.get(p).unwrap_or_else(|| panic!("no verdict {p}")).status
}

#[test]
fn consensus_campaigns_hold() {
    for protocol in [ProtocolKind::Cscp, ProtocolKind::Ascp] {
        for s in corpus(protocol, 31, 150) {
            let t = sim::run(&s).into_trace();
            let r = verdicts::check(&s, &t).unwrap();
            let fails: Vec<String> = r.failures().map(ToString::to_string).collect();
            assert!(fails.is_empty(), "{}: {fails:?}", s.name);
            assert_eq!(status(&r, "integrity"), Status::Pass);
            assert_eq!(status(&r, "agreement"), Status::Pass);
            let wv = status(&r, "weak-validity");
            if s.malicious().is_empty() {
                assert_eq!(wv, Status::Pass, "{}", s.name);
            } else {
                assert_eq!(wv, Status::NotApplicable);
            }
        }
    }
}

#[test]
fn voting_campaign_holds() {
    for s in corpus(ProtocolKind::Fv, 32, 150) {
        let t = sim::run(&s).into_trace();
        let r = verdicts::check(&s, &t).unwrap();
        let fails: Vec<String> = r.failures().map(ToString::to_string).collect();
        assert!(fails.is_empty(), "{}: {fails:?}", s.name);
    }
}

#[test]
fn intact_nodes_decide_once_malicious_nodes_stop() {
    let mut checked = 0;
    for (n, s) in corpus(ProtocolKind::Cscp, 33, 100).into_iter().enumerate() {
        let end = sim::run(&s).now();
        let at = end * (n as u64 % 4) / 4;
        let mut cp = Simulation::new(&s);
        cp.run_until(at);
        for i in s.subjective().unwrap().maximal_intact_sets().unwrap() {
            let rep = sim::check_non_blocking(&cp, i);
            assert!(rep.holds(), "{} at {at}: {rep:?}", s.name);
            checked += 1;
        }
    }
    assert!(checked >= 40, "only {checked} checkpoints had intact sets");
}

#[test]
fn budget_grows_with_rounds() {
    let s = golden::find("cscp-example").unwrap().scenario().unwrap();
    let a = sim::liveness_budget(&s.timing, 1, 1);
    let b = sim::liveness_budget(&s.timing, 1, 5);
    assert!(a > 0 && b > a);
}

fn golden_trace() -> (Scenario, Trace) {
    let case = golden::find("cscp-example").unwrap();
    (case.scenario().unwrap(), case.run(None).unwrap().trace)
}

/// Inserts `kind` at `node` just before the closing event, renumbering it.
fn append(t: &mut Trace, node: scp_core::fbqs::NodeId, kind: EventKind) -> u64 {
    let end = t.events.pop().unwrap();
    let seq = end.seq;
    t.events.push(SimEvent {
        seq,
        time: end.time,
        node: Some(node),
        kind,
    });
    t.events.push(SimEvent {
        seq: seq + 1,
        ..end
    });
    seq
}

#[test]
fn double_decide_fails_integrity_at_its_seq() {
    let (s, mut t) = golden_trace();
    let first = t
        .events
        .iter()
        .find(|e| matches!(e.kind, EventKind::Decide(_)))
        .unwrap()
        .clone();
    let seq = append(&mut t, first.node.unwrap(), first.kind.clone());
    let r = verdicts::check(&s, &t).unwrap();
    let v = r.get("integrity").unwrap();
    assert_eq!(v.status, Status::Fail);
    assert_eq!(v.witnesses.last(), Some(&seq));
}

#[test]
fn conflicting_decision_fails_agreement() {
    let (s, mut t) = golden_trace();
    let e = t
        .events
        .iter_mut()
        .find(|e| matches!(e.kind, EventKind::Decide(_)))
        .unwrap();
    e.kind = EventKind::Decide(Value(1));
    let seq = e.seq;
    let r = verdicts::check(&s, &t).unwrap();
    let v = r.get("agreement").unwrap();
    assert_eq!(v.status, Status::Fail);
    assert!(v.witnesses.contains(&seq));
}

#[test]
fn unproposed_decision_fails_weak_validity() {
    let s = corpus(ProtocolKind::Cscp, 34, 40)
        .into_iter()
        .find(|s| s.malicious().is_empty() && s.values >= 3)
        .expect("an honest scenario");
    let mut t = sim::run(&s).into_trace();
    let proposed = s.proposed_values(s.correct());
    let e = t
        .events
        .iter_mut()
        .find(|e| matches!(e.kind, EventKind::Decide(_)))
        .expect("a decision");
    let other = (1..=s.values)
        .map(Value)
        .find(|x| !proposed.contains(x))
        .expect("an unproposed value");
    e.kind = EventKind::Decide(other);
    let seq = e.seq;
    let r = verdicts::check(&s, &t).unwrap();
    let v = r.get("weak-validity").unwrap();
    assert_eq!(v.status, Status::Fail);
    assert_eq!(v.witnesses, vec![seq]);
}

#[test]
fn time_limit_leaves_liveness_open() {
    let (mut s, _) = golden_trace();
    s.timing.max_time = 3;
    let t = sim::run(&s).into_trace();
    let r = verdicts::check(&s, &t).unwrap();
    assert!(r.ok());
    assert_eq!(status(&r, "non-blocking"), Status::Inconclusive);
    assert_eq!(status(&r, "agreement"), Status::Pass);
}
