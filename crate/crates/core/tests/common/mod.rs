//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

pub mod cells;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scp_core::ballot::Ballot;
use scp_core::corpus::random_fbqs;
use scp_core::fbqs::{Fbqs, NodeId, NodeSet, SubjectiveFbqs};

pub fn set(ids: &[u8]) -> NodeSet {
    ids.iter().map(|i| NodeId(i - 1)).collect()
}

/// Quorums straight from the definition: non-empty, and holding a slice of
/// every member.
pub fn quorums_oracle(s: &Fbqs) -> Vec<NodeSet> {
    let mut out: Vec<NodeSet> = s
        .universe()
        .subsets()
        .filter(|u| !u.is_empty())
        .filter(|u| {
            u.iter()
                .all(|v| s.slices(v).iter().any(|q| q.is_subset(*u)))
        })
        .collect();
    out.sort();
    out
}

/// Intact from the definition: a quorum of correct nodes in which every two
/// quorums of the system cut down to `i` intersect.
pub fn intact_oracle(s: &Fbqs, correct: NodeSet, i: NodeSet) -> bool {
    if i.is_empty() || !i.is_subset(correct) {
        return false;
    }
    if !i.iter().all(|v| s.slices(v).iter().any(|q| q.is_subset(i))) {
        return false;
    }
    let projected: Vec<NodeSet> = i
        .subsets()
        .filter(|u| !u.is_empty())
        .filter(|u| {
            u.iter()
                .all(|v| s.slices(v).iter().any(|q| q.intersection(i).is_subset(*u)))
        })
        .collect();
    projected
        .iter()
        .all(|a| projected.iter().all(|b| a.intersects(*b)))
}

pub struct RandomSubjective {
    pub base: Fbqs,
    pub correct: NodeSet,
    pub views: BTreeMap<NodeId, Fbqs>,
}

impl RandomSubjective {
    pub fn subjective(&self) -> SubjectiveFbqs {
        SubjectiveFbqs::new(self.correct, self.views.clone()).unwrap()
    }
}

/// A random system over `2..=max_nodes` nodes, a random faulty set, and for
/// each correct node a view in which faulty nodes may show random slices.
pub fn random_subjective(seed: u64, max_nodes: usize) -> RandomSubjective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let base = random_fbqs(&mut rng, n);
    let universe = base.universe();
    let correct: NodeSet = universe.iter().filter(|_| rng.gen_bool(0.75)).collect();
    let faulty = universe.difference(correct);
    let views = correct
        .iter()
        .map(|viewer| {
            let mut view = base.clone();
            for f in faulty.iter() {
                if rng.gen_bool(0.5) {
                    let slice: NodeSet = universe
                        .iter()
                        .filter(|u| *u == f || rng.gen_bool(0.5))
                        .collect();
                    view = view.with_slices(f, vec![slice]).unwrap();
                }
            }
            (viewer, view)
        })
        .collect();
    RandomSubjective {
        base,
        correct,
        views,
    }
}

/// Violations of the intact-set lemmas on one random subjective system.
pub fn lemma_violations(r: &RandomSubjective) -> Vec<String> {
    let mut bad = Vec::new();
    let sub = r.subjective();
    let universe = r.base.universe();
    let intact: Vec<NodeSet> = universe
        .subsets()
        .filter(|i| sub.is_intact_set(*i).unwrap())
        .collect();

    for (viewer, view) in &r.views {
        for i in universe.subsets() {
            if view.is_intact_set(r.correct, i).unwrap() != intact.contains(&i) {
                bad.push(format!("view of {viewer} disagrees on {i}"));
            }
            if view.is_intact_set(r.correct, i).unwrap() != intact_oracle(view, r.correct, i) {
                bad.push(format!("intact check differs from the definition on {i}"));
            }
        }
    }

    let all_quorums: Vec<NodeSet> = r
        .views
        .values()
        .flat_map(|v| v.enumerate_quorums().unwrap())
        .collect();
    for i in &intact {
        for u1 in all_quorums.iter().filter(|u| u.intersects(*i)) {
            for u2 in all_quorums.iter().filter(|u| u.intersects(*i)) {
                if !u1.intersection(*u2).intersects(*i) {
                    bad.push(format!("quorums {u1} and {u2} meet {i} but not inside it"));
                }
            }
        }
        for j in &intact {
            if i.intersects(*j) && !sub.is_intact_set(i.union(*j)).unwrap() {
                bad.push(format!("union of intact {i} and {j} is not intact"));
            }
        }
        let outside = universe.difference(*i);
        for v in i.iter() {
            for view in r.views.values() {
                for b in outside.subsets() {
                    if view.is_v_blocking(v, b) {
                        bad.push(format!("{b} is {v}-blocking but misses {i}"));
                    }
                }
            }
        }
    }

    let maximal = sub.maximal_intact_sets().unwrap();
    let expected: Vec<NodeSet> = intact
        .iter()
        .copied()
        .filter(|i| !intact.iter().any(|j| j != i && i.is_subset(*j)))
        .collect();
    let mut sorted_expected = expected.clone();
    sorted_expected.sort();
    let mut sorted_max = maximal.clone();
    sorted_max.sort();
    if sorted_max != sorted_expected {
        bad.push(format!(
            "maximal intact sets {maximal:?}, expected {expected:?}"
        ));
    }
    for (a, i) in maximal.iter().enumerate() {
        for j in &maximal[a + 1..] {
            if i.intersects(*j) {
                bad.push(format!("maximal intact sets {i} and {j} overlap"));
            }
        }
    }
    bad
}

/// `(round, value)` with the null ballot as `(0, 0)`; tuple order is ballot
/// order.
fn raw(b: Ballot) -> (u32, u32) {
    match b {
        Ballot::Null => (0, 0),
        Ballot::Round { n, x } => (n, x.0),
    }
}

/// Brute force over raw pairs: every ballot that is below and incompatible
/// with `b` is also below and incompatible with `bu`.
pub fn covers_oracle(bu: Ballot, b: Ballot, k: u32) -> bool {
    let (bu, b) = (raw(bu), raw(b));
    let lic = |c: (u32, u32), d: (u32, u32)| c < d && (c.0 == 0 || c.1 != d.1);
    let top = bu.0.max(b.0);
    std::iter::once((0, 0))
        .chain((1..=top).flat_map(|n| (1..=k).map(move |x| (n, x))))
        .filter(|c| lic(*c, b))
        .all(|c| lic(c, bu))
}
