mod common;

use common::{quorums_oracle, random_subjective, set};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scp_core::corpus::random_fbqs;
use scp_core::fbqs::{Fbqs, FbqsError, NodeSet};

fn system(seed: u64, n: usize) -> Fbqs {
    random_fbqs(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn enumeration_matches_definition(seed in any::<u64>(), n in 1usize..=6) {
        let s = system(seed, n);
        let mut got = s.enumerate_quorums().unwrap();
        got.sort();
        prop_assert_eq!(got, quorums_oracle(&s));
    }

    #[test]
    fn quorums_are_closed_under_union(seed in any::<u64>(), n in 1usize..=6) {
        let s = system(seed, n);
        let qs = quorums_oracle(&s);
        for a in &qs {
            for b in &qs {
                prop_assert!(s.is_quorum(a.union(*b)));
            }
        }
    }

    #[test]
    fn greatest_quorum_is_union_of_contained_quorums(seed in any::<u64>(), n in 1usize..=6, bits in any::<u64>()) {
        let s = system(seed, n);
        let within = NodeSet::from_bits(bits).intersection(s.universe());
        let want = quorums_oracle(&s)
            .into_iter()
            .filter(|q| q.is_subset(within))
            .fold(NodeSet::default(), NodeSet::union);
        prop_assert_eq!(s.greatest_quorum_within(within), want);
        for v in s.universe().iter() {
            prop_assert_eq!(s.has_quorum_with(v, within), want.contains(v));
        }
    }

    #[test]
    fn v_blocking_matches_definition(seed in any::<u64>(), n in 1usize..=6, bits in any::<u64>()) {
        let s = system(seed, n);
        let b = NodeSet::from_bits(bits).intersection(s.universe());
        for v in s.universe().iter() {
            let want = s.slices(v).iter().all(|q| q.intersects(b));
            prop_assert_eq!(s.is_v_blocking(v, b), want);
        }
    }

    #[test]
    fn minimal_quorums_and_intersection(seed in any::<u64>(), n in 1usize..=6) {
        let s = system(seed, n);
        let all = quorums_oracle(&s);
        let mut want: Vec<NodeSet> = all
            .iter()
            .copied()
            .filter(|q| !all.iter().any(|p| p != q && p.is_subset(*q)))
            .collect();
        want.sort();
        let mut got = s.minimal_quorums().unwrap();
        got.sort();
        prop_assert_eq!(got, want);
        let pairwise = all.iter().all(|a| all.iter().all(|b| a.intersects(*b)));
        prop_assert_eq!(s.has_quorum_intersection().unwrap(), pairwise);
    }

    #[test]
    fn intact_set_lemmas_hold(seed in any::<u64>()) {
        let r = random_subjective(seed, 5);
        let bad = common::lemma_violations(&r);
        prop_assert!(bad.is_empty(), "{:?}", bad);
    }

    #[test]
    fn projection_to_universe_is_identity(seed in any::<u64>(), n in 1usize..=6) {
        let s = system(seed, n);
        let p = s.project(s.universe());
        for v in s.universe().iter() {
            prop_assert_eq!(p.slices(v), s.slices(v));
        }
    }
}

#[test]
fn node_set_text_and_order() {
    let s: NodeSet = "{v2,v1,v4}".parse().unwrap();
    assert_eq!(s, set(&[1, 2, 4]));
    assert_eq!(s.to_string(), "{v1,v2,v4}");
    let mut sets = [
        set(&[1, 2]),
        set(&[4]),
        set(&[1, 2, 3]),
        set(&[3]),
        set(&[2, 3]),
    ];
    sets.sort();
    let text: Vec<String> = sets.iter().map(ToString::to_string).collect();
    assert_eq!(text, ["{v3}", "{v4}", "{v1,v2}", "{v2,v3}", "{v1,v2,v3}"]);
    assert!("{v0}".parse::<NodeSet>().is_err());
}

#[test]
fn enumeration_refuses_large_systems() {
    let n = 13;
    let all = NodeSet::first(n);
    let lists: Vec<Vec<NodeSet>> = (0..n).map(|_| vec![all]).collect();
    let s = Fbqs::from_lists(&lists).unwrap();
    assert!(matches!(
        s.enumerate_quorums(),
        Err(FbqsError::Capacity { .. })
    ));
    assert!(s.maximal_intact_sets(all).is_err());
    // the fixpoint does not enumerate
    assert_eq!(s.greatest_quorum_within(all), all);
}

#[test]
fn slices_must_contain_their_node() {
    assert!(matches!(
        Fbqs::from_lists(&[vec![set(&[2])], vec![set(&[2])]]),
        Err(FbqsError::SliceMissingSelf { .. })
    ));
    assert!(matches!(
        Fbqs::from_lists(&[vec![]]),
        Err(FbqsError::NoSlices(_))
    ));
}

#[test]
fn no_correct_nodes_means_no_intact_sets() {
    let s = Fbqs::from_lists(&[vec![set(&[1, 2])], vec![set(&[1, 2])]]).unwrap();
    assert!(s
        .maximal_intact_sets(NodeSet::default())
        .unwrap()
        .is_empty());
}
