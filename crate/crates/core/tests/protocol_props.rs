mod common;

use common::{connected_graph, drive, path, star};
use proptest::prelude::*;
use prunesim::graph::{bfs_distances, exact_leader};
use prunesim::protocol::{Status, Variant};
use prunesim::score::argmax;
use prunesim::Score;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn delta_follows_recurrence(g in connected_graph(30), d in 1u32..10) {
        for variant in Variant::ALL {
            let history = drive(&g, d, variant);
            for w in history.windows(2) {
                for (before, after) in w[0].iter().zip(&w[1]) {
                    if after.iteration() > before.iteration() {
                        let t = after.iteration() as u64;
                        prop_assert_eq!(after.delta(), before.delta() + t * after.new_nodes().len() as u64);
                    } else {
                        prop_assert_eq!(after.delta(), before.delta());
                    }
                }
            }
        }
    }

    #[test]
    fn views_only_grow(g in connected_graph(30), d in 1u32..10) {
        let history = drive(&g, d, Variant::Original);
        for w in history.windows(2) {
            for (before, after) in w[0].iter().zip(&w[1]) {
                prop_assert!(before.view().iter().all(|id| after.view().contains(id)));
                prop_assert!(after.view().len() >= before.view().len());
            }
        }
    }

    #[test]
    fn discoveries_are_never_closer_than_their_iteration(g in connected_graph(30), d in 1u32..10) {
        let history = drive(&g, d, Variant::Original);
        let last = history.last().unwrap();
        for s in last {
            let dist = bfs_distances(&g, s.node_id());
            let sum: u64 = s.view().iter().map(|v| dist[v as usize] as u64).sum();
            // ids found at iteration t are weighted t but lie at most t + 1 hops away
            let slack = (s.view().len() - s.neighbors().len()) as u64;
            prop_assert!(s.delta() + slack >= sum, "node {} delta {} slack {} sum {}", s.node_id(), s.delta(), slack, sum);
        }
        for round in &history {
            for s in round {
                let dist = bfs_distances(&g, s.node_id());
                for &v in s.new_nodes() {
                    prop_assert!(dist[v as usize] <= s.iteration() + 1);
                }
            }
        }
    }

    #[test]
    fn every_node_terminates_within_cap(g in connected_graph(40), d in 1u32..15) {
        for variant in Variant::ALL {
            let history = drive(&g, d, variant);
            for s in history.last().unwrap() {
                prop_assert_eq!(s.status(), Status::Ended);
                prop_assert!(s.final_iteration().unwrap_or(0) <= d);
                let e = s.closeness_estimate().unwrap();
                prop_assert!(e <= Score::new(1, 1));
            }
        }
    }

    #[test]
    fn variants_agree(g in connected_graph(40), d in 1u32..15) {
        let a = drive(&g, d, Variant::Original);
        let b = drive(&g, d, Variant::Enhanced);
        let est = |h: &Vec<Vec<prunesim::NodeState>>| -> Vec<Score> {
            h.last().unwrap().iter().map(|s| s.closeness_estimate().unwrap()).collect()
        };
        let (ea, eb) = (est(&a), est(&b));
        for i in 0..g.node_count() {
            if g.degree(i as u32) == 1 {
                prop_assert!(ea[i].is_zero());
                prop_assert!(eb[i].is_zero());
            } else {
                prop_assert_eq!(ea[i], eb[i]);
            }
        }
        prop_assert_eq!(argmax(&ea), argmax(&eb));
    }
}

#[test]
fn path_center_found_exactly() {
    for n in [3usize, 5, 7] {
        let g = path(n);
        let h = drive(&g, 12, Variant::Original);
        let est: Vec<Score> = h.last().unwrap().iter().map(|s| s.closeness_estimate().unwrap()).collect();
        assert_eq!(argmax(&est).unwrap() as u32, exact_leader(&g));
    }
}

#[test]
fn star_leaves_are_pruned() {
    for variant in Variant::ALL {
        let h = drive(&star(5), 12, variant);
        let last = h.last().unwrap();
        assert!(last[1..].iter().all(|s| s.closeness_estimate().unwrap().is_zero()));
        assert!(!last[0].closeness_estimate().unwrap().is_zero());
    }
}
