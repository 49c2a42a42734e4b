use std::collections::BTreeSet;

use nextrate_core::inference::{length_quantum, on_grid, parse_config, plan_tree, ParallelConfig};
use nextrate_core::temporal::{subsample_indices, RateLevel};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = ParallelConfig> {
    (1usize..=4, 0u32..=2, proptest::collection::vec(0u32..=2, 3), proptest::collection::vec(0u32..=3, 3))
        .prop_filter_map("valid", |(k, base, jumps, segs)| {
            let mut fps = vec![3u32 << base];
            let mut m = vec![1usize];
            for s in 1..k {
                let f = fps[s - 1] << (jumps[s - 1] + 1);
                fps.push(f);
                m.push(1 << segs[s - 1]);
            }
            ParallelConfig::new(fps, m.clone(), vec![1; k]).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nodes_tile_every_level(cfg in config(), mult in 1usize..=3) {
        let q = length_quantum(&cfg);
        prop_assume!(q * mult <= 2048);
        let n = q * mult;
        let tree = plan_tree(&cfg, n).unwrap();
        for (s, &level) in tree.levels.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for node in tree.stage_nodes(s) {
                for &p in &node.positions {
                    prop_assert!(seen.insert(p), "position {} owned twice", p);
                    prop_assert!(node.interval.contains(&p));
                }
                let anchors: BTreeSet<usize> = node.anchors.iter().copied().collect();
                let news: BTreeSet<usize> = node.new_positions.iter().copied().collect();
                prop_assert!(anchors.is_disjoint(&news));
                prop_assert_eq!(anchors.len() + news.len(), node.positions.len());
                if s > 0 {
                    let coarser = tree.levels[s - 1];
                    let expect: BTreeSet<usize> =
                        node.interval.clone().filter(|&p| on_grid(p, coarser)).collect();
                    prop_assert_eq!(&anchors, &expect);
                }
            }
            let grid: BTreeSet<usize> =
                subsample_indices(n, level).unwrap().into_iter().map(|p| p - 1).collect();
            prop_assert_eq!(seen, grid);
        }
    }

    #[test]
    fn edges_only_go_down_one_stage(cfg in config()) {
        let n = length_quantum(&cfg);
        prop_assume!(n <= 2048);
        let tree = plan_tree(&cfg, n).unwrap();
        for &(p, c) in &tree.edges {
            prop_assert_eq!(tree.nodes[p].stage + 1, tree.nodes[c].stage);
        }
        for node in tree.nodes.iter().filter(|n| n.stage > 0) {
            prop_assert!(!node.parents.is_empty());
        }
    }

    #[test]
    fn subsample_identity(q in 1usize..40, i in 0u32..5, j in 0u32..5) {
        let (lo, hi) = (i.min(j), i.max(j));
        let n = q << hi;
        let fine = subsample_indices(n, RateLevel::new(lo).unwrap()).unwrap();
        let coarse = subsample_indices(n, RateLevel::new(hi).unwrap()).unwrap();
        let step = 1usize << (hi - lo);
        let picked: Vec<usize> = fine.iter().copied().skip(step - 1).step_by(step).collect();
        prop_assert_eq!(picked, coarse);
    }

    #[test]
    fn config_text_round_trips(cfg in config()) {
        let again = parse_config(&cfg.to_string()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

#[test]
fn example_stage_lengths() {
    let cfg = parse_config("f(6,12,24)m(1,2,4)").unwrap();
    let tree = plan_tree(&cfg, 64).unwrap();
    let lens: Vec<usize> = (0..3).map(|s| tree.stage_nodes(s).map(|n| n.window_len()).sum()).collect();
    assert_eq!(lens, vec![16, 32, 64]);
    assert_eq!(tree.stage_nodes(1).count(), 2);
    assert_eq!(tree.stage_nodes(2).count(), 4);
    let path = plan_tree(&parse_config("f(6,12,24)m(1,1,1)").unwrap(), 64).unwrap();
    assert_eq!(path.edges, vec![(0, 1), (1, 2)]);
}
