use std::time::Duration;

use nextrate::pool::{worker_pool_execute, WorkerPool};
use nextrate::verify::random_parallel_config;
use nextrate_core::exec::{Executor, Sequential};
use nextrate_core::inference::{parse_config, plan_tree};
use proptest::prelude::*;

#[test]
fn one_worker_runs_in_id_order() {
    let tree = plan_tree(&parse_config("f(6,12,24)m(1,2,4)").unwrap(), 64).unwrap();
    let (ids, trace) = worker_pool_execute(&tree, 1, &|n| Ok(n.id)).unwrap();
    assert_eq!(ids, (0..7).collect::<Vec<_>>());
    let mut by_start: Vec<_> = trace.spans.iter().map(|s| (s.start, s.node)).collect();
    by_start.sort();
    assert_eq!(by_start.iter().map(|x| x.1).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
    assert_eq!(trace.peak_concurrency, 1);
}

#[test]
fn last_stage_runs_four_wide() {
    let tree = plan_tree(&parse_config("f(6,12,24)m(1,2,4)").unwrap(), 64).unwrap();
    let (_, trace) = worker_pool_execute(&tree, 4, &|_| {
        std::thread::sleep(Duration::from_millis(60));
        Ok(())
    })
    .unwrap();
    assert_eq!(trace.stage_peaks, vec![1, 2, 4]);
    assert_eq!(trace.peak_concurrency, 4);
}

#[test]
fn failures_stop_the_run() {
    let tree = plan_tree(&parse_config("f(6,12,24)m(1,2,4)").unwrap(), 64).unwrap();
    let r = worker_pool_execute(&tree, 3, &|n| {
        if n.id == 1 {
            Err(nextrate_core::Error::Config(format!("node {} failed", n.id)))
        } else {
            Ok(())
        }
    });
    assert_eq!(r.unwrap_err().to_string(), "invalid configuration: node 1 failed");
}

#[test]
fn executor_keeps_job_order() {
    let f = |i: usize| (i * 7919) % 13;
    let a = Sequential.map(50, &f);
    for w in [1, 2, 8] {
        assert_eq!(WorkerPool::new(w).unwrap().map(50, &f), a);
    }
    assert!(WorkerPool::new(0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn children_start_after_parents(seed in 0u64..10_000, workers in 1usize..6) {
        let (cfg, n) = random_parallel_config(seed);
        let tree = plan_tree(&cfg, n).unwrap();
        let (_, trace) = worker_pool_execute(&tree, workers, &|_| Ok(())).unwrap();
        for &(p, c) in &tree.edges {
            prop_assert!(trace.spans[c].start > trace.spans[p].end);
        }
        prop_assert!(trace.peak_concurrency <= workers);
    }
}
