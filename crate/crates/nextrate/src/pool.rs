//! Scoped worker threads: a job-order [`Executor`] for flat maps and a
//! dependency-driven scheduler for generation trees.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, RwLock};
use std::thread;

use nextrate_core::exec::Executor;
use nextrate_core::inference::{
    collect_generation, merge_node, plan_generation, sample_node, Generation, GenerationSpec, GenerationTree,
    TreeNode,
};
use nextrate_core::multimask::MultiMaskCondition;
use nextrate_core::{Error, Real, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct WorkerPool {
    workers: usize,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        Ok(Self { workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl Executor for WorkerPool {
    fn map<R: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        if self.workers == 1 || jobs <= 1 {
            return (0..jobs).map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<R>> = (0..jobs).map(|_| None).collect();
        thread::scope(|s| {
            let handles: Vec<_> = (0..self.workers.min(jobs))
                .map(|_| {
                    s.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= jobs {
                                break done;
                            }
                            done.push((i, f(i)));
                        }
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every job ran")).collect()
    }
}

/// When a node ran, on a logical clock shared by all workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeSpan {
    pub node: usize,
    pub stage: usize,
    pub worker: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub workers: usize,
    /// Indexed by node id.
    pub spans: Vec<NodeSpan>,
    pub peak_concurrency: usize,
    /// Most nodes of each stage running at once.
    pub stage_peaks: Vec<usize>,
}

impl Trace {
    /// Every child starts after all of its parents ended.
    pub fn check(&self, tree: &GenerationTree) -> Result<()> {
        for &(p, c) in &tree.edges {
            let (ps, cs) = (&self.spans[p], &self.spans[c]);
            if cs.start <= ps.end {
                return Err(Error::Plan(format!(
                    "scheduler bug: node {c} started at {} before parent {p} ended at {}",
                    cs.start, ps.end
                )));
            }
        }
        Ok(())
    }
}

struct Board<R> {
    ready: BTreeSet<usize>,
    waiting_on: Vec<usize>,
    running: Vec<usize>,
    done: usize,
    clock: u64,
    spans: Vec<Option<NodeSpan>>,
    results: Vec<Option<R>>,
    error: Option<(usize, Error)>,
    peak: usize,
    stage_peaks: Vec<usize>,
}

/// Runs `job` on every node once its parents finished, lowest ready id
/// first, on up to `workers` threads. With one worker this is plain id
/// order, i.e. stage by stage. The first failure stops new dispatches and
/// is returned.
pub fn worker_pool_execute<R: Send>(
    tree: &GenerationTree,
    workers: usize,
    job: &(dyn Fn(&TreeNode) -> Result<R> + Sync),
) -> Result<(Vec<R>, Trace)> {
    if workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    let n = tree.nodes.len();
    let mut waiting_on = vec![0; n];
    for &(_, c) in &tree.edges {
        waiting_on[c] += 1;
    }
    let board = Mutex::new(Board {
        ready: (0..n).filter(|&i| waiting_on[i] == 0).collect(),
        waiting_on,
        running: vec![0; tree.stage_count()],
        done: 0,
        clock: 0,
        spans: vec![None; n],
        results: (0..n).map(|_| None).collect(),
        error: None,
        peak: 0,
        stage_peaks: vec![0; tree.stage_count()],
    });
    let wake = Condvar::new();
    let worker = |w: usize| {
        let mut b = board.lock().expect("board lock");
        loop {
            if b.done == n || (b.error.is_some() && b.running.iter().sum::<usize>() == 0) {
                wake.notify_all();
                return;
            }
            let next = if b.error.is_none() { b.ready.pop_first() } else { None };
            let Some(id) = next else {
                b = wake.wait(b).expect("board lock");
                continue;
            };
            let stage = tree.nodes[id].stage;
            b.clock += 1;
            let start = b.clock;
            b.running[stage] += 1;
            let now: usize = b.running.iter().sum();
            b.peak = b.peak.max(now);
            b.stage_peaks[stage] = b.stage_peaks[stage].max(b.running[stage]);
            drop(b);

            let out = job(&tree.nodes[id]);

            b = board.lock().expect("board lock");
            b.clock += 1;
            let end = b.clock;
            b.running[stage] -= 1;
            b.spans[id] = Some(NodeSpan {
                node: id,
                stage,
                worker: w,
                start,
                end,
            });
            match out {
                Ok(r) => {
                    b.results[id] = Some(r);
                    b.done += 1;
                    for c in tree.children(id) {
                        b.waiting_on[c] -= 1;
                        if b.waiting_on[c] == 0 {
                            b.ready.insert(c);
                        }
                    }
                }
                Err(e) => {
                    if b.error.as_ref().is_none_or(|(first, _)| id < *first) {
                        b.error = Some((id, e));
                    }
                }
            }
            wake.notify_all();
        }
    };
    if workers == 1 {
        worker(0);
    } else {
        thread::scope(|s| {
            for w in 0..workers {
                let worker = &worker;
                s.spawn(move || worker(w));
            }
        });
    }
    let b = board.into_inner().expect("board lock");
    if let Some((_, e)) = b.error {
        return Err(e);
    }
    let trace = Trace {
        workers,
        spans: b.spans.into_iter().map(|s| s.expect("every node ran")).collect(),
        peak_concurrency: b.peak,
        stage_peaks: b.stage_peaks,
    };
    trace.check(tree)?;
    let results = b.results.into_iter().map(|r| r.expect("every node ran")).collect();
    Ok((results, trace))
}

/// Generation driven by the tree's edges instead of stage barriers: a
/// segment starts as soon as the segments holding its anchors are done.
/// Output bits match [`nextrate_core::inference::generate`].
pub fn generate_parallel<T: Real>(
    spec: &GenerationSpec<'_, T>,
    initial_cond: &MultiMaskCondition<T>,
    n_frames: usize,
    seed: u64,
    workers: usize,
) -> Result<(Generation<T>, Trace)> {
    let tree = plan_generation(spec, initial_cond, n_frames)?;
    let canvas: RwLock<BTreeMap<usize, Vec<T>>> = RwLock::new(BTreeMap::new());
    let job = |node: &TreeNode| -> Result<()> {
        let anchors: BTreeMap<usize, Vec<T>> = {
            let c = canvas.read().expect("canvas lock");
            node.anchors.iter().filter_map(|p| c.get(p).map(|f| (*p, f.clone()))).collect()
        };
        let out = sample_node(spec, node, tree.steps[node.stage], &anchors, initial_cond, seed)?;
        merge_node(&mut canvas.write().expect("canvas lock"), node, &out);
        Ok(())
    };
    let (_, trace) = worker_pool_execute(&tree, workers, &job)?;
    let canvas = canvas.into_inner().expect("canvas lock");
    Ok((collect_generation(tree, &canvas)?, trace))
}
