//! Job execution strategy shared by training and generation.
//!
//! Both callers only ever map independent jobs to results and consume the
//! results in job order, so any executor yields identical bits.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Runs `f(0..jobs)` and returns the results in job order.
    fn map<R: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        (0..jobs).map(f).collect()
    }
}

/// Runs jobs in a fixed shuffled order, then restores job order. Useful to
/// show that results do not depend on dispatch order.
#[derive(Debug, Clone)]
pub struct Permuted {
    pub order_seed: u64,
}

impl Executor for Permuted {
    fn map<R: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        let mut order: Vec<usize> = (0..jobs).collect();
        let mut state = self.order_seed | 1;
        for i in (1..jobs).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let mut slots: Vec<Option<R>> = (0..jobs).map(|_| None).collect();
        for i in order {
            slots[i] = Some(f(i));
        }
        slots.into_iter().map(|s| s.expect("every job ran")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_job_order() {
        let f = |i: usize| i * i;
        let a = Sequential.map(9, &f);
        let b = Permuted { order_seed: 42 }.map(9, &f);
        assert_eq!(a, b);
        assert_eq!(a[3], 9);
    }
}
