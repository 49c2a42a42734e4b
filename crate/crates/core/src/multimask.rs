//! Multi-Mask conditioning.
//!
//! Clean condition frames keep their temporal positions inside a zero-padded
//! sequence of the target length. That sequence and a per-frame binary mask
//! are concatenated to the noisy frames along the channel axis, so one model
//! covers text-only, first-frame, first-last-frame and continuation inputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Upper bound of the conditioned fraction drawn during training.
pub const MAX_CONDITION_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiMaskCondition<T> {
    length: usize,
    frame_dim: usize,
    entries: BTreeMap<usize, Vec<T>>,
}

impl<T: Real> MultiMaskCondition<T> {
    pub fn empty(length: usize, frame_dim: usize) -> Self {
        Self {
            length,
            frame_dim,
            entries: BTreeMap::new(),
        }
    }

    /// Conditions on `positions` of a `[T × D]` clean sequence.
    pub fn from_frames(frames: &Tensor<T>, positions: &[usize]) -> Result<Self> {
        let mut c = Self::empty(frames.rows(), frames.last_dim());
        for &p in positions {
            if p >= frames.rows() {
                return Err(Error::contract(format!(
                    "condition position {p} outside length {}",
                    frames.rows()
                )));
            }
            c.entries.insert(p, frames.row(p).to_vec());
        }
        Ok(c)
    }

    pub fn insert(&mut self, position: usize, frame: Vec<T>) -> Result<()> {
        if position >= self.length {
            return Err(Error::contract(format!(
                "condition position {position} outside length {}",
                self.length
            )));
        }
        if frame.len() != self.frame_dim {
            return Err(Error::Dimension {
                op: "condition frame",
                lhs: alloc::vec![self.frame_dim],
                rhs: alloc::vec![frame.len()],
            });
        }
        self.entries.insert(position, frame);
        Ok(())
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<usize, Vec<T>> {
        &self.entries
    }

    pub fn positions(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn get(&self, position: usize) -> Option<&[T]> {
        self.entries.get(&position).map(|v| v.as_slice())
    }

    pub fn mask(&self) -> Vec<u8> {
        let mut m = alloc::vec![0u8; self.length];
        for &p in self.entries.keys() {
            m[p] = 1;
        }
        m
    }

    /// Zero-padded `[T × D]` condition block.
    pub fn materialize(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(&[self.length, self.frame_dim]);
        for (&p, f) in &self.entries {
            t.row_mut(p).copy_from_slice(f);
        }
        t
    }

    pub fn retain(&mut self, mut keep: impl FnMut(usize) -> bool) {
        self.entries.retain(|&p, _| keep(p));
    }

    pub fn cast<U: Real>(&self) -> MultiMaskCondition<U> {
        MultiMaskCondition {
            length: self.length,
            frame_dim: self.frame_dim,
            entries: self
                .entries
                .iter()
                .map(|(&p, f)| (p, f.iter().map(|&x| U::from_f64(x.to_f64())).collect()))
                .collect(),
        }
    }
}

/// Per-frame channels `noisy (D) ⊕ condition (D) ⊕ mask (1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedInput<T> {
    pub channels: Tensor<T>,
}

impl<T: Real> ConditionedInput<T> {
    pub fn frames(&self) -> usize {
        self.channels.rows()
    }

    pub fn frame_dim(&self) -> usize {
        (self.channels.last_dim() - 1) / 2
    }

    /// Positions whose mask channel is set.
    pub fn conditioned_positions(&self) -> Vec<usize> {
        let w = self.channels.last_dim();
        (0..self.frames())
            .filter(|&r| self.channels.row(r)[w - 1] != T::zero())
            .collect()
    }
}

pub fn build_conditioned_input<T: Real>(
    noisy: &Tensor<T>,
    cond: &MultiMaskCondition<T>,
) -> Result<ConditionedInput<T>> {
    let (t, d) = (noisy.rows(), noisy.last_dim());
    if noisy.shape().len() != 2 || t != cond.length || d != cond.frame_dim {
        return Err(Error::Dimension {
            op: "build_conditioned_input",
            lhs: noisy.shape().to_vec(),
            rhs: alloc::vec![cond.length, cond.frame_dim],
        });
    }
    let width = 2 * d + 1;
    let mut data = alloc::vec![T::zero(); t * width];
    for r in 0..t {
        let row = &mut data[r * width..(r + 1) * width];
        row[..d].copy_from_slice(noisy.row(r));
        if let Some(f) = cond.entries.get(&r) {
            row[d..2 * d].copy_from_slice(f);
            row[2 * d] = T::one();
        }
    }
    Ok(ConditionedInput {
        channels: Tensor::matrix(t, width, data)?,
    })
}

/// Draws `f ~ U[0, 0.15]` and returns `⌊f·T⌋` distinct positions, sorted.
pub fn sample_condition_positions<R: Rng + ?Sized>(length: usize, rng: &mut R) -> Vec<usize> {
    let f = rng.random::<f64>() * MAX_CONDITION_FRACTION;
    let count = (Float::floor(f * length as f64) as usize).min(length);
    let mut picked = index::sample(rng, length, count).into_vec();
    picked.sort_unstable();
    picked
}

pub fn sample_training_condition<T: Real, R: Rng + ?Sized>(
    frames: &Tensor<T>,
    rng: &mut R,
) -> Result<MultiMaskCondition<T>> {
    let positions = sample_condition_positions(frames.rows(), rng);
    MultiMaskCondition::from_frames(frames, &positions)
}

/// Shot starts inside a sequence; position 0 always starts the first shot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShotLayout {
    pub boundaries: Vec<usize>,
}

impl ShotLayout {
    pub fn single() -> Self {
        Self::default()
    }

    pub fn new(boundaries: Vec<usize>, length: usize) -> Result<Self> {
        let s = Self { boundaries };
        s.validate(length)?;
        Ok(s)
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        let increasing = self.boundaries.windows(2).all(|w| w[0] < w[1]);
        let in_range = self.boundaries.iter().all(|&b| b > 0 && b < length);
        if !increasing || !in_range {
            return Err(Error::contract(format!(
                "shot boundaries {:?} invalid for length {length}",
                self.boundaries
            )));
        }
        Ok(())
    }

    pub fn shot_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn shots(&self, length: usize) -> Vec<Range<usize>> {
        let mut starts = alloc::vec![0];
        starts.extend(&self.boundaries);
        let mut out = Vec::with_capacity(starts.len());
        for (i, &s) in starts.iter().enumerate() {
            let e = starts.get(i + 1).copied().unwrap_or(length);
            out.push(s..e);
        }
        out
    }

    pub fn shot_of(&self, position: usize) -> usize {
        self.boundaries.iter().filter(|&&b| b <= position).count()
    }
}

/// Removes every condition inside a random nonempty subset of shots.
/// Single-shot layouts are returned unchanged.
pub fn drop_shot_conditions<T: Real, R: Rng + ?Sized>(
    cond: &MultiMaskCondition<T>,
    shots: &ShotLayout,
    rng: &mut R,
) -> Result<MultiMaskCondition<T>> {
    shots.validate(cond.length)?;
    let n = shots.shot_count();
    if n < 2 {
        return Ok(cond.clone());
    }
    let selected = select_shots(n, rng);
    let mut out = cond.clone();
    out.retain(|p| !selected[shots.shot_of(p)]);
    Ok(out)
}

/// Uniform draw over the nonempty subsets of `n` shots.
pub fn select_shots<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<bool> {
    loop {
        let picks: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        if picks.iter().any(|&p| p) {
            return picks;
        }
    }
}

/// Replaces conditioned positions with their clean frames.
pub fn overwrite_anchors<T: Real>(
    generated: &Tensor<T>,
    cond: &MultiMaskCondition<T>,
) -> Result<Tensor<T>> {
    if generated.rows() != cond.length || generated.last_dim() != cond.frame_dim {
        return Err(Error::Dimension {
            op: "overwrite_anchors",
            lhs: generated.shape().to_vec(),
            rhs: alloc::vec![cond.length, cond.frame_dim],
        });
    }
    let mut out = generated.clone();
    for (&p, f) in &cond.entries {
        out.row_mut(p).copy_from_slice(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(t: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(t, d, (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn text_only_layout_is_all_zero() {
        let noisy = seq(6, 3, 1);
        let c = build_conditioned_input(&noisy, &MultiMaskCondition::empty(6, 3)).unwrap();
        assert_eq!(c.channels.shape(), &[6, 7]);
        for r in 0..6 {
            assert_eq!(&c.channels.row(r)[..3], noisy.row(r));
            assert!(c.channels.row(r)[3..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn first_frame_layout() {
        let clean = seq(5, 2, 2);
        let noisy = seq(5, 2, 3);
        let cond = MultiMaskCondition::from_frames(&clean, &[0]).unwrap();
        assert_eq!(cond.mask(), vec![1, 0, 0, 0, 0]);
        let c = build_conditioned_input(&noisy, &cond).unwrap();
        let mask: Vec<f64> = (0..5).map(|r| c.channels.row(r)[4]).collect();
        assert_eq!(mask, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn first_last_layout_elementwise() {
        let (t, d) = (7, 3);
        let clean = seq(t, d, 4);
        let noisy = seq(t, d, 5);
        let cond = MultiMaskCondition::from_frames(&clean, &[0, t - 1]).unwrap();
        let c = build_conditioned_input(&noisy, &cond).unwrap();
        for r in 0..t {
            let row = c.channels.row(r);
            let on = r == 0 || r == t - 1;
            for j in 0..d {
                assert_eq!(row[j], noisy.get2(r, j));
                assert_eq!(row[d + j], if on { clean.get2(r, j) } else { 0.0 });
            }
            assert_eq!(row[2 * d], if on { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let noisy = seq(5, 2, 6);
        assert!(build_conditioned_input(&noisy, &MultiMaskCondition::empty(4, 2)).is_err());
        assert!(build_conditioned_input(&noisy, &MultiMaskCondition::empty(5, 3)).is_err());
        let mut c = MultiMaskCondition::<f64>::empty(5, 2);
        assert!(c.insert(5, vec![0.0, 0.0]).is_err());
        assert!(c.insert(1, vec![0.0]).is_err());
    }

    #[test]
    fn training_condition_sampler() {
        // f < 1/T always yields an empty condition
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut saw_empty = false;
        for _ in 0..200 {
            let p = sample_condition_positions(5, &mut rng);
            assert!(p.len() <= 0);
            saw_empty |= p.is_empty();
        }
        assert!(saw_empty);

        let a = sample_condition_positions(100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_condition_positions(100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);

        // Monte-Carlo of the exact sampler: E⌊f·100⌋ = 7.0 for f ~ U[0, 0.15]
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 10_000;
        let mut total = 0usize;
        for _ in 0..draws {
            let p = sample_condition_positions(100, &mut rng);
            assert!(p.len() <= 15);
            assert!(p.windows(2).all(|w| w[0] < w[1]));
            total += p.len();
        }
        let mean = total as f64 / draws as f64;
        assert!((7.0..=8.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn shot_dropping() {
        let clean = seq(10, 2, 7);
        let shots = ShotLayout::new(vec![5], 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // conditions only in shot 1: whatever is selected, nothing outside shot 1 can remain
        let only_second = MultiMaskCondition::from_frames(&clean, &[6, 8]).unwrap();
        for _ in 0..20 {
            let out = drop_shot_conditions(&only_second, &shots, &mut rng).unwrap();
            assert!(out.positions().iter().all(|&p| p >= 5));
        }
        let both = MultiMaskCondition::from_frames(&clean, &[1, 3, 6, 8]).unwrap();
        let mut seen_second_dropped = false;
        for _ in 0..50 {
            let out = drop_shot_conditions(&both, &shots, &mut rng).unwrap();
            let pos = out.positions();
            assert_ne!(pos, both.positions(), "a nonempty subset must be dropped");
            if pos == vec![1, 3] {
                seen_second_dropped = true;
            }
        }
        assert!(seen_second_dropped);
        let single = drop_shot_conditions(&both, &ShotLayout::single(), &mut rng).unwrap();
        assert_eq!(single, both);
    }

    #[test]
    fn overwrite_cases() {
        let x = seq(6, 3, 10);
        let clean = seq(6, 3, 11);
        let none = overwrite_anchors(&x, &MultiMaskCondition::empty(6, 3)).unwrap();
        assert_eq!(none, x);
        let all = MultiMaskCondition::from_frames(&clean, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(overwrite_anchors(&x, &all).unwrap(), clean);
        let some = MultiMaskCondition::from_frames(&clean, &[1, 4]).unwrap();
        let out = overwrite_anchors(&x, &some).unwrap();
        for r in 0..6 {
            let want = if r == 1 || r == 4 { clean.row(r) } else { x.row(r) };
            assert_eq!(out.row(r), want);
        }
    }

    proptest! {
        #[test]
        fn overwrite_round_trip(seed in 0u64..10_000, t in 1usize..20, d in 1usize..5) {
            let x = seq(t, d, seed);
            let clean = seq(t, d, seed + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions: Vec<usize> = (0..t).filter(|_| rng.random::<bool>()).collect();
            let cond = MultiMaskCondition::from_frames(&clean, &positions).unwrap();
            let out = overwrite_anchors(&x, &cond).unwrap();
            for r in 0..t {
                if positions.contains(&r) {
                    prop_assert_eq!(out.row(r), clean.row(r));
                } else {
                    prop_assert_eq!(out.row(r), x.row(r));
                }
            }
            let channels = build_conditioned_input(&x, &cond).unwrap();
            prop_assert_eq!(channels.conditioned_positions(), positions);
        }

        #[test]
        fn conditioned_input_is_linear_in_noisy(seed in 0u64..10_000, a in -3.0f64..3.0) {
            let (t, d) = (6, 3);
            let clean = seq(t, d, seed);
            let x = seq(t, d, seed + 7);
            let y = seq(t, d, seed + 13);
            let cond = MultiMaskCondition::from_frames(&clean, &[0, 2]).unwrap();
            let combo = Tensor::matrix(t, d, x.data().iter().zip(y.data()).map(|(p, q)| a * p + q).collect()).unwrap();
            let lhs = build_conditioned_input(&combo, &cond).unwrap();
            let cx = build_conditioned_input(&x, &cond).unwrap();
            let cy = build_conditioned_input(&y, &cond).unwrap();
            for r in 0..t {
                for j in 0..d {
                    let expect = a * cx.channels.row(r)[j] + cy.channels.row(r)[j];
                    prop_assert!((lhs.channels.row(r)[j] - expect).abs() < 1e-12);
                }
                prop_assert_eq!(&lhs.channels.row(r)[d..], &cx.channels.row(r)[d..]);
            }
        }

        #[test]
        fn dropping_never_touches_unselected_shots(seed in 0u64..10_000) {
            let t = 24;
            let clean = seq(t, 2, seed);
            let shots = ShotLayout::new(vec![6, 13, 20], t).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions: Vec<usize> = (0..t).filter(|_| rng.random::<f64>() < 0.4).collect();
            let cond = MultiMaskCondition::from_frames(&clean, &positions).unwrap();
            let out = drop_shot_conditions(&cond, &shots, &mut rng).unwrap();
            let kept_shots: Vec<usize> = out.positions().iter().map(|&p| shots.shot_of(p)).collect();
            for &p in &positions {
                let s = shots.shot_of(p);
                if kept_shots.contains(&s) {
                    // a shot either keeps all its conditions or none
                    prop_assert!(out.get(p).is_some());
                }
            }
            for p in out.positions() {
                prop_assert!(positions.contains(&p));
                prop_assert_eq!(out.get(p), cond.get(p));
            }
        }
    }
}
