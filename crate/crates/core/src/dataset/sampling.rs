//! Class-balanced simple random sampling and per-class train/validation splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::EmotionLabel;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

/// Per-class draw size and seed. Draws are always without replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub n: usize,
    pub seed: u64,
}

/// A split ratio `num/den`, kept rational so the per-class floor is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const EIGHT_TENTHS: Ratio = Ratio { num: 8, den: 10 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::config(
                "split.train_ratio",
                format!("{num}/{den} is not strictly between 0 and 1"),
            ));
        }
        Ok(Self { num, den })
    }

    /// `floor(self * n)` in integer arithmetic.
    pub fn floor_of(self, n: usize) -> usize {
        ((n as u128 * self.num as u128) / self.den as u128) as usize
    }
}

/// The largest per-class draw size that keeps every class balanced: the
/// size of the smallest class.
pub fn compute_balanced_n(manifest: &DatasetManifest) -> Result<usize> {
    let mut n = usize::MAX;
    for label in EmotionLabel::ALL {
        let c = manifest.count(label);
        if c == 0 {
            return Err(Error::EmptyClass(label));
        }
        n = n.min(c);
    }
    Ok(n)
}

/// Draws exactly `spec.n` samples from every class, uniformly and without
/// replacement. Output is grouped by class in canonical order; within a class
/// the samples appear in draw order.
pub fn balanced_sample(manifest: &DatasetManifest, spec: SamplingSpec) -> Result<DatasetManifest> {
    let groups = manifest.indices_by_label();
    for label in EmotionLabel::ALL {
        let available = groups[label.id()].len();
        if spec.n > available {
            return Err(Error::InsufficientSamples {
                label,
                requested: spec.n,
                available,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = manifest.samples();
    let mut out = DatasetManifest::new();
    for group in &groups {
        let picked = rand::seq::index::sample(&mut rng, group.len(), spec.n);
        for i in picked.iter() {
            out.push(samples[group[i]].clone());
        }
    }
    Ok(out)
}

/// Randomly partitions each class into `floor(ratio * n_c)` training samples
/// and the remainder for validation.
pub fn stratified_split(
    manifest: &DatasetManifest,
    train_ratio: Ratio,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let groups = manifest.indices_by_label();
    for label in EmotionLabel::ALL {
        let n = groups[label.id()].len();
        let train = train_ratio.floor_of(n);
        if train == 0 || train == n {
            return Err(Error::DegenerateSplit {
                label,
                train,
                val: n - train,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = manifest.samples();
    let mut train = DatasetManifest::new();
    let mut val = DatasetManifest::new();
    for group in groups {
        let mut order = group;
        order.shuffle(&mut rng);
        let cut = train_ratio.floor_of(order.len());
        for &i in &order[..cut] {
            train.push(samples[i].clone());
        }
        for &i in &order[cut..] {
            val.push(samples[i].clone());
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;
    use crate::dataset::manifest::{ImageRef, Sample, SourceDataset};

    fn manifest_with_counts(counts: [usize; 7]) -> DatasetManifest {
        let mut m = DatasetManifest::new();
        for (c, &k) in counts.iter().enumerate() {
            for i in 0..k {
                m.push(Sample {
                    image: ImageRef::File(format!("c{c}/{i}.png").into()),
                    label: EmotionLabel::from_id(c).unwrap(),
                    source: SourceDataset::Synthetic,
                });
            }
        }
        m
    }

    #[test]
    fn balanced_n_examples() {
        assert_eq!(compute_balanced_n(&manifest_with_counts([10; 7])).unwrap(), 10);
        assert_eq!(
            compute_balanced_n(&manifest_with_counts([9, 4, 7, 8, 5, 4, 6])).unwrap(),
            4
        );
        assert!(matches!(
            compute_balanced_n(&manifest_with_counts([9, 4, 0, 8, 5, 4, 6])),
            Err(Error::EmptyClass(EmotionLabel::Sad))
        ));
    }

    #[test]
    fn sample_too_many_is_rejected() {
        let m = manifest_with_counts([5, 5, 5, 5, 5, 3, 5]);
        let err = balanced_sample(&m, SamplingSpec { n: 4, seed: 0 }).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                label: EmotionLabel::Disgust,
                requested: 4,
                available: 3
            }
        ));
    }

    #[test]
    fn sampling_everything_is_a_permutation() {
        let m = manifest_with_counts([6; 7]);
        let out = balanced_sample(&m, SamplingSpec { n: 6, seed: 3 }).unwrap();
        let a: HashSet<_> = m.samples().iter().collect();
        let b: HashSet<_> = out.samples().iter().collect();
        assert_eq!(out.len(), m.len());
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = manifest_with_counts([100; 7]);
        let spec = SamplingSpec { n: 10, seed: 42 };
        assert_eq!(balanced_sample(&m, spec).unwrap(), balanced_sample(&m, spec).unwrap());
        let other = balanced_sample(&m, SamplingSpec { n: 10, seed: 43 }).unwrap();
        assert_ne!(balanced_sample(&m, spec).unwrap(), other);
    }

    #[test]
    fn split_examples() {
        let (t, v) = stratified_split(&manifest_with_counts([10; 7]), Ratio::EIGHT_TENTHS, 1).unwrap();
        assert_eq!(t.counts(), &[8; 7]);
        assert_eq!(v.counts(), &[2; 7]);

        let (t, v) = stratified_split(&manifest_with_counts([2; 7]), Ratio::new(1, 2).unwrap(), 1).unwrap();
        assert_eq!(t.counts(), &[1; 7]);
        assert_eq!(v.counts(), &[1; 7]);
    }

    #[test]
    fn split_rejects_degenerate() {
        let err = stratified_split(&manifest_with_counts([1; 7]), Ratio::EIGHT_TENTHS, 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit { train: 0, val: 1, .. }));
        assert!(Ratio::new(0, 3).is_err());
        assert!(Ratio::new(3, 3).is_err());
    }

    #[test]
    fn ratio_floor_matches_brute_force_count() {
        // floor(0.8 n) counts the k in 1..=n with 10*k <= 8*n
        for n in 1..5000usize {
            let brute = (1..=n).filter(|k| 10 * k <= 8 * n).count();
            assert_eq!(Ratio::EIGHT_TENTHS.floor_of(n), brute, "n = {n}");
        }
        assert_eq!(Ratio::EIGHT_TENTHS.floor_of(3803), 3042);
    }

    proptest! {
        #[test]
        fn sample_then_split_invariants(
            counts in proptest::array::uniform7(2usize..40),
            frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let m = manifest_with_counts(counts);
            let min = *counts.iter().min().unwrap();
            let n = 2 + ((min - 2) as f64 * frac) as usize;
            let drawn = balanced_sample(&m, SamplingSpec { n, seed }).unwrap();
            prop_assert_eq!(drawn.counts(), &[n; 7]);
            prop_assert_eq!(compute_balanced_n(&drawn).unwrap(), n);

            let source: HashSet<_> = m.samples().iter().collect();
            let unique: HashSet<_> = drawn.samples().iter().collect();
            prop_assert_eq!(unique.len(), drawn.len());
            prop_assert!(unique.is_subset(&source));

            let (t, v) = stratified_split(&drawn, Ratio::new(1, 2).unwrap(), seed).unwrap();
            let ts: HashSet<_> = t.samples().iter().collect();
            let vs: HashSet<_> = v.samples().iter().collect();
            prop_assert!(ts.is_disjoint(&vs));
            prop_assert_eq!(ts.union(&vs).count(), drawn.len());
        }
    }
}
