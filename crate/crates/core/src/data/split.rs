use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::calendar::SLOTS_PER_DAY;
use crate::error::{Error, Result};

/// Disjoint train / validation / test slot positions, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Train and validation positions merged, ascending.
    pub fn fit_slots(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }
}

/// The first `train_days` days are split into training and validation by a
/// seeded uniform draw of `round(fraction × count)` slots, shared by all
/// meters; the rest is the test period.
pub fn make_split(num_slots: usize, train_days: usize, fraction: f64, seed: u64) -> Result<SplitSpec> {
    let count = train_days * SLOTS_PER_DAY;
    if count > num_slots {
        return Err(Error::invalid(format!(
            "{train_days} training days need {count} slots, dataset has {num_slots}"
        )));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "validation fraction {fraction} outside [0, 1)"
        )));
    }
    let n_val = (fraction * count as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; count];
    for i in rand::seq::index::sample(&mut rng, count, n_val) {
        is_val[i] = true;
    }
    let (validation, train): (Vec<usize>, Vec<usize>) = (0..count).partition(|&i| is_val[i]);
    let test: Vec<usize> = (count..num_slots).collect();
    if test.is_empty() {
        log::warn!("split leaves no test slots");
    }
    Ok(SplitSpec {
        train,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cer_shape() {
        let s = make_split(536 * 8, 365, 0.2, 1).unwrap();
        assert_eq!(s.train.len() + s.validation.len(), 2920);
        assert_eq!(s.validation.len(), 584);
        assert_eq!(s.test.len(), 1368);
        assert_eq!(s.test[0], 2920);
    }

    #[test]
    fn edge_cases() {
        let s = make_split(80, 10, 0.0, 3).unwrap();
        assert!(s.validation.is_empty());
        assert_eq!(s.train.len(), 80);
        assert!(s.test.is_empty());
        assert!(make_split(80, 11, 0.2, 0).is_err());
        assert!(make_split(80, 5, 1.0, 0).is_err());
        assert!(make_split(80, 5, -0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_determinism(days in 1usize..40, extra in 0usize..40, frac in 0.0f64..0.99, seed: u64) {
            let n = (days + extra) * 8;
            let a = make_split(n, days, frac, seed).unwrap();
            let b = make_split(n, days, frac, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(a.validation.len(), (frac * (days * 8) as f64).round() as usize);
            prop_assert!(a.validation.iter().all(|&i| i < days * 8));
        }
    }
}
