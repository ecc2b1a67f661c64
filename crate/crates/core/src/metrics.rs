//! Classification metrics and repeat aggregation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts against the positive class `+1`.
    pub fn from_labels(truth: &[f64], predicted: &[f64]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label vectors differ in length");
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t > 0.0, p > 0.0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Zero when there are no positive samples.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Mean and twice the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSpread {
    pub mean: f64,
    pub two_std: f64,
}

impl MeanSpread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, two_std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, two_std: 2.0 * var.sqrt() }
    }
}

impl std::fmt::Display for MeanSpread {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.two_std)
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_counts() {
        let c = Confusion::from_labels(&[1.0, 1.0, -1.0, -1.0, 1.0], &[1.0, -1.0, -1.0, 1.0, 1.0]);
        assert_eq!(c, Confusion { tp: 2, tn: 1, fp: 1, fn_: 1 });
        assert_eq!(c.accuracy(), 0.6);
        assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.precision() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Confusion::default().precision(), 0.0);
    }

    #[test]
    fn spread_uses_population_std() {
        let s = MeanSpread::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.two_std, 2.0);
        assert_eq!(MeanSpread::of(&[0.5; 4]).two_std, 0.0);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn accuracy_identity(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let t: Vec<f64> = pairs.iter().map(|p| if p.0 { 1.0 } else { -1.0 }).collect();
            let p: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { -1.0 }).collect();
            let c = Confusion::from_labels(&t, &p);
            let agree = t.iter().zip(&p).filter(|(a, b)| a == b).count();
            prop_assert_eq!(c.accuracy(), agree as f64 / t.len() as f64);
            for v in [c.accuracy(), c.recall(), c.precision()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
