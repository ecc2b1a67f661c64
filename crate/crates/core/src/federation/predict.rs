use crate::kernel::{rbf_block, KernelSpec};
use crate::landmarks::LandmarkSet;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// `sign(score)`, with 0 mapped to +1.
    pub classes: Vec<f64>,
}

/// Scores `f(x) = sum_j alpha_j k(w_j, x)` for every query row.
pub fn predict(alpha: &[f64], x_query: &Matrix, landmarks: &LandmarkSet, spec: &KernelSpec) -> Result<Prediction> {
    if alpha.len() != landmarks.m {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {} landmarks", alpha.len(), landmarks.m)));
    }
    let k = rbf_block(x_query, &landmarks.w, spec)?;
    let scores: Vec<f64> = (&k.values * Vector::from_column_slice(alpha)).iter().copied().collect();
    let classes = scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect();
    Ok(Prediction { scores, classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::{sample_landmarks, Sampler, SamplerStats, SharedSeed};

    fn landmarks(w: Matrix) -> LandmarkSet {
        let m = w.nrows();
        LandmarkSet { w, sampler: Sampler::U, m, seed: SharedSeed::new(0, "landmarks") }
    }

    #[test]
    fn zero_alpha_maps_to_positive() {
        let l = sample_landmarks(Sampler::U, 3, &SamplerStats::Dim(2), &SharedSeed::new(1, "landmarks")).unwrap();
        let p = predict(&[0.0; 3], &Matrix::from_element(4, 2, 0.3), &l, &KernelSpec::shared(0.5)).unwrap();
        assert_eq!(p.scores, vec![0.0; 4]);
        assert_eq!(p.classes, vec![1.0; 4]);
    }

    #[test]
    fn query_at_single_landmark_scores_one() {
        let l = landmarks(Matrix::from_row_slice(1, 2, &[0.2, 0.8]));
        let p = predict(&[1.0], &Matrix::from_row_slice(1, 2, &[0.2, 0.8]), &l, &KernelSpec::shared(2.0)).unwrap();
        assert_eq!(p.scores, vec![1.0]);
    }

    #[test]
    fn query_at_landmark_with_unit_coefficient_sums_row() {
        let w = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let l = landmarks(w.clone());
        let p = predict(&[0.0, 1.0], &Matrix::from_row_slice(1, 1, &[1.0]), &l, &KernelSpec::shared(1.0)).unwrap();
        assert_eq!(p.scores, vec![1.0]);
        assert!(predict(&[1.0], &w, &l, &KernelSpec::shared(1.0)).is_err());
        assert!(predict(&[1.0, 1.0], &Matrix::zeros(1, 3), &l, &KernelSpec::shared(1.0)).is_err());
    }
}
