//! RBF kernel blocks, their Hadamard composition across feature subsets, and
//! the adversary's inversion back to squared distances.

use serde::{Deserialize, Serialize};

use crate::landmarks::{uniform_stream, SharedSeed};
use crate::{Error, Matrix, Result};

/// Kernel width configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    Shared(f64),
    /// One width per landmark. A party holding only kernel values cannot
    /// recover distances without knowing every width.
    PerLandmark(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma_mode: GammaMode,
}

impl KernelSpec {
    pub fn shared(gamma: f64) -> Self {
        Self { gamma_mode: GammaMode::Shared(gamma) }
    }

    pub fn per_landmark(gammas: Vec<f64>) -> Self {
        Self { gamma_mode: GammaMode::PerLandmark(gammas) }
    }

    /// Per-landmark widths drawn uniformly from `[lo * gamma, hi * gamma]` on
    /// the `"gamma"` stream of `seed`.
    pub fn random_per_landmark(gamma: f64, m: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidSpec(format!("random gamma bounds [{lo}, {hi}]")));
        }
        let u = uniform_stream(&SharedSeed::new(seed, "gamma"), m);
        let gammas = u.into_iter().map(|t| gamma * (lo + (hi - lo) * t)).collect();
        let spec = Self::per_landmark(gammas);
        spec.validate(m)?;
        Ok(spec)
    }

    pub fn is_shared(&self) -> bool {
        matches!(self.gamma_mode, GammaMode::Shared(_))
    }

    /// Width used for landmark column `j`.
    pub fn gamma(&self, j: usize) -> f64 {
        match &self.gamma_mode {
            GammaMode::Shared(g) => *g,
            GammaMode::PerLandmark(gs) => gs[j],
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let ok = |g: f64| g > 0.0 && g.is_finite();
        match &self.gamma_mode {
            GammaMode::Shared(g) if ok(*g) => Ok(()),
            GammaMode::Shared(g) => Err(Error::InvalidSpec(format!("gamma must be positive and finite, got {g}"))),
            GammaMode::PerLandmark(gs) if gs.len() != m => Err(Error::InvalidSpec(format!(
                "{} per-landmark widths for {m} landmarks",
                gs.len()
            ))),
            GammaMode::PerLandmark(gs) => match gs.iter().find(|g| !ok(**g)) {
                Some(g) => Err(Error::InvalidSpec(format!("gamma must be positive and finite, got {g}"))),
                None => Ok(()),
            },
        }
    }

    /// Restricts a per-landmark spec to a subset of landmark columns.
    pub fn select(&self, columns: &[usize]) -> Self {
        match &self.gamma_mode {
            GammaMode::Shared(_) => self.clone(),
            GammaMode::PerLandmark(gs) => Self::per_landmark(columns.iter().map(|&j| gs[j]).collect()),
        }
    }
}

/// Kernel values between a set of samples and the landmarks, restricted to a
/// subset of features.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    /// `n x m`, entries in (0, 1].
    pub values: Matrix,
    /// Sample identifiers, one per row.
    pub rows: Vec<u64>,
    /// Feature indices (global numbering) this block covers, ascending.
    pub features: Vec<usize>,
}

impl KernelBlock {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// RBF block over all columns of `x_sub`, with rows numbered `0..n` and
/// features `0..d`.
pub fn rbf_block(x_sub: &Matrix, w_sub: &Matrix, spec: &KernelSpec) -> Result<KernelBlock> {
    let rows = (0..x_sub.nrows() as u64).collect();
    let features = (0..x_sub.ncols()).collect();
    rbf_block_labeled(x_sub, w_sub, spec, rows, features)
}

/// RBF block with explicit sample IDs and global feature indices.
pub fn rbf_block_labeled(
    x_sub: &Matrix,
    w_sub: &Matrix,
    spec: &KernelSpec,
    rows: Vec<u64>,
    features: Vec<usize>,
) -> Result<KernelBlock> {
    if x_sub.ncols() != w_sub.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "samples have {} features, landmarks {}",
            x_sub.ncols(),
            w_sub.ncols()
        )));
    }
    if rows.len() != x_sub.nrows() || features.len() != x_sub.ncols() {
        return Err(Error::DimensionMismatch("block labels do not match the data shape".into()));
    }
    if x_sub.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel samples"));
    }
    if w_sub.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel landmarks"));
    }
    let m = w_sub.nrows();
    spec.validate(m)?;
    let values = Matrix::from_fn(x_sub.nrows(), m, |i, j| {
        let mut dist = 0.0;
        for k in 0..x_sub.ncols() {
            let diff = x_sub[(i, k)] - w_sub[(j, k)];
            dist += diff * diff;
        }
        (-spec.gamma(j) * dist).exp()
    });
    Ok(KernelBlock { values, rows, features })
}

/// Element-wise product of blocks over disjoint feature subsets.
///
/// Blocks are multiplied in ascending order of their smallest feature index,
/// so every party composing the same blocks gets the same bits.
pub fn hadamard_compose(blocks: &[KernelBlock]) -> Result<KernelBlock> {
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidSpec("nothing to compose".into()));
    };
    let mut order: Vec<&KernelBlock> = blocks.iter().collect();
    for b in &order {
        if b.values.shape() != first.values.shape() {
            return Err(Error::DimensionMismatch(format!(
                "block shapes {:?} and {:?}",
                first.values.shape(),
                b.values.shape()
            )));
        }
        if b.rows != first.rows {
            return Err(Error::DimensionMismatch("blocks cover different samples".into()));
        }
        if b.features.is_empty() {
            return Err(Error::InvalidSpec("block with an empty feature subset".into()));
        }
    }
    order.sort_by_key(|b| b.features.iter().copied().min());
    let mut features: Vec<usize> = order.iter().flat_map(|b| b.features.iter().copied()).collect();
    features.sort_unstable();
    if features.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSpec("overlapping feature subsets".into()));
    }
    let mut values = order[0].values.clone();
    for b in &order[1..] {
        values.component_mul_assign(&b.values);
    }
    Ok(KernelBlock { values, rows: first.rows.clone(), features })
}

/// Inverts a shared-width block to squared distances, `-ln(k) / gamma`.
pub fn neg_log_to_distances(block: &KernelBlock, spec: &KernelSpec) -> Result<Matrix> {
    let GammaMode::Shared(gamma) = spec.gamma_mode else {
        return Err(Error::NotInvertible("per-landmark kernel widths are unknown to the observer"));
    };
    spec.validate(block.ncols())?;
    Ok(block.values.map(|k| {
        let d = -k.ln() / gamma;
        // ln(1) is +0 but the negation yields -0.
        if d <= 0.0 { 0.0 } else { d }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_rbf(x: &Matrix, w: &Matrix, gamma: impl Fn(usize) -> f64) -> Matrix {
        let mut out = Matrix::zeros(x.nrows(), w.nrows());
        for i in 0..x.nrows() {
            for j in 0..w.nrows() {
                let mut s = 0.0;
                for k in 0..x.ncols() {
                    s += (x[(i, k)] - w[(j, k)]).powi(2);
                }
                out[(i, j)] = (-gamma(j) * s).exp();
            }
        }
        out
    }

    fn columns(x: &Matrix, cols: &[usize]) -> Matrix {
        x.select_columns(cols)
    }

    #[test]
    fn zero_distance_is_one() {
        let k = rbf_block(&Matrix::zeros(1, 1), &Matrix::zeros(1, 1), &KernelSpec::shared(1.0)).unwrap();
        assert_eq!(k.values[(0, 0)], 1.0);
    }

    #[test]
    fn analytic_value() {
        let x = Matrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let w = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = rbf_block(&x, &w, &KernelSpec::shared(0.5)).unwrap();
        assert!((k.values[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.values[(0, 0)] - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn matches_loop_oracle() {
        let x = Matrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin().abs());
        let w = Matrix::from_fn(2, 3, |i, j| ((i * 5 + j) as f64 * 0.91).cos().abs());
        let k = rbf_block(&x, &w, &KernelSpec::shared(0.7)).unwrap();
        assert_eq!(k.values, naive_rbf(&x, &w, |_| 0.7));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::zeros(2, 3);
        assert!(matches!(
            rbf_block(&x, &Matrix::zeros(2, 2), &KernelSpec::shared(1.0)),
            Err(Error::DimensionMismatch(_))
        ));
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(matches!(rbf_block(&bad, &Matrix::zeros(1, 3), &KernelSpec::shared(1.0)), Err(Error::NonFinite(_))));
        assert!(rbf_block(&x, &Matrix::zeros(1, 3), &KernelSpec::shared(0.0)).is_err());
        assert!(rbf_block(&x, &Matrix::zeros(2, 3), &KernelSpec::per_landmark(vec![1.0])).is_err());
    }

    #[test]
    fn compose_identity_and_neutral() {
        let x = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.1);
        let w = Matrix::from_fn(2, 2, |i, j| (i * j) as f64 * 0.3);
        let b = rbf_block(&x, &w, &KernelSpec::shared(1.0)).unwrap();
        assert_eq!(hadamard_compose(std::slice::from_ref(&b)).unwrap(), b);

        let ones = |f: usize| KernelBlock { values: Matrix::repeat(3, 2, 1.0), rows: vec![0, 1, 2], features: vec![f] };
        let c = hadamard_compose(&[ones(1), ones(0)]).unwrap();
        assert_eq!(c.values, Matrix::repeat(3, 2, 1.0));
        assert_eq!(c.features, vec![0, 1]);
    }

    #[test]
    fn compose_two_plus_two_matches_monolithic() {
        let x = Matrix::from_fn(6, 4, |i, j| ((i * 4 + j) as f64 * 1.3).sin() * 0.5 + 0.5);
        let w = Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.7).cos() * 0.5 + 0.5);
        let spec = KernelSpec::shared(0.25);
        let full = rbf_block(&x, &w, &spec).unwrap();
        let a = rbf_block_labeled(&columns(&x, &[0, 1]), &columns(&w, &[0, 1]), &spec, full.rows.clone(), vec![0, 1]).unwrap();
        let b = rbf_block_labeled(&columns(&x, &[2, 3]), &columns(&w, &[2, 3]), &spec, full.rows.clone(), vec![2, 3]).unwrap();
        let c = hadamard_compose(&[b, a]).unwrap();
        assert!((c.values - full.values).amax() <= 1e-12);
    }

    #[test]
    fn compose_rejects_overlap_and_shape() {
        let blk = |f: Vec<usize>, n: usize| KernelBlock { values: Matrix::repeat(n, 2, 0.5), rows: (0..n as u64).collect(), features: f };
        assert!(matches!(hadamard_compose(&[blk(vec![0, 1], 2), blk(vec![1], 2)]), Err(Error::InvalidSpec(_))));
        assert!(matches!(hadamard_compose(&[blk(vec![0], 2), blk(vec![1], 3)]), Err(Error::DimensionMismatch(_))));
        assert!(hadamard_compose(&[]).is_err());
    }

    #[test]
    fn neg_log_examples() {
        let spec = KernelSpec::shared(0.5);
        let block = KernelBlock { values: Matrix::from_row_slice(1, 2, &[1.0, (-1.0f64).exp()]), rows: vec![0], features: vec![0] };
        let d = neg_log_to_distances(&block, &spec).unwrap();
        assert_eq!(d[(0, 0)].to_bits(), 0.0f64.to_bits());
        assert!((d[(0, 1)] - 2.0).abs() < 1e-15);
        let per = KernelSpec::per_landmark(vec![0.5, 0.5]);
        assert!(matches!(neg_log_to_distances(&block, &per), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn neg_log_round_trip() {
        let x = Matrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.61).sin() * 0.5 + 0.5);
        let w = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.29).cos() * 0.5 + 0.5);
        let spec = KernelSpec::shared(1.0 / 3.0);
        let d = neg_log_to_distances(&rbf_block(&x, &w, &spec).unwrap(), &spec).unwrap();
        for i in 0..7 {
            for j in 0..4 {
                let direct: f64 = (0..3).map(|k| (x[(i, k)] - w[(j, k)]).powi(2)).sum();
                assert!((d[(i, j)] - direct).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn random_widths_in_bounds_and_deterministic() {
        let a = KernelSpec::random_per_landmark(0.2, 100, 0.5, 2.0, 9).unwrap();
        let b = KernelSpec::random_per_landmark(0.2, 100, 0.5, 2.0, 9).unwrap();
        assert_eq!(a, b);
        for j in 0..100 {
            assert!((0.1..=0.4).contains(&a.gamma(j)));
        }
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
    }

    proptest! {
        #[test]
        fn separability_over_random_partitions(
            (x, w, owner) in (1usize..6, 1usize..5, 1usize..7).prop_flat_map(|(n, m, d)| {
                (matrix(n, d), matrix(m, d), proptest::collection::vec(0usize..3, d))
            }),
            gamma in 0.01f64..3.0,
        ) {
            let spec = KernelSpec::shared(gamma);
            let full = rbf_block(&x, &w, &spec).unwrap();
            let mut blocks = Vec::new();
            for part in 0..3 {
                let cols: Vec<usize> = (0..x.ncols()).filter(|&k| owner[k] == part).collect();
                if cols.is_empty() { continue; }
                blocks.push(rbf_block_labeled(&columns(&x, &cols), &columns(&w, &cols), &spec, full.rows.clone(), cols).unwrap());
            }
            let composed = hadamard_compose(&blocks).unwrap();
            prop_assert!((composed.values - full.values).amax() <= 1e-12);
        }

        #[test]
        fn self_kernel_symmetric_unit_diagonal(x in (1usize..7, 1usize..4).prop_flat_map(|(n, d)| matrix(n, d)), gamma in 0.01f64..3.0) {
            let k = rbf_block(&x, &x, &KernelSpec::shared(gamma)).unwrap().values;
            for i in 0..k.nrows() {
                prop_assert_eq!(k[(i, i)], 1.0);
                for j in 0..i {
                    prop_assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
        }

        #[test]
        fn entries_in_unit_interval(x in matrix(4, 3), w in matrix(3, 3), gamma in 0.01f64..3.0) {
            let k = rbf_block(&x, &w, &KernelSpec::shared(gamma)).unwrap().values;
            prop_assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn wider_gamma_never_increases(x in matrix(4, 3), w in matrix(3, 3), g in 0.01f64..2.0, extra in 0.0f64..2.0) {
            let lo = rbf_block(&x, &w, &KernelSpec::shared(g)).unwrap().values;
            let hi = rbf_block(&x, &w, &KernelSpec::shared(g + extra)).unwrap().values;
            prop_assert!(hi.iter().zip(lo.iter()).all(|(h, l)| h <= l));
        }

        #[test]
        fn per_landmark_columns_match_shared(x in matrix(4, 2), w in matrix(3, 2), gs in proptest::collection::vec(0.05f64..2.0, 3)) {
            let per = rbf_block(&x, &w, &KernelSpec::per_landmark(gs.clone())).unwrap().values;
            for (j, g) in gs.iter().enumerate() {
                let shared = rbf_block(&x, &w, &KernelSpec::shared(*g)).unwrap().values;
                prop_assert_eq!(per.column(j), shared.column(j));
            }
        }

        #[test]
        fn separability_holds_per_landmark(x in matrix(3, 4), w in matrix(2, 4), gs in proptest::collection::vec(0.05f64..2.0, 2)) {
            let spec = KernelSpec::per_landmark(gs);
            let full = rbf_block(&x, &w, &spec).unwrap();
            let a = rbf_block_labeled(&columns(&x, &[0, 3]), &columns(&w, &[0, 3]), &spec, full.rows.clone(), vec![0, 3]).unwrap();
            let b = rbf_block_labeled(&columns(&x, &[1, 2]), &columns(&w, &[1, 2]), &spec, full.rows.clone(), vec![1, 2]).unwrap();
            prop_assert!((hadamard_compose(&[a, b]).unwrap().values - full.values).amax() <= 1e-12);
        }
    }
}
