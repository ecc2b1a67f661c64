//! Dataset loading, normalization, splitting, partitioning across parties,
//! and the synthetic toy set.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::landmarks::SharedSeed;
use crate::topology::{OmicsCenter, Topology};
use crate::{Error, Matrix, Result};

/// Per-feature min-max parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &Matrix) -> Self {
        let min = x.column_iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let max = x.column_iter().map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        Self { min, max }
    }

    /// Maps the training range to [0, 1]; constant columns go to 0.5. Values
    /// outside the training range pass through unclipped.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.nrows(), x.ncols(), |i, k| {
            let (lo, hi) = (self.min[k], self.max[k]);
            if hi > lo {
                (x[(i, k)] - lo) / (hi - lo)
            } else {
                0.5
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x d`.
    pub x: Matrix,
    /// Entries in {-1, +1}.
    pub y: Vec<f64>,
    pub ids: Vec<u64>,
    pub feature_names: Vec<String>,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }
}

/// Reads a CSV with a header row. `label_column` holds the class; every
/// other column must be numeric. With `positive_class` the matching value
/// maps to +1 and every other value to -1; without it labels must already be
/// +1 or -1.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_class: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_csv(file, label_column, positive_class)
}

/// [`load_csv`] over any reader.
pub fn read_csv(reader: impl std::io::Read, label_column: &str, positive_class: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidSpec(format!("no column named {label_column:?}")))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h.to_string()).collect();
    let d = feature_names.len();
    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut first_label: Option<String> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut col = 0;
        for (i, field) in rec.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
                row,
                column: feature_names[col].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
            col += 1;
        }
        let label = &rec[label_idx];
        first_label.get_or_insert_with(|| label.to_string());
        let yi = match positive_class {
            Some(c) => {
                if label == c {
                    1.0
                } else {
                    -1.0
                }
            }
            None => match label.parse::<f64>() {
                Ok(v) if v == 1.0 || v == -1.0 => v,
                _ => return Err(Error::UnknownClass { row, value: label.to_string() }),
            },
        };
        y.push(yi);
    }
    if y.is_empty() {
        return Err(Error::InvalidSpec("no data rows".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        let class = match positive_class {
            Some(c) if y[0] < 0.0 => format!("not {c}"),
            _ => first_label.unwrap_or_default(),
        };
        return Err(Error::DegenerateLabels(class));
    }
    let n = y.len();
    Ok(Dataset {
        x: Matrix::from_row_slice(n, d, &values),
        y,
        ids: (0..n as u64).collect(),
        feature_names,
        normalization: None,
    })
}

/// Fits min-max scaling on `train` and applies it to both splits.
pub fn normalize_train_test(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.d() != test.d() {
        return Err(Error::DimensionMismatch(format!("train has {} features, test {}", train.d(), test.d())));
    }
    let norm = Normalization::fit(&train.x);
    let tr = Dataset { x: norm.apply(&train.x), normalization: Some(norm.clone()), ..train.clone() };
    let te = Dataset { x: norm.apply(&test.x), normalization: Some(norm), ..test.clone() };
    Ok((tr, te))
}

/// Stratified split: each class is shuffled independently and the first
/// `round(train_frac * n_class)` rows go to training. Both splits are then
/// shuffled so that classes are interleaved.
pub fn stratified_split(ds: &Dataset, train_frac: f64, seed: &SharedSeed) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidSpec(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    let mut rng = seed.rng();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..ds.n()).filter(|&i| ds.y[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (train_frac * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidSpec("split leaves an empty side".into()));
    }
    Ok((ds.select(&train), ds.select(&test)))
}

/// Spread of each class blob and the vertical offset of the class means.
/// The offset puts the Bayes accuracy at 0.94.
const TOY_SIGMA: f64 = 0.5;
const TOY_OFFSET: f64 = 1.5548 * TOY_SIGMA;
const TOY_SPACING: f64 = 4.0;

/// Two-class blobs in the plane, one cluster per hospital at
/// `(4 h, 0)`, classes offset by `+-0.777` vertically with spread 0.5 and
/// alternating labels. Coordinates are min-max normalized on the training
/// split, then a constant-1 bias feature is appended. The topology puts the
/// first coordinate at one provider and the second coordinate plus bias at
/// another.
pub fn make_toy(n_train: usize, n_test: usize, n_hospitals: usize, seed: u64) -> Result<(Dataset, Dataset, Topology)> {
    if n_hospitals == 0 {
        return Err(Error::InvalidSpec("at least one hospital".into()));
    }
    if n_train < n_hospitals {
        return Err(Error::InvalidSpec(format!("{n_train} training samples for {n_hospitals} hospitals")));
    }
    let gen = |n: usize, label: &str, id0: u64| {
        let mut rng = SharedSeed::new(seed, label).rng();
        let sizes = split_sizes(n, n_hospitals);
        let mut x = Matrix::zeros(n, 2);
        let mut y = Vec::with_capacity(n);
        let mut i = 0;
        for (h, &size) in sizes.iter().enumerate() {
            for k in 0..size {
                let label = if k % 2 == 0 { 1.0 } else { -1.0 };
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                x[(i, 0)] = TOY_SPACING * h as f64 + TOY_SIGMA * z0;
                x[(i, 1)] = label * TOY_OFFSET + TOY_SIGMA * z1;
                y.push(label);
                i += 1;
            }
        }
        let ids = (id0..id0 + n as u64).collect();
        (x, y, ids)
    };
    let (xtr, ytr, idtr) = gen(n_train, "toy/train", 0);
    let (xte, yte, idte) = gen(n_test, "toy/test", n_train as u64);
    let norm = Normalization::fit(&xtr);
    let with_bias = |x: Matrix| {
        norm.apply(&x).insert_column(2, 1.0)
    };
    // The bias column is recorded as the identity map.
    let full_norm = Normalization {
        min: vec![norm.min[0], norm.min[1], 0.0],
        max: vec![norm.max[0], norm.max[1], 1.0],
    };
    let names = vec!["x0".to_string(), "x1".to_string(), "bias".to_string()];
    let train = Dataset { x: with_bias(xtr), y: ytr, ids: idtr, feature_names: names.clone(), normalization: Some(full_norm.clone()) };
    let test = Dataset { x: with_bias(xte), y: yte, ids: idte, feature_names: names, normalization: Some(full_norm) };
    let topology = Topology::with_providers(&train.ids, 3, n_hospitals, vec![vec![0], vec![1, 2]])?;
    Ok((train, test, topology))
}

fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| n / parts + usize::from(i < n % parts)).collect()
}

/// Feature values one provider holds for one hospital's patients.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub hospital: u32,
    pub provider: u32,
    pub sample_ids: Vec<u64>,
    pub features: Vec<usize>,
    pub values: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub topology: Topology,
    /// Sorted by `(hospital, provider)`.
    pub blocks: Vec<FeatureBlock>,
    /// Labels held by each hospital, in its sample order.
    pub labels: BTreeMap<u32, Vec<f64>>,
    pub feature_names: Vec<String>,
    order: Vec<u64>,
}

impl PartitionedDataset {
    pub fn block(&self, hospital: u32, provider: u32) -> Option<&FeatureBlock> {
        self.blocks.iter().find(|b| b.hospital == hospital && b.provider == provider)
    }

    pub fn labels_of(&self, hospital: u32) -> Option<&[f64]> {
        self.labels.get(&hospital).map(Vec::as_slice)
    }

    /// Blocks a provider holds, keyed by hospital.
    pub fn center_blocks(&self, provider: u32) -> Vec<&FeatureBlock> {
        self.blocks.iter().filter(|b| b.provider == provider).collect()
    }

    pub fn centers(&self) -> &[OmicsCenter] {
        &self.topology.omics_centers
    }

    /// Inverse of [`partition`]: rows come back in the original order.
    pub fn reassemble(&self) -> Result<Dataset> {
        let d = self.topology.n_features;
        let mut loc: HashMap<u64, (u32, usize)> = HashMap::new();
        for h in &self.topology.hospitals {
            for (r, id) in h.sample_ids.iter().enumerate() {
                loc.insert(*id, (h.id, r));
            }
        }
        let n = self.order.len();
        let mut x = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for (i, id) in self.order.iter().enumerate() {
            let (h, r) = loc[id];
            for b in self.blocks.iter().filter(|b| b.hospital == h) {
                for (c, &f) in b.features.iter().enumerate() {
                    x[(i, f)] = b.values[(r, c)];
                }
            }
            y.push(self.labels[&h][r]);
        }
        Ok(Dataset { x, y, ids: self.order.clone(), feature_names: self.feature_names.clone(), normalization: None })
    }
}

/// Splits a dataset by samples across hospitals and by features across the
/// providers serving each hospital.
pub fn partition(ds: &Dataset, topology: &Topology) -> Result<PartitionedDataset> {
    topology.validate()?;
    if topology.n_features != ds.d() {
        return Err(Error::InvalidTopology(format!("topology has {} features, data {}", topology.n_features, ds.d())));
    }
    let row_of: HashMap<u64, usize> = ds.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    if row_of.len() != ds.n() {
        return Err(Error::InvalidSpec("duplicate sample ids in dataset".into()));
    }
    if topology.n_samples() != ds.n() {
        return Err(Error::InvalidTopology(format!("topology covers {} samples, data has {}", topology.n_samples(), ds.n())));
    }
    let mut blocks = Vec::new();
    let mut labels = BTreeMap::new();
    for h in &topology.hospitals {
        let rows: Vec<usize> = h
            .sample_ids
            .iter()
            .map(|id| row_of.get(id).copied().ok_or_else(|| Error::MissingData(format!("sample {id} of hospital {} not in dataset", h.id))))
            .collect::<Result<_>>()?;
        labels.insert(h.id, rows.iter().map(|&r| ds.y[r]).collect());
        for o in topology.providers_of(h.id) {
            blocks.push(FeatureBlock {
                hospital: h.id,
                provider: o.id,
                sample_ids: h.sample_ids.clone(),
                features: o.features.clone(),
                values: ds.x.select_rows(&rows).select_columns(&o.features),
            });
        }
    }
    blocks.sort_by_key(|b| (b.hospital, b.provider));
    Ok(PartitionedDataset { topology: topology.clone(), blocks, labels, feature_names: ds.feature_names.clone(), order: ds.ids.clone() })
}
