//! Synthetic labeled datasets, label corruption, disjoint splits and CSV persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Per-coordinate noise std of [`generate_factor_dataset`].
pub const FACTOR_NOISE_STD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    /// Row-major `N × num_factors` when present.
    factor_labels: Option<Vec<usize>>,
    num_factors: usize,
    ids: Vec<u64>,
}

impl LabeledDataset {
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        factor_labels: Option<(usize, Vec<usize>)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                got: features.len(),
                context: "dataset features",
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        let n = labels.len();
        let (num_factors, factor_labels) = match factor_labels {
            Some((f, fl)) => {
                crate::error::check_dim(n * f, fl.len(), "factor labels")?;
                (f, Some(fl))
            }
            None => (0, None),
        };
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
            factor_labels,
            num_factors,
            ids: (0..n as u64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    fn index(&self, id: u64) -> Result<usize> {
        // ids are contiguous from 0
        if (id as usize) < self.len() {
            Ok(id as usize)
        } else {
            Err(Error::IdNotFound(id))
        }
    }

    pub fn row(&self, id: u64) -> Result<&[f64]> {
        let i = self.index(id)?;
        Ok(&self.features[i * self.dim..(i + 1) * self.dim])
    }

    /// Feature row converted to the working scalar type.
    pub fn row_as<T: Scalar>(&self, id: u64) -> Result<Vec<T>> {
        Ok(self.row(id)?.iter().map(|&v| T::of(v)).collect())
    }

    pub fn label(&self, id: u64) -> Result<usize> {
        Ok(self.labels[self.index(id)?])
    }

    pub fn factor(&self, id: u64, factor: usize) -> Result<usize> {
        let i = self.index(id)?;
        match &self.factor_labels {
            Some(fl) if factor < self.num_factors => Ok(fl[i * self.num_factors + factor]),
            _ => Err(Error::invalid(format!("dataset has no factor {factor}"))),
        }
    }

    /// Ids among `candidates` whose `factor` equals that of `id`.
    pub fn factor_matches(&self, id: u64, factor: usize, candidates: &[u64]) -> Result<Vec<u64>> {
        let target = self.factor(id, factor)?;
        let mut out = Vec::new();
        for &c in candidates {
            if self.factor(c, factor)? == target {
                out.push(c);
            }
        }
        Ok(out)
    }

    fn set_label(&mut self, id: u64, label: usize) {
        let i = id as usize;
        self.labels[i] = label;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_ids: Vec<u64>,
    pub weight_learning_ids: Vec<u64>,
    pub eval_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub corrupted_ids: BTreeSet<u64>,
    pub original_labels: BTreeMap<u64, usize>,
    pub corruption_fraction: f64,
}

fn unit_direction(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Seeded unit directions, orthonormalized (Gram–Schmidt in draw order) when
/// `count <= dim` so every pair of class means is `separation * sqrt(2)` apart.
fn class_directions(rng: &mut SplitMix64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    while dirs.len() < count {
        let mut v = unit_direction(rng, dim);
        if count <= dim {
            for d in &dirs {
                let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
        }
        dirs.push(v);
    }
    dirs
}

/// Isotropic Gaussian blobs. Class means are `separation` times seeded unit
/// directions; examples are interleaved so example `i` has class `i % num_classes`.
pub fn generate_gaussian_classes(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 || per_class < 1 || dim < 2 {
        return Err(Error::invalid(format!(
            "need num_classes >= 2, per_class >= 1, dim >= 2 (got {num_classes}, {per_class}, {dim})"
        )));
    }
    if !(separation > 0.0) {
        return Err(Error::invalid("separation must be positive"));
    }
    let mut rng = SplitMix64::new(seed);
    let means: Vec<Vec<f64>> = class_directions(&mut rng, num_classes, dim)
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * separation).collect())
        .collect();
    let n = num_classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        for &m in &means[c] {
            features.push(m + rng.next_gaussian());
        }
        labels.push(c);
    }
    LabeledDataset::new(dim, num_classes, features, labels, None)
}

/// Two latent factors in disjoint coordinate blocks, noise std [`FACTOR_NOISE_STD`].
pub fn generate_factor_dataset(
    factors_a: usize,
    factors_b: usize,
    per_cell: usize,
    dim_a: usize,
    dim_b: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    generate_factor_dataset_with_noise(
        factors_a,
        factors_b,
        per_cell,
        dim_a,
        dim_b,
        FACTOR_NOISE_STD,
        seed,
    )
}

/// Factor `a` lives in coordinates `[0, dim_a)`, factor `b` in
/// `[dim_a, dim_a + dim_b)`. Category means have standard-normal entries;
/// the class label is `a * factors_b + b`.
pub fn generate_factor_dataset_with_noise(
    factors_a: usize,
    factors_b: usize,
    per_cell: usize,
    dim_a: usize,
    dim_b: usize,
    noise_std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if factors_a < 2 || factors_b < 2 || per_cell < 1 || dim_a < 1 || dim_b < 1 {
        return Err(Error::invalid(format!(
            "degenerate factor dataset sizes ({factors_a}, {factors_b}, {per_cell}, {dim_a}, {dim_b})"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be >= 0"));
    }
    let mut rng = SplitMix64::new(seed);
    let means_a: Vec<Vec<f64>> = (0..factors_a)
        .map(|_| (0..dim_a).map(|_| rng.next_gaussian()).collect())
        .collect();
    let means_b: Vec<Vec<f64>> = (0..factors_b)
        .map(|_| (0..dim_b).map(|_| rng.next_gaussian()).collect())
        .collect();
    let dim = dim_a + dim_b;
    let n = factors_a * factors_b * per_cell;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut factor_labels = Vec::with_capacity(n * 2);
    for a in 0..factors_a {
        for b in 0..factors_b {
            for _ in 0..per_cell {
                for &m in means_a[a].iter().chain(&means_b[b]) {
                    features.push(m + noise_std * rng.next_gaussian());
                }
                labels.push(a * factors_b + b);
                factor_labels.push(a);
                factor_labels.push(b);
            }
        }
    }
    LabeledDataset::new(
        dim,
        factors_a * factors_b,
        features,
        labels,
        Some((2, factor_labels)),
    )
}

/// Flips exactly `round(fraction * N)` labels to a uniformly chosen different class.
pub fn corrupt_labels(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, CorruptionRecord)> {
    corrupt_labels_among(ds, ds.ids(), fraction, seed)
}

/// As [`corrupt_labels`], restricted to the ids in `pool` (e.g. a training split).
pub fn corrupt_labels_among(
    ds: &LabeledDataset,
    pool: &[u64],
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, CorruptionRecord)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} not in (0, 1)")));
    }
    if ds.num_classes() < 2 {
        return Err(Error::invalid("label corruption needs at least 2 classes"));
    }
    let count = (fraction * pool.len() as f64).round() as usize;
    let mut rng = SplitMix64::new(seed);
    let picks = rng.sample_indices(pool.len(), count);
    let mut out = ds.clone();
    let mut record = CorruptionRecord {
        corrupted_ids: BTreeSet::new(),
        original_labels: BTreeMap::new(),
        corruption_fraction: fraction,
    };
    let c = ds.num_classes() as u64;
    for p in picks {
        let id = pool[p];
        let old = ds.label(id)?;
        let new = ((old as u64 + 1 + rng.next_below(c - 1)) % c) as usize;
        out.set_label(id, new);
        record.corrupted_ids.insert(id);
        record.original_labels.insert(id, old);
    }
    Ok((out, record))
}

/// Seeded shuffle of all ids, cut into three consecutive disjoint blocks.
pub fn make_splits(
    ds: &LabeledDataset,
    n_train: usize,
    n_weight: usize,
    n_eval: usize,
    seed: u64,
) -> Result<DataSplit> {
    let total = n_train
        .checked_add(n_weight)
        .and_then(|s| s.checked_add(n_eval))
        .ok_or_else(|| Error::invalid("split sizes overflow"))?;
    if total > ds.len() {
        return Err(Error::invalid(format!(
            "split sizes sum to {total} but dataset has {} examples",
            ds.len()
        )));
    }
    let mut ids = ds.ids().to_vec();
    SplitMix64::new(seed).shuffle(&mut ids);
    let take = |range: std::ops::Range<usize>| {
        let mut v = ids[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(DataSplit {
        train_ids: take(0..n_train),
        weight_learning_ids: take(n_train..n_train + n_weight),
        eval_ids: take(n_train + n_weight..total),
    })
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: std::io::Error| Error::io(path, e);
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..ds.dim).map(|j| format!("f{j}")));
    header.extend((0..ds.num_factors).map(|j| format!("fa{j}")));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for (i, &id) in ds.ids.iter().enumerate() {
        let mut rec = vec![id.to_string(), ds.labels[i].to_string()];
        rec.extend(
            ds.features[i * ds.dim..(i + 1) * ds.dim]
                .iter()
                .map(|v| format!("{v:.16e}")),
        );
        if let Some(fl) = &ds.factor_labels {
            rec.extend(
                fl[i * ds.num_factors..(i + 1) * ds.num_factors]
                    .iter()
                    .map(|v| v.to_string()),
            );
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut records = r.records();
    let parse_err = |line: u64, message: String| Error::Parse { line, message };

    let header = match records.next() {
        None => return Err(parse_err(1, "no header".into())),
        Some(h) => h.map_err(|e| parse_err(1, e.to_string()))?,
    };
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(parse_err(1, "header must start with id,label,f0".into()));
    }
    let dim = header.iter().skip(2).take_while(|h| h.starts_with('f') && !h.starts_with("fa")).count();
    let num_factors = header.len() - 2 - dim;
    for (j, h) in header.iter().skip(2).enumerate() {
        let expected = if j < dim {
            format!("f{j}")
        } else {
            format!("fa{}", j - dim)
        };
        if h != expected {
            return Err(parse_err(1, format!("unexpected column `{h}`, expected `{expected}`")));
        }
    }
    if dim == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut factor_labels = Vec::new();
    for (row_no, rec) in records.enumerate() {
        let line = row_no as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("row {line} has {} fields, expected {}", rec.len(), header.len()),
            ));
        }
        let id: u64 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("row {line}: bad id `{}`", &rec[0])))?;
        if id != labels.len() as u64 {
            return Err(parse_err(line, format!("row {line}: ids must be contiguous from 0, got {id}")));
        }
        labels.push(
            rec[1]
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("row {line}: bad label `{}`", &rec[1])))?,
        );
        for j in 0..dim {
            let s = &rec[2 + j];
            features.push(
                s.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("row {line}: bad feature `{s}`")))?,
            );
        }
        for j in 0..num_factors {
            let s = &rec[2 + dim + j];
            factor_labels.push(
                s.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("row {line}: bad factor label `{s}`")))?,
            );
        }
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let factors = (num_factors > 0).then_some((num_factors, factor_labels));
    LabeledDataset::new(dim, num_classes, features, labels, factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_classes_shape_and_balance() {
        let ds = generate_gaussian_classes(2, 500, 10, 3.0, 7).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.dim(), 10);
        let ones = ds.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 500);
        assert_eq!(ds, generate_gaussian_classes(2, 500, 10, 3.0, 7).unwrap());
    }

    #[test]
    fn gaussian_classes_rejects_bad_sizes() {
        assert!(generate_gaussian_classes(1, 5, 3, 1.0, 0).is_err());
        assert!(generate_gaussian_classes(2, 0, 3, 1.0, 0).is_err());
        assert!(generate_gaussian_classes(2, 5, 1, 1.0, 0).is_err());
        assert!(generate_gaussian_classes(2, 5, 3, 0.0, 0).is_err());
    }

    #[test]
    fn factor_dataset_layout() {
        let ds = generate_factor_dataset(5, 5, 20, 8, 8, 3).unwrap();
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.num_factors(), 2);
        assert_eq!(ds.num_classes(), 25);
        for id in ds.ids() {
            let (a, b) = (ds.factor(*id, 0).unwrap(), ds.factor(*id, 1).unwrap());
            assert_eq!(ds.label(*id).unwrap(), a * 5 + b);
        }
        let matches = ds.factor_matches(17, 0, ds.ids()).unwrap();
        assert_eq!(matches.len(), 100);
    }

    #[test]
    fn factor_dataset_shares_means_within_factor() {
        // With zero noise every example of category a has identical A-coordinates.
        let ds = generate_factor_dataset_with_noise(3, 4, 5, 4, 3, 0.0, 11).unwrap();
        for &id in ds.ids() {
            for &other in ds.ids() {
                if ds.factor(id, 0).unwrap() == ds.factor(other, 0).unwrap() {
                    assert_eq!(ds.row(id).unwrap()[..4], ds.row(other).unwrap()[..4]);
                }
            }
        }
        assert!(generate_factor_dataset(1, 4, 5, 4, 3, 0).is_err());
    }

    #[test]
    fn corruption_counts_and_flips() {
        let ds = generate_gaussian_classes(2, 500, 4, 2.0, 1).unwrap();
        let (bad, rec) = corrupt_labels(&ds, 0.1, 5).unwrap();
        assert_eq!(rec.corrupted_ids.len(), 100);
        for id in ds.ids() {
            let changed = bad.label(*id).unwrap() != ds.label(*id).unwrap();
            assert_eq!(changed, rec.corrupted_ids.contains(id));
        }
        let (_, rec2) = corrupt_labels(&ds, 0.1, 5).unwrap();
        assert_eq!(rec.corrupted_ids, rec2.corrupted_ids);
        assert!(corrupt_labels(&ds, 0.0, 5).is_err());
    }

    #[test]
    fn splits_disjoint_with_sizes() {
        let ds = generate_gaussian_classes(2, 1000, 3, 1.0, 2).unwrap();
        let s = make_splits(&ds, 1000, 500, 500, 1).unwrap();
        assert_eq!(
            (s.train_ids.len(), s.weight_learning_ids.len(), s.eval_ids.len()),
            (1000, 500, 500)
        );
        let all: BTreeSet<u64> = s
            .train_ids
            .iter()
            .chain(&s.weight_learning_ids)
            .chain(&s.eval_ids)
            .copied()
            .collect();
        assert_eq!(all.len(), 2000);
        assert!(make_splits(&ds, 1500, 500, 1, 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let ds = generate_factor_dataset(2, 3, 4, 2, 3, 9).unwrap();
        save_csv(&ds, &p).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back, ds);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("id,label,f0,f1,f2,f3,f4,fa0,fa1\n"));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        match load_csv(&p) {
            Err(Error::Parse { message, .. }) => assert_eq!(message, "no header"),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "id,label,f0,f1\n0,1,0.5,0.25\n1,0,oops,1\n").unwrap();
        match load_csv(&p) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("row 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "id,label,f0,f1\n0,1,0.5\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 2, .. })));
    }
}
