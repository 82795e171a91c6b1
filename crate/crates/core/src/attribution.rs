//! TracIn and TRAK attribution, per-group contribution matrices and the
//! query-side weighted score `g(x_q)ᵀ Diag(w) K g(xⁿ)`.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::features::GradientFeatureStore;
use crate::model::ParameterGrouping;
use crate::rng::SplitMix64;
use crate::scalar::{dot, Scalar};
use crate::weighting::WeightVector;

/// Similarity metric `K` between query and training features.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel<T: Scalar = f64> {
    Identity,
    /// `(ΦᵀΦ + λI)⁻¹`, row-major `dim × dim`.
    TrakInverse { matrix: Vec<T>, dim: usize, lambda: T },
}

impl<T: Scalar> Kernel<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Identity => "tracin",
            Kernel::TrakInverse { .. } => "trak",
        }
    }
}

/// Regularization values swept for TRAK.
pub const TRAK_LAMBDA_SWEEP: [f64; 5] = [5e-3, 5e-2, 5e-1, 5.0, 50.0];

pub fn build_trak_kernel<T: Scalar>(train_store: &GradientFeatureStore<T>, lambda: T) -> Result<Kernel<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::invalid("TRAK lambda must be positive"));
    }
    let d = train_store.dim();
    let mut g = crate::linalg::gram(train_store.data(), train_store.len(), d);
    for i in 0..d {
        g[i * d + i] += lambda;
    }
    let matrix = crate::linalg::spd_inverse(&g, d).map_err(|e| match e {
        Error::NumericalFailure(m) => Error::NumericalFailure(format!(
            "{m}; lambda {lambda} too small for the Gram matrix conditioning"
        )),
        other => other,
    })?;
    Ok(Kernel::TrakInverse {
        matrix,
        dim: d,
        lambda,
    })
}

/// Scores of one query over the training set, aligned with `training_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult<T: Scalar = f64> {
    pub query_id: String,
    pub training_ids: Vec<u64>,
    pub scores: Vec<T>,
    pub method_tag: String,
}

/// Descending score, ties by ascending id.
fn rank_order<T: Scalar>(scores: &[T], ids: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order
}

impl<T: Scalar> AttributionResult<T> {
    pub fn new(query_id: impl Into<String>, training_ids: Vec<u64>, scores: Vec<T>, method_tag: impl Into<String>) -> Result<Self> {
        check_dim(training_ids.len(), scores.len(), "attribution scores")?;
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite attribution score for training id {}",
                training_ids[i]
            )));
        }
        Ok(Self {
            query_id: query_id.into(),
            training_ids,
            scores,
            method_tag: method_tag.into(),
        })
    }

    /// Positions into `scores`, best first.
    pub fn ranking(&self) -> Vec<usize> {
        rank_order(&self.scores, &self.training_ids)
    }

    pub fn top_k_ids(&self, k: usize) -> Vec<u64> {
        self.ranking()
            .into_iter()
            .take(k)
            .map(|i| self.training_ids[i])
            .collect()
    }

    /// `train_id,score` sorted by id.
    pub fn write_scores_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "train_id,score")?;
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by_key(|&i| self.training_ids[i]);
        for i in order {
            writeln!(w, "{},{:.17e}", self.training_ids[i], self.scores[i].as_f64())?;
        }
        Ok(())
    }

    /// `rank,train_id,score`, best first, ranks from 1.
    pub fn write_ranking_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "rank,train_id,score")?;
        for (r, i) in self.ranking().into_iter().enumerate() {
            writeln!(w, "{},{},{:.17e}", r + 1, self.training_ids[i], self.scores[i].as_f64())?;
        }
        Ok(())
    }

    pub fn save_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_scores_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn check_layout(expected: &ParameterGrouping, got: &ParameterGrouping) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LayoutMismatch(format!(
            "feature layouts differ ({} vs {} groups, D {} vs {})",
            expected.len(),
            got.len(),
            expected.total_dim(),
            got.total_dim()
        )))
    }
}

/// TracIn: `⟨g(x_q), g(xⁿ)⟩` for every training row.
pub fn tracin_score<T: Scalar>(query_feat: &[T], train_store: &GradientFeatureStore<T>) -> Result<AttributionResult<T>> {
    check_dim(train_store.dim(), query_feat.len(), "query features")?;
    let scores = (0..train_store.len())
        .map(|i| dot(query_feat, train_store.row(i)))
        .collect();
    AttributionResult::new("query", train_store.example_ids().to_vec(), scores, "tracin")
}

/// Rows `K g(xⁿ)`, computed once for all training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSide<T: Scalar = f64> {
    pub training_ids: Vec<u64>,
    pub layout: ParameterGrouping,
    pub data: Vec<T>,
    pub kernel_name: &'static str,
}

impl<T: Scalar> TrainingSide<T> {
    pub fn len(&self) -> usize {
        self.training_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.layout.total_dim();
        &self.data[i * d..(i + 1) * d]
    }
}

pub fn precompute_training_side<T: Scalar>(
    train_store: &GradientFeatureStore<T>,
    kernel: &Kernel<T>,
) -> Result<TrainingSide<T>> {
    let d = train_store.dim();
    let data = match kernel {
        Kernel::Identity => train_store.data().to_vec(),
        Kernel::TrakInverse { matrix, dim, .. } => {
            check_dim(d, *dim, "kernel dimension")?;
            let rows: Vec<Vec<T>> = (0..train_store.len())
                .into_par_iter()
                .map(|i| crate::linalg::matvec(matrix, d, d, train_store.row(i)))
                .collect();
            rows.concat()
        }
    };
    Ok(TrainingSide {
        training_ids: train_store.example_ids().to_vec(),
        layout: train_store.layout().clone(),
        data,
        kernel_name: kernel.name(),
    })
}

/// `C[n, j]`: group `j`'s share of query/training-example `n` score.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupContributionMatrix<T: Scalar = f64> {
    /// Row-major `N × M`.
    pub contributions: Vec<T>,
    pub training_ids: Vec<u64>,
    pub group_names: Vec<String>,
    /// Row of the known positive, for supervised-augmentation queries.
    pub positive: Option<usize>,
}

impl<T: Scalar> GroupContributionMatrix<T> {
    pub fn new(contributions: Vec<T>, training_ids: Vec<u64>, group_names: Vec<String>) -> Result<Self> {
        check_dim(training_ids.len() * group_names.len(), contributions.len(), "contribution matrix")?;
        Ok(Self {
            contributions,
            training_ids,
            group_names,
            positive: None,
        })
    }

    pub fn num_examples(&self) -> usize {
        self.training_ids.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn row(&self, n: usize) -> &[T] {
        let m = self.num_groups();
        &self.contributions[n * m..(n + 1) * m]
    }

    pub fn get(&self, n: usize, j: usize) -> T {
        self.contributions[n * self.num_groups() + j]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.num_examples()).map(|n| self.get(n, j)).collect()
    }

    /// `S = C w` with raw weight values.
    pub fn scores_with(&self, w: &[T]) -> Vec<T> {
        (0..self.num_examples()).map(|n| dot(self.row(n), w)).collect()
    }

    /// Unweighted score `Σ_j C[n, j]`.
    pub fn total_scores(&self) -> Vec<T> {
        (0..self.num_examples())
            .map(|n| self.row(n).iter().copied().sum())
            .collect()
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.contributions.iter_mut().for_each(|v| *v *= c);
        out
    }
}

pub fn group_contributions<T: Scalar>(
    query_feat: &[T],
    training_side: &TrainingSide<T>,
    layout: &ParameterGrouping,
) -> Result<GroupContributionMatrix<T>> {
    check_layout(&training_side.layout, layout)?;
    check_dim(layout.total_dim(), query_feat.len(), "query features")?;
    let m = layout.len();
    let ranges: Vec<_> = (0..m).map(|j| layout.range(j)).collect();
    let mut c = Vec::with_capacity(training_side.len() * m);
    for n in 0..training_side.len() {
        let row = training_side.row(n);
        for r in &ranges {
            c.push(dot(&query_feat[r.clone()], &row[r.clone()]));
        }
    }
    GroupContributionMatrix::new(c, training_side.training_ids.clone(), layout.names())
}

/// Weighted score `C · w`.
pub fn weighted_score<T: Scalar>(c: &GroupContributionMatrix<T>, w: &WeightVector<T>) -> Result<AttributionResult<T>> {
    check_dim(c.num_groups(), w.len(), "weight vector")?;
    AttributionResult::new("query", c.training_ids.clone(), c.scores_with(w.values()), "weighted")
}

fn top_t_sum<T: Scalar>(row: &[T], ids: &[u64], t: usize) -> T {
    rank_order(row, ids)
        .into_iter()
        .take(t)
        .map(|i| row[i])
        .sum()
}

/// Self-influence `τ̃(x_i, x_i; w)` divided by the sum of the top-`t` entries
/// of row `τ̃(x_i, ·; w)`. Entries whose top-`t` sum is below `1e-12` in
/// magnitude are set to 0.
pub fn self_influence<T: Scalar>(
    train_store: &GradientFeatureStore<T>,
    kernel: &Kernel<T>,
    w: Option<&WeightVector<T>>,
    normalize_top_t: usize,
) -> Result<Vec<T>> {
    Ok(self_influence_raw_and_normalized(train_store, kernel, w, normalize_top_t)?.1)
}

/// `(raw, normalized)` self-influence.
pub fn self_influence_raw_and_normalized<T: Scalar>(
    train_store: &GradientFeatureStore<T>,
    kernel: &Kernel<T>,
    w: Option<&WeightVector<T>>,
    normalize_top_t: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if normalize_top_t < 1 {
        return Err(Error::invalid("normalize_top_t must be >= 1"));
    }
    let layout = train_store.layout();
    let m = layout.len();
    let weights: Vec<T> = match w {
        Some(w) => {
            check_dim(m, w.len(), "weight vector")?;
            w.values().to_vec()
        }
        None => vec![T::one() / T::count(m); m],
    };
    let side = precompute_training_side(train_store, kernel)?;
    let ids = train_store.example_ids();
    let pairs: Vec<(T, T)> = (0..train_store.len())
        .into_par_iter()
        .map(|i| {
            let mut q = train_store.row(i).to_vec();
            for j in 0..m {
                for v in &mut q[layout.range(j)] {
                    *v *= weights[j];
                }
            }
            let row: Vec<T> = (0..side.len()).map(|n| dot(&q, side.row(n))).collect();
            let raw = row[i];
            let denom = top_t_sum(&row, ids, normalize_top_t);
            let norm = if denom.abs() < T::of(1e-12) {
                T::zero()
            } else {
                raw / denom
            };
            (raw, norm)
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// Population std of every column over all entries of `cs`.
pub fn column_stds<T: Scalar>(cs: &[GroupContributionMatrix<T>]) -> Vec<T> {
    let m = cs.first().map_or(0, |c| c.num_groups());
    let mut sum = vec![0.0f64; m];
    let mut sq = vec![0.0f64; m];
    let mut count = 0usize;
    for c in cs {
        for n in 0..c.num_examples() {
            for j in 0..m {
                let v = c.get(n, j).as_f64();
                sum[j] += v;
                sq[j] += v * v;
            }
        }
        count += c.num_examples();
    }
    (0..m)
        .map(|j| {
            let mean = sum[j] / count as f64;
            T::of((sq[j] / count as f64 - mean * mean).max(0.0).sqrt())
        })
        .collect()
}

/// Adds seeded `N(0, (s σ_j)²)` noise to every contribution, `σ_j` the std of column `j`.
pub fn inject_score_noise<T: Scalar>(
    c: &GroupContributionMatrix<T>,
    scale_multiplier: T,
    seed: u64,
) -> Result<GroupContributionMatrix<T>> {
    Ok(inject_score_noise_all(std::slice::from_ref(c), scale_multiplier, seed)?
        .pop()
        .expect("one matrix in, one out"))
}

/// As [`inject_score_noise`] with `σ_j` pooled over all query matrices; matrix
/// `i` draws from the stream `derive(seed, i)`.
pub fn inject_score_noise_all<T: Scalar>(
    cs: &[GroupContributionMatrix<T>],
    scale_multiplier: T,
    seed: u64,
) -> Result<Vec<GroupContributionMatrix<T>>> {
    if !(scale_multiplier >= T::zero()) {
        return Err(Error::invalid("noise scale multiplier must be >= 0"));
    }
    if scale_multiplier == T::zero() {
        return Ok(cs.to_vec());
    }
    let stds = column_stds(cs);
    Ok(cs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = SplitMix64::derive(seed, i as u64);
            let mut out = c.clone();
            let m = c.num_groups();
            for (k, v) in out.contributions.iter_mut().enumerate() {
                *v += scale_multiplier * stds[k % m] * T::of(rng.next_gaussian());
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterGrouping;

    fn toy_store() -> GradientFeatureStore<f64> {
        let layout = ParameterGrouping::new(vec![("a".into(), 1), ("b".into(), 1)]).unwrap();
        GradientFeatureStore::new(vec![0, 1, 2], layout, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
    }

    fn random_store(n: usize, dims: &[usize], seed: u64) -> GradientFeatureStore<f64> {
        let layout = ParameterGrouping::new(
            dims.iter().enumerate().map(|(j, &d)| (format!("g{j}"), d)).collect(),
        )
        .unwrap();
        let mut rng = SplitMix64::new(seed);
        let data = (0..n * layout.total_dim()).map(|_| rng.next_gaussian()).collect();
        GradientFeatureStore::new((0..n as u64).collect(), layout, data).unwrap()
    }

    #[test]
    fn tracin_hand_example() {
        let store = toy_store();
        let r = tracin_score(&[2.0, 1.0], &store).unwrap();
        assert_eq!(r.scores, vec![2.0, 1.0, 3.0]);
        let zero = tracin_score(&[0.0, 0.0], &store).unwrap();
        assert!(zero.scores.iter().all(|&s| s == 0.0));
        let self_score = tracin_score(store.row(2), &store).unwrap();
        assert_eq!(self_score.scores[2], 2.0);
        assert!(matches!(tracin_score(&[1.0], &store), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn contributions_hand_example() {
        let store = toy_store();
        let side = precompute_training_side(&store, &Kernel::Identity).unwrap();
        let c = group_contributions(&[2.0, 1.0], &side, store.layout()).unwrap();
        assert_eq!(c.contributions, vec![2.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
        let w = WeightVector::from_values(vec![0.75, 0.25], c.group_names.clone()).unwrap();
        let s = weighted_score(&c, &w).unwrap();
        assert_eq!(s.scores, vec![1.5, 0.25, 1.75]);
        let one_hot_ish = weighted_score(&c, &WeightVector::from_values(vec![1.0, 0.0], c.group_names.clone()).unwrap());
        assert_eq!(one_hot_ish.unwrap().scores, c.column(0));
    }

    #[test]
    fn zero_features_give_scaled_identity_kernel() {
        let layout = ParameterGrouping::new(vec![("a".into(), 3)]).unwrap();
        let store = GradientFeatureStore::new(vec![0, 1], layout, vec![0.0; 6]).unwrap();
        let k = build_trak_kernel(&store, 4.0).unwrap();
        let Kernel::TrakInverse { matrix, .. } = &k else { panic!() };
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(matrix[i * 3 + j], if i == j { 0.25 } else { 0.0 });
            }
        }
        let side = precompute_training_side(&store, &k).unwrap();
        assert!(side.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trak_kernel_residual_and_sweep() {
        let store = random_store(40, &[10, 6], 3);
        for &lambda in &TRAK_LAMBDA_SWEEP {
            let k = build_trak_kernel(&store, lambda).unwrap();
            let Kernel::TrakInverse { matrix, dim, .. } = &k else { panic!() };
            assert!(crate::linalg::cholesky(matrix, *dim).is_ok());
            let mut a = crate::linalg::gram(store.data(), store.len(), 16);
            for i in 0..16 {
                a[i * 16 + i] += lambda;
            }
            for i in 0..16 {
                for j in 0..16 {
                    let v: f64 = (0..16).map(|q| a[i * 16 + q] * matrix[q * 16 + j]).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((v - e).abs() < 1e-8, "lambda {lambda}: {v}");
                }
            }
        }
        assert!(build_trak_kernel(&store, 0.0).is_err());
    }

    #[test]
    fn training_side_for_zero_features_trak_is_data_over_lambda() {
        let layout = ParameterGrouping::new(vec![("a".into(), 2)]).unwrap();
        let zeros = GradientFeatureStore::new(vec![0, 1], layout.clone(), vec![0.0; 4]).unwrap();
        let k = build_trak_kernel(&zeros, 2.0).unwrap();
        let other = GradientFeatureStore::new(vec![0, 1], layout, vec![1.0, 2.0, -4.0, 0.5]).unwrap();
        let side = precompute_training_side(&other, &k).unwrap();
        for (a, b) in side.data.iter().zip([0.5f64, 1.0, -2.0, 0.25]) {
            assert!((*a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_group_column_is_the_score() {
        let store = random_store(30, &[5], 8);
        let side = precompute_training_side(&store, &Kernel::Identity).unwrap();
        let q = store.row(3).to_vec();
        let c = group_contributions(&q, &side, store.layout()).unwrap();
        assert_eq!(c.column(0), tracin_score(&q, &store).unwrap().scores);
    }

    #[test]
    fn layout_mismatch() {
        let store = random_store(5, &[2, 2], 1);
        let side = precompute_training_side(&store, &Kernel::Identity).unwrap();
        let other = ParameterGrouping::new(vec![("x".into(), 4)]).unwrap();
        assert!(matches!(
            group_contributions(&[0.0; 4], &side, &other),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn self_influence_identity_uniform() {
        let store = random_store(25, &[3, 4], 2);
        let (raw, _) = self_influence_raw_and_normalized(&store, &Kernel::Identity, None, 10).unwrap();
        for (i, r) in raw.iter().enumerate() {
            let sq: f64 = store.row(i).iter().map(|v| v * v).sum();
            assert!((r - sq / 2.0).abs() < 1e-12);
            assert!(*r >= 0.0);
        }
        assert!(self_influence(&store, &Kernel::Identity, None, 0).is_err());
    }

    #[test]
    fn self_influence_constant_rows() {
        // Every example has the same feature vector: every score equals c.
        let layout = ParameterGrouping::new(vec![("a".into(), 2)]).unwrap();
        let store = GradientFeatureStore::new((0..4).collect(), layout, [1.0, 1.0].repeat(4)).unwrap();
        let norm = self_influence::<f64>(&store, &Kernel::Identity, None, 4).unwrap();
        assert!(norm.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn noise_injection() {
        let store = random_store(5000, &[2, 3], 4);
        let side = precompute_training_side(&store, &Kernel::Identity).unwrap();
        let c = group_contributions(&store.row(0).to_vec(), &side, store.layout()).unwrap();
        assert_eq!(inject_score_noise(&c, 0.0, 1).unwrap(), c);
        let a = inject_score_noise(&c, 1.0, 1).unwrap();
        assert_eq!(a, inject_score_noise(&c, 1.0, 1).unwrap());
        let stds = column_stds(std::slice::from_ref(&c));
        for j in 0..2 {
            let diff: Vec<f64> = (0..c.num_examples()).map(|n| a.get(n, j) - c.get(n, j)).collect();
            let mean = diff.iter().sum::<f64>() / diff.len() as f64;
            let sd = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diff.len() as f64).sqrt();
            assert!((sd / stds[j] - 1.0).abs() < 0.1, "group {j}: {sd} vs {}", stds[j]);
        }
        assert!(inject_score_noise(&c, -1.0, 1).is_err());
    }

    #[test]
    fn ranking_ties_break_by_id() {
        let r = AttributionResult::new("q", vec![5, 3, 9, 1], vec![1.0, 2.0, 1.0, 1.0], "t").unwrap();
        assert_eq!(r.top_k_ids(4), vec![3, 1, 5, 9]);
        let mut out = Vec::new();
        r.write_ranking_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("rank,train_id,score\n1,3,"));
        let mut out = Vec::new();
        r.write_scores_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("train_id,score\n1,"));
        assert!(AttributionResult::new("q", vec![1], vec![f64::NAN], "t").is_err());
    }
}
