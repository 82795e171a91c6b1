//! Evaluation protocols: linear datamodeling score (LDS), mislabel-detection
//! AUC, tail-patch, and Recall@k, plus the rank statistics they rest on.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionResult, GroupContributionMatrix};
use crate::dataset::{CorruptionRecord, LabeledDataset};
use crate::error::{check_dim, Error, Result};
use crate::model::{retrain_on_subset, Architecture, ModelCheckpoint, TrainConfig};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub const DEFAULT_LDS_SUBSETS: usize = 64;
pub const DEFAULT_LDS_ALPHA: f64 = 0.5;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// A test input for which attributions are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub features: Vec<f64>,
    pub label: usize,
}

impl Query {
    pub fn from_dataset(ds: &LabeledDataset, id: u64) -> Result<Self> {
        Ok(Self {
            id: id.to_string(),
            features: ds.row(id)?.to_vec(),
            label: ds.label(id)?,
        })
    }

    pub fn features_as<T: Scalar>(&self) -> Vec<T> {
        self.features.iter().map(|&v| T::of(v)).collect()
    }
}

pub fn queries_from_ids(ds: &LabeledDataset, ids: &[u64]) -> Result<Vec<Query>> {
    ids.iter().map(|&id| Query::from_dataset(ds, id)).collect()
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation with its degeneracy flag (set when either input is
/// constant, in which case the value is 0).
pub fn spearman_flagged(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    check_dim(a.len(), b.len(), "spearman inputs")?;
    if a.len() < 2 {
        return Err(Error::invalid("spearman needs at least two points"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let mid = (a.len() as f64 + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mid, y - mid);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((cov / (va * vb).sqrt()).clamp(-1.0, 1.0), false))
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(spearman_flagged(a, b)?.0)
}

/// Per-query metric values with a normal-approximation 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub n_queries: usize,
    pub mean: f64,
    pub ci95: f64,
    pub query_ids: Vec<String>,
    pub per_query: Vec<f64>,
    /// Queries whose value was defined by a degenerate-input convention.
    pub degenerate: usize,
}

impl EvalReport {
    pub fn new(metric: impl Into<String>, query_ids: Vec<String>, per_query: Vec<f64>, degenerate: usize) -> Result<Self> {
        check_dim(query_ids.len(), per_query.len(), "report values")?;
        if per_query.is_empty() {
            return Err(Error::invalid("report needs at least one query"));
        }
        let (mean, sd) = mean_sd(&per_query);
        Ok(Self {
            metric: metric.into(),
            n_queries: per_query.len(),
            mean,
            ci95: 1.96 * sd / (per_query.len() as f64).sqrt(),
            query_ids,
            per_query,
            degenerate,
        })
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        self.ci95 / 1.96
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "query_id,{}", self.metric)?;
        for (id, v) in self.query_ids.iter().zip(&self.per_query) {
            writeln!(w, "{id},{v:.17e}")?;
        }
        Ok(())
    }

    pub fn save(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        let jp = json_path.as_ref();
        std::fs::write(jp, self.to_json() + "\n").map_err(|e| Error::io(jp, e))?;
        let cp = csv_path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(cp, e))?;
        std::fs::write(cp, buf).map_err(|e| Error::io(cp, e))
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdsGroundTruth {
    /// Sorted ids of the full training set.
    pub train_ids: Vec<u64>,
    /// Sorted member ids of each subset.
    pub subsets: Vec<Vec<u64>>,
    pub query_ids: Vec<String>,
    /// `outputs[q][m]` = model output of subset model `m` on query `q`.
    pub outputs: Vec<Vec<f64>>,
    pub alpha: f64,
    pub seed: u64,
}

impl LdsGroundTruth {
    pub fn num_subsets(&self) -> usize {
        self.subsets.len()
    }

    /// Subset membership as positions into `train_ids`.
    fn member_positions(&self) -> Vec<Vec<usize>> {
        self.subsets
            .iter()
            .map(|s| {
                s.iter()
                    .map(|id| self.train_ids.binary_search(id).expect("subset ⊆ train"))
                    .collect()
            })
            .collect()
    }
}

/// Retrains one model per random subset of size `round(alpha · N)` and
/// records each model's output on every query. Subset `m` is drawn from a
/// stream derived from `(seed, m)`; training runs in parallel.
#[allow(clippy::too_many_arguments)]
pub fn build_lds_ground_truth<T: Scalar>(
    ds: &LabeledDataset,
    train_ids: &[u64],
    arch: &Architecture,
    cfg: &TrainConfig,
    alpha: f64,
    m_subsets: usize,
    queries: &[Query],
    seed: u64,
) -> Result<LdsGroundTruth> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if m_subsets < 2 {
        return Err(Error::invalid("need at least two subsets"));
    }
    let mut sorted = train_ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let size = (alpha * sorted.len() as f64).round() as usize;
    if size == 0 {
        return Err(Error::invalid("subset size rounds to zero"));
    }
    let subsets: Vec<Vec<u64>> = (0..m_subsets)
        .map(|m| {
            let mut s: Vec<u64> = SplitMix64::derive(seed, m as u64)
                .sample_indices(sorted.len(), size)
                .into_iter()
                .map(|i| sorted[i])
                .collect();
            s.sort_unstable();
            s
        })
        .collect();
    let qx: Vec<Vec<T>> = queries.iter().map(|q| q.features_as()).collect();
    let per_subset: Vec<Vec<f64>> = subsets
        .par_iter()
        .enumerate()
        .map(|(m, subset)| {
            let wrap = |e: Error| Error::Subset {
                index: m,
                source: Box::new(e),
            };
            let sub_cfg = TrainConfig {
                seed: SplitMix64::derive(cfg.seed, m as u64).next_u64(),
                ..cfg.clone()
            };
            let ckpt = retrain_on_subset::<T>(ds, subset, arch, &sub_cfg).map_err(wrap)?;
            queries
                .iter()
                .zip(&qx)
                .map(|(q, x)| {
                    let out = ckpt.model_output(x, q.label).map_err(wrap)?.as_f64();
                    if out.is_finite() {
                        Ok(out)
                    } else {
                        Err(wrap(Error::NumericalFailure("non-finite model output".into())))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let outputs = (0..queries.len())
        .map(|q| per_subset.iter().map(|row| row[q]).collect())
        .collect();
    Ok(LdsGroundTruth {
        train_ids: sorted,
        subsets,
        query_ids: queries.iter().map(|q| q.id.clone()).collect(),
        outputs,
        alpha,
        seed,
    })
}

/// LDS from raw per-query score vectors aligned to `gt.train_ids`.
pub fn lds_from_scores(gt: &LdsGroundTruth, scores: &[Vec<f64>]) -> Result<EvalReport> {
    check_dim(gt.outputs.len(), scores.len(), "LDS query count")?;
    let members = gt.member_positions();
    let mut values = Vec::with_capacity(scores.len());
    let mut degenerate = 0;
    for (actual, s) in gt.outputs.iter().zip(scores) {
        check_dim(gt.train_ids.len(), s.len(), "LDS score vector")?;
        let predicted: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| s[i]).sum()).collect();
        let (v, deg) = spearman_flagged(actual, &predicted)?;
        degenerate += deg as usize;
        values.push(v);
    }
    EvalReport::new("lds", gt.query_ids.clone(), values, degenerate)
}

/// Per-query Spearman between retrained outputs and subset-summed scores.
pub fn lds<T: Scalar>(gt: &LdsGroundTruth, attributions: &[AttributionResult<T>]) -> Result<EvalReport> {
    let scores = attributions
        .iter()
        .map(|a| {
            if a.training_ids != gt.train_ids {
                return Err(Error::LayoutMismatch(format!(
                    "attribution for query {} is not aligned to the ground-truth training ids",
                    a.query_id
                )));
            }
            Ok(a.scores.iter().map(|v| v.as_f64()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    lds_from_scores(gt, &scores)
}

/// One LDS report per group, using the single column `C[:, j]` as scores.
pub fn per_group_lds_reports<T: Scalar>(
    gt: &LdsGroundTruth,
    contribs: &[GroupContributionMatrix<T>],
) -> Result<Vec<EvalReport>> {
    let first = contribs
        .first()
        .ok_or_else(|| Error::invalid("per-group LDS needs at least one query"))?;
    for c in contribs {
        if c.training_ids != gt.train_ids {
            return Err(Error::LayoutMismatch(
                "contributions are not aligned to the ground-truth training ids".into(),
            ));
        }
        if c.group_names != first.group_names {
            return Err(Error::LayoutMismatch("queries disagree on the parameter groups".into()));
        }
    }
    (0..first.num_groups())
        .map(|j| {
            let scores: Vec<Vec<f64>> = contribs
                .iter()
                .map(|c| c.column(j).into_iter().map(|v| v.as_f64()).collect())
                .collect();
            let mut r = lds_from_scores(gt, &scores)?;
            r.metric = format!("lds[{}]", first.group_names[j]);
            Ok(r)
        })
        .collect()
}

pub fn per_group_lds<T: Scalar>(gt: &LdsGroundTruth, contribs: &[GroupContributionMatrix<T>]) -> Result<Vec<f64>> {
    Ok(per_group_lds_reports(gt, contribs)?.into_iter().map(|r| r.mean).collect())
}

/// Mann–Whitney AUC with average ranks for ties; corrupted ids are the
/// positive class.
pub fn mislabel_auc<T: Scalar>(scores: &[T], ids: &[u64], record: &CorruptionRecord) -> Result<f64> {
    check_dim(ids.len(), scores.len(), "self-influence scores")?;
    let v: Vec<f64> = scores.iter().map(|s| s.as_f64()).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let ranks = average_ranks(&v);
    let mut n_pos = 0usize;
    let mut rank_sum = 0.0;
    for (id, r) in ids.iter().zip(&ranks) {
        if record.corrupted_ids.contains(id) {
            n_pos += 1;
            rank_sum += r;
        }
    }
    let n_neg = ids.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "AUC needs both classes (positives {n_pos}, negatives {n_neg})"
        )));
    }
    let np = n_pos as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

/// Change in the query's log-probability after one SGD step on its top-k
/// proponents (ties by id), per query.
pub fn tail_patch<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    ds: &LabeledDataset,
    queries: &[Query],
    attributions: &[AttributionResult<T>],
    top_k: usize,
    lr: f64,
) -> Result<EvalReport> {
    check_dim(queries.len(), attributions.len(), "tail-patch attributions")?;
    if top_k < 1 {
        return Err(Error::invalid("top_k must be >= 1"));
    }
    let deltas: Vec<f64> = queries
        .par_iter()
        .zip(attributions)
        .map(|(q, a)| {
            let rows = a
                .top_k_ids(top_k)
                .into_iter()
                .map(|id| Ok((ds.row_as::<T>(id)?, ds.label(id)?)))
                .collect::<Result<Vec<_>>>()?;
            let batch: Vec<(&[T], usize)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
            let x = q.features_as::<T>();
            let before = ckpt.log_prob(&x, q.label)?;
            let after = ckpt.sgd_step(&batch, T::of(lr))?.log_prob(&x, q.label)?;
            Ok((after - before).as_f64())
        })
        .collect::<Result<_>>()?;
    EvalReport::new("tail_patch", queries.iter().map(|q| q.id.clone()).collect(), deltas, 0)
}

/// `|top-k ∩ ground truth| / k`.
pub fn recall_at_k<T: Scalar>(attribution: &AttributionResult<T>, ground_truth: &BTreeSet<u64>, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let hits = attribution
        .top_k_ids(k)
        .iter()
        .filter(|id| ground_truth.contains(id))
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub mean_diff: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
}

/// Percentile bootstrap of `mean(a − b)` resampling queries jointly.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<BootstrapInterval> {
    check_dim(a.len(), b.len(), "paired samples")?;
    if a.is_empty() || resamples == 0 {
        return Err(Error::invalid("bootstrap needs samples and resamples"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mut rng = SplitMix64::new(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| d[rng.next_below(n as u64) as usize]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = ((0.025 * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = ((0.975 * resamples as f64).ceil() as usize).saturating_sub(1).min(resamples - 1);
    Ok(BootstrapInterval {
        mean_diff: d.iter().sum::<f64>() / n as f64,
        lower: means[lo],
        upper: means[hi],
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_gaussian_classes;

    fn attribution(ids: Vec<u64>, scores: Vec<f64>) -> AttributionResult<f64> {
        AttributionResult::new("q", ids, scores, "test").unwrap()
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        assert_eq!(spearman(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0);
        assert!((spearman(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(spearman_flagged(&a, &[2.0; 4]).unwrap(), (0.0, true));
        assert!(spearman(&a, &[1.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn auc_examples() {
        let ids: Vec<u64> = (0..6).collect();
        let record = CorruptionRecord {
            corrupted_ids: [1, 4].into_iter().collect(),
            original_labels: Default::default(),
            corruption_fraction: 2.0 / 6.0,
        };
        let perfect = [0.0, 5.0, 0.1, 0.2, 4.0, 0.3];
        assert_eq!(mislabel_auc(&perfect, &ids, &record).unwrap(), 1.0);
        assert_eq!(mislabel_auc(&[1.0; 6], &ids, &record).unwrap(), 0.5);
        let s = [0.3, 0.9, 0.1, 0.7, 0.2, 0.5];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let sum = mislabel_auc(&s, &ids, &record).unwrap() + mislabel_auc(&neg, &ids, &record).unwrap();
        assert!((sum - 1.0).abs() < 1e-15);
        let empty = CorruptionRecord {
            corrupted_ids: BTreeSet::new(),
            ..record
        };
        assert!(matches!(mislabel_auc(&s, &ids, &empty), Err(Error::Degenerate(_))));
    }

    #[test]
    fn recall_examples() {
        let ids: Vec<u64> = (0..20).collect();
        let scores: Vec<f64> = (0..20).map(|i| 20.0 - i as f64).collect();
        let a = attribution(ids, scores);
        let all: BTreeSet<u64> = (0..10).collect();
        assert_eq!(recall_at_k(&a, &all, 10).unwrap(), 1.0);
        let none: BTreeSet<u64> = (10..20).collect();
        assert_eq!(recall_at_k(&a, &none, 10).unwrap(), 0.0);
        let four: BTreeSet<u64> = [0, 3, 7, 9, 15].into_iter().collect();
        assert_eq!(recall_at_k(&a, &four, 10).unwrap(), 0.4);
        assert!(recall_at_k(&a, &four, 0).is_err());
    }

    fn toy_ground_truth() -> LdsGroundTruth {
        LdsGroundTruth {
            train_ids: vec![0, 1, 2, 3],
            subsets: vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]],
            query_ids: vec!["a".into()],
            outputs: vec![vec![3.0, 5.0, 9.0, 4.0]],
            alpha: 0.5,
            seed: 0,
        }
    }

    #[test]
    fn lds_matches_hand_ranking() {
        let gt = toy_ground_truth();
        // Scores (1, 2, 4, 3) predict sums (3, 6, 7, 4): same order as outputs.
        let r = lds(&gt, &[attribution(vec![0, 1, 2, 3], vec![1.0, 2.0, 4.0, 3.0])]).unwrap();
        assert_eq!(r.per_query, vec![1.0]);
        let bad = attribution(vec![0, 1, 2, 5], vec![1.0; 4]);
        assert!(matches!(lds(&gt, &[bad]), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn report_ci_and_serialization() {
        let r = EvalReport::new("m", vec!["a".into(), "b".into(), "c".into()], vec![1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(r.mean, 2.0);
        assert!((r.ci95 - 1.96 / 3f64.sqrt()).abs() < 1e-15);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["n_queries"], 3);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("query_id,m\na,1.00000000000000000e0\n"));
    }

    #[test]
    fn bootstrap_detects_shift() {
        let mut rng = SplitMix64::new(3);
        let b: Vec<f64> = (0..100).map(|_| rng.next_gaussian()).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 0.5 + 0.1 * rng.next_gaussian()).collect();
        let ci = paired_bootstrap(&a, &b, BOOTSTRAP_RESAMPLES, 1).unwrap();
        assert!(ci.lower > 0.4 && ci.upper < 0.6, "{ci:?}");
        let same = paired_bootstrap(&b, &b, 100, 1).unwrap();
        assert_eq!((same.lower, same.upper), (0.0, 0.0));
    }

    #[test]
    fn ground_truth_and_tail_patch_smoke() {
        let ds = generate_gaussian_classes(2, 30, 3, 3.0, 5).unwrap();
        let train: Vec<u64> = (0..50).collect();
        let arch = Architecture::logistic(3, 2);
        let cfg = TrainConfig {
            epochs: 20,
            lr: 0.5,
            batch_size: 50,
            weight_decay: 0.0,
            seed: 1,
        };
        let queries = queries_from_ids(&ds, &[50, 51, 52]).unwrap();
        let gt = build_lds_ground_truth::<f64>(&ds, &train, &arch, &cfg, 0.5, 4, &queries, 9).unwrap();
        assert!(gt.subsets.iter().all(|s| s.len() == 25));
        assert_eq!(gt, build_lds_ground_truth::<f64>(&ds, &train, &arch, &cfg, 0.5, 4, &queries, 9).unwrap());
        assert!(build_lds_ground_truth::<f64>(&ds, &train, &arch, &cfg, 1.0, 4, &queries, 9).is_err());

        let ckpt = crate::model::train::<f64>(&ds, &train, &arch, &cfg).unwrap();
        let attrs: Vec<_> = (0..3).map(|q| attribution(train.clone(), (0..50).map(|i| ((i * 7 + q) % 13) as f64).collect())).collect();
        let zero = tail_patch(&ckpt, &ds, &queries, &attrs, 5, 0.0).unwrap();
        assert!(zero.per_query.iter().all(|&d| d == 0.0));
        assert!(tail_patch(&ckpt, &ds, &queries, &attrs, 0, 0.1).is_err());
    }
}
