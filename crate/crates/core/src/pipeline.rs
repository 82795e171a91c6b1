//! End-to-end benchmark: a Gaussian-class dataset, a one-hidden-layer network
//! with a frozen noise head, projected per-group gradient features, and the
//! query sets used for weight learning and evaluation.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    build_trak_kernel, group_contributions, inject_score_noise_all, precompute_training_side, weighted_score, AttributionResult,
    GroupContributionMatrix, Kernel, TrainingSide,
};
use crate::dataset::{
    corrupt_labels_among, generate_factor_dataset_with_noise, generate_gaussian_classes, make_splits, CorruptionRecord,
    DataSplit, LabeledDataset, FACTOR_NOISE_STD,
};
use crate::error::{Error, Result};
use crate::eval::{build_lds_ground_truth, lds_from_scores, queries_from_ids, recall_at_k, EvalReport, LdsGroundTruth, Query};
use crate::features::{
    build_projection_clamped, extract_features, group_indices, select_blocks, GradientFeatureStore, ProjectionSpec, Projector,
};
use crate::model::{train, Architecture, Distractor, ModelCheckpoint, TrainConfig};
use crate::rng::SplitMix64;
use crate::weighting::{learn_weights, WeightLearnConfig, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    TracIn,
    Trak,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TracIn => "tracin",
            Method::Trak => "trak",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tracin" => Ok(Method::TracIn),
            "trak" => Ok(Method::Trak),
            other => Err(Error::invalid(format!("unknown attribution method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub num_classes: usize,
    /// Informative input dimensions.
    pub dim: usize,
    /// Extra pure-noise input columns appended after the informative ones.
    pub noise_dims: usize,
    pub noise_dim_std: f64,
    pub separation: f64,
    pub n_train: usize,
    pub n_weight: usize,
    pub n_eval: usize,
    pub data_seed: u64,
    /// Fraction of training labels flipped (0 disables corruption).
    pub corruption: f64,
    pub hidden: usize,
    pub hidden_blocks: usize,
    /// Length of the distractor noise input (0 disables the distractor head).
    pub distractor_dim: usize,
    pub distractor_scale: f64,
    pub init_seed: u64,
    pub epochs: usize,
    pub lr: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub weight_decay: f64,
    pub train_seed: u64,
    pub projection_dim: usize,
    pub projection_seed: u64,
    /// Attribute over the bias groups as well as the weight groups.
    pub bias_groups: bool,
    pub trak_lambda: f64,
    pub lds_subsets: usize,
    pub lds_alpha: f64,
    pub lds_seed: u64,
    pub weighting: WeightLearnConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            dim: 12,
            noise_dims: 0,
            noise_dim_std: 1.0,
            separation: 2.0,
            n_train: 1000,
            n_weight: 200,
            n_eval: 100,
            data_seed: 7,
            corruption: 0.0,
            hidden: 16,
            hidden_blocks: 4,
            distractor_dim: 16,
            distractor_scale: 0.2,
            init_seed: 11,
            epochs: 300,
            lr: 0.5,
            batch_size: 0,
            weight_decay: 0.0,
            train_seed: 13,
            projection_dim: 32,
            projection_seed: 17,
            bias_groups: false,
            trak_lambda: 0.5,
            lds_subsets: 64,
            lds_alpha: 0.5,
            lds_seed: 19,
            weighting: WeightLearnConfig {
                k: 10,
                lambda_reg: 0.5,
                ..WeightLearnConfig::default()
            },
        }
    }
}

impl BenchmarkConfig {
    pub fn input_dim(&self) -> usize {
        self.dim + self.noise_dims
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::Mlp1 {
            input_dim: self.input_dim(),
            hidden: self.hidden,
            num_classes: self.num_classes,
            hidden_blocks: self.hidden_blocks,
            block_diagonal: false,
            distractor: (self.distractor_dim > 0).then(|| Distractor {
                dim: self.distractor_dim,
                scale: self.distractor_scale,
                seed: self.init_seed ^ 0x5eed,
            }),
            init_seed: self.init_seed,
        }
    }

    /// Names of the groups attribution runs over.
    pub fn attribution_groups(&self) -> Vec<String> {
        self.architecture()
            .grouping()
            .names()
            .into_iter()
            .filter(|n| self.bias_groups || !n.ends_with(".bias"))
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: if self.batch_size == 0 {
                self.n_train
            } else {
                self.batch_size
            },
            weight_decay: self.weight_decay,
            seed: self.train_seed,
        }
    }

    /// Dataset with informative and noise columns plus the three disjoint splits.
    pub fn dataset(&self) -> Result<(LabeledDataset, DataSplit)> {
        let total = self.n_train + self.n_weight + self.n_eval;
        let per_class = total.div_ceil(self.num_classes);
        let base = generate_gaussian_classes(self.num_classes, per_class, self.dim, self.separation, self.data_seed)?;
        let ds = if self.noise_dims == 0 {
            base
        } else {
            let d = self.input_dim();
            let mut rng = SplitMix64::derive(self.data_seed, 0x6e6f);
            let mut features = Vec::with_capacity(base.len() * d);
            for row in base.features().chunks(self.dim) {
                features.extend_from_slice(row);
                for _ in 0..self.noise_dims {
                    features.push(self.noise_dim_std * rng.next_gaussian());
                }
            }
            LabeledDataset::new(d, self.num_classes, features, base.labels().to_vec(), None)?
        };
        let split = make_splits(&ds, self.n_train, self.n_weight, self.n_eval, self.data_seed)?;
        Ok((ds, split))
    }
}

/// Generated benchmark data; `dataset` carries the corrupted training labels.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub clean: LabeledDataset,
    pub dataset: LabeledDataset,
    pub split: DataSplit,
    pub corruption: Option<CorruptionRecord>,
}

impl BenchmarkConfig {
    pub fn data(&self) -> Result<BenchmarkData> {
        let (clean, split) = self.dataset()?;
        let (dataset, corruption) = if self.corruption > 0.0 {
            let (ds, rec) = corrupt_labels_among(&clean, &split.train_ids, self.corruption, self.data_seed ^ 0xc0)?;
            (ds, Some(rec))
        } else {
            (clean.clone(), None)
        };
        Ok(BenchmarkData {
            clean,
            dataset,
            split,
            corruption,
        })
    }

    pub fn train_model(&self, data: &BenchmarkData) -> Result<ModelCheckpoint> {
        train::<f64>(&data.dataset, &data.split.train_ids, &self.architecture(), &self.train_config())
    }

    /// Projection, attribution-group positions and the training feature store.
    pub fn extract(
        &self,
        checkpoint: &ModelCheckpoint,
        data: &BenchmarkData,
    ) -> Result<(ProjectionSpec, Vec<usize>, GradientFeatureStore)> {
        let projection = build_projection_clamped(&checkpoint.grouping, self.projection_dim, self.projection_seed)?;
        let full = extract_features(checkpoint, &data.dataset, &data.split.train_ids, &projection)?;
        let names = self.attribution_groups();
        let groups = group_indices(full.layout(), &names)?;
        let store = full.select_groups(&names)?;
        Ok((projection, groups, store))
    }
}

/// A trained benchmark model with its training-set feature store.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    /// Training labels may be corrupted; see `corruption`.
    pub dataset: LabeledDataset,
    pub clean_dataset: LabeledDataset,
    pub split: DataSplit,
    pub corruption: Option<CorruptionRecord>,
    pub checkpoint: ModelCheckpoint,
    pub projection: ProjectionSpec,
    /// Positions of the attribution groups in the model grouping.
    pub groups: Vec<usize>,
    /// Training features restricted to the attribution groups.
    pub train_store: GradientFeatureStore,
}

impl Benchmark {
    pub fn prepare(config: &BenchmarkConfig) -> Result<Self> {
        let data = config.data()?;
        let checkpoint = config.train_model(&data)?;
        let (projection, groups, train_store) = config.extract(&checkpoint, &data)?;
        Ok(Self {
            config: config.clone(),
            dataset: data.dataset,
            clean_dataset: data.clean,
            split: data.split,
            corruption: data.corruption,
            checkpoint,
            projection,
            groups,
            train_store,
        })
    }

    pub fn weight_learning_queries(&self) -> Result<Vec<Query>> {
        queries_from_ids(&self.clean_dataset, &self.split.weight_learning_ids)
    }

    pub fn eval_queries(&self) -> Result<Vec<Query>> {
        queries_from_ids(&self.clean_dataset, &self.split.eval_ids)
    }

    pub fn kernel(&self, method: Method) -> Result<Kernel> {
        match method {
            Method::TracIn => Ok(Kernel::Identity),
            Method::Trak => build_trak_kernel(&self.train_store, self.config.trak_lambda),
        }
    }

    pub fn training_side(&self, method: Method) -> Result<TrainingSide> {
        precompute_training_side(&self.train_store, &self.kernel(method)?)
    }

    /// Projected gradient features of arbitrary queries.
    pub fn query_features(&self, queries: &[Query]) -> Result<Vec<Vec<f64>>> {
        let projector = Projector::<f64>::new(&self.projection);
        let layout = self.projection.output_layout();
        queries
            .par_iter()
            .map(|q| {
                let f = projector.features(&self.checkpoint, &q.features, q.label)?;
                Ok(select_blocks(&layout, &f, &self.groups))
            })
            .collect()
    }

    pub fn contributions(&self, side: &TrainingSide, queries: &[Query]) -> Result<Vec<GroupContributionMatrix>> {
        let feats = self.query_features(queries)?;
        let layout = self.train_store.layout();
        feats
            .par_iter()
            .map(|f| group_contributions(f, side, layout))
            .collect()
    }

    pub fn ground_truth(&self, queries: &[Query]) -> Result<LdsGroundTruth> {
        build_lds_ground_truth::<f64>(
            &self.dataset,
            &self.split.train_ids,
            &self.config.architecture(),
            &self.config.train_config(),
            self.config.lds_alpha,
            self.config.lds_subsets,
            queries,
            self.config.lds_seed,
        )
    }
}

/// Noise multipliers swept by default when probing robustness of weight learning.
pub const NOISE_GRID: [f64; 7] = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0];

/// Scores `C · w` per query, or the plain row sums when `w` is `None`.
pub fn query_scores(contribs: &[GroupContributionMatrix], w: Option<&WeightVector>) -> Vec<Vec<f64>> {
    contribs
        .iter()
        .map(|c| match w {
            Some(w) => c.scores_with(w.values()),
            None => c.total_scores(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NoisePoint {
    pub scale: f64,
    pub weights: WeightVector,
    /// LDS of the learned weights on the clean evaluation contributions.
    pub lds: EvalReport,
}

/// Learns weights from weight-learning contributions perturbed at each noise
/// multiplier in `grid` and scores them on clean evaluation contributions.
pub fn noise_sweep(
    weight_contribs: &[GroupContributionMatrix],
    eval_contribs: &[GroupContributionMatrix],
    gt: &LdsGroundTruth,
    cfg: &WeightLearnConfig,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<NoisePoint>> {
    grid.par_iter()
        .map(|&scale| {
            let noisy = inject_score_noise_all(weight_contribs, scale, seed)?;
            let weights = learn_weights(&noisy, cfg)?;
            let lds = lds_from_scores(gt, &query_scores(eval_contribs, Some(&weights)))?;
            Ok(NoisePoint { scale, weights, lds })
        })
        .collect()
}

/// Two-factor fine-grained recall experiment. A block-diagonal network sees
/// factor A and factor B through separate hidden-weight groups; weights are
/// learned from queries that keep a weight-learning example's factor-A
/// coordinates and replace its factor-B coordinates with a fresh Gaussian draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub factors_a: usize,
    pub factors_b: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub noise_std: f64,
    pub train_per_cell: usize,
    pub weight_per_cell: usize,
    pub eval_per_cell: usize,
    /// Factor-A categories `0..train_categories` form the train split; weight
    /// learning only sees these.
    pub train_categories: usize,
    pub data_seed: u64,
    pub hidden: usize,
    pub init_seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub train_seed: u64,
    pub projection_dim: usize,
    pub projection_seed: u64,
    pub method: Method,
    pub trak_lambda: f64,
    pub query_seed: u64,
    pub recall_k: usize,
    pub weighting: WeightLearnConfig,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            factors_a: 5,
            factors_b: 5,
            dim_a: 8,
            dim_b: 8,
            noise_std: FACTOR_NOISE_STD,
            train_per_cell: 4,
            weight_per_cell: 12,
            eval_per_cell: 4,
            train_categories: 3,
            data_seed: 3,
            hidden: 32,
            init_seed: 13,
            epochs: 30,
            lr: 0.5,
            train_seed: 1,
            projection_dim: 32,
            projection_seed: 9,
            method: Method::TracIn,
            trak_lambda: 0.5,
            query_seed: 77,
            recall_k: 10,
            weighting: WeightLearnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSplit {
    pub train_ids: Vec<u64>,
    pub weight_ids: Vec<u64>,
    pub eval_ids: Vec<u64>,
}

impl FactorConfig {
    fn validate(&self) -> Result<()> {
        if self.train_categories < 1 || self.train_categories >= self.factors_a {
            return Err(Error::invalid("train_categories must leave at least one held-out factor-A category"));
        }
        if self.train_per_cell < 1 || self.weight_per_cell < 1 || self.eval_per_cell < 1 || self.recall_k < 1 {
            return Err(Error::invalid("per-cell counts and recall_k must be >= 1"));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::Mlp1 {
            input_dim: self.dim_a + self.dim_b,
            hidden: self.hidden,
            num_classes: self.factors_a * self.factors_b,
            hidden_blocks: 2,
            block_diagonal: true,
            distractor: None,
            init_seed: self.init_seed,
        }
    }

    /// The dataset plus the per-cell split: the first `train_per_cell` examples
    /// of every cell train the model, the next `eval_per_cell` are evaluation
    /// queries, the rest (train-split categories only) seed weight learning.
    pub fn dataset(&self) -> Result<(LabeledDataset, FactorSplit)> {
        self.validate()?;
        let per_cell = self.train_per_cell + self.eval_per_cell + self.weight_per_cell;
        let ds = generate_factor_dataset_with_noise(
            self.factors_a,
            self.factors_b,
            per_cell,
            self.dim_a,
            self.dim_b,
            self.noise_std,
            self.data_seed,
        )?;
        let mut split = FactorSplit {
            train_ids: Vec::new(),
            weight_ids: Vec::new(),
            eval_ids: Vec::new(),
        };
        for (i, &id) in ds.ids().iter().enumerate() {
            let slot = i % per_cell;
            if slot < self.train_per_cell {
                split.train_ids.push(id);
            } else if slot < self.train_per_cell + self.eval_per_cell {
                split.eval_ids.push(id);
            } else if ds.factor(id, 0)? < self.train_categories {
                split.weight_ids.push(id);
            }
        }
        Ok((ds, split))
    }

    pub fn train_config(&self, n_train: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: n_train,
            weight_decay: 0.0,
            seed: self.train_seed,
        }
    }

    /// Factor-A-emphasizing query built from example `id`.
    pub fn emphasized_query(&self, ds: &LabeledDataset, id: u64) -> Result<Query> {
        let mut q = Query::from_dataset(ds, id)?;
        let mut rng = SplitMix64::derive(self.query_seed, id);
        for v in &mut q.features[self.dim_a..] {
            *v = rng.next_gaussian();
        }
        q.id = format!("a{id}");
        Ok(q)
    }
}

/// Mean Recall@k over the evaluation queries of one factor-A split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSplitRecall {
    pub split: String,
    pub n_queries: usize,
    pub unweighted_a: f64,
    pub weighted_a: f64,
    pub unweighted_b: f64,
    pub weighted_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorQueryRecall {
    pub query_id: String,
    pub split: String,
    pub unweighted_a: f64,
    pub weighted_a: f64,
    pub unweighted_b: f64,
    pub weighted_b: f64,
}

#[derive(Debug, Clone)]
pub struct FactorOutcome {
    pub weights: WeightVector,
    pub train_accuracy: f64,
    pub splits: Vec<FactorSplitRecall>,
    pub queries: Vec<FactorQueryRecall>,
}

impl FactorOutcome {
    pub fn split(&self, name: &str) -> Option<&FactorSplitRecall> {
        self.splits.iter().find(|s| s.split == name)
    }
}

pub fn run_factor_experiment(cfg: &FactorConfig) -> Result<FactorOutcome> {
    let (ds, split) = cfg.dataset()?;
    let ckpt = train::<f64>(&ds, &split.train_ids, &cfg.architecture(), &cfg.train_config(split.train_ids.len()))?;
    let projection = build_projection_clamped(&ckpt.grouping, cfg.projection_dim, cfg.projection_seed)?;
    let full = extract_features(&ckpt, &ds, &split.train_ids, &projection)?;
    let names: Vec<String> = full
        .layout()
        .names()
        .into_iter()
        .filter(|n| !n.ends_with(".bias"))
        .collect();
    let groups = group_indices(full.layout(), &names)?;
    let store = full.select_groups(&names)?;
    let kernel = match cfg.method {
        Method::TracIn => Kernel::Identity,
        Method::Trak => build_trak_kernel(&store, cfg.trak_lambda)?,
    };
    let side = precompute_training_side(&store, &kernel)?;
    let projector = Projector::<f64>::new(&projection);
    let out_layout = projection.output_layout();
    let contributions = |qs: &[Query]| -> Result<Vec<GroupContributionMatrix>> {
        qs.par_iter()
            .map(|q| {
                let f = projector.features(&ckpt, &q.features, q.label)?;
                group_contributions(&select_blocks(&out_layout, &f, &groups), &side, store.layout())
            })
            .collect()
    };

    let weight_queries = split
        .weight_ids
        .iter()
        .map(|&id| cfg.emphasized_query(&ds, id))
        .collect::<Result<Vec<_>>>()?;
    let weights = learn_weights(&contributions(&weight_queries)?, &cfg.weighting)?;

    let train_ids = store.example_ids().to_vec();
    let eval_queries = queries_from_ids(&ds, &split.eval_ids)?;
    let eval_contribs = contributions(&eval_queries)?;
    let mut queries = Vec::with_capacity(eval_queries.len());
    for ((q, &id), c) in eval_queries.iter().zip(&split.eval_ids).zip(&eval_contribs) {
        let truth = |factor: usize| -> Result<BTreeSet<u64>> {
            Ok(ds.factor_matches(id, factor, &train_ids)?.into_iter().collect())
        };
        let (truth_a, truth_b) = (truth(0)?, truth(1)?);
        let unweighted = AttributionResult::new(q.id.clone(), train_ids.clone(), c.total_scores(), "unweighted")?;
        let weighted = weighted_score(c, &weights)?;
        queries.push(FactorQueryRecall {
            query_id: q.id.clone(),
            split: if ds.factor(id, 0)? < cfg.train_categories { "train" } else { "heldout" }.to_string(),
            unweighted_a: recall_at_k(&unweighted, &truth_a, cfg.recall_k)?,
            weighted_a: recall_at_k(&weighted, &truth_a, cfg.recall_k)?,
            unweighted_b: recall_at_k(&unweighted, &truth_b, cfg.recall_k)?,
            weighted_b: recall_at_k(&weighted, &truth_b, cfg.recall_k)?,
        });
    }
    let splits = ["train", "heldout"]
        .iter()
        .map(|&name| {
            let rows: Vec<&FactorQueryRecall> = queries.iter().filter(|r| r.split == name).collect();
            let n = rows.len().max(1) as f64;
            let mean = |f: fn(&FactorQueryRecall) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            FactorSplitRecall {
                split: name.to_string(),
                n_queries: rows.len(),
                unweighted_a: mean(|r| r.unweighted_a),
                weighted_a: mean(|r| r.weighted_a),
                unweighted_b: mean(|r| r.unweighted_b),
                weighted_b: mean(|r| r.weighted_b),
            }
        })
        .collect();
    Ok(FactorOutcome {
        weights,
        train_accuracy: ckpt.accuracy(&ds, &split.train_ids)?,
        splits,
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            n_train: 120,
            n_weight: 20,
            n_eval: 10,
            epochs: 30,
            lds_subsets: 4,
            ..Default::default()
        }
    }

    #[test]
    fn prepares_small_benchmark() {
        let cfg = small();
        let b = Benchmark::prepare(&cfg).unwrap();
        assert_eq!(b.dataset.dim(), cfg.input_dim());
        assert_eq!(b.train_store.len(), 120);
        assert_eq!(b.train_store.layout().len(), cfg.hidden_blocks + 2);
        assert!(b.train_store.layout().names().iter().all(|n| !n.ends_with(".bias")));
        let qs = b.eval_queries().unwrap();
        let side = b.training_side(Method::Trak).unwrap();
        let cs = b.contributions(&side, &qs).unwrap();
        assert_eq!(cs.len(), 10);
        assert_eq!(cs[0].num_groups(), cfg.hidden_blocks + 2);
        // Training-set queries reproduce the stored rows.
        let own = queries_from_ids(&b.dataset, &b.split.train_ids[..3]).unwrap();
        let f = b.query_features(&own).unwrap();
        assert_eq!(f[1], b.train_store.row(1));
    }

    #[test]
    fn corruption_only_touches_training_labels() {
        let cfg = BenchmarkConfig {
            corruption: 0.1,
            ..small()
        };
        let b = Benchmark::prepare(&cfg).unwrap();
        let rec = b.corruption.as_ref().unwrap();
        assert_eq!(rec.corrupted_ids.len(), 12);
        assert!(rec.corrupted_ids.iter().all(|id| b.split.train_ids.binary_search(id).is_ok()));
        for id in &b.split.eval_ids {
            assert_eq!(b.dataset.label(*id).unwrap(), b.clean_dataset.label(*id).unwrap());
        }
    }

    #[test]
    fn factor_split_roles() {
        let cfg = FactorConfig::default();
        let (ds, split) = cfg.dataset().unwrap();
        let cells = cfg.factors_a * cfg.factors_b;
        assert_eq!(split.train_ids.len(), cells * cfg.train_per_cell);
        assert_eq!(split.eval_ids.len(), cells * cfg.eval_per_cell);
        assert_eq!(split.weight_ids.len(), cfg.train_categories * cfg.factors_b * cfg.weight_per_cell);
        assert!(split.weight_ids.iter().all(|&id| ds.factor(id, 0).unwrap() < cfg.train_categories));
        let q = cfg.emphasized_query(&ds, split.weight_ids[0]).unwrap();
        let row = ds.row(split.weight_ids[0]).unwrap();
        assert_eq!(q.features[..cfg.dim_a], row[..cfg.dim_a]);
        assert_ne!(q.features[cfg.dim_a..], row[cfg.dim_a..]);
    }

    #[test]
    fn factor_experiment_reports_both_splits() {
        let out = run_factor_experiment(&FactorConfig::default()).unwrap();
        assert_eq!(out.queries.len(), 100);
        assert_eq!(out.split("train").unwrap().n_queries, 60);
        assert_eq!(out.split("heldout").unwrap().n_queries, 40);
        assert_eq!(out.weights.group_names(), ["hidden.weight.0", "hidden.weight.1", "output.weight"]);
    }

    #[test]
    fn method_names() {
        assert_eq!("TRAK".parse::<Method>().unwrap(), Method::Trak);
        assert_eq!(Method::TracIn.name(), "tracin");
        assert!("x".parse::<Method>().is_err());
    }
}
