//! Small differentiable classifiers with closed-form per-example gradients,
//! partitioned into named parameter groups.
//!
//! Flat parameter layout follows the group order exactly, so slicing a flat
//! gradient by [`ParameterGrouping::range`] yields the per-group gradients.
//!
//! `Mlp1` (one tanh hidden layer) stores its hidden weight matrix in
//! input-column blocks: block `b` covers input columns `cols_b` and is stored
//! as a row-major `|units_b| × |cols_b|` matrix, where `units_b` is every
//! hidden unit unless the layer is block diagonal, in which case hidden unit
//! block `b` sees only input block `b`. An optional distractor head adds
//! the scalar `⟨θ_d, z(x)⟩` to the per-example loss, where `z(x)` is a
//! deterministic pseudo-random vector keyed by the bits of `x` and `θ_d` is
//! frozen at zero. The head never changes losses or predictions, but its
//! gradient is `z(x)` itself: a group whose cross-example dot products are
//! dense noise unrelated to how well each example is fit.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterGrouping {
    groups: Vec<(String, usize)>,
    offsets: Vec<usize>,
    total_dim: usize,
}

impl ParameterGrouping {
    pub fn new(groups: Vec<(String, usize)>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(groups.len());
        let mut total = 0;
        for (i, (name, dim)) in groups.iter().enumerate() {
            if groups[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::invalid(format!("duplicate group name `{name}`")));
            }
            if *dim == 0 {
                return Err(Error::invalid(format!("group `{name}` is empty")));
            }
            offsets.push(total);
            total += dim;
        }
        Ok(Self {
            groups,
            offsets,
            total_dim: total,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn groups(&self) -> &[(String, usize)] {
        &self.groups
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn range(&self, group: usize) -> Range<usize> {
        let start = self.offsets[group];
        start..start + self.groups[group].1
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|(n, _)| n == name)
    }

    /// Borrowed per-group slices of a flat vector.
    pub fn split<'a, T>(&self, flat: &'a [T]) -> Vec<&'a [T]> {
        (0..self.len()).map(|j| &flat[self.range(j)]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    /// Length of the noise input `z(x)`.
    pub dim: usize,
    /// Std of the entries of `z(x)`.
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Architecture {
    LogisticRegression {
        input_dim: usize,
        num_classes: usize,
        /// One group per class row of the weight matrix instead of a single block.
        per_class_groups: bool,
    },
    Mlp1 {
        input_dim: usize,
        hidden: usize,
        num_classes: usize,
        /// Number of contiguous input-column blocks the hidden weights are split into.
        hidden_blocks: usize,
        /// Connect hidden unit block `b` to input block `b` only.
        #[serde(default)]
        block_diagonal: bool,
        distractor: Option<Distractor>,
        init_seed: u64,
    },
}

impl Architecture {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Architecture::LogisticRegression {
            input_dim,
            num_classes,
            per_class_groups: false,
        }
    }

    pub fn mlp(input_dim: usize, hidden: usize, num_classes: usize, init_seed: u64) -> Self {
        Architecture::Mlp1 {
            input_dim,
            hidden,
            num_classes,
            hidden_blocks: 1,
            block_diagonal: false,
            distractor: None,
            init_seed,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Architecture::LogisticRegression { .. } => 0,
            Architecture::Mlp1 { .. } => 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::LogisticRegression { input_dim, .. } | Architecture::Mlp1 { input_dim, .. } => input_dim,
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            Architecture::LogisticRegression { num_classes, .. }
            | Architecture::Mlp1 { num_classes, .. } => num_classes,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::LogisticRegression {
                input_dim,
                num_classes,
                ..
            } => input_dim >= 1 && num_classes >= 2,
            Architecture::Mlp1 {
                input_dim,
                hidden,
                num_classes,
                hidden_blocks,
                block_diagonal,
                ref distractor,
                ..
            } => {
                input_dim >= 1
                    && hidden >= 1
                    && num_classes >= 2
                    && hidden_blocks >= 1
                    && hidden_blocks <= input_dim
                    && (!block_diagonal || hidden_blocks <= hidden)
                    && distractor.as_ref().is_none_or(|d| d.dim >= 1 && d.scale > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid architecture {self:?}")))
        }
    }

    /// Input columns of each hidden-weight block.
    pub fn column_blocks(&self) -> Vec<Range<usize>> {
        match *self {
            Architecture::LogisticRegression { input_dim, .. } => vec![0..input_dim],
            Architecture::Mlp1 {
                input_dim,
                hidden_blocks,
                ..
            } => (0..hidden_blocks)
                .map(|b| b * input_dim / hidden_blocks..(b + 1) * input_dim / hidden_blocks)
                .collect(),
        }
    }

    /// Hidden units fed by each hidden-weight block.
    pub fn unit_blocks(&self) -> Vec<Range<usize>> {
        match *self {
            Architecture::LogisticRegression { .. } => vec![],
            Architecture::Mlp1 {
                hidden,
                hidden_blocks,
                block_diagonal,
                ..
            } => (0..hidden_blocks)
                .map(|b| {
                    if block_diagonal {
                        b * hidden / hidden_blocks..(b + 1) * hidden / hidden_blocks
                    } else {
                        0..hidden
                    }
                })
                .collect(),
        }
    }

    pub fn grouping(&self) -> ParameterGrouping {
        let groups = match self {
            &Architecture::LogisticRegression {
                input_dim,
                num_classes,
                per_class_groups,
            } => {
                let mut g = if per_class_groups {
                    (0..num_classes)
                        .map(|c| (format!("weight.c{c}"), input_dim))
                        .collect()
                } else {
                    vec![("weight".to_string(), num_classes * input_dim)]
                };
                g.push(("bias".to_string(), num_classes));
                g
            }
            Architecture::Mlp1 {
                hidden,
                num_classes,
                hidden_blocks,
                distractor,
                ..
            } => {
                let mut g: Vec<(String, usize)> = if *hidden_blocks == 1 {
                    vec![("hidden.weight".to_string(), hidden * self.input_dim())]
                } else {
                    self.column_blocks()
                        .iter()
                        .zip(self.unit_blocks())
                        .enumerate()
                        .map(|(b, (cols, units))| (format!("hidden.weight.{b}"), units.len() * cols.len()))
                        .collect()
                };
                g.push(("hidden.bias".to_string(), *hidden));
                g.push(("output.weight".to_string(), num_classes * hidden));
                g.push(("output.bias".to_string(), *num_classes));
                if let Some(d) = distractor {
                    g.push(("distractor".to_string(), d.dim));
                }
                g
            }
        };
        ParameterGrouping::new(groups).expect("architecture groups are well formed")
    }

    /// Whether group `j` is excluded from optimization.
    pub fn is_frozen(&self, grouping: &ParameterGrouping, j: usize) -> bool {
        matches!(self, Architecture::Mlp1 { distractor: Some(_), .. })
            && grouping.groups()[j].0 == "distractor"
    }

    fn init_params<T: Scalar>(&self) -> Vec<T> {
        let grouping = self.grouping();
        let mut params = vec![T::zero(); grouping.total_dim()];
        if let Architecture::Mlp1 {
            hidden,
            num_classes,
            init_seed,
            ..
        } = *self
        {
            let mut rng = SplitMix64::new(init_seed);
            let d = self.input_dim();
            let scale_in = 1.0 / (d as f64).sqrt();
            let blocks = self.column_blocks();
            // Draw W1 in logical (row, column) order so the values do not depend on the blocking.
            let mut w1 = vec![0.0; hidden * d];
            for v in w1.iter_mut() {
                *v = rng.next_gaussian() * scale_in;
            }
            for (b, (cols, units)) in blocks.iter().zip(self.unit_blocks()).enumerate() {
                let range = grouping.range(b);
                let block = &mut params[range];
                for (i, h) in units.enumerate() {
                    for (k, c) in cols.clone().enumerate() {
                        block[i * cols.len() + k] = T::of(w1[h * d + c]);
                    }
                }
            }
            let scale_out = 1.0 / (hidden as f64).sqrt();
            let out_w = grouping.range(blocks.len() + 1);
            debug_assert_eq!(out_w.len(), num_classes * hidden);
            for v in &mut params[out_w] {
                *v = T::of(rng.next_gaussian() * scale_out);
            }
        }
        params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 || !(self.lr > 0.0) || self.batch_size < 1 || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of the config and the training ids, hex encoded.
    pub fn digest(&self, ids: &[u64]) -> String {
        let mut h = Fnv::default();
        h.write(&(self.epochs as u64).to_le_bytes());
        h.write(&self.lr.to_bits().to_le_bytes());
        h.write(&(self.batch_size as u64).to_le_bytes());
        h.write(&self.weight_decay.to_bits().to_le_bytes());
        h.write(&self.seed.to_le_bytes());
        for id in ids {
            h.write(&id.to_le_bytes());
        }
        format!("{:016x}", h.0)
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T: Scalar = f64> {
    pub architecture: Architecture,
    pub flat_params: Vec<T>,
    pub grouping: ParameterGrouping,
    pub train_config_hash: String,
}

/// Activations kept for the backward pass.
struct Forward<T> {
    hidden: Vec<T>,
    noise: Vec<T>,
    probs: Vec<T>,
    log_prob_label: T,
    /// Distractor head output added to the loss.
    penalty: T,
}

fn noise_input<T: Scalar>(d: &Distractor, x: &[T]) -> Vec<T> {
    let mut key = Fnv::default();
    for v in x {
        key.write(&v.as_f64().to_bits().to_le_bytes());
    }
    let mut rng = SplitMix64::derive(d.seed, key.0);
    (0..d.dim)
        .map(|_| T::of(d.scale * rng.next_gaussian()))
        .collect()
}

fn log_softmax_at<T: Scalar>(logits: &[T], probs: &mut Vec<T>, label: usize) -> T {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let sum: T = logits.iter().map(|&v| (v - max).exp()).sum();
    let log_z = max + sum.ln();
    probs.clear();
    probs.extend(logits.iter().map(|&v| (v - log_z).exp()));
    logits[label] - log_z
}

impl<T: Scalar> ModelCheckpoint<T> {
    /// Fresh (untrained) parameters for `architecture`.
    pub fn initial(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        Ok(Self {
            grouping: architecture.grouping(),
            flat_params: architecture.init_params(),
            architecture,
            train_config_hash: String::new(),
        })
    }

    pub fn with_params(architecture: Architecture, flat_params: Vec<T>) -> Result<Self> {
        architecture.validate()?;
        let grouping = architecture.grouping();
        check_dim(grouping.total_dim(), flat_params.len(), "flat params")?;
        Ok(Self {
            architecture,
            flat_params,
            grouping,
            train_config_hash: String::new(),
        })
    }

    fn check_input(&self, x: &[T], y: usize) -> Result<()> {
        check_dim(self.architecture.input_dim(), x.len(), "model input")?;
        if y >= self.architecture.num_classes() {
            return Err(Error::invalid(format!(
                "label {y} outside [0, {})",
                self.architecture.num_classes()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &[T], y: usize) -> Forward<T> {
        let p = &self.flat_params;
        let g = &self.grouping;
        let mut probs = Vec::new();
        match &self.architecture {
            Architecture::LogisticRegression {
                input_dim,
                num_classes,
                ..
            } => {
                let w = &p[..num_classes * input_dim];
                let b = &p[num_classes * input_dim..];
                let logits: Vec<T> = (0..*num_classes)
                    .map(|c| crate::scalar::dot(&w[c * input_dim..(c + 1) * input_dim], x) + b[c])
                    .collect();
                let log_prob_label = log_softmax_at(&logits, &mut probs, y);
                Forward {
                    hidden: Vec::new(),
                    noise: Vec::new(),
                    probs,
                    log_prob_label,
                    penalty: T::zero(),
                }
            }
            Architecture::Mlp1 {
                hidden,
                num_classes,
                distractor,
                ..
            } => {
                let blocks = self.architecture.column_blocks();
                let nb = blocks.len();
                let b1 = &p[g.range(nb)];
                let mut pre: Vec<T> = b1.to_vec();
                for (bi, (cols, units)) in blocks.iter().zip(self.architecture.unit_blocks()).enumerate() {
                    let w = &p[g.range(bi)];
                    let xs = &x[cols.clone()];
                    for (i, acc) in pre[units].iter_mut().enumerate() {
                        *acc += crate::scalar::dot(&w[i * xs.len()..(i + 1) * xs.len()], xs);
                    }
                }
                let act: Vec<T> = pre.into_iter().map(|v| v.tanh()).collect();
                let w2 = &p[g.range(nb + 1)];
                let b2 = &p[g.range(nb + 2)];
                let logits: Vec<T> = (0..*num_classes)
                    .map(|c| crate::scalar::dot(&w2[c * hidden..(c + 1) * hidden], &act) + b2[c])
                    .collect();
                let (noise, penalty) = match distractor {
                    Some(d) => {
                        let z = noise_input(d, x);
                        let penalty = crate::scalar::dot(&p[g.range(nb + 3)], &z);
                        (z, penalty)
                    }
                    None => (Vec::new(), T::zero()),
                };
                let log_prob_label = log_softmax_at(&logits, &mut probs, y);
                Forward {
                    hidden: act,
                    noise,
                    probs,
                    log_prob_label,
                    penalty,
                }
            }
        }
    }

    /// Adds `scale * ∇θ loss(x, y)` into `out`.
    fn accumulate_gradient(&self, x: &[T], y: usize, scale: T, out: &mut [T]) {
        let fwd = self.forward(x, y);
        let mut r = fwd.probs;
        r[y] -= T::one();
        for v in r.iter_mut() {
            *v *= scale;
        }
        let g = &self.grouping;
        match &self.architecture {
            Architecture::LogisticRegression {
                input_dim,
                num_classes,
                ..
            } => {
                for c in 0..*num_classes {
                    for k in 0..*input_dim {
                        out[c * input_dim + k] += r[c] * x[k];
                    }
                    out[num_classes * input_dim + c] += r[c];
                }
            }
            Architecture::Mlp1 {
                hidden,
                num_classes,
                distractor,
                ..
            } => {
                let p = &self.flat_params;
                let blocks = self.architecture.column_blocks();
                let nb = blocks.len();
                let w2 = &p[g.range(nb + 1)];
                let out_w = g.range(nb + 1);
                let out_b = g.range(nb + 2);
                let mut delta = vec![T::zero(); *hidden];
                for c in 0..*num_classes {
                    out[out_b.start + c] += r[c];
                    for h in 0..*hidden {
                        out[out_w.start + c * hidden + h] += r[c] * fwd.hidden[h];
                        delta[h] += w2[c * hidden + h] * r[c];
                    }
                }
                for (h, d) in delta.iter_mut().enumerate() {
                    *d *= T::one() - fwd.hidden[h] * fwd.hidden[h];
                }
                let hb = g.range(nb);
                for h in 0..*hidden {
                    out[hb.start + h] += delta[h];
                }
                for (bi, (cols, units)) in blocks.iter().zip(self.architecture.unit_blocks()).enumerate() {
                    let range = g.range(bi);
                    let w = cols.len();
                    for (i, h) in units.enumerate() {
                        for (k, col) in cols.clone().enumerate() {
                            out[range.start + i * w + k] += delta[h] * x[col];
                        }
                    }
                }
                if distractor.is_some() {
                    let dr = g.range(nb + 3);
                    for (o, z) in out[dr].iter_mut().zip(&fwd.noise) {
                        *o += scale * *z;
                    }
                }
            }
        }
    }

    /// Gradient of the cross-entropy loss at `(x, y)` w.r.t. the flat parameters.
    pub fn per_example_gradient(&self, x: &[T], y: usize) -> Result<Vec<T>> {
        self.check_input(x, y)?;
        let mut out = vec![T::zero(); self.grouping.total_dim()];
        self.accumulate_gradient(x, y, T::one(), &mut out);
        Ok(out)
    }

    /// Cross-entropy `-log p(y | x)` plus the distractor head output (zero
    /// while the head stays frozen at its initial value).
    pub fn loss(&self, x: &[T], y: usize) -> Result<T> {
        self.check_input(x, y)?;
        let f = self.forward(x, y);
        Ok(f.penalty - f.log_prob_label)
    }

    /// Mean cross-entropy over a batch.
    pub fn mean_loss(&self, batch: &[(&[T], usize)]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut total = T::zero();
        for &(x, y) in batch {
            total += self.loss(x, y)?;
        }
        Ok(total / T::count(batch.len()))
    }

    /// The quantity correlated by the LDS: negative loss (higher is better).
    pub fn model_output(&self, x: &[T], y: usize) -> Result<T> {
        Ok(-self.loss(x, y)?)
    }

    pub fn log_prob(&self, x: &[T], y: usize) -> Result<T> {
        self.check_input(x, y)?;
        Ok(self.forward(x, y).log_prob_label)
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        self.check_input(x, 0)?;
        let probs = self.forward(x, 0).probs;
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn accuracy(&self, ds: &LabeledDataset, ids: &[u64]) -> Result<f64> {
        let mut correct = 0;
        for &id in ids {
            if self.predict(&ds.row_as::<T>(id)?)? == ds.label(id)? {
                correct += 1;
            }
        }
        Ok(correct as f64 / ids.len().max(1) as f64)
    }

    /// One plain gradient step `θ' = θ - lr · mean ∇θ loss` over `batch`.
    /// Frozen groups keep their values.
    pub fn sgd_step(&self, batch: &[(&[T], usize)], lr: T) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::invalid("sgd_step needs a non-empty batch"));
        }
        let mut grad = vec![T::zero(); self.grouping.total_dim()];
        let scale = T::one() / T::count(batch.len());
        for &(x, y) in batch {
            self.check_input(x, y)?;
            self.accumulate_gradient(x, y, scale, &mut grad);
        }
        let mut next = self.clone();
        next.apply_update(&grad, lr, T::zero());
        Ok(next)
    }

    fn apply_update(&mut self, grad: &[T], lr: T, weight_decay: T) {
        for j in 0..self.grouping.len() {
            if self.architecture.is_frozen(&self.grouping, j) {
                continue;
            }
            for i in self.grouping.range(j) {
                let p = self.flat_params[i];
                self.flat_params[i] = p - lr * (grad[i] + weight_decay * p);
            }
        }
    }
}

/// Minibatch SGD (no momentum) from the architecture's initial parameters.
pub fn train<T: Scalar>(
    ds: &LabeledDataset,
    ids: &[u64],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<ModelCheckpoint<T>> {
    cfg.validate()?;
    if ids.is_empty() {
        return Err(Error::invalid("training ids are empty"));
    }
    check_dim(arch.input_dim(), ds.dim(), "dataset feature dimension")?;
    let mut ckpt = ModelCheckpoint::<T>::initial(arch.clone())?;
    let rows: Vec<(Vec<T>, usize)> = ids
        .iter()
        .map(|&id| {
            let y = ds.label(id)?;
            if y >= arch.num_classes() {
                return Err(Error::invalid(format!("label {y} of id {id} exceeds class count")));
            }
            Ok((ds.row_as::<T>(id)?, y))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = SplitMix64::new(cfg.seed);
    let lr = T::of(cfg.lr);
    let wd = T::of(cfg.weight_decay);
    let mut grad = vec![T::zero(); ckpt.grouping.total_dim()];
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::count(batch.len());
            for &i in batch {
                let (x, y) = &rows[i];
                ckpt.accumulate_gradient(x, *y, scale, &mut grad);
            }
            ckpt.apply_update(&grad, lr, wd);
        }
    }
    ckpt.train_config_hash = cfg.digest(ids);
    Ok(ckpt)
}

/// Identical procedure to [`train`], restricted to `subset_ids`.
pub fn retrain_on_subset<T: Scalar>(
    ds: &LabeledDataset,
    subset_ids: &[u64],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<ModelCheckpoint<T>> {
    train(ds, subset_ids, arch, cfg)
}

const CKPT_MAGIC: &[u8; 4] = b"ATWC";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointTrailer {
    architecture: Architecture,
    train_config_hash: String,
}

/// Binary checkpoint: magic, version, arch tag, grouping table, little-endian
/// f64 parameters, then a length-prefixed JSON trailer with the architecture
/// hyperparameters needed to rebuild the model.
pub fn save_checkpoint<T: Scalar>(ckpt: &ModelCheckpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.push(ckpt.architecture.tag());
    buf.extend_from_slice(&(ckpt.grouping.len() as u32).to_le_bytes());
    for (name, dim) in ckpt.grouping.groups() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for p in &ckpt.flat_params {
        buf.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    let trailer = serde_json::to_vec(&CheckpointTrailer {
        architecture: ckpt.architecture.clone(),
        train_config_hash: ckpt.train_config_hash.clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    buf.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
    buf.extend_from_slice(&trailer);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelCheckpoint<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor::new(&bytes);
    if c.take(4)? != CKPT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = c.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let tag = c.take(1)?[0];
    let count = c.u32()? as usize;
    let mut groups = Vec::with_capacity(count);
    for _ in 0..count {
        let name = c.string()?;
        let dim = c.u32()? as usize;
        groups.push((name, dim));
    }
    let grouping = ParameterGrouping::new(groups)?;
    let mut params = Vec::with_capacity(grouping.total_dim());
    for _ in 0..grouping.total_dim() {
        params.push(T::of(f64::from_le_bytes(c.take(8)?.try_into().unwrap())));
    }
    let trailer_len = c.u32()? as usize;
    let trailer: CheckpointTrailer = serde_json::from_slice(c.take(trailer_len)?)
        .map_err(|e| Error::Format(format!("checkpoint trailer: {e}")))?;
    if c.remaining() != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    if trailer.architecture.tag() != tag || trailer.architecture.grouping() != grouping {
        return Err(Error::Format("checkpoint grouping does not match its architecture".into()));
    }
    let mut ckpt = ModelCheckpoint::with_params(trailer.architecture, params)?;
    ckpt.train_config_hash = trailer.train_config_hash;
    Ok(ckpt)
}
