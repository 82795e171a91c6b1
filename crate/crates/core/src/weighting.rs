//! Learning non-negative per-group weights from precomputed group
//! contributions.
//!
//! Weights are `softmax(raw)`. For one query with contributions `C` the score
//! vector is `S = C w` and every loss variant has the form
//! `L = (a · S) / ‖S‖₂` (or `a · S` without normalization), where the
//! coefficient vector `a` selects the pseudo-positives/negatives at the
//! current iterate. The selection is held fixed while differentiating:
//!
//! ```text
//! ∂L/∂S_i = a_i/‖S‖ − (a·S) S_i/‖S‖³
//! ∂L/∂w_j = Σ_i ∂L/∂S_i C[i, j]
//! ∂L/∂raw_j = w_j (∂L/∂w_j − Σ_l w_l ∂L/∂w_l)
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::GroupContributionMatrix;
use crate::dataset::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::{dot, norm2, Scalar};

/// `‖S‖₂` below this marks a degenerate query.
pub const NORM_GUARD: f64 = 1e-12;

/// Top-k grid swept during weight learning.
pub const K_GRID: [usize; 10] = [1, 5, 10, 20, 50, 100, 200, 500, 1000, 5000];

/// Weight-decay grid swept during weight learning.
pub const LAMBDA_GRID: [f64; 10] = [0.0, 0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.8, 1.0, 1.5];

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Scalar = f64> {
    values: Vec<T>,
    group_names: Vec<String>,
}

impl<T: Scalar> WeightVector<T> {
    /// Arbitrary non-negative weights (e.g. one-hot probes).
    pub fn from_values(values: Vec<T>, group_names: Vec<String>) -> Result<Self> {
        check_dim(group_names.len(), values.len(), "weight vector")?;
        if values.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        Ok(Self { values, group_names })
    }

    pub fn uniform(group_names: Vec<String>) -> Self {
        let m = group_names.len();
        Self {
            values: vec![T::one() / T::count(m); m],
            group_names,
        }
    }

    pub fn from_raw(raw: &RawWeights<T>, group_names: Vec<String>) -> Result<Self> {
        check_dim(group_names.len(), raw.raw.len(), "raw weights")?;
        Ok(Self {
            values: softmax(&raw.raw),
            group_names,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pre-softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWeights<T: Scalar = f64> {
    pub raw: Vec<T>,
}

impl<T: Scalar> RawWeights<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            raw: vec![T::zero(); m],
        }
    }
}

pub fn softmax<T: Scalar>(raw: &[T]) -> Vec<T> {
    let max = raw.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let e: Vec<T> = raw.iter().map(|&v| (v - max).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossVariant {
    TopK,
    SupervisedAug,
    BottomK,
    TopKMinusBottomK,
    NoNorm,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::TopK => "topk",
            LossVariant::SupervisedAug => "supervised",
            LossVariant::BottomK => "bottomk",
            LossVariant::TopKMinusBottomK => "gap",
            LossVariant::NoNorm => "nonorm",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "topk" => LossVariant::TopK,
            "supervised" | "supervisedaug" => LossVariant::SupervisedAug,
            "bottomk" => LossVariant::BottomK,
            "gap" | "topkminusbottomk" => LossVariant::TopKMinusBottomK,
            "nonorm" => LossVariant::NoNorm,
            other => return Err(Error::invalid(format!("unknown loss variant `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLearnConfig {
    pub k: usize,
    pub lambda_reg: f64,
    pub lr: f64,
    pub epochs: usize,
    pub loss_variant: LossVariant,
    pub seed: u64,
}

impl Default for WeightLearnConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lambda_reg: 0.0,
            lr: 0.01,
            epochs: 10,
            loss_variant: LossVariant::TopK,
            seed: 0,
        }
    }
}

impl WeightLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.epochs < 1 || !(self.lr > 0.0) || !(self.lambda_reg >= 0.0) {
            return Err(Error::invalid(format!("invalid weight-learning config {self:?}")));
        }
        Ok(())
    }
}

/// A loss value; `degenerate` marks queries whose score vector is ~0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub degenerate: bool,
}

/// Indices of the `k` largest scores, ties by ascending training id.
fn top_k<T: Scalar>(s: &[T], ids: &[u64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order.truncate(k);
    order
}

/// Indices of the `k` smallest scores, ties by ascending training id.
fn bottom_k<T: Scalar>(s: &[T], ids: &[u64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s[a].partial_cmp(&s[b])
            .unwrap_or(Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    order.truncate(k);
    order
}

/// Sparse loss coefficients `a` and whether the loss divides by `‖S‖₂`.
fn coefficients<T: Scalar>(
    c: &GroupContributionMatrix<T>,
    s: &[T],
    k: usize,
    variant: LossVariant,
) -> Result<(Vec<(usize, T)>, bool)> {
    let n = c.num_examples();
    if variant != LossVariant::SupervisedAug && (k < 1 || k > n) {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let inv_k = T::one() / T::count(k);
    let ids = &c.training_ids;
    Ok(match variant {
        LossVariant::TopK => (top_k(s, ids, k).into_iter().map(|i| (i, -inv_k)).collect(), true),
        LossVariant::NoNorm => (top_k(s, ids, k).into_iter().map(|i| (i, -inv_k)).collect(), false),
        LossVariant::BottomK => (bottom_k(s, ids, k).into_iter().map(|i| (i, inv_k)).collect(), true),
        LossVariant::TopKMinusBottomK => {
            let mut a: Vec<(usize, T)> = top_k(s, ids, k).into_iter().map(|i| (i, -inv_k)).collect();
            a.extend(bottom_k(s, ids, k).into_iter().map(|i| (i, inv_k)));
            (a, true)
        }
        LossVariant::SupervisedAug => {
            let p = c.positive.ok_or_else(|| {
                Error::invalid("supervised-augmentation loss needs the positive index on C")
            })?;
            if p >= n {
                return Err(Error::invalid(format!("positive index {p} outside [0, {n})")));
            }
            (vec![(p, -T::one())], true)
        }
    })
}

fn loss_and_score_gradient<T: Scalar>(
    c: &GroupContributionMatrix<T>,
    w: &[T],
    k: usize,
    variant: LossVariant,
    with_grad: bool,
) -> Result<(LossValue<T>, Option<Vec<T>>)> {
    check_dim(c.num_groups(), w.len(), "weight vector")?;
    let s = c.scores_with(w);
    let (a, normalized) = coefficients(c, &s, k, variant)?;
    let num: T = a.iter().map(|&(i, ai)| ai * s[i]).sum();
    let norm = norm2(&s);
    if normalized && norm < T::of(NORM_GUARD) {
        return Ok((
            LossValue {
                value: T::zero(),
                degenerate: true,
            },
            with_grad.then(|| vec![T::zero(); s.len()]),
        ));
    }
    let value = if normalized { num / norm } else { num };
    let grad = with_grad.then(|| {
        let mut g = vec![T::zero(); s.len()];
        if normalized {
            let coef = num / (norm * norm * norm);
            for (gi, si) in g.iter_mut().zip(&s) {
                *gi = -coef * *si;
            }
            for &(i, ai) in &a {
                g[i] += ai / norm;
            }
        } else {
            for &(i, ai) in &a {
                g[i] += ai;
            }
        }
        g
    });
    Ok((
        LossValue {
            value,
            degenerate: false,
        },
        grad,
    ))
}

/// `−mean(top-k of S) / ‖S‖₂` with `S = C w`.
pub fn ssl_loss<T: Scalar>(c: &GroupContributionMatrix<T>, w: &WeightVector<T>, k: usize) -> Result<LossValue<T>> {
    Ok(loss_and_score_gradient(c, w.values(), k, LossVariant::TopK, false)?.0)
}

/// Any of the loss variants at weights `w`.
pub fn variant_loss<T: Scalar>(
    c: &GroupContributionMatrix<T>,
    w: &WeightVector<T>,
    k: usize,
    variant: LossVariant,
) -> Result<LossValue<T>> {
    Ok(loss_and_score_gradient(c, w.values(), k, variant, false)?.0)
}

/// Loss and its gradient w.r.t. the raw (pre-softmax) weights, with the
/// selected index sets frozen at the current iterate.
pub fn variant_loss_gradient<T: Scalar>(
    c: &GroupContributionMatrix<T>,
    raw: &RawWeights<T>,
    k: usize,
    variant: LossVariant,
) -> Result<(LossValue<T>, Vec<T>)> {
    let w = softmax(&raw.raw);
    let (loss, ds) = loss_and_score_gradient(c, &w, k, variant, true)?;
    let ds = ds.expect("gradient requested");
    let m = c.num_groups();
    let mut dw = vec![T::zero(); m];
    for (n, &g) in ds.iter().enumerate() {
        if g != T::zero() {
            for (j, d) in dw.iter_mut().enumerate() {
                *d += g * c.get(n, j);
            }
        }
    }
    let mean = dot(&w, &dw);
    let draw = w.iter().zip(&dw).map(|(&wj, &dj)| wj * (dj - mean)).collect();
    Ok((loss, draw))
}

pub fn ssl_loss_gradient<T: Scalar>(c: &GroupContributionMatrix<T>, raw: &RawWeights<T>, k: usize) -> Result<Vec<T>> {
    Ok(variant_loss_gradient(c, raw, k, LossVariant::TopK)?.1)
}

/// Adaptive moments with decoupled weight decay, constant learning rate.
#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar = f64> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    weight_decay: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(dim: usize, lr: T, weight_decay: T) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay,
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t);
        let bc2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            params[i] *= T::one() - self.lr * self.weight_decay;
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome<T: Scalar = f64> {
    pub weights: WeightVector<T>,
    pub raw: RawWeights<T>,
    /// Mean loss over queries, one entry per epoch (measured before each update).
    pub epoch_losses: Vec<T>,
    pub degenerate_steps: usize,
}

/// Per-query optimizer steps over `epochs` passes; zero-initialized raw weights.
pub fn learn_weights<T: Scalar>(
    contribs: &[GroupContributionMatrix<T>],
    cfg: &WeightLearnConfig,
) -> Result<WeightVector<T>> {
    Ok(learn_weights_detailed(contribs, cfg)?.weights)
}

pub fn learn_weights_detailed<T: Scalar>(
    contribs: &[GroupContributionMatrix<T>],
    cfg: &WeightLearnConfig,
) -> Result<LearnOutcome<T>> {
    cfg.validate()?;
    let first = contribs
        .first()
        .ok_or_else(|| Error::invalid("weight learning needs at least one query"))?;
    let m = first.num_groups();
    for c in contribs {
        if c.group_names != first.group_names {
            return Err(Error::LayoutMismatch(
                "queries disagree on the parameter groups".into(),
            ));
        }
    }
    let mut raw = RawWeights::zeros(m);
    let mut opt = AdamW::new(m, T::of(cfg.lr), T::of(cfg.lambda_reg));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut degenerate_steps = 0;
    for _ in 0..cfg.epochs {
        let mut total = T::zero();
        for c in contribs {
            let (loss, grad) = variant_loss_gradient(c, &raw, cfg.k, cfg.loss_variant)?;
            total += loss.value;
            if loss.degenerate {
                degenerate_steps += 1;
                continue;
            }
            opt.step(&mut raw.raw, &grad);
        }
        epoch_losses.push(total / T::count(contribs.len()));
    }
    Ok(LearnOutcome {
        weights: WeightVector::from_raw(&raw, first.group_names.clone())?,
        raw,
        epoch_losses,
        degenerate_steps,
    })
}

/// A jittered copy of a training example whose source is its known positive.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedQuery {
    pub features: Vec<f64>,
    pub label: usize,
    pub positive_id: u64,
}

/// `x' = x_id + N(0, noise_std² I)`.
pub fn make_augmented_query(ds: &LabeledDataset, id: u64, noise_std: f64, seed: u64) -> Result<AugmentedQuery> {
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise std must be >= 0"));
    }
    let x = ds.row(id)?;
    let mut rng = SplitMix64::derive(seed, id);
    let features = if noise_std == 0.0 {
        x.to_vec()
    } else {
        x.iter().map(|v| v + noise_std * rng.next_gaussian()).collect()
    };
    Ok(AugmentedQuery {
        features,
        label: ds.label(id)?,
        positive_id: id,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell<T: Scalar = f64> {
    pub k: usize,
    pub lambda_reg: f64,
    pub weights: Option<WeightVector<T>>,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome<T: Scalar = f64> {
    pub best: WeightVector<T>,
    pub best_k: usize,
    pub best_lambda: f64,
    pub cells: Vec<SweepCell<T>>,
}

/// Trains one weight vector per `(k, λ')` cell (in parallel) and keeps the one
/// the selector scores highest; ties go to the earlier cell in grid order.
/// Failing cells are recorded and skipped.
pub fn sweep<T: Scalar, F>(
    contribs: &[GroupContributionMatrix<T>],
    k_grid: &[usize],
    lambda_grid: &[f64],
    base: &WeightLearnConfig,
    mut selector: F,
) -> Result<SweepOutcome<T>>
where
    F: FnMut(&WeightVector<T>) -> Result<f64>,
{
    if k_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::invalid("sweep grids must be non-empty"));
    }
    let grid: Vec<(usize, f64)> = k_grid
        .iter()
        .flat_map(|&k| lambda_grid.iter().map(move |&l| (k, l)))
        .collect();
    let trained: Vec<Result<WeightVector<T>>> = grid
        .par_iter()
        .map(|&(k, lambda_reg)| {
            let cfg = WeightLearnConfig {
                k,
                lambda_reg,
                ..base.clone()
            };
            learn_weights(contribs, &cfg)
        })
        .collect();
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, (&(k, lambda_reg), res)) in grid.iter().zip(trained).enumerate() {
        let mut cell = SweepCell {
            k,
            lambda_reg,
            weights: None,
            score: None,
            error: None,
        };
        match res.and_then(|w| selector(&w).map(|s| (w, s))) {
            Ok((w, s)) => {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((idx, s));
                }
                cell.weights = Some(w);
                cell.score = Some(s);
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
        cells.push(cell);
    }
    let (idx, _) = best.ok_or_else(|| Error::NumericalFailure("every sweep cell failed".into()))?;
    Ok(SweepOutcome {
        best: cells[idx].weights.clone().expect("best cell has weights"),
        best_k: cells[idx].k,
        best_lambda: cells[idx].lambda_reg,
        cells,
    })
}

pub fn weight_cosine<T: Scalar>(a: &WeightVector<T>, b: &WeightVector<T>) -> Result<T> {
    check_dim(a.len(), b.len(), "weight vectors")?;
    Ok(cosine(a.values(), b.values()))
}

pub(crate) fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm2(a) * norm2(b);
    if denom == T::zero() {
        T::zero()
    } else {
        dot(a, b) / denom
    }
}

/// Text format: `# header` comment line, then `group_name<TAB>weight` lines.
pub fn save_weights<T: Scalar>(w: &WeightVector<T>, header: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let io = |e| Error::io(path, e);
    writeln!(out, "# {}", header.replace('\n', " ")).map_err(io)?;
    for (name, v) in w.group_names().iter().zip(w.values()) {
        writeln!(out, "{name}\t{:.17e}", v.as_f64()).map_err(io)?;
    }
    std::fs::write(path, out).map_err(io)
}

/// Returns the weights and the header comment (without `# `).
pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(WeightVector<T>, String)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = String::new();
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if let Some(h) = line.strip_prefix('#') {
            if header.is_empty() {
                header = h.trim().to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (name, v) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `group<TAB>weight`".into(),
        })?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad weight `{v}`"),
        })?;
        names.push(name.to_string());
        values.push(T::of(v));
    }
    if names.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no weights".into(),
        });
    }
    Ok((WeightVector::from_values(values, names)?, header))
}
