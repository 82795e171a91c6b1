//! Signal-plus-noise model of per-group contributions with closed-form
//! optimal weights.
//!
//! Group `j` measures the true influence `I` as `a_j = α_j I + ε_j` with
//! `ε_j ~ N(0, σ_j²)`. For weights `w` the combined score has
//! `SNR(w) = (Σ_j w_j α_j)² / Σ_j w_j² σ_j²` (taking `Var(I) = 1`), which is
//! maximized by `w*_j ∝ α_j / σ_j²`.

use std::io::Write;
use std::path::Path;

use crate::attribution::GroupContributionMatrix;
use crate::error::{check_dim, Error, Result};
use crate::rng::SplitMix64;
use crate::weighting::{cosine, learn_weights, WeightLearnConfig, WeightVector};

pub const DEFAULT_SPARSITY: f64 = 0.02;

/// Reference instance used by the recovery check.
pub const REFERENCE_ALPHAS: [f64; 8] = [4.0, 2.0, 1.0, 1.0, 0.5, 0.25, 0.0, 0.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SnrInstance {
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub influence: Vec<f64>,
    pub contributions: GroupContributionMatrix<f64>,
    pub seed: u64,
}

pub fn group_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("group{j}")).collect()
}

fn check_params(alphas: &[f64], sigmas: &[f64]) -> Result<()> {
    check_dim(alphas.len(), sigmas.len(), "sigmas")?;
    if alphas.is_empty() {
        return Err(Error::invalid("need at least one group"));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::invalid("alphas must be finite and >= 0"));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("sigmas must be finite and > 0"));
    }
    Ok(())
}

/// Exactly `round(sparsity · n)` examples carry a standard-normal influence;
/// the rest have none. Noise is i.i.d. per `(n, j)`.
pub fn generate_instance(alphas: &[f64], sigmas: &[f64], n_examples: usize, sparsity: f64, seed: u64) -> Result<SnrInstance> {
    check_params(alphas, sigmas)?;
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::invalid(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    if n_examples == 0 {
        return Err(Error::invalid("need at least one example"));
    }
    let active = (sparsity * n_examples as f64).round() as usize;
    let mut influence = vec![0.0; n_examples];
    let mut support = SplitMix64::derive(seed, 0);
    let mut draws = SplitMix64::derive(seed, 1);
    for i in support.sample_indices(n_examples, active) {
        influence[i] = draws.next_gaussian();
    }
    let mut noise = SplitMix64::derive(seed, 2);
    let m = alphas.len();
    let mut data = Vec::with_capacity(n_examples * m);
    for &inf in &influence {
        for j in 0..m {
            data.push(alphas[j] * inf + sigmas[j] * noise.next_gaussian());
        }
    }
    Ok(SnrInstance {
        alphas: alphas.to_vec(),
        sigmas: sigmas.to_vec(),
        influence,
        contributions: GroupContributionMatrix::new(data, (0..n_examples as u64).collect(), group_names(m))?,
        seed,
    })
}

/// One instance per query, sharing `(α, σ)` with fresh influence and noise.
pub fn generate_queries(
    alphas: &[f64],
    sigmas: &[f64],
    n_examples: usize,
    sparsity: f64,
    seed: u64,
    n_queries: usize,
) -> Result<Vec<SnrInstance>> {
    (0..n_queries)
        .map(|q| generate_instance(alphas, sigmas, n_examples, sparsity, SplitMix64::derive(seed, q as u64).next_u64()))
        .collect()
}

pub fn snr(w: &WeightVector, alphas: &[f64], sigmas: &[f64]) -> Result<f64> {
    check_dim(alphas.len(), w.len(), "weights")?;
    check_dim(alphas.len(), sigmas.len(), "sigmas")?;
    let signal: f64 = w.values().iter().zip(alphas).map(|(w, a)| w * a).sum();
    let noise: f64 = w.values().iter().zip(sigmas).map(|(w, s)| w * w * s * s).sum();
    if noise == 0.0 {
        return Err(Error::Degenerate("all w_j σ_j are zero".into()));
    }
    Ok(signal * signal / noise)
}

pub fn optimal_weights(alphas: &[f64], sigmas: &[f64]) -> Result<WeightVector> {
    check_params(alphas, sigmas)?;
    let raw: Vec<f64> = alphas.iter().zip(sigmas).map(|(a, s)| a / (s * s)).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("at least one alpha must be positive"));
    }
    WeightVector::from_values(raw.into_iter().map(|v| v / total).collect(), group_names(alphas.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub learned: WeightVector,
    pub optimal: WeightVector,
    pub cosine_to_optimal: f64,
    pub snr_ratio: f64,
}

/// Learns weights from the instance's contributions as a single query.
pub fn verify_recovery(instance: &SnrInstance, cfg: &WeightLearnConfig) -> Result<Recovery> {
    verify_recovery_multi(std::slice::from_ref(instance), cfg)
}

/// Learns weights from one contribution matrix per query; all instances must
/// share `(α, σ)`.
pub fn verify_recovery_multi(instances: &[SnrInstance], cfg: &WeightLearnConfig) -> Result<Recovery> {
    let first = instances
        .first()
        .ok_or_else(|| Error::invalid("need at least one instance"))?;
    if instances
        .iter()
        .any(|i| i.alphas != first.alphas || i.sigmas != first.sigmas)
    {
        return Err(Error::invalid("instances disagree on (alpha, sigma)"));
    }
    let contribs: Vec<_> = instances.iter().map(|i| i.contributions.clone()).collect();
    let learned = learn_weights(&contribs, cfg)?;
    let optimal = optimal_weights(&first.alphas, &first.sigmas)?;
    let cosine_to_optimal = cosine(learned.values(), optimal.values());
    let snr_ratio = snr(&learned, &first.alphas, &first.sigmas)? / snr(&optimal, &first.alphas, &first.sigmas)?;
    Ok(Recovery {
        learned,
        optimal,
        cosine_to_optimal,
        snr_ratio,
    })
}

/// CSV with header `n,influence,a_1,...,a_M`.
pub fn write_instance_csv(instance: &SnrInstance, mut w: impl Write) -> std::io::Result<()> {
    let m = instance.alphas.len();
    write!(w, "n,influence")?;
    for j in 1..=m {
        write!(w, ",a_{j}")?;
    }
    writeln!(w)?;
    for (n, inf) in instance.influence.iter().enumerate() {
        write!(w, "{n},{inf:.17e}")?;
        for v in instance.contributions.row(n) {
            write!(w, ",{v:.17e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_instance_csv(instance: &SnrInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_instance_csv(instance, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
