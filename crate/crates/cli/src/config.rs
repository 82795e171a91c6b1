//! Flat INI configuration: a fixed registry of `section.key` entries with
//! typed values, layered as defaults < config file < `--set` < flags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use attriweight::pipeline::{BenchmarkConfig, FactorConfig, Method};
use attriweight::rng::SplitMix64;
use attriweight::weighting::{LossVariant, WeightLearnConfig, K_GRID, LAMBDA_GRID};
use ini::Ini;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Real,
    Bool,
    Str,
    /// Comma-separated reals.
    Reals,
    /// Comma-separated integers.
    Ints,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Int => "int",
            Kind::Real => "real",
            Kind::Bool => "bool",
            Kind::Str => "string",
            Kind::Reals => "real list",
            Kind::Ints => "int list",
        }
    }
}

pub struct KeySpec {
    /// Empty for the global section.
    pub section: &'static str,
    pub key: &'static str,
    pub kind: Kind,
    pub seed: bool,
    pub help: &'static str,
}

const fn k(section: &'static str, key: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec {
        section,
        key,
        kind,
        seed: false,
        help,
    }
}

const fn seed(section: &'static str, key: &'static str, help: &'static str) -> KeySpec {
    KeySpec {
        section,
        key,
        kind: Kind::Int,
        seed: true,
        help,
    }
}

use Kind::*;

pub const KEYS: &[KeySpec] = &[
    k("", "outdir", Str, "output root; each command writes to <outdir>/<command>/"),
    k("", "seed", Str, "global seed; derives every seed key not set explicitly (empty = off)"),
    k("dataset", "num_classes", Int, "Gaussian classes"),
    k("dataset", "dim", Int, "informative input dimensions"),
    k("dataset", "noise_dims", Int, "extra pure-noise input columns"),
    k("dataset", "noise_dim_std", Real, "std of the noise columns"),
    k("dataset", "separation", Real, "distance of class means from the origin"),
    k("dataset", "n_train", Int, "training examples"),
    k("dataset", "n_weight", Int, "weight-learning queries"),
    k("dataset", "n_eval", Int, "evaluation queries"),
    seed("dataset", "seed", "data generation and split seed"),
    k("dataset", "corruption", Real, "fraction of training labels flipped"),
    k("model", "hidden", Int, "hidden units"),
    k("model", "hidden_blocks", Int, "input-column blocks of the hidden weights (one group each)"),
    k("model", "distractor_dim", Int, "distractor noise input length (0 = no distractor)"),
    k("model", "distractor_scale", Real, "std of the distractor input"),
    seed("model", "init_seed", "parameter init seed"),
    k("model", "epochs", Int, "training epochs"),
    k("model", "lr", Real, "SGD learning rate"),
    k("model", "batch_size", Int, "minibatch size (0 = full batch)"),
    k("model", "weight_decay", Real, "L2 weight decay"),
    seed("model", "train_seed", "minibatch order seed"),
    k("projection", "dim", Int, "projected dimension per group"),
    seed("projection", "seed", "random projection seed"),
    k("attribution", "method", Str, "tracin or trak"),
    k("attribution", "trak_lambda", Real, "ridge term of the TRAK kernel"),
    k("attribution", "bias_groups", Bool, "attribute over bias groups too"),
    k("weighting", "k", Int, "pseudo-positives per query"),
    k("weighting", "lambda_reg", Real, "decoupled weight decay on the raw logits"),
    k("weighting", "lr", Real, "AdamW learning rate"),
    k("weighting", "epochs", Int, "passes over the weight-learning queries"),
    k("weighting", "loss_variant", Str, "topk, bottomk, gap or nonorm"),
    seed("weighting", "seed", "recorded in the weights header"),
    k("weighting", "k_grid", Ints, "sweep grid over k"),
    k("weighting", "lambda_grid", Reals, "sweep grid over lambda_reg"),
    k("eval", "lds_subsets", Int, "retrained subset models"),
    k("eval", "lds_alpha", Real, "subset fraction"),
    seed("eval", "lds_seed", "subset sampling seed"),
    k("eval", "bootstrap_resamples", Int, "paired bootstrap resamples"),
    seed("eval", "bootstrap_seed", "bootstrap seed"),
    k("eval", "tailpatch_k", Int, "proponents patched per query"),
    k("eval", "self_influence_top_t", Int, "top-t normalization of self-influence"),
    seed("eval", "random_seed", "random baseline scores and simplex draws"),
    k("eval", "noise_grid", Reals, "noise multipliers of noise-sweep"),
    seed("eval", "noise_seed", "noise injection seed"),
    k("eval", "sweep_queries", Int, "weight-learning queries used to select sweep cells"),
    k("oracle", "alphas", Reals, "per-group signal strengths"),
    k("oracle", "sigmas", Reals, "per-group noise stds"),
    k("oracle", "n_examples", Int, "training examples per instance"),
    k("oracle", "sparsity", Real, "fraction of examples with nonzero influence"),
    k("oracle", "n_queries", Int, "instances (queries)"),
    seed("oracle", "seed", "instance seed"),
    k("oracle", "k", Int, "pseudo-positives per query"),
    k("oracle", "lambda_reg", Real, "decoupled weight decay"),
    k("oracle", "lr", Real, "AdamW learning rate"),
    k("oracle", "epochs", Int, "passes over the queries"),
    k("factor", "factors_a", Int, "factor-A categories"),
    k("factor", "factors_b", Int, "factor-B categories"),
    k("factor", "dim_a", Int, "factor-A coordinates"),
    k("factor", "dim_b", Int, "factor-B coordinates"),
    k("factor", "noise_std", Real, "per-coordinate noise"),
    k("factor", "train_per_cell", Int, "training examples per (a, b) cell"),
    k("factor", "weight_per_cell", Int, "weight-learning examples per train-split cell"),
    k("factor", "eval_per_cell", Int, "evaluation queries per cell"),
    k("factor", "train_categories", Int, "factor-A categories in the train split"),
    seed("factor", "data_seed", "data seed"),
    k("factor", "hidden", Int, "hidden units"),
    seed("factor", "init_seed", "parameter init seed"),
    k("factor", "epochs", Int, "training epochs"),
    k("factor", "lr", Real, "SGD learning rate"),
    seed("factor", "train_seed", "minibatch order seed"),
    k("factor", "projection_dim", Int, "projected dimension per group"),
    seed("factor", "projection_seed", "random projection seed"),
    k("factor", "method", Str, "tracin or trak"),
    k("factor", "trak_lambda", Real, "ridge term of the TRAK kernel"),
    seed("factor", "query_seed", "factor-B redraw seed of emphasized queries"),
    k("factor", "recall_k", Int, "k of Recall@k"),
    k("factor", "weight_k", Int, "pseudo-positives per query"),
    k("factor", "weight_lambda_reg", Real, "decoupled weight decay"),
    k("factor", "weight_lr", Real, "AdamW learning rate"),
    k("factor", "weight_epochs", Int, "passes over the queries"),
];

fn full_name(spec: &KeySpec) -> String {
    if spec.section.is_empty() {
        spec.key.to_string()
    } else {
        format!("{}.{}", spec.section, spec.key)
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn defaults() -> BTreeMap<String, String> {
    let b = BenchmarkConfig::default();
    let f = FactorConfig::default();
    let o = WeightLearnConfig::default();
    let mut m = BTreeMap::new();
    let mut put = |name: &str, v: String| {
        m.insert(name.to_string(), v);
    };
    put("outdir", "out".into());
    put("seed", String::new());
    put("dataset.num_classes", b.num_classes.to_string());
    put("dataset.dim", b.dim.to_string());
    put("dataset.noise_dims", b.noise_dims.to_string());
    put("dataset.noise_dim_std", b.noise_dim_std.to_string());
    put("dataset.separation", b.separation.to_string());
    put("dataset.n_train", b.n_train.to_string());
    put("dataset.n_weight", b.n_weight.to_string());
    put("dataset.n_eval", b.n_eval.to_string());
    put("dataset.seed", b.data_seed.to_string());
    put("dataset.corruption", b.corruption.to_string());
    put("model.hidden", b.hidden.to_string());
    put("model.hidden_blocks", b.hidden_blocks.to_string());
    put("model.distractor_dim", b.distractor_dim.to_string());
    put("model.distractor_scale", b.distractor_scale.to_string());
    put("model.init_seed", b.init_seed.to_string());
    put("model.epochs", b.epochs.to_string());
    put("model.lr", b.lr.to_string());
    put("model.batch_size", b.batch_size.to_string());
    put("model.weight_decay", b.weight_decay.to_string());
    put("model.train_seed", b.train_seed.to_string());
    put("projection.dim", b.projection_dim.to_string());
    put("projection.seed", b.projection_seed.to_string());
    put("attribution.method", Method::TracIn.name().into());
    put("attribution.trak_lambda", b.trak_lambda.to_string());
    put("attribution.bias_groups", b.bias_groups.to_string());
    put("weighting.k", b.weighting.k.to_string());
    put("weighting.lambda_reg", b.weighting.lambda_reg.to_string());
    put("weighting.lr", b.weighting.lr.to_string());
    put("weighting.epochs", b.weighting.epochs.to_string());
    put("weighting.loss_variant", b.weighting.loss_variant.to_string());
    put("weighting.seed", b.weighting.seed.to_string());
    put("weighting.k_grid", list(&K_GRID));
    put("weighting.lambda_grid", list(&LAMBDA_GRID));
    put("eval.lds_subsets", b.lds_subsets.to_string());
    put("eval.lds_alpha", b.lds_alpha.to_string());
    put("eval.lds_seed", b.lds_seed.to_string());
    put("eval.bootstrap_resamples", attriweight::eval::BOOTSTRAP_RESAMPLES.to_string());
    put("eval.bootstrap_seed", "6".into());
    put("eval.tailpatch_k", "10".into());
    put("eval.self_influence_top_t", "10".into());
    put("eval.random_seed", "808".into());
    put("eval.noise_grid", list(&attriweight::pipeline::NOISE_GRID));
    put("eval.noise_seed", "10".into());
    put("eval.sweep_queries", "50".into());
    put("oracle.alphas", list(&attriweight::oracle::REFERENCE_ALPHAS));
    put("oracle.sigmas", list(&[1.0; 8]));
    put("oracle.n_examples", "5000".into());
    put("oracle.sparsity", attriweight::oracle::DEFAULT_SPARSITY.to_string());
    put("oracle.n_queries", "20".into());
    put("oracle.seed", "2024".into());
    put("oracle.k", o.k.to_string());
    put("oracle.lambda_reg", o.lambda_reg.to_string());
    put("oracle.lr", o.lr.to_string());
    put("oracle.epochs", o.epochs.to_string());
    put("factor.factors_a", f.factors_a.to_string());
    put("factor.factors_b", f.factors_b.to_string());
    put("factor.dim_a", f.dim_a.to_string());
    put("factor.dim_b", f.dim_b.to_string());
    put("factor.noise_std", f.noise_std.to_string());
    put("factor.train_per_cell", f.train_per_cell.to_string());
    put("factor.weight_per_cell", f.weight_per_cell.to_string());
    put("factor.eval_per_cell", f.eval_per_cell.to_string());
    put("factor.train_categories", f.train_categories.to_string());
    put("factor.data_seed", f.data_seed.to_string());
    put("factor.hidden", f.hidden.to_string());
    put("factor.init_seed", f.init_seed.to_string());
    put("factor.epochs", f.epochs.to_string());
    put("factor.lr", f.lr.to_string());
    put("factor.train_seed", f.train_seed.to_string());
    put("factor.projection_dim", f.projection_dim.to_string());
    put("factor.projection_seed", f.projection_seed.to_string());
    put("factor.method", f.method.name().into());
    put("factor.trak_lambda", f.trak_lambda.to_string());
    put("factor.query_seed", f.query_seed.to_string());
    put("factor.recall_k", f.recall_k.to_string());
    put("factor.weight_k", f.weighting.k.to_string());
    put("factor.weight_lambda_reg", f.weighting.lambda_reg.to_string());
    put("factor.weight_lr", f.weighting.lr.to_string());
    put("factor.weight_epochs", f.weighting.epochs.to_string());
    m
}

/// Text for `--help`: every accepted key with its type and default.
pub fn keys_help() -> String {
    let d = defaults();
    let mut out = String::from("Config keys (INI `[section] key = value`, or `--set section.key=value`):\n");
    for spec in KEYS {
        let name = full_name(spec);
        out.push_str(&format!(
            "  {name:<30} {:<9} {} [default: {}]\n",
            spec.kind.name(),
            spec.help,
            d[&name]
        ));
    }
    out
}

/// Resolved key/value map plus the keys given explicitly.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

pub struct Overrides<'a> {
    pub config: Option<&'a Path>,
    pub set: &'a [String],
    pub seed: Option<u64>,
    pub outdir: Option<&'a Path>,
}

fn spec_of(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| full_name(s) == name)
}

fn check_value(spec: &KeySpec, name: &str, v: &str) -> Result<(), CliError> {
    let bad = |what: &str| CliError::config("bad_value", format!("`{name}` = `{v}` is not a valid {what}"));
    let ok = match spec.kind {
        Int => v.trim().parse::<u64>().is_ok(),
        Real => v.trim().parse::<f64>().is_ok_and(f64::is_finite),
        Bool => v.trim().parse::<bool>().is_ok(),
        Str => true,
        Reals => v.split(',').all(|p| p.trim().parse::<f64>().is_ok_and(f64::is_finite)),
        Ints => v.split(',').all(|p| p.trim().parse::<u64>().is_ok()),
    };
    if ok {
        Ok(())
    } else {
        Err(bad(spec.kind.name()))
    }
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = Self {
            values: defaults(),
            explicit: BTreeSet::new(),
        };
        if let Some(path) = o.config {
            let ini = Ini::load_from_file(path)
                .map_err(|e| CliError::config("unreadable", format!("{}: {e}", path.display())))?;
            for (section, props) in ini.iter() {
                for (key, value) in props.iter() {
                    let name = match section {
                        Some(s) => format!("{s}.{key}"),
                        None => key.to_string(),
                    };
                    cfg.set(&name, value)?;
                }
            }
        }
        for item in o.set {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::config("bad_set", format!("`--set {item}` must be section.key=value")))?;
            cfg.set(name.trim(), value.trim())?;
        }
        if let Some(s) = o.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(dir) = o.outdir {
            cfg.set("outdir", &dir.to_string_lossy())?;
        }
        cfg.derive_seeds()?;
        Ok(cfg)
    }

    fn set(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let spec = spec_of(name).ok_or_else(|| CliError::config("unknown_key", format!("unknown config key `{name}`")))?;
        if !(spec.key == "seed" && spec.section.is_empty() && value.is_empty()) {
            check_value(spec, name, value)?;
        }
        self.values.insert(name.to_string(), value.trim().to_string());
        self.explicit.insert(name.to_string());
        Ok(())
    }

    fn derive_seeds(&mut self) -> Result<(), CliError> {
        let global = self.values["seed"].clone();
        if global.is_empty() {
            return Ok(());
        }
        let g: u64 = global
            .parse()
            .map_err(|_| CliError::config("bad_value", format!("`seed` = `{global}` is not a valid int")))?;
        for (tag, spec) in KEYS.iter().enumerate() {
            let name = full_name(spec);
            if spec.seed && !self.explicit.contains(&name) {
                let derived = SplitMix64::derive(g, tag as u64).next_u64();
                self.values.insert(name, derived.to_string());
            }
        }
        Ok(())
    }

    pub fn outdir(&self) -> PathBuf {
        PathBuf::from(&self.values["outdir"])
    }

    pub fn global_seed(&self) -> Option<u64> {
        self.values["seed"].parse().ok()
    }

    fn raw(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("config key `{name}` is not registered"))
    }

    fn parse<T: FromStr>(&self, name: &str) -> Result<T, CliError> {
        self.raw(name)
            .parse()
            .map_err(|_| CliError::config("bad_value", format!("`{name}` = `{}` is invalid", self.raw(name))))
    }

    pub fn usize(&self, name: &str) -> Result<usize, CliError> {
        self.parse(name)
    }

    pub fn u64(&self, name: &str) -> Result<u64, CliError> {
        self.parse(name)
    }

    pub fn f64(&self, name: &str) -> Result<f64, CliError> {
        self.parse(name)
    }

    pub fn reals(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.raw(name)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::config("bad_value", format!("`{name}` has a bad entry `{p}`")))
            })
            .collect()
    }

    pub fn ints(&self, name: &str) -> Result<Vec<usize>, CliError> {
        self.raw(name)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::config("bad_value", format!("`{name}` has a bad entry `{p}`")))
            })
            .collect()
    }

    pub fn method(&self, name: &str) -> Result<Method, CliError> {
        self.raw(name)
            .parse()
            .map_err(|e: attriweight::Error| CliError::config("bad_value", format!("`{name}`: {e}")))
    }

    pub fn benchmark(&self) -> Result<BenchmarkConfig, CliError> {
        let loss_variant: LossVariant = self
            .raw("weighting.loss_variant")
            .parse()
            .map_err(|e: attriweight::Error| CliError::config("bad_value", format!("`weighting.loss_variant`: {e}")))?;
        Ok(BenchmarkConfig {
            num_classes: self.usize("dataset.num_classes")?,
            dim: self.usize("dataset.dim")?,
            noise_dims: self.usize("dataset.noise_dims")?,
            noise_dim_std: self.f64("dataset.noise_dim_std")?,
            separation: self.f64("dataset.separation")?,
            n_train: self.usize("dataset.n_train")?,
            n_weight: self.usize("dataset.n_weight")?,
            n_eval: self.usize("dataset.n_eval")?,
            data_seed: self.u64("dataset.seed")?,
            corruption: self.f64("dataset.corruption")?,
            hidden: self.usize("model.hidden")?,
            hidden_blocks: self.usize("model.hidden_blocks")?,
            distractor_dim: self.usize("model.distractor_dim")?,
            distractor_scale: self.f64("model.distractor_scale")?,
            init_seed: self.u64("model.init_seed")?,
            epochs: self.usize("model.epochs")?,
            lr: self.f64("model.lr")?,
            batch_size: self.usize("model.batch_size")?,
            weight_decay: self.f64("model.weight_decay")?,
            train_seed: self.u64("model.train_seed")?,
            projection_dim: self.usize("projection.dim")?,
            projection_seed: self.u64("projection.seed")?,
            bias_groups: self.parse("attribution.bias_groups")?,
            trak_lambda: self.f64("attribution.trak_lambda")?,
            lds_subsets: self.usize("eval.lds_subsets")?,
            lds_alpha: self.f64("eval.lds_alpha")?,
            lds_seed: self.u64("eval.lds_seed")?,
            weighting: WeightLearnConfig {
                k: self.usize("weighting.k")?,
                lambda_reg: self.f64("weighting.lambda_reg")?,
                lr: self.f64("weighting.lr")?,
                epochs: self.usize("weighting.epochs")?,
                loss_variant,
                seed: self.u64("weighting.seed")?,
            },
        })
    }

    pub fn oracle_weighting(&self) -> Result<WeightLearnConfig, CliError> {
        Ok(WeightLearnConfig {
            k: self.usize("oracle.k")?,
            lambda_reg: self.f64("oracle.lambda_reg")?,
            lr: self.f64("oracle.lr")?,
            epochs: self.usize("oracle.epochs")?,
            ..WeightLearnConfig::default()
        })
    }

    pub fn factor(&self) -> Result<FactorConfig, CliError> {
        Ok(FactorConfig {
            factors_a: self.usize("factor.factors_a")?,
            factors_b: self.usize("factor.factors_b")?,
            dim_a: self.usize("factor.dim_a")?,
            dim_b: self.usize("factor.dim_b")?,
            noise_std: self.f64("factor.noise_std")?,
            train_per_cell: self.usize("factor.train_per_cell")?,
            weight_per_cell: self.usize("factor.weight_per_cell")?,
            eval_per_cell: self.usize("factor.eval_per_cell")?,
            train_categories: self.usize("factor.train_categories")?,
            data_seed: self.u64("factor.data_seed")?,
            hidden: self.usize("factor.hidden")?,
            init_seed: self.u64("factor.init_seed")?,
            epochs: self.usize("factor.epochs")?,
            lr: self.f64("factor.lr")?,
            train_seed: self.u64("factor.train_seed")?,
            projection_dim: self.usize("factor.projection_dim")?,
            projection_seed: self.u64("factor.projection_seed")?,
            method: self.method("factor.method")?,
            trak_lambda: self.f64("factor.trak_lambda")?,
            query_seed: self.u64("factor.query_seed")?,
            recall_k: self.usize("factor.recall_k")?,
            weighting: WeightLearnConfig {
                k: self.usize("factor.weight_k")?,
                lambda_reg: self.f64("factor.weight_lambda_reg")?,
                lr: self.f64("factor.weight_lr")?,
                epochs: self.usize("factor.weight_epochs")?,
                ..WeightLearnConfig::default()
            },
        })
    }

    /// Resolved configuration as INI text, keys in registry order. `outdir`
    /// is left out so identical runs in different directories match.
    pub fn snapshot(&self) -> String {
        let mut ini = Ini::new();
        for spec in KEYS.iter().filter(|s| s.key != "outdir") {
            let section = (!spec.section.is_empty()).then_some(spec.section);
            ini.with_section(section).set(spec.key, &self.values[&full_name(spec)]);
        }
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("config values are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(set: &[&str]) -> Result<RunConfig, CliError> {
        let set: Vec<String> = set.iter().map(|s| s.to_string()).collect();
        RunConfig::resolve(&Overrides {
            config: None,
            set: &set,
            seed: None,
            outdir: None,
        })
    }

    #[test]
    fn every_key_has_a_default() {
        let d = defaults();
        assert_eq!(d.len(), KEYS.len());
        for spec in KEYS {
            assert!(d.contains_key(&full_name(spec)), "{}", full_name(spec));
        }
    }

    #[test]
    fn defaults_reproduce_library_configs() {
        let cfg = resolve(&[]).unwrap();
        assert_eq!(cfg.benchmark().unwrap(), BenchmarkConfig::default());
        assert_eq!(cfg.factor().unwrap(), FactorConfig::default());
        assert_eq!(cfg.oracle_weighting().unwrap(), WeightLearnConfig::default());
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        assert_eq!(resolve(&["dataset.nope=1"]).unwrap_err().tag(), "config:unknown_key");
        assert_eq!(resolve(&["dataset.dim=abc"]).unwrap_err().tag(), "config:bad_value");
        assert_eq!(resolve(&["dataset.dim"]).unwrap_err().tag(), "config:bad_set");
        assert_eq!(resolve(&["dataset.dim=20"]).unwrap().benchmark().unwrap().dim, 20);
    }

    #[test]
    fn global_seed_fills_only_implicit_seeds() {
        let set = vec!["dataset.seed=5".to_string()];
        let cfg = RunConfig::resolve(&Overrides {
            config: None,
            set: &set,
            seed: Some(42),
            outdir: None,
        })
        .unwrap();
        let b = cfg.benchmark().unwrap();
        assert_eq!(b.data_seed, 5);
        assert_ne!(b.init_seed, BenchmarkConfig::default().init_seed);
        assert_eq!(cfg.global_seed(), Some(42));
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = resolve(&["model.hidden=8", "eval.noise_grid=0,1"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ini");
        std::fs::write(&path, cfg.snapshot()).unwrap();
        let again = RunConfig::resolve(&Overrides {
            config: Some(&path),
            set: &[],
            seed: None,
            outdir: None,
        })
        .unwrap();
        assert_eq!(again.snapshot(), cfg.snapshot());
        assert_eq!(again.benchmark().unwrap().hidden, 8);
    }
}
