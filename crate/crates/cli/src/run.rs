//! Per-command output directory, artifact lookup and the manifest.

use std::path::{Path, PathBuf};

use attriweight::dataset::{load_csv, DataSplit};
use attriweight::eval::LdsGroundTruth;
use attriweight::features::{group_indices, load_store, ProjectionSpec};
use attriweight::model::load_checkpoint;
use attriweight::pipeline::{Benchmark, BenchmarkConfig, BenchmarkData, Method};
use attriweight::weighting::{load_weights, WeightVector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    crc32: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: &'a str,
    inputs: &'a [FileEntry],
    outputs: &'a [FileEntry],
}

pub struct Run {
    pub cfg: RunConfig,
    pub command: &'static str,
    root: PathBuf,
    dir: PathBuf,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Lib(attriweight::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn crc_of(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(format!("{:08x}", crc32fast::hash(&bytes)))
}

impl Run {
    pub fn new(cfg: RunConfig, command: &'static str) -> CliResult<Self> {
        let root = cfg.outdir();
        let dir = root.join(command);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            cfg,
            command,
            root,
            dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Path of an artifact produced by `stage`, recorded as an input; a
    /// missing file is a `missing:<artifact>` error.
    pub fn input(&mut self, artifact: &'static str, stage: &str, name: &str) -> CliResult<PathBuf> {
        let path = self.root.join(stage).join(name);
        if !path.is_file() {
            return Err(CliError::missing(
                artifact,
                format!("{} not found; run `attriweight {stage}` first", path.display()),
            ));
        }
        self.inputs.push(FileEntry {
            path: self.rel(&path),
            crc32: crc_of(&path)?,
        });
        Ok(path)
    }

    /// Like [`Run::input`] but `None` when the file does not exist.
    pub fn optional_input(&mut self, stage: &str, name: &str) -> CliResult<Option<PathBuf>> {
        if self.root.join(stage).join(name).is_file() {
            self.input("optional", stage, name).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file already written under the command directory.
    pub fn record(&mut self, name: &str) -> CliResult<()> {
        let path = self.output_path(name);
        self.outputs.push(FileEntry {
            path: self.rel(&path),
            crc32: crc_of(&path)?,
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.output_path(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.record(name)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Writes the resolved config and the manifest; call last.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.write("config.ini", self.cfg.snapshot())?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cfg.global_seed(),
            config: "config.ini",
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let path = self.output_path("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(self.dir)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, path: &Path) -> CliResult<T> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Lib(attriweight::Error::Format(format!("{}: {e}", path.display()))))
    }

    pub fn load_data(&mut self, cfg: &BenchmarkConfig) -> CliResult<BenchmarkData> {
        let dataset = load_csv(self.input("dataset", "gen-data", "dataset.csv")?)?;
        let clean = load_csv(self.input("dataset", "gen-data", "clean_dataset.csv")?)?;
        let split_path = self.input("dataset", "gen-data", "split.json")?;
        let split: DataSplit = self.read_json(&split_path)?;
        let corruption = if cfg.corruption > 0.0 {
            let p = self.input("corruption_record", "gen-data", "corruption.json")?;
            Some(self.read_json(&p)?)
        } else {
            None
        };
        Ok(BenchmarkData {
            clean,
            dataset,
            split,
            corruption,
        })
    }

    /// The trained benchmark rebuilt from the gen-data, train and extract
    /// artifacts. Checks the latest stage first so the error names the
    /// artifact closest to the request.
    pub fn load_benchmark(&mut self) -> CliResult<Benchmark> {
        let config = self.cfg.benchmark()?;
        let store_path = self.input("feature_store", "extract", "feature_store.bin")?;
        let projection_path = self.input("feature_store", "extract", "projection.json")?;
        let ckpt_path = self.input("model", "train", "model.ckpt")?;
        let data = self.load_data(&config)?;
        let train_store = load_store(store_path)?;
        let projection: ProjectionSpec = self.read_json(&projection_path)?;
        let checkpoint = load_checkpoint(ckpt_path)?;
        let groups = group_indices(&projection.output_layout(), &config.attribution_groups())?;
        Ok(Benchmark {
            config,
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

    pub fn load_ground_truth(&mut self) -> CliResult<LdsGroundTruth> {
        let path = self.input("ground_truth", "eval-lds", "ground_truth.json")?;
        self.read_json(&path)
    }

    /// Learned weights for `method`, when learn-weights has produced them.
    pub fn learned_weights(&mut self, method: Method) -> CliResult<Option<WeightVector>> {
        match self.optional_input("learn-weights", &weights_file(method))? {
            Some(p) => Ok(Some(load_weights(p)?.0)),
            None => Ok(None),
        }
    }
}

pub fn weights_file(method: Method) -> String {
    format!("weights_{}.tsv", method.name())
}
