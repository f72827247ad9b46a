use std::path::{Path, PathBuf};

use fate_core::data::{FeatureOptions, PrepareOptions, TargetSpec};
use fate_core::model::{ModelConfig, SoftmaxAxis};
use fate_core::train::{LrMode, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: Option<DataSection>,
    pub target: Option<TargetSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Wide,
    Long,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFile {
    pub feature: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: usize,
    pub val: usize,
    pub test: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub format: InputFormat,
    /// Wide layout: one file per feature.
    #[serde(default)]
    pub files: Vec<FeatureFile>,
    /// Long layout: a single file.
    pub path: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    pub lag: usize,
    #[serde(default = "yes")]
    pub cartesian: bool,
    #[serde(default = "yes")]
    pub temporal: bool,
    pub split: SplitSection,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
}

fn yes() -> bool {
    true
}

fn default_cache() -> PathBuf {
    "dataset.fdat".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub stations: Vec<String>,
    pub feature: String,
    pub horizons: Vec<usize>,
}

impl TargetSection {
    pub fn specs(&self) -> Vec<TargetSpec> {
        self.stations
            .iter()
            .flat_map(|s| {
                self.horizons.iter().map(move |&h| TargetSpec {
                    station: s.clone(),
                    feature: self.feature.clone(),
                    horizon: h,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_heads: usize,
    pub key_dim: usize,
    pub dense_units: usize,
    pub num_layers: usize,
    pub focal_levels: usize,
    pub softmax_axis: SoftmaxAxis,
    pub norm_eps: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(1, 1, 1, 1);
        Self {
            num_heads: m.num_heads,
            key_dim: m.key_dim,
            dense_units: m.dense_units,
            num_layers: m.num_layers,
            focal_levels: m.focal_levels,
            softmax_axis: m.softmax_axis,
            norm_eps: m.norm_eps,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, lag: usize, stations: usize, params: usize, n_targets: usize) -> ModelConfig {
        ModelConfig {
            lag,
            stations,
            params,
            n_targets,
            num_heads: self.num_heads,
            key_dim: self.key_dim,
            dense_units: self.dense_units,
            num_layers: self.num_layers,
            focal_levels: self.focal_levels,
            softmax_axis: self.softmax_axis,
            norm_eps: self.norm_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub warmup_steps: usize,
    pub lr_mode: LrMode,
    pub max_steps: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            warmup_steps: t.warmup_steps,
            lr_mode: t.lr_mode,
            max_steps: t.max_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub correlation_input: Option<PathBuf>,
    pub kmeans_input: Option<PathBuf>,
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Encoder layer whose attention is scored.
    pub layer: usize,
    /// Parameters to ablate; all input features when empty.
    pub ablate: Vec<String>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            correlation_input: None,
            kmeans_input: None,
            k: 2,
            restarts: 10,
            max_iter: 300,
            tol: 0.0,
            layer: 0,
            ablate: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad override key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {key:?}: {part} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override(value.trim()));
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads the file, applies `--set` overrides then `--seed`/`--out`,
    /// resolves relative paths against the config file's directory and validates.
    pub fn load(path: &Path, sets: &[String], seed: Option<u64>, out: Option<&Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Core(fate_core::FateError::io(path, e)))?;
        let mut root: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        for s in sets {
            apply_override(&mut root, s)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &mut cfg.data {
            d.files.iter_mut().for_each(|f| resolve(base, &mut f.path));
            if let Some(p) = &mut d.path {
                resolve(base, p);
            }
            if let Some(p) = &mut d.coords {
                resolve(base, p);
            }
        }
        for p in [&mut cfg.analysis.correlation_input, &mut cfg.analysis.kmeans_input]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        match out {
            Some(o) => cfg.output.dir = o.to_path_buf(),
            None => resolve(base, &mut cfg.output.dir),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::config(m.to_string()));
        if let Some(d) = &self.data {
            match d.format {
                InputFormat::Wide if d.files.is_empty() => return bad("data.files is required for wide format"),
                InputFormat::Long if d.path.is_none() => return bad("data.path is required for long format"),
                _ => {}
            }
            if d.lag == 0 {
                return bad("data.lag must be >= 1");
            }
            if d.split.train == 0 || d.split.val == 0 {
                return bad("data.split.train and data.split.val must be >= 1");
            }
        }
        if let Some(t) = &self.target {
            if t.stations.is_empty() || t.horizons.is_empty() {
                return bad("target.stations and target.horizons must be nonempty");
            }
            if t.horizons.contains(&0) {
                return bad("target.horizons must be >= 1");
            }
        }
        self.model.model_config(1, 1, 1, 1).validate()?;
        self.train_config().validate()?;
        let a = &self.analysis;
        if a.k == 0 || a.restarts == 0 || a.max_iter == 0 || !(a.tol >= 0.0) {
            return bad("analysis.k, restarts, max_iter must be >= 1 and tol >= 0");
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            batch_size: self.train.batch_size,
            patience: self.train.patience,
            warmup_steps: self.train.warmup_steps,
            seed: self.seed,
            lr_mode: self.train.lr_mode,
            max_steps: self.train.max_steps,
        }
    }

    pub fn data(&self) -> Result<&DataSection, CliError> {
        self.data.as_ref().ok_or_else(|| CliError::config("missing [data] section"))
    }

    pub fn target(&self) -> Result<&TargetSection, CliError> {
        self.target.as_ref().ok_or_else(|| CliError::config("missing [target] section"))
    }

    pub fn prepare_options(&self) -> Result<PrepareOptions, CliError> {
        let d = self.data()?;
        Ok(PrepareOptions {
            lag: d.lag,
            targets: self.target()?.specs(),
            train: d.split.train,
            val: d.split.val,
            test: d.split.test,
            features: FeatureOptions {
                cartesian: d.cartesian,
                temporal: d.temporal,
            },
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.output.dir
    }

    pub fn cache_path(&self) -> Result<PathBuf, CliError> {
        Ok(self.output.dir.join(&self.data()?.cache))
    }

    /// SHA-256 of the effective configuration, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\n[model]\nnum_heads = 2\n").unwrap();
        let c = RunConfig::load(
            &p,
            &["model.key_dim=4".into(), "model.softmax_axis=time".into(), "train.lr_mode={fixed=0.5}".into()],
            Some(9),
            None,
        )
        .unwrap();
        assert_eq!((c.seed, c.model.num_heads, c.model.key_dim), (9, 2, 4));
        assert_eq!(c.model.softmax_axis, SoftmaxAxis::Time);
        assert_eq!(c.train.lr_mode, LrMode::Fixed(0.5));
        assert_eq!(c.output.dir, dir.path().join("out"));

        std::fs::write(&p, "seed = 1\n[model]\nheads = 2\n").unwrap();
        let err = RunConfig::load(&p, &[], None, None).unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        std::fs::write(&p, "seed = 1\n").unwrap();
        assert!(RunConfig::load(&p, &["model.num_heads=0".into()], None, None).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\n").unwrap();
        let a = RunConfig::load(&p, &[], None, Some(Path::new("x"))).unwrap();
        let b = RunConfig::load(&p, &[], None, Some(Path::new("y"))).unwrap();
        let c = RunConfig::load(&p, &[], Some(2), None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
