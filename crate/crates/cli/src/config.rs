//! Run configuration: one TOML file per run, overridable from the command
//! line and from `INSTRCLASS_*` environment variables.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use instrclass::dsp::StftConfig;
use instrclass::evaluation::ModelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub dataset: DatasetParams,
    #[serde(default)]
    pub features: FeatureParams,
    pub model: ModelSpec,
    #[serde(default)]
    pub training: TrainingParams,
    #[serde(default)]
    pub evaluation: EvaluationParams,
}

/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// NSynth `examples.json` of the split that supplies training notes.
    pub train_metadata: PathBuf,
    pub train_wav_dir: PathBuf,
    pub valid_metadata: Option<PathBuf>,
    pub valid_wav_dir: Option<PathBuf>,
    pub test_metadata: Option<PathBuf>,
    pub test_wav_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Which representation the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// 168-value feature rows.
    Nufdic,
    /// Spectrogram images.
    Sidic,
    /// Images and feature rows together, aligned by note id.
    Dual,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Nufdic => "nufdic",
            DatasetKind::Sidic => "sidic",
            DatasetKind::Dual => "dual",
        }
    }

    pub fn needs_features(self) -> bool {
        matches!(self, DatasetKind::Nufdic | DatasetKind::Dual)
    }

    pub fn needs_images(self) -> bool {
        matches!(self, DatasetKind::Sidic | DatasetKind::Dual)
    }
}

/// `valid_per_class` and `test_per_class` mean "held out of the training
/// split" when the matching metadata path is absent, and "balanced subset
/// of that split" when it is present (0 keeps the whole split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub kind: DatasetKind,
    pub per_class: usize,
    pub valid_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
    /// Area-averaging factor applied to spectrogram images when loading.
    pub image_downscale: u32,
    pub max_failure_fraction: f64,
    /// Skip notes with out-of-range pitch or velocity instead of failing.
    pub skip_out_of_range: bool,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Nufdic,
            per_class: 100,
            valid_per_class: 0,
            test_per_class: 0,
            seed: 0,
            image_downscale: 4,
            max_failure_fraction: 0.01,
            skip_out_of_range: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub stft: StftConfig,
    pub sample_rate: u32,
    /// Accept clips at other rates; features are then computed at the
    /// clip's own rate.
    pub allow_any_rate: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { stft: StftConfig::default(), sample_rate: 16_000, allow_any_rate: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    /// Required by `train` and `sweep`; supplied with `--seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationParams {
    /// Per-class training sizes for `sweep`; empty means `[dataset.per_class]`.
    pub sizes: Vec<usize>,
    pub repeats: usize,
    /// Models compared alongside `model` by `sweep`.
    pub extra_models: Vec<ModelSpec>,
    pub confusion_png: bool,
    pub confusion_cell_px: u32,
    /// Fitted points written per power curve.
    pub curve_samples: usize,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            repeats: 1,
            extra_models: Vec::new(),
            confusion_png: true,
            confusion_cell_px: 40,
            curve_samples: 50,
        }
    }
}

impl RunConfig {
    /// Parses TOML text and applies `key.path=value` overrides before
    /// deserializing, so overrides see the same validation as the file.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("invalid TOML")?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let cfg: RunConfig = table.try_into().context("invalid run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.per_class == 0 {
            bail!("dataset.per_class must be positive");
        }
        if d.image_downscale == 0 {
            bail!("dataset.image_downscale must be positive");
        }
        if !(0.0..=1.0).contains(&d.max_failure_fraction) {
            bail!("dataset.max_failure_fraction must lie in [0, 1]");
        }
        if self.paths.test_metadata.is_none() && d.test_per_class == 0 {
            bail!("without paths.test_metadata, dataset.test_per_class must hold out at least one note per class");
        }
        if self.paths.valid_metadata.is_some() != self.paths.valid_wav_dir.is_some() {
            bail!("paths.valid_metadata and paths.valid_wav_dir go together");
        }
        if self.paths.test_metadata.is_some() != self.paths.test_wav_dir.is_some() {
            bail!("paths.test_metadata and paths.test_wav_dir go together");
        }
        self.features.stft.validate()?;
        let e = &self.evaluation;
        if e.repeats == 0 {
            bail!("evaluation.repeats must be at least 1");
        }
        if e.sizes.contains(&0) {
            bail!("evaluation.sizes must be positive");
        }
        Ok(())
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for path in [&mut p.train_metadata, &mut p.train_wav_dir, &mut p.output_dir] {
            fix(path);
        }
        for path in [&mut p.valid_metadata, &mut p.valid_wav_dir, &mut p.test_metadata, &mut p.test_wav_dir]
            .into_iter()
            .flatten()
        {
            fix(path);
        }
    }

    /// Every input path a dataset build reads.
    pub fn input_paths(&self) -> Vec<&Path> {
        let p = &self.paths;
        let mut out = vec![p.train_metadata.as_path(), p.train_wav_dir.as_path()];
        out.extend([&p.valid_metadata, &p.valid_wav_dir, &p.test_metadata, &p.test_wav_dir].into_iter().flatten().map(PathBuf::as_path));
        out
    }

    /// Largest per-class training size any command needs.
    pub fn train_pool(&self) -> usize {
        self.evaluation.sizes.iter().copied().chain([self.dataset.per_class]).max().unwrap_or(0)
    }

    pub fn sweep_sizes(&self) -> Vec<usize> {
        if self.evaluation.sizes.is_empty() {
            vec![self.dataset.per_class]
        } else {
            self.evaluation.sizes.clone()
        }
    }

    /// Hash of everything that determines the built dataset.
    pub fn data_stamp(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            train_metadata: &'a Path,
            train_wav_dir: &'a Path,
            valid_metadata: Option<&'a Path>,
            valid_wav_dir: Option<&'a Path>,
            test_metadata: Option<&'a Path>,
            test_wav_dir: Option<&'a Path>,
            train_pool: usize,
            dataset: &'a DatasetParams,
            features: &'a FeatureParams,
        }
        let p = &self.paths;
        // The image factor only matters when loading.
        let dataset = DatasetParams { image_downscale: 1, per_class: 1, ..self.dataset.clone() };
        let key = Key {
            train_metadata: &p.train_metadata,
            train_wav_dir: &p.train_wav_dir,
            valid_metadata: p.valid_metadata.as_deref(),
            valid_wav_dir: p.valid_wav_dir.as_deref(),
            test_metadata: p.test_metadata.as_deref(),
            test_wav_dir: p.test_wav_dir.as_deref(),
            train_pool: self.train_pool(),
            dataset: &dataset,
            features: &self.features,
        };
        Ok(stamp(&toml::to_string(&key)?))
    }

    /// Hash of the whole configuration except the output location.
    pub fn run_stamp(&self) -> Result<String> {
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        Ok(stamp(&c.to_toml()?))
    }

    pub fn data_dir(&self) -> Result<PathBuf> {
        Ok(self.paths.output_dir.join(format!("data-{}", self.data_stamp()?)))
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.paths.output_dir.join(format!("run-{}", self.run_stamp()?)))
    }
}

/// First 12 hex digits of the SHA-256 of `text`.
fn stamp(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    format!("{digest:x}")[..12].to_string()
}

/// Sets `a.b.c = value` in `table`. The value is read as a TOML literal and
/// falls back to a plain string, so `model.model=naive_bayes` works unquoted.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override {item:?} is not of the form key.path=value"))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} has an empty component");
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for part in parents {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {part:?} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use instrclass::classical::{BoostConfig, ForestConfig, SearchSpace, SvmConfig, TreeConfig};
    use instrclass::neural::{Preset, PresetOptions, TrainConfig};

    const MINIMAL: &str = r#"
        [paths]
        train_metadata = "nsynth-train/examples.json"
        train_wav_dir = "nsynth-train/audio"
        test_metadata = "nsynth-test/examples.json"
        test_wav_dir = "nsynth-test/audio"
        output_dir = "runs"

        [model]
        model = "random_forest"
        n_trees = 100
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.dataset, DatasetParams::default());
        assert_eq!(cfg.model, ModelSpec::RandomForest(ForestConfig { n_trees: 100, ..Default::default() }));
        assert_eq!(cfg.sweep_sizes(), [100]);
    }

    #[test]
    fn round_trips_every_model_kind() {
        let models = vec![
            ModelSpec::NaiveBayes,
            ModelSpec::DecisionTree(TreeConfig { max_depth: Some(4), ..Default::default() }),
            ModelSpec::RandomForest(ForestConfig::default()),
            ModelSpec::RandomSearch { space: SearchSpace::default(), n_iter: 5, folds: 2 },
            ModelSpec::Svm(SvmConfig::default()),
            ModelSpec::AdaBoost { n_estimators: 10, learning_rate: 0.5 },
            ModelSpec::GradientBoosting(BoostConfig::xgb(30)),
            ModelSpec::Neural {
                preset: Preset::DualInput,
                options: PresetOptions { hidden: Some(vec![8]), dropout: Some(0.1), ..Default::default() },
                train: TrainConfig { early_stopping: None, ..Default::default() },
            },
        ];
        let mut cfg = RunConfig::parse(MINIMAL, &[]).unwrap();
        cfg.training.seed = Some(7);
        cfg.evaluation.sizes = vec![50, 100];
        cfg.evaluation.extra_models = models.clone();
        for m in models {
            cfg.model = m;
            let text = cfg.to_toml().unwrap();
            assert_eq!(RunConfig::parse(&text, &[]).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn overrides_apply_before_validation() {
        let cfg = RunConfig::parse(
            MINIMAL,
            &["dataset.per_class=7".into(), "model.model=naive_bayes".into(), "features.stft.hop=256".into()],
        )
        .unwrap();
        assert_eq!(cfg.dataset.per_class, 7);
        assert_eq!(cfg.model, ModelSpec::NaiveBayes);
        assert_eq!(cfg.features.stft.hop, 256);
        assert!(RunConfig::parse(MINIMAL, &["dataset.per_class=0".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, &["dataset.per_class".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, &["dataset.bogus=1".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, &["paths.output_dir.x=1".into()]).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::parse(MINIMAL, &["features.stft.fft_len=1000".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, &["evaluation.repeats=0".into()]).is_err());
        let no_test = MINIMAL.replace("test_metadata = \"nsynth-test/examples.json\"", "");
        assert!(RunConfig::parse(&no_test, &[]).is_err());
        // A wav dir without its metadata is still an error.
        assert!(RunConfig::parse(&no_test, &["dataset.test_per_class=5".into()]).is_err());
        let no_test = no_test.replace("test_wav_dir = \"nsynth-test/audio\"", "");
        assert!(RunConfig::parse(&no_test, &["dataset.test_per_class=5".into()]).is_ok());
    }

    #[test]
    fn stamps_track_relevant_fields() {
        let a = RunConfig::parse(MINIMAL, &[]).unwrap();
        let b = RunConfig::parse(MINIMAL, &["model.n_trees=5".into()]).unwrap();
        let c = RunConfig::parse(MINIMAL, &["dataset.seed=3".into()]).unwrap();
        let d = RunConfig::parse(MINIMAL, &["paths.output_dir=elsewhere".into()]).unwrap();
        assert_eq!(a.data_stamp().unwrap(), b.data_stamp().unwrap());
        assert_ne!(a.run_stamp().unwrap(), b.run_stamp().unwrap());
        assert_ne!(a.data_stamp().unwrap(), c.data_stamp().unwrap());
        assert_eq!(a.run_stamp().unwrap(), d.run_stamp().unwrap());
        assert_eq!(a.data_stamp().unwrap().len(), 12);
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut cfg = RunConfig::parse(MINIMAL, &[]).unwrap();
        cfg.resolve_paths(Path::new("/data/cfg"));
        assert_eq!(cfg.paths.output_dir, Path::new("/data/cfg/runs"));
        assert_eq!(cfg.paths.test_wav_dir.as_deref(), Some(Path::new("/data/cfg/nsynth-test/audio")));
    }
}
