//! Experiment configuration.
//!
//! One TOML file describes a whole run. Every key has a default except where
//! noted, unknown keys are rejected, and [`ExperimentConfig::resolved`]
//! expands the defaults so the written copy reproduces the run on its own.

use crate::error::ConfigError;
use crate::evalgen::{make_complementary, SyntheticSpec};
use crate::federation::{AsyncConfig, ClientConfig, CompressionSpec, NodeWeighting};
use crate::fusion::{ExtractorSpec, FusionWeights};
use crate::params::LrSchedule;
use crate::privacy::DpConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RoundMode {
    #[default]
    Sync,
    Async,
}

/// Where clients run: in-process simulation or over localhost TCP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Sim,
    Socket,
}

/// How class means are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Every modality reaches the unimodal target accuracy on its own.
    #[default]
    Complementary,
    /// Means given in `class_means`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub geometry: Geometry,
    pub modalities: usize,
    pub dim_f: usize,
    pub noise_std: f64,
    pub n_samples: usize,
    pub threat_fraction: f64,
    pub dirichlet_beta: f64,
    /// Per modality `[benign, threat]` means; only with `geometry = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_means: Option<Vec<[Vec<f64>; 2]>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            geometry: Geometry::Complementary,
            modalities: 8,
            dim_f: 4,
            noise_std: 1.0,
            n_samples: 10_000,
            threat_fraction: 0.5,
            dirichlet_beta: 1.0,
            class_means: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// One weight per modality; uniform `1/m` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// One extractor per modality; identity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extractors: Option<Vec<ExtractorSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub clients: usize,
    pub rounds: u32,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Must equal `data.dim_f + 1` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dim: Option<usize>,
    pub seed: u64,
    pub mode: RoundMode,
    pub transport: TransportMode,
    /// Run simulated clients on worker threads instead of one loop.
    pub threaded: bool,
    pub node_weights: NodeWeighting,
    /// Decision threshold on the predicted threat probability.
    pub threshold: f64,
    pub train_fraction: f64,
    pub output_dir: PathBuf,
    pub lr: LrSchedule,
    pub fusion: FusionConfig,
    pub dp: DpConfig,
    pub compression: CompressionSpec,
    #[serde(rename = "async")]
    pub async_cfg: AsyncConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "complementary".into(),
            clients: 10,
            rounds: 50,
            local_epochs: 1,
            batch_size: 32,
            model_dim: None,
            seed: 1,
            mode: RoundMode::Sync,
            transport: TransportMode::Sim,
            threaded: false,
            node_weights: NodeWeighting::Uniform,
            threshold: 0.5,
            train_fraction: 0.7,
            output_dir: PathBuf::from("out"),
            lr: LrSchedule {
                alpha0: 0.1,
                decay: 0.0,
            },
            fusion: FusionConfig::default(),
            dp: DpConfig::default(),
            compression: CompressionSpec::default(),
            async_cfg: AsyncConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates. Parse errors carry the offending line and
    /// column; validation errors name the field.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn model_dim(&self) -> usize {
        self.data.dim_f + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scenario.is_empty() {
            return Err(ConfigError::invalid("scenario", "must not be empty"));
        }
        if self.clients == 0 {
            return Err(ConfigError::invalid("clients", "need at least one client"));
        }
        if u32::try_from(self.clients).is_err() {
            return Err(ConfigError::invalid("clients", "too many clients"));
        }
        if self.local_epochs == 0 {
            return Err(ConfigError::invalid("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::invalid("batch_size", "must be at least 1"));
        }
        if let Some(d) = self.model_dim {
            if d != self.model_dim() {
                return Err(ConfigError::invalid(
                    "model_dim",
                    format!("must equal data.dim_f + 1 = {}, got {d}", self.model_dim()),
                ));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::invalid("threshold", format!("must lie in (0, 1), got {}", self.threshold)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError::invalid(
                "train_fraction",
                format!("must lie in (0, 1), got {}", self.train_fraction),
            ));
        }
        self.lr.validate().map_err(|e| ConfigError::invalid("lr", e.to_string()))?;
        self.dp.validate().map_err(|e| ConfigError::invalid("dp", e.to_string()))?;
        self.compression
            .validate(self.model_dim())
            .map_err(|e| ConfigError::invalid("compression", e.to_string()))?;
        if let Some(b) = self.async_cfg.base_mix {
            if !(b > 0.0 && b <= 1.0) {
                return Err(ConfigError::invalid("async.base_mix", format!("must lie in (0, 1], got {b}")));
            }
        }
        if self.mode == RoundMode::Async && self.transport == TransportMode::Socket {
            return Err(ConfigError::invalid("mode", "async rounds run in simulation only"));
        }
        match (self.data.geometry, &self.data.class_means) {
            (Geometry::Explicit, None) => {
                return Err(ConfigError::invalid("data.class_means", "required when geometry = \"explicit\""));
            }
            (Geometry::Complementary, Some(_)) => {
                return Err(ConfigError::invalid("data.class_means", "only allowed when geometry = \"explicit\""));
            }
            _ => {}
        }
        self.synthetic_spec()?;
        self.fusion_weights()?;
        let extractors = self.extractors();
        if extractors.len() != self.data.modalities {
            return Err(ConfigError::invalid(
                "fusion.extractors",
                format!("need one per modality ({}), got {}", self.data.modalities, extractors.len()),
            ));
        }
        for (k, e) in extractors.iter().enumerate() {
            if e.modality != k {
                return Err(ConfigError::invalid("fusion.extractors", format!("entry {k} is for modality {}", e.modality)));
            }
            if let Some(out) = e.output_dim() {
                if out != self.data.dim_f {
                    return Err(ConfigError::invalid(
                        "fusion.extractors",
                        format!("modality {k} emits {out} values, data.dim_f is {}", self.data.dim_f),
                    ));
                }
            }
            e.validate(self.data.dim_f)
                .map_err(|err| ConfigError::invalid("fusion.extractors", err.to_string()))?;
        }
        if self.data.n_samples < 2 {
            return Err(ConfigError::invalid("data.n_samples", "need at least 2 samples"));
        }
        let n_train = (self.data.n_samples as f64 * self.train_fraction).round() as usize;
        if n_train < self.clients || n_train == self.data.n_samples {
            return Err(ConfigError::invalid(
                "data.n_samples",
                format!(
                    "{} samples leave {n_train} for training, need at least one per client and a non-empty test split",
                    self.data.n_samples
                ),
            ));
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec, ConfigError> {
        let d = &self.data;
        let mut spec = SyntheticSpec {
            modalities: d.modalities,
            dim_f: d.dim_f,
            class_means: d.class_means.clone().unwrap_or_default(),
            noise_std: d.noise_std,
            n_samples: d.n_samples,
            threat_fraction: d.threat_fraction,
            dirichlet_beta: d.dirichlet_beta,
            seed: self.seed,
        };
        if d.geometry == Geometry::Complementary {
            spec.class_means = crate::evalgen::aligned_means(d.modalities, d.dim_f, 1.0);
            spec = make_complementary(&spec).map_err(|e| ConfigError::invalid("data", e.to_string()))?;
        }
        spec.validate().map_err(|e| ConfigError::invalid("data", e.to_string()))?;
        Ok(spec)
    }

    pub fn fusion_weights(&self) -> Result<FusionWeights, ConfigError> {
        let m = self.data.modalities;
        match &self.fusion.weights {
            None => Ok(FusionWeights::uniform(m)),
            Some(w) if w.len() != m => Err(ConfigError::invalid(
                "fusion.weights",
                format!("need one weight per modality ({m}), got {}", w.len()),
            )),
            Some(w) => FusionWeights::new(w.clone()).map_err(|e| ConfigError::invalid("fusion.weights", e.to_string())),
        }
    }

    pub fn extractors(&self) -> Vec<ExtractorSpec> {
        self.fusion
            .extractors
            .clone()
            .unwrap_or_else(|| (0..self.data.modalities).map(ExtractorSpec::identity).collect())
    }

    pub fn base_mix(&self) -> f64 {
        self.async_cfg.base_mix.unwrap_or(1.0 / self.clients as f64)
    }

    pub fn client_config(&self) -> ClientConfig {
        ClientConfig {
            schedule: self.lr,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            dp: self.dp,
            compression: self.compression,
            seed: self.seed,
        }
    }

    /// Copy with every defaulted value written out.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        out.model_dim = Some(self.model_dim());
        out.fusion.weights = Some(self.fusion_weights()?.as_slice().to_vec());
        out.fusion.extractors = Some(self.extractors());
        out.async_cfg.base_mix = Some(self.base_mix());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::from_toml_str("clients = 3\nclinets = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("clinets"), "{msg}");
        for text in ["[dp]\nsigm = 1.0\n", "[data]\nextra = 1\n", "[[fusion.extractors]]\nkind = \"identity\"\nmodality = 0\nfoo = 1\n"] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        for (text, field) in [
            ("clients = 0", "clients"),
            ("threshold = 1.5", "threshold"),
            ("model_dim = 3", "model_dim"),
            ("[dp]\nenabled = true\nsigma = -1.0", "dp"),
            ("[fusion]\nweights = [1.0]", "fusion.weights"),
            ("[compression]\nmode = \"topk\"\nk = 99", "compression"),
            ("mode = \"async\"\ntransport = \"socket\"", "mode"),
            ("[data]\ngeometry = \"explicit\"", "data.class_means"),
        ] {
            match ExperimentConfig::from_toml_str(text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn resolved_round_trips() {
        let text = "clients = 4\n[data]\nmodalities = 3\ndim_f = 2\n[[fusion.extractors]]\nkind = \"identity\"\nmodality = 0\n[[fusion.extractors]]\nkind = \"hash-text\"\nmodality = 1\nbuckets = 2\n[[fusion.extractors]]\nkind = \"affine\"\nmodality = 2\nmatrix = [[1.0, 0.0], [0.0, 2.0]]\noffset = [0.5, 0.0]\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.model_dim, Some(3));
        assert_eq!(resolved.async_cfg.base_mix, Some(0.25));
        let back = ExperimentConfig::from_toml_str(&resolved.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.resolved().unwrap(), resolved);
    }

    #[test]
    fn explicit_geometry_uses_given_means() {
        let text = "[data]\ngeometry = \"explicit\"\nmodalities = 1\ndim_f = 1\nclass_means = [[[0.0], [3.0]]]\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.synthetic_spec().unwrap().class_means, vec![[vec![0.0], vec![3.0]]]);
    }
}
