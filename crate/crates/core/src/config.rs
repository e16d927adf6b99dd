//! Flat `key = value` experiment configuration.
//!
//! Keys carry a section prefix (`nn.`, `pool.`, `rl.`, `stream.`, `midae.`,
//! `harness.`). Blank lines and lines starting with `#` are ignored, and any
//! key left out keeps its default.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::midae::MiDaeConfig;
use crate::rl::ControllerConfig;
use crate::stream::{StreamMode, StreamSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Sdae,
    Midae,
    Radae,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Sdae, Policy::Midae, Policy::Radae];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Sdae => "sdae",
            Policy::Midae => "midae",
            Policy::Radae => "radae",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sdae" => Ok(Policy::Sdae),
            "midae" | "mi-dae" => Ok(Policy::Midae),
            "radae" | "ra-dae" => Ok(Policy::Radae),
            other => Err(Error::InvalidConfig(format!("unknown policy `{other}` (expected sdae, midae or radae)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnConfig {
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub corruption: f64,
    pub minibatch: usize,
    /// Weight of the generative term in the fine-tuning objective.
    pub lambda: f64,
    /// Greedy layer-wise pretraining epochs over the first
    /// `pretrain_batches` stream batches before the online loop starts.
    pub pretrain_batches: usize,
    pub pretrain_epochs: usize,
    /// Epochs over the recent pool when training newly added nodes.
    pub increment_epochs: usize,
}

impl Default for NnConfig {
    fn default() -> Self {
        NnConfig {
            widths: vec![500],
            learning_rate: 0.2,
            corruption: 0.2,
            minibatch: 10,
            lambda: 0.2,
            pretrain_batches: 0,
            pretrain_epochs: 1,
            increment_epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolConfig {
    /// Capacity in examples of the recent, diverse and hard pools.
    pub tau: usize,
    /// Histogram distance a batch must exceed to join the diverse pool.
    pub lambda: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { tau: 10_000, lambda: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { per_class: usize, sigma: f64 },
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub spec: StreamSpec,
    pub source: DataSource,
    pub test_fraction: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            spec: StreamSpec::new(3, 16, 1000, 1000, StreamMode::NonStationary),
            source: DataSource::Synthetic { per_class: 2000, sigma: 0.1 },
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub policy: Policy,
    pub seed: u64,
    pub summary_last: usize,
    pub out: Option<PathBuf>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            policy: Policy::Radae,
            seed: 1,
            summary_last: 250,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub nn: NnConfig,
    pub pool: PoolConfig,
    pub rl: ControllerConfig,
    pub stream: StreamConfig,
    pub midae: MiDaeConfig,
    pub harness: HarnessConfig,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("invalid value `{value}` for {key}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> std::result::Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    match value {
        "" | "auto" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "nn.widths" => self.nn.widths = parse_list(key, v)?,
            "nn.learning_rate" => self.nn.learning_rate = parse_value(key, v)?,
            "nn.corruption" => self.nn.corruption = parse_value(key, v)?,
            "nn.minibatch" => self.nn.minibatch = parse_value(key, v)?,
            "nn.lambda" => self.nn.lambda = parse_value(key, v)?,
            "nn.pretrain_batches" => self.nn.pretrain_batches = parse_value(key, v)?,
            "nn.pretrain_epochs" => self.nn.pretrain_epochs = parse_value(key, v)?,
            "nn.increment_epochs" => self.nn.increment_epochs = parse_value(key, v)?,

            "pool.tau" => self.pool.tau = parse_value(key, v)?,
            "pool.lambda" => self.pool.lambda = parse_value(key, v)?,

            "rl.m" => self.rl.m = parse_value(key, v)?,
            "rl.windows" => {
                let w: Vec<usize> = parse_list(key, v)?;
                self.rl.windows = w.try_into().map_err(|_| format!("{key} needs exactly three windows"))?;
            }
            "rl.eta1" => self.rl.eta1 = parse_value(key, v)?,
            "rl.eta2" => self.rl.eta2 = parse_value(key, v)?,
            "rl.gamma" => self.rl.gamma = parse_value(key, v)?,
            "rl.alpha_q" => self.rl.alpha_q = parse_value(key, v)?,
            "rl.alpha_ema" => self.rl.alpha_ema = parse_optional(key, v)?,
            "rl.epsilon" => self.rl.epsilon = parse_value(key, v)?,
            "rl.lambda_delta" => self.rl.lambda_delta = parse_optional(key, v)?,
            "rl.mu_hat" => self.rl.mu_hat = parse_value(key, v)?,
            "rl.sigma_delta" => self.rl.sigma_delta = parse_value(key, v)?,
            "rl.v1" => self.rl.v1 = parse_value(key, v)?,
            "rl.v2" => self.rl.v2 = parse_value(key, v)?,
            "rl.state_space" => self.rl.state_space = parse_value(key, v)?,
            "rl.q_mode" => self.rl.q_mode = parse_value(key, v)?,
            "rl.gpr_noise" => self.rl.gpr_noise = parse_value(key, v)?,
            "rl.refit_every" => self.rl.refit_every = parse_value(key, v)?,
            "rl.max_observations" => self.rl.max_observations = parse_value(key, v)?,
            "rl.normalize_lg" => self.rl.normalize_lg = parse_value(key, v)?,

            "stream.source" => {
                self.stream.source = match v {
                    "synthetic" => match &self.stream.source {
                        s @ DataSource::Synthetic { .. } => s.clone(),
                        _ => DataSource::Synthetic { per_class: 2000, sigma: 0.1 },
                    },
                    "idx" => match &self.stream.source {
                        s @ DataSource::Idx { .. } => s.clone(),
                        _ => DataSource::Idx {
                            images: PathBuf::new(),
                            labels: PathBuf::new(),
                        },
                    },
                    other => return Err(format!("unknown stream.source `{other}` (expected synthetic or idx)")),
                }
            }
            "stream.per_class" | "stream.blob_sigma" => {
                let DataSource::Synthetic { per_class, sigma } = &mut self.stream.source else {
                    return Err(format!("{key} requires stream.source = synthetic (set it first)"));
                };
                if key == "stream.per_class" {
                    *per_class = parse_value(key, v)?;
                } else {
                    *sigma = parse_value(key, v)?;
                }
            }
            "stream.idx_images" | "stream.idx_labels" => {
                let DataSource::Idx { images, labels } = &mut self.stream.source else {
                    return Err(format!("{key} requires stream.source = idx (set it first)"));
                };
                if key == "stream.idx_images" {
                    *images = PathBuf::from(v);
                } else {
                    *labels = PathBuf::from(v);
                }
            }
            "stream.classes" => self.stream.spec.num_classes = parse_value(key, v)?,
            "stream.dims" => self.stream.spec.dims = parse_value(key, v)?,
            "stream.batch_size" => self.stream.spec.batch_size = parse_value(key, v)?,
            "stream.batches" => self.stream.spec.num_batches = parse_value(key, v)?,
            "stream.mode" => self.stream.spec.mode = parse_value(key, v)?,
            "stream.gp_length_scale" => self.stream.spec.gp_length_scale = parse_optional(key, v)?,
            "stream.gp_amplitude" => self.stream.spec.gp_amplitude = parse_value(key, v)?,
            "stream.mask_noise" => self.stream.spec.mask_noise = parse_value(key, v)?,
            "stream.test_fraction" => self.stream.test_fraction = parse_value(key, v)?,

            "midae.initial_delta" => self.midae.initial_delta = parse_value(key, v)?,
            "midae.step" => self.midae.step = parse_value(key, v)?,
            "midae.merge_ratio" => self.midae.merge_ratio = parse_value(key, v)?,
            "midae.eps1" => self.midae.eps1 = parse_value(key, v)?,
            "midae.eps2" => self.midae.eps2 = parse_value(key, v)?,
            "midae.mu_window" => self.midae.mu_window = parse_value(key, v)?,

            "harness.policy" => self.harness.policy = parse_value(key, v)?,
            "harness.seed" => self.harness.seed = parse_value(key, v)?,
            "harness.summary_last" => self.harness.summary_last = parse_value(key, v)?,
            "harness.out" => self.harness.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults, then validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: i + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            cfg.set(key.trim(), value).map_err(|message| Error::Config { line: i + 1, message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Network dimensions and stream shape follow the data source: IDX input
    /// fixes `classes` and `dims` from the files.
    pub fn validate(&self) -> Result<()> {
        let nn = &self.nn;
        if nn.widths.is_empty() || nn.widths.contains(&0) {
            return Err(Error::InvalidConfig("nn.widths must list at least one positive width".into()));
        }
        if !(nn.learning_rate >= 0.0 && nn.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("nn.learning_rate must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&nn.corruption) {
            return Err(Error::InvalidConfig("nn.corruption must lie in [0,1]".into()));
        }
        if nn.minibatch == 0 {
            return Err(Error::InvalidConfig("nn.minibatch must be positive".into()));
        }
        if nn.lambda < 0.0 {
            return Err(Error::InvalidConfig("nn.lambda must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.pool.lambda) {
            return Err(Error::InvalidConfig("pool.lambda must lie in [0,1]".into()));
        }
        if self.pool.tau == 0 {
            return Err(Error::InvalidConfig("pool.tau must be positive".into()));
        }
        if self.nn.pretrain_batches >= self.stream.spec.num_batches && self.nn.pretrain_batches > 0 {
            return Err(Error::InvalidConfig("nn.pretrain_batches must be below stream.batches".into()));
        }
        if let DataSource::Synthetic { per_class, sigma } = self.stream.source {
            if per_class < 2 || sigma < 0.0 {
                return Err(Error::InvalidConfig("stream.per_class must be at least 2 and stream.blob_sigma non-negative".into()));
            }
        }
        if let DataSource::Idx { images, labels } = &self.stream.source {
            if images.as_os_str().is_empty() || labels.as_os_str().is_empty() {
                return Err(Error::InvalidConfig("stream.idx_images and stream.idx_labels are required for idx input".into()));
            }
        }
        if !(self.stream.test_fraction > 0.0 && self.stream.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("stream.test_fraction must lie in (0,1)".into()));
        }
        if let StreamMode::Switch { at } = self.stream.spec.mode {
            if at >= self.stream.spec.num_batches {
                return Err(Error::InvalidConfig("switch batch must fall inside the stream".into()));
            }
        }
        if self.harness.summary_last == 0 {
            return Err(Error::InvalidConfig("harness.summary_last must be positive".into()));
        }
        self.stream.spec.validate()?;
        self.rl.validate()?;
        self.midae.validate()?;
        Ok(())
    }

    /// Renders every key, so that `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let nn = &self.nn;
        let rl = &self.rl;
        let st = &self.stream.spec;
        let _ = writeln!(s, "nn.widths = {}", join(&nn.widths));
        let _ = writeln!(s, "nn.learning_rate = {}", nn.learning_rate);
        let _ = writeln!(s, "nn.corruption = {}", nn.corruption);
        let _ = writeln!(s, "nn.minibatch = {}", nn.minibatch);
        let _ = writeln!(s, "nn.lambda = {}", nn.lambda);
        let _ = writeln!(s, "nn.pretrain_batches = {}", nn.pretrain_batches);
        let _ = writeln!(s, "nn.pretrain_epochs = {}", nn.pretrain_epochs);
        let _ = writeln!(s, "nn.increment_epochs = {}", nn.increment_epochs);
        let _ = writeln!(s, "pool.tau = {}", self.pool.tau);
        let _ = writeln!(s, "pool.lambda = {}", self.pool.lambda);
        let _ = writeln!(s, "rl.m = {}", rl.m);
        let _ = writeln!(s, "rl.windows = {}", join(&rl.windows));
        let _ = writeln!(s, "rl.eta1 = {}", rl.eta1);
        let _ = writeln!(s, "rl.eta2 = {}", rl.eta2);
        let _ = writeln!(s, "rl.gamma = {}", rl.gamma);
        let _ = writeln!(s, "rl.alpha_q = {}", rl.alpha_q);
        let _ = writeln!(s, "rl.alpha_ema = {}", opt(&rl.alpha_ema));
        let _ = writeln!(s, "rl.epsilon = {}", rl.epsilon);
        let _ = writeln!(s, "rl.lambda_delta = {}", opt(&rl.lambda_delta));
        let _ = writeln!(s, "rl.mu_hat = {}", rl.mu_hat);
        let _ = writeln!(s, "rl.sigma_delta = {}", rl.sigma_delta);
        let _ = writeln!(s, "rl.v1 = {}", rl.v1);
        let _ = writeln!(s, "rl.v2 = {}", rl.v2);
        let _ = writeln!(s, "rl.state_space = {}", rl.state_space);
        let _ = writeln!(s, "rl.q_mode = {}", rl.q_mode);
        let _ = writeln!(s, "rl.gpr_noise = {}", rl.gpr_noise);
        let _ = writeln!(s, "rl.refit_every = {}", rl.refit_every);
        let _ = writeln!(s, "rl.max_observations = {}", rl.max_observations);
        let _ = writeln!(s, "rl.normalize_lg = {}", rl.normalize_lg);
        match &self.stream.source {
            DataSource::Synthetic { per_class, sigma } => {
                let _ = writeln!(s, "stream.source = synthetic");
                let _ = writeln!(s, "stream.per_class = {per_class}");
                let _ = writeln!(s, "stream.blob_sigma = {sigma}");
            }
            DataSource::Idx { images, labels } => {
                let _ = writeln!(s, "stream.source = idx");
                let _ = writeln!(s, "stream.idx_images = {}", images.display());
                let _ = writeln!(s, "stream.idx_labels = {}", labels.display());
            }
        }
        let _ = writeln!(s, "stream.classes = {}", st.num_classes);
        let _ = writeln!(s, "stream.dims = {}", st.dims);
        let _ = writeln!(s, "stream.batch_size = {}", st.batch_size);
        let _ = writeln!(s, "stream.batches = {}", st.num_batches);
        let _ = writeln!(s, "stream.mode = {}", st.mode);
        let _ = writeln!(s, "stream.gp_length_scale = {}", opt(&st.gp_length_scale));
        let _ = writeln!(s, "stream.gp_amplitude = {}", st.gp_amplitude);
        let _ = writeln!(s, "stream.mask_noise = {}", st.mask_noise);
        let _ = writeln!(s, "stream.test_fraction = {}", self.stream.test_fraction);
        let m = &self.midae;
        let _ = writeln!(s, "midae.initial_delta = {}", m.initial_delta);
        let _ = writeln!(s, "midae.step = {}", m.step);
        let _ = writeln!(s, "midae.merge_ratio = {}", m.merge_ratio);
        let _ = writeln!(s, "midae.eps1 = {}", m.eps1);
        let _ = writeln!(s, "midae.eps2 = {}", m.eps2);
        let _ = writeln!(s, "midae.mu_window = {}", m.mu_window);
        let _ = writeln!(s, "harness.policy = {}", self.harness.policy);
        let _ = writeln!(s, "harness.seed = {}", self.harness.seed);
        let _ = writeln!(s, "harness.summary_last = {}", self.harness.summary_last);
        let _ = writeln!(s, "harness.out = {}", self.harness.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        s
    }
}
