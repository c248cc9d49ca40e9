//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use phasenas::arch::Mode;
use phasenas::eval::ScoreConfig;
use phasenas::generate::{EndpointConfig, MockSpace, OpenSpace};
use phasenas::resource::ConstraintSet;
use phasenas::search::SearchConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    #[default]
    Mock,
    Llm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceChoice {
    #[default]
    Open,
    Micro,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator: GeneratorChoice,
    /// Architecture file to start from, relative to the config file.
    pub init: Option<PathBuf>,
    pub search: Option<SearchSection>,
    pub score: Option<ScoreSection>,
    pub constraints: Option<ConstraintSet>,
    pub endpoint: Option<EndpointSection>,
    pub mock: Option<MockSection>,
    pub bench: Option<BenchSection>,
    pub output: Option<OutputSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub gamma_trans: f64,
    pub gamma_stop: f64,
    pub pool_size: Option<usize>,
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub record_timings: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub gamma_mix: Option<f64>,
    pub epsilon: Option<f64>,
    pub repeats: Option<usize>,
    pub batch_size: Option<usize>,
    pub resolution: Option<usize>,
    pub seed: Option<u64>,
}

impl ScoreSection {
    pub fn resolve(&self, mode: Mode, seed: u64) -> ScoreConfig {
        let d = ScoreConfig::for_mode(mode);
        ScoreConfig {
            gamma_mix: self.gamma_mix.unwrap_or(d.gamma_mix),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            repeats: self.repeats.unwrap_or(d.repeats),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            resolution: self.resolution.unwrap_or(d.resolution),
            seed: self.seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: Option<String>,
    pub model_explore: Option<String>,
    pub model_refine: Option<String>,
    pub temperature_explore: Option<f64>,
    pub temperature_refine: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSection {
    #[serde(default)]
    pub space: SpaceChoice,
    pub widths: Option<Vec<usize>>,
    pub max_body: Option<usize>,
    pub max_repeats: Option<usize>,
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub seeds: Option<usize>,
    /// Cached oracle table, relative to the config file.
    pub oracle: Option<PathBuf>,
    /// Scoring setup used to tabulate the oracle.
    pub score: Option<ScoreSection>,
    /// Also run the exploration-only ablation on the same seeds.
    #[serde(default)]
    pub ablation: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub log: Option<PathBuf>,
    pub best: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Classification)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn score_config(&self) -> ScoreConfig {
        self.score.clone().unwrap_or_default().resolve(self.mode(), self.seed())
    }

    pub fn search_config(&self) -> anyhow::Result<SearchConfig> {
        let s = self.search.as_ref().ok_or_else(|| anyhow::anyhow!("config has no [search] section"))?;
        let mut cfg = SearchConfig::new(s.gamma_trans, s.gamma_stop);
        if let Some(k) = s.pool_size {
            cfg.pool_size = k;
        }
        if let Some(n) = s.max_iterations {
            cfg.max_iterations = n;
        }
        cfg.record_timings = s.record_timings;
        cfg.score_config = self.score_config();
        cfg.constraints = self.constraints.unwrap_or_default();
        cfg.seed = self.seed();
        cfg.check().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn mock_space(&self) -> MockSpace {
        let m = self.mock.clone().unwrap_or_default();
        match m.space {
            SpaceChoice::Micro => MockSpace::Micro,
            SpaceChoice::Open => {
                let d = OpenSpace::default();
                MockSpace::Open(OpenSpace {
                    widths: m.widths.unwrap_or(d.widths),
                    max_body: m.max_body.unwrap_or(d.max_body),
                    max_repeats: m.max_repeats.unwrap_or(d.max_repeats),
                    num_classes: m.num_classes.unwrap_or(d.num_classes),
                })
            }
        }
    }

    /// Endpoint settings merged with the environment. Config values win over
    /// environment variables; the API key only ever comes from the environment.
    pub fn endpoint(&self) -> anyhow::Result<EndpointConfig> {
        let e = self.endpoint.clone().unwrap_or_default();
        let d = EndpointConfig::default();
        let ep = EndpointConfig {
            base_url: e.base_url.clone().unwrap_or(d.base_url),
            model_explore: e.model_explore.unwrap_or_default(),
            model_refine: e.model_refine.unwrap_or_default(),
            temperature_explore: e.temperature_explore.unwrap_or(d.temperature_explore),
            temperature_refine: e.temperature_refine.unwrap_or(d.temperature_refine),
            timeout: e.timeout_secs.map_or(d.timeout, Duration::from_secs),
            max_retries: e.max_retries.unwrap_or(d.max_retries),
            api_key: None,
        }
        .with_env(e.base_url.is_some());
        if ep.model_explore.is_empty() || ep.model_refine.is_empty() {
            anyhow::bail!("llm generator needs endpoint.model_explore and endpoint.model_refine");
        }
        if ep.api_key.is_none() {
            anyhow::bail!("llm generator needs an API key in {}", phasenas::generate::llm::API_KEY_ENV);
        }
        Ok(ep)
    }
}
