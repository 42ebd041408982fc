//! Run configuration. A config file is JSON; relative paths inside it are
//! resolved against the file's directory, and the file is copied verbatim
//! into every run directory it produces.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::archive::SamplingParams;
use crate::environments::{task_set, PolicyAgent, TaskSpec, FAMILIES};
use crate::error::{Error, Result};
use crate::evaluation::{Harness, Mode, DEFAULT_REPEATS};
use crate::meta::LearningConfig;
use crate::provider::{LiveConfig, MockBackend, ModelBackend, ModelProvider, PriceTable, TokenScheme};
use crate::sandbox::{RuntimeConfig, SandboxLimits};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentConfig {
    pub family: String,
    pub tasks: usize,
    /// Seed of the first task; task `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            family: "keydoor".into(),
            tasks: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub repeats: usize,
    pub mode: Mode,
    pub token_scheme: TokenScheme,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            repeats: DEFAULT_REPEATS,
            mode: Mode::Static,
            token_scheme: TokenScheme::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Live,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "live" => Ok(ProviderKind::Live),
            other => Err(Error::usage(format!("unknown provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Mock script (JSON lines). No script means every chat request is
    /// unscripted.
    pub script: Option<PathBuf>,
    /// Unscripted requests fault instead of receiving a refusal.
    pub strict: bool,
    pub live: LiveConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            script: None,
            strict: true,
            live: LiveConfig::default(),
        }
    }
}

/// Inputs of `baseline-matrix`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub families: Vec<String>,
    /// Built-in names or artifact paths.
    pub designs: Vec<String>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            families: vec!["keydoor".into(), "recipe".into(), "hintgate".into()],
            designs: crate::builtin::BASELINES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Inputs of `scaling`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub design: String,
    /// Collection-task counts; the deployment split stays fixed.
    pub sizes: Vec<usize>,
    pub deployment_tasks: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            design: "hint-recorder".into(),
            sizes: vec![0, 1, 2, 5, 10],
            deployment_tasks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub run_id: String,
    pub environment: EnvironmentConfig,
    pub evaluation: EvaluationConfig,
    pub sampling: SamplingParams,
    pub learning: LearningConfig,
    pub provider: ProviderConfig,
    pub prices: PriceTable,
    pub policy: PolicyAgent,
    pub sandbox: SandboxLimits,
    pub runtime: RuntimeConfig,
    pub matrix: MatrixConfig,
    pub scaling: ScalingConfig,
    /// Parent of run directories.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            run_id: "run".into(),
            environment: EnvironmentConfig::default(),
            evaluation: EvaluationConfig::default(),
            sampling: SamplingParams::default(),
            learning: LearningConfig::default(),
            provider: ProviderConfig::default(),
            prices: PriceTable::default(),
            policy: PolicyAgent::default(),
            sandbox: SandboxLimits::default(),
            runtime: RuntimeConfig::default(),
            matrix: MatrixConfig::default(),
            scaling: ScalingConfig::default(),
            out: PathBuf::from("runs"),
        }
    }
}

/// A parsed config together with the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: String,
}

fn absolutize(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        Ok(LoadedConfig { config, raw })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        absolutize(base, &mut self.out);
        for path in [
            self.provider.script.as_mut(),
            self.learning.prompts_dir.as_mut(),
            self.learning.root_design.as_mut(),
            self.runtime.host_binary.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            absolutize(base, path);
        }
        for design in &mut self.matrix.designs {
            if crate::builtin::shipped(design).is_none() {
                *design = base.join(&*design).to_string_lossy().into_owned();
            }
        }
        if crate::builtin::shipped(&self.scaling.design).is_none() {
            self.scaling.design = base.join(&self.scaling.design).to_string_lossy().into_owned();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(Error::Config(format!("run_id {:?} is not a plain directory name", self.run_id)));
        }
        if !FAMILIES.contains(&self.environment.family.as_str()) {
            return Err(Error::Config(format!("unknown environment family {:?}", self.environment.family)));
        }
        if self.environment.tasks < 2 {
            return Err(Error::Config("environment.tasks must be at least 2".into()));
        }
        if self.evaluation.repeats == 0 {
            return Err(Error::Config("evaluation.repeats must be positive".into()));
        }
        self.sampling.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.learning.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.run_id)
    }

    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        task_set(&self.environment.family, self.environment.tasks, self.environment.seed)
    }

    /// Provider with an empty ledger, as configured.
    pub fn build_provider(&self) -> Result<ModelProvider> {
        let backend: Arc<dyn ModelBackend> = match self.provider.kind {
            ProviderKind::Mock => match &self.provider.script {
                Some(path) => Arc::new(MockBackend::from_file(path, self.provider.strict)?),
                None => Arc::new(MockBackend::new(Vec::new(), self.provider.strict)),
            },
            ProviderKind::Live => live_backend(&self.provider.live)?,
        };
        Ok(ModelProvider::new(backend, self.prices).with_scheme(self.evaluation.token_scheme))
    }

    pub fn harness<'a>(&'a self, provider: &'a ModelProvider) -> Harness<'a> {
        Harness::new(&self.policy, provider)
    }
}

#[cfg(feature = "live")]
fn live_backend(config: &LiveConfig) -> Result<Arc<dyn ModelBackend>> {
    Ok(Arc::new(crate::provider::LiveBackend::new(config.clone())?))
}

#[cfg(not(feature = "live"))]
fn live_backend(_: &LiveConfig) -> Result<Arc<dyn ModelBackend>> {
    Err(Error::Config("built without the `live` feature".into()))
}
