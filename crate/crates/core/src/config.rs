//! Run configuration, read from TOML. Every field has a default so an
//! empty file (or no file) is a valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::NewsThresholds;
use crate::error::{Error, LlmError};
use crate::llm::{AgentRole, Gateway, LlmBackend, PromptLibrary, RemoteBackend, RemoteConfig, ScriptedBackend, ScriptedRules};
use crate::reporting::ReportBounds;
use crate::valuation::{MacroInputs, ENGINE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceCriterion {
    pub rel_tolerance: f64,
    pub window: u32,
    pub max_iterations: u32,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self { rel_tolerance: 0.01, window: 2, max_iterations: 8 }
    }
}

impl ConvergenceCriterion {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_iterations < 1 {
            out.push("convergence.max_iterations must be >= 1".into());
        }
        if !(self.rel_tolerance > 0.0) {
            out.push("convergence.rel_tolerance must be > 0".into());
        }
        if self.window < 1 {
            out.push("convergence.window must be >= 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: BackendKind,
    /// Rule file for the scripted backend.
    pub script: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
    /// Directory of template overrides.
    pub prompts_dir: Option<PathBuf>,
    /// Per-role backend overrides.
    pub roles: BTreeMap<AgentRole, BackendKind>,
    /// Sampling temperature per role; only the writer may exceed zero.
    pub temperature: BTreeMap<AgentRole, f64>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Scripted,
            script: None,
            remote: None,
            prompts_dir: None,
            roles: BTreeMap::new(),
            temperature: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// `fixture:<dir>` or `provider:<name>`.
    pub source: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: "fixture:fixtures".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionConfig {
    pub band: f64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { band: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    /// Points per axis for the sensitivity agent's grid.
    pub points: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { points: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub runs_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { out_dir: "out".into(), runs_dir: "runs".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub llm: LlmConfig,
    #[serde(rename = "macro")]
    pub macro_inputs: MacroInputs,
    pub news: NewsThresholds,
    pub convergence: ConvergenceCriterion,
    pub decision: DecisionConfig,
    pub report: ReportBounds,
    pub sensitivity: SensitivityConfig,
    pub paths: PathsConfig,
}

impl Default for MacroInputs {
    fn default() -> Self {
        Self { risk_free_rate: 0.044, equity_risk_premium: 0.0412, marginal_tax_rate: 0.25 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            llm: LlmConfig::default(),
            macro_inputs: MacroInputs::default(),
            news: NewsThresholds::default(),
            convergence: ConvergenceCriterion::default(),
            decision: DecisionConfig::default(),
            report: ReportBounds::default(),
            sensitivity: SensitivityConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`; relative paths inside the file are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = self.data.source.strip_prefix("fixture:") {
            let p = Path::new(dir);
            if p.is_relative() {
                self.data.source = format!("fixture:{}", base.join(p).display());
            }
        }
        if let Some(p) = self.llm.script.as_mut() {
            fix(p);
        }
        if let Some(p) = self.llm.prompts_dir.as_mut() {
            fix(p);
        }
        fix(&mut self.paths.out_dir);
        fix(&mut self.paths.runs_dir);
    }

    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = self.convergence.problems();
        problems.extend(self.macro_inputs.problems());
        if !(self.decision.band >= 0.0 && self.decision.band < 1.0) {
            problems.push(format!("decision.band {} outside [0, 1)", self.decision.band));
        }
        if !(0.0..=1.0).contains(&self.news.headline) || !(0.0..=1.0).contains(&self.news.lede) {
            problems.push("news thresholds must lie in [0, 1]".into());
        }
        if self.report.min_words > self.report.max_words {
            problems.push("report.min_words exceeds report.max_words".into());
        }
        if !(1..=crate::valuation::MAX_AXIS_LEN).contains(&self.sensitivity.points) {
            problems.push(format!("sensitivity.points must be 1..={}", crate::valuation::MAX_AXIS_LEN));
        }
        for (role, t) in &self.llm.temperature {
            if *role != AgentRole::Writer && *t != 0.0 {
                problems.push(format!("llm.temperature.{role} must be 0 for decision-bearing prompts"));
            }
            if !(0.0..=2.0).contains(t) {
                problems.push(format!("llm.temperature.{role} {t} outside [0, 2]"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn prompt_library(&self) -> Result<PromptLibrary, LlmError> {
        match &self.llm.prompts_dir {
            Some(dir) => PromptLibrary::from_dir(dir)
                .map_err(|e| LlmError::Config(format!("{}: {e}", dir.display()))),
            None => Ok(PromptLibrary::builtin()),
        }
    }

    fn backend(&self, kind: BackendKind, rules: &Arc<ScriptedRules>) -> Result<Arc<dyn LlmBackend>, LlmError> {
        Ok(match kind {
            BackendKind::Scripted => Arc::new(ScriptedBackend::new(rules.clone())),
            BackendKind::Remote => {
                let cfg = self
                    .llm
                    .remote
                    .clone()
                    .ok_or_else(|| LlmError::Config("llm.remote is required for the remote backend".into()))?;
                Arc::new(RemoteBackend::new(cfg))
            }
        })
    }

    /// Fresh gateway for one run; scripted call counters start at zero.
    pub fn gateway(&self) -> Result<Gateway, LlmError> {
        let rules = Arc::new(match &self.llm.script {
            Some(path) => ScriptedRules::load(path)?,
            None => ScriptedRules::default(),
        });
        let mut gw = Gateway::new(self.prompt_library()?, self.backend(self.llm.backend, &rules)?);
        for (role, kind) in &self.llm.roles {
            gw = gw.with_role_backend(*role, self.backend(*kind, &rules)?);
        }
        for (role, t) in &self.llm.temperature {
            gw = gw.with_temperature(*role, *t);
        }
        Ok(gw)
    }

    /// Hash over the configuration, templates, script and engine version.
    pub fn config_hash(&self) -> Result<String, Error> {
        let mut h = Sha256::new();
        h.update(ENGINE_VERSION.as_bytes());
        h.update([0]);
        h.update(serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?.as_bytes());
        for (id, text) in self.prompt_library()?.iter() {
            h.update([0]);
            h.update(id.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
        }
        if let Some(path) = &self.llm.script {
            let script = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            h.update([0]);
            h.update(&script);
        }
        Ok(hex::encode(h.finalize()))
    }
}
