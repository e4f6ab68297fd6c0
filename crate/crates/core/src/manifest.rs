//! Run manifest: datasets, joins, sampler, question generator, providers and
//! evaluation settings, read from one JSON document.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalConfig;
use crate::gateway::EndpointConfig;
use crate::interval::SamplerConfig;
use crate::qagen::{GeneratorMode, JoinSpec, QuestionGenerator, TemplateConfig};
use crate::store::RelationDecl;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDecl {
    #[serde(flatten)]
    pub relation: RelationDecl,
    #[serde(default)]
    pub answer_extensions: Vec<String>,
    #[serde(default)]
    pub questions: TemplateConfig,
    /// Irrelevant rows added to open-book context.
    #[serde(default = "two")]
    pub context_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub datasets: Vec<DatasetDecl>,
    #[serde(default)]
    pub joins: Vec<JoinSpec>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub generator: QuestionGenerator,
    #[serde(default)]
    pub providers: Vec<EndpointConfig>,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut m: RunManifest = serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check()?;
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Structural checks. Missing files are reported as I/O errors.
    pub fn check(&self) -> Result<(), ManifestError> {
        let invalid = |s: String| Err(ManifestError::Invalid(s));
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if !names.insert(d.relation.name.as_str()) {
                return invalid(format!("dataset `{}` declared twice", d.relation.name));
            }
            let csv = self.resolve(&d.relation.csv);
            if !csv.is_file() {
                return Err(ManifestError::Io {
                    path: csv.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                });
            }
        }
        for j in &self.joins {
            for side in [&j.left, &j.right] {
                if !names.contains(side.as_str()) {
                    return invalid(format!("join `{}` refers to unknown dataset `{side}`", j.name));
                }
            }
            if names.contains(j.name.as_str()) {
                return invalid(format!("join `{}` reuses a dataset name", j.name));
            }
        }
        self.sampler.validate().map_err(ManifestError::Invalid)?;
        let mut providers = BTreeSet::new();
        for p in &self.providers {
            if !providers.insert(p.name.as_str()) {
                return invalid(format!("provider `{}` declared twice", p.name));
            }
        }
        if let Some(j) = &self.evaluation.judge {
            self.provider(j)?;
        }
        if self.generator.mode == GeneratorMode::Llm {
            match &self.generator.provider {
                Some(p) => {
                    self.provider(p)?;
                }
                None => return invalid("llm question generation needs generator.provider".into()),
            }
        }
        if let Some(dir) = &self.prompts_dir {
            let dir = self.resolve(dir);
            if !dir.is_dir() {
                return Err(ManifestError::Io {
                    path: dir.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
                });
            }
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetDecl> {
        self.datasets.iter().find(|d| d.relation.name == name)
    }

    pub fn provider(&self, name: &str) -> Result<&EndpointConfig, ManifestError> {
        self.providers
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ManifestError::Invalid(format!("unknown provider `{name}`")))
    }
}
