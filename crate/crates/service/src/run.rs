//! Run directory layout and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use vqa_core::balance::config_hash;

use crate::config::PipelineConfig;
use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Generate,
    Qc,
    Balance,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Generate, Stage::Qc, Stage::Balance, Stage::Export];

    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Generate => Some(Stage::Ingest),
            Stage::Qc => Some(Stage::Generate),
            Stage::Balance => Some(Stage::Qc),
            Stage::Export => Some(Stage::Balance),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Qc => "qc",
            Stage::Balance => "balance",
            Stage::Export => "export",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    #[default]
    Pending,
    Partial,
    Completed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl RunManifest {
    pub fn status(&self, stage: Stage) -> StageStatus {
        self.stages.get(&stage).map(|r| r.status).unwrap_or_default()
    }

    pub fn is_completed(&self, stage: Stage) -> bool {
        self.status(stage) == StageStatus::Completed
    }
}

pub struct RunDir {
    root: PathBuf,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(root: &Path) -> PathBuf {
        root.join("config.toml")
    }

    pub fn manifest_path(root: &Path) -> PathBuf {
        root.join("manifest.json")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn samples_path(&self) -> PathBuf {
        self.root.join("samples.jsonl")
    }

    pub fn scores_path(&self) -> PathBuf {
        self.root.join("scores.jsonl")
    }

    pub fn verdicts_path(&self) -> PathBuf {
        self.root.join("verdicts.jsonl")
    }

    pub fn qc_report_path(&self) -> PathBuf {
        self.root.join("qc_report.json")
    }

    pub fn balance_report_path(&self) -> PathBuf {
        self.root.join("balance_report.json")
    }

    pub fn export_dir(&self) -> PathBuf {
        self.root.join("export")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn ratings_path(&self) -> PathBuf {
        self.root.join("ratings.jsonl")
    }

    pub fn ratings_audit_path(&self) -> PathBuf {
        self.root.join("ratings_audit.jsonl")
    }

    /// Creates a run directory, freezing `config` into `config.toml`.
    pub fn create(root: &Path, config: PipelineConfig) -> Result<RunDir, ServiceError> {
        config.validate()?;
        fs::create_dir_all(root).map_err(|e| ServiceError::io(root, e))?;
        let raw = config.to_toml()?;
        let path = Self::config_path(root);
        fs::write(&path, &raw).map_err(|e| ServiceError::io(&path, e))?;
        let hash = config_hash(raw.as_bytes());
        let manifest = RunManifest {
            run_id: hash[..12].to_string(),
            config_hash: hash.clone(),
            seed: config.seed,
            created_at: Utc::now(),
            stages: Stage::ALL.iter().map(|s| (*s, StageRecord::default())).collect(),
        };
        let run = RunDir {
            root: root.to_path_buf(),
            config,
            config_hash: hash,
            manifest,
        };
        run.save_manifest()?;
        Ok(run)
    }

    pub fn open(root: &Path) -> Result<RunDir, ServiceError> {
        let cpath = Self::config_path(root);
        let raw = fs::read_to_string(&cpath).map_err(|e| ServiceError::io(&cpath, e))?;
        let config = PipelineConfig::from_toml(&raw)?;
        let mpath = Self::manifest_path(root);
        let body = fs::read_to_string(&mpath).map_err(|e| ServiceError::io(&mpath, e))?;
        let manifest: RunManifest = serde_json::from_str(&body)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            config,
            config_hash: config_hash(raw.as_bytes()),
            manifest,
        })
    }

    pub fn exists(root: &Path) -> bool {
        Self::manifest_path(root).exists()
    }

    pub fn save_manifest(&self) -> Result<(), ServiceError> {
        let path = Self::manifest_path(&self.root);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(&tmp, body).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))
    }

    /// Fails unless the prerequisite is completed and `stage` is not.
    pub fn begin(&mut self, stage: Stage) -> Result<(), ServiceError> {
        self.require(stage)?;
        if self.manifest.is_completed(stage) {
            return Err(ServiceError::StageCompleted(stage));
        }
        let rec = self.manifest.stages.entry(stage).or_default();
        if rec.started_at.is_none() {
            rec.started_at = Some(Utc::now());
        }
        Ok(())
    }

    pub fn require(&self, stage: Stage) -> Result<(), ServiceError> {
        if let Some(pre) = stage.prerequisite() {
            if !self.manifest.is_completed(pre) {
                return Err(ServiceError::StageOrder {
                    stage: stage.to_string(),
                    requires: pre,
                });
            }
        }
        Ok(())
    }

    pub fn record(
        &mut self,
        stage: Stage,
        status: StageStatus,
        counts: BTreeMap<String, u64>,
    ) -> Result<(), ServiceError> {
        let rec = self.manifest.stages.entry(stage).or_default();
        rec.status = status;
        rec.counts = counts;
        if status == StageStatus::Completed {
            rec.finished_at = Some(Utc::now());
        }
        self.save_manifest()
    }
}

/// Command-line settings layered over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mock: bool,
    pub parallelism: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.mock {
            cfg.mock = true;
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        cfg
    }

    /// Opens the run at `root`, or creates it from the overrides. An
    /// existing run keeps its frozen configuration; a conflicting override
    /// is an error.
    pub fn resolve(&self, root: &Path) -> Result<RunDir, ServiceError> {
        if RunDir::exists(root) {
            let run = RunDir::open(root)?;
            let base = match &self.config {
                Some(p) => PipelineConfig::load(p)?,
                None => run.config.clone(),
            };
            let wanted = self.apply(base);
            if wanted != run.config {
                return Err(ServiceError::Config(format!(
                    "run at {} was created with a different configuration; \
                     start a new run directory to change it",
                    root.display()
                )));
            }
            return Ok(run);
        }
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        RunDir::create(root, self.apply(base))
    }
}
