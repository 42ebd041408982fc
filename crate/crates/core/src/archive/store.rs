use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Archive, DesignRecord, SamplingParams};
use crate::error::{Error, Result};
use crate::util::{ensure_dir, read_string, write_json, write_string};
use crate::FORMAT_VERSION;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    params: SamplingParams,
    step_counter: u64,
    /// Insertion order of the records.
    order: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordFile {
    format_version: u32,
    #[serde(flatten)]
    record: DesignRecord,
}

/// On-disk archive: `meta.json`, `records/<id>.json` and the design sources
/// under `designs/<id>/`.
#[derive(Debug, Clone)]
pub struct ArchiveDir {
    root: PathBuf,
}

impl ArchiveDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn design_dir(&self, design_id: &str) -> PathBuf {
        self.root.join("designs").join(design_id)
    }

    pub fn resolve(&self, artifact_ref: &str) -> PathBuf {
        self.root.join(artifact_ref)
    }

    /// Writes a design source and returns its `artifact_ref`.
    pub fn write_artifact(&self, design_id: &str, file_name: &str, source: &str) -> Result<String> {
        let path = self.design_dir(design_id).join(file_name);
        write_string(&path, source)?;
        Ok(format!("designs/{design_id}/{file_name}"))
    }

    pub fn save(&self, archive: &Archive) -> Result<()> {
        let records_dir = self.root.join("records");
        ensure_dir(&records_dir)?;
        for record in archive.records() {
            let artifact = self.resolve(&record.artifact_ref);
            if !artifact.is_file() {
                return Err(Error::Record {
                    design_id: record.design_id.clone(),
                    detail: format!("artifact {} is missing", artifact.display()),
                });
            }
            write_json(
                &records_dir.join(format!("{}.json", record.design_id)),
                &RecordFile {
                    format_version: FORMAT_VERSION,
                    record: record.clone(),
                },
            )?;
        }
        write_json(
            &self.root.join("meta.json"),
            &Meta {
                format_version: FORMAT_VERSION,
                params: archive.params.clone(),
                step_counter: archive.step_counter,
                order: archive.records().iter().map(|r| r.design_id.clone()).collect(),
            },
        )
    }

    pub fn load(&self) -> Result<Archive> {
        let meta_path = self.root.join("meta.json");
        let meta: Meta = serde_json::from_str(&read_string(&meta_path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
        let mut archive = Archive::new(meta.params);
        archive.step_counter = meta.step_counter;
        for id in meta.order {
            let record = self.load_record(&id)?;
            archive.insert(record).map_err(|e| Error::Record {
                design_id: id.clone(),
                detail: e.to_string(),
            })?;
        }
        Ok(archive)
    }

    fn load_record(&self, design_id: &str) -> Result<DesignRecord> {
        let fail = |detail: String| Error::Record {
            design_id: design_id.to_string(),
            detail,
        };
        let path = self.root.join("records").join(format!("{design_id}.json"));
        let text = fs::read_to_string(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        let file: RecordFile =
            serde_json::from_str(&text).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        if file.format_version != FORMAT_VERSION {
            return Err(fail(format!("unsupported format_version {}", file.format_version)));
        }
        if file.record.design_id != design_id {
            return Err(fail(format!("file names design {}", file.record.design_id)));
        }
        if !self.resolve(&file.record.artifact_ref).is_file() {
            return Err(fail(format!("artifact {} is missing", file.record.artifact_ref)));
        }
        Ok(file.record)
    }
}
