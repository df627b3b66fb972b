//! On-disk store shared by the command line and the HTTP service.
//!
//! ```text
//! <root>/manifest.json
//! <root>/datasets/<id>.csv, <id>.schema.json
//! <root>/models/<id>/            model bundle
//! <root>/synthetic/<id>.csv
//! <root>/reports/<id>.json
//! ```
//!
//! Identifiers are SHA-256 digests (first 16 hex digits) of the artifact's
//! content and provenance together with the manifest sequence number, so
//! storing the same bytes twice yields two distinct entries.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{infer_schema, read_csv, CsvOptions, Schema, Table};
use crate::error::{Error, Result};
use crate::evaluate::EvaluationReport;
use crate::gan::Synthesizer;

const MANIFEST: &str = "manifest.json";
const LOCK: &str = "manifest.lock";
const LOCK_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub name: String,
    pub rows: usize,
    pub columns: Vec<String>,
    /// Digest of the uploaded bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub dataset: String,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEntry {
    pub id: String,
    pub model: String,
    pub rows: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Number of entries ever added; salts new identifiers.
    pub sequence: u64,
    pub datasets: Vec<DatasetEntry>,
    pub models: Vec<ModelEntry>,
    pub synthetic: Vec<SyntheticEntry>,
    pub reports: Vec<ReportEntry>,
}

impl Manifest {
    pub fn dataset(&self, id: &str) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn model(&self, id: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|d| d.id == id)
    }

    pub fn synthetic(&self, id: &str) -> Option<&SyntheticEntry> {
        self.synthetic.iter().find(|d| d.id == id)
    }

    pub fn report(&self, id: &str) -> Option<&ReportEntry> {
        self.reports.iter().find(|d| d.id == id)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn artifact_id(kind: &str, content: &[u8], sequence: u64) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update(sequence.to_le_bytes());
    h.update(content);
    hex::encode(h.finalize())[..16].to_string()
}

/// Holds the manifest lock file until dropped.
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Opens `root`, creating the directory layout if needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for sub in ["datasets", "models", "synthetic", "reports"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(p, e))?;
        }
        Ok(Workspace { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.root.join(MANIFEST);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn lock(&self) -> Result<LockGuard> {
        let path = self.root.join(LOCK);
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockGuard(path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > LOCK_TIMEOUT {
                        return Err(Error::io(path, e));
                    }
                    sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
    }

    /// Applies `f` to the manifest under the workspace lock and writes the
    /// result atomically.
    fn update<T>(&self, f: impl FnOnce(&mut Manifest) -> Result<T>) -> Result<T> {
        let _guard = self.lock()?;
        let mut m = self.manifest()?;
        let out = f(&mut m)?;
        let tmp = self.root.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&tmp, e))?;
        let dest = self.root.join(MANIFEST);
        fs::rename(&tmp, &dest).map_err(|e| Error::io(dest, e))?;
        Ok(out)
    }

    fn not_found(kind: &str, id: &str) -> Error {
        Error::NotFound(format!("{kind} `{id}`"))
    }

    pub fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    pub fn schema_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.schema.json"))
    }

    pub fn model_dir(&self, id: &str) -> PathBuf {
        self.root.join("models").join(id)
    }

    pub fn synthetic_path(&self, id: &str) -> PathBuf {
        self.root.join("synthetic").join(format!("{id}.csv"))
    }

    pub fn report_path(&self, id: &str) -> PathBuf {
        self.root.join("reports").join(format!("{id}.json"))
    }

    /// Parses `bytes` as CSV, infers a schema and stores both.
    pub fn add_dataset(&self, name: &str, bytes: &[u8]) -> Result<(DatasetEntry, Schema)> {
        let table = read_csv(bytes, &CsvOptions::default())?;
        let schema = infer_schema(&table)?;
        let entry = self.update(|m| {
            m.sequence += 1;
            let id = artifact_id("dataset", bytes, m.sequence);
            let path = self.dataset_path(&id);
            fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
            let path = self.schema_path(&id);
            fs::write(&path, schema.to_json()?).map_err(|e| Error::io(path, e))?;
            let entry = DatasetEntry {
                id,
                name: name.to_string(),
                rows: table.n_rows(),
                columns: table.column_names().iter().map(|s| s.to_string()).collect(),
                sha256: digest(bytes),
            };
            m.datasets.push(entry.clone());
            Ok(entry)
        })?;
        Ok((entry, schema))
    }

    pub fn load_dataset(&self, id: &str) -> Result<(Table, Schema)> {
        if self.manifest()?.dataset(id).is_none() {
            return Err(Self::not_found("dataset", id));
        }
        let file = self.dataset_path(id);
        let table = read_csv(
            File::open(&file).map_err(|e| Error::io(&file, e))?,
            &CsvOptions::default(),
        )?;
        Ok((table, self.load_schema(id)?))
    }

    pub fn load_schema(&self, id: &str) -> Result<Schema> {
        let path = self.schema_path(id);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Self::not_found("dataset", id),
            _ => Error::io(&path, e),
        })?;
        Schema::from_json(&text)
    }

    pub fn save_schema(&self, id: &str, schema: &Schema) -> Result<()> {
        self.update(|m| {
            let entry = m
                .dataset(id)
                .ok_or_else(|| Self::not_found("dataset", id))?;
            for spec in schema.columns() {
                if !entry.columns.contains(&spec.name) {
                    return Err(Error::UnknownColumn(spec.name.clone()));
                }
            }
            let path = self.schema_path(id);
            fs::write(&path, schema.to_json()?).map_err(|e| Error::io(path, e))
        })
    }

    /// Allocates a fresh identifier for an artifact that will be stored
    /// later, e.g. a model whose training has been queued.
    pub fn reserve_id(&self, kind: &str, content: &[u8]) -> Result<String> {
        self.update(|m| {
            m.sequence += 1;
            Ok(artifact_id(kind, content, m.sequence))
        })
    }

    pub fn add_model(&self, dataset: &str, model: &Synthesizer) -> Result<ModelEntry> {
        let mut content = dataset.as_bytes().to_vec();
        content.extend_from_slice(&serde_json::to_vec(model.config())?);
        content.extend_from_slice(model.generator().to_json()?.as_bytes());
        let id = self.reserve_id("model", &content)?;
        self.add_model_as(&id, dataset, model)
    }

    /// Stores `model` under an identifier obtained from
    /// [`reserve_id`](Self::reserve_id).
    pub fn add_model_as(&self, id: &str, dataset: &str, model: &Synthesizer) -> Result<ModelEntry> {
        self.update(|m| {
            if m.dataset(dataset).is_none() {
                return Err(Self::not_found("dataset", dataset));
            }
            if m.model(id).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "model `{id}` already exists"
                )));
            }
            model.save(self.model_dir(id))?;
            let entry = ModelEntry {
                id: id.to_string(),
                dataset: dataset.to_string(),
                epochs: model.config().epochs,
                seed: model.config().seed,
            };
            m.models.push(entry.clone());
            Ok(entry)
        })
    }

    pub fn load_model(&self, id: &str) -> Result<Synthesizer> {
        if self.manifest()?.model(id).is_none() {
            return Err(Self::not_found("model", id));
        }
        Synthesizer::load(self.model_dir(id))
    }

    pub fn add_synthetic(
        &self,
        model: &str,
        table: &Table,
        seed: u64,
        condition: Option<String>,
    ) -> Result<SyntheticEntry> {
        let mut bytes = Vec::new();
        table.write_csv(&mut bytes, b',')?;
        self.update(|m| {
            if m.model(model).is_none() {
                return Err(Self::not_found("model", model));
            }
            m.sequence += 1;
            let id = artifact_id("synthetic", &bytes, m.sequence);
            let path = self.synthetic_path(&id);
            fs::write(&path, &bytes).map_err(|e| Error::io(path, e))?;
            let entry = SyntheticEntry {
                id,
                model: model.to_string(),
                rows: table.n_rows(),
                seed,
                condition,
            };
            m.synthetic.push(entry.clone());
            Ok(entry)
        })
    }

    pub fn load_synthetic(&self, id: &str) -> Result<Table> {
        if self.manifest()?.synthetic(id).is_none() {
            return Err(Self::not_found("synthetic table", id));
        }
        let file = self.synthetic_path(id);
        read_csv(
            File::open(&file).map_err(|e| Error::io(&file, e))?,
            &CsvOptions::default(),
        )
    }

    pub fn add_report(
        &self,
        report: &EvaluationReport,
        model: Option<String>,
        synthetic: Option<String>,
    ) -> Result<ReportEntry> {
        let text = report.to_json()?;
        self.update(|m| {
            m.sequence += 1;
            let id = artifact_id("report", text.as_bytes(), m.sequence);
            let path = self.report_path(&id);
            fs::write(&path, &text).map_err(|e| Error::io(path, e))?;
            let entry = ReportEntry {
                id,
                model,
                synthetic,
            };
            m.reports.push(entry.clone());
            Ok(entry)
        })
    }

    pub fn load_report(&self, id: &str) -> Result<EvaluationReport> {
        if self.manifest()?.report(id).is_none() {
            return Err(Self::not_found("report", id));
        }
        let path = self.report_path(id);
        EvaluationReport::from_json(&fs::read_to_string(&path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_overrides, ColumnKind, ColumnOverride};
    use crate::evaluate::EvaluateOptions;
    use crate::gan::TrainConfig;

    const CSV: &[u8] = b"x,k\n1.5,a\n2.5,b\n0,a\n3.25,b\n";

    #[test]
    fn datasets_get_fresh_ids() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let (a, schema) = ws.add_dataset("one.csv", CSV).unwrap();
        let (b, _) = ws.add_dataset("one.csv", CSV).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(a.sha256, b.sha256);
        assert_eq!(a.id.len(), 16);
        assert_eq!(a.rows, 4);
        let (t, s) = ws.load_dataset(&a.id).unwrap();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(s, schema);
        assert!(matches!(ws.load_dataset("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn ragged_upload_is_rejected_without_an_entry() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        assert!(ws.add_dataset("bad.csv", b"x,y\n1,2\n3\n").is_err());
        assert!(ws.manifest().unwrap().datasets.is_empty());
    }

    #[test]
    fn schema_overrides_persist() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let (d, schema) = ws.add_dataset("d.csv", CSV).unwrap();
        let changed = apply_overrides(
            &schema,
            &[ColumnOverride {
                column: "x".into(),
                kind: Some(ColumnKind::Mixed {
                    categorical_values: vec![0.0],
                    log_transform: false,
                }),
                include: None,
                target: None,
            }],
        )
        .unwrap();
        ws.save_schema(&d.id, &changed).unwrap();
        let reopened = Workspace::open(dir.path()).unwrap();
        assert_eq!(reopened.load_schema(&d.id).unwrap(), changed);
        assert!(ws.save_schema("missing", &changed).is_err());
    }

    #[test]
    fn full_artifact_chain_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let (d, schema) = ws.add_dataset("d.csv", CSV).unwrap();
        let (table, _) = ws.load_dataset(&d.id).unwrap();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            noise_dim: 4,
            generator_hidden: vec![8],
            discriminator_hidden: vec![8],
            classifier_hidden: vec![8],
            ..TrainConfig::default()
        };
        let model = Synthesizer::fit(&table, &schema, &config).unwrap();
        let me = ws.add_model(&d.id, &model).unwrap();
        let synth = ws
            .load_model(&me.id)
            .unwrap()
            .synthesize(10, None, 0)
            .unwrap();
        let se = ws.add_synthetic(&me.id, &synth, 0, None).unwrap();
        let back = ws.load_synthetic(&se.id).unwrap();
        assert_eq!(back.n_rows(), 10);
        let options = EvaluateOptions {
            privacy_sample: None,
            ..EvaluateOptions::default()
        };
        let report = EvaluationReport::compute(&table, &table, &schema, &options).unwrap();
        let re = ws.add_report(&report, Some(me.id.clone()), None).unwrap();

        let again = Workspace::open(dir.path()).unwrap();
        let m = again.manifest().unwrap();
        assert_eq!(m.datasets.len(), 1);
        assert_eq!(m.models[0], me);
        assert_eq!(m.synthetic[0], se);
        assert_eq!(again.load_report(&re.id).unwrap(), report);
        assert!(again.add_synthetic("missing", &synth, 0, None).is_err());
        assert!(again.add_model_as(&me.id, &d.id, &model).is_err());
        let reserved = again.reserve_id("model", b"x").unwrap();
        assert!(again.load_model(&reserved).is_err());
        again.add_model_as(&reserved, &d.id, &model).unwrap();
        assert!(again.load_model(&reserved).is_ok());
        assert!(!dir.path().join(LOCK).exists());
    }
}
