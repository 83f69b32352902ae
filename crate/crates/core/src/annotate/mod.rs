//! Annotation records and stores, plus the LLM-backed stance annotator.
//!
//! A store holds at most one record per `(instance_id, feature, annotator)`.
//! Labels are validated and canonicalized against a [`ClassRegistry`] on the
//! way in, so nothing downstream ever sees a label outside its class set.

mod client;
pub mod mock;
mod stance;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassRegistry, FeatureKind};

pub use client::{
    annotate_stances, ChatClient, EndpointConfig, RequestError, SkipRecord, StanceRun,
};
pub use stance::{parse_stance_response, render_stance_prompt, StanceRequest, STANCE_INSTRUCTION};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed annotation: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    InvalidLabels {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid annotation for {instance_id:?}: {message}")]
    InvalidRecord {
        instance_id: String,
        message: String,
    },
    #[error("conflicting annotations for instance(s): {}", .0.join(", "))]
    Conflicts(Vec<String>),
    #[error("no stance target for instance(s): {}", .0.join(", "))]
    MissingTarget(Vec<String>),
    #[error("instance id {0:?} occurs more than once; stance annotation needs unique ids")]
    DuplicateInstance(String),
    #[error("unparseable stance response: {raw:?}")]
    UnparseableStance { raw: String },
    #[error("endpoint configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub feature: FeatureKind,
    pub labels: Vec<String>,
    pub annotator: String,
    /// One confidence per label when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<f64>>,
}

impl AnnotationRecord {
    pub fn new<S: Into<String>>(
        instance_id: impl Into<String>,
        feature: FeatureKind,
        labels: impl IntoIterator<Item = S>,
        annotator: impl Into<String>,
    ) -> Self {
        AnnotationRecord {
            instance_id: instance_id.into(),
            feature,
            labels: labels.into_iter().map(Into::into).collect(),
            annotator: annotator.into(),
            confidence: None,
        }
    }

    fn key(&self) -> RecordKey {
        (
            self.instance_id.clone(),
            self.feature,
            self.annotator.clone(),
        )
    }

    /// Validates labels against `registry` and returns the record with
    /// canonical labels. Confidences follow their labels; when MF collapse
    /// merges two labels the larger confidence is kept.
    pub fn canonicalized(&self, registry: &ClassRegistry) -> Result<Self, String> {
        if let Some(conf) = &self.confidence {
            if conf.len() != self.labels.len() {
                return Err(format!(
                    "{} confidences for {} labels",
                    conf.len(),
                    self.labels.len()
                ));
            }
        }
        let labels = registry.canonical_labels(self.feature, &self.labels)?;
        let confidence = self.confidence.as_ref().map(|conf| {
            labels
                .iter()
                .map(|canon| {
                    self.labels
                        .iter()
                        .zip(conf)
                        .filter(|(l, _)| {
                            registry
                                .canonical_labels(self.feature, &[l.as_str()])
                                .map(|c| c.first() == Some(canon))
                                .unwrap_or(false)
                        })
                        .map(|(_, c)| *c)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        });
        Ok(AnnotationRecord {
            labels,
            confidence,
            ..self.clone()
        })
    }
}

type RecordKey = (String, FeatureKind, String);

/// Outcome of inserting into a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationStore {
    records: BTreeMap<RecordKey, AnnotationRecord>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in key order.
    pub fn iter(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }

    pub fn contains(&self, instance_id: &str, feature: FeatureKind, annotator: &str) -> bool {
        self.records
            .contains_key(&(instance_id.to_string(), feature, annotator.to_string()))
    }

    /// Inserts an already-validated record. Identical labels are a no-op;
    /// different labels under the same key are a conflict.
    pub fn insert(&mut self, record: AnnotationRecord) -> Result<Inserted, AnnotateError> {
        use std::collections::btree_map::Entry;
        match self.records.entry(record.key()) {
            Entry::Vacant(v) => {
                v.insert(record);
                Ok(Inserted::New)
            }
            Entry::Occupied(o) if o.get().labels == record.labels => Ok(Inserted::Duplicate),
            Entry::Occupied(_) => Err(AnnotateError::Conflicts(vec![record.instance_id])),
        }
    }

    /// Validates against `registry`, then inserts.
    pub fn insert_checked(
        &mut self,
        record: AnnotationRecord,
        registry: &ClassRegistry,
    ) -> Result<Inserted, AnnotateError> {
        let rec =
            record
                .canonicalized(registry)
                .map_err(|message| AnnotateError::InvalidRecord {
                    instance_id: record.instance_id.clone(),
                    message,
                })?;
        self.insert(rec)
    }

    /// All records for one instance and feature, across annotators.
    pub fn records_for<'a>(
        &'a self,
        instance_id: &'a str,
        feature: FeatureKind,
    ) -> impl Iterator<Item = &'a AnnotationRecord> + 'a {
        let start = (instance_id.to_string(), feature, String::new());
        self.records
            .range(start..)
            .map(|(_, r)| r)
            .take_while(move |r| r.instance_id == instance_id && r.feature == feature)
    }

    /// The record for an instance and feature. With no `annotator` given,
    /// the instance must have been labelled by exactly one annotator.
    pub fn lookup<'a>(
        &'a self,
        instance_id: &'a str,
        feature: FeatureKind,
        annotator: Option<&str>,
    ) -> Result<Option<&'a AnnotationRecord>, String> {
        match annotator {
            Some(a) => Ok(self
                .records
                .get(&(instance_id.to_string(), feature, a.to_string()))),
            None => {
                let mut it = self.records_for(instance_id, feature);
                let first = it.next();
                if it.next().is_some() {
                    return Err(format!(
                        "instance {instance_id:?} has {feature} labels from several annotators; pick one"
                    ));
                }
                Ok(first)
            }
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in self.iter() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads annotation JSONL, validating every label against `registry`.
pub fn read_annotations<R: BufRead>(
    reader: R,
    path: &Path,
    registry: &ClassRegistry,
) -> Result<AnnotationStore, AnnotateError> {
    let mut store = AnnotationStore::new();
    let mut conflicts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| AnnotateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| AnnotateError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        let rec = rec
            .canonicalized(registry)
            .map_err(|message| AnnotateError::InvalidLabels {
                path: path.to_path_buf(),
                line: line_no,
                message,
            })?;
        if let Err(AnnotateError::Conflicts(ids)) = store.insert(rec) {
            conflicts.extend(ids);
        }
    }
    if conflicts.is_empty() {
        Ok(store)
    } else {
        Err(AnnotateError::Conflicts(conflicts))
    }
}

pub fn load_annotations(
    path: &Path,
    registry: &ClassRegistry,
) -> Result<AnnotationStore, AnnotateError> {
    let file = File::open(path).map_err(|source| AnnotateError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_annotations(BufReader::new(file), path, registry)
}

/// Unions stores. Identical duplicates collapse; every conflicting instance
/// is reported.
pub fn merge_annotations<'a, I>(stores: I) -> Result<AnnotationStore, AnnotateError>
where
    I: IntoIterator<Item = &'a AnnotationStore>,
{
    let mut merged = AnnotationStore::new();
    let mut conflicts = Vec::new();
    for store in stores {
        for rec in store.iter() {
            if let Err(AnnotateError::Conflicts(ids)) = merged.insert(rec.clone()) {
                conflicts.extend(ids);
            }
        }
    }
    if conflicts.is_empty() {
        Ok(merged)
    } else {
        conflicts.sort();
        conflicts.dedup();
        Err(AnnotateError::Conflicts(conflicts))
    }
}

/// Append-only JSONL writer. Each record goes out in a single `write_all`
/// under a lock, so concurrent producers never interleave lines.
pub struct AnnotationSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl AnnotationSink {
    pub fn open(path: &Path) -> Result<Self, AnnotateError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| AnnotateError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(AnnotationSink {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<(), AnnotateError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(&line).map_err(|source| AnnotateError::Io {
            path: self.path.clone(),
            source,
        })
    }
}
