//! Line-delimited JSON annotation records and atomic file output.
//!
//! One record per line:
//! `{"video_id":"v1","category":3,"confidence":0.9,"start":1.5,"end":7.25,"weight":1.2}`.
//! `weight` is optional on input and written only for weighted labels. Floats
//! use the shortest representation that parses back to the same value.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, OnlineLabelState, WeightedInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub category: u32,
    pub confidence: f64,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl AnnotationRecord {
    pub fn instance(&self) -> Instance {
        Instance {
            category: self.category,
            confidence: self.confidence,
            start: self.start,
            end: self.end,
        }
    }

    pub fn from_weighted(video_id: &str, label: &WeightedInstance) -> Self {
        let i = label.instance;
        AnnotationRecord {
            video_id: video_id.to_string(),
            category: i.category,
            confidence: i.confidence,
            start: i.start,
            end: i.end,
            weight: Some(label.weight),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        self.instance().validate().map_err(|e| e.to_string())?;
        if let Some(w) = self.weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(format!("weight {w} must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// Parses record lines; blank lines are skipped. `path` only labels errors.
pub fn parse_records(text: &str, path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        rec.check().map_err(fail)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}

/// Groups records by video, preserving file order within a video.
pub fn group_instances(records: &[AnnotationRecord]) -> BTreeMap<String, Vec<Instance>> {
    let mut map: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
    for r in records {
        map.entry(r.video_id.clone())
            .or_default()
            .push(r.instance());
    }
    map
}

/// Rebuilds label states; a missing weight reads as 1.0.
pub fn group_states(records: &[AnnotationRecord]) -> Vec<OnlineLabelState> {
    let mut map: BTreeMap<String, Vec<WeightedInstance>> = BTreeMap::new();
    for r in records {
        map.entry(r.video_id.clone())
            .or_default()
            .push(WeightedInstance {
                instance: r.instance(),
                weight: r.weight.unwrap_or(1.0),
            });
    }
    map.into_iter()
        .map(|(id, labels)| OnlineLabelState::new(id, labels))
        .collect()
}

pub fn states_to_jsonl<'a>(states: impl IntoIterator<Item = &'a OnlineLabelState>) -> String {
    let mut out = String::new();
    for state in states {
        for label in &state.labels {
            let rec = AnnotationRecord::from_weighted(&state.video_id, label);
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn instances_to_jsonl<'a>(
    videos: impl IntoIterator<Item = (&'a str, &'a [Instance])>,
) -> String {
    let mut out = String::new();
    for (video_id, instances) in videos {
        for i in instances {
            let rec = AnnotationRecord {
                video_id: video_id.to_string(),
                category: i.category,
                confidence: i.confidence,
                start: i.start,
                end: i.end,
                weight: None,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a truncated output.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
