use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetSplit, Partition, TripletSample};
use crate::io::{read_jsonl, write_jsonl};

/// Version written to and required from `split.json`.
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    version: String,
    counts: BTreeMap<Partition, usize>,
    project_assignment: BTreeMap<String, Partition>,
}

fn file_name(p: Partition) -> &'static str {
    match p {
        Partition::Train => "train.jsonl",
        Partition::Validation => "validation.jsonl",
        Partition::Test => "test.jsonl",
    }
}

const PARTITIONS: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

/// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and `split.json` into `dir`.
pub fn serialize_dataset(split: &DatasetSplit, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io(e.to_string()))?;
    for p in PARTITIONS {
        write_jsonl(&dir.join(file_name(p)), split.partition(p))?;
    }
    let manifest = SplitManifest {
        version: SCHEMA_VERSION.to_string(),
        counts: PARTITIONS.iter().map(|p| (*p, split.partition(*p).len())).collect(),
        project_assignment: split.project_assignment.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("split.json"), json + "\n").map_err(|e| DatasetError::Io(e.to_string()))
}

pub fn load_dataset(dir: &Path) -> Result<DatasetSplit, DatasetError> {
    let manifest_path = dir.join("split.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| DatasetError::Io(format!("{}: {e}", manifest_path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| DatasetError::MalformedRecord {
        path: manifest_path.display().to_string(),
        line_no: e.line(),
        message: e.to_string(),
    })?;
    let found = raw
        .get("version")
        .and_then(|v| v.as_str().map(str::to_string).or_else(|| v.as_u64().map(|n| n.to_string())))
        .unwrap_or_default();
    if found != SCHEMA_VERSION {
        return Err(DatasetError::SchemaMismatch {
            expected: SCHEMA_VERSION.to_string(),
            found,
        });
    }
    let manifest: SplitManifest = serde_json::from_value(raw).map_err(|e| DatasetError::MalformedRecord {
        path: manifest_path.display().to_string(),
        line_no: 0,
        message: e.to_string(),
    })?;
    let load = |p: Partition| -> Result<Vec<TripletSample>, DatasetError> { Ok(read_jsonl(&dir.join(file_name(p)))?) };
    Ok(DatasetSplit {
        train: load(Partition::Train)?,
        validation: load(Partition::Validation)?,
        test: load(Partition::Test)?,
        project_assignment: manifest.project_assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_by_project, BlockOrigin, CodeBlock, SplitRatios};

    fn triplet(project: &str, i: u32) -> TripletSample {
        let block = |cen: &str| CodeBlock {
            todo_text: "TODO: use the new api".into(),
            centrepiece: cen.into(),
            context: vec!["a = 1".into(), "b = 0.1".into()],
            origin: BlockOrigin {
                project: project.into(),
                file: "f.py".into(),
                commit: "abc".into(),
                method: "m".into(),
                centre_line: i,
                todo_line: Some(i - 1),
            },
        };
        TripletSample {
            group_id: format!("g{i}"),
            project: project.into(),
            anchor: block("x = f(y)"),
            positive: block("x = f(z)"),
            negative: block("return None"),
        }
    }

    fn split() -> DatasetSplit {
        let triplets = (0..6).map(|i| triplet(&format!("p{}", i % 4), i + 2)).collect();
        split_by_project(triplets, SplitRatios::default(), 3).unwrap()
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let s = split();
        serialize_dataset(&s, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), s);
    }

    #[test]
    fn truncated_last_line_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        serialize_dataset(&split(), dir.path()).unwrap();
        let path = dir.path().join("train.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.trim_end().len() - 10;
        std::fs::write(&path, &text[..cut]).unwrap();
        let lines = text[..cut].lines().count();
        match load_dataset(dir.path()) {
            Err(DatasetError::MalformedRecord { line_no, .. }) => assert_eq!(line_no, lines),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn newer_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        serialize_dataset(&split(), dir.path()).unwrap();
        let path = dir.path().join("split.json");
        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\": \"1\"", "\"version\": \"2\"");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::SchemaMismatch { found, .. }) if found == "2"
        ));
    }
}
