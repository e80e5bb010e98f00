//! Locating sessions on disk and pairing them into subjects.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eegstage::ingest::{load_recording, read_manifest, MANIFEST_FILE};
use eegstage::pipeline::Subject;
use eegstage::Condition;

use crate::error::{CliError, CliResult};

/// Manifest paths under `path`: the file itself, `path/manifest.json`, or
/// every manifest found recursively, sorted.
pub fn find_manifests(path: &Path) -> CliResult<Vec<PathBuf>> {
    if !path.exists() {
        return Err(CliError::data(format!(
            "input path {} does not exist",
            path.display()
        )));
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found = Vec::new();
    collect_manifests(path, &mut found)?;
    found.sort();
    if found.is_empty() {
        return Err(CliError::data(format!(
            "no {MANIFEST_FILE} found under {}",
            path.display()
        )));
    }
    Ok(found)
}

fn collect_manifests(dir: &Path, found: &mut Vec<PathBuf>) -> CliResult<()> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        found.push(manifest);
        return Ok(());
    }
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let entry =
            entry.map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?;
        if entry.path().is_dir() {
            collect_manifests(&entry.path(), found)?;
        }
    }
    Ok(())
}

/// The two session manifests of one subject.
#[derive(Debug, Clone)]
pub struct SubjectSessions {
    pub id: String,
    pub two_d: PathBuf,
    pub three_d: PathBuf,
}

impl SubjectSessions {
    pub fn load(&self) -> CliResult<Subject> {
        Ok(Subject::new(
            load_recording(&self.two_d)?,
            load_recording(&self.three_d)?,
        )?)
    }
}

/// Subjects under `path` in id order, restricted to `only` when non-empty.
pub fn discover_subjects(path: &Path, only: &[String]) -> CliResult<Vec<SubjectSessions>> {
    let mut pairs: BTreeMap<String, [Option<PathBuf>; 2]> = BTreeMap::new();
    for manifest_path in find_manifests(path)? {
        let m = read_manifest(&manifest_path)?;
        let slot = match m.condition {
            Condition::TwoD => 0,
            Condition::ThreeD => 1,
        };
        let entry = pairs.entry(m.subject_id.clone()).or_default();
        if let Some(previous) = &entry[slot] {
            return Err(CliError::data(format!(
                "subject {} has two {} sessions: {} and {}",
                m.subject_id,
                m.condition,
                previous.display(),
                manifest_path.display()
            )));
        }
        entry[slot] = Some(manifest_path);
    }
    for id in only {
        if !pairs.contains_key(id) {
            return Err(CliError::data(format!(
                "subject {id} not found under {}",
                path.display()
            )));
        }
    }
    let mut subjects = Vec::new();
    for (id, [two_d, three_d]) in pairs {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        match (two_d, three_d) {
            (Some(two_d), Some(three_d)) => subjects.push(SubjectSessions { id, two_d, three_d }),
            (two_d, _) => {
                let missing = if two_d.is_none() {
                    Condition::TwoD
                } else {
                    Condition::ThreeD
                };
                return Err(CliError::data(format!(
                    "subject {id} has no {missing} session under {}",
                    path.display()
                )));
            }
        }
    }
    Ok(subjects)
}
