use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{TrainingConfigPreset, TrainingPaths};
use super::dataset::{read_dataset, split_validation, write_dataset};
use super::mixture::{assemble_mixture, MixtureComponent, MixtureSpec};
use super::AssembleError;
use crate::corpus::{InstructionRecord, Source};
use crate::hashing::sha256_hex;
use crate::io::write_atomic;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const TRAINING_CONFIG_FILE: &str = "training_config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Digests are lowercase hex SHA-256 over the raw file bytes.
pub const DIGEST_ALGORITHM: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub component: MixtureComponent,
    pub source: Source,
    pub requested: usize,
    pub available: usize,
    pub drawn: usize,
    pub dedupe_removed: usize,
    /// Records of this component present in the output files.
    pub delivered: usize,
    /// `requested - delivered`.
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

/// Audit record of one assembled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationManifest {
    pub tool: String,
    pub tool_version: String,
    pub mixture: String,
    pub master_seed: u64,
    pub epochs: u32,
    pub components: Vec<ComponentCounts>,
    pub dedupe_removed: usize,
    pub validation_size: usize,
    /// Content hashes (16 hex digits) of the validation records, sorted.
    pub validation_hashes: Vec<String>,
    /// Free-form run parameters (schemes, eval options, normalization).
    pub parameters: serde_json::Value,
    pub digest_algorithm: String,
    pub files: Vec<FileDigest>,
}

impl CurationManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn file(&self, name: &str) -> Option<&FileDigest> {
        self.files.iter().find(|f| f.path == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub validation_size: usize,
    pub parameters: serde_json::Value,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            validation_size: 2000,
            parameters: serde_json::Value::Null,
        }
    }
}

fn hash_hex(rec: &InstructionRecord) -> String {
    format!("{:016x}", rec.content_hash)
}

fn digest(name: &str, bytes: &[u8], records: Option<usize>) -> FileDigest {
    FileDigest {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
        records,
    }
}

/// Assembles, dedupes, splits and writes the dataset into `out_dir`:
/// train/validation files, the training config and the manifest.
pub fn build_dataset(
    spec: &MixtureSpec,
    sources: &BTreeMap<MixtureComponent, Vec<InstructionRecord>>,
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<CurationManifest, AssembleError> {
    let mut mixture = assemble_mixture(spec, sources)?;
    let removed = mixture.dedupe();
    let delivered = mixture.delivered();
    let components = spec
        .quotas
        .iter()
        .map(|(&component, &requested)| {
            let delivered = delivered.get(&component).copied().unwrap_or(0);
            ComponentCounts {
                component,
                source: component.source(),
                requested,
                available: mixture.available.get(&component).copied().unwrap_or(0),
                drawn: mixture.drawn.get(&component).copied().unwrap_or(0),
                dedupe_removed: mixture.dedupe_removed.get(&component).copied().unwrap_or(0),
                delivered,
                shortfall: requested - delivered,
            }
        })
        .collect();

    let (train, validation) = split_validation(mixture.into_records(), opts.validation_size, spec.seed)?;
    let mut validation_hashes: Vec<String> = validation.iter().map(hash_hex).collect();
    validation_hashes.sort();

    let train_bytes = write_dataset(&train);
    let validation_bytes = write_dataset(&validation);
    let paths = TrainingPaths {
        train: TRAIN_FILE.into(),
        validation: VALIDATION_FILE.into(),
    };
    let config_bytes =
        TrainingConfigPreset::for_mixture(spec, &paths, opts.validation_size).to_toml_string();

    let io = |name: &str, bytes: &[u8]| {
        let path = out_dir.join(name);
        write_atomic(&path, bytes).map_err(|e| AssembleError::io(path, e))
    };
    io(TRAIN_FILE, &train_bytes)?;
    io(VALIDATION_FILE, &validation_bytes)?;
    io(TRAINING_CONFIG_FILE, config_bytes.as_bytes())?;

    let manifest = CurationManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        mixture: spec.name.clone(),
        master_seed: spec.seed,
        epochs: spec.epochs,
        components,
        dedupe_removed: removed,
        validation_size: validation.len(),
        validation_hashes,
        parameters: opts.parameters.clone(),
        digest_algorithm: DIGEST_ALGORITHM.into(),
        files: vec![
            digest(TRAIN_FILE, &train_bytes, Some(train.len())),
            digest(VALIDATION_FILE, &validation_bytes, Some(validation.len())),
            digest(TRAINING_CONFIG_FILE, config_bytes.as_bytes(), None),
        ],
    };
    io(MANIFEST_FILE, manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// Re-checks the files in `dir` against `manifest`: digests, record
/// counts, per-source conservation, the validation set and train/validation
/// disjointness. Returns every problem found.
pub fn verify_output(dir: &Path, manifest: &CurationManifest) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    for file in &manifest.files {
        match fs::read(dir.join(&file.path)) {
            Ok(bytes) => {
                if sha256_hex(&bytes) != file.sha256 {
                    problems.push(format!("{}: digest mismatch", file.path));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", file.path)),
        }
    }
    let (train, validation) = match (
        read_dataset(&dir.join(TRAIN_FILE)),
        read_dataset(&dir.join(VALIDATION_FILE)),
    ) {
        (Ok(t), Ok(v)) => (t, v),
        (t, v) => {
            problems.extend(t.err().into_iter().chain(v.err()).map(|e| e.to_string()));
            return Err(problems);
        }
    };
    for (name, count) in [(TRAIN_FILE, train.len()), (VALIDATION_FILE, validation.len())] {
        if let Some(expected) = manifest.file(name).and_then(|f| f.records) {
            if expected != count {
                problems.push(format!("{name}: {count} records, manifest says {expected}"));
            }
        }
    }

    let mut expected_by_source: BTreeMap<Source, usize> = BTreeMap::new();
    for c in &manifest.components {
        *expected_by_source.entry(c.source).or_insert(0) += c.delivered;
        if c.delivered + c.shortfall != c.requested {
            problems.push(format!("{}: delivered + shortfall != requested", c.component));
        }
    }
    let mut found_by_source: BTreeMap<Source, usize> = BTreeMap::new();
    for rec in train.iter().chain(&validation) {
        *found_by_source.entry(rec.source).or_insert(0) += 1;
    }
    expected_by_source.retain(|_, n| *n > 0);
    if found_by_source != expected_by_source {
        problems.push(format!(
            "per-source counts {found_by_source:?} differ from manifest {expected_by_source:?}"
        ));
    }

    let val_hashes: BTreeSet<String> = validation.iter().map(hash_hex).collect();
    if val_hashes.iter().cloned().collect::<Vec<_>>() != manifest.validation_hashes {
        problems.push("validation hashes differ from manifest".into());
    }
    let val_set: HashSet<u64> = validation.iter().map(|r| r.content_hash).collect();
    let overlap = train.iter().filter(|r| val_set.contains(&r.content_hash)).count();
    if overlap > 0 {
        problems.push(format!("{overlap} train records also in validation"));
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(n: usize) -> BTreeMap<MixtureComponent, Vec<InstructionRecord>> {
        MixtureComponent::ALL
            .into_iter()
            .map(|c| {
                let recs = (0..n)
                    .map(|i| InstructionRecord::new(format!("{c} q{i}"), "", format!("a{i}"), c.source(), format!("{c}:{i}")))
                    .collect();
                (c, recs)
            })
            .collect()
    }

    fn tiny_spec() -> MixtureSpec {
        MixtureSpec {
            name: "tiny".into(),
            quotas: MixtureComponent::ALL.into_iter().map(|c| (c, 7)).collect(),
            epochs: 1,
            seed: 99,
        }
    }

    #[test]
    fn build_then_verify() {
        let dir = tempfile::tempdir().unwrap();
        let opts = BuildOptions { validation_size: 10, ..BuildOptions::default() };
        let m = build_dataset(&tiny_spec(), &sources(5), &opts, dir.path()).unwrap();
        assert_eq!(m.file(TRAIN_FILE).unwrap().records, Some(30));
        assert!(m.components.iter().all(|c| c.delivered == 5 && c.shortfall == 2));
        verify_output(dir.path(), &m).unwrap();

        fs::write(dir.path().join(TRAIN_FILE), "").unwrap();
        let problems = verify_output(dir.path(), &m).unwrap_err();
        assert!(problems.iter().any(|p| p.contains("digest mismatch")));
    }

    #[test]
    fn duplicates_across_components_are_removed_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut src = sources(4);
        let shared = InstructionRecord::new("shared", "", "same", Source::Lima, "x");
        src.get_mut(&MixtureComponent::Lima).unwrap().push(shared.clone());
        src.get_mut(&MixtureComponent::Quac)
            .unwrap()
            .push(InstructionRecord { source: Source::Quac, ..shared });
        let opts = BuildOptions { validation_size: 3, ..BuildOptions::default() };
        let m = build_dataset(&tiny_spec(), &src, &opts, dir.path()).unwrap();
        assert_eq!(m.dedupe_removed, 1);
        verify_output(dir.path(), &m).unwrap();
    }
}
