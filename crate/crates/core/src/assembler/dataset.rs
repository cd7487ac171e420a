use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;

use super::AssembleError;
use crate::corpus::InstructionRecord;
use crate::hashing::rng_for;

/// Drops every record whose content hash was already seen; returns the kept
/// records in their original order and the number removed.
pub fn dedupe_records(records: Vec<InstructionRecord>) -> (Vec<InstructionRecord>, usize) {
    let mut seen = HashSet::with_capacity(records.len());
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| seen.insert(r.content_hash))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Moves a seeded sample of `n` records into a validation set. Both halves
/// keep the input order.
pub fn split_validation(
    records: Vec<InstructionRecord>,
    n: usize,
    seed: u64,
) -> Result<(Vec<InstructionRecord>, Vec<InstructionRecord>), AssembleError> {
    if n > records.len() {
        return Err(AssembleError::ValidationTooLarge {
            requested: n,
            available: records.len(),
        });
    }
    let mut rng = rng_for(seed, &["validation"]);
    let mut in_validation = vec![false; records.len()];
    for i in index::sample(&mut rng, records.len(), n) {
        in_validation[i] = true;
    }
    let mut train = Vec::with_capacity(records.len() - n);
    let mut validation = Vec::with_capacity(n);
    for (rec, is_val) in records.into_iter().zip(in_validation) {
        if is_val {
            validation.push(rec);
        } else {
            train.push(rec);
        }
    }
    Ok((train, validation))
}

/// Dataset file bytes: one JSON record per line, LF endings.
pub fn write_dataset(records: &[InstructionRecord]) -> Vec<u8> {
    crate::io::to_jsonl(records).expect("records serialize")
}

pub fn read_dataset(path: &Path) -> Result<Vec<InstructionRecord>, AssembleError> {
    let file = File::open(path).map_err(|e| AssembleError::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AssembleError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| AssembleError::Format {
            path: path.to_path_buf(),
            line: idx + 1,
            problem: e.to_string(),
        })?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;

    fn recs(n: usize) -> Vec<InstructionRecord> {
        (0..n)
            .map(|i| InstructionRecord::new(format!("q{i}"), "", format!("a{i}"), Source::Other, i.to_string()))
            .collect()
    }

    #[test]
    fn dedupe_examples() {
        let r = InstructionRecord::new("x", "y", "z", Source::Lima, "1");
        let (kept, removed) = dedupe_records(vec![r.clone(), r.clone()]);
        assert_eq!((kept.len(), removed), (1, 1));
        let (kept, removed) = dedupe_records(recs(5));
        assert_eq!((kept.len(), removed), (5, 0));
        let (again, removed) = dedupe_records(kept.clone());
        assert_eq!((again, removed), (kept, 0));
    }

    #[test]
    fn split_examples() {
        let (train, val) = split_validation(recs(50), 10, 1).unwrap();
        assert_eq!((train.len(), val.len()), (40, 10));
        let (train0, val0) = split_validation(recs(5), 0, 1).unwrap();
        assert_eq!((train0.len(), val0.len()), (5, 0));
        assert_eq!(split_validation(recs(50), 10, 1).unwrap(), (train, val));
        assert!(matches!(
            split_validation(recs(3), 4, 1),
            Err(AssembleError::ValidationTooLarge { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = recs(3);
        std::fs::write(&path, write_dataset(&data)).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
