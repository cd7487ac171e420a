use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use instruct_curation::assembler::{read_dataset, verify_output, CurationManifest};
use instruct_curation::pipeline::{
    run_pipeline_with, PipelineError, RunConfig, StageName, StageStatus, RUN_MANIFEST_FILE,
};
use instruct_curation::testing::synthetic::{self, SyntheticTransport};

fn setup(root: &Path, seed: u64) -> RunConfig {
    let ni = root.join("ni");
    let map = synthetic::write_corpus(&ni, 4, 4, 60).unwrap();
    fs::write(root.join("categories.txt"), map).unwrap();
    let sources = synthetic::write_sources(&root.join("sources"), 40).unwrap();
    let mut cfg = RunConfig::new(root.join("run"), seed);
    cfg.ni_dir = Some(ni);
    cfg.category_map = Some(root.join("categories.txt"));
    cfg.sources = Some(sources);
    cfg.eval.max_instances = 30;
    cfg.validation_size = 20;
    cfg.endpoint.retries = 0;
    cfg
}

fn all() -> BTreeSet<StageName> {
    StageName::ALL.into_iter().collect()
}

fn run(cfg: &RunConfig, stages: &BTreeSet<StageName>) -> Result<instruct_curation::pipeline::PipelineReport, PipelineError> {
    run_pipeline_with(cfg, stages, Some(SyntheticTransport))
}

#[test]
fn full_run_produces_verifiable_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 11);
    let report = run(&cfg, &all()).unwrap();
    assert!(report.outcomes.iter().all(|o| o.status == StageStatus::Ran));

    let out = cfg.run_dir.join("assemble");
    let manifest: CurationManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    verify_output(&out, &manifest).unwrap();
    let train = read_dataset(&out.join("train.jsonl")).unwrap();
    assert!(train.iter().any(|r| r.origin_id.starts_with("task")));
    assert_eq!(read_dataset(&out.join("validation.jsonl")).unwrap().len(), 20);
}

#[test]
fn rerun_with_same_inputs_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 5);
    run(&cfg, &all()).unwrap();
    let before = fs::metadata(cfg.run_dir.join(RUN_MANIFEST_FILE)).unwrap().modified().unwrap();
    let again = run(&cfg, &all()).unwrap();
    assert_eq!(again.files_written, 0);
    assert!(again.outcomes.iter().all(|o| o.status == StageStatus::Skipped));
    let after = fs::metadata(cfg.run_dir.join(RUN_MANIFEST_FILE)).unwrap().modified().unwrap();
    assert_eq!(before, after);
}

#[test]
fn changed_input_reruns_downstream_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path(), 5);
    run(&cfg, &all()).unwrap();
    cfg.validation_size = 10;
    let again = run(&cfg, &all()).unwrap();
    let status: Vec<_> = again.outcomes.iter().map(|o| o.status).collect();
    assert_eq!(
        status,
        vec![StageStatus::Skipped, StageStatus::Skipped, StageStatus::Skipped, StageStatus::Ran]
    );
}

#[test]
fn missing_upstream_artifact_names_producer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 5);
    let err = run(&cfg, &[StageName::Sample].into()).unwrap_err();
    match err {
        PipelineError::MissingArtifact { path, stage } => {
            assert!(path.ends_with("score/reports.jsonl"));
            assert_eq!(stage, StageName::Score);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn every_artifact_is_indexed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 3);
    let report = run(&cfg, &all()).unwrap();
    let mut indexed: BTreeSet<String> = report
        .manifest
        .stages
        .values()
        .flat_map(|s| s.artifacts.iter().map(|a| a.path.clone()))
        .collect();
    indexed.insert(RUN_MANIFEST_FILE.into());
    let mut on_disk = BTreeSet::new();
    for stage in ["", "filter", "score", "sample", "assemble"] {
        for e in fs::read_dir(cfg.run_dir.join(stage)).unwrap() {
            let e = e.unwrap();
            if e.file_type().unwrap().is_file() {
                let rel = e.path().strip_prefix(&cfg.run_dir).unwrap().to_string_lossy().into_owned();
                on_disk.insert(rel);
            }
        }
    }
    assert_eq!(indexed, on_disk);
}
