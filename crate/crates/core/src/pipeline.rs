//! Stage runner behind the `curate` binary.
//!
//! Each stage reads plain files and writes plain files under the run
//! directory, so stages can be rerun independently. A stage whose input
//! fingerprint and output digests match the run manifest is skipped
//! without touching the disk.
//!
//! Layout:
//!
//! ```text
//! run_dir/
//!   run_manifest.json
//!   filter/selected.txt, filter/rejected.jsonl
//!   score/reports.jsonl, score/failures.jsonl, score/summary.jsonl
//!   sample/em_pool.jsonl, sample/gen_pool.jsonl, sample/plan.json
//!   assemble/train.jsonl, assemble/validation.jsonl,
//!   assemble/training_config.toml, assemble/manifest.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assembler::{self, BuildOptions, MixtureComponent, MixtureSpec};
use crate::corpus::{
    self, apply_filter_policy, categorize_tasks, load_allowlist, load_instruction_file,
    load_ni_corpus, CategoryMap, FieldMapping, FilterPolicy, InstructionRecord, Source,
    TaskDefinition,
};
use crate::fewshot::{
    evaluate_tasks, read_reports, summarize_reports, write_reports, CompletionClient,
    CompletionTransport, EndpointConfig, EvalOptions, HttpTransport,
};
use crate::hashing::{derive_seed, sha256_hex};
use crate::io::{to_jsonl, write_atomic};
use crate::sampler::{
    bucket_em_tasks, bucket_generation_examples, sample_em_pool, sample_generation_pool,
    BucketScheme, ExampleRef,
};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Filter,
    Score,
    Sample,
    Assemble,
}

impl StageName {
    pub const ALL: [StageName; 4] = [
        StageName::Filter,
        StageName::Score,
        StageName::Sample,
        StageName::Assemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Filter => "filter",
            StageName::Score => "score",
            StageName::Sample => "sample",
            StageName::Assemble => "assemble",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageName::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing {path}; it is produced by the `{stage}` stage")]
    MissingArtifact { path: PathBuf, stage: StageName },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Assemble(#[from] assembler::AssembleError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One entry of a sources file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub component: MixtureComponent,
    /// Relative paths resolve against the sources file's directory.
    pub path: PathBuf,
    #[serde(default = "default_instruction")]
    pub instruction: String,
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_instruction() -> String {
    "instruction".into()
}

fn default_output() -> String {
    "output".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcesFile {
    #[serde(rename = "source", default)]
    pub sources: Vec<SourceEntry>,
}

impl SourcesFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut file: SourcesFile = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in &mut file.sources {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
            if matches!(
                entry.component,
                MixtureComponent::NiExactMatch | MixtureComponent::NiGeneration
            ) {
                return Err(PipelineError::Config(format!(
                    "{}: NI pools come from the sample stage, not the sources file",
                    entry.component
                )));
            }
        }
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub run_dir: PathBuf,
    /// Directory of NI task files.
    pub ni_dir: Option<PathBuf>,
    pub filter_policy: Option<PathBuf>,
    /// Task-id list used as the explicit allowlist.
    pub allowlist: Option<PathBuf>,
    pub category_map: Option<PathBuf>,
    pub em_scheme: Option<PathBuf>,
    pub gen_scheme: Option<PathBuf>,
    pub sources: Option<PathBuf>,
    pub endpoint: EndpointConfig,
    /// `k`, `max_instances` and scoring; the seed is derived from
    /// `master_seed`.
    pub eval: EvalOptions,
    pub preset: String,
    pub validation_size: usize,
}

impl RunConfig {
    pub fn new(run_dir: impl Into<PathBuf>, master_seed: u64) -> Self {
        Self {
            master_seed,
            run_dir: run_dir.into(),
            ni_dir: None,
            filter_policy: None,
            allowlist: None,
            category_map: None,
            em_scheme: None,
            gen_scheme: None,
            sources: None,
            endpoint: EndpointConfig::default(),
            eval: EvalOptions::default(),
            preset: "200K".into(),
            validation_size: 2000,
        }
    }

    /// Checks that every input the requested stages need is configured and
    /// exists.
    pub fn validate(&self, stages: &BTreeSet<StageName>) -> Result<(), PipelineError> {
        let need = |what: &str, p: &Option<PathBuf>| -> Result<(), PipelineError> {
            match p {
                None => Err(PipelineError::Config(format!("{what} is required"))),
                Some(p) if !p.exists() => Err(PipelineError::Config(format!(
                    "{what} {} does not exist",
                    p.display()
                ))),
                Some(_) => Ok(()),
            }
        };
        let optional = |what: &str, p: &Option<PathBuf>| match p {
            Some(p) if !p.exists() => Err(PipelineError::Config(format!(
                "{what} {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        };
        if !stages.is_empty() {
            need("NI task directory", &self.ni_dir)?;
        }
        optional("filter policy", &self.filter_policy)?;
        optional("allowlist", &self.allowlist)?;
        optional("exact-match bucket scheme", &self.em_scheme)?;
        optional("generation bucket scheme", &self.gen_scheme)?;
        if stages.contains(&StageName::Score) {
            need("category map", &self.category_map)?;
            self.endpoint.validate().map_err(PipelineError::Config)?;
        }
        if stages.contains(&StageName::Sample) || stages.contains(&StageName::Assemble) {
            MixtureSpec::preset(&self.preset, self.master_seed)?;
        }
        if stages.contains(&StageName::Assemble) {
            need("sources file", &self.sources)?;
        }
        if self.eval.max_instances == 0 {
            return Err(PipelineError::Config("max_instances must be >= 1".into()));
        }
        Ok(())
    }

    fn stage_seed(&self, label: &str) -> u64 {
        derive_seed(self.master_seed, &[label])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub artifacts: Vec<ArtifactDigest>,
}

/// Index of every artifact in a run directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub stages: BTreeMap<StageName, StageRecord>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(run_dir.join(RUN_MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: StageName,
    pub status: StageStatus,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub outcomes: Vec<StageOutcome>,
    pub files_written: usize,
    pub manifest: RunManifest,
}

/// Hashes stage parameters and input files into a fingerprint.
struct Fingerprint {
    parts: Vec<String>,
}

impl Fingerprint {
    fn new(stage: StageName, params: serde_json::Value) -> Self {
        Self {
            parts: vec![stage.to_string(), params.to_string()],
        }
    }

    fn file(&mut self, label: &str, path: &Path) -> Result<(), PipelineError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        self.parts.push(format!("{label}={}", sha256_hex(&bytes)));
        Ok(())
    }

    fn optional_file(&mut self, label: &str, path: Option<&Path>) -> Result<(), PipelineError> {
        match path {
            Some(p) => self.file(label, p),
            None => {
                self.parts.push(format!("{label}=none"));
                Ok(())
            }
        }
    }

    fn dir(&mut self, label: &str, dir: &Path) -> Result<(), PipelineError> {
        let mut names: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        names.sort();
        for p in names {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            self.file(&format!("{label}/{name}"), &p)?;
        }
        Ok(())
    }

    fn finish(&self) -> String {
        sha256_hex(self.parts.join("\n").as_bytes())
    }
}

/// Files a stage wants written, relative to the run directory.
type Outputs = Vec<(String, Vec<u8>)>;

struct Runner<'a, T> {
    cfg: &'a RunConfig,
    transport: Option<T>,
    manifest: RunManifest,
    files_written: usize,
    corpus: Option<Vec<TaskDefinition>>,
}

impl<T: CompletionTransport> Runner<'_, T> {
    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.run_dir.join(rel)
    }

    fn require(&self, rel: &str, stage: StageName) -> Result<PathBuf, PipelineError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact { path: p, stage })
        }
    }

    fn corpus(&mut self) -> Result<&[TaskDefinition], PipelineError> {
        if self.corpus.is_none() {
            let dir = self.cfg.ni_dir.as_ref().ok_or_else(|| {
                PipelineError::Config("NI task directory is required".into())
            })?;
            self.corpus = Some(load_ni_corpus(dir)?);
        }
        Ok(self.corpus.as_deref().unwrap_or_default())
    }

    fn up_to_date(&self, stage: StageName, fingerprint: &str) -> bool {
        let Some(rec) = self.manifest.stages.get(&stage) else {
            return false;
        };
        rec.fingerprint == fingerprint
            && rec.artifacts.iter().all(|a| {
                fs::read(self.path(&a.path)).is_ok_and(|bytes| sha256_hex(&bytes) == a.sha256)
            })
    }

    fn commit(&mut self, stage: StageName, fingerprint: String, outputs: Outputs) -> Result<StageOutcome, PipelineError> {
        let mut artifacts = Vec::new();
        for (rel, bytes) in &outputs {
            let path = self.path(rel);
            let unchanged = fs::read(&path).is_ok_and(|old| old == *bytes);
            if !unchanged {
                write_atomic(&path, bytes).map_err(io_err(&path))?;
                self.files_written += 1;
            }
            artifacts.push(ArtifactDigest {
                path: rel.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        self.manifest.stages.insert(
            stage,
            StageRecord {
                fingerprint,
                artifacts,
            },
        );
        Ok(StageOutcome {
            stage,
            status: StageStatus::Ran,
            artifacts: outputs.into_iter().map(|(rel, _)| rel).collect(),
        })
    }

    fn filter_fingerprint(&self) -> Result<Fingerprint, PipelineError> {
        let mut fp = Fingerprint::new(StageName::Filter, json!({}));
        fp.dir("ni", self.cfg.ni_dir.as_deref().unwrap_or(Path::new(".")))?;
        fp.optional_file("policy", self.cfg.filter_policy.as_deref())?;
        fp.optional_file("allowlist", self.cfg.allowlist.as_deref())?;
        Ok(fp)
    }

    fn policy(&self) -> Result<FilterPolicy, PipelineError> {
        let mut policy = match &self.cfg.filter_policy {
            Some(p) => FilterPolicy::load(p)?,
            None => FilterPolicy::default(),
        };
        if let Some(list) = &self.cfg.allowlist {
            policy.explicit_allowlist = Some(load_allowlist(list)?);
        }
        Ok(policy)
    }

    fn run_filter(&mut self) -> Result<(String, Outputs), PipelineError> {
        let fp = self.filter_fingerprint()?.finish();
        if self.up_to_date(StageName::Filter, &fp) {
            return Ok((fp, Vec::new()));
        }
        let policy = self.policy()?;
        let outcome = apply_filter_policy(self.corpus()?.to_vec(), &policy);
        let selected: String = outcome
            .selected
            .iter()
            .map(|t| format!("{}\n", t.task_id))
            .collect();
        let rejected = to_jsonl(&outcome.rejected).expect("rejections serialize");
        tracing::info!(
            selected = outcome.selected.len(),
            rejected = outcome.rejected.len(),
            "filter stage"
        );
        Ok((
            fp,
            vec![
                ("filter/selected.txt".into(), selected.into_bytes()),
                ("filter/rejected.jsonl".into(), rejected),
            ],
        ))
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.cfg.stage_seed("score"),
            ..self.cfg.eval.clone()
        }
    }

    fn endpoint_params(&self) -> serde_json::Value {
        let e = &self.cfg.endpoint;
        json!({
            "model": e.model,
            "max_tokens": e.max_tokens,
            "temperature": e.temperature,
            "stop": e.stop_sequences,
        })
    }

    fn selected_tasks(&mut self) -> Result<Vec<TaskDefinition>, PipelineError> {
        let path = self.require("filter/selected.txt", StageName::Filter)?;
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let wanted: BTreeSet<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        let tasks: Vec<TaskDefinition> = self
            .corpus()?
            .iter()
            .filter(|t| wanted.contains(t.task_id.as_str()))
            .cloned()
            .collect();
        if tasks.len() != wanted.len() {
            return Err(PipelineError::Config(
                "filter/selected.txt names tasks missing from the NI directory; rerun `filter`".into(),
            ));
        }
        Ok(tasks)
    }

    fn run_score(&mut self) -> Result<(String, Outputs), PipelineError> {
        let selected_path = self.require("filter/selected.txt", StageName::Filter)?;
        let opts = self.eval_options();
        let mut fp = Fingerprint::new(
            StageName::Score,
            json!({"eval": opts, "endpoint": self.endpoint_params()}),
        );
        fp.file("selected", &selected_path)?;
        fp.dir("ni", self.cfg.ni_dir.as_deref().unwrap_or(Path::new(".")))?;
        fp.optional_file("category_map", self.cfg.category_map.as_deref())?;
        let fp = fp.finish();
        if self.up_to_date(StageName::Score, &fp) {
            return Ok((fp, Vec::new()));
        }

        let map_path = self
            .cfg
            .category_map
            .as_ref()
            .ok_or_else(|| PipelineError::Config("category map is required".into()))?;
        let map = CategoryMap::load(map_path)?;
        let selected = self.selected_tasks()?;
        let (em, gen) = categorize_tasks(selected, &map)?;
        let mut work: Vec<(&TaskDefinition, corpus::TaskKind)> = em
            .iter()
            .map(|t| (t, corpus::TaskKind::ExactMatch))
            .chain(gen.iter().map(|t| (t, corpus::TaskKind::Generation)))
            .collect();
        work.sort_by(|a, b| a.0.task_id.cmp(&b.0.task_id));

        let transport = match self.transport.take() {
            Some(t) => Box::new(t) as Box<dyn CompletionTransport>,
            None => Box::new(
                HttpTransport::new(&self.cfg.endpoint)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
        };
        let client = CompletionClient::new(transport, self.cfg.endpoint.clone());
        let (reports, failures) = evaluate_tasks(&work, &client, &opts);
        tracing::info!(scored = reports.len(), failed = failures.len(), "score stage");
        let summary = to_jsonl(&summarize_reports(&reports)).expect("summary serializes");
        Ok((
            fp,
            vec![
                ("score/reports.jsonl".into(), write_reports(&reports)),
                ("score/failures.jsonl".into(), to_jsonl(&failures).expect("failures serialize")),
                ("score/summary.jsonl".into(), summary),
            ],
        ))
    }

    fn schemes(&self) -> Result<(BucketScheme, BucketScheme), PipelineError> {
        let load = |p: &Option<PathBuf>, default: BucketScheme| -> Result<BucketScheme, PipelineError> {
            match p {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(io_err(p))?;
                    Ok(BucketScheme::from_toml_str(&text)?)
                }
                None => Ok(default),
            }
        };
        Ok((
            load(&self.cfg.em_scheme, BucketScheme::exact_match_default())?,
            load(&self.cfg.gen_scheme, BucketScheme::generation_default())?,
        ))
    }

    fn run_sample(&mut self) -> Result<(String, Outputs), PipelineError> {
        let reports_path = self.require("score/reports.jsonl", StageName::Score)?;
        let (em_scheme, gen_scheme) = self.schemes()?;
        let spec = MixtureSpec::preset(&self.cfg.preset, self.cfg.master_seed)?;
        let em_target = spec.quotas[&MixtureComponent::NiExactMatch];
        let gen_target = spec.quotas[&MixtureComponent::NiGeneration];
        let em_seed = self.cfg.stage_seed("ni-em");
        let gen_seed = self.cfg.stage_seed("ni-gen");
        let mut fp = Fingerprint::new(
            StageName::Sample,
            json!({
                "em_scheme": em_scheme, "gen_scheme": gen_scheme,
                "em_target": em_target, "gen_target": gen_target,
                "em_seed": em_seed, "gen_seed": gen_seed,
            }),
        );
        fp.file("reports", &reports_path)?;
        fp.dir("ni", self.cfg.ni_dir.as_deref().unwrap_or(Path::new(".")))?;
        let fp = fp.finish();
        if self.up_to_date(StageName::Sample, &fp) {
            return Ok((fp, Vec::new()));
        }

        let reports = read_reports(&reports_path).map_err(io_err(&reports_path))?;
        let instances: BTreeMap<String, Vec<String>> = self
            .corpus()?
            .iter()
            .map(|t| (t.task_id.clone(), t.instances.iter().map(|i| i.id.clone()).collect()))
            .collect();
        let em_buckets = bucket_em_tasks(&reports, &em_scheme);
        let gen_buckets = bucket_generation_examples(&reports, &gen_scheme);
        let em = sample_em_pool(&em_buckets, &instances, &em_scheme, em_target, em_seed)?;
        let gen = sample_generation_pool(&gen_buckets, &gen_scheme, gen_target, gen_seed)?;
        tracing::info!(em = em.selected.len(), gen = gen.selected.len(), "sample stage");
        let plan = json!({
            "em": {
                "plan": em.plan, "shortfall": em.shortfall,
                "dropped_tasks": em_buckets.dropped, "scheme": em_scheme,
            },
            "gen": {
                "plan": gen.plan, "shortfall": gen.shortfall,
                "dropped_examples": gen_buckets.dropped, "scheme": gen_scheme,
            },
        });
        let mut plan_bytes = serde_json::to_vec_pretty(&plan).expect("plan serializes");
        plan_bytes.push(b'\n');
        Ok((
            fp,
            vec![
                ("sample/em_pool.jsonl".into(), to_jsonl(&em.selected).expect("pool serializes")),
                ("sample/gen_pool.jsonl".into(), to_jsonl(&gen.selected).expect("pool serializes")),
                ("sample/plan.json".into(), plan_bytes),
            ],
        ))
    }

    fn ni_records(&mut self, pool_path: &Path) -> Result<Vec<InstructionRecord>, PipelineError> {
        let text = fs::read_to_string(pool_path).map_err(io_err(pool_path))?;
        let refs: Vec<ExampleRef> = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Config(format!("{}: {e}", pool_path.display())))?;
        let by_id: BTreeMap<&str, &TaskDefinition> =
            self.corpus()?.iter().map(|t| (t.task_id.as_str(), t)).collect();
        refs.iter()
            .map(|r| {
                let task = by_id.get(r.task_id.as_str()).ok_or_else(|| {
                    PipelineError::Config(format!("pool names unknown task {}", r.task_id))
                })?;
                let inst = task.instance(&r.instance_id).ok_or_else(|| {
                    PipelineError::Config(format!("pool names unknown instance {}", r.instance_id))
                })?;
                Ok(InstructionRecord::new(
                    task.definition_text(),
                    inst.input.clone(),
                    inst.output[0].clone(),
                    Source::Ni,
                    format!("{}/{}", r.task_id, r.instance_id),
                ))
            })
            .collect()
    }

    fn run_assemble(&mut self) -> Result<(String, Outputs), PipelineError> {
        let em_path = self.require("sample/em_pool.jsonl", StageName::Sample)?;
        let gen_path = self.require("sample/gen_pool.jsonl", StageName::Sample)?;
        let sources_path = self
            .cfg
            .sources
            .clone()
            .ok_or_else(|| PipelineError::Config("sources file is required".into()))?;
        let sources_file = SourcesFile::load(&sources_path)?;
        let spec = MixtureSpec::preset(&self.cfg.preset, self.cfg.master_seed)?;
        let (em_scheme, gen_scheme) = self.schemes()?;
        let parameters = json!({
            "eval": self.eval_options(),
            "endpoint": self.endpoint_params(),
            "em_scheme": em_scheme,
            "gen_scheme": gen_scheme,
            "filter_policy": self.policy()?,
            "preset": spec.name,
        });
        let mut fp = Fingerprint::new(
            StageName::Assemble,
            json!({"parameters": parameters, "validation_size": self.cfg.validation_size, "spec": spec}),
        );
        fp.file("em_pool", &em_path)?;
        fp.file("gen_pool", &gen_path)?;
        fp.file("sources", &sources_path)?;
        for entry in &sources_file.sources {
            fp.file(entry.component.as_str(), &entry.path)?;
        }
        fp.dir("ni", self.cfg.ni_dir.as_deref().unwrap_or(Path::new(".")))?;
        let fp = fp.finish();
        if self.up_to_date(StageName::Assemble, &fp) {
            return Ok((fp, Vec::new()));
        }

        let mut streams: BTreeMap<MixtureComponent, Vec<InstructionRecord>> = BTreeMap::new();
        for entry in &sources_file.sources {
            let mapping = FieldMapping {
                instruction: entry.instruction.clone(),
                input: entry.input.clone(),
                output: entry.output.clone(),
            };
            let loaded = load_instruction_file(&entry.path, entry.component.source(), &mapping)?;
            if loaded.dropped_empty_output > 0 {
                tracing::info!(component = %entry.component, dropped = loaded.dropped_empty_output, "empty outputs dropped");
            }
            streams.entry(entry.component).or_default().extend(loaded.records);
        }
        streams.insert(MixtureComponent::NiExactMatch, self.ni_records(&em_path)?);
        streams.insert(MixtureComponent::NiGeneration, self.ni_records(&gen_path)?);

        // Built in a scratch directory, then handed to `commit` as bytes so
        // unchanged files are left alone.
        let scratch = self.path(".assemble.tmp");
        if scratch.exists() {
            fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
        }
        let opts = BuildOptions {
            validation_size: self.cfg.validation_size,
            parameters,
        };
        let manifest = assembler::build_dataset(&spec, &streams, &opts, &scratch);
        let mut outputs = Vec::new();
        if manifest.is_ok() {
            for name in [
                assembler::TRAIN_FILE,
                assembler::VALIDATION_FILE,
                assembler::TRAINING_CONFIG_FILE,
                assembler::MANIFEST_FILE,
            ] {
                let p = scratch.join(name);
                outputs.push((format!("assemble/{name}"), fs::read(&p).map_err(io_err(&p))?));
            }
        }
        fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
        manifest?;
        Ok((fp, outputs))
    }
}

/// Runs the requested stages over HTTP.
pub fn run_pipeline(cfg: &RunConfig, stages: &BTreeSet<StageName>) -> Result<PipelineReport, PipelineError> {
    run_pipeline_with::<HttpTransport>(cfg, stages, None)
}

/// Runs the requested stages in canonical order, scoring through
/// `transport` when given.
pub fn run_pipeline_with<T: CompletionTransport + 'static>(
    cfg: &RunConfig,
    stages: &BTreeSet<StageName>,
    transport: Option<T>,
) -> Result<PipelineReport, PipelineError> {
    cfg.validate(stages)?;
    fs::create_dir_all(&cfg.run_dir).map_err(io_err(&cfg.run_dir))?;
    let previous = RunManifest::load(&cfg.run_dir);
    let manifest = previous
        .clone()
        .filter(|m| m.master_seed == cfg.master_seed)
        .unwrap_or_else(|| RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: cfg.master_seed,
            stages: BTreeMap::new(),
        });
    let mut runner = Runner {
        cfg,
        transport,
        manifest,
        files_written: 0,
        corpus: None,
    };

    let mut outcomes = Vec::new();
    for stage in StageName::ALL.into_iter().filter(|s| stages.contains(s)) {
        let (fp, outputs) = match stage {
            StageName::Filter => runner.run_filter()?,
            StageName::Score => runner.run_score()?,
            StageName::Sample => runner.run_sample()?,
            StageName::Assemble => runner.run_assemble()?,
        };
        let outcome = if outputs.is_empty() && runner.up_to_date(stage, &fp) {
            tracing::info!(%stage, "up to date");
            StageOutcome {
                stage,
                status: StageStatus::Skipped,
                artifacts: runner.manifest.stages[&stage]
                    .artifacts
                    .iter()
                    .map(|a| a.path.clone())
                    .collect(),
            }
        } else {
            runner.commit(stage, fp, outputs)?
        };
        outcomes.push(outcome);
    }

    if previous.as_ref() != Some(&runner.manifest) {
        let path = cfg.run_dir.join(RUN_MANIFEST_FILE);
        write_atomic(&path, runner.manifest.to_json().as_bytes()).map_err(io_err(&path))?;
        runner.files_written += 1;
    }
    Ok(PipelineReport {
        outcomes,
        files_written: runner.files_written,
        manifest: runner.manifest,
    })
}
