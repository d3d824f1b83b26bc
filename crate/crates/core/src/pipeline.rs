//! Stage runners shared by the command-line tool: each reads its inputs from
//! disk and writes JSON/JSONL artifacts under the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curate::{
    self, CorpusStats, CurateError, DroppedDuplicate, Part, RejectionLogEntry, SplitAssignment,
};
use crate::dataset::{self, DatasetError, DatasetRecord};
use crate::extract::{self, ExtractionReport, PragmaLoopPair};
use crate::ingest::{self, IngestError, RemoteConfig, SnapshotManifest, SnapshotStore};
use crate::mcu::{self, CompileReport, CompilerConfig, McuError};
use crate::metrics::{self, EvalReport, Generated, MetricsError};
use crate::pragma::{self, Pragma};
use crate::report::{self, PipelineCounts, ReportData};
use crate::taxonomy::{self, TaxonomyReport};

pub const PAIRS_FILE: &str = "pairs.json";
pub const CURATED_FILE: &str = "curated.json";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const PROMPTS_FILE: &str = "test_prompts.jsonl";
pub const FORMAT_FILE: &str = "format.json";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_MD: &str = "eval.md";
pub const TAXONOMY_FILE: &str = "taxonomy.json";
pub const TAXONOMY_MD: &str = "taxonomy.md";
pub const OUTCOMES_FILE: &str = "mcu_outcomes.jsonl";
pub const COMPILE_FILE: &str = "compile_report.json";
pub const MCU_DIR: &str = "mcus";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Curate(#[from] CurateError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Mcu(#[from] McuError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("nothing to report in {0}")]
    NothingToReport(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
    /// Name of the shuffle generator; only `chacha8` is available.
    pub rng: String,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: curate::DEFAULT_RATIO,
            seed: curate::DEFAULT_SEED,
            rng: curate::SPLIT_RNG.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub extensions: Vec<String>,
    pub split: SplitConfig,
    pub compiler: CompilerConfig,
    pub system_prompt: Option<PathBuf>,
    pub remote: RemoteConfig,
    pub page_limit: usize,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
    /// Row label used for evaluated generations in reports.
    pub label: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            snapshots: None,
            out: None,
            extensions: ingest::DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            split: SplitConfig::default(),
            compiler: CompilerConfig::default(),
            system_prompt: None,
            remote: RemoteConfig::default(),
            page_limit: 1,
            jobs: 0,
            label: "model".into(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn jobs(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn system_prompt_text(&self) -> Result<String, PipelineError> {
        Ok(match &self.system_prompt {
            Some(p) => dataset::load_system_prompt(p)?,
            None => dataset::default_system_prompt(),
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.split.rng != curate::SPLIT_RNG {
            return Err(PipelineError::Invalid(format!(
                "unsupported split rng {:?}; expected {:?}",
                self.split.rng,
                curate::SPLIT_RNG
            )));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(CurateError::InvalidRatio(self.split.ratio).into());
        }
        self.compiler.validate()?;
        Ok(())
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    fn ensure_out(&self) -> Result<PathBuf, PipelineError> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Records what produced an artifact. The output location is left out so
/// that identical runs into different directories stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

fn digest_file(path: &Path) -> Result<InputDigest, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(InputDigest {
        name: path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn provenance(cfg: &PipelineConfig, stage: &str, inputs: &[&Path]) -> Result<Provenance, PipelineError> {
    let mut config = cfg.clone();
    config.out = None;
    config.compiler.work_dir = None;
    Ok(Provenance {
        tool: "accmine".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        stage: stage.into(),
        config,
        inputs: inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| digest_file(p))
            .collect::<Result<_, _>>()?,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_artifact<T: Serialize>(
    cfg: &PipelineConfig,
    name: &str,
    stage: &str,
    inputs: &[&Path],
    data: &T,
) -> Result<PathBuf, PipelineError> {
    let path = cfg.out_path(name);
    let artifact = Artifact {
        provenance: provenance(cfg, stage, inputs)?,
        data,
    };
    write_json(&path, &artifact)?;
    Ok(path)
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    Ok(read_json::<Artifact<T>>(path)?.data)
}

// ------------------------------------------------------------------ stages

/// Remote code search into a snapshot store.
pub fn mine(cfg: &PipelineConfig) -> Result<SnapshotManifest, PipelineError> {
    let token = cfg.remote.resolve_token().unwrap_or_default();
    let files = ingest::search_remote(&ingest::default_queries(), &cfg.remote, &token, cfg.page_limit)?;
    let dir = match &cfg.snapshots {
        Some(d) => d.clone(),
        None => cfg.ensure_out()?.join(SNAPSHOT_DIR),
    };
    Ok(SnapshotStore::new(dir).save(&files)?)
}

/// Source files from a snapshot store or a plain directory tree.
pub fn load_sources(input: &Path, cfg: &PipelineConfig) -> Result<Vec<ingest::SourceFile>, PipelineError> {
    if SnapshotStore::is_snapshot(input) {
        return Ok(SnapshotStore::new(input).load()?);
    }
    let found = ingest::ingest_directory(input, &ingest::extension_set(&cfg.extensions))?;
    if found.skipped > 0 {
        log::warn!("{} unreadable files skipped under {}", found.skipped, input.display());
    }
    Ok(found.files)
}

pub fn extract(cfg: &PipelineConfig, input: &Path) -> Result<ExtractionReport, PipelineError> {
    let files = load_sources(input, cfg)?;
    let report = extract::corpus_extract(&files);
    cfg.ensure_out()?;
    write_artifact(cfg, PAIRS_FILE, "extract", &[], &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curated {
    pub counts: PipelineCounts,
    pub stats: CorpusStats,
    pub dropped_duplicates: Vec<DroppedDuplicate>,
    pub duplicate_group_sizes: Vec<usize>,
    pub pairs: Vec<PragmaLoopPair>,
}

pub fn curate(cfg: &PipelineConfig, pairs_path: &Path) -> Result<Curated, PipelineError> {
    let extracted: ExtractionReport = read_artifact(pairs_path)?;
    let n = extracted.pairs.len();
    let filtered = curate::filter_pairs(extracted.pairs);
    let rejections = filtered.counts();
    let log: Vec<RejectionLogEntry> = filtered.rejected.iter().map(RejectionLogEntry::from).collect();
    let after_filter = filtered.kept.len();
    let dedup = curate::deduplicate(filtered.kept);
    let curated = Curated {
        counts: PipelineCounts {
            files: extracted.totals.files,
            pragma_instances: extracted.totals.pragma_instances,
            extracted: n,
            after_filter,
            after_dedup: dedup.kept.len(),
            rejections,
            ..PipelineCounts::default()
        },
        stats: curate::corpus_stats(&dedup.kept),
        dropped_duplicates: dedup.dropped,
        duplicate_group_sizes: dedup.group_sizes,
        pairs: dedup.kept,
    };
    cfg.ensure_out()?;
    let rej = cfg.out_path(REJECTIONS_FILE);
    dataset::write_jsonl(&rej, &log)?;
    write_artifact(cfg, CURATED_FILE, "curate", &[pairs_path], &curated)?;
    Ok(curated)
}

pub fn split(cfg: &PipelineConfig, curated_path: &Path) -> Result<SplitAssignment, PipelineError> {
    cfg.validate()?;
    let curated: Curated = read_artifact(curated_path)?;
    let assignment = curate::split(&curated.pairs, cfg.split.ratio, cfg.split.seed)?;
    cfg.ensure_out()?;
    write_artifact(cfg, SPLIT_FILE, "split", &[curated_path], &assignment)?;
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSummary {
    pub train: usize,
    pub test: usize,
}

pub fn format(cfg: &PipelineConfig, curated_path: &Path, split_path: &Path) -> Result<FormatSummary, PipelineError> {
    let curated: Curated = read_artifact(curated_path)?;
    let assignment: SplitAssignment = read_artifact(split_path)?;
    let system = cfg.system_prompt_text()?;
    let (mut train, mut test, mut prompts) = (Vec::new(), Vec::new(), Vec::new());
    for p in &curated.pairs {
        let rec = DatasetRecord::training(p.id.clone(), &system, &p.loop_text, &p.pragma.canonical);
        match assignment.assignments.get(&p.id) {
            Some(Part::Train) => train.push(rec),
            Some(Part::Test) => {
                prompts.push(rec.without_assistant());
                test.push(rec);
            }
            None => {
                return Err(PipelineError::Invalid(format!("pair {} has no split assignment", p.id)));
            }
        }
    }
    for recs in [&mut train, &mut test, &mut prompts] {
        recs.sort_by(|a, b| a.id.cmp(&b.id));
    }
    cfg.ensure_out()?;
    dataset::write_dataset(&cfg.out_path(TRAIN_FILE), &train)?;
    dataset::write_dataset(&cfg.out_path(TEST_FILE), &test)?;
    dataset::write_dataset(&cfg.out_path(PROMPTS_FILE), &prompts)?;
    let summary = FormatSummary {
        train: train.len(),
        test: test.len(),
    };
    write_artifact(cfg, FORMAT_FILE, "format", &[curated_path, split_path], &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub label: String,
    pub report: EvalReport,
}

pub fn evaluate(cfg: &PipelineConfig, refs_path: &Path, gens_path: &Path) -> Result<EvalReport, PipelineError> {
    let refs = dataset::read_dataset(refs_path)?;
    let gens = dataset::read_generations(gens_path)?;
    let report = metrics::evaluate_corpus(&refs, &gens)?;
    cfg.ensure_out()?;
    let evaluation = Evaluation {
        label: cfg.label.clone(),
        report,
    };
    write_artifact(cfg, EVAL_FILE, "evaluate", &[refs_path, gens_path], &evaluation)?;
    let mut md = String::new();
    report::render_eval(&mut md, &cfg.label, &evaluation.report);
    std::fs::write(cfg.out_path(EVAL_MD), md).map_err(io_err(&cfg.out_path(EVAL_MD)))?;
    Ok(evaluation.report)
}

pub fn taxonomy(cfg: &PipelineConfig, eval_path: &Path) -> Result<TaxonomyReport, PipelineError> {
    let evaluation: Evaluation = read_artifact(eval_path)?;
    let t = taxonomy::taxonomy_report(&evaluation.report.records);
    cfg.ensure_out()?;
    write_artifact(cfg, TAXONOMY_FILE, "taxonomy", &[eval_path], &t)?;
    let mut md = String::new();
    report::render_taxonomy(&mut md, &evaluation.label, &t);
    std::fs::write(cfg.out_path(TAXONOMY_MD), md).map_err(io_err(&cfg.out_path(TAXONOMY_MD)))?;
    Ok(t)
}

/// Compile matrix over the test records. MCUs come from `mcus_dir` when
/// present there, otherwise they are synthesized from the curated pairs.
pub fn mcu(
    cfg: &PipelineConfig,
    refs_path: &Path,
    curated_path: &Path,
    gens_path: Option<&Path>,
    mcus_dir: Option<&Path>,
) -> Result<CompileReport, PipelineError> {
    let refs = dataset::read_dataset(refs_path)?;
    let curated: Curated = read_artifact(curated_path)?;
    let wanted: BTreeSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    let pairs: Vec<PragmaLoopPair> = curated
        .pairs
        .into_iter()
        .filter(|p| wanted.contains(p.id.as_str()))
        .collect();
    let mut reference: BTreeMap<String, Pragma> = BTreeMap::new();
    for r in &refs {
        if let Some(label) = r.assistant_content() {
            let p = pragma::parse_pragma(label).map_err(|e| MetricsError::InvalidReference {
                id: r.id.clone(),
                reason: e.to_string(),
            })?;
            reference.insert(r.id.clone(), p);
        }
    }
    let generated: BTreeMap<String, Generated> = match gens_path {
        Some(p) => dataset::read_generations(p)?
            .iter()
            .map(|g| (g.id.clone(), Generated::from_record(g)))
            .collect(),
        None => BTreeMap::new(),
    };
    let imported = match mcus_dir {
        Some(d) => mcu::load_mcus(d)?,
        None => Vec::new(),
    };
    let mcus = mcu::resolve_mcus(&pairs, imported);

    let out = cfg.ensure_out()?;
    let dir = out.join(MCU_DIR);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for m in &mcus {
        let path = dir.join(format!("{}.{}", m.id, m.lang.extension()));
        std::fs::write(&path, &m.source).map_err(io_err(&path))?;
    }
    let outcomes = mcu::run_compile_matrix(&mcus, &reference, &generated, &cfg.compiler, cfg.jobs())?;
    dataset::write_jsonl(&cfg.out_path(OUTCOMES_FILE), &outcomes)?;
    let report = mcu::compile_report(&outcomes, cfg.compiler.version());
    let mut inputs: Vec<&Path> = vec![refs_path, curated_path];
    inputs.extend(gens_path);
    write_artifact(cfg, COMPILE_FILE, "mcu", &inputs, &report)?;
    Ok(report)
}

/// Collect whatever stage artifacts exist in `dir`.
pub fn gather(dir: &Path) -> Result<ReportData, PipelineError> {
    let load = |name: &str| {
        let p = dir.join(name);
        p.is_file().then_some(p)
    };
    let mut data = ReportData::default();
    if let Some(p) = load(CURATED_FILE) {
        let curated: Curated = read_artifact(&p)?;
        let mut counts = curated.counts;
        if let Some(sp) = load(SPLIT_FILE) {
            let split: SplitAssignment = read_artifact(&sp)?;
            counts.train = Some(split.count(Part::Train));
            counts.test = Some(split.count(Part::Test));
            counts.ratio = Some(split.ratio);
        }
        data.counts = Some(counts);
        data.stats = Some(curated.stats);
    }
    if let Some(p) = load(EVAL_FILE) {
        let evaluation: Evaluation = read_artifact(&p)?;
        data.label = Some(evaluation.label);
        data.eval = Some(evaluation.report);
    }
    if let Some(p) = load(TAXONOMY_FILE) {
        data.taxonomy = Some(read_artifact(&p)?);
    }
    if let Some(p) = load(COMPILE_FILE) {
        data.compile = Some(read_artifact(&p)?);
    }
    Ok(data)
}

pub fn report(cfg: &PipelineConfig, dir: &Path) -> Result<ReportData, PipelineError> {
    let data = gather(dir)?;
    if data.is_empty() {
        return Err(PipelineError::NothingToReport(dir.to_path_buf()));
    }
    cfg.ensure_out()?;
    std::fs::write(cfg.out_path(REPORT_MD), report::render_markdown(&data))
        .map_err(io_err(&cfg.out_path(REPORT_MD)))?;
    write_json(&cfg.out_path(REPORT_JSON), &data)?;
    Ok(data)
}
