//! The `partisan-lens` command line.
//!
//! Each subcommand reads a [`RunConfig`] (JSON, via `--config`) with
//! individual flags layered on top, writes its artifacts under the output
//! directory together with a manifest, and prints a JSON summary on stdout.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error, 3 partial
//! annotation (some instances skipped).

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{
    annotate_stances, load_annotations, merge_annotations, AnnotateError, AnnotationSink,
    AnnotationStore, ChatClient,
};
use crate::corpus::{load_corpus, ClassRegistry, CorpusError};
use crate::instruction_builder::{
    build_probe_prompts, build_tuning_set, compute_entity_stats, load_issue_presets, preset_issues,
    write_probe_prompts, write_tuning_set, IssuePreset,
};
use crate::issue_tagger::{
    extract_distinctive_terms, load_lexicons, preset_lexicons, tag_issues, IssueLexicon, TagPolicy,
    TermOptions,
};
use crate::metrics::KldOptions;
use crate::report::{export_distributions, render_all_tables, ResultsBundle};
use crate::study::{
    evaluate, read_results, write_results, AnnotatedCorpus, DatasetData, EvalOptions, KldDirection,
    MethodData,
};

pub use config::{
    CorpusConfig, DatasetConfig, MethodConfig, MetricsConfig, ReportConfig, ReportFormat,
    RunConfig, StudyConfig, TermsConfig,
};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn corpus_err(e: CorpusError) -> CliError {
    match e {
        CorpusError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
            runtime(e)
        }
        e => invalid(e),
    }
}

fn parse_policy(s: &str) -> Result<TagPolicy, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown policy {s:?} (expected best_single or all_matching)"))
}

#[derive(Debug, Parser)]
#[command(
    name = "partisan-lens",
    version,
    about = "Partisan alignment analysis of generated text"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run config; relative paths inside it resolve against its directory
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts and manifests [default: out]
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for every sampling step; required by build-tuning-set and build-probes
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Additive smoothing for KL divergence [default: 1e-6]
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Merge each moral-foundation virtue/vice pair into one class [default: off]
    #[arg(long, global = true)]
    pub mf_collapse: bool,
    /// KL direction: gen-vs-real is D(generated || real) [default: gen-vs-real]
    #[arg(long, global = true, value_parser = ["gen-vs-real", "real-vs-gen"])]
    pub kld_direction: Option<String>,
    /// Chat-completions URL [default: https://api.openai.com/v1/chat/completions, or ANNOTATOR_ENDPOINT]
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Concurrent annotation requests [default: 4]
    #[arg(long, global = true)]
    pub max_inflight: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate corpora and write them back normalized
    Ingest {
        /// Corpus JSONL files [default: config "corpora"]
        inputs: Vec<PathBuf>,
    },
    /// Assign issue topics by lexicon matching
    TagIssues {
        inputs: Vec<PathBuf>,
        /// Lexicon file or preset:covid|abortion|congress (repeatable)
        #[arg(long = "lexicon")]
        lexicons: Vec<String>,
        /// best_single or all_matching [default: best_single]
        #[arg(long, value_parser = parse_policy)]
        policy: Option<TagPolicy>,
    },
    /// Rank the terms that separate a foreground corpus from a background one
    ExtractTerms {
        #[arg(long)]
        foreground: Option<PathBuf>,
        #[arg(long)]
        background: Option<PathBuf>,
        /// Also write a lexicon for this issue from the top terms
        #[arg(long)]
        issue: Option<String>,
        /// [default: 50]
        #[arg(long)]
        top_k: Option<usize>,
        /// Longest n-gram scored, 1 to 3 [default: 1]
        #[arg(long)]
        max_ngram: Option<usize>,
    },
    /// Build instruction-tuning JSONL from real corpora
    BuildTuningSet { inputs: Vec<PathBuf> },
    /// Build ideology-conditioned probe prompts for each issue
    BuildProbes {
        /// Issue file or preset:covid|abortion|congress (repeatable)
        #[arg(long = "issues")]
        issues: Vec<String>,
        /// Prompts per issue, ideology and repeat [default: 100]
        #[arg(long)]
        per_issue: Option<u32>,
        /// [default: 10]
        #[arg(long)]
        repeats: Option<u32>,
    },
    /// Annotate stance toward each topic's target through a chat endpoint
    AnnotateStance {
        inputs: Vec<PathBuf>,
        /// Issue file or preset supplying stance targets (repeatable)
        #[arg(long = "issues")]
        issues: Vec<String>,
        /// Existing annotation JSONL to resume from (repeatable)
        #[arg(long = "annotations")]
        annotations: Vec<PathBuf>,
    },
    /// Write class distributions for every study cell
    Distributions,
    /// Compute divergence and tendency results for the study
    Evaluate,
    /// Render result tables
    Report {
        /// Results JSONL [default: <output-dir>/results.jsonl]
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::TagIssues { .. } => "tag-issues",
            Command::ExtractTerms { .. } => "extract-terms",
            Command::BuildTuningSet { .. } => "build-tuning-set",
            Command::BuildProbes { .. } => "build-probes",
            Command::AnnotateStance { .. } => "annotate-stance",
            Command::Distributions => "distributions",
            Command::Evaluate => "evaluate",
            Command::Report { .. } => "report",
        }
    }
}

/// Resolves the effective config: file, then environment, then flags.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cfg.endpoint.token.is_some() {
        return Err(invalid(
            "endpoint tokens are read from ANNOTATOR_TOKEN only, not from the config file",
        ));
    }
    cfg.endpoint = cfg.endpoint.with_env();

    if let Some(d) = &global.output_dir {
        cfg.output_dir = d.clone();
    }
    if global.seed.is_some() {
        cfg.seed = global.seed;
    }
    if let Some(e) = global.epsilon {
        cfg.metrics.epsilon = e;
    }
    if global.mf_collapse {
        cfg.mf_collapse = true;
    }
    if let Some(d) = &global.kld_direction {
        cfg.metrics.kld_direction = d.parse::<KldDirection>().map_err(invalid)?;
    }
    if let Some(u) = &global.endpoint {
        cfg.endpoint.url = u.clone();
    }
    if let Some(n) = global.max_inflight {
        cfg.endpoint.max_inflight = n;
    }

    match command {
        Command::Ingest { inputs } | Command::BuildTuningSet { inputs } => {
            if !inputs.is_empty() {
                cfg.corpora = inputs.clone();
            }
        }
        Command::TagIssues {
            inputs,
            lexicons,
            policy,
        } => {
            if !inputs.is_empty() {
                cfg.corpora = inputs.clone();
            }
            if !lexicons.is_empty() {
                cfg.lexicons = lexicons.clone();
            }
            if let Some(p) = policy {
                cfg.tag_policy = *p;
            }
        }
        Command::ExtractTerms {
            foreground,
            background,
            issue,
            top_k,
            max_ngram,
        } => {
            if foreground.is_some() {
                cfg.terms.foreground = foreground.clone();
            }
            if background.is_some() {
                cfg.terms.background = background.clone();
            }
            if issue.is_some() {
                cfg.terms.issue = issue.clone();
            }
            if let Some(k) = top_k {
                cfg.terms.top_k = *k;
            }
            if let Some(n) = max_ngram {
                cfg.terms.max_ngram = *n;
            }
        }
        Command::BuildProbes {
            issues,
            per_issue,
            repeats,
        } => {
            if !issues.is_empty() {
                cfg.issues = issues.clone();
            }
            if let Some(n) = per_issue {
                cfg.probes.per_issue = *n;
            }
            if let Some(n) = repeats {
                cfg.probes.repeats = *n;
            }
        }
        Command::AnnotateStance {
            inputs,
            issues,
            annotations,
        } => {
            if !inputs.is_empty() {
                cfg.corpora = inputs.clone();
            }
            if !issues.is_empty() {
                cfg.issues = issues.clone();
            }
            if !annotations.is_empty() {
                cfg.annotations = annotations.clone();
            }
        }
        Command::Report { results } => {
            if results.is_some() {
                cfg.report.results = results.clone();
            }
        }
        Command::Distributions | Command::Evaluate => {}
    }

    if !(cfg.metrics.epsilon >= 0.0 && cfg.metrics.epsilon.is_finite()) {
        return Err(invalid(format!(
            "epsilon must be finite and >= 0 (got {})",
            cfg.metrics.epsilon
        )));
    }
    if cfg.metrics.tie_tolerance.is_nan() || cfg.metrics.tie_tolerance < 0.0 {
        return Err(invalid("tie_tolerance must be >= 0"));
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// SHA-256 of the config's JSON form, leaving out the output directory.
/// The endpoint token is never serialized, so it never takes part.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&cfg).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    status: &'a str,
    config: &'a RunConfig,
    config_hash: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest_hash: Option<String>,
}

/// What a subcommand did, before the manifest is written.
#[derive(Debug, Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: Map<String, Value>,
    partial: bool,
}

impl Outcome {
    fn count(&mut self, key: impl Into<String>, v: impl Into<Value>) {
        self.counts.insert(key.into(), v.into());
    }
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    out: &Outcome,
) -> Result<(PathBuf, String), CliError> {
    let mut inputs: Vec<FileDigest> = Vec::new();
    let mut seen = BTreeSet::new();
    for p in &out.inputs {
        if seen.insert(p.clone()) {
            inputs.push(digest_file(p)?);
        }
    }
    let outputs = out
        .outputs
        .iter()
        .map(|p| digest_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        status: if out.partial { "partial" } else { "ok" },
        config: cfg,
        config_hash: config_hash(cfg),
        inputs,
        outputs,
        manifest_hash: None,
    };
    let hash = hex::encode(Sha256::digest(
        serde_json::to_vec(&manifest).map_err(runtime)?,
    ));
    manifest.manifest_hash = Some(hash.clone());
    let path = cfg.output_dir.join(format!("manifest.{command}.json"));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok((path, hash))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

/// Output names derived from input stems must not collide.
fn output_names(inputs: &[PathBuf], suffix: &str) -> Result<Vec<String>, CliError> {
    let names: Vec<String> = inputs
        .iter()
        .map(|p| format!("{}{suffix}", stem(p)))
        .collect();
    let unique: BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(invalid("input corpora must have distinct file names"));
    }
    Ok(names)
}

fn require_corpora(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.corpora.is_empty() {
        return Err(invalid("no input corpora (pass paths or set \"corpora\")"));
    }
    RunConfig::check_exists(cfg.corpora.iter().map(PathBuf::as_path))
}

fn file_sources(sources: &[String]) -> Vec<PathBuf> {
    sources
        .iter()
        .filter(|s| !s.starts_with("preset:"))
        .map(PathBuf::from)
        .collect()
}

fn load_lexicon_sources(sources: &[String]) -> Result<Vec<IssueLexicon>, CliError> {
    let mut out = Vec::new();
    for s in sources {
        match s.strip_prefix("preset:") {
            Some(name) => out.extend(preset_lexicons(name).map_err(invalid)?),
            None => out.extend(load_lexicons(Path::new(s)).map_err(invalid)?),
        }
    }
    Ok(out)
}

fn load_issue_sources(sources: &[String]) -> Result<Vec<IssuePreset>, CliError> {
    if sources.is_empty() {
        return Err(invalid("no issues (pass --issues or set \"issues\")"));
    }
    let mut out = Vec::new();
    for s in sources {
        match s.strip_prefix("preset:") {
            Some(name) => out.extend(
                preset_issues(name)
                    .ok_or_else(|| invalid(format!("unknown issue preset {name:?}")))?,
            ),
            None => out.extend(load_issue_presets(Path::new(s)).map_err(invalid)?),
        }
    }
    Ok(out)
}

fn ingest(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_corpora(cfg)?;
    let names = output_names(&cfg.corpora, ".jsonl")?;
    let mut out = Outcome::default();
    let mut counts = Map::new();
    for (path, name) in cfg.corpora.iter().zip(names) {
        let corpus = load_corpus(path).map_err(corpus_err)?;
        let dest = cfg.output_dir.join(name);
        if dest == *path {
            return Err(invalid(format!(
                "{} would overwrite its own input",
                dest.display()
            )));
        }
        corpus.save(&dest).map_err(runtime)?;
        counts.insert(corpus.name.clone(), corpus.len().into());
        out.inputs.push(path.clone());
        out.outputs.push(dest);
    }
    out.count("instances", counts);
    Ok(out)
}

fn tag(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_corpora(cfg)?;
    if cfg.lexicons.is_empty() {
        return Err(invalid("no lexicons (pass --lexicon or set \"lexicons\")"));
    }
    let lexicon_files = file_sources(&cfg.lexicons);
    RunConfig::check_exists(lexicon_files.iter().map(PathBuf::as_path))?;
    let lexicons = load_lexicon_sources(&cfg.lexicons)?;
    let names = output_names(&cfg.corpora, ".tagged.jsonl")?;

    let mut out = Outcome::default();
    let mut per_issue: BTreeMap<String, usize> = BTreeMap::new();
    let mut untagged = 0usize;
    for (path, name) in cfg.corpora.iter().zip(names) {
        let corpus = load_corpus(path).map_err(corpus_err)?;
        let tagged = tag_issues(&corpus, &lexicons, cfg.tag_policy).map_err(invalid)?;
        for inst in tagged.iter() {
            match &inst.topic {
                Some(t) => *per_issue.entry(t.clone()).or_default() += 1,
                _ => untagged += 1,
            }
        }
        let dest = cfg.output_dir.join(name);
        tagged.save(&dest).map_err(runtime)?;
        out.inputs.push(path.clone());
        out.outputs.push(dest);
    }
    out.inputs.extend(lexicon_files);
    out.count("per_topic", json!(per_issue));
    out.count("untagged", untagged);
    Ok(out)
}

fn terms(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (Some(fg), Some(bg)) = (&cfg.terms.foreground, &cfg.terms.background) else {
        return Err(invalid(
            "extract-terms needs a foreground and a background corpus",
        ));
    };
    RunConfig::check_exists([fg.as_path(), bg.as_path()])?;
    let fg_corpus = load_corpus(fg).map_err(corpus_err)?;
    let bg_corpus = load_corpus(bg).map_err(corpus_err)?;
    let opts = TermOptions {
        max_ngram: cfg.terms.max_ngram,
        top_k: cfg.terms.top_k,
        prior_strength: cfg.terms.prior_strength,
    };
    let scores = extract_distinctive_terms(&fg_corpus, &bg_corpus, &opts).map_err(invalid)?;

    let mut out = Outcome::default();
    out.inputs.extend([fg.clone(), bg.clone()]);
    let dest = cfg.output_dir.join("terms.csv");
    {
        let mut wr = csv::Writer::from_writer(create(&dest)?);
        let rows = std::iter::once(["term", "zeta", "count_fg", "count_bg"].map(String::from))
            .chain(scores.iter().map(|s| {
                [
                    s.term.clone(),
                    s.zeta.to_string(),
                    s.count_fg.to_string(),
                    s.count_bg.to_string(),
                ]
            }));
        for r in rows {
            wr.write_record(&r).map_err(runtime)?;
        }
        wr.flush().map_err(runtime)?;
    }
    out.outputs.push(dest);
    if let Some(issue) = &cfg.terms.issue {
        let lexicon = IssueLexicon::from_scores(issue.clone(), &scores).map_err(invalid)?;
        let dest = cfg.output_dir.join(format!("lexicon.{issue}.json"));
        let mut text = serde_json::to_string_pretty(&lexicon).map_err(runtime)?;
        text.push('\n');
        fs::write(&dest, text).map_err(|e| runtime(format!("{}: {e}", dest.display())))?;
        out.outputs.push(dest);
    }
    out.count("terms", scores.len());
    out.count(
        "top",
        scores
            .iter()
            .take(10)
            .map(|s| s.term.clone())
            .collect::<Vec<_>>(),
    );
    Ok(out)
}

fn tuning(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = cfg.require_seed()?;
    require_corpora(cfg)?;
    cfg.ideology_terms.validate().map_err(invalid)?;
    let names = output_names(&cfg.corpora, "")?;
    let mut out = Outcome::default();
    let mut counts = Map::new();
    for (path, name) in cfg.corpora.iter().zip(names) {
        let corpus = load_corpus(path).map_err(corpus_err)?;
        let stats = compute_entity_stats(&corpus, cfg.entities);
        let examples = build_tuning_set(&corpus, &stats, &cfg.ideology_terms, &cfg.templates, seed);

        let dest = cfg.output_dir.join(format!("{name}.tuning.jsonl"));
        let mut w = create(&dest)?;
        write_tuning_set(&examples, &mut w).map_err(runtime)?;
        finish(w, &dest)?;

        let entities = cfg.output_dir.join(format!("{name}.entities.csv"));
        {
            let mut wr = csv::Writer::from_writer(create(&entities)?);
            wr.write_record(["entity", "count"]).map_err(runtime)?;
            for (e, c) in stats.ranked() {
                wr.write_record([e, &c.to_string()]).map_err(runtime)?;
            }
            wr.flush().map_err(runtime)?;
        }
        counts.insert(
            corpus.name.clone(),
            json!({
                "examples": examples.len(),
                "with_entity": examples.iter().filter(|e| e.entity.is_some()).count(),
                "entities_kept": stats.len(),
            }),
        );
        out.inputs.push(path.clone());
        out.outputs.extend([dest, entities]);
    }
    out.count("tuning_sets", counts);
    Ok(out)
}

fn probes(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = cfg.require_seed()?;
    let files = file_sources(&cfg.issues);
    RunConfig::check_exists(files.iter().map(PathBuf::as_path))?;
    let issues = load_issue_sources(&cfg.issues)?;
    let prompts = build_probe_prompts(
        &issues,
        &cfg.ideology_terms,
        &cfg.templates,
        cfg.probes,
        seed,
    )
    .map_err(invalid)?;
    let dest = cfg.output_dir.join("probes.jsonl");
    let mut w = create(&dest)?;
    write_probe_prompts(&prompts, &mut w).map_err(runtime)?;
    finish(w, &dest)?;

    let mut out = Outcome {
        inputs: files,
        ..Default::default()
    };
    out.outputs.push(dest);
    out.count("prompts", prompts.len());
    out.count("issues", issues.len());
    Ok(out)
}

fn annotate_err(e: AnnotateError) -> CliError {
    match e {
        AnnotateError::Io { .. } => runtime(e),
        e => invalid(e),
    }
}

fn stance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_corpora(cfg)?;
    let issue_files = file_sources(&cfg.issues);
    RunConfig::check_exists(
        issue_files
            .iter()
            .chain(&cfg.annotations)
            .map(PathBuf::as_path),
    )?;
    let issues = load_issue_sources(&cfg.issues)?;
    let targets: BTreeMap<String, String> = issues
        .iter()
        .map(|p| (p.issue.clone(), p.stance_target.clone()))
        .collect();
    let registry = ClassRegistry::new(cfg.mf_collapse);

    let records_path = cfg.output_dir.join("stance_annotations.jsonl");
    let mut previous = Vec::new();
    for p in cfg
        .annotations
        .iter()
        .chain(records_path.exists().then_some(&records_path))
    {
        previous.push(load_annotations(p, &registry).map_err(annotate_err)?);
    }
    let existing = merge_annotations(&previous).map_err(annotate_err)?;

    let client = ChatClient::new(cfg.endpoint.clone()).map_err(invalid)?;
    let sink = AnnotationSink::open(&records_path).map_err(annotate_err)?;

    let mut out = Outcome::default();
    let mut skipped = Vec::new();
    let (mut annotated, mut requests, mut resumed) = (0usize, 0usize, 0usize);
    for path in &cfg.corpora {
        let corpus = load_corpus(path).map_err(corpus_err)?;
        let run = annotate_stances(&corpus, &targets, &existing, &client, Some(&sink))
            .map_err(annotate_err)?;
        resumed += corpus.len() - run.records.len() - run.skipped.len();
        annotated += run.records.len();
        requests += run.requests;
        skipped.extend(run.skipped);
        out.inputs.push(path.clone());
    }
    out.inputs.extend(issue_files);
    out.inputs.extend(cfg.annotations.iter().cloned());

    let skips_path = cfg.output_dir.join("stance_skips.jsonl");
    let mut w = create(&skips_path)?;
    for s in &skipped {
        serde_json::to_writer(&mut w, s).map_err(runtime)?;
        w.write_all(b"\n").map_err(runtime)?;
    }
    finish(w, &skips_path)?;
    out.outputs.extend([records_path, skips_path]);

    out.count("annotated", annotated);
    out.count("resumed", resumed);
    out.count("skipped", skipped.len());
    out.count("requests", requests);
    out.count("annotator", client.config().annotator());
    out.partial = !skipped.is_empty();
    Ok(out)
}

fn load_annotated(c: &CorpusConfig, registry: &ClassRegistry) -> Result<AnnotatedCorpus, CliError> {
    let corpus = load_corpus(&c.corpus).map_err(corpus_err)?;
    let stores = c
        .annotations
        .iter()
        .map(|p| load_annotations(p, registry))
        .collect::<Result<Vec<AnnotationStore>, _>>()
        .map_err(annotate_err)?;
    let annotations = merge_annotations(&stores).map_err(annotate_err)?;
    Ok(AnnotatedCorpus {
        corpus,
        annotations,
    })
}

fn study_inputs(cfg: &RunConfig) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    for ds in &cfg.study.datasets {
        for c in std::iter::once(&ds.real).chain(ds.methods.iter().map(|m| &m.data)) {
            paths.push(c.corpus.clone());
            paths.extend(c.annotations.iter().cloned());
        }
    }
    paths
}

fn load_study(cfg: &RunConfig) -> Result<(Vec<DatasetData>, Vec<PathBuf>), CliError> {
    if cfg.study.datasets.is_empty() {
        return Err(invalid("no study datasets configured (\"study.datasets\")"));
    }
    let inputs = study_inputs(cfg);
    RunConfig::check_exists(inputs.iter().map(PathBuf::as_path))?;
    let registry = ClassRegistry::new(cfg.mf_collapse);
    let mut data = Vec::new();
    for ds in &cfg.study.datasets {
        let methods = ds
            .methods
            .iter()
            .map(|m| {
                Ok(MethodData {
                    name: m.name.clone(),
                    generated: load_annotated(&m.data, &registry)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        data.push(DatasetData {
            name: ds.name.clone(),
            topics: ds.topics.clone(),
            real: load_annotated(&ds.real, &registry)?,
            methods,
        });
    }
    Ok((data, inputs))
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        registry: ClassRegistry::new(cfg.mf_collapse),
        features: cfg.study.features.clone(),
        kld: KldOptions {
            epsilon: cfg.metrics.epsilon,
            log_base: cfg.metrics.log_base,
        },
        tie_tolerance: cfg.metrics.tie_tolerance,
        direction: cfg.metrics.kld_direction,
        annotators: cfg.study.annotators.clone(),
    }
}

fn run_evaluation(
    cfg: &RunConfig,
    write_dists: bool,
    write_res: bool,
) -> Result<Outcome, CliError> {
    let (data, inputs) = load_study(cfg)?;
    let eval = evaluate(&data, &eval_options(cfg)).map_err(invalid)?;
    let mut out = Outcome {
        inputs,
        ..Default::default()
    };
    if write_dists {
        let dest = cfg.output_dir.join("distributions.csv");
        let rows = export_distributions(&eval.distributions, &dest).map_err(runtime)?;
        out.outputs.push(dest);
        out.count("distributions", eval.distributions.len());
        out.count("rows", rows);
    }
    if write_res {
        let dest = cfg.output_dir.join("results.jsonl");
        let mut w = create(&dest)?;
        write_results(&eval.results, &mut w).map_err(runtime)?;
        finish(w, &dest)?;
        out.outputs.push(dest);
        out.count("results", eval.results.len());
        out.count(
            "missing",
            eval.results.iter().filter(|r| r.value.is_none()).count(),
        );
    }
    Ok(out)
}

/// `generated_at` for the JSON bundle: config, then `SOURCE_DATE_EPOCH`,
/// then the clock.
fn generated_at(cfg: &RunConfig) -> Result<String, CliError> {
    use chrono::{DateTime, SecondsFormat, Utc};
    if let Some(s) = &cfg.report.generated_at {
        DateTime::parse_from_rfc3339(s)
            .map_err(|e| invalid(format!("report.generated_at {s:?}: {e}")))?;
        return Ok(s.clone());
    }
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = epoch
            .trim()
            .parse()
            .map_err(|_| invalid(format!("SOURCE_DATE_EPOCH {epoch:?} is not an integer")))?;
        let t = DateTime::<Utc>::from_timestamp(secs, 0)
            .ok_or_else(|| invalid("SOURCE_DATE_EPOCH out of range"))?;
        return Ok(t.to_rfc3339_opts(SecondsFormat::Secs, true));
    }
    Ok(Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true))
}

fn report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let path = cfg
        .report
        .results
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("results.jsonl"));
    RunConfig::check_exists([path.as_path()])?;
    let file = File::open(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let records = read_results(BufReader::new(file))
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let tables = render_all_tables(&records).map_err(invalid)?;

    let mut out = Outcome::default();
    out.inputs.push(path);
    for format in &cfg.report.formats {
        match format {
            ReportFormat::Markdown => {
                let dest = cfg.output_dir.join("tables.md");
                let md: Vec<String> = tables.iter().map(|t| t.to_markdown()).collect();
                fs::write(&dest, md.join("\n"))
                    .map_err(|e| runtime(format!("{}: {e}", dest.display())))?;
                out.outputs.push(dest);
            }
            ReportFormat::Csv => {
                let dir = cfg.output_dir.join("tables");
                fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
                for t in &tables {
                    let metric = serde_json::to_value(t.metric).map_err(runtime)?;
                    let dest = dir.join(format!(
                        "{}_{}.csv",
                        t.feature.as_str(),
                        metric.as_str().unwrap_or("metric")
                    ));
                    let file = File::create(&dest)
                        .map_err(|e| runtime(format!("{}: {e}", dest.display())))?;
                    t.write_csv(file).map_err(runtime)?;
                    out.outputs.push(dest);
                }
            }
            ReportFormat::Json => {
                let bundle = ResultsBundle {
                    generated_at: generated_at(cfg)?,
                    config_hash: config_hash(cfg),
                    tables: tables.clone(),
                };
                let dest = cfg.output_dir.join("results_bundle.json");
                let mut text = serde_json::to_string_pretty(&bundle).map_err(runtime)?;
                text.push('\n');
                fs::write(&dest, text).map_err(|e| runtime(format!("{}: {e}", dest.display())))?;
                out.outputs.push(dest);
            }
        }
    }
    out.count("tables", tables.len());
    out.count("records", records.len());
    Ok(out)
}

/// Runs one parsed invocation and returns its stdout summary.
pub fn run(cli: &Cli) -> Result<(Value, bool), CliError> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| runtime(format!("{}: {e}", cfg.output_dir.display())))?;
    let outcome = match &cli.command {
        Command::Ingest { .. } => ingest(&cfg)?,
        Command::TagIssues { .. } => tag(&cfg)?,
        Command::ExtractTerms { .. } => terms(&cfg)?,
        Command::BuildTuningSet { .. } => tuning(&cfg)?,
        Command::BuildProbes { .. } => probes(&cfg)?,
        Command::AnnotateStance { .. } => stance(&cfg)?,
        Command::Distributions => run_evaluation(&cfg, true, false)?,
        Command::Evaluate => run_evaluation(&cfg, false, true)?,
        Command::Report { .. } => report(&cfg)?,
    };
    let name = cli.command.name();
    let (manifest, hash) = write_manifest(&cfg, name, &outcome)?;
    let summary = json!({
        "command": name,
        "status": if outcome.partial { "partial" } else { "ok" },
        "outputs": outcome.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "counts": outcome.counts,
        "manifest": manifest.display().to_string(),
        "manifest_hash": hash,
    });
    Ok((summary, outcome.partial))
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(&cli) {
        Ok((summary, partial)) => {
            println!("{summary}");
            if partial {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
