use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotate::EndpointConfig;
use crate::corpus::FeatureKind;
use crate::instruction_builder::{EntityFilter, IdeologyTerms, InstructionTemplates, ProbePlan};
use crate::issue_tagger::TagPolicy;
use crate::metrics::LogBase;
use crate::study::KldDirection;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermsConfig {
    pub foreground: Option<PathBuf>,
    pub background: Option<PathBuf>,
    /// When set, a lexicon for this issue is written next to the scores.
    pub issue: Option<String>,
    pub max_ngram: usize,
    pub top_k: usize,
    pub prior_strength: f64,
}

impl Default for TermsConfig {
    fn default() -> Self {
        TermsConfig {
            foreground: None,
            background: None,
            issue: None,
            max_ngram: 1,
            top_k: 50,
            prior_strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub epsilon: f64,
    pub tie_tolerance: f64,
    pub kld_direction: KldDirection,
    pub log_base: LogBase,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            epsilon: 1e-6,
            tie_tolerance: 0.0,
            kld_direction: KldDirection::GenVsReal,
            log_base: LogBase::E,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub annotations: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    #[serde(flatten)]
    pub data: CorpusConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default)]
    pub topics: Vec<String>,
    pub real: CorpusConfig,
    pub methods: Vec<MethodConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub datasets: Vec<DatasetConfig>,
    pub features: Vec<FeatureKind>,
    pub annotators: BTreeMap<FeatureKind, String>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            datasets: Vec::new(),
            features: FeatureKind::ALL.to_vec(),
            annotators: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Results JSONL to render; defaults to `<output_dir>/results.jsonl`.
    pub results: Option<PathBuf>,
    pub formats: Vec<ReportFormat>,
    /// Timestamp stamped into the JSON bundle. Falls back to
    /// `SOURCE_DATE_EPOCH`, then the current time.
    pub generated_at: Option<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            results: None,
            formats: vec![
                ReportFormat::Markdown,
                ReportFormat::Csv,
                ReportFormat::Json,
            ],
            generated_at: None,
        }
    }
}

/// Everything a run can be configured with. Relative paths in a config
/// file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    /// Input corpora for ingest, tag-issues, build-tuning-set and
    /// annotate-stance.
    pub corpora: Vec<PathBuf>,
    /// Lexicon files, or `preset:covid|abortion|congress`.
    pub lexicons: Vec<String>,
    pub tag_policy: TagPolicy,
    pub terms: TermsConfig,
    pub entities: EntityFilter,
    pub ideology_terms: IdeologyTerms,
    pub templates: InstructionTemplates,
    /// Issue-preset files, or `preset:covid|abortion|congress`.
    pub issues: Vec<String>,
    pub probes: ProbePlan,
    /// Existing annotation files; annotate-stance resumes from them.
    pub annotations: Vec<PathBuf>,
    pub endpoint: EndpointConfig,
    pub mf_collapse: bool,
    pub metrics: MetricsConfig,
    pub study: StudyConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            seed: None,
            corpora: Vec::new(),
            lexicons: Vec::new(),
            tag_policy: TagPolicy::default(),
            terms: TermsConfig::default(),
            entities: EntityFilter::default(),
            ideology_terms: IdeologyTerms::default(),
            templates: InstructionTemplates::default(),
            issues: Vec::new(),
            probes: ProbePlan::default(),
            annotations: Vec::new(),
            endpoint: EndpointConfig::default(),
            mf_collapse: false,
            metrics: MetricsConfig::default(),
            study: StudyConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_source(base: &Path, s: &mut String) {
    if !s.starts_with("preset:") && Path::new(s.as_str()).is_relative() {
        *s = base.join(s.as_str()).to_string_lossy().into_owned();
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.output_dir);
        self.corpora.iter_mut().for_each(|p| rebase(base, p));
        self.annotations.iter_mut().for_each(|p| rebase(base, p));
        self.lexicons
            .iter_mut()
            .for_each(|s| rebase_source(base, s));
        self.issues.iter_mut().for_each(|s| rebase_source(base, s));
        for p in [
            &mut self.terms.foreground,
            &mut self.terms.background,
            &mut self.report.results,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
        for ds in &mut self.study.datasets {
            for c in std::iter::once(&mut ds.real).chain(ds.methods.iter_mut().map(|m| &mut m.data))
            {
                rebase(base, &mut c.corpus);
                c.annotations.iter_mut().for_each(|p| rebase(base, p));
            }
        }
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Validation("this command samples; set a seed (--seed or \"seed\")".into())
        })
    }

    /// Fails when a referenced input file is absent.
    pub fn check_exists<'a, I>(paths: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = &'a Path>,
    {
        let missing: Vec<String> = paths
            .into_iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!(
                "missing input(s): {}",
                missing.join(", ")
            )))
        }
    }
}
