//! Data model shared by every stage: ideologies, feature taxonomies, text
//! instances, and JSONL corpus ingestion.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id {id:?} (first seen on line {first_line})")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        first_line: usize,
        id: String,
    },
    #[error(
        "{path}:{line}: unknown ideology {value:?} (expected \"liberal\" or \"conservative\")"
    )]
    UnknownIdeology {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("{path}:{line}: unknown source {value:?} (expected \"real\" or \"generated\")")]
    UnknownSource {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("{path}:{line}: instance {id:?} has empty text")]
    EmptyText {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: instance has an empty id")]
    EmptyId { path: PathBuf, line: usize },
}

impl CorpusError {
    /// Line number the error points at, when it came from a specific line.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Malformed { line, .. }
            | CorpusError::DuplicateId { line, .. }
            | CorpusError::UnknownIdeology { line, .. }
            | CorpusError::UnknownSource { line, .. }
            | CorpusError::EmptyText { line, .. }
            | CorpusError::EmptyId { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ideology {
    Liberal,
    Conservative,
}

impl Ideology {
    pub const ALL: [Ideology; 2] = [Ideology::Liberal, Ideology::Conservative];

    pub fn as_str(self) -> &'static str {
        match self {
            Ideology::Liberal => "liberal",
            Ideology::Conservative => "conservative",
        }
    }

    /// Short column label used in tables.
    pub fn short(self) -> &'static str {
        match self {
            Ideology::Liberal => "Lib",
            Ideology::Conservative => "Con",
        }
    }
}

impl fmt::Display for Ideology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ideology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "liberal" => Ok(Ideology::Liberal),
            "conservative" => Ok(Ideology::Conservative),
            other => Err(format!("unknown ideology {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Generated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Generated => "generated",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Source::Real),
            "generated" => Ok(Source::Generated),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Stance,
    Emotion,
    MoralFoundation,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [
        FeatureKind::Stance,
        FeatureKind::Emotion,
        FeatureKind::MoralFoundation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Stance => "stance",
            FeatureKind::Emotion => "emotion",
            FeatureKind::MoralFoundation => "moral_foundation",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stance" => Ok(FeatureKind::Stance),
            "emotion" => Ok(FeatureKind::Emotion),
            "moral_foundation" => Ok(FeatureKind::MoralFoundation),
            other => Err(format!("unknown feature {other:?}")),
        }
    }
}

pub const STANCE_CLASSES: [&str; 3] = ["negative", "neutral", "positive"];

pub const EMOTION_CLASSES: [&str; 11] = [
    "anticipation",
    "joy",
    "love",
    "trust",
    "optimism",
    "anger",
    "disgust",
    "fear",
    "sadness",
    "pessimism",
    "surprise",
];

/// Virtue/vice pairs in foundation order.
pub const MORAL_FOUNDATION_PAIRS: [(&str, &str); 5] = [
    ("care", "harm"),
    ("fairness", "cheating"),
    ("loyalty", "betrayal"),
    ("authority", "subversion"),
    ("purity", "degradation"),
];

/// The ordered label space of one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    pub feature: FeatureKind,
    pub classes: Vec<String>,
    pub multi_label: bool,
}

impl ClassSet {
    pub fn stance() -> Self {
        ClassSet {
            feature: FeatureKind::Stance,
            classes: STANCE_CLASSES.iter().map(|s| s.to_string()).collect(),
            multi_label: false,
        }
    }

    pub fn emotion() -> Self {
        ClassSet {
            feature: FeatureKind::Emotion,
            classes: EMOTION_CLASSES.iter().map(|s| s.to_string()).collect(),
            multi_label: true,
        }
    }

    /// Ten classes, virtue and vice separately.
    pub fn moral_foundation() -> Self {
        ClassSet {
            feature: FeatureKind::MoralFoundation,
            classes: MORAL_FOUNDATION_PAIRS
                .iter()
                .flat_map(|(v, x)| [v.to_string(), x.to_string()])
                .collect(),
            multi_label: true,
        }
    }

    /// Five classes named `virtue/vice`.
    pub fn moral_foundation_collapsed() -> Self {
        ClassSet {
            feature: FeatureKind::MoralFoundation,
            classes: MORAL_FOUNDATION_PAIRS
                .iter()
                .map(|(v, x)| format!("{v}/{x}"))
                .collect(),
            multi_label: true,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }
}

/// Resolves the class set for each feature under the configured moral
/// foundation granularity, and canonicalizes annotation labels against it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    pub mf_collapse: bool,
}

impl ClassRegistry {
    pub fn new(mf_collapse: bool) -> Self {
        ClassRegistry { mf_collapse }
    }

    pub fn class_set(&self, feature: FeatureKind) -> ClassSet {
        match feature {
            FeatureKind::Stance => ClassSet::stance(),
            FeatureKind::Emotion => ClassSet::emotion(),
            FeatureKind::MoralFoundation if self.mf_collapse => {
                ClassSet::moral_foundation_collapsed()
            }
            FeatureKind::MoralFoundation => ClassSet::moral_foundation(),
        }
    }

    /// Validates labels for `feature` and returns them deduplicated in class
    /// order. Under MF collapse, virtue and vice labels map onto their pair
    /// (logical OR); pair names are accepted directly as well.
    pub fn canonical_labels<S: AsRef<str>>(
        &self,
        feature: FeatureKind,
        labels: &[S],
    ) -> Result<Vec<String>, String> {
        let set = self.class_set(feature);
        let mut hit = vec![false; set.len()];
        for label in labels {
            let label = label.as_ref();
            let idx = set
                .index_of(label)
                .or_else(|| {
                    if feature == FeatureKind::MoralFoundation && self.mf_collapse {
                        MORAL_FOUNDATION_PAIRS
                            .iter()
                            .position(|(v, x)| *v == label || *x == label)
                    } else {
                        None
                    }
                })
                .ok_or_else(|| format!("label {label:?} is not a {feature} class"))?;
            hit[idx] = true;
        }
        let out: Vec<String> = set
            .classes
            .iter()
            .zip(&hit)
            .filter(|(_, h)| **h)
            .map(|(c, _)| c.clone())
            .collect();
        if !set.multi_label && out.len() != 1 {
            return Err(format!(
                "{feature} annotations carry exactly one label, got {}",
                labels.len()
            ));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextInstance {
    pub id: String,
    pub text: String,
    pub ideology: Ideology,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<String>>,
    /// UTC seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
    /// Unrecognized fields, carried through untouched.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl TextInstance {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        ideology: Ideology,
        source: Source,
    ) -> Self {
        TextInstance {
            id: id.into(),
            text: text.into(),
            ideology,
            source,
            topic: None,
            entities: None,
            created_at: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }

    pub fn with_entities<I, S>(mut self, entities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entities = Some(entities.into_iter().map(Into::into).collect());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub instances: Vec<TextInstance>,
}

/// Predicates for [`filter_corpus`]; `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusFilter<'a> {
    pub ideology: Option<Ideology>,
    pub topic: Option<&'a str>,
    pub source: Option<Source>,
}

impl CorpusFilter<'_> {
    pub fn matches(&self, inst: &TextInstance) -> bool {
        self.ideology.is_none_or(|i| inst.ideology == i)
            && self.source.is_none_or(|s| inst.source == s)
            && self.topic.is_none_or(|t| inst.topic.as_deref() == Some(t))
    }
}

impl Corpus {
    pub fn new(name: impl Into<String>, instances: Vec<TextInstance>) -> Self {
        Corpus {
            name: name.into(),
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TextInstance> {
        self.instances.iter()
    }

    /// Distinct topics in first-seen order.
    pub fn topics(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for t in self.instances.iter().filter_map(|i| i.topic.as_deref()) {
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        seen
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_jsonl(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Instances sharing the same `id` must differ in `topic`; an untagged
/// corpus therefore needs globally unique ids.
fn uniqueness_key(inst: &TextInstance) -> (String, Option<String>) {
    (inst.id.clone(), inst.topic.clone())
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    text: String,
    ideology: String,
    source: String,
    #[serde(default)]
    topic: Option<String>,
    #[serde(default)]
    entities: Option<Vec<String>>,
    #[serde(default)]
    created_at: Option<i64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// Parses a JSONL corpus from any reader. `path` is only used in errors.
pub fn read_corpus<R: BufRead>(reader: R, name: &str, path: &Path) -> Result<Corpus, CorpusError> {
    let path_buf = || path.to_path_buf();
    let mut instances = Vec::new();
    let mut seen: HashMap<(String, Option<String>), usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.id.is_empty() {
            return Err(CorpusError::EmptyId {
                path: path_buf(),
                line: line_no,
            });
        }
        let ideology = raw
            .ideology
            .parse()
            .map_err(|_| CorpusError::UnknownIdeology {
                path: path_buf(),
                line: line_no,
                value: raw.ideology.clone(),
            })?;
        let source = raw.source.parse().map_err(|_| CorpusError::UnknownSource {
            path: path_buf(),
            line: line_no,
            value: raw.source.clone(),
        })?;
        if raw.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                path: path_buf(),
                line: line_no,
                id: raw.id,
            });
        }
        let inst = TextInstance {
            id: raw.id,
            text: raw.text,
            ideology,
            source,
            topic: raw.topic,
            entities: raw.entities,
            created_at: raw.created_at,
            extra: raw.extra,
        };
        if let Some(first_line) = seen.insert(uniqueness_key(&inst), line_no) {
            return Err(CorpusError::DuplicateId {
                path: path_buf(),
                line: line_no,
                first_line,
                id: inst.id,
            });
        }
        instances.push(inst);
    }
    Ok(Corpus::new(name, instances))
}

/// Loads and validates a JSONL corpus. The corpus is named after the file
/// stem.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(BufReader::new(file), &name, path)
}

/// Keeps the instances matching every given predicate, in order.
pub fn filter_corpus(corpus: &Corpus, filter: &CorpusFilter<'_>) -> Corpus {
    Corpus {
        name: corpus.name.clone(),
        instances: corpus
            .instances
            .iter()
            .filter(|i| filter.matches(i))
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Corpus, CorpusError> {
        read_corpus(s.as_bytes(), "t", Path::new("t.jsonl"))
    }

    #[test]
    fn loads_two_valid_lines() {
        let c = parse(concat!(
            r#"{"id":"a","text":"hi","ideology":"liberal","source":"real"}"#,
            "\n",
            r#"{"id":"b","text":"yo","ideology":"conservative","source":"generated","topic":"masking"}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.instances[1].topic.as_deref(), Some("masking"));
    }

    #[test]
    fn duplicate_id_names_the_second_line() {
        let err = parse(concat!(
            r#"{"id":"t1","text":"a","ideology":"liberal","source":"real"}"#,
            "\n",
            r#"{"id":"t2","text":"b","ideology":"liberal","source":"real"}"#,
            "\n",
            r#"{"id":"t1","text":"c","ideology":"liberal","source":"real"}"#,
        ))
        .unwrap_err();
        assert!(matches!(
            err,
            CorpusError::DuplicateId {
                line: 3,
                first_line: 1,
                ..
            }
        ));
        assert!(err.to_string().contains("t1"));
    }

    #[test]
    fn empty_input_is_an_empty_corpus() {
        assert_eq!(parse("").unwrap().len(), 0);
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let ok = r#"{"id":"a","text":"hi","ideology":"liberal","source":"real"}"#;
        let err = parse(&format!("{ok}\n{{not json\n")).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(matches!(err, CorpusError::Malformed { .. }));

        let err =
            parse(r#"{"id":"a","text":"hi","ideology":"centrist","source":"real"}"#).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownIdeology { line: 1, .. }));

        let err =
            parse(r#"{"id":"a","text":"  ","ideology":"liberal","source":"real"}"#).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText { .. }));
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let line = r#"{"id":"a","text":"hi","ideology":"liberal","source":"real","lang":"en","meta":{"k":[1,2]}}"#;
        let c = parse(line).unwrap();
        assert_eq!(c.instances[0].extra["lang"], Value::from("en"));
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let again = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn filters() {
        let c = Corpus::new(
            "c",
            vec![
                TextInstance::new("1", "a", Ideology::Liberal, Source::Real).with_topic("x"),
                TextInstance::new("2", "b", Ideology::Conservative, Source::Real),
                TextInstance::new("3", "c", Ideology::Liberal, Source::Generated),
                TextInstance::new("4", "d", Ideology::Conservative, Source::Real),
            ],
        );
        let lib = filter_corpus(
            &c,
            &CorpusFilter {
                ideology: Some(Ideology::Liberal),
                ..Default::default()
            },
        );
        assert_eq!(lib.len(), 2);
        let none = filter_corpus(
            &c,
            &CorpusFilter {
                topic: Some("absent"),
                ..Default::default()
            },
        );
        assert!(none.is_empty());
        assert_eq!(filter_corpus(&c, &CorpusFilter::default()), c);
    }

    #[test]
    fn class_set_invariants() {
        assert_eq!(ClassSet::stance().classes, STANCE_CLASSES);
        assert!(!ClassSet::stance().multi_label);
        assert_eq!(ClassSet::emotion().len(), 11);
        let mf = ClassSet::moral_foundation();
        assert_eq!(mf.len(), 10);
        assert_eq!(&mf.classes[..2], ["care", "harm"]);
        assert_eq!(
            ClassSet::moral_foundation_collapsed().classes[0],
            "care/harm"
        );
        for f in FeatureKind::ALL {
            for collapse in [false, true] {
                let set = ClassRegistry::new(collapse).class_set(f);
                let mut sorted = set.classes.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), set.len());
                assert!(set.len() >= 2);
            }
        }
    }

    #[test]
    fn canonical_labels_collapse_and_validate() {
        let reg = ClassRegistry::new(true);
        assert_eq!(
            reg.canonical_labels(FeatureKind::MoralFoundation, &["harm", "care", "purity"])
                .unwrap(),
            vec!["care/harm", "purity/degradation"]
        );
        let reg = ClassRegistry::default();
        assert_eq!(
            reg.canonical_labels(FeatureKind::Emotion, &["fear", "anger"])
                .unwrap(),
            vec!["anger", "fear"]
        );
        assert!(reg
            .canonical_labels(FeatureKind::Emotion, &["angst"])
            .is_err());
        assert!(reg
            .canonical_labels(FeatureKind::Stance, &["positive", "negative"])
            .is_err());
        assert!(reg
            .canonical_labels::<&str>(FeatureKind::Stance, &[])
            .is_err());
        assert!(reg
            .canonical_labels::<&str>(FeatureKind::Emotion, &[])
            .unwrap()
            .is_empty());
    }
}
