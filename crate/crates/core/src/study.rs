//! Evaluation of model-generated corpora against real-world corpora, cell by
//! cell: dataset × topic × feature × method × ideology.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationStore;
use crate::corpus::{ClassRegistry, ClassSet, Corpus, FeatureKind, Ideology, Source};
use crate::metrics::{
    class_distribution, kl_divergence, tendency_from_distributions, Cell, ClassDistribution,
    KldOptions, MetricsError,
};

/// A corpus together with the annotations of its instances.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedCorpus {
    pub corpus: Corpus,
    pub annotations: AnnotationStore,
}

#[derive(Debug, Clone)]
pub struct MethodData {
    pub name: String,
    pub generated: AnnotatedCorpus,
}

#[derive(Debug, Clone)]
pub struct DatasetData {
    pub name: String,
    /// Topics to evaluate, in table order. Empty means the real corpus's
    /// topics in first-seen order.
    pub topics: Vec<String>,
    pub real: AnnotatedCorpus,
    pub methods: Vec<MethodData>,
}

impl DatasetData {
    pub fn topic_list(&self) -> Vec<String> {
        if self.topics.is_empty() {
            self.real
                .corpus
                .topics()
                .into_iter()
                .map(String::from)
                .collect()
        } else {
            self.topics.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KldDirection {
    /// `D(generated || real)`.
    #[default]
    #[serde(rename = "gen-vs-real")]
    GenVsReal,
    /// `D(real || generated)`.
    #[serde(rename = "real-vs-gen")]
    RealVsGen,
}

impl fmt::Display for KldDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KldDirection::GenVsReal => "gen-vs-real",
            KldDirection::RealVsGen => "real-vs-gen",
        })
    }
}

impl FromStr for KldDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gen-vs-real" => Ok(KldDirection::GenVsReal),
            "real-vs-gen" => Ok(KldDirection::RealVsGen),
            other => Err(format!("unknown KLD direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub registry: ClassRegistry,
    pub features: Vec<FeatureKind>,
    pub kld: KldOptions,
    pub tie_tolerance: f64,
    pub direction: KldDirection,
    /// Annotator to read per feature, for stores holding several.
    pub annotators: BTreeMap<FeatureKind, String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            registry: ClassRegistry::default(),
            features: FeatureKind::ALL.to_vec(),
            kld: KldOptions::default(),
            tie_tolerance: 0.0,
            direction: KldDirection::GenVsReal,
            annotators: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Kld,
    Tendency,
}

/// One line of the results JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub method: String,
    pub feature: FeatureKind,
    pub topic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<Ideology>,
    pub metric: Metric,
    /// `None` when the cell could not be computed.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<IndexMap<String, u8>>,
    pub epsilon: f64,
    pub n_real: usize,
    pub n_gen: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<KldDirection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_reason: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    pub distributions: Vec<ClassDistribution>,
    pub results: Vec<ResultRecord>,
}

/// A cell that is empty or carries no labels at all is reported as missing;
/// anything else is a real error.
fn soft<T>(r: Result<T, MetricsError>) -> Result<Result<T, String>, MetricsError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ (MetricsError::EmptyCell | MetricsError::DegenerateDistribution(_))) => {
            Ok(Err(e.to_string()))
        }
        Err(e) => Err(e),
    }
}

fn count(corpus: &Corpus, topic: &str, ideology: Option<Ideology>, source: Source) -> usize {
    corpus
        .iter()
        .filter(|i| {
            i.topic.as_deref() == Some(topic)
                && i.source == source
                && ideology.is_none_or(|x| i.ideology == x)
        })
        .count()
}

type CellDists = [Result<ClassDistribution, String>; 2];

fn side_distributions(
    data: &AnnotatedCorpus,
    classes: &ClassSet,
    base: &Cell,
    source: Source,
    annotator: Option<&str>,
) -> Result<CellDists, MetricsError> {
    let one = |ideology| -> Result<Result<ClassDistribution, String>, MetricsError> {
        let cell = Cell {
            ideology: Some(ideology),
            source: Some(source),
            ..base.clone()
        };
        soft(class_distribution(
            &data.corpus,
            &data.annotations,
            classes,
            cell,
            annotator,
        ))
    };
    Ok([one(Ideology::Liberal)?, one(Ideology::Conservative)?])
}

/// Runs divergence and tendency for every configured cell.
///
/// Results come out ordered by dataset, topic, feature, method, then
/// `kld/liberal`, `kld/conservative`, `tendency`. Distributions list each
/// real cell before the generated cells of the same topic and feature.
pub fn evaluate(datasets: &[DatasetData], opts: &EvalOptions) -> Result<Evaluation, MetricsError> {
    let mut out = Evaluation::default();
    let unit = opts.kld.log_base.unit().to_string();
    for ds in datasets {
        for topic in ds.topic_list() {
            for &feature in &opts.features {
                let classes = opts.registry.class_set(feature);
                let annotator = opts.annotators.get(&feature).map(String::as_str);
                let real_cell = Cell {
                    dataset: Some(ds.name.clone()),
                    topic: Some(topic.clone()),
                    ..Default::default()
                };
                let real =
                    side_distributions(&ds.real, &classes, &real_cell, Source::Real, annotator)?;
                out.distributions.extend(real.iter().flatten().cloned());

                for method in &ds.methods {
                    let gen_cell = Cell {
                        method: Some(method.name.clone()),
                        ..real_cell.clone()
                    };
                    let generated = side_distributions(
                        &method.generated,
                        &classes,
                        &gen_cell,
                        Source::Generated,
                        annotator,
                    )?;
                    out.distributions
                        .extend(generated.iter().flatten().cloned());

                    let base = ResultRecord {
                        dataset: ds.name.clone(),
                        method: method.name.clone(),
                        feature,
                        topic: topic.clone(),
                        ideology: None,
                        metric: Metric::Kld,
                        value: None,
                        per_class: None,
                        epsilon: opts.kld.epsilon,
                        n_real: 0,
                        n_gen: 0,
                        unit: None,
                        direction: None,
                        missing_reason: None,
                    };

                    for (k, ideology) in Ideology::ALL.into_iter().enumerate() {
                        let mut rec = ResultRecord {
                            ideology: Some(ideology),
                            n_real: count(&ds.real.corpus, &topic, Some(ideology), Source::Real),
                            n_gen: count(
                                &method.generated.corpus,
                                &topic,
                                Some(ideology),
                                Source::Generated,
                            ),
                            unit: Some(unit.clone()),
                            direction: Some(opts.direction),
                            ..base.clone()
                        };
                        match (&generated[k], &real[k]) {
                            (Ok(g), Ok(r)) => {
                                let (p, q) = match opts.direction {
                                    KldDirection::GenVsReal => (g, r),
                                    KldDirection::RealVsGen => (r, g),
                                };
                                rec.value = Some(kl_divergence(p, q, opts.kld)?.kld);
                            }
                            (Err(e), _) => rec.missing_reason = Some(format!("generated: {e}")),
                            (_, Err(e)) => rec.missing_reason = Some(format!("real: {e}")),
                        }
                        out.results.push(rec);
                    }

                    let mut rec = ResultRecord {
                        metric: Metric::Tendency,
                        n_real: count(&ds.real.corpus, &topic, None, Source::Real),
                        n_gen: count(&method.generated.corpus, &topic, None, Source::Generated),
                        ..base
                    };
                    match (&real, &generated) {
                        ([Ok(rl), Ok(rc)], [Ok(gl), Ok(gc)]) => {
                            let t =
                                tendency_from_distributions(rl, rc, gl, gc, opts.tie_tolerance)?;
                            rec.value = Some(t.overall);
                            rec.per_class = Some(
                                t.per_class
                                    .into_iter()
                                    .map(|(c, hit)| (c, hit as u8))
                                    .collect(),
                            );
                        }
                        _ => {
                            let reasons: Vec<String> = real
                                .iter()
                                .chain(&generated)
                                .filter_map(|d| d.as_ref().err().cloned())
                                .collect();
                            rec.missing_reason = Some(reasons.join("; "));
                        }
                    }
                    out.results.push(rec);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_results<W: Write>(results: &[ResultRecord], mut w: W) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(reader: R) -> Result<Vec<ResultRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}
