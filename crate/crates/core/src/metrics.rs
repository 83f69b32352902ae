//! Class distributions, partisan bias divergence (KL) and partisan class
//! tendency accuracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::AnnotationStore;
use crate::corpus::{filter_corpus, ClassSet, Corpus, CorpusFilter, FeatureKind, Ideology, Source};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty cell: no instances match")]
    EmptyCell,
    #[error("missing {feature} annotations for instance(s): {}", .ids.join(", "))]
    MissingAnnotations {
        feature: FeatureKind,
        ids: Vec<String>,
    },
    #[error("degenerate distribution: no instance carries any {0} label")]
    DegenerateDistribution(FeatureKind),
    #[error("class sets differ")]
    ClassMismatch,
    #[error("vector lengths differ: {0:?}")]
    LengthMismatch(Vec<usize>),
    #[error("annotation lookup: {0}")]
    Annotation(String),
}

/// Where a distribution was measured. Unset fields mean "all".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<Ideology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

impl Cell {
    fn filter(&self) -> CorpusFilter<'_> {
        CorpusFilter {
            ideology: self.ideology,
            topic: self.topic.as_deref(),
            source: self.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub feature: FeatureKind,
    pub classes: Vec<String>,
    /// Fraction of instances carrying each class. Sums past 1 for
    /// multi-label features.
    pub raw: Vec<f64>,
    /// `raw` rescaled to total mass 1.
    pub normalized: Vec<f64>,
    pub n_instances: usize,
    pub cell: Cell,
}

impl ClassDistribution {
    /// Builds a distribution from one label set per instance. Labels must
    /// already belong to `classes`; unknown labels are ignored.
    pub fn from_label_sets<S: AsRef<str>>(
        classes: &ClassSet,
        label_sets: &[Vec<S>],
        cell: Cell,
    ) -> Result<Self, MetricsError> {
        let n = label_sets.len();
        if n == 0 {
            return Err(MetricsError::EmptyCell);
        }
        let mut counts = vec![0u64; classes.len()];
        for labels in label_sets {
            let mut hit = vec![false; classes.len()];
            for l in labels {
                if let Some(i) = classes.index_of(l.as_ref()) {
                    hit[i] = true;
                }
            }
            for (c, h) in counts.iter_mut().zip(hit) {
                *c += h as u64;
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MetricsError::DegenerateDistribution(classes.feature));
        }
        // Normalizing the integer counts is the same quantity as raw / sum(raw)
        // without compounding rounding error.
        Ok(ClassDistribution {
            feature: classes.feature,
            classes: classes.classes.clone(),
            raw: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            normalized: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            n_instances: n,
            cell,
        })
    }

    pub fn probability(&self, class: &str) -> Option<(f64, f64)> {
        let i = self.classes.iter().position(|c| c == class)?;
        Some((self.raw[i], self.normalized[i]))
    }
}

/// Distribution of `feature` over the instances of `corpus` that fall in
/// `cell`. Every such instance needs an annotation; `annotator` picks one
/// when several annotators labelled the same instance.
pub fn class_distribution(
    corpus: &Corpus,
    annotations: &AnnotationStore,
    classes: &ClassSet,
    cell: Cell,
    annotator: Option<&str>,
) -> Result<ClassDistribution, MetricsError> {
    let members = filter_corpus(corpus, &cell.filter());
    if members.is_empty() {
        return Err(MetricsError::EmptyCell);
    }
    let mut label_sets = Vec::with_capacity(members.len());
    let mut missing = Vec::new();
    for inst in members.iter() {
        match annotations
            .lookup(&inst.id, classes.feature, annotator)
            .map_err(MetricsError::Annotation)?
        {
            Some(rec) => label_sets.push(rec.labels.clone()),
            None => missing.push(inst.id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(MetricsError::MissingAnnotations {
            feature: classes.feature,
            ids: missing,
        });
    }
    ClassDistribution::from_label_sets(classes, &label_sets, cell)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    /// Natural log, nats.
    #[default]
    E,
    /// Base 2, bits.
    Two,
}

impl LogBase {
    pub fn unit(self) -> &'static str {
        match self {
            LogBase::E => "nats",
            LogBase::Two => "bits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KldOptions {
    pub epsilon: f64,
    pub log_base: LogBase,
}

impl Default for KldOptions {
    fn default() -> Self {
        KldOptions {
            epsilon: 1e-6,
            log_base: LogBase::E,
        }
    }
}

/// `(x_i + eps) / (1 + m*eps)`.
pub fn smooth(dist: &[f64], epsilon: f64) -> Vec<f64> {
    let denom = 1.0 + dist.len() as f64 * epsilon;
    dist.iter().map(|x| (x + epsilon) / denom).collect()
}

/// KL divergence of two normalized vectors after identical additive
/// smoothing. Zero-mass terms of `p` contribute nothing; positive mass
/// against zero mass in `q` gives `+inf`.
pub fn kld(p: &[f64], q: &[f64], opts: KldOptions) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch(vec![p.len(), q.len()]));
    }
    let ps = smooth(p, opts.epsilon);
    let qs = smooth(q, opts.epsilon);
    let mut sum = 0.0;
    for (pi, qi) in ps.iter().zip(&qs) {
        if *pi > 0.0 {
            sum += pi * (pi / qi).ln();
        }
    }
    Ok(match opts.log_base {
        LogBase::E => sum,
        LogBase::Two => sum / std::f64::consts::LN_2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    pub feature: FeatureKind,
    pub topic: Option<String>,
    pub ideology: Option<Ideology>,
    pub kld: f64,
}

/// `D(p || q)` over the normalized vectors of two distributions of the same
/// feature and class order.
pub fn kl_divergence(
    p: &ClassDistribution,
    q: &ClassDistribution,
    opts: KldOptions,
) -> Result<DivergenceResult, MetricsError> {
    if p.feature != q.feature || p.classes != q.classes {
        return Err(MetricsError::ClassMismatch);
    }
    Ok(DivergenceResult {
        feature: p.feature,
        topic: p.cell.topic.clone().or_else(|| q.cell.topic.clone()),
        ideology: p.cell.ideology.or(q.cell.ideology),
        kld: kld(&p.normalized, &q.normalized, opts)?,
    })
}

/// `sign(x)` with a dead band: 0 when `|x| <= tolerance`.
pub fn sign(x: f64, tolerance: f64) -> i8 {
    if x.abs() <= tolerance {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyScore {
    pub per_class: Vec<bool>,
    pub overall: f64,
}

/// Per class, whether the model's liberal-minus-conservative sign matches
/// the real one; `overall` is the fraction of matching classes. `p_*` are
/// real-world, `q_*` model-generated raw probabilities.
pub fn tendency_accuracy(
    p_lib: &[f64],
    p_con: &[f64],
    q_lib: &[f64],
    q_con: &[f64],
    tie_tolerance: f64,
) -> Result<TendencyScore, MetricsError> {
    let m = p_lib.len();
    if [p_con.len(), q_lib.len(), q_con.len()]
        .iter()
        .any(|&l| l != m)
        || m == 0
    {
        return Err(MetricsError::LengthMismatch(vec![
            p_lib.len(),
            p_con.len(),
            q_lib.len(),
            q_con.len(),
        ]));
    }
    let per_class: Vec<bool> = (0..m)
        .map(|i| {
            sign(q_lib[i] - q_con[i], tie_tolerance) == sign(p_lib[i] - p_con[i], tie_tolerance)
        })
        .collect();
    let hits = per_class.iter().filter(|h| **h).count();
    Ok(TendencyScore {
        overall: hits as f64 / m as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyResult {
    pub feature: FeatureKind,
    pub topic: Option<String>,
    pub per_class: Vec<(String, bool)>,
    pub overall: f64,
}

/// Tendency accuracy from the raw vectors of four distributions sharing one
/// class set.
pub fn tendency_from_distributions(
    real_lib: &ClassDistribution,
    real_con: &ClassDistribution,
    gen_lib: &ClassDistribution,
    gen_con: &ClassDistribution,
    tie_tolerance: f64,
) -> Result<TendencyResult, MetricsError> {
    let all = [real_lib, real_con, gen_lib, gen_con];
    if all
        .iter()
        .any(|d| d.feature != real_lib.feature || d.classes != real_lib.classes)
    {
        return Err(MetricsError::ClassMismatch);
    }
    let score = tendency_accuracy(
        &real_lib.raw,
        &real_con.raw,
        &gen_lib.raw,
        &gen_con.raw,
        tie_tolerance,
    )?;
    Ok(TendencyResult {
        feature: real_lib.feature,
        topic: real_lib.cell.topic.clone(),
        per_class: real_lib
            .classes
            .iter()
            .cloned()
            .zip(score.per_class)
            .collect(),
        overall: score.overall,
    })
}
