//! Result tables (divergence and tendency accuracy) in markdown, CSV and
//! JSON, plus long-format exports of class distributions.
//!
//! Values display with two decimals, rounding half to even on the exact
//! binary value. The best entry of each (topic, partisan line) is
//! flagged: lowest divergence, highest accuracy, every tied entry included.
//! Missing cells show as an em dash.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureKind, Ideology};
use crate::metrics::ClassDistribution;
use crate::study::{Metric, ResultRecord};

pub const MISSING: &str = "—";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no {metric:?} results for {feature}")]
    Empty {
        metric: Metric,
        feature: FeatureKind,
    },
    #[error("duplicate cell: {0}")]
    DuplicateCell(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableColumn {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<Ideology>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub value: Option<f64>,
    pub display: String,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub topic: String,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub metric: Metric,
    pub feature: FeatureKind,
    pub columns: Vec<TableColumn>,
    pub rows: Vec<TableRow>,
}

/// Two decimals, ties to even.
pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => MISSING.to_string(),
    }
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

fn build_table(
    records: &[ResultRecord],
    feature: FeatureKind,
    metric: Metric,
) -> Result<Table, ReportError> {
    let selected: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.feature == feature && r.metric == metric)
        .collect();
    if selected.is_empty() {
        return Err(ReportError::Empty { metric, feature });
    }
    let lines: Vec<Option<Ideology>> = match metric {
        Metric::Kld => Ideology::ALL.into_iter().map(Some).collect(),
        Metric::Tendency => vec![None],
    };

    let mut methods: Vec<&str> = Vec::new();
    let mut rows: Vec<(&str, &str)> = Vec::new();
    let mut values: HashMap<(&str, &str, &str, Option<Ideology>), Option<f64>> = HashMap::new();
    for r in &selected {
        push_unique(&mut methods, r.method.as_str());
        push_unique(&mut rows, (r.dataset.as_str(), r.topic.as_str()));
        let ideology = if metric == Metric::Kld {
            r.ideology
        } else {
            None
        };
        let key = (
            r.dataset.as_str(),
            r.topic.as_str(),
            r.method.as_str(),
            ideology,
        );
        if values.insert(key, r.value).is_some() {
            return Err(ReportError::DuplicateCell(format!(
                "{}/{}/{}/{}/{}",
                r.dataset,
                r.topic,
                r.method,
                ideology.map(Ideology::as_str).unwrap_or("-"),
                feature
            )));
        }
    }

    let columns: Vec<TableColumn> = methods
        .iter()
        .flat_map(|m| {
            lines.iter().map(move |l| TableColumn {
                method: m.to_string(),
                ideology: *l,
            })
        })
        .collect();

    let better = |a: f64, b: f64| match metric {
        Metric::Kld => a < b,
        Metric::Tendency => a > b,
    };

    let rows = rows
        .into_iter()
        .map(|(dataset, topic)| {
            let mut cells: Vec<TableCell> = columns
                .iter()
                .map(|c| {
                    let value = values
                        .get(&(dataset, topic, c.method.as_str(), c.ideology))
                        .copied()
                        .flatten();
                    TableCell {
                        value,
                        display: format_value(value),
                        best: false,
                    }
                })
                .collect();
            for line in &lines {
                let idx: Vec<usize> = (0..columns.len())
                    .filter(|&i| columns[i].ideology == *line)
                    .collect();
                let best =
                    idx.iter()
                        .filter_map(|&i| cells[i].value)
                        .fold(None, |acc: Option<f64>, v| match acc {
                            Some(b) if !better(v, b) => Some(b),
                            _ => Some(v),
                        });
                if let Some(b) = best {
                    for &i in &idx {
                        cells[i].best = cells[i].value == Some(b);
                    }
                }
            }
            TableRow {
                dataset: dataset.to_string(),
                topic: topic.to_string(),
                cells,
            }
        })
        .collect();

    let title = match metric {
        Metric::Kld => format!("KL divergence ({feature})"),
        Metric::Tendency => format!("Class tendency accuracy ({feature})"),
    };
    Ok(Table {
        title,
        metric,
        feature,
        columns,
        rows,
    })
}

/// Rows are topics grouped by dataset; columns are method × {Lib, Con}.
pub fn render_kld_table(
    records: &[ResultRecord],
    feature: FeatureKind,
) -> Result<Table, ReportError> {
    build_table(records, feature, Metric::Kld)
}

/// Rows are topics grouped by dataset; one column per method.
pub fn render_tendency_table(
    records: &[ResultRecord],
    feature: FeatureKind,
) -> Result<Table, ReportError> {
    build_table(records, feature, Metric::Tendency)
}

impl TableColumn {
    fn header(&self) -> String {
        match self.ideology {
            Some(i) => format!("{} {}", self.method, i.short()),
            None => self.method.clone(),
        }
    }
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n| Dataset | Topic |", self.title);
        for c in &self.columns {
            out.push_str(&format!(" {} |", c.header()));
        }
        out.push_str("\n| --- | --- |");
        for _ in &self.columns {
            out.push_str(" ---: |");
        }
        out.push('\n');
        let mut last_dataset: Option<&str> = None;
        for row in &self.rows {
            let ds = if last_dataset == Some(row.dataset.as_str()) {
                ""
            } else {
                row.dataset.as_str()
            };
            last_dataset = Some(&row.dataset);
            out.push_str(&format!("| {ds} | {} |", row.topic));
            for cell in &row.cells {
                if cell.best {
                    out.push_str(&format!(" **{}** |", cell.display));
                } else {
                    out.push_str(&format!(" {} |", cell.display));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long format: `dataset,topic,method,ideology,value,best`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ReportError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["dataset", "topic", "method", "ideology", "value", "best"])?;
        for row in &self.rows {
            for (col, cell) in self.columns.iter().zip(&row.cells) {
                wr.write_record([
                    row.dataset.as_str(),
                    row.topic.as_str(),
                    col.method.as_str(),
                    col.ideology.map(Ideology::as_str).unwrap_or(""),
                    cell.display.as_str(),
                    if cell.best { "true" } else { "false" },
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Every table present in `records`: per feature, divergence then
/// tendency. Features or metrics without results are skipped.
pub fn render_all_tables(records: &[ResultRecord]) -> Result<Vec<Table>, ReportError> {
    let mut tables = Vec::new();
    for feature in FeatureKind::ALL {
        for metric in [Metric::Kld, Metric::Tendency] {
            match build_table(records, feature, metric) {
                Ok(t) => tables.push(t),
                Err(ReportError::Empty { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    /// RFC 3339 / ISO 8601 timestamp.
    pub generated_at: String,
    pub config_hash: String,
    pub tables: Vec<Table>,
}

/// Long-format CSV of class probabilities, one row per class:
/// `dataset,topic,feature,ideology,source,method,class,raw_p,normalized_p`.
pub fn write_distributions<W: Write>(
    distributions: &[ClassDistribution],
    w: W,
) -> Result<usize, ReportError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "dataset",
        "topic",
        "feature",
        "ideology",
        "source",
        "method",
        "class",
        "raw_p",
        "normalized_p",
    ])?;
    let mut rows = 0;
    for d in distributions {
        let cell = &d.cell;
        for (i, class) in d.classes.iter().enumerate() {
            wr.write_record([
                cell.dataset.as_deref().unwrap_or(""),
                cell.topic.as_deref().unwrap_or(""),
                d.feature.as_str(),
                cell.ideology.map(Ideology::as_str).unwrap_or(""),
                cell.source.map(|s| s.as_str()).unwrap_or(""),
                cell.method.as_deref().unwrap_or(""),
                class,
                &d.raw[i].to_string(),
                &d.normalized[i].to_string(),
            ])?;
            rows += 1;
        }
    }
    wr.flush()?;
    Ok(rows)
}

pub fn export_distributions(
    distributions: &[ClassDistribution],
    path: &Path,
) -> Result<usize, ReportError> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_distributions(distributions, &mut w)?;
    w.flush()?;
    Ok(n)
}
