//! Report rendering and parsing.
//!
//! Rates are written as percentages with two decimals; sweep values use the
//! shortest exact decimal form. Rendering a parsed report reproduces the
//! input byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ComparisonReport, Detector, EvalReport, ReportMetadata};
use crate::dataset::format_real;
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "zeroday-report/1";
pub const COMPARISON_FORMAT: &str = "zeroday-comparison/1";
const OVERALL: &str = "overall";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    JsonText,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [
        ReportFormat::Csv,
        ReportFormat::JsonText,
        ReportFormat::Markdown,
    ];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::JsonText => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub class: String,
    pub a_rate: f64,
    pub b_rate: f64,
    /// Detector with the higher rate; `None` on a tie.
    pub winner: Option<String>,
}

pub trait Render {
    fn render(&self, format: ReportFormat) -> String;
}

/// Writes `report` to `path` in `format`.
pub fn emit_report(
    report: &impl Render,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.render(format)).map_err(|e| Error::io(path, e))
}

fn pct(rate: f64) -> String {
    format!("{:.2}", rate * 100.0)
}

fn pct_value(rate: f64) -> f64 {
    pct(rate).parse().expect("formatted number")
}

fn parse_pct(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad percentage {s:?}")))?;
    Ok(v / 100.0)
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number {s:?}")))
}

fn parse_count(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad count {s:?}")))
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn csv_rows(text: &str) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_owned).collect()))
        .collect()
}

fn sweep_header(detector: Detector, v: f64) -> String {
    format!("{}={}", detector.parameter(), format_real(v))
}

fn parse_sweep_header(s: &str) -> Result<(Detector, f64)> {
    let (p, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Format(format!("bad sweep column {s:?}")))?;
    let d = Detector::from_parameter(p)
        .ok_or_else(|| Error::Format(format!("unknown sweep parameter {p:?}")))?;
    Ok((d, parse_real(v)?))
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_cells(line: &str) -> Vec<String> {
    line.trim()
        .trim_start_matches('|')
        .trim_end_matches('|')
        .split('|')
        .map(|c| c.trim().to_owned())
        .collect()
}

/// Serialized form of an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportDocument {
    format: String,
    detector: Detector,
    dataset_id: String,
    parameter: String,
    sweep: Vec<f64>,
    rate_unit: String,
    benign_label: String,
    rows: Vec<RowDocument>,
    overall_accuracy: Vec<f64>,
    metadata: ReportMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RowDocument {
    class: String,
    role: String,
    instances: usize,
    rates: Vec<f64>,
}

impl EvalReport {
    /// Benign row first, then attack classes: `(class, instances, rates)`.
    fn table(&self) -> Vec<(&str, usize, &[f64])> {
        let mut rows = vec![(
            self.benign_label.as_str(),
            self.benign_count,
            self.benign_specificity.as_slice(),
        )];
        for (c, r) in &self.per_class_recall {
            rows.push((
                c.as_str(),
                self.class_counts.get(c).copied().unwrap_or(0),
                r.as_slice(),
            ));
        }
        rows
    }

    fn total(&self) -> usize {
        self.benign_count + self.class_counts.values().sum::<usize>()
    }

    fn to_csv(&self) -> String {
        let mut rows = Vec::new();
        let mut header = vec!["class".to_owned(), "instances".to_owned()];
        header.extend(self.sweep.iter().map(|v| sweep_header(self.detector, *v)));
        rows.push(header);
        for (c, n, rates) in self.table() {
            let mut r = vec![c.to_owned(), n.to_string()];
            r.extend(rates.iter().map(|v| pct(*v)));
            rows.push(r);
        }
        let mut r = vec![OVERALL.to_owned(), self.total().to_string()];
        r.extend(self.overall_accuracy.iter().map(|v| pct(*v)));
        rows.push(r);
        csv_string(&rows)
    }

    fn to_markdown(&self) -> String {
        let mut out = format!("### {} on {}\n\n", self.detector.name(), self.dataset_id);
        let mut header = vec!["class".to_owned(), "instances".to_owned()];
        header.extend(self.sweep.iter().map(|v| sweep_header(self.detector, *v)));
        out += &md_row(&header);
        let mut sep = vec!["---".to_owned()];
        sep.extend(std::iter::repeat_n("---:".to_owned(), header.len() - 1));
        out += &md_row(&sep);
        for (c, n, rates) in self.table() {
            let mut r = vec![c.to_owned(), n.to_string()];
            r.extend(rates.iter().map(|v| pct(*v)));
            out += &md_row(&r);
        }
        let acc: Vec<String> = self
            .sweep
            .iter()
            .zip(&self.overall_accuracy)
            .map(|(v, a)| format!("{} {}%", sweep_header(self.detector, *v), pct(*a)))
            .collect();
        out += &format!(
            "\nOverall accuracy ({} rows): {}\n",
            self.total(),
            acc.join(", ")
        );
        out
    }

    fn to_document(&self) -> ReportDocument {
        let rows = self
            .table()
            .into_iter()
            .enumerate()
            .map(|(k, (c, n, rates))| RowDocument {
                class: c.to_owned(),
                role: if k == 0 { "specificity" } else { "recall" }.to_owned(),
                instances: n,
                rates: rates.iter().map(|v| pct_value(*v)).collect(),
            })
            .collect();
        ReportDocument {
            format: REPORT_FORMAT.into(),
            detector: self.detector,
            dataset_id: self.dataset_id.clone(),
            parameter: self.detector.parameter().into(),
            sweep: self.sweep.clone(),
            rate_unit: "percent".into(),
            benign_label: self.benign_label.clone(),
            rows,
            overall_accuracy: self
                .overall_accuracy
                .iter()
                .map(|v| pct_value(*v))
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// Rebuilds a report from rendered text. CSV and markdown carry no
    /// metadata; CSV also carries no dataset id.
    pub fn parse(text: &str, format: ReportFormat) -> Result<Self> {
        let r = match format {
            ReportFormat::JsonText => Self::from_document(serde_json::from_str(text)?)?,
            ReportFormat::Csv => Self::from_grid(String::new(), csv_rows(text)?)?,
            ReportFormat::Markdown => Self::from_markdown(text)?,
        };
        r.validate()?;
        Ok(r)
    }

    fn from_document(doc: ReportDocument) -> Result<Self> {
        if doc.format != REPORT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported report format {:?}",
                doc.format
            )));
        }
        let mut rows = doc.rows.into_iter();
        let benign = rows
            .next()
            .ok_or_else(|| Error::Format("report has no benign row".into()))?;
        let mut per_class_recall = BTreeMap::new();
        let mut class_counts = BTreeMap::new();
        for r in rows {
            class_counts.insert(r.class.clone(), r.instances);
            per_class_recall.insert(r.class, r.rates.iter().map(|v| v / 100.0).collect());
        }
        Ok(EvalReport {
            detector: doc.detector,
            dataset_id: doc.dataset_id,
            sweep: doc.sweep,
            benign_label: doc.benign_label,
            benign_count: benign.instances,
            benign_specificity: benign.rates.iter().map(|v| v / 100.0).collect(),
            per_class_recall,
            class_counts,
            overall_accuracy: doc.overall_accuracy.iter().map(|v| v / 100.0).collect(),
            metadata: doc.metadata,
        })
    }

    /// Header row, benign row, attack rows, then the overall row.
    fn from_grid(dataset_id: String, grid: Vec<Vec<String>>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::Format(
                "report table needs header, benign and overall rows".into(),
            ));
        }
        let header = &grid[0];
        if header.len() < 3 || header[0] != "class" || header[1] != "instances" {
            return Err(Error::Format(
                "report header must start with class,instances".into(),
            ));
        }
        let parsed = header[2..]
            .iter()
            .map(|h| parse_sweep_header(h))
            .collect::<Result<Vec<_>>>()?;
        let detector = parsed[0].0;
        if parsed.iter().any(|(d, _)| *d != detector) {
            return Err(Error::Format("mixed sweep parameters".into()));
        }
        let sweep: Vec<f64> = parsed.iter().map(|(_, v)| *v).collect();
        let width = header.len();
        let mut body = Vec::new();
        for row in &grid[1..] {
            if row.len() != width {
                return Err(Error::Format(format!(
                    "row {:?} has {} cells, expected {width}",
                    row[0],
                    row.len()
                )));
            }
            let rates = row[2..]
                .iter()
                .map(|s| parse_pct(s))
                .collect::<Result<Vec<_>>>()?;
            body.push((row[0].clone(), parse_count(&row[1])?, rates));
        }
        let (last, first) = (body.pop().expect("len >= 2"), body.remove(0));
        if last.0 != OVERALL {
            return Err(Error::Format(format!("last row must be {OVERALL:?}")));
        }
        let mut per_class_recall = BTreeMap::new();
        let mut class_counts = BTreeMap::new();
        for (c, n, r) in body {
            class_counts.insert(c.clone(), n);
            per_class_recall.insert(c, r);
        }
        Ok(EvalReport {
            detector,
            dataset_id,
            sweep,
            benign_label: first.0,
            benign_count: first.1,
            benign_specificity: first.2,
            per_class_recall,
            class_counts,
            overall_accuracy: last.2,
            metadata: ReportMetadata::default(),
        })
    }

    fn from_markdown(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let title = lines.next().unwrap_or_default();
        let dataset_id = title
            .strip_prefix("### ")
            .and_then(|t| t.split_once(" on "))
            .map(|(_, id)| id.to_owned())
            .ok_or_else(|| Error::Format("markdown report lacks its title".into()))?;
        let table: Vec<&str> = lines.clone().filter(|l| l.starts_with('|')).collect();
        if table.len() < 3 {
            return Err(Error::Format("markdown table too short".into()));
        }
        let mut grid: Vec<Vec<String>> = table
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != 1)
            .map(|(_, l)| md_cells(l))
            .collect();
        let overall_line = lines
            .find_map(|l| l.strip_prefix("Overall accuracy ("))
            .ok_or_else(|| {
                Error::Format("markdown report lacks the overall accuracy line".into())
            })?;
        let (count, rest) = overall_line
            .split_once(" rows): ")
            .ok_or_else(|| Error::Format("bad overall accuracy line".into()))?;
        let mut overall = vec![OVERALL.to_owned(), count.to_owned()];
        for item in rest.split(", ") {
            let v = item
                .rsplit_once(' ')
                .and_then(|(_, p)| p.strip_suffix('%'))
                .ok_or_else(|| Error::Format(format!("bad accuracy entry {item:?}")))?;
            overall.push(v.to_owned());
        }
        grid.push(overall);
        Self::from_grid(dataset_id, grid)
    }
}

impl Render for EvalReport {
    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::JsonText => {
                let mut s =
                    serde_json::to_string_pretty(&self.to_document()).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComparisonDocument {
    format: String,
    dataset_id: String,
    a: SideDocument,
    b: SideDocument,
    rate_unit: String,
    rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SideDocument {
    detector: Detector,
    parameter: String,
    value: f64,
}

impl ComparisonReport {
    fn column(detector: Detector, value: f64) -> String {
        format!("{}@{}", detector.short(), sweep_header(detector, value))
    }

    fn grid(&self) -> Vec<Vec<String>> {
        let mut rows = vec![vec![
            "class".to_owned(),
            Self::column(self.a_detector, self.a_value),
            Self::column(self.b_detector, self.b_value),
            "winner".to_owned(),
        ]];
        for r in &self.rows {
            rows.push(vec![
                r.class.clone(),
                pct(r.a_rate),
                pct(r.b_rate),
                r.winner.clone().unwrap_or_else(|| "tie".into()),
            ]);
        }
        rows
    }

    /// Two-series data for an external bar chart.
    pub fn plot_csv(&self) -> String {
        let (a, b) = if self.a_detector == self.b_detector {
            ("a_rate".to_owned(), "b_rate".to_owned())
        } else {
            (
                format!("{}_rate", self.a_detector.short()),
                format!("{}_rate", self.b_detector.short()),
            )
        };
        let mut rows = vec![vec!["class".to_owned(), a, b]];
        for r in &self.rows {
            rows.push(vec![r.class.clone(), pct(r.a_rate), pct(r.b_rate)]);
        }
        csv_string(&rows)
    }

    pub fn parse(text: &str, format: ReportFormat) -> Result<Self> {
        match format {
            ReportFormat::JsonText => {
                let doc: ComparisonDocument = serde_json::from_str(text)?;
                if doc.format != COMPARISON_FORMAT {
                    return Err(Error::Format(format!(
                        "unsupported comparison format {:?}",
                        doc.format
                    )));
                }
                Ok(ComparisonReport {
                    dataset_id: doc.dataset_id,
                    a_detector: doc.a.detector,
                    b_detector: doc.b.detector,
                    a_value: doc.a.value,
                    b_value: doc.b.value,
                    rows: doc
                        .rows
                        .into_iter()
                        .map(|r| ComparisonRow {
                            a_rate: r.a_rate / 100.0,
                            b_rate: r.b_rate / 100.0,
                            ..r
                        })
                        .collect(),
                })
            }
            ReportFormat::Csv => Self::from_grid(String::new(), csv_rows(text)?),
            ReportFormat::Markdown => {
                let mut lines = text.lines();
                let id = lines
                    .next()
                    .and_then(|t| t.strip_prefix("### comparison on "))
                    .ok_or_else(|| Error::Format("markdown comparison lacks its title".into()))?
                    .to_owned();
                let grid = lines
                    .filter(|l| l.starts_with('|'))
                    .enumerate()
                    .filter(|(k, _)| *k != 1)
                    .map(|(_, l)| md_cells(l))
                    .collect();
                Self::from_grid(id, grid)
            }
        }
    }

    fn from_grid(dataset_id: String, grid: Vec<Vec<String>>) -> Result<Self> {
        let header = grid
            .first()
            .ok_or_else(|| Error::Format("empty comparison".into()))?;
        if header.len() != 4 || header[0] != "class" || header[3] != "winner" {
            return Err(Error::Format(
                "comparison header must be class,a,b,winner".into(),
            ));
        }
        let side = |s: &str| -> Result<(Detector, f64)> {
            let (_, h) = s
                .split_once('@')
                .ok_or_else(|| Error::Format(format!("bad comparison column {s:?}")))?;
            parse_sweep_header(h)
        };
        let (a_detector, a_value) = side(&header[1])?;
        let (b_detector, b_value) = side(&header[2])?;
        let rows = grid[1..]
            .iter()
            .map(|r| {
                if r.len() != 4 {
                    return Err(Error::Format("comparison rows need 4 cells".into()));
                }
                Ok(ComparisonRow {
                    class: r[0].clone(),
                    a_rate: parse_pct(&r[1])?,
                    b_rate: parse_pct(&r[2])?,
                    winner: if r[3] == "tie" {
                        None
                    } else {
                        Some(r[3].clone())
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(ComparisonReport {
            dataset_id,
            a_detector,
            b_detector,
            a_value,
            b_value,
            rows,
        })
    }
}

impl Render for ComparisonReport {
    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => csv_string(&self.grid()),
            ReportFormat::Markdown => {
                let grid = self.grid();
                let mut out = format!("### comparison on {}\n\n", self.dataset_id);
                out += &md_row(&grid[0]);
                out += &md_row(&["---", "---:", "---:", "---"].map(String::from));
                for r in &grid[1..] {
                    out += &md_row(r);
                }
                out
            }
            ReportFormat::JsonText => {
                let side = |d: Detector, v: f64| SideDocument {
                    detector: d,
                    parameter: d.parameter().into(),
                    value: v,
                };
                let doc = ComparisonDocument {
                    format: COMPARISON_FORMAT.into(),
                    dataset_id: self.dataset_id.clone(),
                    a: side(self.a_detector, self.a_value),
                    b: side(self.b_detector, self.b_value),
                    rate_unit: "percent".into(),
                    rows: self
                        .rows
                        .iter()
                        .map(|r| ComparisonRow {
                            a_rate: pct_value(r.a_rate),
                            b_rate: pct_value(r.b_rate),
                            ..r.clone()
                        })
                        .collect(),
                };
                let mut s = serde_json::to_string_pretty(&doc).expect("comparison serializes");
                s.push('\n');
                s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> EvalReport {
        EvalReport {
            detector: Detector::Autoencoder,
            dataset_id: "nsl-kdd train".into(),
            sweep: vec![0.2, 0.25, 0.3],
            benign_label: "normal".into(),
            benign_count: 16837,
            benign_specificity: vec![0.8903, 0.9315, 0.95612345],
            per_class_recall: [
                ("DoS".to_owned(), vec![0.98153, 0.97, 0.9]),
                ("U2R".to_owned(), vec![1.0, 1.0, 0.0]),
            ]
            .into_iter()
            .collect(),
            class_counts: [("DoS".to_owned(), 45927), ("U2R".to_owned(), 52)]
                .into_iter()
                .collect(),
            overall_accuracy: vec![0.9296, 0.9, 0.1 / 3.0],
            metadata: ReportMetadata {
                pipeline_id: Some("abc".into()),
                model_ids: vec!["def".into()],
                seed: Some(7),
                loss_kind: Some("mae".into()),
                timestamp: None,
                notes: vec![super::super::ACCURACY_DEFINITION.into()],
            },
        }
    }

    #[test]
    fn csv_layout() {
        let s = sample().render(ReportFormat::Csv);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(
            lines[0],
            "class,instances,threshold=0.2,threshold=0.25,threshold=0.3"
        );
        assert_eq!(lines[1], "normal,16837,89.03,93.15,95.61");
        assert_eq!(lines[2], "DoS,45927,98.15,97.00,90.00");
        assert_eq!(lines[4], "overall,62816,92.96,90.00,3.33");
    }

    #[test]
    fn markdown_rows() {
        let s = sample().render(ReportFormat::Markdown);
        let table = s.lines().filter(|l| l.starts_with('|')).count();
        // header + delimiter + one row per class (benign included)
        assert_eq!(table, 2 + 3);
    }

    #[test]
    fn json_carries_metadata() {
        let s = sample().render(ReportFormat::JsonText);
        assert!(s.contains("\"pipeline_id\": \"abc\""));
        assert!(s.contains("98.15"));
    }

    #[test]
    fn every_format_round_trips() {
        for f in ReportFormat::ALL {
            let first = sample().render(f);
            let again = EvalReport::parse(&first, f).unwrap().render(f);
            assert_eq!(first, again, "{f:?}");
        }
    }

    #[test]
    fn comparison_round_trips() {
        let r = sample();
        let mut svm = r.clone();
        svm.detector = Detector::Ocsvm;
        svm.sweep = vec![0.1, 0.15, 0.2];
        svm.per_class_recall.get_mut("DoS").unwrap()[0] = 0.99;
        let c = super::super::compare(&r, &svm, 0.2, 0.1).unwrap();
        assert_eq!(c.rows[1].winner.as_deref(), Some("ocsvm"));
        assert_eq!(c.rows[2].winner, None);
        for f in ReportFormat::ALL {
            let first = c.render(f);
            let again = ComparisonReport::parse(&first, f).unwrap().render(f);
            assert_eq!(first, again, "{f:?}");
        }
        assert!(c
            .plot_csv()
            .starts_with("class,ae_rate,svm_rate\nnormal,89.03,89.03\n"));
    }
}
