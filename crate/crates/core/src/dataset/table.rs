//! Raw feature tables as read from CSV, and one-hot encoding of their
//! categorical columns.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A column-major table of features with an optional label column split off.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub column_names: Vec<String>,
    pub columns: Vec<Column>,
    pub labels: Option<Vec<String>>,
    /// Rows dropped at load time because a numeric cell was not finite.
    pub rejected_rows: usize,
}

impl FeatureTable {
    pub fn new(
        column_names: Vec<String>,
        columns: Vec<Column>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(Error::Dimension {
                expected: column_names.len(),
                actual: columns.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate column name {name:?}")));
            }
        }
        let n = columns
            .first()
            .map(Column::len)
            .or(labels.as_ref().map(Vec::len))
            .unwrap_or(0);
        if columns.iter().any(|c| c.len() != n) || labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::Data("columns have differing lengths".into()));
        }
        Ok(FeatureTable {
            column_names,
            columns,
            labels,
            rejected_rows: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns
            .first()
            .map(Column::len)
            .or(self.labels.as_ref().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(Column::kind).collect()
    }

    pub fn is_numeric(&self) -> bool {
        self.columns.iter().all(|c| c.kind() == ColumnKind::Numeric)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }
}

/// How to read a feature CSV.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: Option<String>,
    /// Columns forced to categorical even if every cell parses as a number.
    pub categorical: Vec<String>,
    /// Columns read but discarded (e.g. NSL-KDD's difficulty score).
    pub ignore: Vec<String>,
    /// Supplies the header for files that lack one.
    pub column_names: Option<Vec<String>>,
}

impl LoadOptions {
    pub fn with_label(label: impl Into<String>) -> Self {
        LoadOptions {
            label_column: Some(label.into()),
            ..Default::default()
        }
    }
}

/// Reads a comma-delimited, UTF-8 feature file.
///
/// A column is categorical iff any of its cells fails to parse as `f64` (or
/// it is named in `opts.categorical`). Rows with a non-finite value in a
/// numeric column are dropped and counted in `rejected_rows`.
pub fn load_feature_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(file, opts).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_feature_csv<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.column_names.is_none())
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = match &opts.column_names {
        Some(names) => names.clone(),
        None => {
            let h = rdr.headers()?;
            if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
                return Err(Error::Data("empty file (no header row)".into()));
            }
            h.iter().map(str::to_owned).collect()
        }
    };

    let width = header.len();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); width];
    let first_data_line = if opts.column_names.is_some() { 1 } else { 2 };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Data(format!(
                "row {} has {} cells, header has {}",
                i + first_data_line,
                rec.len(),
                width
            )));
        }
        for (col, cell) in raw.iter_mut().zip(rec.iter()) {
            col.push(cell.to_owned());
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(Error::Data("empty file (no data rows)".into()));
    }

    let label_idx = match &opts.label_column {
        Some(label) => Some(
            header
                .iter()
                .position(|h| h == label)
                .ok_or_else(|| Error::Data(format!("label column {label:?} not found")))?,
        ),
        None => None,
    };
    for name in opts.ignore.iter().chain(&opts.categorical) {
        if !header.contains(name) {
            return Err(Error::Data(format!("column {name:?} not found")));
        }
    }

    let forced: HashSet<&str> = opts.categorical.iter().map(String::as_str).collect();
    let ignored: HashSet<&str> = opts.ignore.iter().map(String::as_str).collect();

    let n = raw[0].len();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut labels = None;
    for (idx, (name, cells)) in header.into_iter().zip(raw).enumerate() {
        if Some(idx) == label_idx {
            labels = Some(cells);
            continue;
        }
        if ignored.contains(name.as_str()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = if forced.contains(name.as_str()) {
            None
        } else {
            cells.iter().map(|c| c.parse::<f64>().ok()).collect()
        };
        columns.push(match parsed {
            Some(values) => Column::Numeric(values),
            None => Column::Categorical(cells),
        });
        names.push(name);
    }

    let keep: Vec<bool> = (0..n)
        .map(|r| {
            columns.iter().all(|c| match c {
                Column::Numeric(v) => v[r].is_finite(),
                Column::Categorical(_) => true,
            })
        })
        .collect();
    let rejected = keep.iter().filter(|k| !**k).count();
    if rejected > 0 {
        log::warn!("rejected {rejected} rows with non-finite numeric values");
        for c in &mut columns {
            match c {
                Column::Numeric(v) => retain_mask(v, &keep),
                Column::Categorical(v) => retain_mask(v, &keep),
            }
        }
        if let Some(l) = labels.as_mut() {
            retain_mask(l, &keep);
        }
    }

    let mut table = FeatureTable::new(names, columns, labels)?;
    table.rejected_rows = rejected;
    Ok(table)
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap());
}

/// Encoding learned from one table and replayable on another.
///
/// Each categorical column becomes one indicator column per token, tokens in
/// lexicographic order. Tokens unseen at fit time encode as all zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub columns: Vec<EncodedColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted vocabulary, present for categorical columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
}

impl CategoricalEncoder {
    pub fn fit(table: &FeatureTable) -> Self {
        let columns = table
            .column_names
            .iter()
            .zip(&table.columns)
            .map(|(name, col)| match col {
                Column::Numeric(_) => EncodedColumn {
                    name: name.clone(),
                    kind: ColumnKind::Numeric,
                    vocabulary: None,
                },
                Column::Categorical(cells) => {
                    let vocab: BTreeSet<&str> = cells.iter().map(String::as_str).collect();
                    EncodedColumn {
                        name: name.clone(),
                        kind: ColumnKind::Categorical,
                        vocabulary: Some(vocab.into_iter().map(str::to_owned).collect()),
                    }
                }
            })
            .collect();
        CategoricalEncoder { columns }
    }

    pub fn output_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| match &c.vocabulary {
                Some(vocab) => vocab.iter().map(|t| format!("{}={t}", c.name)).collect(),
                None => vec![c.name.clone()],
            })
            .collect()
    }

    /// Encodes `table`, which must have the fitted column layout. Numeric
    /// cells in a column fitted as categorical are treated as tokens.
    pub fn apply(&self, table: &FeatureTable) -> Result<FeatureTable> {
        if table.column_names.len() != self.columns.len()
            || table
                .column_names
                .iter()
                .zip(&self.columns)
                .any(|(a, b)| *a != b.name)
        {
            return Err(Error::Data(format!(
                "column layout differs from the encoder's ({} vs {} columns)",
                table.n_columns(),
                self.columns.len()
            )));
        }
        let n = table.n_rows();
        let mut names = Vec::new();
        let mut out = Vec::new();
        for (spec, col) in self.columns.iter().zip(&table.columns) {
            match (&spec.vocabulary, col) {
                (None, Column::Numeric(v)) => {
                    names.push(spec.name.clone());
                    out.push(Column::Numeric(v.clone()));
                }
                (None, Column::Categorical(_)) => {
                    return Err(Error::Data(format!(
                        "column {:?} was numeric at fit time but holds non-numeric cells",
                        spec.name
                    )));
                }
                (Some(vocab), col) => {
                    let tokens: Vec<String> = match col {
                        Column::Categorical(t) => t.clone(),
                        Column::Numeric(v) => v.iter().map(|x| x.to_string()).collect(),
                    };
                    let lookup: BTreeMap<&str, usize> = vocab
                        .iter()
                        .enumerate()
                        .map(|(i, t)| (t.as_str(), i))
                        .collect();
                    let mut indicators = vec![vec![0.0; n]; vocab.len()];
                    let mut unseen = 0usize;
                    for (r, tok) in tokens.iter().enumerate() {
                        match lookup.get(tok.as_str()) {
                            Some(&k) => indicators[k][r] = 1.0,
                            None => unseen += 1,
                        }
                    }
                    if unseen > 0 {
                        log::warn!(
                            "column {:?}: {unseen} rows hold tokens unseen at fit time; encoded as all zeros",
                            spec.name
                        );
                    }
                    for (tok, ind) in vocab.iter().zip(indicators) {
                        names.push(format!("{}={tok}", spec.name));
                        out.push(Column::Numeric(ind));
                    }
                }
            }
        }
        let mut encoded = FeatureTable::new(names, out, table.labels.clone())?;
        encoded.rejected_rows = table.rejected_rows;
        Ok(encoded)
    }
}

/// One-hot encodes every categorical column using the table's own vocabulary.
pub fn encode_categoricals(table: &FeatureTable) -> FeatureTable {
    CategoricalEncoder::fit(table)
        .apply(table)
        .expect("encoder fitted on this table matches its layout")
}
