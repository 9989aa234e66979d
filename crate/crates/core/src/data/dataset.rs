use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for an absent cell. Never a domain value.
pub const NULL: u8 = u8::MAX;

/// Column declaration in the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSchema {
    Categorical {
        name: String,
        values: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bin_edges: Option<Vec<f64>>,
    },
    Numeric {
        name: String,
    },
}

impl ColumnSchema {
    pub fn name(&self) -> &str {
        match self {
            ColumnSchema::Categorical { name, .. } | ColumnSchema::Numeric { name } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// All CSV columns, in header order, target included.
    pub columns: Vec<ColumnSchema>,
    pub target: String,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    /// Dense codes `0..domain.len()`, or [`NULL`].
    Coded {
        domain: Vec<String>,
        bin_edges: Option<Vec<f64>>,
        cells: Vec<u8>,
    },
    /// Raw numbers awaiting discretization; NaN is NULL.
    Numeric(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn coded(name: impl Into<String>, domain: Vec<String>, cells: Vec<u8>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Coded {
                domain,
                bin_edges: None,
                cells,
            },
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Coded { cells, .. } => cells.len(),
            ColumnData::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> Result<&[u8]> {
        match &self.data {
            ColumnData::Coded { cells, .. } => Ok(cells),
            ColumnData::Numeric(_) => Err(Error::NotDiscretized(self.name.clone())),
        }
    }

    pub fn domain(&self) -> Result<&[String]> {
        match &self.data {
            ColumnData::Coded { domain, .. } => Ok(domain),
            ColumnData::Numeric(_) => Err(Error::NotDiscretized(self.name.clone())),
        }
    }

    pub fn bin_edges(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Coded { bin_edges, .. } => bin_edges.as_deref(),
            ColumnData::Numeric(_) => None,
        }
    }

    fn schema(&self) -> ColumnSchema {
        match &self.data {
            ColumnData::Coded {
                domain, bin_edges, ..
            } => ColumnSchema::Categorical {
                name: self.name.clone(),
                values: domain.clone(),
                bin_edges: bin_edges.clone(),
            },
            ColumnData::Numeric(_) => ColumnSchema::Numeric {
                name: self.name.clone(),
            },
        }
    }

    fn render(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Coded { domain, cells, .. } => match cells[row] {
                NULL => String::new(),
                c => domain[c as usize].clone(),
            },
            ColumnData::Numeric(v) if v[row].is_nan() => String::new(),
            ColumnData::Numeric(v) => v[row].to_string(),
        }
    }
}

/// Discretized tabular data with a designated target column.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Column>,
    pub target: Column,
}

impl Dataset {
    pub fn new(features: Vec<Column>, target: Column) -> Result<Self> {
        let ds = Dataset { features, target };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.features
            .iter()
            .find(|c| c.name == name)
            .or((self.target.name == name).then_some(&self.target))
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn schema(&self) -> Schema {
        let mut columns: Vec<_> = self.features.iter().map(Column::schema).collect();
        columns.push(self.target.schema());
        Schema {
            columns,
            target: self.target.name.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        for col in self.features.iter().chain(std::iter::once(&self.target)) {
            if col.len() != n {
                return Err(Error::Shape(format!(
                    "column `{}` has {} cells, expected {n}",
                    col.name,
                    col.len()
                )));
            }
            if let ColumnData::Coded { domain, cells, .. } = &col.data {
                if domain.len() >= NULL as usize {
                    return Err(Error::DomainTooLarge(col.name.clone()));
                }
                if let Some(row) = cells
                    .iter()
                    .position(|&c| c != NULL && c as usize >= domain.len())
                {
                    return Err(Error::OutOfDomain {
                        row,
                        column: col.name.clone(),
                        value: cells[row].to_string(),
                    });
                }
            }
        }
        match &self.target.data {
            ColumnData::Numeric(_) => Err(Error::NotDiscretized(self.target.name.clone())),
            ColumnData::Coded { cells, .. } => match cells.iter().position(|&c| c == NULL) {
                Some(row) => Err(Error::NullTarget {
                    column: self.target.name.clone(),
                    row,
                }),
                None => Ok(()),
            },
        }
    }

    /// Reads a comma-separated file whose header matches `schema`.
    /// Empty cells are NULL.
    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader(reader: impl std::io::Read, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let expected: Vec<String> = schema.columns.iter().map(|c| c.name().to_string()).collect();
        let found: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if found != expected {
            return Err(Error::Header { expected, found });
        }
        if !expected.contains(&schema.target) {
            return Err(Error::UnknownColumn(schema.target.clone()));
        }

        let mut builders: Vec<Builder> = schema.columns.iter().map(Builder::new).collect();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != builders.len() {
                return Err(Error::RowWidth {
                    row,
                    expected: builders.len(),
                    found: record.len(),
                });
            }
            for (b, cell) in builders.iter_mut().zip(record.iter()) {
                b.push(row, cell.trim())?;
            }
        }

        let mut features = Vec::new();
        let mut target = None;
        for b in builders {
            let col = b.finish();
            if col.name == schema.target {
                target = Some(col);
            } else {
                features.push(col);
            }
        }
        Dataset::new(features, target.expect("target checked above"))
    }

    /// Writes the CSV (features then target) and returns the matching schema.
    pub fn save(&self, csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        crate::io::ensure_parent(csv_path)?;
        let mut w = csv::Writer::from_path(csv_path)?;
        let cols: Vec<&Column> = self.features.iter().chain([&self.target]).collect();
        w.write_record(cols.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows() {
            w.write_record(cols.iter().map(|c| c.render(row)))?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        self.schema().save(schema_path)
    }

    /// Replaces a numeric column with equal-width bin indices in `[0, n_bins)`.
    ///
    /// A value `v` lands in the bin counting the edges strictly below it, so
    /// bins are `(-inf, e1], (e1, e2], ..., (e_last, inf)`.
    pub fn discretize(&self, column: &str, n_bins: usize) -> Result<Self> {
        if !(2..=9).contains(&n_bins) {
            return Err(Error::InvalidBins(n_bins));
        }
        let values = self.numeric_values(column)?;
        let (lo, hi) = values
            .iter()
            .filter(|v| !v.is_nan())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let width = (hi - lo) / n_bins as f64;
        let edges: Vec<f64> = (1..n_bins).map(|k| lo + width * k as f64).collect();
        self.bin_with_edges(column, values, edges, n_bins)
    }

    /// Bins a numeric column at explicit edges, producing `edges.len() + 1` bins.
    pub fn discretize_at(&self, column: &str, edges: &[f64]) -> Result<Self> {
        if edges.is_empty() || edges.len() > 8 || edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidBins(edges.len() + 1));
        }
        let values = self.numeric_values(column)?;
        self.bin_with_edges(column, values, edges.to_vec(), edges.len() + 1)
    }

    fn numeric_values(&self, column: &str) -> Result<Vec<f64>> {
        let col = self.column(column)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok(v.clone()),
            ColumnData::Coded { domain, cells, .. } => {
                // categorical labels that all parse as numbers can be binned too
                let parsed: Option<Vec<f64>> =
                    domain.iter().map(|d| d.parse::<f64>().ok()).collect();
                let parsed = parsed.ok_or_else(|| Error::NonNumeric(column.to_string()))?;
                Ok(cells
                    .iter()
                    .map(|&c| if c == NULL { f64::NAN } else { parsed[c as usize] })
                    .collect())
            }
        }
    }

    fn bin_with_edges(
        &self,
        column: &str,
        values: Vec<f64>,
        edges: Vec<f64>,
        n_bins: usize,
    ) -> Result<Self> {
        let cells = values
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    NULL
                } else {
                    edges.iter().filter(|&&e| v > e).count() as u8
                }
            })
            .collect();
        let binned = Column {
            name: column.to_string(),
            data: ColumnData::Coded {
                domain: (0..n_bins).map(|b| format!("b{b}")).collect(),
                bin_edges: Some(edges),
                cells,
            },
        };
        let mut out = self.clone();
        if out.target.name == column {
            out.target = binned;
        } else {
            let idx = out.column_index(column)?;
            out.features[idx] = binned;
        }
        out.validate()?;
        Ok(out)
    }
}

enum Builder {
    Coded {
        name: String,
        domain: Vec<String>,
        bin_edges: Option<Vec<f64>>,
        cells: Vec<u8>,
    },
    Numeric {
        name: String,
        values: Vec<f64>,
    },
}

impl Builder {
    fn new(schema: &ColumnSchema) -> Self {
        match schema {
            ColumnSchema::Categorical {
                name,
                values,
                bin_edges,
            } => Builder::Coded {
                name: name.clone(),
                domain: values.clone(),
                bin_edges: bin_edges.clone(),
                cells: Vec::new(),
            },
            ColumnSchema::Numeric { name } => Builder::Numeric {
                name: name.clone(),
                values: Vec::new(),
            },
        }
    }

    fn push(&mut self, row: usize, cell: &str) -> Result<()> {
        match self {
            Builder::Coded {
                name,
                domain,
                cells,
                ..
            } => {
                if cell.is_empty() {
                    cells.push(NULL);
                    return Ok(());
                }
                let code = domain
                    .iter()
                    .position(|d| d == cell)
                    .ok_or_else(|| Error::OutOfDomain {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    })?;
                cells.push(code as u8);
            }
            Builder::Numeric { name, values } => {
                if cell.is_empty() {
                    values.push(f64::NAN);
                    return Ok(());
                }
                let v = cell.parse::<f64>().map_err(|_| Error::OutOfDomain {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
        }
        Ok(())
    }

    fn finish(self) -> Column {
        match self {
            Builder::Coded {
                name,
                domain,
                bin_edges,
                cells,
            } => Column {
                name,
                data: ColumnData::Coded {
                    domain,
                    bin_edges,
                    cells,
                },
            },
            Builder::Numeric { name, values } => Column {
                name,
                data: ColumnData::Numeric(values),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_schema() -> Schema {
        Schema {
            columns: vec![
                ColumnSchema::Categorical {
                    name: "a".into(),
                    values: vec!["0".into(), "1".into()],
                    bin_edges: None,
                },
                ColumnSchema::Numeric { name: "x".into() },
                ColumnSchema::Categorical {
                    name: "y".into(),
                    values: vec!["no".into(), "yes".into()],
                    bin_edges: None,
                },
            ],
            target: "y".into(),
        }
    }

    #[test]
    fn header_only_file_gives_empty_dataset() {
        let ds = Dataset::from_reader("a,x,y\n".as_bytes(), &binary_schema()).unwrap();
        assert_eq!(ds.n_rows(), 0);
    }

    #[test]
    fn out_of_domain_value_is_rejected() {
        let err = Dataset::from_reader("a,x,y\n99,1.0,no\n".as_bytes(), &binary_schema());
        assert!(matches!(err, Err(Error::OutOfDomain { row: 0, .. })));
    }

    #[test]
    fn malformed_width_and_null_target() {
        let err = Dataset::from_reader("a,x,y\n0,1.0\n".as_bytes(), &binary_schema());
        assert!(matches!(err, Err(Error::RowWidth { row: 0, expected: 3, found: 2 })));
        let err = Dataset::from_reader("a,x,y\n0,1.0,\n".as_bytes(), &binary_schema());
        assert!(matches!(err, Err(Error::NullTarget { row: 0, .. })));
    }

    #[test]
    fn null_cells_are_preserved() {
        let ds = Dataset::from_reader("a,x,y\n,,no\n1,2.5,yes\n".as_bytes(), &binary_schema())
            .unwrap();
        assert_eq!(ds.features[0].cells().unwrap(), &[NULL, 1]);
        match &ds.features[1].data {
            ColumnData::Numeric(v) => assert!(v[0].is_nan() && v[1] == 2.5),
            _ => panic!("expected numeric"),
        }
    }

    #[test]
    fn equal_width_binning() {
        let ds = Dataset::from_reader(
            "a,x,y\n0,0,no\n0,5,no\n1,10,yes\n0,,no\n".as_bytes(),
            &binary_schema(),
        )
        .unwrap();
        let binned = ds.discretize("x", 2).unwrap();
        let col = binned.column("x").unwrap();
        assert_eq!(col.cells().unwrap(), &[0, 0, 1, NULL]);
        assert_eq!(col.bin_edges().unwrap(), &[5.0]);
    }

    #[test]
    fn constant_column_lands_in_first_bin() {
        let ds = Dataset::from_reader("a,x,y\n0,3,no\n1,3,yes\n".as_bytes(), &binary_schema())
            .unwrap();
        let binned = ds.discretize("x", 4).unwrap();
        assert_eq!(binned.column("x").unwrap().cells().unwrap(), &[0, 0]);
    }

    #[test]
    fn many_numeric_labels_collapse_to_nine_bins() {
        let values: Vec<String> = (0..20).map(|v| v.to_string()).collect();
        let col = Column::coded("c", values, (0..20).collect());
        let target = Column::coded("y", vec!["0".into()], vec![0; 20]);
        let ds = Dataset::new(vec![col], target).unwrap();
        let binned = ds.discretize("c", 9).unwrap();
        let cells = binned.column("c").unwrap().cells().unwrap();
        let distinct: std::collections::BTreeSet<_> = cells.iter().collect();
        assert_eq!(distinct.len(), 9);
        assert!(matches!(ds.discretize("c", 1), Err(Error::InvalidBins(1))));
    }

    #[test]
    fn non_numeric_labels_cannot_be_binned() {
        let ds = Dataset::from_reader("a,x,y\n0,1,no\n".as_bytes(), &binary_schema()).unwrap();
        assert!(matches!(ds.discretize("y", 2), Err(Error::NonNumeric(_))));
    }
}
