//! Clustered regression data: construction, validation, delimited-file
//! ingestion, the within (fixed-effects) transformation and indicator
//! expansion of categorical columns.
//!
//! Inference downstream is conditional on the regressors: nothing here
//! treats `X` as random.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// One cluster's outcomes and regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBlock {
    label: String,
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl ClusterBlock {
    pub fn new(label: impl Into<String>, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        if y.is_empty() {
            return Err(Error::Validation(format!("cluster {label:?} has no rows")));
        }
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!(
                "cluster {label:?}: {} outcome rows but {} regressor rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "cluster {label:?} contains a non-finite value"
            )));
        }
        Ok(Self { label, y, x })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Number of observations `N_g`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Outcomes and regressors partitioned into independent clusters.
///
/// Immutable once built; cluster order is the order supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    clusters: Vec<ClusterBlock>,
    regressor_names: Vec<String>,
    k: usize,
    n: usize,
}

impl ClusteredDataset {
    /// Builds a dataset with default regressor names `x1..xk`.
    pub fn new(clusters: Vec<ClusterBlock>) -> Result<Self> {
        let k = clusters.first().map_or(0, |c| c.x.ncols());
        let names = (1..=k).map(|j| format!("x{j}")).collect();
        Self::with_names(clusters, names)
    }

    pub fn with_names(clusters: Vec<ClusterBlock>, regressor_names: Vec<String>) -> Result<Self> {
        if clusters.len() < 2 {
            return Err(Error::Validation(format!(
                "at least 2 clusters are required, found {}",
                clusters.len()
            )));
        }
        let k = clusters[0].x.ncols();
        if k == 0 {
            return Err(Error::Validation("no regressor columns".into()));
        }
        if let Some(bad) = clusters.iter().find(|c| c.x.ncols() != k) {
            return Err(Error::Validation(format!(
                "cluster {:?} has {} regressor columns, expected {k}",
                bad.label,
                bad.x.ncols()
            )));
        }
        if regressor_names.len() != k {
            return Err(Error::Validation(format!(
                "{} regressor names for {k} columns",
                regressor_names.len()
            )));
        }
        let n = clusters.iter().map(ClusterBlock::len).sum();
        Ok(Self {
            clusters,
            regressor_names,
            k,
            n,
        })
    }

    pub fn clusters(&self) -> &[ClusterBlock] {
        &self.clusters
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    /// Number of clusters `G`.
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Regressor dimension `k`.
    pub fn num_regressors(&self) -> usize {
        self.k
    }

    /// Total observations `N`.
    pub fn num_obs(&self) -> usize {
        self.n
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(ClusterBlock::len).collect()
    }

    /// Same data with outcomes replaced cluster by cluster.
    pub fn with_outcomes(&self, outcomes: Vec<DVector<f64>>) -> Result<Self> {
        if outcomes.len() != self.clusters.len() {
            return Err(Error::Validation(
                "outcome count does not match clusters".into(),
            ));
        }
        let clusters = self
            .clusters
            .iter()
            .zip(outcomes)
            .map(|(c, y)| ClusterBlock::new(c.label.clone(), y, c.x.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::with_names(clusters, self.regressor_names.clone())
    }

    /// Writes the dataset as a delimited table with columns
    /// `cluster, y, <regressor names>`.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        let mut header = vec!["cluster".to_string(), "y".to_string()];
        header.extend(self.regressor_names.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for c in &self.clusters {
            for i in 0..c.len() {
                let mut rec = vec![c.label.clone(), format!("{}", c.y[i])];
                rec.extend((0..self.k).map(|j| format!("{}", c.x[(i, j)])));
                w.write_record(&rec).map_err(csv_io)?;
            }
        }
        w.flush()
            .map_err(|e| Error::Schema(format!("write failed: {e}")))?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Schema(format!("delimited output failed: {e}"))
}

/// Null hypothesis `lambda' beta = c0` tested at level `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    lambda: DVector<f64>,
    c0: f64,
    alpha: f64,
}

impl Hypothesis {
    pub fn new(lambda: DVector<f64>, c0: f64, alpha: f64) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().all(|&v| v == 0.0) {
            return Err(Error::Argument("lambda must be a non-zero vector".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) || !c0.is_finite() {
            return Err(Error::Argument("lambda and c0 must be finite".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Self { lambda, c0, alpha })
    }

    /// Tests the `index`-th coefficient of a `k`-vector against `c0`.
    pub fn coefficient(k: usize, index: usize, c0: f64, alpha: f64) -> Result<Self> {
        if index >= k {
            return Err(Error::Argument(format!(
                "coefficient {index} out of range for k={k}"
            )));
        }
        let mut lambda = DVector::zeros(k);
        lambda[index] = 1.0;
        Self::new(lambda, c0, alpha)
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_c0(&self, c0: f64) -> Self {
        Self { c0, ..self.clone() }
    }

    pub(crate) fn check_dimension(&self, k: usize) -> Result<()> {
        if self.lambda.len() != k {
            return Err(Error::Argument(format!(
                "lambda has length {} but the design has k={k} regressors",
                self.lambda.len()
            )));
        }
        Ok(())
    }
}

/// Column mapping for delimited input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub cluster: String,
    pub y: String,
    pub x: Vec<String>,
}

/// A header plus string rows, as read from a delimited file.
#[derive(Debug, Clone)]
pub struct DataTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl DataTable {
    pub fn read_path(path: &Path, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(file, delimiter)
    }

    pub fn read<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() {
            return Err(Error::Schema("header row is empty".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                row: i + 1,
                message: e.to_string(),
            })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    }

    /// Row indices grouped by cluster label, in first-appearance order.
    fn groups(&self, cluster_col: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            let label = row[cluster_col].as_str();
            if label.is_empty() {
                return Err(Error::Parse {
                    row: r + 1,
                    message: "blank cluster identifier".into(),
                });
            }
            let slot = *index.entry(label).or_insert_with(|| {
                groups.push((label.to_string(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(r);
        }
        Ok(groups)
    }

    fn number(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row: row + 1,
            message: format!(
                "non-numeric value {cell:?} in column {:?}",
                self.headers[col]
            ),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row: row + 1,
                message: format!(
                    "non-finite value {cell:?} in column {:?}",
                    self.headers[col]
                ),
            });
        }
        Ok(v)
    }

    /// Builds the dataset described by `schema`.
    pub fn to_dataset(&self, schema: &PanelSchema) -> Result<ClusteredDataset> {
        let cluster_col = self.column(&schema.cluster)?;
        let y_col = self.column(&schema.y)?;
        let x_cols = schema
            .x
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<Vec<_>>>()?;
        if x_cols.is_empty() {
            return Err(Error::Schema(
                "at least one regressor column is required".into(),
            ));
        }
        let groups = self.groups(cluster_col)?;
        if groups.len() < 2 {
            return Err(Error::Validation(format!(
                "at least 2 clusters are required, found {}",
                groups.len()
            )));
        }
        let k = x_cols.len();
        let mut clusters = Vec::with_capacity(groups.len());
        for (label, rows) in groups {
            let mut y = DVector::zeros(rows.len());
            let mut x = DMatrix::zeros(rows.len(), k);
            for (i, &r) in rows.iter().enumerate() {
                y[i] = self.number(r, y_col)?;
                for (j, &c) in x_cols.iter().enumerate() {
                    x[(i, j)] = self.number(r, c)?;
                }
            }
            clusters.push(ClusterBlock::new(label, y, x)?);
        }
        ClusteredDataset::with_names(clusters, schema.x.clone())
    }

    /// Values of `column` grouped exactly like [`DataTable::to_dataset`].
    pub fn factor(&self, schema: &PanelSchema, column: &str) -> Result<Factor> {
        let cluster_col = self.column(&schema.cluster)?;
        let col = self.column(column)?;
        let groups = self.groups(cluster_col)?;
        let levels = groups
            .into_iter()
            .map(|(_, rows)| {
                rows.into_iter()
                    .map(|r| self.rows[r][col].clone())
                    .collect()
            })
            .collect();
        Ok(Factor::new(column, levels))
    }
}

/// Reads a delimited file and builds the dataset described by `schema`.
pub fn load_panel(path: &Path, schema: &PanelSchema, delimiter: u8) -> Result<ClusteredDataset> {
    DataTable::read_path(path, delimiter)?.to_dataset(schema)
}

/// Categorical values aligned with the rows of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    name: String,
    levels: Vec<Vec<String>>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: Vec<Vec<String>>) -> Self {
        Self {
            name: name.into(),
            levels,
        }
    }

    /// One level per cluster: the cluster labels themselves.
    pub fn cluster_labels(d: &ClusteredDataset) -> Self {
        let levels = d
            .clusters
            .iter()
            .map(|c| vec![c.label.clone(); c.len()])
            .collect();
        Self::new("cluster", levels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Distinct levels in first-appearance order.
    pub fn distinct_levels(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for v in self.levels.iter().flatten() {
            if seen.insert(v.as_str(), ()).is_none() {
                out.push(v.clone());
            }
        }
        out
    }
}

/// Result of [`add_dummies`].
#[derive(Debug, Clone)]
pub struct DummyExpansion {
    pub dataset: ClusteredDataset,
    pub columns_added: usize,
    /// Set when the factor had a single level and nothing was added.
    pub warning: Option<String>,
}

/// Appends one indicator column per factor level except the first-seen
/// (base) level.
pub fn add_dummies(d: &ClusteredDataset, factor: &Factor) -> Result<DummyExpansion> {
    if factor.levels.len() != d.clusters.len()
        || factor
            .levels
            .iter()
            .zip(&d.clusters)
            .any(|(l, c)| l.len() != c.len())
    {
        return Err(Error::Validation(format!(
            "factor {:?} is not aligned with the dataset rows",
            factor.name
        )));
    }
    let levels = factor.distinct_levels();
    if levels.len() < 2 {
        return Ok(DummyExpansion {
            dataset: d.clone(),
            columns_added: 0,
            warning: Some(format!(
                "factor {:?} has a single level; no indicators added",
                factor.name
            )),
        });
    }
    let column_of: HashMap<&str, usize> = levels
        .iter()
        .skip(1)
        .enumerate()
        .map(|(j, l)| (l.as_str(), j))
        .collect();
    let added = levels.len() - 1;
    let k = d.k;
    let clusters = d
        .clusters
        .iter()
        .zip(&factor.levels)
        .map(|(c, lv)| {
            let mut x = c.x.clone().resize_horizontally(k + added, 0.0);
            for (i, level) in lv.iter().enumerate() {
                if let Some(&j) = column_of.get(level.as_str()) {
                    x[(i, k + j)] = 1.0;
                }
            }
            ClusterBlock::new(c.label.clone(), c.y.clone(), x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names = d.regressor_names.clone();
    names.extend(
        levels
            .iter()
            .skip(1)
            .map(|l| format!("{}={l}", factor.name)),
    );
    Ok(DummyExpansion {
        dataset: ClusteredDataset::with_names(clusters, names)?,
        columns_added: added,
        warning: None,
    })
}

fn demean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.collect::<CompensatedSum>().total() / n as f64
}

/// Subtracts each cluster's mean from its outcome and every regressor.
///
/// Columns that are constant within every cluster become identically zero;
/// dropping them is left to the caller (a fit will report the rank loss).
pub fn within_transform(d: &ClusteredDataset) -> Result<ClusteredDataset> {
    if let Some(c) = d.clusters.iter().find(|c| c.len() < 2) {
        return Err(Error::Validation(format!(
            "cluster {:?} is a singleton; the within transformation needs N_g >= 2",
            c.label
        )));
    }
    let clusters = d
        .clusters
        .iter()
        .map(|c| {
            let n = c.len();
            let y_mean = demean(c.y.iter().copied(), n);
            let y = c.y.map(|v| v - y_mean);
            let mut x = c.x.clone();
            for mut col in x.column_iter_mut() {
                let m = demean(col.iter().copied(), n);
                col.apply(|v| *v -= m);
            }
            ClusterBlock::new(c.label.clone(), y, x)
        })
        .collect::<Result<Vec<_>>>()?;
    ClusteredDataset::with_names(clusters, d.regressor_names.clone())
}
