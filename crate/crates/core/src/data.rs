//! Two-period panel data, treatment policies, and policy evaluation against
//! observed histories.
//!
//! A panel holds the pre-treatment covariates `x0`, the first-period
//! treatment `d1`, the covariates `x1` measured after the first period, the
//! second-period treatment `d2` and the final outcome `y`. Treatments are
//! dense integer ids with a label table per period.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default maximum number of distinct group labels accepted for `z0`.
pub const DEFAULT_MAX_GROUPS: usize = 20;

/// Human-readable names for the treatment ids of each period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentLabels {
    pub period1: Vec<String>,
    pub period2: Vec<String>,
}

impl TreatmentLabels {
    /// Labels `"0".."m"` for `m1 + 1` and `m2 + 1` treatments.
    pub fn numeric(n1: usize, n2: usize) -> Self {
        TreatmentLabels {
            period1: (0..n1).map(|i| i.to_string()).collect(),
            period2: (0..n2).map(|i| i.to_string()).collect(),
        }
    }
}

/// Discrete pre-treatment group labels used for group-level estimands.
///
/// Codes index into `labels`, which are kept in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Groups {
    codes: Vec<usize>,
    labels: Vec<String>,
}

impl Groups {
    pub fn from_labels<S: AsRef<str>>(values: &[S]) -> Self {
        let distinct: BTreeSet<&str> = values.iter().map(|v| v.as_ref()).collect();
        let labels: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
        let index: BTreeMap<&str, usize> =
            distinct.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let codes = values.iter().map(|v| index[v.as_ref()]).collect();
        Groups { codes, labels }
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Index of a label, if present.
    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Groups of the given rows; labels absent from the subset are dropped.
    pub fn subset(&self, rows: &[usize]) -> Groups {
        let values: Vec<&str> = rows
            .iter()
            .map(|&i| self.labels[self.codes[i]].as_str())
            .collect();
        Groups::from_labels(&values)
    }
}

/// Validated two-period observational panel. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset<T> {
    x0: Array2<T>,
    x0_names: Vec<String>,
    d1: Vec<usize>,
    x1: Array2<T>,
    x1_names: Vec<String>,
    y1_col: Option<usize>,
    d2: Vec<usize>,
    y: Vec<T>,
    z0: Option<Groups>,
    labels: TreatmentLabels,
    // (x0 | x1), the feature matrix of every second-period model
    x01: Array2<T>,
}

/// Column data for [`PanelDataset::new`].
#[derive(Clone, Debug)]
pub struct PanelParts<T> {
    pub x0: Array2<T>,
    pub x0_names: Vec<String>,
    pub d1: Vec<usize>,
    pub x1: Array2<T>,
    pub x1_names: Vec<String>,
    pub y1_col: Option<usize>,
    pub d2: Vec<usize>,
    pub y: Vec<T>,
    pub z0: Option<Groups>,
    pub labels: TreatmentLabels,
}

impl<T: Real> PanelDataset<T> {
    pub fn new(parts: PanelParts<T>) -> Result<Self> {
        let PanelParts {
            x0,
            x0_names,
            d1,
            x1,
            x1_names,
            y1_col,
            d2,
            y,
            z0,
            labels,
        } = parts;
        let n = y.len();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        let check = |what: &str, len: usize| {
            if len != n {
                Err(Error::Validation(format!(
                    "{what} has {len} rows, expected {n}"
                )))
            } else {
                Ok(())
            }
        };
        check("x0", x0.nrows())?;
        check("x1", x1.nrows())?;
        check("d1", d1.len())?;
        check("d2", d2.len())?;
        if let Some(z) = &z0 {
            check("z0", z.len())?;
        }
        if x0_names.len() != x0.ncols() {
            return Err(Error::Validation("x0 names do not match x0 columns".into()));
        }
        if x1_names.len() != x1.ncols() {
            return Err(Error::Validation("x1 names do not match x1 columns".into()));
        }
        if labels.period1.is_empty() || labels.period2.is_empty() {
            return Err(Error::Validation(
                "treatment label tables must be nonempty".into(),
            ));
        }
        if let Some(i) = d1.iter().position(|&d| d >= labels.period1.len()) {
            return Err(Error::Validation(format!(
                "row {i}: d1 = {} outside 0..={}",
                d1[i],
                labels.period1.len() - 1
            )));
        }
        if let Some(i) = d2.iter().position(|&d| d >= labels.period2.len()) {
            return Err(Error::Validation(format!(
                "row {i}: d2 = {} outside 0..={}",
                d2[i],
                labels.period2.len() - 1
            )));
        }
        if let Some(c) = y1_col {
            if c >= x1.ncols() {
                return Err(Error::Validation(format!("y1_col {c} outside x1 columns")));
            }
        }
        let finite = |m: ArrayView2<T>, what: &str| -> Result<()> {
            for ((r, c), v) in m.indexed_iter() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {r}: non-finite {what}[{c}]"
                    )));
                }
            }
            Ok(())
        };
        finite(x0.view(), "x0")?;
        finite(x1.view(), "x1")?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("row {i}: non-finite y")));
        }
        let x01 = concatenate(Axis(1), &[x0.view(), x1.view()])
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(PanelDataset {
            x0,
            x0_names,
            d1,
            x1,
            x1_names,
            y1_col,
            d2,
            y,
            z0,
            labels,
            x01,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x0(&self) -> ArrayView2<'_, T> {
        self.x0.view()
    }

    pub fn x1(&self) -> ArrayView2<'_, T> {
        self.x1.view()
    }

    /// Concatenated `(x0, x1)` history used by second-period models.
    pub fn x01(&self) -> ArrayView2<'_, T> {
        self.x01.view()
    }

    pub fn x0_names(&self) -> &[String] {
        &self.x0_names
    }

    pub fn x1_names(&self) -> &[String] {
        &self.x1_names
    }

    pub fn d1(&self) -> &[usize] {
        &self.d1
    }

    pub fn d2(&self) -> &[usize] {
        &self.d2
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn y1_col(&self) -> Option<usize> {
        self.y1_col
    }

    pub fn z0(&self) -> Option<&Groups> {
        self.z0.as_ref()
    }

    pub fn labels(&self) -> &TreatmentLabels {
        &self.labels
    }

    /// Number of first-period treatments (`M1 + 1`).
    pub fn n_treatments1(&self) -> usize {
        self.labels.period1.len()
    }

    /// Number of second-period treatments (`M2 + 1`).
    pub fn n_treatments2(&self) -> usize {
        self.labels.period2.len()
    }

    /// Values of the decision column, if one is flagged.
    pub fn decision_values(&self) -> Option<Vec<T>> {
        self.y1_col.map(|c| self.x1.column(c).to_vec())
    }

    /// Copy of the column data, e.g. to rebuild with one column replaced.
    pub fn to_parts(&self) -> PanelParts<T> {
        PanelParts {
            x0: self.x0.clone(),
            x0_names: self.x0_names.clone(),
            d1: self.d1.clone(),
            x1: self.x1.clone(),
            x1_names: self.x1_names.clone(),
            y1_col: self.y1_col,
            d2: self.d2.clone(),
            y: self.y.clone(),
            z0: self.z0.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Restrict to a subset of rows (kept in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        PanelDataset::new(PanelParts {
            x0: self.x0.select(Axis(0), rows),
            x0_names: self.x0_names.clone(),
            d1: rows.iter().map(|&i| self.d1[i]).collect(),
            x1: self.x1.select(Axis(0), rows),
            x1_names: self.x1_names.clone(),
            y1_col: self.y1_col,
            d2: rows.iter().map(|&i| self.d2[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            z0: self.z0.as_ref().map(|g| g.subset(rows)),
            labels: self.labels.clone(),
        })
    }

    /// Convert the numeric columns to another scalar type.
    pub fn cast<U: Real>(&self) -> PanelDataset<U> {
        let conv = |m: &Array2<T>| m.mapv(|v| U::of(v.as_f64()));
        PanelDataset::new(PanelParts {
            x0: conv(&self.x0),
            x0_names: self.x0_names.clone(),
            d1: self.d1.clone(),
            x1: conv(&self.x1),
            x1_names: self.x1_names.clone(),
            y1_col: self.y1_col,
            d2: self.d2.clone(),
            y: self.y.iter().map(|v| U::of(v.as_f64())).collect(),
            z0: self.z0.clone(),
            labels: self.labels.clone(),
        })
        .expect("casting a validated dataset preserves its invariants")
    }

    /// The schema under which [`save_csv`] output reloads to this dataset.
    pub fn csv_schema(&self) -> CsvSchema {
        CsvSchema {
            x0: self.x0_names.clone(),
            d1: "d1".into(),
            x1: self.x1_names.clone(),
            d2: "d2".into(),
            y: "y".into(),
            y1_col: self.y1_col.map(|c| self.x1_names[c].clone()),
            z0: self.z0.as_ref().map(|_| "z0".to_string()),
            categorical: Vec::new(),
            d1_labels: Some(self.labels.period1.clone()),
            d2_labels: Some(self.labels.period2.clone()),
            max_groups: DEFAULT_MAX_GROUPS.max(self.z0.as_ref().map_or(0, |g| g.labels().len())),
        }
    }
}

/// Column-role mapping for [`load_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub x0: Vec<String>,
    pub d1: String,
    pub x1: Vec<String>,
    pub d2: String,
    pub y: String,
    /// Binary column of `x1` used as the decision variable of dynamic policies.
    #[serde(default)]
    pub y1_col: Option<String>,
    #[serde(default)]
    pub z0: Option<String>,
    /// Covariate columns holding string categories; these are one-hot encoded
    /// in lexicographic category order with the first category dropped.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Label table for first-period treatments; its length fixes `M1 + 1`.
    #[serde(default)]
    pub d1_labels: Option<Vec<String>>,
    #[serde(default)]
    pub d2_labels: Option<Vec<String>>,
    #[serde(default = "default_max_groups")]
    pub max_groups: usize,
}

fn default_max_groups() -> usize {
    DEFAULT_MAX_GROUPS
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL"
    )
}

/// Load and validate a panel from a CSV file with a header row.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelDataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// [`load_csv`] over any reader.
pub fn read_csv<T: Real, R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<PanelDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    for c in &schema.categorical {
        if !schema.x0.contains(c) && !schema.x1.contains(c) {
            return Err(Error::Schema(format!(
                "categorical column `{c}` is not listed under x0 or x1"
            )));
        }
    }
    if let Some(v) = &schema.y1_col {
        if !schema.x1.contains(v) {
            return Err(Error::Schema(format!(
                "y1_col `{v}` must be one of the x1 columns"
            )));
        }
        if schema.categorical.contains(v) {
            return Err(Error::Schema(format!("y1_col `{v}` must be numeric")));
        }
    }
    let x0_idx: Vec<usize> = schema.x0.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let x1_idx: Vec<usize> = schema.x1.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let d1_idx = col(&schema.d1)?;
    let d2_idx = col(&schema.d2)?;
    let y_idx = col(&schema.y)?;
    let z0_idx = schema.z0.as_deref().map(col).transpose()?;

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Validation("CSV has no data rows".into()));
    }
    let cell = |r: usize, idx: usize, name: &str| -> Result<&str> {
        let v = records[r].get(idx).ok_or_else(|| Error::Parse {
            row: r,
            column: name.to_string(),
            message: "row is too short".into(),
        })?;
        if is_missing(v) {
            return Err(Error::Parse {
                row: r,
                column: name.to_string(),
                message: "missing value".into(),
            });
        }
        Ok(v.trim())
    };
    let number = |r: usize, idx: usize, name: &str| -> Result<T> {
        let v = cell(r, idx, name)?;
        match v.parse::<T>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::Parse {
                row: r,
                column: name.to_string(),
                message: format!("`{v}` is not a finite number"),
            }),
        }
    };
    let treatment = |r: usize, idx: usize, name: &str| -> Result<usize> {
        let v = cell(r, idx, name)?;
        v.parse::<usize>().map_err(|_| Error::Parse {
            row: r,
            column: name.to_string(),
            message: format!("`{v}` is not a treatment id"),
        })
    };

    let n = records.len();
    let block = |names: &[String], idx: &[usize]| -> Result<(Vec<Vec<T>>, Vec<String>)> {
        let mut cols = Vec::new();
        let mut out_names = Vec::new();
        for (name, &j) in names.iter().zip(idx) {
            if schema.categorical.contains(name) {
                let values: Vec<&str> = (0..n).map(|r| cell(r, j, name)).collect::<Result<_>>()?;
                let cats: BTreeSet<&str> = values.iter().copied().collect();
                for cat in cats.iter().skip(1) {
                    cols.push(
                        values
                            .iter()
                            .map(|v| if v == cat { T::one() } else { T::zero() })
                            .collect(),
                    );
                    out_names.push(format!("{name}={cat}"));
                }
            } else {
                cols.push((0..n).map(|r| number(r, j, name)).collect::<Result<_>>()?);
                out_names.push(name.clone());
            }
        }
        Ok((cols, out_names))
    };
    let (x0_cols, x0_names) = block(&schema.x0, &x0_idx)?;
    let (x1_cols, x1_names) = block(&schema.x1, &x1_idx)?;
    let to_matrix = |cols: &[Vec<T>]| Array2::from_shape_fn((n, cols.len()), |(r, c)| cols[c][r]);

    let d1: Vec<usize> = (0..n)
        .map(|r| treatment(r, d1_idx, &schema.d1))
        .collect::<Result<_>>()?;
    let d2: Vec<usize> = (0..n)
        .map(|r| treatment(r, d2_idx, &schema.d2))
        .collect::<Result<_>>()?;
    let y: Vec<T> = (0..n)
        .map(|r| number(r, y_idx, &schema.y))
        .collect::<Result<_>>()?;

    let labels_for =
        |given: &Option<Vec<String>>, ids: &[usize], name: &str| -> Result<Vec<String>> {
            match given {
                Some(l) => {
                    if let Some(r) = ids.iter().position(|&d| d >= l.len()) {
                        return Err(Error::Validation(format!(
                            "row {r}: {name} = {} outside 0..={}",
                            ids[r],
                            l.len() - 1
                        )));
                    }
                    Ok(l.clone())
                }
                None => {
                    let m = ids.iter().copied().max().unwrap_or(0);
                    Ok((0..=m).map(|i| i.to_string()).collect())
                }
            }
        };
    let labels = TreatmentLabels {
        period1: labels_for(&schema.d1_labels, &d1, &schema.d1)?,
        period2: labels_for(&schema.d2_labels, &d2, &schema.d2)?,
    };

    let z0 = match (z0_idx, &schema.z0) {
        (Some(j), Some(name)) => {
            let values: Vec<&str> = (0..n).map(|r| cell(r, j, name)).collect::<Result<_>>()?;
            let groups = Groups::from_labels(&values);
            if groups.labels().len() > schema.max_groups {
                return Err(Error::Validation(format!(
                    "group column `{name}` has {} distinct values, maximum is {}",
                    groups.labels().len(),
                    schema.max_groups
                )));
            }
            Some(groups)
        }
        _ => None,
    };
    let y1_col = schema
        .y1_col
        .as_ref()
        .map(|v| x1_names.iter().position(|n| n == v).expect("checked above"));

    PanelDataset::new(PanelParts {
        x0: to_matrix(&x0_cols),
        x0_names,
        d1,
        x1: to_matrix(&x1_cols),
        x1_names,
        y1_col,
        d2,
        y,
        z0,
        labels,
    })
}

/// Write a dataset under the layout described by [`PanelDataset::csv_schema`].
pub fn save_csv<T: Real>(ds: &PanelDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, file)
}

pub fn write_csv<T: Real, W: std::io::Write>(ds: &PanelDataset<T>, writer: W) -> Result<()> {
    let reserved = ["d1", "d2", "y", "z0"];
    if let Some(c) = ds
        .x0_names()
        .iter()
        .chain(ds.x1_names())
        .find(|c| reserved.contains(&c.as_str()))
    {
        return Err(Error::Schema(format!(
            "covariate name `{c}` collides with a reserved column"
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ds.x0_names().to_vec();
    header.push("d1".into());
    header.extend(ds.x1_names().iter().cloned());
    header.extend(["d2".to_string(), "y".to_string()]);
    if ds.z0().is_some() {
        header.push("z0".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut row: Vec<String> = ds.x0().row(i).iter().map(|v| v.to_string()).collect();
        row.push(ds.d1()[i].to_string());
        row.extend(ds.x1().row(i).iter().map(|v| v.to_string()));
        row.push(ds.d2()[i].to_string());
        row.push(ds.y()[i].to_string());
        if let Some(g) = ds.z0() {
            row.push(g.labels()[g.codes()[i]].clone());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Whether the second-period rule reacts to the decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Static,
    DynamicOnV1,
}

/// A pair of deterministic assignment rules over two periods.
///
/// The first period always assigns `d1_target`. In the second period a
/// dynamic policy assigns `d2_if_v1_one` to units whose decision variable
/// equals one and `d2_if_v1_zero` otherwise; a static policy ignores the
/// decision variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub kind: PolicyKind,
    pub d1_target: usize,
    pub d2_if_v1_zero: usize,
    pub d2_if_v1_one: usize,
}

impl Policy {
    pub fn static_sequence(name: impl Into<String>, d1: usize, d2: usize) -> Self {
        Policy {
            name: name.into(),
            kind: PolicyKind::Static,
            d1_target: d1,
            d2_if_v1_zero: d2,
            d2_if_v1_one: d2,
        }
    }

    pub fn dynamic(
        name: impl Into<String>,
        d1: usize,
        d2_if_v1_zero: usize,
        d2_if_v1_one: usize,
    ) -> Self {
        Policy {
            name: name.into(),
            kind: PolicyKind::DynamicOnV1,
            d1_target: d1,
            d2_if_v1_zero,
            d2_if_v1_one,
        }
    }

    pub fn is_static(&self) -> bool {
        self.kind == PolicyKind::Static
    }

    /// Second-period treatment assigned for a decision value.
    pub fn second_period(&self, v1_is_one: bool) -> usize {
        match self.kind {
            PolicyKind::Static => self.d2_if_v1_zero,
            PolicyKind::DynamicOnV1 if v1_is_one => self.d2_if_v1_one,
            PolicyKind::DynamicOnV1 => self.d2_if_v1_zero,
        }
    }

    /// Check the policy against a dataset's treatment sets and decision column.
    pub fn validate<T: Real>(&self, ds: &PanelDataset<T>) -> Result<()> {
        if self.d1_target >= ds.n_treatments1() {
            return Err(Error::Config(format!(
                "policy `{}`: first-period treatment {} does not exist",
                self.name, self.d1_target
            )));
        }
        for d2 in [self.d2_if_v1_zero, self.d2_if_v1_one] {
            if d2 >= ds.n_treatments2() {
                return Err(Error::Config(format!(
                    "policy `{}`: second-period treatment {d2} does not exist",
                    self.name
                )));
            }
        }
        match self.kind {
            PolicyKind::Static if self.d2_if_v1_zero != self.d2_if_v1_one => {
                Err(Error::Config(format!(
                    "static policy `{}` must assign one second-period treatment",
                    self.name
                )))
            }
            PolicyKind::Static => Ok(()),
            PolicyKind::DynamicOnV1 => {
                let v = ds.decision_values().ok_or_else(|| {
                    Error::Config(format!(
                        "dynamic policy `{}` requires a decision column (y1_col)",
                        self.name
                    ))
                })?;
                if let Some(i) = v.iter().position(|&x| x != T::zero() && x != T::one()) {
                    return Err(Error::Config(format!(
                        "dynamic policy `{}`: decision column is not binary at row {i}",
                        self.name
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Per-unit treatments the policy assigns, evaluated at the observed
/// decision variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyTargets {
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
}

pub fn policy_targets<T: Real>(ds: &PanelDataset<T>, pol: &Policy) -> Result<PolicyTargets> {
    pol.validate(ds)?;
    let n = ds.n();
    let g1 = vec![pol.d1_target; n];
    let g2 = match (pol.kind, ds.y1_col()) {
        (PolicyKind::Static, _) => vec![pol.d2_if_v1_zero; n],
        (PolicyKind::DynamicOnV1, Some(c)) => ds
            .x1()
            .column(c)
            .iter()
            .map(|&v| pol.second_period(v == T::one()))
            .collect(),
        (PolicyKind::DynamicOnV1, None) => unreachable!("validated above"),
    };
    Ok(PolicyTargets { g1, g2 })
}

/// Policy-compliance indicators `1{D1 = g1}` and `1{D1 = g1, D2 = g2}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FollowIndicators {
    pub i1: Vec<bool>,
    pub i12: Vec<bool>,
}

impl FollowIndicators {
    pub fn count_i1(&self) -> usize {
        self.i1.iter().filter(|&&b| b).count()
    }

    pub fn count_i12(&self) -> usize {
        self.i12.iter().filter(|&&b| b).count()
    }
}

pub fn follow_indicators<T: Real>(ds: &PanelDataset<T>, pol: &Policy) -> Result<FollowIndicators> {
    let targets = policy_targets(ds, pol)?;
    Ok(indicators_from_targets(ds, &targets))
}

pub(crate) fn indicators_from_targets<T: Real>(
    ds: &PanelDataset<T>,
    t: &PolicyTargets,
) -> FollowIndicators {
    let i1: Vec<bool> = ds.d1().iter().zip(&t.g1).map(|(d, g)| d == g).collect();
    let i12 = i1
        .iter()
        .zip(ds.d2().iter().zip(&t.g2))
        .map(|(&a, (d, g))| a && d == g)
        .collect();
    FollowIndicators { i1, i12 }
}
