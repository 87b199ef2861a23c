//! Datasets, (sensitive, decision) bins, target bin counts and weighted
//! measures, plus CSV ingestion and holdout splitting.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BinDeficit, Error, Result};
use crate::seed;

/// Slack allowed on measure invariants (capacity and total mass).
pub const MEASURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub features: Vec<f64>,
    /// Dense code in `0..num_sensitive_classes`.
    pub sensitive: usize,
    /// 0 or 1.
    pub decision: u8,
}

impl Record {
    pub fn new(features: Vec<f64>, sensitive: usize, decision: u8) -> Self {
        Record {
            features,
            sensitive,
            decision,
        }
    }

    pub fn bin(&self) -> BinLabel {
        BinLabel::new(self.sensitive, self.decision)
    }
}

/// An ordered, non-empty collection of records sharing one feature dimension.
/// Record positions are stable identifiers: measures and samples refer to
/// indices, never to record contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    dim: usize,
    num_sensitive: usize,
}

impl Dataset {
    pub fn new(records: Vec<Record>, num_sensitive: usize) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| invalid("dataset must contain at least one record"))?;
        let dim = first.features.len();
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != dim {
                return Err(invalid(format!(
                    "record {i} has {} features, expected {dim}",
                    r.features.len()
                )));
            }
            if r.decision > 1 {
                return Err(invalid(format!("record {i} has decision {}", r.decision)));
            }
            if r.sensitive >= num_sensitive {
                return Err(invalid(format!(
                    "record {i} has sensitive code {} but only {num_sensitive} classes",
                    r.sensitive
                )));
            }
            if r.features.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("record {i} has a non-finite feature")));
            }
        }
        Ok(Dataset {
            records,
            dim,
            num_sensitive,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_sensitive_classes(&self) -> usize {
        self.num_sensitive
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn bin_of(&self, i: usize) -> BinLabel {
        self.records[i].bin()
    }

    /// All bin labels `S x Y` in canonical order.
    pub fn bin_labels(&self) -> Vec<BinLabel> {
        BinLabel::all(self.num_sensitive)
    }

    /// Record indices grouped by bin, indexed by [`BinLabel::index`].
    pub fn bin_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_sensitive * 2];
        for (i, r) in self.records.iter().enumerate() {
            out[r.bin().index()].push(i);
        }
        out
    }

    /// A new dataset made of the given records, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| invalid(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records, self.num_sensitive)
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.features[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinLabel {
    pub sensitive: usize,
    pub decision: u8,
}

impl BinLabel {
    pub fn new(sensitive: usize, decision: u8) -> Self {
        debug_assert!(decision <= 1);
        BinLabel {
            sensitive,
            decision,
        }
    }

    /// Dense position `2 * sensitive + decision`.
    pub fn index(self) -> usize {
        self.sensitive * 2 + self.decision as usize
    }

    pub fn from_index(index: usize) -> Self {
        BinLabel::new(index / 2, (index % 2) as u8)
    }

    pub fn all(num_sensitive: usize) -> Vec<BinLabel> {
        (0..num_sensitive * 2).map(BinLabel::from_index).collect()
    }
}

/// Required sample counts `k(s, y)` per bin. `total()` is `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSpec {
    counts: Vec<u64>,
}

impl BinSpec {
    pub fn new(num_sensitive: usize, counts: &BTreeMap<BinLabel, u64>) -> Result<Self> {
        let mut dense = vec![0; num_sensitive * 2];
        for (label, &k) in counts {
            if label.sensitive >= num_sensitive || label.decision > 1 {
                return Err(invalid(format!("bin label {label:?} out of range")));
            }
            dense[label.index()] = k;
        }
        Ok(BinSpec { counts: dense })
    }

    /// Counts in [`BinLabel::index`] order.
    pub fn from_dense(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || !counts.len().is_multiple_of(2) {
            return Err(invalid("dense bin counts need 2 entries per sensitive class"));
        }
        Ok(BinSpec { counts })
    }

    pub fn num_sensitive_classes(&self) -> usize {
        self.counts.len() / 2
    }

    pub fn get(&self, label: BinLabel) -> u64 {
        self.counts.get(label.index()).copied().unwrap_or(0)
    }

    pub fn dense(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BinLabel, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &k)| (BinLabel::from_index(i), k))
    }

    pub fn to_map(&self) -> BTreeMap<BinLabel, u64> {
        self.iter().collect()
    }

    /// Bins whose requirement exceeds the records available in `data`.
    pub fn deficits(&self, data: &Dataset) -> Vec<BinDeficit> {
        let hist = bin_histogram(data);
        let mut out = Vec::new();
        for (label, k) in self.iter() {
            let available = hist.get(&label).copied().unwrap_or(0) as u64;
            if k > available {
                out.push(BinDeficit {
                    label,
                    required: k,
                    available,
                });
            }
        }
        out
    }

    /// Checks the spec against `data`: matching sensitive classes, `K <= N`
    /// and every bin has enough members.
    pub fn check_feasible(&self, data: &Dataset) -> Result<()> {
        if self.num_sensitive_classes() != data.num_sensitive_classes() {
            return Err(invalid(format!(
                "bin spec has {} sensitive classes, dataset has {}",
                self.num_sensitive_classes(),
                data.num_sensitive_classes()
            )));
        }
        let deficits = self.deficits(data);
        if !deficits.is_empty() {
            return Err(Error::InfeasibleBins(deficits));
        }
        // Per-bin feasibility implies K <= N.
        debug_assert!(self.total() as usize <= data.len());
        Ok(())
    }
}

/// Nonnegative per-record weights over a dataset, each at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    weights: Vec<f64>,
    total_mass: f64,
}

impl WeightedMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let total_mass = weights.iter().sum();
        let m = WeightedMeasure {
            weights,
            total_mass,
        };
        m.check_invariants()?;
        Ok(m)
    }

    /// The honest reference: mass `total` spread evenly over `n` records.
    pub fn uniform(n: usize, total: f64) -> Self {
        let w = total / n as f64;
        WeightedMeasure {
            weights: vec![w; n],
            total_mass: total,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (i, &w) in self.weights.iter().enumerate() {
            if !(0.0..=1.0 + MEASURE_TOL).contains(&w) {
                return Err(invalid(format!("weight {i} = {w} outside [0, 1]")));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - self.total_mass).abs() > MEASURE_TOL * (1.0 + sum.abs()) {
            return Err(invalid(format!(
                "total mass {} differs from weight sum {sum}",
                self.total_mass
            )));
        }
        Ok(())
    }

    /// Mass per bin, in [`BinLabel::index`] order.
    pub fn bin_masses(&self, data: &Dataset) -> Vec<f64> {
        let mut out = vec![0.0; data.num_sensitive_classes() * 2];
        for (i, &w) in self.weights.iter().enumerate() {
            out[data.bin_of(i).index()] += w;
        }
        out
    }
}

/// Counts records per bin. Every label of `S x Y` is present, empty bins map
/// to zero.
pub fn bin_histogram(data: &Dataset) -> BTreeMap<BinLabel, usize> {
    let mut out: BTreeMap<BinLabel, usize> = data.bin_labels().into_iter().map(|l| (l, 0)).collect();
    for r in data.records() {
        *out.entry(r.bin()).or_default() += 1;
    }
    out
}

/// Randomly partitions `data` into `(rest, holdout)` with `n_holdout` records
/// in the holdout. Both parts keep the original relative order.
pub fn split_holdout(data: &Dataset, n_holdout: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n_holdout == 0 || n_holdout >= n {
        return Err(invalid(format!(
            "holdout size {n_holdout} must be in 1..{n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let (hold, rest) = idx.split_at_mut(n_holdout);
    hold.sort_unstable();
    rest.sort_unstable();
    Ok((data.subset(rest)?, data.subset(hold)?))
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// Feature columns in order; `None` takes every column other than the
    /// sensitive and decision columns, in header order.
    pub features: Option<Vec<String>>,
    pub sensitive: String,
    pub decision: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            features: None,
            sensitive: "s".into(),
            decision: "y".into(),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    read_dataset(File::open(path)?, schema)
}

/// Parses the CSV dataset format.
///
/// Sensitive cells that are all nonnegative integers are used as codes
/// directly; otherwise labels are coded densely in first-appearance order.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            row: None,
            column: name.to_string(),
            reason: "missing column".into(),
        })
    };
    let s_col = find(&schema.sensitive)?;
    let y_col = find(&schema.decision)?;
    let feature_cols: Vec<(usize, String)> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != s_col && i != y_col)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let cell = |i: usize, name: &str| {
            rec.get(i).ok_or_else(|| Error::Schema {
                row: Some(row),
                column: name.to_string(),
                reason: "missing cell".into(),
            })
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for (i, name) in &feature_cols {
            let v: f64 = cell(*i, name)?.parse().map_err(|_| Error::Schema {
                row: Some(row),
                column: name.clone(),
                reason: format!("non-numeric feature `{}`", rec.get(*i).unwrap_or("")),
            })?;
            if !v.is_finite() {
                return Err(Error::Schema {
                    row: Some(row),
                    column: name.clone(),
                    reason: "non-finite feature".into(),
                });
            }
            features.push(v);
        }
        let y_cell = cell(y_col, &schema.decision)?;
        let decision = match y_cell.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::Schema {
                    row: Some(row),
                    column: schema.decision.clone(),
                    reason: format!("decision `{y_cell}` is not 0 or 1"),
                })
            }
        };
        labels.push(cell(s_col, &schema.sensitive)?.to_string());
        rows.push((features, decision));
    }
    if rows.is_empty() {
        return Err(invalid("dataset file has no records"));
    }

    let (codes, num_sensitive) = code_sensitive(&labels);
    let records = rows
        .into_iter()
        .zip(codes)
        .map(|((features, decision), s)| Record::new(features, s, decision))
        .collect();
    Dataset::new(records, num_sensitive)
}

fn code_sensitive(labels: &[String]) -> (Vec<usize>, usize) {
    const MAX_NUMERIC_CODE: usize = 1 << 16;
    let numeric: Option<Vec<usize>> = labels
        .iter()
        .map(|l| l.parse::<usize>().ok().filter(|&v| v < MAX_NUMERIC_CODE))
        .collect();
    if let Some(codes) = numeric {
        let classes = codes.iter().max().map_or(1, |m| m + 1);
        return (codes, classes);
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let codes = labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(l.as_str()).or_insert(next)
        })
        .collect();
    (codes, seen.len())
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_dataset_to(File::create(path)?, data)
}

/// Writes the `f0..f{d-1},s,y` CSV format.
pub fn write_dataset_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push("s".into());
    header.push("y".into());
    w.write_record(&header)?;
    for r in data.records() {
        let mut row: Vec<String> = r.features.iter().map(|x| x.to_string()).collect();
        row.push(r.sensitive.to_string());
        row.push(r.decision.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec![
                Record::new(vec![0.1], 0, 0),
                Record::new(vec![0.2], 0, 1),
                Record::new(vec![0.3], 1, 0),
                Record::new(vec![0.4], 1, 1),
                Record::new(vec![0.5], 1, 1),
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let csv = "f0,f1,s,y\n0.1,0.2,0,1\n0.3,0.4,1,0\n0.5,0.6,0,1\n";
        let d = read_dataset(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.record(1).features, vec![0.3, 0.4]);
        assert_eq!(d.record(1).decision, 0);
    }

    #[test]
    fn bad_decision_names_row_and_column() {
        let csv = "f0,s,y\n0.1,0,1\n0.1,0,1\n0.1,0,1\n0.1,0,1\n0.2,1,2\n";
        let err = read_dataset(csv.as_bytes(), &Schema::default()).unwrap_err();
        match err {
            Error::Schema { row, column, .. } => {
                assert_eq!(row, Some(5));
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_column_and_bad_feature() {
        let err = read_dataset("f0,y\n0.1,1\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema { row: None, ref column, .. } if column == "s"));
        let err = read_dataset("f0,s,y\n0.1,0,1\nabc,0,1\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Schema { row: Some(2), ref column, .. } if column == "f0"));
    }

    #[test]
    fn string_labels_coded_by_first_appearance() {
        let csv = "f0,s,y\n1,male,1\n2,female,0\n3,male,0\n";
        let d = read_dataset(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(d.num_sensitive_classes(), 2);
        let codes: Vec<_> = d.records().iter().map(|r| r.sensitive).collect();
        assert_eq!(codes, vec![0, 1, 0]);
    }

    #[test]
    fn explicit_feature_columns() {
        let csv = "id,a,s,b,y\n9,1.5,0,2.5,1\n";
        let schema = Schema {
            features: Some(vec!["b".into(), "a".into()]),
            ..Schema::default()
        };
        let d = read_dataset(csv.as_bytes(), &schema).unwrap();
        assert_eq!(d.record(0).features, vec![2.5, 1.5]);
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let d = tiny();
        let (a, b) = split_holdout(&d, 2, 11).unwrap();
        assert_eq!((a.len(), b.len()), (3, 2));
        let mut all: Vec<f64> = a.records().iter().chain(b.records()).map(|r| r.features[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let (a2, b2) = split_holdout(&d, 2, 11).unwrap();
        assert_eq!((a, b), (a2, b2));
        assert!(split_holdout(&d, 5, 1).is_err());
        assert!(split_holdout(&d, 0, 1).is_err());
    }

    #[test]
    fn histogram_is_total() {
        let d = Dataset::new(
            vec![
                Record::new(vec![0.0], 0, 0),
                Record::new(vec![0.0], 0, 1),
                Record::new(vec![0.0], 1, 0),
                Record::new(vec![0.0], 1, 1),
            ],
            2,
        )
        .unwrap();
        assert!(bin_histogram(&d).values().all(|&c| c == 1));
        let h = bin_histogram(&tiny().subset(&[0, 1]).unwrap());
        assert_eq!(h.len(), 4);
        assert_eq!(h[&BinLabel::new(1, 0)], 0);
    }

    #[test]
    fn measure_invariants() {
        assert!(WeightedMeasure::new(vec![0.5, 1.0, 0.0]).is_ok());
        assert!(WeightedMeasure::new(vec![0.5, 1.1]).is_err());
        assert!(WeightedMeasure::new(vec![-0.1]).is_err());
        let u = WeightedMeasure::uniform(4, 2.0);
        assert!(u.check_invariants().is_ok());
        assert_eq!(u.weights(), &[0.5; 4]);
    }

    #[test]
    fn infeasible_spec_lists_bins() {
        let d = tiny();
        let spec = BinSpec::from_dense(vec![1, 3, 1, 1]).unwrap();
        match spec.check_feasible(&d).unwrap_err() {
            Error::InfeasibleBins(b) => {
                assert_eq!(b.len(), 1);
                assert_eq!(b[0].label, BinLabel::new(0, 1));
            }
            e => panic!("{e}"),
        }
    }
}
