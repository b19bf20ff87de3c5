//! Survival datasets with subgroup structure: loading, validation,
//! standardization, stratified splitting and the interval grouping used by
//! the grouped-data Cox likelihood.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative offset of the terminal interval boundary beyond the largest
/// observed time.
pub const TERMINAL_BOUNDARY_FACTOR: f64 = 1.0 + 1e-6;

/// One patient: observed time, event indicator, covariates and subgroup label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for an observed event, `false` for right censoring.
    pub event: bool,
    pub covariates: Vec<f64>,
    /// Subgroup label, 1-based.
    pub subgroup: usize,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>, subgroup: usize) -> Self {
        Self {
            time,
            event,
            covariates,
            subgroup,
        }
    }
}

/// A validated collection of records sharing a covariate dimension, where
/// every subgroup label in `1..=n_subgroups` occurs at least once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    covariate_names: Vec<String>,
    n_subgroups: usize,
}

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let p = covariate_names.len();
        let mut n_subgroups = 0;
        for (row, rec) in records.iter().enumerate() {
            validate_record(rec, p).map_err(|message| Error::InvalidRecord { row, message })?;
            n_subgroups = n_subgroups.max(rec.subgroup);
        }
        let mut sizes = vec![0usize; n_subgroups];
        for rec in &records {
            sizes[rec.subgroup - 1] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::EmptySubgroup(empty + 1));
        }
        if records.is_empty() {
            return Err(Error::Schema("dataset has no records".into()));
        }
        Ok(Self {
            records,
            covariate_names,
            n_subgroups,
        })
    }

    /// Builds a dataset with generated covariate names `x1..xp`.
    pub fn from_records(records: Vec<SurvivalRecord>) -> Result<Self> {
        let p = records.first().map(|r| r.covariates.len()).unwrap_or(0);
        Self::new(records, default_covariate_names(p))
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_subgroups(&self) -> usize {
        self.n_subgroups
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subgroup_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_subgroups];
        for rec in &self.records {
            sizes[rec.subgroup - 1] += 1;
        }
        sizes
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// Records of one subgroup (1-based label), in dataset order.
    pub fn subgroup_records(&self, label: usize) -> Vec<SurvivalRecord> {
        self.records
            .iter()
            .filter(|r| r.subgroup == label)
            .cloned()
            .collect()
    }

    /// Copy of the dataset with every record relabelled to subgroup 1.
    pub fn pooled(&self) -> Dataset {
        let records = self
            .records
            .iter()
            .map(|r| SurvivalRecord {
                subgroup: 1,
                ..r.clone()
            })
            .collect();
        Dataset {
            records,
            covariate_names: self.covariate_names.clone(),
            n_subgroups: 1,
        }
    }

    fn with_records(&self, records: Vec<SurvivalRecord>) -> Result<Dataset> {
        Dataset::new(records, self.covariate_names.clone())
    }
}

pub fn default_covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

fn validate_record(rec: &SurvivalRecord, p: usize) -> std::result::Result<(), String> {
    if !(rec.time.is_finite() && rec.time > 0.0) {
        return Err(format!("observed time must be positive, got {}", rec.time));
    }
    if rec.covariates.len() != p {
        return Err(format!(
            "expected {p} covariates, got {}",
            rec.covariates.len()
        ));
    }
    if let Some(j) = rec.covariates.iter().position(|x| !x.is_finite()) {
        return Err(format!("covariate {} is missing or non-finite", j + 1));
    }
    if rec.subgroup == 0 {
        return Err("subgroup labels start at 1".into());
    }
    Ok(())
}

/// Covariate matrix (rows = records) of a record slice.
pub fn covariate_matrix(records: &[SurvivalRecord], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(records.len(), p, |m, i| records[m].covariates[i])
}

// ---------------------------------------------------------------------------
// CSV input / output
// ---------------------------------------------------------------------------

/// Column mapping for [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub time: String,
    pub status: String,
    pub subgroup: String,
    /// Explicit covariate columns; `None` takes every remaining column.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            status: "status".into(),
            subgroup: "subgroup".into(),
            covariates: None,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

/// Reads a dataset from any CSV source. Lines starting with `#` are ignored.
pub fn read_dataset<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let time_col = find(&schema.time)?;
    let status_col = find(&schema.status)?;
    let subgroup_col = find(&schema.subgroup)?;
    let covariate_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| c != time_col && c != status_col && c != subgroup_col)
            .collect(),
    };
    let covariate_names: Vec<String> = covariate_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        // header is line 1
        let line = row.position().map(|p| p.line() as usize).unwrap_or(idx + 2);
        if row.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let field = |c: usize| -> Result<f64> {
            let raw = &row[c];
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::Parse {
                    row: line,
                    column: headers[c].clone(),
                    message: "missing value".into(),
                });
            }
            raw.parse::<f64>().map_err(|e| Error::Parse {
                row: line,
                column: headers[c].clone(),
                message: format!("`{raw}`: {e}"),
            })
        };
        let time = field(time_col)?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::InvalidRecord {
                row: line,
                message: format!("observed time must be positive, got {time}"),
            });
        }
        let status = field(status_col)?;
        let event = match status {
            1.0 => true,
            0.0 => false,
            s => {
                return Err(Error::Parse {
                    row: line,
                    column: headers[status_col].clone(),
                    message: format!("status must be 0 or 1, got {s}"),
                })
            }
        };
        let subgroup = field(subgroup_col)?;
        if subgroup < 1.0 || subgroup.fract() != 0.0 {
            return Err(Error::Parse {
                row: line,
                column: headers[subgroup_col].clone(),
                message: format!("subgroup must be a positive integer, got {subgroup}"),
            });
        }
        let covariates = covariate_cols
            .iter()
            .map(|&c| field(c))
            .collect::<Result<Vec<_>>>()?;
        records.push(SurvivalRecord::new(time, event, covariates, subgroup as usize));
    }
    Dataset::new(records, covariate_names)
}

/// Writes the dataset as CSV (`time,status,subgroup,<covariates>`), with an
/// optional leading `# ...` comment line.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset, comment: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = vec!["time".to_string(), "status".into(), "subgroup".into()];
    header.extend(dataset.covariate_names().iter().cloned());
    wtr.write_record(&header)?;
    for rec in dataset.records() {
        let mut row = vec![
            format_f64(rec.time),
            if rec.event { "1".into() } else { "0".into() },
            rec.subgroup.to_string(),
        ];
        row.extend(rec.covariates.iter().map(|&x| format_f64(x)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    PerSubgroup,
    Pooled,
}

/// Column means and sample standard deviations of one scope unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleUnit {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub scope: Scope,
    /// One unit for pooled scope, otherwise one per subgroup (index = label − 1).
    pub units: Vec<ScaleUnit>,
}

impl StandardizationParams {
    pub fn fit(train: &Dataset, scope: Scope) -> Result<Self> {
        let p = train.p();
        let groups: Vec<(String, Vec<&SurvivalRecord>)> = match scope {
            Scope::Pooled => vec![("pooled data".into(), train.records().iter().collect())],
            Scope::PerSubgroup => (1..=train.n_subgroups())
                .map(|s| {
                    (
                        format!("subgroup {s}"),
                        train.records().iter().filter(|r| r.subgroup == s).collect(),
                    )
                })
                .collect(),
        };
        let mut units = Vec::with_capacity(groups.len());
        for (scope_name, recs) in groups {
            let n = recs.len();
            if n < 2 {
                return Err(Error::InvalidParameter(format!(
                    "{scope_name} needs at least 2 training records to standardize"
                )));
            }
            let mut means = vec![0.0; p];
            let mut sds = vec![0.0; p];
            for i in 0..p {
                let mean = recs.iter().map(|r| r.covariates[i]).sum::<f64>() / n as f64;
                let ss: f64 = recs.iter().map(|r| (r.covariates[i] - mean).powi(2)).sum();
                let sd = (ss / (n - 1) as f64).sqrt();
                if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
                    return Err(Error::ConstantColumn {
                        column: train.covariate_names()[i].clone(),
                        scope: scope_name,
                    });
                }
                means[i] = mean;
                sds[i] = sd;
            }
            units.push(ScaleUnit { means, sds });
        }
        Ok(Self { scope, units })
    }

    fn unit_for(&self, label: usize) -> Result<&ScaleUnit> {
        let idx = match self.scope {
            Scope::Pooled => 0,
            Scope::PerSubgroup => label - 1,
        };
        self.units.get(idx).ok_or_else(|| {
            Error::Dimension(format!("no standardization parameters for subgroup {label}"))
        })
    }

    pub fn apply_record(&self, rec: &SurvivalRecord) -> Result<SurvivalRecord> {
        let unit = self.unit_for(rec.subgroup)?;
        if unit.means.len() != rec.covariates.len() {
            return Err(Error::Dimension(format!(
                "record has {} covariates, parameters cover {}",
                rec.covariates.len(),
                unit.means.len()
            )));
        }
        let covariates = rec
            .covariates
            .iter()
            .zip(unit.means.iter().zip(&unit.sds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect();
        Ok(SurvivalRecord {
            covariates,
            ..rec.clone()
        })
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        let records = dataset
            .records()
            .iter()
            .map(|r| self.apply_record(r))
            .collect::<Result<Vec<_>>>()?;
        dataset.with_records(records)
    }
}

/// Standardizes training covariates to mean 0 / sample SD 1 per scope unit
/// and scales the test set with the training parameters.
pub fn standardize(
    train: &Dataset,
    test: &Dataset,
    scope: Scope,
) -> Result<(Dataset, Dataset, StandardizationParams)> {
    let params = StandardizationParams::fit(train, scope)?;
    Ok((params.apply(train)?, params.apply(test)?, params))
}

// ---------------------------------------------------------------------------
// Interval grouping
// ---------------------------------------------------------------------------

/// Partition `0 = c_0 < … < c_J` of the time axis with the risk and failure
/// sets of each interval `(c_{g-1}, c_g]`. Set members index the record
/// slice the grouping was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedData {
    boundaries: Vec<f64>,
    risk_sets: Vec<Vec<usize>>,
    failure_sets: Vec<Vec<usize>>,
    event_counts: Vec<usize>,
    /// Zero-based interval containing each record's observed time.
    interval_of: Vec<usize>,
    events: Vec<bool>,
}

/// Groups one subgroup's records on the partition given by its distinct
/// event times plus a terminal boundary just beyond the largest time.
pub fn build_grouped_data(records: &[SurvivalRecord]) -> Result<GroupedData> {
    let mut event_times: Vec<f64> = records.iter().filter(|r| r.event).map(|r| r.time).collect();
    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let max_time = records.iter().map(|r| r.time).fold(0.0, f64::max);
    let mut boundaries = Vec::with_capacity(event_times.len() + 2);
    boundaries.push(0.0);
    boundaries.extend(event_times);
    boundaries.push(max_time * TERMINAL_BOUNDARY_FACTOR);
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    GroupedData::from_boundaries(boundaries, &times, &events)
}

impl GroupedData {
    /// Groups arbitrary `(time, event)` pairs on a caller-chosen partition.
    pub fn from_boundaries(boundaries: Vec<f64>, times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Dimension("times and events differ in length".into()));
        }
        if boundaries.len() < 2 || boundaries[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "boundaries must start at 0 and define at least one interval".into(),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("boundaries must be strictly increasing".into()));
        }
        let last = *boundaries.last().unwrap();
        if let Some(t) = times.iter().find(|&&t| !(t > 0.0 && t < last)) {
            return Err(Error::InvalidParameter(format!(
                "observed time {t} lies outside (0, {last})"
            )));
        }
        let j = boundaries.len() - 1;
        let interval_of: Vec<usize> = times
            .iter()
            .map(|&t| boundaries[1..].partition_point(|&c| c < t))
            .collect();
        let mut risk_sets = vec![Vec::new(); j];
        let mut failure_sets = vec![Vec::new(); j];
        for (m, &g_m) in interval_of.iter().enumerate() {
            for set in risk_sets.iter_mut().take(g_m + 1) {
                set.push(m);
            }
            if events[m] {
                failure_sets[g_m].push(m);
            }
        }
        let event_counts = failure_sets.iter().map(Vec::len).collect();
        Ok(Self {
            boundaries,
            risk_sets,
            failure_sets,
            event_counts,
            interval_of,
            events: events.to_vec(),
        })
    }

    /// A partition with no records, used to run the sampler on the prior.
    pub fn empty(boundaries: Vec<f64>) -> Result<Self> {
        Self::from_boundaries(boundaries, &[], &[])
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn n_records(&self) -> usize {
        self.interval_of.len()
    }

    pub fn risk_sets(&self) -> &[Vec<usize>] {
        &self.risk_sets
    }

    pub fn failure_sets(&self) -> &[Vec<usize>] {
        &self.failure_sets
    }

    pub fn event_counts(&self) -> &[usize] {
        &self.event_counts
    }

    pub fn interval_of(&self) -> &[usize] {
        &self.interval_of
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Splits within every (subgroup × event) stratum, sending
/// round-half-up(fraction · size) records to the training set.
pub fn stratified_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut strata: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for (idx, rec) in dataset.records().iter().enumerate() {
        strata.entry((rec.subgroup, rec.event as u8)).or_default().push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for ((subgroup, event), mut members) in strata {
        if members.len() < 2 {
            return Err(Error::StratumTooSmall {
                subgroup,
                event,
                size: members.len(),
            });
        }
        let n_train = round_half_up(train_fraction * members.len() as f64).min(members.len());
        members.shuffle(&mut rng);
        for &idx in &members[..n_train] {
            in_train[idx] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (idx, rec) in dataset.records().iter().enumerate() {
        if in_train[idx] {
            train.push(rec.clone());
        } else {
            test.push(rec.clone());
        }
    }
    Ok((dataset.with_records(train)?, dataset.with_records(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: bool, x: &[f64], s: usize) -> SurvivalRecord {
        SurvivalRecord::new(time, event, x.to_vec(), s)
    }

    #[test]
    fn reads_small_csv() {
        let csv = "time,status,subgroup,g1,g2\n1.5,1,1,0.1,0.2\n2.0,0,1,0.3,0.4\n3.0,1,2,0.5,0.6\n4.0,1,2,0.7,0.8\n";
        let ds = read_dataset(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.subgroup_sizes(), vec![2, 2]);
        assert_eq!(ds.covariate_names(), &["g1".to_string(), "g2".to_string()]);
        assert_eq!(ds.records()[1], rec(2.0, false, &[0.3, 0.4], 1));
    }

    #[test]
    fn zero_time_is_rejected_with_row() {
        let csv = "time,status,subgroup,g1\n1.0,1,1,0.1\n0,1,1,0.2\n";
        match read_dataset(csv.as_bytes(), &ColumnSchema::default()) {
            Err(Error::InvalidRecord { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_covariate_is_rejected() {
        let csv = "time,status,subgroup,g1\n1.0,1,1,\n";
        match read_dataset(csv.as_bytes(), &ColumnSchema::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "g1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_status_column_is_schema_error() {
        let csv = "time,subgroup,g1\n1.0,1,0.5\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &ColumnSchema::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn gap_in_subgroup_labels_is_an_error() {
        let csv = "time,status,subgroup,g1\n1.0,1,1,0.1\n2.0,1,3,0.2\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &ColumnSchema::default()),
            Err(Error::EmptySubgroup(2))
        ));
    }

    #[test]
    fn standardize_hand_example() {
        let train = Dataset::from_records(vec![
            rec(1.0, true, &[1.0], 1),
            rec(2.0, true, &[2.0], 1),
            rec(3.0, true, &[3.0], 1),
        ])
        .unwrap();
        let test = Dataset::from_records(vec![rec(1.0, true, &[2.0], 1)]).unwrap();
        let (tr, te, params) = standardize(&train, &test, Scope::PerSubgroup).unwrap();
        let xs: Vec<f64> = tr.records().iter().map(|r| r.covariates[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(te.records()[0].covariates[0], 0.0);
        assert_eq!(params.units[0].sds, vec![1.0]);
    }

    #[test]
    fn pooled_and_per_subgroup_scopes_differ() {
        let train = Dataset::from_records(vec![
            rec(1.0, true, &[0.0], 1),
            rec(1.0, true, &[2.0], 1),
            rec(1.0, true, &[10.0], 2),
            rec(1.0, true, &[14.0], 2),
        ])
        .unwrap();
        let (per, _, _) = standardize(&train, &train, Scope::PerSubgroup).unwrap();
        let per_x: Vec<f64> = per.records().iter().map(|r| r.covariates[0]).collect();
        // subgroup 1: mean 1, sd sqrt(2); subgroup 2: mean 12, sd sqrt(8)
        let expect = [
            -1.0 / 2f64.sqrt(),
            1.0 / 2f64.sqrt(),
            -2.0 / 8f64.sqrt(),
            2.0 / 8f64.sqrt(),
        ];
        for (a, b) in per_x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let (pooled, _, params) = standardize(&train, &train, Scope::Pooled).unwrap();
        let mean = 26.0 / 4.0;
        let sd = ([0.0f64, 2.0, 10.0, 14.0].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert_eq!(params.units.len(), 1);
        for (r, x) in pooled.records().iter().zip([0.0, 2.0, 10.0, 14.0]) {
            assert!((r.covariates[0] - (x - mean) / sd).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_names_column_and_scope() {
        let train = Dataset::new(
            vec![
                rec(1.0, true, &[1.0, 5.0], 1),
                rec(2.0, true, &[2.0, 5.0], 1),
            ],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        match StandardizationParams::fit(&train, Scope::PerSubgroup) {
            Err(Error::ConstantColumn { column, scope }) => {
                assert_eq!(column, "b");
                assert_eq!(scope, "subgroup 1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grouping_without_ties() {
        let recs = vec![rec(2.0, true, &[0.0], 1), rec(5.0, true, &[0.0], 1)];
        let gd = build_grouped_data(&recs).unwrap();
        assert_eq!(gd.boundaries()[..3], [0.0, 2.0, 5.0]);
        assert_eq!(gd.n_intervals(), 3);
        assert_eq!(gd.failure_sets()[0], vec![0]);
        assert_eq!(gd.risk_sets()[0], vec![0, 1]);
        assert_eq!(gd.failure_sets()[1], vec![1]);
        assert!(gd.failure_sets()[2].is_empty());
    }

    #[test]
    fn tied_event_times_share_a_failure_set() {
        let recs = vec![rec(3.0, true, &[0.0], 1), rec(3.0, true, &[0.0], 1)];
        let gd = build_grouped_data(&recs).unwrap();
        assert_eq!(gd.event_counts()[0], 2);
        assert_eq!(gd.failure_sets()[0], vec![0, 1]);
    }

    #[test]
    fn censored_between_events_is_at_risk_only() {
        let recs = vec![
            rec(2.0, true, &[0.0], 1),
            rec(4.0, false, &[0.0], 1),
            rec(5.0, true, &[0.0], 1),
        ];
        let gd = build_grouped_data(&recs).unwrap();
        // interval (2, 5] has index 1
        assert!(gd.risk_sets()[1].contains(&1));
        assert!(gd.failure_sets().iter().all(|d| !d.contains(&1)));
        assert_eq!(gd.interval_of()[1], 1);
    }

    #[test]
    fn censoring_tied_with_event_stays_at_risk() {
        let recs = vec![rec(2.0, true, &[0.0], 1), rec(2.0, false, &[0.0], 1)];
        let gd = build_grouped_data(&recs).unwrap();
        assert_eq!(gd.risk_sets()[0], vec![0, 1]);
        assert_eq!(gd.failure_sets()[0], vec![0]);
    }

    #[test]
    fn no_events_is_an_error() {
        let recs = vec![rec(2.0, false, &[0.0], 1)];
        assert!(matches!(build_grouped_data(&recs), Err(Error::NoEvents)));
    }

    #[test]
    fn split_ten_record_stratum() {
        let recs: Vec<_> = (0..10).map(|i| rec(1.0 + i as f64, true, &[i as f64], 1)).collect();
        let ds = Dataset::from_records(recs).unwrap();
        let (train, test) = stratified_split(&ds, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn split_rounds_half_up() {
        // 0.5 * 5 = 2.5 -> 3
        let recs: Vec<_> = (0..5).map(|i| rec(1.0 + i as f64, true, &[i as f64], 1)).collect();
        let recs = recs
            .into_iter()
            .chain((0..2).map(|i| rec(1.0, false, &[i as f64], 1)))
            .collect();
        let ds = Dataset::from_records(recs).unwrap();
        let (train, _) = stratified_split(&ds, 0.5, 1).unwrap();
        assert_eq!(train.records().iter().filter(|r| r.event).count(), 3);
    }

    #[test]
    fn split_determinism() {
        let recs: Vec<_> = (0..40)
            .map(|i| rec(1.0 + i as f64, i % 3 != 0, &[i as f64], 1 + i % 2))
            .collect();
        let ds = Dataset::from_records(recs).unwrap();
        let a = stratified_split(&ds, 0.8, 11).unwrap();
        let b = stratified_split(&ds, 0.8, 11).unwrap();
        let c = stratified_split(&ds, 0.8, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        assert_eq!(a.0.len(), c.0.len());
    }

    #[test]
    fn tiny_stratum_is_named() {
        let recs = vec![
            rec(1.0, true, &[0.0], 1),
            rec(2.0, true, &[1.0], 1),
            rec(3.0, false, &[2.0], 1),
        ];
        let ds = Dataset::from_records(recs).unwrap();
        match stratified_split(&ds, 0.8, 1) {
            Err(Error::StratumTooSmall { subgroup, event, size }) => {
                assert_eq!((subgroup, event, size), (1, 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
