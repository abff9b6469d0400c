//! Input tables: `id,pvalue` or `id,zscore` data, `id,group` partitions and
//! threshold bins.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgbh::simulate::{z_to_p, Sided};
use sgbh::{GroupPartition, PValues, ZScores};

use crate::error::{CliError, CliResult};

/// Hypotheses read from a data table, in file order.
#[derive(Debug, Clone)]
pub struct Table {
    pub ids: Vec<String>,
    pub pvalues: Vec<f64>,
    /// Present when the table carried z-scores.
    pub zscores: Option<Vec<f64>>,
}

fn open(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn read_err(path: &Path, err: csv::Error) -> CliError {
    if err.is_io_error() {
        CliError::io(path, err)
    } else {
        CliError::usage(format!("{}: {err}", path.display()))
    }
}

fn parse_number(path: &Path, line: u64, column: &str, raw: &str) -> CliResult<f64> {
    raw.parse::<f64>().map_err(|_| {
        CliError::usage(format!("{}:{line}: `{raw}` in column `{column}` is not a number", path.display()))
    })
}

pub fn read_table(path: &Path, sided: Sided) -> CliResult<Table> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| read_err(path, e))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let zscore = match cols.as_slice() {
        ["id", "pvalue"] => false,
        ["id", "zscore"] => true,
        _ => {
            return Err(CliError::usage(format!(
                "{}: expected header `id,pvalue` or `id,zscore`, found `{}`",
                path.display(),
                cols.join(",")
            )))
        }
    };
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| read_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        ids.push(record[0].to_string());
        values.push(parse_number(path, line, cols[1], &record[1])?);
    }
    if ids.is_empty() {
        return Err(CliError::shape(format!("{}: no data rows", path.display())));
    }
    let mut seen = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if let Some(first) = seen.insert(id.as_str(), i) {
            return Err(CliError::usage(format!(
                "{}: id `{id}` appears on data rows {} and {}",
                path.display(),
                first + 1,
                i + 1
            )));
        }
    }
    if zscore {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::usage(format!("{}: z-score {bad} is not finite", path.display())));
        }
        let pvalues = z_to_p(&values, sided)?.as_slice().to_vec();
        Ok(Table { ids, pvalues, zscores: Some(values) })
    } else {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::usage(format!("{}: p-value {bad} outside [0, 1]", path.display())));
        }
        Ok(Table { ids, pvalues: values, zscores: None })
    }
}

/// A partition of the table rows with printable group labels.
#[derive(Debug, Clone)]
pub struct Grouping {
    pub labels: Vec<String>,
    pub partition: GroupPartition,
}

/// Groups from an `id,group` table. Labels sort numerically when they are
/// all integers, lexically otherwise.
pub fn groups_from_file(path: &Path, table: &Table) -> CliResult<Grouping> {
    let mut reader = open(path)?;
    let headers = reader.headers().map_err(|e| read_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "group"] {
        return Err(CliError::usage(format!(
            "{}: expected header `id,group`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let index: HashMap<&str, usize> =
        table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut label_of: Vec<Option<String>> = vec![None; table.ids.len()];
    for record in reader.records() {
        let record = record.map_err(|e| read_err(path, e))?;
        let Some(&i) = index.get(&record[0]) else {
            return Err(CliError::shape(format!(
                "{}: id `{}` is not in the data table",
                path.display(),
                &record[0]
            )));
        };
        if label_of[i].replace(record[1].to_string()).is_some() {
            return Err(CliError::shape(format!("{}: id `{}` is assigned twice", path.display(), &record[0])));
        }
    }
    let mut labels_per_row = Vec::with_capacity(label_of.len());
    for (i, label) in label_of.into_iter().enumerate() {
        match label {
            Some(l) => labels_per_row.push(l),
            None => {
                return Err(CliError::shape(format!(
                    "{}: id `{}` has no group",
                    path.display(),
                    table.ids[i]
                )))
            }
        }
    }
    let mut distinct: Vec<String> = labels_per_row.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.iter().all(|l| l.parse::<i64>().is_ok()) {
        distinct.sort_by_key(|l| l.parse::<i64>().unwrap());
    }
    let dense: BTreeMap<&str, usize> =
        distinct.iter().enumerate().map(|(j, l)| (l.as_str(), j)).collect();
    let codes: Vec<usize> = labels_per_row.iter().map(|l| dense[l.as_str()]).collect();
    Ok(Grouping { partition: GroupPartition::from_labels(&codes)?, labels: distinct })
}

/// Parses `a,b` with `0 < a < b < 1`.
pub fn parse_bins(raw: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
    match parsed.as_deref() {
        Some(&[a, b]) if 0.0 < a && a < b && b < 1.0 => Ok((a, b)),
        _ => Err(CliError::usage(format!("--bins expects `a,b` with 0 < a < b < 1, got `{raw}`"))),
    }
}

/// Group 1 holds `p > b`, group 2 holds `a <= p <= b`, group 3 holds `p < a`.
pub fn groups_from_bins(table: &Table, (a, b): (f64, f64)) -> CliResult<Grouping> {
    let codes: Vec<usize> = table
        .pvalues
        .iter()
        .map(|&p| if p > b { 0 } else if p >= a { 1 } else { 2 })
        .collect();
    for (j, name) in ["p > b", "a <= p <= b", "p < a"].iter().enumerate() {
        if !codes.contains(&j) {
            return Err(CliError::shape(format!("bin {} ({name}) is empty", j + 1)));
        }
    }
    Ok(Grouping {
        labels: vec!["1".into(), "2".into(), "3".into()],
        partition: GroupPartition::from_labels(&codes)?,
    })
}

/// Keeps at most `k` rows of every group, drawn without replacement; kept rows
/// stay in file order.
pub fn subsample(table: &Table, grouping: &Grouping, k: usize, seed: u64) -> CliResult<(Table, Grouping)> {
    if k == 0 {
        return Err(CliError::usage("--subsample must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; table.ids.len()];
    for group in grouping.partition.groups() {
        if group.len() <= k {
            group.iter().for_each(|&i| keep[i] = true);
        } else {
            sample(&mut rng, group.len(), k).into_iter().for_each(|pos| keep[group[pos]] = true);
        }
    }
    let rows: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let sub = Table {
        ids: rows.iter().map(|&i| table.ids[i].clone()).collect(),
        pvalues: rows.iter().map(|&i| table.pvalues[i]).collect(),
        zscores: table.zscores.as_ref().map(|z| rows.iter().map(|&i| z[i]).collect()),
    };
    let codes: Vec<usize> = rows.iter().map(|&i| grouping.partition.group_of(i)).collect();
    let grouping = Grouping { labels: grouping.labels.clone(), partition: GroupPartition::from_labels(&codes)? };
    Ok((sub, grouping))
}

impl Table {
    pub fn pvalues(&self) -> CliResult<PValues> {
        Ok(PValues::new(self.pvalues.clone())?)
    }

    pub fn zscores(&self) -> CliResult<Option<ZScores>> {
        Ok(self.zscores.clone().map(ZScores::new).transpose()?)
    }
}
