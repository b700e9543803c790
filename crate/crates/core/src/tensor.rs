//! Dense binary response tensor, vote counts, and focus sets.
//!
//! Cells are stored unit-major as `values[(s * A + a) * Q + q]`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::schema::Schema;

/// One long-form judgment row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub unit_id: String,
    pub annotator_id: String,
    pub criterion_id: String,
    pub value: u8,
}

/// Units removed during construction because at least one cell was unobserved.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub dropped_count: usize,
    pub dropped_units: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResponseTensor {
    unit_ids: Vec<String>,
    annotator_ids: Vec<String>,
    criterion_ids: Vec<String>,
    values: Vec<u8>,
}

impl ResponseTensor {
    /// Builds a tensor from an already dense array; `values` must be 0/1.
    pub fn from_dense(
        unit_ids: Vec<String>,
        annotator_ids: Vec<String>,
        criterion_ids: Vec<String>,
        values: Vec<u8>,
    ) -> Result<Self> {
        for (axis, ids) in [
            ("unit", &unit_ids),
            ("annotator", &annotator_ids),
            ("criterion", &criterion_ids),
        ] {
            let mut seen = HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(AuditError::InvalidArgument(format!("duplicate {axis} id `{dup}`")));
            }
        }
        let expected = unit_ids.len() * annotator_ids.len() * criterion_ids.len();
        if values.len() != expected {
            return Err(AuditError::InvalidArgument(format!(
                "dense array has {} cells, shape requires {expected}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(AuditError::InvalidArgument("tensor values must be 0 or 1".into()));
        }
        Ok(ResponseTensor {
            unit_ids,
            annotator_ids,
            criterion_ids,
            values,
        })
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }

    pub fn criterion_ids(&self) -> &[String] {
        &self.criterion_ids
    }

    pub fn num_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn num_annotators(&self) -> usize {
        self.annotator_ids.len()
    }

    pub fn num_criteria(&self) -> usize {
        self.criterion_ids.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_units(), self.num_annotators(), self.num_criteria())
    }

    #[inline]
    pub fn get(&self, unit: usize, annotator: usize, criterion: usize) -> u8 {
        let (a, q) = (self.annotator_ids.len(), self.criterion_ids.len());
        self.values[(unit * a + annotator) * q + criterion]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn annotator_index(&self, id: &str) -> Option<usize> {
        self.annotator_ids.iter().position(|a| a == id)
    }

    pub fn criterion_index(&self, id: &str) -> Option<usize> {
        self.criterion_ids.iter().position(|q| q == id)
    }

    /// Restricts the annotator axis to `annotators`, in the given order.
    pub fn select_annotators(&self, annotators: &[String]) -> Result<ResponseTensor> {
        let idx = annotators
            .iter()
            .map(|id| {
                self.annotator_index(id)
                    .ok_or_else(|| AuditError::UnknownAnnotator(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let q = self.num_criteria();
        let mut values = Vec::with_capacity(self.num_units() * idx.len() * q);
        for s in 0..self.num_units() {
            for &a in &idx {
                let start = (s * self.num_annotators() + a) * q;
                values.extend_from_slice(&self.values[start..start + q]);
            }
        }
        ResponseTensor::from_dense(
            self.unit_ids.clone(),
            annotators.to_vec(),
            self.criterion_ids.clone(),
            values,
        )
    }

    /// Long-form rows in unit, annotator, criterion order.
    pub fn to_records(&self) -> Vec<ResponseRecord> {
        let mut out = Vec::with_capacity(self.values.len());
        for (s, unit) in self.unit_ids.iter().enumerate() {
            for (a, annotator) in self.annotator_ids.iter().enumerate() {
                for (q, criterion) in self.criterion_ids.iter().enumerate() {
                    out.push(ResponseRecord {
                        unit_id: unit.clone(),
                        annotator_id: annotator.clone(),
                        criterion_id: criterion.clone(),
                        value: self.get(s, a, q),
                    });
                }
            }
        }
        out
    }
}

/// Assembles a fully observed tensor from long-form rows.
///
/// The criterion axis is the schema's criterion list. Units and annotators are
/// ordered by first appearance. A unit missing any (annotator, criterion) cell
/// is dropped whole and listed in the returned [`DropReport`].
pub fn build_tensor(
    rows: &[ResponseRecord],
    schema: &Schema,
) -> Result<(ResponseTensor, DropReport)> {
    let criterion_ids = schema.criterion_ids();
    let criterion_pos: HashMap<&str, usize> = criterion_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_pos: HashMap<&str, usize> = HashMap::new();
    let mut annotator_ids: Vec<String> = Vec::new();
    let mut annotator_pos: HashMap<&str, usize> = HashMap::new();
    let mut criterion_seen = vec![false; criterion_ids.len()];

    for row in rows {
        let Some(&q) = criterion_pos.get(row.criterion_id.as_str()) else {
            return Err(AuditError::UnknownCriterion(row.criterion_id.clone()));
        };
        if row.value > 1 {
            return Err(AuditError::InvalidArgument(format!(
                "value {} for (unit `{}`, annotator `{}`, criterion `{}`) is not 0 or 1",
                row.value, row.unit_id, row.annotator_id, row.criterion_id
            )));
        }
        criterion_seen[q] = true;
        if !unit_pos.contains_key(row.unit_id.as_str()) {
            unit_pos.insert(&row.unit_id, unit_ids.len());
            unit_ids.push(row.unit_id.clone());
        }
        if !annotator_pos.contains_key(row.annotator_id.as_str()) {
            annotator_pos.insert(&row.annotator_id, annotator_ids.len());
            annotator_ids.push(row.annotator_id.clone());
        }
    }
    if let Some(q) = criterion_seen.iter().position(|seen| !seen) {
        if !rows.is_empty() {
            return Err(AuditError::InvalidArgument(format!(
                "schema criterion `{}` has no responses",
                criterion_ids[q]
            )));
        }
    }

    let (n_a, n_q) = (annotator_ids.len(), criterion_ids.len());
    // 0/1 observed, 2 = unobserved
    const UNSEEN: u8 = 2;
    let mut cells = vec![UNSEEN; unit_ids.len() * n_a * n_q];
    for row in rows {
        let s = unit_pos[row.unit_id.as_str()];
        let a = annotator_pos[row.annotator_id.as_str()];
        let q = criterion_pos[row.criterion_id.as_str()];
        let cell = &mut cells[(s * n_a + a) * n_q + q];
        if *cell != UNSEEN && *cell != row.value {
            return Err(AuditError::ConflictingCell {
                unit: row.unit_id.clone(),
                annotator: row.annotator_id.clone(),
                criterion: row.criterion_id.clone(),
            });
        }
        *cell = row.value;
    }

    let block = n_a * n_q;
    let mut kept_ids = Vec::with_capacity(unit_ids.len());
    let mut values = Vec::with_capacity(cells.len());
    let mut report = DropReport::default();
    for (s, unit) in unit_ids.into_iter().enumerate() {
        let unit_cells = &cells[s * block..(s + 1) * block];
        if unit_cells.contains(&UNSEEN) {
            report.dropped_units.push(unit);
        } else {
            values.extend_from_slice(unit_cells);
            kept_ids.push(unit);
        }
    }
    report.dropped_count = report.dropped_units.len();

    let tensor = ResponseTensor::from_dense(kept_ids, annotator_ids, criterion_ids, values)?;
    Ok((tensor, report))
}

/// Positive vote counts per (unit, criterion).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoteTable {
    unit_ids: Vec<String>,
    criterion_ids: Vec<String>,
    counts: Vec<u32>,
    panel_size: u32,
}

impl VoteTable {
    pub fn from_counts(
        unit_ids: Vec<String>,
        criterion_ids: Vec<String>,
        counts: Vec<u32>,
        panel_size: u32,
    ) -> Result<Self> {
        if counts.len() != unit_ids.len() * criterion_ids.len() {
            return Err(AuditError::InvalidArgument("vote count array has wrong shape".into()));
        }
        if counts.iter().any(|&c| c > panel_size) {
            return Err(AuditError::InvalidArgument("vote count exceeds panel size".into()));
        }
        Ok(VoteTable {
            unit_ids,
            criterion_ids,
            counts,
            panel_size,
        })
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn criterion_ids(&self) -> &[String] {
        &self.criterion_ids
    }

    pub fn num_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn num_criteria(&self) -> usize {
        self.criterion_ids.len()
    }

    pub fn panel_size(&self) -> u32 {
        self.panel_size
    }

    #[inline]
    pub fn count(&self, unit: usize, criterion: usize) -> u32 {
        self.counts[unit * self.criterion_ids.len() + criterion]
    }

    /// Vote counts of one unit across all criteria.
    pub fn unit_row(&self, unit: usize) -> &[u32] {
        let q = self.criterion_ids.len();
        &self.counts[unit * q..(unit + 1) * q]
    }

    pub fn criterion_index(&self, id: &str) -> Result<usize> {
        self.criterion_ids
            .iter()
            .position(|q| q == id)
            .ok_or_else(|| AuditError::UnknownCriterion(id.to_string()))
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == id)
    }

    pub fn check_threshold(&self, t: u32) -> Result<()> {
        if t > self.panel_size {
            return Err(AuditError::ThresholdOutOfRange {
                threshold: t,
                panel_size: self.panel_size,
            });
        }
        Ok(())
    }

    /// Errors unless the criterion axis equals the schema's criterion list.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        if self.criterion_ids.len() != schema.criteria().len()
            || self
                .criterion_ids
                .iter()
                .zip(schema.criteria())
                .any(|(a, b)| a != &b.id)
        {
            let unknown = self
                .criterion_ids
                .iter()
                .find(|id| schema.criterion_index(id).is_none())
                .cloned()
                .unwrap_or_else(|| "<criterion order differs from schema>".into());
            return Err(AuditError::UnknownCriterion(unknown));
        }
        Ok(())
    }
}

pub fn vote_counts(tensor: &ResponseTensor) -> VoteTable {
    let (n_s, n_a, n_q) = tensor.shape();
    let mut counts = vec![0u32; n_s * n_q];
    for s in 0..n_s {
        let row = &mut counts[s * n_q..(s + 1) * n_q];
        for a in 0..n_a {
            let start = (s * n_a + a) * n_q;
            for (c, &v) in row.iter_mut().zip(&tensor.values[start..start + n_q]) {
                *c += v as u32;
            }
        }
    }
    VoteTable {
        unit_ids: tensor.unit_ids.clone(),
        criterion_ids: tensor.criterion_ids.clone(),
        counts,
        panel_size: n_a as u32,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FocusSet {
    pub criterion_id: String,
    pub threshold: u32,
    /// Unit indices in corpus order.
    pub members: Vec<usize>,
}

impl FocusSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub(crate) fn focus_members(votes: &VoteTable, q: usize, t: u32) -> Vec<usize> {
    (0..votes.num_units())
        .filter(|&s| votes.count(s, q) >= t)
        .collect()
}

/// Units with at least `t` positive votes on `criterion`.
pub fn focus_set(votes: &VoteTable, criterion: &str, t: u32) -> Result<FocusSet> {
    votes.check_threshold(t)?;
    let q = votes.criterion_index(criterion)?;
    Ok(FocusSet {
        criterion_id: criterion.to_string(),
        threshold: t,
        members: focus_members(votes, q, t),
    })
}

const LONG_HEADER: [&str; 4] = ["unit_id", "annotator_id", "criterion_id", "value"];

/// Reads `unit_id,annotator_id,criterion_id,value` rows.
pub fn read_long_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ResponseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| AuditError::parse(format!("{source}:1"), e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != LONG_HEADER {
        return Err(AuditError::parse(
            format!("{source}:1"),
            format!("expected header `{}`", LONG_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            AuditError::parse(format!("{source}:{line}"), e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let value = match &record[3] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(AuditError::parse(
                    format!("{source}:{line}"),
                    format!("value must be 0 or 1, got `{other}`"),
                ))
            }
        };
        out.push(ResponseRecord {
            unit_id: record[0].to_string(),
            annotator_id: record[1].to_string(),
            criterion_id: record[2].to_string(),
            value,
        });
    }
    Ok(out)
}

pub fn read_long_csv_path(path: impl AsRef<Path>) -> Result<Vec<ResponseRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    read_long_csv(file, &path.display().to_string())
}

pub fn write_long_csv<W: std::io::Write>(writer: W, rows: &[ResponseRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| AuditError::InvalidArgument(format!("csv write failed: {e}"));
    wtr.write_record(LONG_HEADER).map_err(to_err)?;
    for r in rows {
        wtr.write_record([
            r.unit_id.as_str(),
            r.annotator_id.as_str(),
            r.criterion_id.as_str(),
            if r.value == 1 { "1" } else { "0" },
        ])
        .map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| AuditError::InvalidArgument(format!("csv write failed: {e}")))?;
    Ok(())
}
