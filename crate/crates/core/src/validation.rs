//! Reliability of single-label expert annotations and their alignment with
//! the criterion-level diagnostics.
//!
//! Agreement statistics use pass-1 labels only; pass-2 labels feed
//! [`test_retest`] and nothing else.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::schema::Schema;
use crate::separability::category_activation;
use crate::tensor::VoteTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub unit_id: String,
    pub expert_id: String,
    pub pass: u8,
    pub category_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HumanLabels {
    records: Vec<LabelRecord>,
}

impl HumanLabels {
    pub fn new(records: Vec<LabelRecord>, schema: &Schema) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.pass != 1 && r.pass != 2 {
                return Err(AuditError::Labels(format!(
                    "pass {} for unit `{}`, expert `{}` is not 1 or 2",
                    r.pass, r.unit_id, r.expert_id
                )));
            }
            if schema.category_index(&r.category_id).is_none() {
                return Err(AuditError::UnknownCategory(r.category_id.clone()));
            }
            if !seen.insert((r.unit_id.as_str(), r.expert_id.as_str(), r.pass)) {
                return Err(AuditError::Labels(format!(
                    "duplicate label for unit `{}`, expert `{}`, pass {}",
                    r.unit_id, r.expert_id, r.pass
                )));
            }
        }
        Ok(HumanLabels { records })
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    /// Expert ids in order of first appearance.
    pub fn expert_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.expert_id.as_str()))
            .map(|r| r.expert_id.clone())
            .collect()
    }

    /// Pass-1 labels grouped by unit, units in order of first appearance.
    fn first_pass(&self) -> Vec<(&str, Vec<(&str, &str)>)> {
        let mut order: Vec<&str> = Vec::new();
        let mut by_unit: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
        for r in self.records.iter().filter(|r| r.pass == 1) {
            let entry = by_unit.entry(&r.unit_id).or_insert_with(|| {
                order.push(&r.unit_id);
                Vec::new()
            });
            entry.push((r.expert_id.as_str(), r.category_id.as_str()));
        }
        order
            .into_iter()
            .map(|u| (u, by_unit.remove(u).unwrap()))
            .collect()
    }
}

const LABEL_HEADER: [&str; 4] = ["unit_id", "expert_id", "pass", "category_id"];

pub fn read_labels_csv<R: Read>(reader: R, source: &str, schema: &Schema) -> Result<HumanLabels> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| AuditError::parse(format!("{source}:1"), e))?
        .clone();
    if header.iter().collect::<Vec<_>>() != LABEL_HEADER {
        return Err(AuditError::parse(
            format!("{source}:1"),
            format!("expected header `{}`", LABEL_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<LabelRecord>().enumerate() {
        let record = row.map_err(|e| AuditError::parse(format!("{source}:{}", i + 2), e))?;
        records.push(record);
    }
    HumanLabels::new(records, schema)
}

pub fn read_labels_path(path: impl AsRef<Path>, schema: &Schema) -> Result<HumanLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    read_labels_csv(file, &path.display().to_string(), schema)
}

pub fn write_labels_csv<W: std::io::Write>(writer: W, labels: &HumanLabels) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in labels.records() {
        w.serialize(r).map_err(|e| AuditError::parse("labels output", e))?;
    }
    w.flush().map_err(|e| AuditError::io("labels output", e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementMatrix {
    pub expert_ids: Vec<String>,
    /// Share of co-annotated units labeled identically; `None` with no shared units.
    pub entries: Vec<Vec<Option<f64>>>,
    pub shared_units: Vec<Vec<usize>>,
}

pub fn pairwise_agreement(labels: &HumanLabels) -> Result<AgreementMatrix> {
    let experts = labels.expert_ids();
    if experts.len() < 2 {
        return Err(AuditError::Labels("pairwise agreement needs at least two experts".into()));
    }
    let pos: HashMap<&str, usize> = experts.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    let n = experts.len();
    let mut shared = vec![vec![0usize; n]; n];
    let mut same = vec![vec![0usize; n]; n];
    for (_, unit_labels) in labels.first_pass() {
        for &(ea, ca) in &unit_labels {
            for &(eb, cb) in &unit_labels {
                let (i, j) = (pos[ea], pos[eb]);
                shared[i][j] += 1;
                if ca == cb {
                    same[i][j] += 1;
                }
            }
        }
    }
    let entries = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (shared[i][j] > 0).then(|| same[i][j] as f64 / shared[i][j] as f64))
                .collect()
        })
        .collect();
    Ok(AgreementMatrix {
        expert_ids: experts,
        entries,
        shared_units: shared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FleissKappa {
    /// `None` when expected agreement is 1.
    pub kappa: Option<f64>,
    pub raters_per_unit: usize,
    pub units_used: usize,
    /// Units with fewer pass-1 raters than `raters_per_unit`, excluded.
    pub dropped_units: Vec<String>,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
}

/// Fleiss' kappa over pass-1 labels. The rater count `n` is the largest
/// number of pass-1 labels on any unit; units with fewer are excluded.
pub fn fleiss_kappa(labels: &HumanLabels) -> Result<FleissKappa> {
    let units = labels.first_pass();
    let n = units.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    if n < 2 {
        return Err(AuditError::Labels("Fleiss' kappa needs at least two raters per unit".into()));
    }
    let mut dropped = Vec::new();
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    let mut squares = 0u64;
    let mut used = 0u64;
    for (unit, unit_labels) in &units {
        if unit_labels.len() < n {
            dropped.push(unit.to_string());
            continue;
        }
        used += 1;
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for &(_, c) in unit_labels {
            *counts.entry(c).or_default() += 1;
        }
        for (c, k) in counts {
            squares += k * k;
            *totals.entry(c).or_default() += k;
        }
    }
    let n = n as u64;
    let ratings = used * n;
    let observed = (squares - ratings) as f64 / (ratings * (n - 1)) as f64;
    let expected_num: u64 = totals.values().map(|&c| c * c).sum();
    let expected = expected_num as f64 / (ratings * ratings) as f64;
    let kappa = (expected_num != ratings * ratings).then(|| (observed - expected) / (1.0 - expected));
    Ok(FleissKappa {
        kappa,
        raters_per_unit: n as usize,
        units_used: used as usize,
        dropped_units: dropped,
        observed_agreement: observed,
        expected_agreement: expected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetestRow {
    pub expert_id: String,
    pub repeats: usize,
    pub matches: usize,
    /// `matches / repeats`; `None` without repeats.
    pub consistency: Option<f64>,
}

pub fn test_retest(labels: &HumanLabels) -> Vec<RetestRow> {
    let mut first: HashMap<(&str, &str), &str> = HashMap::new();
    for r in labels.records().iter().filter(|r| r.pass == 1) {
        first.insert((&r.unit_id, &r.expert_id), &r.category_id);
    }
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in labels.records().iter().filter(|r| r.pass == 2) {
        if let Some(&c1) = first.get(&(r.unit_id.as_str(), r.expert_id.as_str())) {
            let t = tally.entry(&r.expert_id).or_default();
            t.0 += 1;
            t.1 += (c1 == r.category_id) as usize;
        }
    }
    labels
        .expert_ids()
        .into_iter()
        .map(|e| {
            let (repeats, matches) = tally.get(e.as_str()).copied().unwrap_or((0, 0));
            RetestRow {
                expert_id: e,
                repeats,
                matches,
                consistency: (repeats > 0).then(|| matches as f64 / repeats as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryAlignmentRow {
    pub category_a: String,
    pub category_b: String,
    pub human_split: f64,
    pub diag_coact: f64,
    pub human_count: usize,
    pub diag_count: usize,
    pub denominator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryAlignment {
    pub threshold: u32,
    pub covered_units: usize,
    /// Labeled units absent from the vote table.
    pub unmatched_units: usize,
    pub rows: Vec<BoundaryAlignmentRow>,
}

type JoinedUnit<'a> = (Vec<(&'a str, &'a str)>, Vec<bool>);

/// Labeled units present in the vote table: `(pass-1 labels, active categories)`.
fn joined_units<'a>(
    labels: &'a HumanLabels,
    votes: &VoteTable,
    schema: &Schema,
    t: u32,
) -> Result<(Vec<JoinedUnit<'a>>, usize)> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    let mut joined = Vec::new();
    let mut unmatched = 0;
    for (unit, unit_labels) in labels.first_pass() {
        match votes.unit_index(unit) {
            Some(s) => {
                let act = category_activation(votes, schema, s, t)?;
                joined.push((unit_labels, act.active));
            }
            None => unmatched += 1,
        }
    }
    Ok((joined, unmatched))
}

pub fn boundary_alignment(
    labels: &HumanLabels,
    votes: &VoteTable,
    schema: &Schema,
    t: u32,
) -> Result<BoundaryAlignment> {
    let (joined, unmatched) = joined_units(labels, votes, schema, t)?;
    let covered: Vec<_> = joined.iter().filter(|(_, active)| active.contains(&true)).collect();
    if covered.is_empty() {
        return Err(AuditError::Labels("no covered units among the labeled units".into()));
    }
    let cats: Vec<&str> = schema.substantive_categories().map(|c| c.id.as_str()).collect();
    let mut rows = Vec::new();
    for a in 0..cats.len() {
        for b in a + 1..cats.len() {
            let mut human = 0;
            let mut diag = 0;
            for (unit_labels, active) in &covered {
                let has = |c: &str| unit_labels.iter().any(|&(_, l)| l == c);
                human += (has(cats[a]) && has(cats[b])) as usize;
                diag += (active[a] && active[b]) as usize;
            }
            let d = covered.len();
            rows.push(BoundaryAlignmentRow {
                category_a: cats[a].to_string(),
                category_b: cats[b].to_string(),
                human_split: human as f64 / d as f64,
                diag_coact: diag as f64 / d as f64,
                human_count: human,
                diag_count: diag,
                denominator: d,
            });
        }
    }
    Ok(BoundaryAlignment {
        threshold: t,
        covered_units: covered.len(),
        unmatched_units: unmatched,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitByOverlap {
    pub threshold: u32,
    pub single_units: usize,
    pub single_disagreement: Option<f64>,
    pub multi_units: usize,
    pub multi_disagreement: Option<f64>,
}

/// Expert disagreement (not all pass-1 labels equal) on covered units with
/// one active category versus several. Units with a single expert label are
/// skipped.
pub fn split_by_overlap(
    labels: &HumanLabels,
    votes: &VoteTable,
    schema: &Schema,
    t: u32,
) -> Result<SplitByOverlap> {
    let (joined, _) = joined_units(labels, votes, schema, t)?;
    let (mut single, mut single_split, mut multi, mut multi_split) = (0, 0, 0, 0);
    for (unit_labels, active) in &joined {
        if unit_labels.len() < 2 {
            continue;
        }
        let split = unit_labels.iter().any(|&(_, c)| c != unit_labels[0].1) as usize;
        match active.iter().filter(|&&a| a).count() {
            0 => {}
            1 => {
                single += 1;
                single_split += split;
            }
            _ => {
                multi += 1;
                multi_split += split;
            }
        }
    }
    let rate = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    Ok(SplitByOverlap {
        threshold: t,
        single_units: single,
        single_disagreement: rate(single_split, single),
        multi_units: multi,
        multi_disagreement: rate(multi_split, multi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub agreement: Option<AgreementMatrix>,
    pub kappa: Option<FleissKappa>,
    pub test_retest: Vec<RetestRow>,
    pub alignment: Option<BoundaryAlignment>,
    pub split_by_overlap: Option<SplitByOverlap>,
}

/// Everything derivable from the labels; statistics whose preconditions fail
/// are left out rather than aborting the whole report.
pub fn validation_report(
    labels: &HumanLabels,
    votes: &VoteTable,
    schema: &Schema,
    t: u32,
) -> Result<ValidationReport> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    Ok(ValidationReport {
        agreement: pairwise_agreement(labels).ok(),
        kappa: fleiss_kappa(labels).ok(),
        test_retest: test_retest(labels),
        alignment: boundary_alignment(labels, votes, schema, t).ok(),
        split_by_overlap: split_by_overlap(labels, votes, schema, t).ok(),
    })
}
