//! Cross-criterion co-activation and category-level overlap.

use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::schema::Schema;
use crate::tensor::VoteTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngagedSet {
    pub unit: usize,
    pub threshold: u32,
    /// Engaged criterion ids in schema order.
    pub criteria: Vec<String>,
}

pub fn engaged_criteria(votes: &VoteTable, unit: usize, t: u32) -> Result<EngagedSet> {
    votes.check_threshold(t)?;
    if unit >= votes.num_units() {
        return Err(AuditError::UnknownUnit(unit.to_string()));
    }
    let criteria = votes
        .unit_row(unit)
        .iter()
        .zip(votes.criterion_ids())
        .filter(|(&v, _)| v >= t)
        .map(|(_, id)| id.clone())
        .collect();
    Ok(EngagedSet {
        unit,
        threshold: t,
        criteria,
    })
}

/// `|Ω_q ∩ Ω_q'| / |Ω_q|`, or `None` when `Ω_q` is empty.
pub fn conditional_overlap(votes: &VoteTable, from: &str, to: &str, t: u32) -> Result<Option<f64>> {
    votes.check_threshold(t)?;
    let q = votes.criterion_index(from)?;
    let r = votes.criterion_index(to)?;
    let (mut base, mut both) = (0usize, 0usize);
    for s in 0..votes.num_units() {
        if votes.count(s, q) >= t {
            base += 1;
            if votes.count(s, r) >= t {
                both += 1;
            }
        }
    }
    Ok((base > 0).then(|| both as f64 / base as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryActivation {
    pub unit: usize,
    pub threshold: u32,
    /// One flag per substantive category, in schema order.
    pub active: Vec<bool>,
    pub m: usize,
}

fn active_categories(row: &[u32], schema: &Schema, t: u32) -> Vec<bool> {
    let mut active = vec![false; schema.num_substantive()];
    for (q, &v) in row.iter().enumerate() {
        if v >= t {
            active[schema.category_of(q)] = true;
        }
    }
    active
}

pub fn category_activation(
    votes: &VoteTable,
    schema: &Schema,
    unit: usize,
    t: u32,
) -> Result<CategoryActivation> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    if unit >= votes.num_units() {
        return Err(AuditError::UnknownUnit(unit.to_string()));
    }
    let active = active_categories(votes.unit_row(unit), schema, t);
    let m = active.iter().filter(|&&a| a).count();
    Ok(CategoryActivation {
        unit,
        threshold: t,
        active,
        m,
    })
}

/// Counts of covered units by number of engaged criteria, bucketed as 1, 2, 3, 4+.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GammaHistogram {
    pub one: usize,
    pub two: usize,
    pub three: usize,
    pub four_plus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapSummary {
    pub threshold: u32,
    pub units: usize,
    pub covered_count: usize,
    pub coverage_rate: f64,
    /// Units with at least two active categories.
    pub overlap_cat_count: usize,
    /// Among covered units; `None` when nothing is covered.
    pub overlap_cat_given_cov: Option<f64>,
    /// Over all units.
    pub overlap_cat: f64,
    /// Units with at least two engaged criteria.
    pub overlap_crit_count: usize,
    /// Over all units.
    pub overlap_crit: f64,
    /// Share of covered units engaging at least two criteria.
    pub multi_criterion_given_cov: Option<f64>,
    pub gamma_histogram: GammaHistogram,
    /// `gamma_full[g]` = covered units with exactly `g` engaged criteria (`g >= 1`; index 0 is always 0).
    pub gamma_full: Vec<usize>,
    pub mean_gamma: Option<f64>,
}

pub fn overlap_summary(votes: &VoteTable, schema: &Schema, t: u32) -> Result<OverlapSummary> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    let n_units = votes.num_units();
    if n_units == 0 {
        return Err(AuditError::EmptyCorpus);
    }

    let mut covered = 0usize;
    let mut multi_cat = 0usize;
    let mut multi_crit = 0usize;
    let mut gamma_total = 0usize;
    let mut gamma_full = vec![0usize; votes.num_criteria() + 1];
    for s in 0..n_units {
        let row = votes.unit_row(s);
        let gamma = row.iter().filter(|&&v| v >= t).count();
        let m = active_categories(row, schema, t).iter().filter(|&&a| a).count();
        if gamma >= 2 {
            multi_crit += 1;
        }
        if m >= 1 {
            covered += 1;
            gamma_full[gamma] += 1;
            gamma_total += gamma;
        }
        if m >= 2 {
            multi_cat += 1;
        }
    }

    let n = n_units as f64;
    let per_covered = |count: usize| (covered > 0).then(|| count as f64 / covered as f64);
    let gamma_histogram = GammaHistogram {
        one: gamma_full.get(1).copied().unwrap_or(0),
        two: gamma_full.get(2).copied().unwrap_or(0),
        three: gamma_full.get(3).copied().unwrap_or(0),
        four_plus: gamma_full.iter().skip(4).sum(),
    };
    let multi_crit_covered = covered - gamma_histogram.one;

    Ok(OverlapSummary {
        threshold: t,
        units: n_units,
        covered_count: covered,
        coverage_rate: covered as f64 / n,
        overlap_cat_count: multi_cat,
        overlap_cat_given_cov: per_covered(multi_cat),
        overlap_cat: multi_cat as f64 / n,
        overlap_crit_count: multi_crit,
        overlap_crit: multi_crit as f64 / n,
        multi_criterion_given_cov: per_covered(multi_crit_covered),
        gamma_histogram,
        gamma_full,
        mean_gamma: per_covered(gamma_total),
    })
}

/// Directed conditional overlap matrix. Within-category cells are flagged,
/// never removed: masking applies at render time only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapMatrix {
    pub threshold: u32,
    pub criterion_ids: Vec<String>,
    /// `entries[q][r]` = CondOv(q → r); `None` when `Ω_q` is empty.
    pub entries: Vec<Vec<Option<f64>>>,
    /// `within_category[q][r]` is true when both criteria map to the same category.
    pub within_category: Vec<Vec<bool>>,
    pub mask_within_category: bool,
}

impl OverlapMatrix {
    pub fn get(&self, from: &str, to: &str) -> Option<f64> {
        let q = self.criterion_ids.iter().position(|id| id == from)?;
        let r = self.criterion_ids.iter().position(|id| id == to)?;
        self.entries[q][r]
    }

    /// True when cell (q, r) is hidden in rendering.
    pub fn is_masked(&self, q: usize, r: usize) -> bool {
        self.mask_within_category && self.within_category[q][r]
    }
}

pub fn leakage_matrix(
    votes: &VoteTable,
    schema: &Schema,
    t: u32,
    mask_within: bool,
) -> Result<OverlapMatrix> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    let nq = votes.num_criteria();
    let mut focus = vec![0usize; nq];
    let mut joint = vec![0usize; nq * nq];
    let mut engaged = Vec::with_capacity(nq);
    for s in 0..votes.num_units() {
        engaged.clear();
        engaged.extend(
            votes
                .unit_row(s)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= t)
                .map(|(q, _)| q),
        );
        for &q in &engaged {
            focus[q] += 1;
            for &r in &engaged {
                joint[q * nq + r] += 1;
            }
        }
    }
    let entries = (0..nq)
        .map(|q| {
            (0..nq)
                .map(|r| (focus[q] > 0).then(|| joint[q * nq + r] as f64 / focus[q] as f64))
                .collect()
        })
        .collect();
    let within_category = (0..nq)
        .map(|q| {
            (0..nq)
                .map(|r| schema.category_of(q) == schema.category_of(r))
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        threshold: t,
        criterion_ids: votes.criterion_ids().to_vec(),
        entries,
        within_category,
        mask_within_category: mask_within,
    })
}
