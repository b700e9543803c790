//! Per-criterion stability: activation, conditional vote distribution, and
//! the unanimous-yes / asymmetric-split / near-tie zones.
//!
//! Zones over vote counts `k` for a panel of `A` annotators:
//!
//! * UY: `k = A`
//! * NT: `0 < k < A` and `|2k - A| <= 1`
//! * AS: every other `k` in `max(t, 1)..A`
//!
//! For `A = 5` this gives NT = {2, 3} and AS = {1, 4}. The ambiguity rate is
//! the NT mass under another name; both are reported.
//!
//! Every rate is computed as an integer count over the focus-set size so that
//! independent implementations agree bit for bit.

use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::schema::Schema;
use crate::tensor::VoteTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    UnanimousYes,
    AsymmetricSplit,
    NearTie,
    /// `k = 0`, reachable only at `t = 0`.
    Unengaged,
}

pub fn zone_of(k: u32, panel_size: u32) -> Zone {
    if k == 0 {
        Zone::Unengaged
    } else if k == panel_size {
        Zone::UnanimousYes
    } else if (2 * k as i64 - panel_size as i64).abs() <= 1 {
        Zone::NearTie
    } else {
        Zone::AsymmetricSplit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteDistribution {
    pub criterion_id: String,
    pub threshold: u32,
    pub panel_size: u32,
    pub focus_size: usize,
    /// `counts[i]` is the number of focus units with exactly `threshold + i` votes.
    pub counts: Vec<usize>,
}

impl VoteDistribution {
    pub fn is_empty(&self) -> bool {
        self.focus_size == 0
    }

    /// `(k, fraction)` for `k` in `threshold..=panel_size`; `None` when the focus set is empty.
    pub fn mass(&self) -> Option<Vec<(u32, f64)>> {
        if self.is_empty() {
            return None;
        }
        let n = self.focus_size as f64;
        Some(
            self.counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (self.threshold + i as u32, c as f64 / n))
                .collect(),
        )
    }

    pub fn mass_at(&self, k: u32) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        if k < self.threshold || k > self.panel_size {
            return Some(0.0);
        }
        Some(self.counts[(k - self.threshold) as usize] as f64 / self.focus_size as f64)
    }

    fn zone_count(&self, zone: Zone) -> usize {
        self.counts
            .iter()
            .enumerate()
            .filter(|(i, _)| zone_of(self.threshold + *i as u32, self.panel_size) == zone)
            .map(|(_, &c)| c)
            .sum()
    }

    fn zone_rate(&self, zone: Zone) -> Result<f64> {
        if self.is_empty() {
            return Err(AuditError::EmptyDistribution(self.criterion_id.clone()));
        }
        Ok(self.zone_count(zone) as f64 / self.focus_size as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneRates {
    pub uy: f64,
    #[serde(rename = "as")]
    pub as_: f64,
    pub nt: f64,
}

pub fn activation_rate(votes: &VoteTable, criterion: &str, t: u32) -> Result<f64> {
    votes.check_threshold(t)?;
    if votes.num_units() == 0 {
        return Err(AuditError::EmptyCorpus);
    }
    let q = votes.criterion_index(criterion)?;
    let size = (0..votes.num_units()).filter(|&s| votes.count(s, q) >= t).count();
    Ok(size as f64 / votes.num_units() as f64)
}

pub(crate) fn distribution_at(votes: &VoteTable, q: usize, t: u32) -> VoteDistribution {
    let a = votes.panel_size();
    let mut counts = vec![0usize; (a - t + 1) as usize];
    let mut focus_size = 0;
    for s in 0..votes.num_units() {
        let v = votes.count(s, q);
        if v >= t {
            counts[(v - t) as usize] += 1;
            focus_size += 1;
        }
    }
    VoteDistribution {
        criterion_id: votes.criterion_ids()[q].clone(),
        threshold: t,
        panel_size: a,
        focus_size,
        counts,
    }
}

pub fn vote_distribution(votes: &VoteTable, criterion: &str, t: u32) -> Result<VoteDistribution> {
    votes.check_threshold(t)?;
    let q = votes.criterion_index(criterion)?;
    Ok(distribution_at(votes, q, t))
}

pub fn zone_rates(dist: &VoteDistribution) -> Result<ZoneRates> {
    Ok(ZoneRates {
        uy: dist.zone_rate(Zone::UnanimousYes)?,
        as_: dist.zone_rate(Zone::AsymmetricSplit)?,
        nt: dist.zone_rate(Zone::NearTie)?,
    })
}

/// Near-tie mass; identical to [`ZoneRates::nt`].
pub fn ambiguity_rate(dist: &VoteDistribution) -> Result<f64> {
    dist.zone_rate(Zone::NearTie)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub criterion_id: String,
    pub threshold: u32,
    pub activation: f64,
    pub focus_size: usize,
    pub nt: Option<f64>,
    #[serde(rename = "as")]
    pub as_: Option<f64>,
    pub uy: Option<f64>,
    pub ambiguity: Option<f64>,
    /// Focus-set vote histogram over `threshold..=panel_size`.
    pub vote_counts: Vec<usize>,
}

pub fn stability_table(votes: &VoteTable, schema: &Schema, t: u32) -> Result<Vec<StabilityRow>> {
    votes.check_threshold(t)?;
    votes.check_schema(schema)?;
    if votes.num_units() == 0 {
        return Err(AuditError::EmptyCorpus);
    }
    let n = votes.num_units() as f64;
    Ok((0..votes.num_criteria())
        .map(|q| {
            let dist = distribution_at(votes, q, t);
            let rates = zone_rates(&dist).ok();
            StabilityRow {
                criterion_id: dist.criterion_id.clone(),
                threshold: t,
                activation: dist.focus_size as f64 / n,
                focus_size: dist.focus_size,
                nt: rates.map(|r| r.nt),
                as_: rates.map(|r| r.as_),
                uy: rates.map(|r| r.uy),
                ambiguity: ambiguity_rate(&dist).ok(),
                vote_counts: dist.counts,
            }
        })
        .collect())
}
