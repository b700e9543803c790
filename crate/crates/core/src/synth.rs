//! Synthetic tensors with planted vote distributions and co-activation, plus
//! the brute-force reference implementation of every counting statistic.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::schema::Schema;
use crate::separability::{leakage_matrix, overlap_summary};
use crate::stability::stability_table;
use crate::tensor::{vote_counts, ResponseTensor};

/// Antecedent index and co-activation rate.
type Parent = Option<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCriterion {
    pub id: String,
    /// Probability of exactly `k` positive votes, for `k` in `0..=panel_size`.
    pub distribution: Vec<f64>,
}

/// `P(to engaged | from engaged) = rate`, engagement meaning at least one vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCoactivation {
    pub from: String,
    pub to: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub panel_size: u32,
    #[serde(default)]
    pub seed: u64,
    pub criteria: Vec<PlantedCriterion>,
    #[serde(default)]
    pub coactivation: Vec<PlantedCoactivation>,
}

impl PlantedSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: PlantedSpec =
            serde_json::from_str(text).map_err(|e| AuditError::parse(format!("spec line {}", e.line()), e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            AuditError::Parse { message, .. } => AuditError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    /// Same distribution for every criterion of `schema`, no co-activation.
    pub fn uniform(schema: &Schema, panel_size: u32, distribution: Vec<f64>, seed: u64) -> Result<Self> {
        let spec = PlantedSpec {
            panel_size,
            seed,
            criteria: schema
                .criteria()
                .iter()
                .map(|q| PlantedCriterion {
                    id: q.id.clone(),
                    distribution: distribution.clone(),
                })
                .collect(),
            coactivation: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AuditError::PlantedSpec(msg));
        if self.panel_size == 0 {
            return bad("panel size must be at least 1".into());
        }
        let mut ids = HashMap::new();
        for (i, q) in self.criteria.iter().enumerate() {
            if ids.insert(q.id.as_str(), i).is_some() {
                return bad(format!("duplicate criterion `{}`", q.id));
            }
            if q.distribution.len() != self.panel_size as usize + 1 {
                return bad(format!(
                    "criterion `{}`: distribution has {} entries, expected {}",
                    q.id,
                    q.distribution.len(),
                    self.panel_size + 1
                ));
            }
            if q.distribution.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return bad(format!("criterion `{}`: negative or non-finite probability", q.id));
            }
            let total: f64 = q.distribution.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("criterion `{}`: distribution sums to {total}", q.id));
            }
        }
        let mut has_rule = vec![false; self.criteria.len()];
        for c in &self.coactivation {
            let (Some(&f), Some(&t)) = (ids.get(c.from.as_str()), ids.get(c.to.as_str())) else {
                return bad(format!("co-activation `{}` -> `{}` names an unknown criterion", c.from, c.to));
            };
            if f == t {
                return bad(format!("co-activation `{}` -> `{}` is a self loop", c.from, c.to));
            }
            if !(0.0..=1.0).contains(&c.rate) {
                return bad(format!("co-activation rate {} outside [0, 1]", c.rate));
            }
            if std::mem::replace(&mut has_rule[t], true) {
                return bad(format!("criterion `{}` has more than one antecedent", c.to));
            }
        }
        self.generation_order().map(|_| ())
    }

    /// Criterion indices with every antecedent before its target.
    fn generation_order(&self) -> Result<Vec<(usize, Parent)>> {
        let idx = |id: &str| self.criteria.iter().position(|q| q.id == id).unwrap();
        let mut parent: Vec<Option<(usize, f64)>> = vec![None; self.criteria.len()];
        for c in &self.coactivation {
            parent[idx(&c.to)] = Some((idx(&c.from), c.rate));
        }
        let mut placed = vec![false; self.criteria.len()];
        let mut order = Vec::with_capacity(self.criteria.len());
        while order.len() < self.criteria.len() {
            let before = order.len();
            for q in 0..self.criteria.len() {
                if !placed[q] && parent[q].is_none_or(|(p, _)| placed[p]) {
                    placed[q] = true;
                    order.push((q, parent[q]));
                }
            }
            if order.len() == before {
                return Err(AuditError::PlantedSpec("co-activation rules form a cycle".into()));
            }
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionAchievement {
    pub id: String,
    pub target_activation: f64,
    pub achieved_activation: f64,
    /// Total variation between planted and achieved `π(k | 1)`.
    pub tv_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoactivationAchievement {
    pub from: String,
    pub to: String,
    pub target: f64,
    pub achieved: Option<f64>,
    /// True when the target's marginal could not be preserved exactly.
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub n_units: usize,
    pub criteria: Vec<CriterionAchievement>,
    pub coactivation: Vec<CoactivationAchievement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub tensor: ResponseTensor,
    pub report: GenerationReport,
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws a tensor of `n_units` units, deterministic in `spec.seed`.
///
/// Engagement (at least one vote) is drawn per criterion; a criterion with a
/// co-activation rule is conditioned on its antecedent, with the
/// non-antecedent branch adjusted to keep the planted marginal where possible.
/// Engaged units draw `k` from the planted `k >= 1` mass and then `k` distinct
/// annotators uniformly.
pub fn generate(spec: &PlantedSpec, n_units: usize) -> Result<Synthesized> {
    spec.validate()?;
    if n_units == 0 {
        return Err(AuditError::InvalidArgument("n_units must be at least 1".into()));
    }
    let a = spec.panel_size as usize;
    let nq = spec.criteria.len();
    let order = spec.generation_order()?;
    let p_engage: Vec<f64> = spec.criteria.iter().map(|q| 1.0 - q.distribution[0]).collect();

    let mut infeasible = vec![false; nq];
    let p_else: Vec<Option<f64>> = (0..nq)
        .map(|q| {
            let (from, rate) = order.iter().find(|(i, _)| *i == q)?.1?;
            let pf = p_engage[from];
            if pf >= 1.0 {
                infeasible[q] = (rate - p_engage[q]).abs() > 1e-12;
                return Some(0.0);
            }
            let raw = (p_engage[q] - pf * rate) / (1.0 - pf);
            infeasible[q] = !(0.0..=1.0).contains(&raw);
            Some(raw.clamp(0.0, 1.0))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = vec![0u8; n_units * a * nq];
    let mut engaged = vec![false; nq];
    let mut annotators: Vec<usize> = (0..a).collect();
    for s in 0..n_units {
        for &(q, parent) in &order {
            let p = match parent {
                Some((from, rate)) if engaged[from] => rate,
                Some(_) => p_else[q].unwrap(),
                None => p_engage[q],
            };
            engaged[q] = rng.gen::<f64>() < p;
            if !engaged[q] {
                continue;
            }
            let positive = &spec.criteria[q].distribution[1..];
            let k = if positive.iter().sum::<f64>() > 0.0 {
                sample_index(positive, &mut rng) + 1
            } else {
                1
            };
            let (chosen, _) = annotators.partial_shuffle(&mut rng, k);
            for &ann in chosen.iter() {
                values[(s * a + ann) * nq + q] = 1;
            }
        }
    }

    let width = n_units.to_string().len();
    let tensor = ResponseTensor::from_dense(
        (1..=n_units).map(|i| format!("s{i:0width$}")).collect(),
        (1..=a).map(|i| format!("a{i}")).collect(),
        spec.criteria.iter().map(|q| q.id.clone()).collect(),
        values,
    )?;
    let report = achievement(spec, &tensor, &p_engage, &infeasible);
    Ok(Synthesized { tensor, report })
}

fn achievement(
    spec: &PlantedSpec,
    tensor: &ResponseTensor,
    p_engage: &[f64],
    infeasible: &[bool],
) -> GenerationReport {
    let votes = vote_counts(tensor);
    let n = votes.num_units();
    let focus = |q: usize| -> Vec<usize> { (0..n).filter(|&s| votes.count(s, q) >= 1).collect() };
    let criteria = spec
        .criteria
        .iter()
        .enumerate()
        .map(|(q, c)| {
            let members = focus(q);
            let tv_distance = (!members.is_empty() && p_engage[q] > 0.0).then(|| {
                (1..=spec.panel_size as usize)
                    .map(|k| {
                        let got = members.iter().filter(|&&s| votes.count(s, q) as usize == k).count();
                        (got as f64 / members.len() as f64 - c.distribution[k] / p_engage[q]).abs()
                    })
                    .sum::<f64>()
                    / 2.0
            });
            CriterionAchievement {
                id: c.id.clone(),
                target_activation: p_engage[q],
                achieved_activation: members.len() as f64 / n as f64,
                tv_distance,
            }
        })
        .collect();
    let coactivation = spec
        .coactivation
        .iter()
        .map(|c| {
            let from = spec.criteria.iter().position(|q| q.id == c.from).unwrap();
            let to = spec.criteria.iter().position(|q| q.id == c.to).unwrap();
            let base = focus(from);
            let both = base.iter().filter(|&&s| votes.count(s, to) >= 1).count();
            CoactivationAchievement {
                from: c.from.clone(),
                to: c.to.clone(),
                target: c.rate,
                achieved: (!base.is_empty()).then(|| both as f64 / base.len() as f64),
                infeasible: infeasible[to],
            }
        })
        .collect();
    GenerationReport {
        seed: spec.seed,
        n_units: n,
        criteria,
        coactivation,
    }
}

/// Every stability and separability statistic for one threshold, in a form
/// that two implementations can be compared on with `==`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBundle {
    pub threshold: u32,
    pub criterion_ids: Vec<String>,
    pub focus_size: Vec<usize>,
    pub activation: Vec<f64>,
    /// `vote_histogram[q][i]` counts focus units with exactly `t + i` votes.
    pub vote_histogram: Vec<Vec<usize>>,
    pub nt: Vec<Option<f64>>,
    pub as_: Vec<Option<f64>>,
    pub uy: Vec<Option<f64>>,
    pub ambiguity: Vec<Option<f64>>,
    pub condov: Vec<Vec<Option<f64>>>,
    /// Per unit, indices of engaged criteria.
    pub engaged: Vec<Vec<usize>>,
    /// Per unit, number of active substantive categories.
    pub m: Vec<usize>,
    pub covered_count: usize,
    pub coverage_rate: f64,
    pub overlap_cat_count: usize,
    pub overlap_cat_given_cov: Option<f64>,
    pub overlap_cat: f64,
    pub overlap_crit_count: usize,
    pub overlap_crit: f64,
    pub gamma_full: Vec<usize>,
    pub mean_gamma: Option<f64>,
}

/// Reference semantics: direct loops over tensor cells, no shared helpers.
#[allow(clippy::needless_range_loop)]
pub fn oracle_audit(tensor: &ResponseTensor, schema: &Schema, t: u32) -> Result<MetricBundle> {
    let (n_s, n_a, n_q) = tensor.shape();
    if t as usize > n_a {
        return Err(AuditError::ThresholdOutOfRange {
            threshold: t,
            panel_size: n_a as u32,
        });
    }
    if n_s == 0 {
        return Err(AuditError::EmptyCorpus);
    }
    let mut category = Vec::with_capacity(n_q);
    for id in tensor.criterion_ids() {
        let Some(q) = schema.criteria().iter().find(|c| &c.id == id) else {
            return Err(AuditError::UnknownCriterion(id.clone()));
        };
        category.push(q.category_id.clone());
    }

    let v = |s: usize, q: usize| -> usize { (0..n_a).map(|a| tensor.get(s, a, q) as usize).sum() };
    let t = t as usize;
    let a_size = n_a;

    let mut focus_size = vec![0; n_q];
    let mut hist = vec![vec![0; a_size - t + 1]; n_q];
    let (mut nt, mut as_, mut uy) = (vec![None; n_q], vec![None; n_q], vec![None; n_q]);
    for q in 0..n_q {
        let (mut f, mut z_nt, mut z_as, mut z_uy) = (0usize, 0usize, 0usize, 0usize);
        for s in 0..n_s {
            let k = v(s, q);
            if k < t {
                continue;
            }
            f += 1;
            hist[q][k - t] += 1;
            if k == a_size {
                z_uy += 1;
            } else if k > 0 && (2 * k).abs_diff(a_size) <= 1 {
                z_nt += 1;
            } else if k > 0 {
                z_as += 1;
            }
        }
        focus_size[q] = f;
        if f > 0 {
            nt[q] = Some(z_nt as f64 / f as f64);
            as_[q] = Some(z_as as f64 / f as f64);
            uy[q] = Some(z_uy as f64 / f as f64);
        }
    }

    let mut condov = vec![vec![None; n_q]; n_q];
    for q in 0..n_q {
        for r in 0..n_q {
            let (mut base, mut both) = (0usize, 0usize);
            for s in 0..n_s {
                if v(s, q) >= t {
                    base += 1;
                    if v(s, r) >= t {
                        both += 1;
                    }
                }
            }
            if base > 0 {
                condov[q][r] = Some(both as f64 / base as f64);
            }
        }
    }

    let mut engaged = Vec::with_capacity(n_s);
    let mut m = Vec::with_capacity(n_s);
    for s in 0..n_s {
        let gamma: Vec<usize> = (0..n_q).filter(|&q| v(s, q) >= t).collect();
        let mut cats: Vec<&str> = Vec::new();
        for c in schema.categories().iter().filter(|c| !c.is_non_target) {
            if gamma.iter().any(|&q| category[q] == c.id) {
                cats.push(&c.id);
            }
        }
        m.push(cats.len());
        engaged.push(gamma);
    }

    let covered_count = m.iter().filter(|&&x| x >= 1).count();
    let overlap_cat_count = m.iter().filter(|&&x| x >= 2).count();
    let overlap_crit_count = engaged.iter().filter(|g| g.len() >= 2).count();
    let mut gamma_full = vec![0; n_q + 1];
    let mut gamma_total = 0;
    for s in 0..n_s {
        if m[s] >= 1 {
            gamma_full[engaged[s].len()] += 1;
            gamma_total += engaged[s].len();
        }
    }
    let covered = covered_count as f64;
    Ok(MetricBundle {
        threshold: t as u32,
        criterion_ids: tensor.criterion_ids().to_vec(),
        activation: focus_size.iter().map(|&f| f as f64 / n_s as f64).collect(),
        focus_size,
        vote_histogram: hist,
        ambiguity: nt.clone(),
        nt,
        as_,
        uy,
        condov,
        engaged,
        m,
        covered_count,
        coverage_rate: covered / n_s as f64,
        overlap_cat_count,
        overlap_cat_given_cov: (covered_count > 0).then(|| overlap_cat_count as f64 / covered),
        overlap_cat: overlap_cat_count as f64 / n_s as f64,
        overlap_crit_count,
        overlap_crit: overlap_crit_count as f64 / n_s as f64,
        gamma_full,
        mean_gamma: (covered_count > 0).then(|| gamma_total as f64 / covered),
    })
}

/// The same bundle assembled from the library's fast paths.
pub fn fast_audit(tensor: &ResponseTensor, schema: &Schema, t: u32) -> Result<MetricBundle> {
    let votes = vote_counts(tensor);
    let rows = stability_table(&votes, schema, t)?;
    let summary = overlap_summary(&votes, schema, t)?;
    let matrix = leakage_matrix(&votes, schema, t, false)?;
    let mut engaged = Vec::with_capacity(votes.num_units());
    let mut m = Vec::with_capacity(votes.num_units());
    for s in 0..votes.num_units() {
        let row = votes.unit_row(s);
        let gamma: Vec<usize> = (0..row.len()).filter(|&q| row[q] >= t).collect();
        let mut active = vec![false; schema.num_substantive()];
        for &q in &gamma {
            active[schema.category_of(q)] = true;
        }
        m.push(active.iter().filter(|&&x| x).count());
        engaged.push(gamma);
    }
    Ok(MetricBundle {
        threshold: t,
        criterion_ids: votes.criterion_ids().to_vec(),
        focus_size: rows.iter().map(|r| r.focus_size).collect(),
        activation: rows.iter().map(|r| r.activation).collect(),
        vote_histogram: rows.iter().map(|r| r.vote_counts.clone()).collect(),
        nt: rows.iter().map(|r| r.nt).collect(),
        as_: rows.iter().map(|r| r.as_).collect(),
        uy: rows.iter().map(|r| r.uy).collect(),
        ambiguity: rows.iter().map(|r| r.ambiguity).collect(),
        condov: matrix.entries,
        engaged,
        m,
        covered_count: summary.covered_count,
        coverage_rate: summary.coverage_rate,
        overlap_cat_count: summary.overlap_cat_count,
        overlap_cat_given_cov: summary.overlap_cat_given_cov,
        overlap_cat: summary.overlap_cat,
        overlap_crit_count: summary.overlap_crit_count,
        overlap_crit: summary.overlap_crit,
        gamma_full: summary.gamma_full,
        mean_gamma: summary.mean_gamma,
    })
}

/// Random schema-compatible spec for equivalence testing: each criterion
/// gets a random distribution over `0..=panel_size`.
pub fn random_spec(schema: &Schema, panel_size: u32, seed: u64) -> PlantedSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let criteria = schema
        .criteria()
        .iter()
        .map(|q| {
            let raw: Vec<f64> = (0..=panel_size).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            PlantedCriterion {
                id: q.id.clone(),
                distribution: raw.iter().map(|x| x / total).collect(),
            }
        })
        .collect();
    PlantedSpec {
        panel_size,
        seed,
        criteria,
        coactivation: Vec::new(),
    }
}
