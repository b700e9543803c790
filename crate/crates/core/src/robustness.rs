//! Threshold sweeps, fixed-size leave-out panels, rank stability and
//! per-annotator behavior profiles.

use std::collections::HashSet;
use std::thread;

use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::schema::Schema;
use crate::separability::{overlap_summary, OverlapSummary};
use crate::stability::{stability_table, StabilityRow};
use crate::tensor::{focus_members, vote_counts, ResponseTensor, VoteTable};

/// `{1, 2, ceil(A/2)}` restricted to `1..=A`, sorted and deduplicated.
pub fn default_thresholds(panel_size: u32) -> Vec<u32> {
    let mut ts: Vec<u32> = [1, 2, panel_size.div_ceil(2)]
        .into_iter()
        .filter(|&t| t >= 1 && t <= panel_size)
        .collect();
    ts.sort_unstable();
    ts.dedup();
    ts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub threshold: u32,
    pub stability: Vec<StabilityRow>,
    pub overlap: OverlapSummary,
}

pub fn threshold_sweep(
    votes: &VoteTable,
    schema: &Schema,
    thresholds: &[u32],
) -> Result<Vec<SweepEntry>> {
    thresholds
        .iter()
        .map(|&t| {
            Ok(SweepEntry {
                threshold: t,
                stability: stability_table(votes, schema, t)?,
                overlap: overlap_summary(votes, schema, t)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PanelVariant {
    pub name: String,
    pub annotator_ids: Vec<String>,
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] != i + n - r) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every panel of `panel_size` annotators obtained by dropping
/// `|pool| - panel_size` members of `pool`.
///
/// Variants are named `drop:<id>` (several ids joined with `+`), or `full`
/// when nothing is dropped, and ordered lexicographically by dropped ids.
/// Retained annotators keep their pool order.
pub fn loo_panels(
    tensor: &ResponseTensor,
    pool: &[String],
    panel_size: usize,
) -> Result<Vec<PanelVariant>> {
    let mut seen = HashSet::new();
    for id in pool {
        if tensor.annotator_index(id).is_none() {
            return Err(AuditError::UnknownAnnotator(id.clone()));
        }
        if !seen.insert(id.as_str()) {
            return Err(AuditError::InvalidArgument(format!("annotator `{id}` listed twice in pool")));
        }
    }
    if panel_size > pool.len() {
        return Err(AuditError::PanelTooLarge {
            panel_size,
            pool: pool.len(),
        });
    }
    if panel_size == 0 {
        return Err(AuditError::InvalidArgument("panel size must be at least 1".into()));
    }

    let mut sorted: Vec<&String> = pool.iter().collect();
    sorted.sort();
    let variants = combinations(sorted.len(), pool.len() - panel_size)
        .into_iter()
        .map(|drop| {
            let dropped: Vec<&str> = drop.iter().map(|&i| sorted[i].as_str()).collect();
            let name = if dropped.is_empty() {
                "full".to_string()
            } else {
                format!("drop:{}", dropped.join("+"))
            };
            let annotator_ids = pool
                .iter()
                .filter(|id| !dropped.contains(&id.as_str()))
                .cloned()
                .collect();
            PanelVariant { name, annotator_ids }
        })
        .collect();
    Ok(variants)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantResult {
    pub name: String,
    pub annotator_ids: Vec<String>,
    pub panel_size: usize,
    pub threshold: u32,
    pub stability: Vec<StabilityRow>,
}

/// Stability tables for each panel variant at threshold `t`.
///
/// Variants run on separate threads; results keep the input order.
pub fn evaluate_variants(
    tensor: &ResponseTensor,
    schema: &Schema,
    variants: &[PanelVariant],
    t: u32,
) -> Result<Vec<VariantResult>> {
    let evaluate = |v: &PanelVariant| -> Result<VariantResult> {
        let sub = tensor.select_annotators(&v.annotator_ids)?;
        Ok(VariantResult {
            name: v.name.clone(),
            annotator_ids: v.annotator_ids.clone(),
            panel_size: v.annotator_ids.len(),
            threshold: t,
            stability: stability_table(&vote_counts(&sub), schema, t)?,
        })
    };
    thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|v| scope.spawn(move || evaluate(v)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Activation,
    NearTie,
    AsymmetricSplit,
    UnanimousYes,
    Ambiguity,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Activation => "activation",
            Metric::NearTie => "nt",
            Metric::AsymmetricSplit => "as",
            Metric::UnanimousYes => "uy",
            Metric::Ambiguity => "ambiguity",
        }
    }

    pub fn of(self, row: &StabilityRow) -> Option<f64> {
        match self {
            Metric::Activation => Some(row.activation),
            Metric::NearTie => row.nt,
            Metric::AsymmetricSplit => row.as_,
            Metric::UnanimousYes => row.uy,
            Metric::Ambiguity => row.ambiguity,
        }
    }
}

/// One variant's metric column: `(criterion id, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantValues {
    pub name: String,
    pub values: Vec<(String, Option<f64>)>,
}

impl VariantValues {
    pub fn from_rows(name: impl Into<String>, rows: &[StabilityRow], metric: Metric) -> Self {
        VariantValues {
            name: name.into(),
            values: rows
                .iter()
                .map(|r| (r.criterion_id.clone(), metric.of(r)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRank {
    pub criterion_id: String,
    /// One value per variant, in variant order.
    pub values: Vec<Option<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub best_rank: Option<usize>,
    pub worst_rank: Option<usize>,
    pub top_k_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankStability {
    pub metric: String,
    pub k: usize,
    pub variants: Vec<String>,
    pub criteria: Vec<CriterionRank>,
}

/// Ranks criteria within each variant (rank 1 = largest, ties share the
/// better rank) and summarizes how ranks move across variants. Absent values
/// are unranked.
pub fn rank_stability(metric: &str, variants: &[VariantValues], k: usize) -> Result<RankStability> {
    if k == 0 {
        return Err(AuditError::InvalidArgument("k must be at least 1".into()));
    }
    let Some(first) = variants.first() else {
        return Err(AuditError::InvalidArgument("no variants to rank".into()));
    };
    let ids: Vec<&str> = first.values.iter().map(|(id, _)| id.as_str()).collect();
    let id_set: HashSet<&str> = ids.iter().copied().collect();
    if id_set.len() != ids.len() {
        return Err(AuditError::MismatchedCriteria);
    }

    // aligned[v][q] follows the first variant's criterion order
    let mut aligned: Vec<Vec<Option<f64>>> = Vec::with_capacity(variants.len());
    for v in variants {
        if v.values.len() != ids.len() {
            return Err(AuditError::MismatchedCriteria);
        }
        let mut column = vec![None; ids.len()];
        let mut filled = vec![false; ids.len()];
        for (id, value) in &v.values {
            let Some(q) = ids.iter().position(|x| x == id) else {
                return Err(AuditError::MismatchedCriteria);
            };
            if filled[q] {
                return Err(AuditError::MismatchedCriteria);
            }
            filled[q] = true;
            column[q] = *value;
        }
        aligned.push(column);
    }

    let ranks: Vec<Vec<Option<usize>>> = aligned
        .iter()
        .map(|column| {
            column
                .iter()
                .map(|value| {
                    value.map(|x| 1 + column.iter().flatten().filter(|&&y| y > x).count())
                })
                .collect()
        })
        .collect();

    let criteria = ids
        .iter()
        .enumerate()
        .map(|(q, id)| {
            let values: Vec<Option<f64>> = aligned.iter().map(|c| c[q]).collect();
            let present: Vec<f64> = values.iter().flatten().copied().collect();
            let own: Vec<usize> = ranks.iter().filter_map(|r| r[q]).collect();
            CriterionRank {
                criterion_id: id.to_string(),
                min: present.iter().copied().reduce(f64::min),
                max: present.iter().copied().reduce(f64::max),
                best_rank: own.iter().copied().min(),
                worst_rank: own.iter().copied().max(),
                top_k_count: own.iter().filter(|&&r| r <= k).count(),
                values,
            }
        })
        .collect();

    Ok(RankStability {
        metric: metric.to_string(),
        k,
        variants: variants.iter().map(|v| v.name.clone()).collect(),
        criteria,
    })
}

/// Fixed-size leave-out analysis: per-variant tables plus NT and UY rank summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooAnalysis {
    pub pool: Vec<String>,
    pub panel_size: usize,
    pub threshold: u32,
    pub variants: Vec<VariantResult>,
    pub nt_ranks: RankStability,
    pub uy_ranks: RankStability,
}

pub fn loo_analysis(
    tensor: &ResponseTensor,
    schema: &Schema,
    pool: &[String],
    panel_size: usize,
    t: u32,
    k: usize,
) -> Result<LooAnalysis> {
    let panels = loo_panels(tensor, pool, panel_size)?;
    let variants = evaluate_variants(tensor, schema, &panels, t)?;
    let column = |metric: Metric| -> Vec<VariantValues> {
        variants
            .iter()
            .map(|v| VariantValues::from_rows(&v.name, &v.stability, metric))
            .collect()
    };
    Ok(LooAnalysis {
        pool: pool.to_vec(),
        panel_size,
        threshold: t,
        nt_ranks: rank_stability("nt", &column(Metric::NearTie), k)?,
        uy_ranks: rank_stability("uy", &column(Metric::UnanimousYes), k)?,
        variants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatorProfiles {
    pub annotator_ids: Vec<String>,
    pub criterion_ids: Vec<String>,
    /// `rates[a][q]` = share of all units on which annotator `a` said yes to `q`.
    pub rates: Vec<Vec<f64>>,
}

pub fn annotator_profiles(tensor: &ResponseTensor, schema: &Schema) -> Result<AnnotatorProfiles> {
    vote_counts(tensor).check_schema(schema)?;
    let (n_s, n_a, n_q) = tensor.shape();
    if n_s == 0 {
        return Err(AuditError::EmptyCorpus);
    }
    let rates = (0..n_a)
        .map(|a| {
            (0..n_q)
                .map(|q| {
                    let yes: usize = (0..n_s).map(|s| tensor.get(s, a, q) as usize).sum();
                    yes as f64 / n_s as f64
                })
                .collect()
        })
        .collect();
    Ok(AnnotatorProfiles {
        annotator_ids: tensor.annotator_ids().to_vec(),
        criterion_ids: tensor.criterion_ids().to_vec(),
        rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub criterion_id: String,
    pub threshold: u32,
    pub focus_size: usize,
    pub annotator_ids: Vec<String>,
    /// Pearson (phi) correlation; `None` when either vote vector is constant on the focus set.
    pub entries: Vec<Vec<Option<f64>>>,
}

pub fn annotator_correlations(
    tensor: &ResponseTensor,
    criterion: &str,
    t: u32,
) -> Result<CorrelationMatrix> {
    let votes = vote_counts(tensor);
    votes.check_threshold(t)?;
    let q = votes.criterion_index(criterion)?;
    let focus = focus_members(&votes, q, t);
    if focus.len() < 2 {
        return Err(AuditError::FocusTooSmall {
            criterion: criterion.to_string(),
            size: focus.len(),
        });
    }
    let n_a = tensor.num_annotators();
    let n = focus.len() as i64;
    let ones: Vec<i64> = (0..n_a)
        .map(|a| focus.iter().map(|&s| tensor.get(s, a, q) as i64).sum())
        .collect();
    let entries = (0..n_a)
        .map(|a| {
            (0..n_a)
                .map(|b| {
                    let (na, nb) = (ones[a], ones[b]);
                    if na == 0 || na == n || nb == 0 || nb == n {
                        return None;
                    }
                    if a == b {
                        return Some(1.0);
                    }
                    let both: i64 = focus
                        .iter()
                        .map(|&s| (tensor.get(s, a, q) & tensor.get(s, b, q)) as i64)
                        .sum();
                    let num = (n * both - na * nb) as f64;
                    let den = ((na * (n - na)) as f64 * (nb * (n - nb)) as f64).sqrt();
                    Some(num / den)
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        criterion_id: criterion.to_string(),
        threshold: t,
        focus_size: focus.len(),
        annotator_ids: tensor.annotator_ids().to_vec(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::tests::two_category_schema;
    use crate::tensor::tests::toy_t1;
    use proptest::prelude::*;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn pool_tensor(n_a: usize) -> ResponseTensor {
        let annotators: Vec<String> = (0..n_a).map(|a| format!("m{a}")).collect();
        let values = (0..3 * n_a * 2).map(|i| (i % 3 == 0) as u8).collect();
        ResponseTensor::from_dense(ids(&["s1", "s2", "s3"]), annotators, ids(&["q1", "q2"]), values)
            .unwrap()
    }

    #[test]
    fn default_thresholds_cover_small_panels() {
        assert_eq!(default_thresholds(5), [1, 2, 3]);
        assert_eq!(default_thresholds(3), [1, 2]);
        assert_eq!(default_thresholds(1), [1]);
        assert_eq!(default_thresholds(6), [1, 2, 3]);
    }

    #[test]
    fn sweep_at_zero_activates_everything() {
        let votes = vote_counts(&toy_t1());
        let sweep = threshold_sweep(&votes, &two_category_schema(), &[0]).unwrap();
        assert!(sweep[0].stability.iter().all(|r| r.activation == 1.0));
    }

    #[test]
    fn sweep_matches_direct_calls() {
        let votes = vote_counts(&toy_t1());
        let schema = two_category_schema();
        let sweep = threshold_sweep(&votes, &schema, &[1, 2]).unwrap();
        assert_eq!(sweep[0].stability, stability_table(&votes, &schema, 1).unwrap());
        assert_eq!(sweep[1].overlap, overlap_summary(&votes, &schema, 2).unwrap());
        assert!(threshold_sweep(&votes, &schema, &[3]).is_err());
    }

    #[test]
    fn loo_enumeration() {
        let six = pool_tensor(6);
        let pool = six.annotator_ids().to_vec();
        let variants = loo_panels(&six, &pool, 5).unwrap();
        let names: Vec<_> = variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["drop:m0", "drop:m1", "drop:m2", "drop:m3", "drop:m4", "drop:m5"]);
        assert!(variants.iter().all(|v| v.annotator_ids.len() == 5));
        assert!(!variants[2].annotator_ids.contains(&"m2".to_string()));

        let five = pool_tensor(5);
        let variants = loo_panels(&five, five.annotator_ids(), 5).unwrap();
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0].name, "full");
        assert_eq!(variants[0].annotator_ids, five.annotator_ids());

        let three = pool_tensor(3);
        assert_eq!(loo_panels(&three, three.annotator_ids(), 2).unwrap().len(), 3);
        assert_eq!(loo_panels(&pool_tensor(4), &pool_tensor(4).annotator_ids()[..4], 2).unwrap().len(), 6);

        assert!(matches!(
            loo_panels(&three, three.annotator_ids(), 4),
            Err(AuditError::PanelTooLarge { .. })
        ));
        assert!(matches!(
            loo_panels(&three, &ids(&["m0", "zz"]), 1),
            Err(AuditError::UnknownAnnotator(_))
        ));
    }

    #[test]
    fn loo_order_is_lexicographic_not_pool_order() {
        let t = pool_tensor(3);
        let pool = ids(&["m2", "m0", "m1"]);
        let names: Vec<_> = loo_panels(&t, &pool, 2).unwrap().into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["drop:m0", "drop:m1", "drop:m2"]);
    }

    #[test]
    fn hand_ranked_variants() {
        let v = |name: &str, vals: [f64; 4]| VariantValues {
            name: name.into(),
            values: ["a", "b", "c", "d"].iter().zip(vals).map(|(id, x)| (id.to_string(), Some(x))).collect(),
        };
        let variants = [
            v("v1", [0.4, 0.3, 0.2, 0.1]),
            v("v2", [0.1, 0.4, 0.3, 0.2]),
            v("v3", [0.4, 0.2, 0.4, 0.1]),
        ];
        let r = rank_stability("nt", &variants, 2).unwrap();
        let by = |id: &str| r.criteria.iter().find(|c| c.criterion_id == id).unwrap();
        // v1 ranks a1 b2 c3 d4; v2 a4 b1 c2 d3; v3 a1 b3 c1 d4
        assert_eq!(by("a").top_k_count, 2);
        assert_eq!(by("b").top_k_count, 2);
        assert_eq!(by("c").top_k_count, 2);
        assert_eq!(by("d").top_k_count, 0);
        assert_eq!((by("a").best_rank, by("a").worst_rank), (Some(1), Some(4)));
        assert_eq!((by("c").min, by("c").max), (Some(0.2), Some(0.4)));
    }

    #[test]
    fn identical_variants_have_zero_rank_width() {
        let col = VariantValues {
            name: "x".into(),
            values: vec![("a".into(), Some(0.5)), ("b".into(), Some(0.1)), ("c".into(), None)],
        };
        let variants = vec![col.clone(), VariantValues { name: "y".into(), ..col }];
        let r = rank_stability("nt", &variants, 1).unwrap();
        for c in &r.criteria {
            assert_eq!(c.best_rank, c.worst_rank);
        }
        assert_eq!(r.criteria[2].best_rank, None);
        assert_eq!(r.criteria[0].top_k_count, 2);
    }

    #[test]
    fn mismatched_variants_are_rejected() {
        let a = VariantValues { name: "a".into(), values: vec![("q1".into(), Some(0.1))] };
        let b = VariantValues { name: "b".into(), values: vec![("q2".into(), Some(0.1))] };
        assert!(matches!(rank_stability("nt", &[a, b], 1), Err(AuditError::MismatchedCriteria)));
    }

    #[test]
    fn profiles_sum_columns() {
        let profiles = annotator_profiles(&toy_t1(), &two_category_schema()).unwrap();
        // q1: a1 yes on s1, s2; a2 yes on s1
        assert_eq!(profiles.rates[0][0], 2.0 / 3.0);
        assert_eq!(profiles.rates[1][0], 1.0 / 3.0);
        let all_yes = ResponseTensor::from_dense(ids(&["s1", "s2"]), ids(&["a"]), ids(&["q1", "q2"]), vec![1; 4]).unwrap();
        let p = annotator_profiles(&all_yes, &two_category_schema()).unwrap();
        assert_eq!(p.rates, [[1.0, 1.0]]);
    }

    fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn correlation_edge_cases() {
        // two identical annotators plus a complementary one; everything engaged at t=1
        let units: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let pattern = [1u8, 0, 1, 0];
        let mut values = Vec::new();
        for &p in &pattern {
            values.extend([p, p, 1 - p]);
        }
        let t = ResponseTensor::from_dense(units, ids(&["a", "b", "c"]), ids(&["q1"]), values).unwrap();
        let m = annotator_correlations(&t, "q1", 1).unwrap();
        assert_eq!(m.entries[0][1], Some(1.0));
        assert_eq!(m.entries[0][2], Some(-1.0));
        assert_eq!(m.entries[1][1], Some(1.0));

        let err = annotator_correlations(&toy_t1(), "q1", 2).unwrap_err();
        assert!(matches!(err, AuditError::FocusTooSmall { size: 1, .. }));
    }

    proptest! {
        #[test]
        fn correlation_matches_textbook_pearson(bits in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 20)) {
            let units: Vec<String> = (0..20).map(|i| format!("s{i}")).collect();
            // a third always-yes annotator keeps every unit in the focus set
            let values: Vec<u8> = bits.iter().flat_map(|&(x, y, z)| [x as u8, y as u8, z as u8, 1]).collect();
            let t = ResponseTensor::from_dense(units, ids(&["a", "b", "c", "d"]), ids(&["q1"]), values).unwrap();
            let m = annotator_correlations(&t, "q1", 1).unwrap();
            for a in 0..4 {
                prop_assert_eq!(m.entries[a][3], None);
                for b in 0..4 {
                    prop_assert_eq!(m.entries[a][b], m.entries[b][a]);
                }
            }
            let col = |i: usize| -> Vec<f64> { bits.iter().map(|b| [b.0, b.1, b.2][i] as u8 as f64).collect() };
            for a in 0..3 {
                for b in 0..3 {
                    let (x, y) = (col(a), col(b));
                    let constant = |v: &[f64]| v.iter().all(|&e| e == v[0]);
                    match m.entries[a][b] {
                        None => prop_assert!(constant(&x) || constant(&y)),
                        Some(r) => prop_assert!((r - textbook_pearson(&x, &y)).abs() < 1e-12),
                    }
                }
            }
        }
    }
}
