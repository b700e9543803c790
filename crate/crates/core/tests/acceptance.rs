//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.
//!
//! Criteria 1-8 need the released annotation data. Point
//! `SCHEMA_AUDIT_RELEASED_DATA` at a directory holding:
//!
//! * `schema.json` (optional; the bundled nine-criterion schema otherwise)
//! * `responses_a5.csv`: main five-annotator grid, binary or raw long form
//! * `responses_a6.csv`: six-annotator grid for leave-one-out panels
//! * `labels.csv`: expert labels, `unit_id,expert_id,pass,category_id`
//!
//! Without them those criteria are reported as skipped; 9-11 always run.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schema_audit_core::normalize::NormalizationRules;
use schema_audit_core::panel::{
    collect, AnnotatorConfig, CorpusUnit, PanelConfig, PromptTemplate, RecordingTransport, ReplayTransport, Request,
    TransportError,
};
use schema_audit_core::report::{load_tensor, run_audit, write_bundle, AuditOptions};
use schema_audit_core::robustness::{loo_analysis, threshold_sweep};
use schema_audit_core::schema::{Category, Criterion};
use schema_audit_core::separability::leakage_matrix;
use schema_audit_core::stability::{vote_distribution, zone_of, zone_rates, Zone};
use schema_audit_core::synth::{fast_audit, generate, oracle_audit, random_spec, PlantedCoactivation};
use schema_audit_core::tensor::{focus_set, write_long_csv};
use schema_audit_core::validation::{
    boundary_alignment, fleiss_kappa, read_labels_path, test_retest, HumanLabels, LabelRecord,
};
use schema_audit_core::{vote_counts, ResponseTensor, Schema, VoteTable};

const DATA_ENV: &str = "SCHEMA_AUDIT_RELEASED_DATA";
const BUNDLED_SCHEMA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/pve_schema.json");

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = std::result::Result<String, String>;
type Gated = (u32, &'static str, fn(&Released) -> Check);
type Always = (u32, &'static str, fn() -> Check);

fn within(label: &str, got: f64, want: f64, tol: f64) -> std::result::Result<(), String> {
    if (got - want).abs() <= tol + 1e-9 {
        Ok(())
    } else {
        Err(format!("{label}: got {got:.4}, want {want} ± {tol}"))
    }
}

fn gather(errors: Vec<String>, ok: String) -> Check {
    if errors.is_empty() {
        Ok(ok)
    } else {
        Err(errors.join("; "))
    }
}

struct Released {
    dir: PathBuf,
    schema: Schema,
}

impl Released {
    fn locate() -> Option<Self> {
        let dir = PathBuf::from(std::env::var_os(DATA_ENV)?);
        let schema_path = dir.join("schema.json");
        let schema = Schema::load(if schema_path.exists() { schema_path } else { PathBuf::from(BUNDLED_SCHEMA) }).ok()?;
        Some(Released { dir, schema })
    }

    fn file(&self, name: &str) -> Option<PathBuf> {
        let p = self.dir.join(name);
        p.exists().then_some(p)
    }

    fn votes(&self, name: &str) -> std::result::Result<(ResponseTensor, VoteTable), String> {
        let path = self.file(name).ok_or(format!("{name} missing"))?;
        let loaded = load_tensor(&path, &self.schema, &NormalizationRules::default()).map_err(|e| e.to_string())?;
        let votes = vote_counts(&loaded.tensor);
        Ok((loaded.tensor, votes))
    }
}

// Published reference values at t = 1: (id, Act, NT, AS, UY, |Ω|), percentages.
const STABILITY_T1: [(&str, f64, f64, f64, f64, usize); 9] = [
    ("q1", 2.8, 22.9, 45.8, 31.3, 131),
    ("q2", 9.4, 28.2, 43.3, 28.4, 443),
    ("q3", 12.6, 28.9, 44.8, 26.4, 592),
    ("q4", 9.7, 35.8, 48.3, 15.9, 458),
    ("q5", 17.6, 34.0, 52.3, 13.7, 826),
    ("q6", 24.0, 23.3, 31.9, 44.9, 1130),
    ("q7", 5.8, 25.6, 44.7, 29.7, 273),
    ("q8", 14.1, 27.8, 36.9, 35.3, 662),
    ("q9", 10.3, 38.2, 41.7, 20.1, 482),
];

fn c1_stability(data: &Released) -> Check {
    let start = Instant::now();
    let (_, votes) = data.votes("responses_a5.csv")?;
    let rows = schema_audit_core::stability::stability_table(&votes, &data.schema, 1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut errors = Vec::new();
    for (id, act, nt, as_, uy, size) in STABILITY_T1 {
        let Some(r) = rows.iter().find(|r| r.criterion_id == id) else {
            errors.push(format!("{id} missing"));
            continue;
        };
        let pct = |x: Option<f64>| x.unwrap_or(f64::NAN) * 100.0;
        for (label, got, want) in [
            ("Act", r.activation * 100.0, act),
            ("NT", pct(r.nt), nt),
            ("AS", pct(r.as_), as_),
            ("UY", pct(r.uy), uy),
        ] {
            if let Err(e) = within(&format!("{id} {label}"), got, want, 0.05) {
                errors.push(e);
            }
        }
        if r.focus_size != size {
            errors.push(format!("{id} |Ω| {} != {size}", r.focus_size));
        }
    }
    if elapsed >= 5.0 {
        errors.push(format!("runtime {elapsed:.2}s"));
    }
    gather(errors, format!("9 criteria match, {elapsed:.2}s"))
}

fn c2_coverage(data: &Released) -> Check {
    let (_, votes) = data.votes("responses_a5.csv")?;
    let o = schema_audit_core::separability::overlap_summary(&votes, &data.schema, 1).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    if o.covered_count != 1951 {
        errors.push(format!("covered {} != 1951", o.covered_count));
    }
    let checks = [
        within("coverage", o.coverage_rate * 100.0, 41.5, 0.05),
        within("overlap|cov", o.overlap_cat_given_cov.unwrap_or(f64::NAN) * 100.0, 44.6, 0.05),
        within("mean |Γ|", o.mean_gamma.unwrap_or(f64::NAN), 2.56, 0.005),
    ];
    errors.extend(checks.into_iter().filter_map(|c| c.err()));
    let h = o.gamma_histogram;
    if (h.one, h.two, h.three, h.four_plus) != (690, 419, 325, 517) {
        errors.push(format!("histogram {}/{}/{}/{}", h.one, h.two, h.three, h.four_plus));
    }
    gather(errors, "coverage, overlap, |Γ| histogram match".into())
}

fn c3_sweep(data: &Released) -> Check {
    let (_, votes) = data.votes("responses_a5.csv")?;
    let sweep = threshold_sweep(&votes, &data.schema, &[1, 2, 3]).map_err(|e| e.to_string())?;
    let want = [(1951, 41.5, 44.6, 26.8), (1605, 34.2, 39.1, 19.9), (1358, 28.9, 36.4, 16.3)];
    let mut errors = Vec::new();
    for (e, (covered, cov, ovl, multi)) in sweep.iter().zip(want) {
        let o = &e.overlap;
        if o.covered_count != covered {
            errors.push(format!("t={} covered {} != {covered}", e.threshold, o.covered_count));
        }
        let checks = [
            within(&format!("t={} coverage", e.threshold), o.coverage_rate * 100.0, cov, 0.05),
            within(&format!("t={} overlap|cov", e.threshold), o.overlap_cat_given_cov.unwrap_or(f64::NAN) * 100.0, ovl, 0.05),
            within(&format!("t={} |Γ|>=2", e.threshold), o.overlap_crit * 100.0, multi, 0.05),
        ];
        errors.extend(checks.into_iter().filter_map(|c| c.err()));
    }
    gather(errors, "three thresholds match".into())
}

fn c4_asymmetry(data: &Released) -> Check {
    let (_, votes) = data.votes("responses_a5.csv")?;
    let mut errors = Vec::new();
    for (t, fwd, back) in [(1, 0.95, 0.37), (2, 0.96, 0.32), (3, 0.97, 0.29)] {
        let m = leakage_matrix(&votes, &data.schema, t, false).map_err(|e| e.to_string())?;
        let checks = [
            within(&format!("t={t} q2→q6"), m.get("q2", "q6").unwrap_or(f64::NAN), fwd, 0.005),
            within(&format!("t={t} q6→q2"), m.get("q6", "q2").unwrap_or(f64::NAN), back, 0.005),
        ];
        errors.extend(checks.into_iter().filter_map(|c| c.err()));
    }
    gather(errors, "directed overlap matches at t=1,2,3".into())
}

fn c5_ambiguity(data: &Released) -> Check {
    let (_, votes) = data.votes("responses_a5.csv")?;
    let sweep = threshold_sweep(&votes, &data.schema, &[1, 2, 3]).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    let want_top: BTreeSet<&str> = ["q4", "q5", "q9"].into();
    for (e, q5) in sweep.iter().zip([0.480, 0.547, 0.508]) {
        let mut ranked: Vec<(&str, f64)> = e
            .stability
            .iter()
            .filter_map(|r| r.ambiguity.map(|a| (r.criterion_id.as_str(), a)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: BTreeSet<&str> = ranked.iter().take(3).map(|(id, _)| *id).collect();
        if top != want_top {
            errors.push(format!("t={} top-3 {top:?}", e.threshold));
        }
        let got = ranked.iter().find(|(id, _)| *id == "q5").map(|x| x.1).unwrap_or(f64::NAN);
        if let Err(err) = within(&format!("t={} q5 ambiguity", e.threshold), got, q5, 0.0005) {
            errors.push(err);
        }
    }
    gather(errors, "hotspot set and q5 values match".into())
}

fn c6_loo(data: &Released) -> Check {
    let (tensor, _) = data.votes("responses_a6.csv")?;
    let pool = tensor.annotator_ids().to_vec();
    if pool.len() != 6 {
        return Err(format!("expected 6 annotators, found {}", pool.len()));
    }
    let loo = loo_analysis(&tensor, &data.schema, &pool, 5, 1, 3).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    if loo.variants.len() != 6 {
        errors.push(format!("{} panels", loo.variants.len()));
    }
    let want = [
        ("q5", 30.7, 38.4, Some(6)),
        ("q9", 29.5, 38.2, Some(6)),
        ("q4", 27.3, 35.8, None),
        ("q7", 23.7, 28.5, None),
        ("q3", 24.0, 29.8, None),
    ];
    for (id, lo, hi, freq) in want {
        let Some(c) = loo.nt_ranks.criteria.iter().find(|c| c.criterion_id == id) else {
            errors.push(format!("{id} missing"));
            continue;
        };
        let checks = [
            within(&format!("{id} NT min"), c.min.unwrap_or(f64::NAN) * 100.0, lo, 0.1),
            within(&format!("{id} NT max"), c.max.unwrap_or(f64::NAN) * 100.0, hi, 0.1),
        ];
        errors.extend(checks.into_iter().filter_map(|c| c.err()));
        if let Some(freq) = freq.filter(|f| *f != c.top_k_count) {
            errors.push(format!("{id} top-3 {}/6, want {freq}/6", c.top_k_count));
        }
    }
    gather(errors, "six panels, NT ranges match, q5 and q9 always top-3".into())
}

fn labels(data: &Released) -> std::result::Result<HumanLabels, String> {
    let path = data.file("labels.csv").ok_or("labels.csv missing")?;
    read_labels_path(path, &data.schema).map_err(|e| e.to_string())
}

fn c7_alignment(data: &Released) -> Check {
    let labels = labels(data)?;
    let (_, votes) = data.votes("responses_a5.csv")?;
    let a = boundary_alignment(&labels, &votes, &data.schema, 1).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    for (x, y, human, diag) in [("c1", "c2", 37.5, 83.8), ("c1", "c3", 16.5, 44.4), ("c2", "c3", 14.9, 50.7)] {
        let Some(r) = a.rows.iter().find(|r| r.category_a == x && r.category_b == y) else {
            errors.push(format!("{x}-{y} missing"));
            continue;
        };
        let checks = [
            within(&format!("{x}-{y} human"), r.human_split * 100.0, human, 0.5),
            within(&format!("{x}-{y} diag"), r.diag_coact * 100.0, diag, 0.5),
        ];
        errors.extend(checks.into_iter().filter_map(|c| c.err()));
    }
    gather(errors, format!("three pairs match on {} covered units", a.covered_units))
}

fn c8_reliability(data: &Released) -> Check {
    let labels = labels(data)?;
    let k = fleiss_kappa(&labels).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    match k.kappa {
        Some(v) => errors.extend(within("kappa", v, 0.28, 0.02).err()),
        None => errors.push("kappa undefined".into()),
    }
    for r in test_retest(&labels) {
        match r.consistency {
            Some(c) if (0.71 - 1e-9..=0.90 + 1e-9).contains(&c) => {}
            Some(c) => errors.push(format!("{} test-retest {c:.3}", r.expert_id)),
            None => {}
        }
    }
    gather(errors, format!("kappa {:.3}", k.kappa.unwrap_or(f64::NAN)))
}

/// Random schema with `q` criteria spread over up to three substantive categories.
fn random_schema(rng: &mut ChaCha8Rng, q: usize) -> Schema {
    let k = rng.gen_range(1..=3usize);
    let mut categories = vec![Category { id: "c0".into(), name: "none".into(), is_non_target: true }];
    categories.extend((1..=k).map(|i| Category { id: format!("c{i}"), name: format!("cat {i}"), is_non_target: false }));
    let criteria = (1..=q)
        .map(|i| Criterion {
            id: format!("q{i}"),
            name: None,
            text: format!("criterion {i}?"),
            category_id: format!("c{}", rng.gen_range(1..=k)),
        })
        .collect();
    Schema::new(None, categories, criteria).unwrap()
}

fn random_case(seed: u64) -> (Schema, ResponseTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = [2u32, 3, 5][rng.gen_range(0..3)];
    let q = rng.gen_range(1..=6);
    let n = rng.gen_range(1..=50);
    let schema = random_schema(&mut rng, q);
    let mut spec = random_spec(&schema, a, seed);
    if q >= 2 && rng.gen_bool(0.5) {
        spec.coactivation.push(PlantedCoactivation { from: "q1".into(), to: "q2".into(), rate: rng.gen() });
    }
    let tensor = generate(&spec, n).unwrap().tensor;
    (schema, tensor)
}

fn c9_oracle() -> Check {
    let start = Instant::now();
    let seeds = 200u64;
    let mut compared = 0;
    for seed in 0..seeds {
        let (schema, tensor) = random_case(seed);
        for t in 0..=tensor.num_annotators() as u32 {
            let fast = fast_audit(&tensor, &schema, t).map_err(|e| e.to_string())?;
            let oracle = oracle_audit(&tensor, &schema, t).map_err(|e| e.to_string())?;
            if fast != oracle {
                return Err(format!("seed {seed}, t={t}: fast path differs from oracle"));
            }
            compared += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        return Err(format!("runtime {elapsed:.1}s"));
    }
    Ok(format!("{seeds} seeds, {compared} (tensor, t) pairs identical, {elapsed:.2}s"))
}

fn c10_invariants() -> Check {
    let mut errors = Vec::new();
    let mut checked = 0;
    for seed in 1000..1150u64 {
        let (schema, tensor) = random_case(seed);
        let votes = vote_counts(&tensor);
        let a = votes.panel_size();
        for id in votes.criterion_ids() {
            let mut previous: Option<Vec<usize>> = None;
            for t in 0..=a {
                let d = vote_distribution(&votes, id, t).unwrap();
                if let Some(mass) = d.mass() {
                    let total: f64 = mass.iter().map(|(_, m)| m).sum();
                    if (total - 1.0).abs() > 1e-12 {
                        errors.push(format!("seed {seed} {id} t={t}: π sums to {total}"));
                    }
                }
                let members = focus_set(&votes, id, t).unwrap().members;
                if let Some(prev) = &previous {
                    if !members.iter().all(|s| prev.contains(s)) {
                        errors.push(format!("seed {seed} {id}: Ω not monotone at t={t}"));
                    }
                }
                previous = Some(members);
            }
        }
        for t in 0..=a {
            let m = leakage_matrix(&votes, &schema, t, false).unwrap();
            for (q, from) in m.criterion_ids.iter().enumerate() {
                let fq = focus_set(&votes, from, t).unwrap().members;
                if !fq.is_empty() && m.entries[q][q] != Some(1.0) {
                    errors.push(format!("seed {seed}: reflexivity fails for {from}"));
                }
                for (r, to) in m.criterion_ids.iter().enumerate() {
                    let fr = focus_set(&votes, to, t).unwrap().members;
                    let contained = fq.iter().all(|s| fr.contains(s));
                    if let Some(v) = m.entries[q][r] {
                        if (v == 1.0) != contained {
                            errors.push(format!("seed {seed}: containment law fails for {from}→{to}"));
                        }
                    }
                }
            }
            let o = schema_audit_core::separability::overlap_summary(&votes, &schema, t).unwrap();
            let via_cov = o.overlap_cat_given_cov.map_or(0, |x| (x * o.covered_count as f64).round() as usize);
            if via_cov != o.overlap_cat_count || o.overlap_cat != o.overlap_cat_count as f64 / o.units as f64 {
                errors.push(format!("seed {seed} t={t}: overlap_cat inconsistent with coverage"));
            }
        }
        checked += 1;
    }

    let zones: Vec<Zone> = (1..=5).map(|k| zone_of(k, 5)).collect();
    let expected = [Zone::AsymmetricSplit, Zone::NearTie, Zone::NearTie, Zone::AsymmetricSplit, Zone::UnanimousYes];
    if zones != expected {
        errors.push(format!("A=5 zones {zones:?}"));
    }
    let (schema, tensor) = (0..)
        .map(|s| random_case(5000 + s))
        .find(|(_, t)| t.num_annotators() == 5)
        .unwrap();
    let votes = vote_counts(&tensor);
    for id in schema.criterion_ids() {
        let d = vote_distribution(&votes, &id, 1).unwrap();
        if let Ok(z) = zone_rates(&d) {
            if (z.uy + z.as_ + z.nt - 1.0).abs() > 1e-12 {
                errors.push(format!("{id}: zones at A=5, t=1 are not exhaustive"));
            }
        }
    }

    let kappa_schema = Schema::load(BUNDLED_SCHEMA).unwrap();
    let cats = ["c0", "c1", "c2", "c3"];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for round in 0..50 {
        let cells: Vec<[usize; 3]> = (0..rng.gen_range(2..30)).map(|_| [rng.gen_range(0..4), rng.gen_range(0..4), rng.gen_range(0..4)]).collect();
        let mut perm = [0usize, 1, 2, 3];
        for i in (1..4).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let build = |f: &dyn Fn(usize) -> usize, unanimous: bool| {
            let records = cells
                .iter()
                .enumerate()
                .flat_map(|(u, row)| {
                    (0..3).map(move |e| (u, e, if unanimous { row[0] } else { row[e] }))
                })
                .map(|(u, e, c)| LabelRecord {
                    unit_id: format!("u{u}"),
                    expert_id: format!("e{e}"),
                    pass: 1,
                    category_id: cats[f(c)].into(),
                })
                .collect();
            fleiss_kappa(&HumanLabels::new(records, &kappa_schema).unwrap()).unwrap().kappa
        };
        match (build(&|c| c, false), build(&|c| perm[c], false)) {
            (Some(x), Some(y)) if (x - y).abs() > 1e-12 => errors.push(format!("round {round}: kappa not relabeling invariant")),
            (x, y) if x.is_some() != y.is_some() => errors.push(format!("round {round}: kappa definedness changed")),
            _ => {}
        }
        if let Some(k) = build(&|c| c, true) {
            if k != 1.0 {
                errors.push(format!("round {round}: perfect agreement gives kappa {k}"));
            }
        }
    }
    errors.truncate(5);
    gather(errors, format!("{checked} random tensors, zone partition, kappa properties hold"))
}

fn strip_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.contains("\"generated_at\"")).collect::<Vec<_>>().join("\n")
}

fn bundle_bytes(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            let text = fs::read_to_string(e.path()).unwrap();
            let text = if name == "report.json" { strip_timestamp(&text) } else { text };
            (name, text)
        })
        .collect();
    files.sort();
    files
}

fn c11_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let schema = Schema::load(BUNDLED_SCHEMA).map_err(|e| e.to_string())?;
    let spec = random_spec(&schema, 5, 2024);
    let tensor = generate(&spec, 400).map_err(|e| e.to_string())?.tensor;
    let tensor_path = tmp.path().join("tensor.csv");
    write_long_csv(fs::File::create(&tensor_path).unwrap(), &tensor.to_records()).map_err(|e| e.to_string())?;

    let options = AuditOptions::default();
    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let report = run_audit(BUNDLED_SCHEMA, &tensor_path, &options).map_err(|e| e.to_string())?;
        let out = tmp.path().join(run);
        write_bundle(&report, &schema, &out).map_err(|e| e.to_string())?;
        bundles.push(bundle_bytes(&out));
    }
    if bundles[0] != bundles[1] {
        return Err("report bundles differ beyond the timestamp".into());
    }

    let corpus: Vec<CorpusUnit> = (0..5)
        .map(|i| CorpusUnit { unit_id: format!("s{i}"), sentence: format!("Phrase numéro {i}, gain de {} %.", i * 7) })
        .collect();
    let mut config = PanelConfig::new(
        (1..=5)
            .map(|i| AnnotatorConfig { id: format!("m{i}"), endpoint: String::new(), model: format!("model-{i}") })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    config.retry.backoff_ms = 0;
    config.max_in_flight = 4;
    let stub = |r: &Request<'_>| -> std::result::Result<String, TransportError> {
        let h = r.prompt.bytes().fold(r.annotator.id.len() as u32, |acc, b| acc.wrapping_mul(31).wrapping_add(b as u32));
        Ok(["Oui", "Non", "**Oui**", "Non."][(h % 4) as usize].to_string())
    };
    let recorder = RecordingTransport::new(stub);
    let live = collect(&corpus, &schema, &config, &PromptTemplate::french(), &recorder).map_err(|e| e.to_string())?;
    let mut fixture = Vec::new();
    recorder.write_fixture(&mut fixture).map_err(|e| e.to_string())?;
    for _ in 0..2 {
        let replay = ReplayTransport::from_reader(fixture.as_slice(), "fixture").map_err(|e| e.to_string())?;
        let again = collect(&corpus, &schema, &config, &PromptTemplate::french(), &replay).map_err(|e| e.to_string())?;
        if again != live {
            return Err("replayed grid differs from the recorded one".into());
        }
    }
    Ok(format!("{} bundle files identical; {} replayed cells bit-exact", bundles[0].len(), live.raw.len()))
}

fn main() {
    let data = Released::locate();
    let gated: [Gated; 8] = [
        (1, "per-criterion stability at t=1", c1_stability),
        (2, "coverage and overlap given coverage at t=1", c2_coverage),
        (3, "coverage sweep over t=1,2,3", c3_sweep),
        (4, "directed overlap asymmetry q2/q6", c4_asymmetry),
        (5, "ambiguity hotspots over t=1,2,3", c5_ambiguity),
        (6, "fixed-size leave-one-out panels", c6_loo),
        (7, "boundary alignment with expert labels", c7_alignment),
        (8, "expert kappa and test-retest", c8_reliability),
    ];
    let always: [Always; 3] = [
        (9, "oracle equivalence on random tensors", c9_oracle),
        (10, "invariant suite", c10_invariants),
        (11, "determinism and replay", c11_determinism),
    ];

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    for (id, title, check) in gated {
        let outcome = match &data {
            None => Outcome::Skip(format!("{DATA_ENV} not set; replaced by criteria 9-11")),
            Some(d) => match check(d) {
                Ok(msg) => Outcome::Pass(msg),
                Err(msg) if msg.ends_with(" missing") => Outcome::Skip(format!("{msg}; replaced by criteria 9-11")),
                Err(msg) => Outcome::Fail(msg),
            },
        };
        results.push((id, title, outcome));
    }
    for (id, title, check) in always {
        let outcome = match check() {
            Ok(msg) => Outcome::Pass(msg),
            Err(msg) => Outcome::Fail(msg),
        };
        results.push((id, title, outcome));
    }

    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (id, title, outcome) in &results {
        let (tag, msg) = match outcome {
            Outcome::Pass(m) => ("PASS", m),
            Outcome::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Outcome::Skip(m) => ("SKIP", m),
        };
        let _ = writeln!(out, "acceptance {id:>2} [{tag}] {title}: {msg}");
    }
    let _ = writeln!(out, "acceptance: {} passed, {failed} failed, {} skipped",
        results.iter().filter(|r| matches!(r.2, Outcome::Pass(_))).count(),
        results.iter().filter(|r| matches!(r.2, Outcome::Skip(_))).count());
    if failed > 0 {
        std::process::exit(1);
    }
}
