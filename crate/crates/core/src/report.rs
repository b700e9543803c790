//! End-to-end audit: load inputs, compute every section, check internal
//! consistency, and write the report bundle.
//!
//! Bundle layout:
//!
//! ```text
//! report.json
//! stability_t<k>.csv   overlap_t<k>.csv   condov_t<k>.csv
//! heatmap_t<k>.svg     landscape_t<k>.svg
//! ambiguity_ranks.csv  loo.csv            alignment.csv     (when computed)
//! ```
//!
//! CSV percentages carry one decimal; `report.json` keeps full precision.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{AuditError, Result};
use crate::normalize::{clean_grid, is_raw_header, read_raw_csv, CleaningReport, NormalizationRules};
use crate::robustness::{
    annotator_profiles, default_thresholds, loo_analysis, rank_stability, AnnotatorProfiles, LooAnalysis,
    Metric, RankStability, VariantValues,
};
use crate::schema::Schema;
use crate::separability::{leakage_matrix, overlap_summary, OverlapMatrix, OverlapSummary};
use crate::stability::{stability_table, StabilityRow};
use crate::svg::{render_heatmap, render_stability_landscape};
use crate::tensor::{build_tensor, read_long_csv, vote_counts, DropReport, ResponseTensor, VoteTable};
use crate::validation::{read_labels_path, validation_report, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorFormat {
    /// `unit_id,annotator_id,criterion_id,value`
    Binary,
    /// `unit_id,annotator_id,criterion_id,raw_text`, normalized on load.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub source: String,
    pub sha256: String,
    pub format: TensorFormat,
    pub cleaning: Option<CleaningReport>,
    pub drops: DropReport,
    pub units: usize,
    pub annotators: usize,
    pub criteria: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedTensor {
    pub tensor: ResponseTensor,
    pub provenance: Provenance,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a binary or raw long-form CSV, deciding by header, and builds the
/// tensor. Raw text goes through `rules` first.
pub fn load_tensor(path: impl AsRef<Path>, schema: &Schema, rules: &NormalizationRules) -> Result<LoadedTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AuditError::io(path, e))?;
    let source = path.display().to_string();
    let first_line = BufReader::new(bytes.as_slice())
        .lines()
        .next()
        .transpose()
        .map_err(|e| AuditError::io(path, e))?
        .unwrap_or_default();
    let (rows, format, cleaning) = if is_raw_header(&first_line) {
        let raw = read_raw_csv(bytes.as_slice(), &source)?;
        let (rows, report) = clean_grid(&raw, rules)?;
        (rows, TensorFormat::Raw, Some(report))
    } else {
        (read_long_csv(bytes.as_slice(), &source)?, TensorFormat::Binary, None)
    };
    let (tensor, drops) = build_tensor(&rows, schema)?;
    if tensor.num_units() == 0 {
        return Err(AuditError::EmptyCorpus);
    }
    let (units, annotators, criteria) = tensor.shape();
    Ok(LoadedTensor {
        tensor,
        provenance: Provenance {
            source,
            sha256: sha256_hex(&bytes),
            format,
            cleaning,
            drops,
            units,
            annotators,
            criteria,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LooOptions {
    pub pool: Vec<String>,
    pub panel_size: usize,
    pub threshold: u32,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    /// Defaults to `{1, 2, ceil(A/2)}`.
    pub thresholds: Option<Vec<u32>>,
    pub mask_within: bool,
    /// Panel used for the main analysis; all annotators when `None`.
    pub panel: Option<Vec<String>>,
    pub loo: Option<LooOptions>,
    pub labels: Option<PathBuf>,
    pub validation_threshold: u32,
    pub top_k: usize,
    pub rules: NormalizationRules,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            thresholds: None,
            mask_within: true,
            panel: None,
            loo: None,
            labels: None,
            validation_threshold: 1,
            top_k: 3,
            rules: NormalizationRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaInfo {
    pub version: Option<String>,
    pub fingerprint: String,
    pub criteria: usize,
    pub substantive_categories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelInfo {
    pub panel_size: u32,
    pub annotator_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSection {
    pub threshold: u32,
    pub stability: Vec<StabilityRow>,
    pub overlap: OverlapSummary,
    pub condov: OverlapMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessSection {
    /// Ambiguity ranks with one variant per threshold.
    pub ambiguity_ranks: RankStability,
    pub loo: Option<LooAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub tool: ToolInfo,
    pub generated_at: String,
    pub schema: SchemaInfo,
    pub provenance: Provenance,
    pub panel: PanelInfo,
    pub thresholds: Vec<ThresholdSection>,
    pub profiles: AnnotatorProfiles,
    pub robustness: RobustnessSection,
    pub validation: Option<ValidationReport>,
}

impl AuditReport {
    pub fn section(&self, t: u32) -> Option<&ThresholdSection> {
        self.thresholds.iter().find(|s| s.threshold == t)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn threshold_section(votes: &VoteTable, schema: &Schema, t: u32, mask_within: bool) -> Result<ThresholdSection> {
    Ok(ThresholdSection {
        threshold: t,
        stability: stability_table(votes, schema, t)?,
        overlap: overlap_summary(votes, schema, t)?,
        condov: leakage_matrix(votes, schema, t, mask_within)?,
    })
}

/// Consistency checks between independently computed sections.
pub fn check_invariants(section: &ThresholdSection) -> Result<()> {
    let fail = |msg: String| Err(AuditError::Invariant(format!("t={}: {msg}", section.threshold)));
    for (q, row) in section.stability.iter().enumerate() {
        if row.vote_counts.iter().sum::<usize>() != row.focus_size {
            return fail(format!("vote histogram of `{}` does not sum to its focus size", row.criterion_id));
        }
        let diagonal = section.condov.entries[q][q];
        if (row.focus_size > 0) != (diagonal == Some(1.0)) {
            return fail(format!("CondOv diagonal of `{}` disagrees with its focus set", row.criterion_id));
        }
    }
    let o = &section.overlap;
    let h = o.gamma_histogram;
    if h.one + h.two + h.three + h.four_plus != o.covered_count {
        return fail("|Γ| histogram does not sum to the covered count".into());
    }
    if o.overlap_cat_count > o.covered_count || o.covered_count > o.units {
        return fail("overlap counts are not nested".into());
    }
    if o.overlap_crit_count < o.overlap_cat_count {
        return fail("fewer multi-criterion units than multi-category units".into());
    }
    Ok(())
}

pub fn run_audit(schema_path: impl AsRef<Path>, tensor_path: impl AsRef<Path>, options: &AuditOptions) -> Result<AuditReport> {
    let schema = Schema::load(schema_path)?;
    let loaded = load_tensor(tensor_path, &schema, &options.rules)?;
    audit_tensor(&schema, loaded, options)
}

pub fn audit_tensor(schema: &Schema, loaded: LoadedTensor, options: &AuditOptions) -> Result<AuditReport> {
    let full = &loaded.tensor;
    let tensor = match &options.panel {
        Some(ids) => full.select_annotators(ids)?,
        None => full.clone(),
    };
    let votes = vote_counts(&tensor);
    let a = votes.panel_size();
    let thresholds = options.thresholds.clone().unwrap_or_else(|| default_thresholds(a));
    if thresholds.is_empty() {
        return Err(AuditError::InvalidArgument("no thresholds requested".into()));
    }

    let mut sections = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let section = threshold_section(&votes, schema, t, options.mask_within)?;
        check_invariants(&section)?;
        sections.push(section);
    }

    let ambiguity: Vec<VariantValues> = sections
        .iter()
        .map(|s| VariantValues::from_rows(format!("t={}", s.threshold), &s.stability, Metric::Ambiguity))
        .collect();
    let loo = match &options.loo {
        Some(o) => Some(loo_analysis(full, schema, &o.pool, o.panel_size, o.threshold, o.top_k)?),
        None => None,
    };
    let validation = match &options.labels {
        Some(path) => {
            let labels = read_labels_path(path, schema)?;
            Some(validation_report(&labels, &votes, schema, options.validation_threshold)?)
        }
        None => None,
    };

    Ok(AuditReport {
        tool: ToolInfo {
            name: "schema-audit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        schema: SchemaInfo {
            version: schema.version().map(str::to_string),
            fingerprint: schema.fingerprint(),
            criteria: schema.criteria().len(),
            substantive_categories: schema.num_substantive(),
        },
        provenance: loaded.provenance,
        panel: PanelInfo {
            panel_size: a,
            annotator_ids: tensor.annotator_ids().to_vec(),
        },
        thresholds: sections,
        profiles: annotator_profiles(&tensor, schema)?,
        robustness: RobustnessSection {
            ambiguity_ranks: rank_stability("ambiguity", &ambiguity, options.top_k)?,
            loo,
        },
        validation,
    })
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_default()
}

fn fixed(x: Option<f64>, decimals: usize) -> String {
    x.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> AuditError {
    AuditError::parse("csv output", e)
}

/// `criterion_id,act,nt,as,uy,focus_size` with percentages.
pub fn write_stability_csv<W: Write>(writer: W, rows: &[StabilityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["criterion_id", "act", "nt", "as", "uy", "focus_size"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.criterion_id.clone(),
            pct(Some(r.activation)),
            pct(r.nt),
            pct(r.as_),
            pct(r.uy),
            r.focus_size.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| AuditError::io("csv output", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCsvRow {
    pub criterion_id: String,
    pub act: f64,
    pub nt: Option<f64>,
    pub as_: Option<f64>,
    pub uy: Option<f64>,
    pub focus_size: usize,
}

/// Reads back [`write_stability_csv`] output; percentages stay percentages.
pub fn read_stability_csv<R: Read>(reader: R) -> Result<Vec<StabilityCsvRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AuditError::parse(format!("stability csv:{}", i + 2), e))?;
        let num = |j: usize| -> Result<Option<f64>> {
            let field = rec.get(j).unwrap_or_default();
            if field.is_empty() {
                return Ok(None);
            }
            field
                .parse()
                .map(Some)
                .map_err(|e| AuditError::parse(format!("stability csv:{}", i + 2), e))
        };
        out.push(StabilityCsvRow {
            criterion_id: rec.get(0).unwrap_or_default().to_string(),
            act: num(1)?.unwrap_or_default(),
            nt: num(2)?,
            as_: num(3)?,
            uy: num(4)?,
            focus_size: num(5)?.unwrap_or_default() as usize,
        });
    }
    Ok(out)
}

/// `metric,value` rows matching the coverage / overlap summary layout.
pub fn write_overlap_csv<W: Write>(writer: W, o: &OverlapSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let h = o.gamma_histogram;
    let rows: [(&str, String); 12] = [
        ("units", o.units.to_string()),
        ("covered", o.covered_count.to_string()),
        ("coverage_pct", pct(Some(o.coverage_rate))),
        ("overlap_cat", o.overlap_cat_count.to_string()),
        ("overlap_cat_given_cov_pct", pct(o.overlap_cat_given_cov)),
        ("overlap_cat_pct", pct(Some(o.overlap_cat))),
        ("overlap_crit_pct", pct(Some(o.overlap_crit))),
        ("mean_gamma", fixed(o.mean_gamma, 2)),
        ("gamma_1", h.one.to_string()),
        ("gamma_2", h.two.to_string()),
        ("gamma_3", h.three.to_string()),
        ("gamma_4_plus", h.four_plus.to_string()),
    ];
    w.write_record(["metric", "value"]).map_err(csv_error)?;
    for (k, v) in rows {
        w.write_record([k, v.as_str()]).map_err(csv_error)?;
    }
    w.flush().map_err(|e| AuditError::io("csv output", e))
}

/// Full (unmasked) CondOv matrix, two decimals; empty cells are absent.
pub fn write_condov_csv<W: Write>(writer: W, m: &OverlapMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["from".to_string()];
    header.extend(m.criterion_ids.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (q, id) in m.criterion_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(m.entries[q].iter().map(|v| fixed(*v, 2)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| AuditError::io("csv output", e))
}

pub fn write_alignment_csv<W: Write>(writer: W, v: &ValidationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["category_a", "category_b", "human_split", "diag_coact", "denominator", "threshold"])
        .map_err(csv_error)?;
    if let Some(a) = &v.alignment {
        for r in &a.rows {
            w.write_record([
                r.category_a.clone(),
                r.category_b.clone(),
                pct(Some(r.human_split)),
                pct(Some(r.diag_coact)),
                r.denominator.to_string(),
                a.threshold.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| AuditError::io("csv output", e))
}

/// One row per criterion: value per variant, range, rank range and top-k count.
pub fn write_ranks_csv<W: Write>(writer: W, r: &RankStability, as_percent: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["criterion_id".to_string()];
    header.extend(r.variants.iter().cloned());
    header.extend(["min", "max", "best_rank", "worst_rank"].map(String::from));
    header.push(format!("top{}_count", r.k));
    header.push("variants".into());
    w.write_record(&header).map_err(csv_error)?;
    let fmt = |x: Option<f64>| if as_percent { pct(x) } else { fixed(x, 3) };
    for c in &r.criteria {
        let mut row = vec![c.criterion_id.clone()];
        row.extend(c.values.iter().map(|v| fmt(*v)));
        row.push(fmt(c.min));
        row.push(fmt(c.max));
        row.push(c.best_rank.map(|x| x.to_string()).unwrap_or_default());
        row.push(c.worst_rank.map(|x| x.to_string()).unwrap_or_default());
        row.push(c.top_k_count.to_string());
        row.push(r.variants.len().to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| AuditError::io("csv output", e))
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let path = dir.join(name);
    File::create(&path).map_err(|e| AuditError::io(path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| AuditError::io(path, e))
}

/// Writes the bundle into `dir` (created if needed) and returns the file names written.
pub fn write_bundle(report: &AuditReport, schema: &Schema, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let mut written = Vec::new();
    let mut record = |name: String| written.push(name);

    write_text(dir, "report.json", &(report.to_json_pretty() + "\n"))?;
    record("report.json".into());
    for s in &report.thresholds {
        let t = s.threshold;
        write_stability_csv(create(dir, &format!("stability_t{t}.csv"))?, &s.stability)?;
        write_overlap_csv(create(dir, &format!("overlap_t{t}.csv"))?, &s.overlap)?;
        write_condov_csv(create(dir, &format!("condov_t{t}.csv"))?, &s.condov)?;
        write_text(dir, &format!("heatmap_t{t}.svg"), &render_heatmap(&s.condov, schema))?;
        write_text(dir, &format!("landscape_t{t}.svg"), &render_stability_landscape(&s.stability))?;
        for name in ["stability", "overlap", "condov"] {
            record(format!("{name}_t{t}.csv"));
        }
        record(format!("heatmap_t{t}.svg"));
        record(format!("landscape_t{t}.svg"));
    }
    write_ranks_csv(create(dir, "ambiguity_ranks.csv")?, &report.robustness.ambiguity_ranks, false)?;
    record("ambiguity_ranks.csv".into());
    if let Some(loo) = &report.robustness.loo {
        write_ranks_csv(create(dir, "loo.csv")?, &loo.nt_ranks, true)?;
        record("loo.csv".into());
    }
    if let Some(v) = &report.validation {
        write_alignment_csv(create(dir, "alignment.csv")?, v)?;
        record("alignment.csv".into());
    }
    Ok(written)
}
