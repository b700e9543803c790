//! Mapping raw annotator text to binary decisions, and grid-level cleaning.
//!
//! A raw answer is trimmed and stripped of surrounding markdown emphasis
//! (`*`, `_`) before lookup. Case-folded forms are matched against the yes/no
//! sets; a separate case-sensitive table holds forms such as a bare `O` that
//! must not match a stray lowercase letter.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::tensor::ResponseRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Yes,
    No,
    Malformed,
}

impl Decision {
    pub fn as_bit(self) -> Option<u8> {
        match self {
            Decision::Yes => Some(1),
            Decision::No => Some(0),
            Decision::Malformed => None,
        }
    }
}

/// Rule table file format:
///
/// ```json
/// {"yes": ["oui", "oui."], "no": ["non", "non."], "case_sensitive": {"yes": ["O"], "no": []}}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleFile", into = "RuleFile")]
pub struct NormalizationRules {
    folded: HashMap<String, Polarity>,
    exact: HashMap<String, Polarity>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PolaritySets {
    #[serde(default)]
    yes: BTreeSet<String>,
    #[serde(default)]
    no: BTreeSet<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleFile {
    #[serde(default)]
    yes: BTreeSet<String>,
    #[serde(default)]
    no: BTreeSet<String>,
    #[serde(default)]
    case_sensitive: PolaritySets,
}

impl TryFrom<RuleFile> for NormalizationRules {
    type Error = AuditError;

    fn try_from(file: RuleFile) -> Result<Self> {
        let mut rules = NormalizationRules {
            folded: HashMap::new(),
            exact: HashMap::new(),
        };
        for form in &file.yes {
            rules.add(form, Polarity::Yes, false)?;
        }
        for form in &file.no {
            rules.add(form, Polarity::No, false)?;
        }
        for form in &file.case_sensitive.yes {
            rules.add(form, Polarity::Yes, true)?;
        }
        for form in &file.case_sensitive.no {
            rules.add(form, Polarity::No, true)?;
        }
        Ok(rules)
    }
}

impl From<NormalizationRules> for RuleFile {
    fn from(rules: NormalizationRules) -> Self {
        let mut file = RuleFile {
            yes: BTreeSet::new(),
            no: BTreeSet::new(),
            case_sensitive: PolaritySets::default(),
        };
        for (form, p) in rules.folded {
            match p {
                Polarity::Yes => file.yes.insert(form),
                Polarity::No => file.no.insert(form),
            };
        }
        for (form, p) in rules.exact {
            match p {
                Polarity::Yes => file.case_sensitive.yes.insert(form),
                Polarity::No => file.case_sensitive.no.insert(form),
            };
        }
        file
    }
}

fn strip_markup(raw: &str) -> &str {
    raw.trim()
        .trim_matches(|c| c == '*' || c == '_')
        .trim()
}

impl Default for NormalizationRules {
    /// French Oui/Non variants observed from LLM panels, including the
    /// truncated positive `O`.
    fn default() -> Self {
        let mut rules = NormalizationRules {
            folded: HashMap::new(),
            exact: HashMap::new(),
        };
        for form in ["Oui", "Oui."] {
            rules.add(form, Polarity::Yes, false).unwrap();
        }
        for form in ["Non", "Non."] {
            rules.add(form, Polarity::No, false).unwrap();
        }
        rules.add("O", Polarity::Yes, true).unwrap();
        rules
    }
}

impl NormalizationRules {
    pub fn empty() -> Self {
        NormalizationRules {
            folded: HashMap::new(),
            exact: HashMap::new(),
        }
    }

    /// Registers a surface form. Markup is stripped from `form` first.
    pub fn add(&mut self, form: &str, polarity: Polarity, case_sensitive: bool) -> Result<()> {
        let stripped = strip_markup(form);
        if stripped.is_empty() {
            return Err(AuditError::InvalidArgument(format!(
                "surface form `{form}` is empty after stripping"
            )));
        }
        let (table, key) = if case_sensitive {
            (&mut self.exact, stripped.to_string())
        } else {
            (&mut self.folded, stripped.to_lowercase())
        };
        match table.get(&key) {
            Some(&existing) if existing != polarity => Err(AuditError::InvalidArgument(format!(
                "surface form `{key}` listed as both yes and no"
            ))),
            _ => {
                table.insert(key, polarity);
                Ok(())
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| AuditError::parse(format!("{}:{}", path.display(), e.line()), e))
    }

    pub fn normalize(&self, raw: &str) -> Decision {
        let stripped = strip_markup(raw);
        if stripped.is_empty() {
            return Decision::Malformed;
        }
        let polarity = self
            .exact
            .get(stripped)
            .or_else(|| self.folded.get(&stripped.to_lowercase()));
        match polarity {
            Some(Polarity::Yes) => Decision::Yes,
            Some(Polarity::No) => Decision::No,
            None => Decision::Malformed,
        }
    }
}

/// Normalizes with the default rule table.
pub fn normalize_response(raw: &str) -> Decision {
    NormalizationRules::default().normalize(raw)
}

/// One raw cell as returned by an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub unit_id: String,
    pub annotator_id: String,
    pub criterion_id: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorTally {
    /// Count of each observed raw form (trimmed), before normalization.
    pub forms: BTreeMap<String, usize>,
    pub total: usize,
    pub missing: usize,
    pub malformed: usize,
    /// Malformed cells whose text was empty or whitespace-only.
    pub blank: usize,
    pub valid: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub per_annotator: BTreeMap<String, AnnotatorTally>,
    pub total: usize,
    pub missing: usize,
    pub malformed: usize,
    pub blank: usize,
    pub valid: usize,
}

/// Normalizes a raw grid into binary rows.
///
/// The expected grid is every (unit, annotator, criterion) combination seen in
/// `raw`; combinations with no row are counted as missing. Malformed cells are
/// dropped from the output; valid cells pass through in input order.
pub fn clean_grid(
    raw: &[RawRecord],
    rules: &NormalizationRules,
) -> Result<(Vec<ResponseRecord>, CleaningReport)> {
    let mut units = Vec::new();
    let mut annotators = Vec::new();
    let mut criteria = Vec::new();
    let (mut su, mut sa, mut sq) = (HashSet::new(), HashSet::new(), HashSet::new());
    for r in raw {
        if su.insert(r.unit_id.as_str()) {
            units.push(r.unit_id.as_str());
        }
        if sa.insert(r.annotator_id.as_str()) {
            annotators.push(r.annotator_id.as_str());
        }
        if sq.insert(r.criterion_id.as_str()) {
            criteria.push(r.criterion_id.as_str());
        }
    }

    let mut report = CleaningReport::default();
    for a in &annotators {
        report.per_annotator.insert(
            a.to_string(),
            AnnotatorTally {
                total: units.len() * criteria.len(),
                ..Default::default()
            },
        );
    }

    let mut seen: HashMap<(&str, &str, &str), &str> = HashMap::new();
    let mut rows = Vec::new();
    for r in raw {
        let key = (r.unit_id.as_str(), r.annotator_id.as_str(), r.criterion_id.as_str());
        if let Some(previous) = seen.insert(key, r.raw_text.as_str()) {
            if previous != r.raw_text {
                return Err(AuditError::ConflictingCell {
                    unit: r.unit_id.clone(),
                    annotator: r.annotator_id.clone(),
                    criterion: r.criterion_id.clone(),
                });
            }
            continue;
        }
        let tally = report.per_annotator.get_mut(&r.annotator_id).unwrap();
        *tally.forms.entry(r.raw_text.trim().to_string()).or_default() += 1;
        match rules.normalize(&r.raw_text).as_bit() {
            Some(value) => {
                tally.valid += 1;
                rows.push(ResponseRecord {
                    unit_id: r.unit_id.clone(),
                    annotator_id: r.annotator_id.clone(),
                    criterion_id: r.criterion_id.clone(),
                    value,
                });
            }
            None => {
                tally.malformed += 1;
                if r.raw_text.trim().is_empty() {
                    tally.blank += 1;
                }
            }
        }
    }

    for tally in report.per_annotator.values_mut() {
        tally.missing = tally.total - tally.valid - tally.malformed;
        report.total += tally.total;
        report.missing += tally.missing;
        report.malformed += tally.malformed;
        report.blank += tally.blank;
        report.valid += tally.valid;
    }
    Ok((rows, report))
}

const RAW_HEADER: [&str; 4] = ["unit_id", "annotator_id", "criterion_id", "raw_text"];

/// Reads `unit_id,annotator_id,criterion_id,raw_text` rows. `raw_text` is kept
/// untrimmed.
pub fn read_raw_csv<R: Read>(reader: R, source: &str) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| AuditError::parse(format!("{source}:1"), e))?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != RAW_HEADER {
        return Err(AuditError::parse(
            format!("{source}:1"),
            format!("expected header `{}`", RAW_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            AuditError::parse(format!("{source}:{line}"), e)
        })?;
        out.push(RawRecord {
            unit_id: record[0].trim().to_string(),
            annotator_id: record[1].trim().to_string(),
            criterion_id: record[2].trim().to_string(),
            raw_text: record[3].to_string(),
        });
    }
    Ok(out)
}

pub fn read_raw_csv_path(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    read_raw_csv(file, &path.display().to_string())
}

pub fn write_raw_csv<W: std::io::Write>(writer: W, rows: &[RawRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| AuditError::InvalidArgument(format!("csv write failed: {e}"));
    wtr.write_record(RAW_HEADER).map_err(to_err)?;
    for r in rows {
        wtr.write_record([&r.unit_id, &r.annotator_id, &r.criterion_id, &r.raw_text])
            .map_err(to_err)?;
    }
    wtr.flush()
        .map_err(|e| AuditError::InvalidArgument(format!("csv write failed: {e}")))?;
    Ok(())
}

/// True when the CSV header names a `raw_text` column.
pub fn is_raw_header(first_line: &str) -> bool {
    first_line.split(',').any(|h| h.trim() == "raw_text")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::tests::two_category_schema;
    use crate::tensor::build_tensor;

    fn raw(u: &str, a: &str, q: &str, text: &str) -> RawRecord {
        RawRecord {
            unit_id: u.into(),
            annotator_id: a.into(),
            criterion_id: q.into(),
            raw_text: text.into(),
        }
    }

    #[test]
    fn default_table() {
        for yes in ["Oui", "Oui.", "O", "**Oui**", "**Oui", " oui ", "OUI"] {
            assert_eq!(normalize_response(yes), Decision::Yes, "{yes}");
        }
        for no in ["Non", "Non.", "**Non**", "non"] {
            assert_eq!(normalize_response(no), Decision::No, "{no}");
        }
        for bad in ["Peut-être", "o", "", "   ", "Oui, car", "N"] {
            assert_eq!(normalize_response(bad), Decision::Malformed, "{bad}");
        }
    }

    #[test]
    fn canonical_outputs_are_fixed_points() {
        assert_eq!(normalize_response("Oui"), Decision::Yes);
        assert_eq!(normalize_response(String::from("Oui").as_str()), normalize_response("Oui"));
        assert_eq!(normalize_response("Non"), Decision::No);
    }

    #[test]
    fn rule_file_extends_and_rejects_overlap() {
        let rules: NormalizationRules = serde_json::from_str(
            r#"{"yes": ["yes", "Oui"], "no": ["no"], "case_sensitive": {"yes": ["Y"]}}"#,
        )
        .unwrap();
        assert_eq!(rules.normalize("**Yes**"), Decision::Yes);
        assert_eq!(rules.normalize("Y"), Decision::Yes);
        assert_eq!(rules.normalize("y"), Decision::Malformed);
        assert_eq!(rules.normalize("No"), Decision::No);

        let overlap = serde_json::from_str::<NormalizationRules>(r#"{"yes": ["ok"], "no": ["OK"]}"#);
        assert!(overlap.is_err());

        let round: NormalizationRules =
            serde_json::from_str(&serde_json::to_string(&rules).unwrap()).unwrap();
        assert_eq!(round, rules);
    }

    fn full_grid(n_units: usize) -> Vec<RawRecord> {
        let mut out = Vec::new();
        for s in 0..n_units {
            for a in ["a1", "a2"] {
                for q in ["q1", "q2"] {
                    out.push(raw(&format!("s{s}"), a, q, if s % 2 == 0 { "Oui" } else { "Non." }));
                }
            }
        }
        out
    }

    #[test]
    fn clean_grid_all_valid() {
        let grid = full_grid(3);
        let (rows, report) = clean_grid(&grid, &NormalizationRules::default()).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!((report.missing, report.malformed, report.valid), (0, 0, 12));
        assert_eq!(report.per_annotator["a1"].forms["Oui"], 4);
        assert_eq!(report.per_annotator["a1"].forms["Non."], 2);
    }

    #[test]
    fn clean_grid_counts_invalid_tuples() {
        let mut grid = full_grid(4);
        let n = grid.len();
        grid.remove(5); // one missing
        grid[0].raw_text = "Peut-être".into();
        grid[1].raw_text = "??".into();
        grid[2].raw_text = "  ".into();
        let (rows, report) = clean_grid(&grid, &NormalizationRules::default()).unwrap();
        assert_eq!(report.total, n);
        assert_eq!(report.missing, 1);
        assert_eq!(report.malformed, 3);
        assert_eq!(report.blank, 1);
        assert_eq!(report.valid, n - 4);
        assert_eq!(rows.len(), n - 4);
        for tally in report.per_annotator.values() {
            assert_eq!(tally.missing + tally.malformed + tally.valid, tally.total);
        }
    }

    #[test]
    fn malformed_cell_drops_unit_downstream() {
        let mut grid = full_grid(3);
        // unit s1, annotator a2, criterion q1
        let i = grid
            .iter()
            .position(|r| r.unit_id == "s1" && r.annotator_id == "a2" && r.criterion_id == "q1")
            .unwrap();
        grid[i].raw_text = "maybe".into();
        let (rows, _) = clean_grid(&grid, &NormalizationRules::default()).unwrap();
        let (tensor, drops) = build_tensor(&rows, &two_category_schema()).unwrap();
        assert_eq!(drops.dropped_units, ["s1"]);
        assert_eq!(tensor.unit_ids(), ["s0", "s2"]);
    }

    #[test]
    fn valid_tuples_preserved_exactly() {
        let grid = full_grid(2);
        let (rows, _) = clean_grid(&grid, &NormalizationRules::default()).unwrap();
        for (r, g) in rows.iter().zip(&grid) {
            assert_eq!(r.unit_id, g.unit_id);
            assert_eq!(r.annotator_id, g.annotator_id);
            assert_eq!(r.criterion_id, g.criterion_id);
            assert_eq!(r.value, normalize_response(&g.raw_text).as_bit().unwrap());
        }
    }

    #[test]
    fn raw_csv_keeps_markup() {
        let text = "unit_id,annotator_id,criterion_id,raw_text\ns1,a1,q1,**Oui**\ns1,a1,q2,\" Non.\"\n";
        let rows = read_raw_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(rows[0].raw_text, "**Oui**");
        assert_eq!(rows[1].raw_text, " Non.");
        let mut buf = Vec::new();
        write_raw_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_raw_csv(buf.as_slice(), "mem").unwrap(), rows);
        assert!(is_raw_header("unit_id,annotator_id,criterion_id,raw_text"));
        assert!(!is_raw_header("unit_id,annotator_id,criterion_id,value"));
    }
}
