//! Task schema: categories, binary criteria, and the criterion-to-category map.
//!
//! A schema file is JSON:
//!
//! ```json
//! {
//!   "version": "v1",
//!   "categories": [{"id": "c0", "name": "Non-target", "non_target": true}, ...],
//!   "criteria":   [{"id": "q1", "text": "Does the sentence ...?", "category": "c1"}, ...]
//! }
//! ```
//!
//! Ordering in the file is preserved and drives the ordering of every report.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AuditError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    #[serde(rename = "non_target", default)]
    pub is_non_target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    /// Short display label; falls back to the id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// The yes/no question. Never used in computations.
    pub text: String,
    #[serde(rename = "category")]
    pub category_id: String,
}

impl Criterion {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    version: Option<String>,
    categories: Vec<Category>,
    criteria: Vec<Criterion>,
    /// For each criterion, the index of its category within `substantive`.
    criterion_category: Vec<usize>,
    /// Indices into `categories` of the substantive categories, in file order.
    substantive: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    categories: Vec<Category>,
    criteria: Vec<Criterion>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = AuditError;

    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.version, raw.categories, raw.criteria)
    }
}

impl From<Schema> for RawSchema {
    fn from(schema: Schema) -> Self {
        RawSchema {
            version: schema.version,
            categories: schema.categories,
            criteria: schema.criteria,
        }
    }
}

impl Schema {
    pub fn new(
        version: Option<String>,
        categories: Vec<Category>,
        criteria: Vec<Criterion>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &categories {
            if !seen.insert(c.id.as_str()) {
                return Err(AuditError::Schema(format!("duplicate category id `{}`", c.id)));
            }
        }
        let non_target = categories.iter().filter(|c| c.is_non_target).count();
        if non_target != 1 {
            return Err(AuditError::Schema(format!(
                "expected exactly one non-target category, found {non_target}"
            )));
        }
        let substantive: Vec<usize> = categories
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_non_target)
            .map(|(i, _)| i)
            .collect();
        if substantive.is_empty() {
            return Err(AuditError::Schema("no substantive categories".into()));
        }

        let mut seen = HashSet::new();
        let mut criterion_category = Vec::with_capacity(criteria.len());
        for q in &criteria {
            if !seen.insert(q.id.as_str()) {
                return Err(AuditError::Schema(format!("duplicate criterion id `{}`", q.id)));
            }
            let Some(pos) = categories.iter().position(|c| c.id == q.category_id) else {
                return Err(AuditError::Schema(format!(
                    "criterion `{}` mapped to missing category `{}`",
                    q.id, q.category_id
                )));
            };
            if categories[pos].is_non_target {
                return Err(AuditError::Schema(format!(
                    "criterion `{}` mapped to non-target category `{}`",
                    q.id, q.category_id
                )));
            }
            criterion_category.push(substantive.iter().position(|&i| i == pos).unwrap());
        }

        Ok(Schema {
            version,
            categories,
            criteria,
            criterion_category,
            substantive,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            // serde wraps our TryFrom error as a custom message; keep it readable.
            AuditError::parse(format!("schema line {}", e.line()), e)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| AuditError::parse(format!("{}:{}", path.display(), e.line()), e))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// SHA-256 over the canonical compact JSON encoding.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn non_target(&self) -> &Category {
        self.categories.iter().find(|c| c.is_non_target).unwrap()
    }

    pub fn substantive_categories(&self) -> impl Iterator<Item = &Category> + '_ {
        self.substantive.iter().map(move |&i| &self.categories[i])
    }

    pub fn num_substantive(&self) -> usize {
        self.substantive.len()
    }

    pub fn criterion_index(&self, id: &str) -> Option<usize> {
        self.criteria.iter().position(|q| q.id == id)
    }

    pub fn category_index(&self, id: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.id == id)
    }

    /// Position of `id` among the substantive categories.
    pub fn substantive_index(&self, id: &str) -> Result<usize> {
        let pos = self
            .category_index(id)
            .ok_or_else(|| AuditError::UnknownCategory(id.to_string()))?;
        if self.categories[pos].is_non_target {
            return Err(AuditError::NonTargetCategory(id.to_string()));
        }
        Ok(self.substantive.iter().position(|&i| i == pos).unwrap())
    }

    /// Substantive-category position of criterion `q` (by criterion index).
    pub fn category_of(&self, q: usize) -> usize {
        self.criterion_category[q]
    }

    pub fn criterion_ids(&self) -> Vec<String> {
        self.criteria.iter().map(|q| q.id.clone()).collect()
    }

    /// Criteria supporting a substantive category, in schema order.
    pub fn supporting_criteria(&self, category_id: &str) -> Result<Vec<&Criterion>> {
        let k = self.substantive_index(category_id)?;
        Ok(self
            .criteria
            .iter()
            .zip(&self.criterion_category)
            .filter(|(_, &c)| c == k)
            .map(|(q, _)| q)
            .collect())
    }
}
