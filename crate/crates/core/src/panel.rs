//! Collecting raw criterion answers from a panel of text-generation services.
//!
//! Every (unit, annotator, criterion) cell is a separate request carrying one
//! sentence and one question. The network layer is the [`Transport`] trait;
//! this crate ships a replay transport backed by JSON-lines fixtures and a
//! recording wrapper that produces them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AuditError, Result};
use crate::normalize::RawRecord;
use crate::schema::{Criterion, Schema};

pub const SENTENCE_SLOT: &str = "{sentence}";
pub const QUESTION_SLOT: &str = "{question_text}";

pub const DEFAULT_TEMPLATE_FR: &str = include_str!("../../../data/templates/prompt_fr.txt");
pub const DEFAULT_TEMPLATE_EN: &str = include_str!("../../../data/templates/prompt_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    /// Template text split around the two slots, in order of appearance.
    pieces: [String; 3],
    sentence_first: bool,
    answer_instruction: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        for slot in [SENTENCE_SLOT, QUESTION_SLOT] {
            let n = text.matches(slot).count();
            if n != 1 {
                return Err(AuditError::Template(format!("slot {slot} appears {n} times, expected once")));
            }
        }
        let s = text.find(SENTENCE_SLOT).unwrap();
        let q = text.find(QUESTION_SLOT).unwrap();
        let ((first, first_len), (second, second_len)) = if s < q {
            ((s, SENTENCE_SLOT.len()), (q, QUESTION_SLOT.len()))
        } else {
            ((q, QUESTION_SLOT.len()), (s, SENTENCE_SLOT.len()))
        };
        let answer_instruction = text
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or_default()
            .trim()
            .to_string();
        Ok(PromptTemplate {
            pieces: [
                text[..first].to_string(),
                text[first + first_len..second].to_string(),
                text[second + second_len..].to_string(),
            ],
            sentence_first: s < q,
            answer_instruction,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn french() -> Self {
        Self::parse(DEFAULT_TEMPLATE_FR).expect("bundled template is valid")
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_TEMPLATE_EN).expect("bundled template is valid")
    }

    /// Final non-empty line of the template.
    pub fn answer_instruction(&self) -> &str {
        &self.answer_instruction
    }

    pub fn render(&self, sentence: &str, question: &str) -> Result<String> {
        if sentence.trim().is_empty() {
            return Err(AuditError::Template("empty sentence".into()));
        }
        let (a, b) = if self.sentence_first {
            (sentence, question)
        } else {
            (question, sentence)
        };
        let [p0, p1, p2] = &self.pieces;
        Ok([p0.as_str(), a, p1, b, p2].concat())
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::french()
    }
}

pub fn render_prompt(template: &PromptTemplate, sentence: &str, criterion: &Criterion) -> Result<String> {
    template.render(sentence, &criterion.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub id: String,
    /// Free-form endpoint descriptor, interpreted by the transport.
    #[serde(default)]
    pub endpoint: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            max_tokens: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub annotators: Vec<AnnotatorConfig>,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on concurrent requests.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    1
}

impl PanelConfig {
    pub fn new(annotators: Vec<AnnotatorConfig>) -> Result<Self> {
        let config = PanelConfig {
            annotators,
            decoding: Decoding::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: PanelConfig =
            serde_json::from_str(text).map_err(|e| AuditError::parse(format!("panel config line {}", e.line()), e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.annotators.is_empty() {
            return Err(AuditError::PanelConfig("no annotators".into()));
        }
        let mut seen = HashSet::new();
        for a in &self.annotators {
            if !seen.insert(a.id.as_str()) {
                return Err(AuditError::PanelConfig(format!("duplicate annotator id `{}`", a.id)));
            }
        }
        if self.retry.max_attempts == 0 {
            return Err(AuditError::PanelConfig("max_attempts must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(AuditError::PanelConfig("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn annotator_ids(&self) -> Vec<String> {
        self.annotators.iter().map(|a| a.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub annotator: &'a AnnotatorConfig,
    pub decoding: &'a Decoding,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying.
    Transient(String),
    /// This cell will not succeed; record it as missing.
    Permanent(String),
    /// The transport cannot serve any request; abort collection.
    Misconfigured(String),
}

pub trait Transport: Sync {
    fn complete(&self, request: &Request<'_>) -> std::result::Result<String, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&Request<'_>) -> std::result::Result<String, TransportError> + Sync,
{
    fn complete(&self, request: &Request<'_>) -> std::result::Result<String, TransportError> {
        self(request)
    }
}

/// Fixture key: `<annotator id>:<sha256 of prompt>`.
pub fn fixture_key(annotator_id: &str, prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{annotator_id}:{hex}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub response: String,
}

/// Answers from a fixture; unknown keys are permanent failures.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        ReplayTransport {
            responses: records.into_iter().map(|r| (r.key, r.response)).collect(),
        }
    }

    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| AuditError::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| AuditError::parse(format!("{source}:{}", i + 1), e))?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &Request<'_>) -> std::result::Result<String, TransportError> {
        let key = fixture_key(&request.annotator.id, request.prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| TransportError::Permanent(format!("no recorded response for {key}")))
    }
}

/// Forwards to an inner transport and keeps every successful answer.
pub struct RecordingTransport<T> {
    inner: T,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Recorded fixtures sorted by key.
    pub fn records(&self) -> Vec<FixtureRecord> {
        self.recorded
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| FixtureRecord {
                key: k.clone(),
                response: v.clone(),
            })
            .collect()
    }

    pub fn write_fixture<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in self.records() {
            let line = serde_json::to_string(&r).expect("fixture serializes");
            writeln!(writer, "{line}").map_err(|e| AuditError::io("fixture output", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| AuditError::io(path, e))?;
        self.write_fixture(file)
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&self, request: &Request<'_>) -> std::result::Result<String, TransportError> {
        let answer = self.inner.complete(request)?;
        self.recorded
            .lock()
            .unwrap()
            .insert(fixture_key(&request.annotator.id, request.prompt), answer.clone());
        Ok(answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusUnit {
    pub unit_id: String,
    pub sentence: String,
}

pub fn read_corpus_csv<R: Read>(reader: R, source: &str) -> Result<Vec<CorpusUnit>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| AuditError::parse(format!("{source}:1"), e))?
        .clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["unit_id", "sentence"] {
        return Err(AuditError::parse(format!("{source}:1"), "expected header `unit_id,sentence`"));
    }
    let mut seen = HashSet::new();
    let mut units = Vec::new();
    for (i, row) in rdr.deserialize::<CorpusUnit>().enumerate() {
        let unit = row.map_err(|e| AuditError::parse(format!("{source}:{}", i + 2), e))?;
        if !seen.insert(unit.unit_id.clone()) {
            return Err(AuditError::parse(
                format!("{source}:{}", i + 2),
                format!("duplicate unit `{}`", unit.unit_id),
            ));
        }
        units.push(unit);
    }
    Ok(units)
}

pub fn read_corpus_path(path: impl AsRef<Path>) -> Result<Vec<CorpusUnit>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AuditError::io(path, e))?;
    read_corpus_csv(file, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingCell {
    pub unit_id: String,
    pub annotator_id: String,
    pub criterion_id: String,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collection {
    /// Answered cells ordered by unit, annotator, criterion.
    pub raw: Vec<RawRecord>,
    pub missing: Vec<MissingCell>,
}

enum CellOutcome {
    Answered(String),
    Missing { attempts: u32, reason: String },
}

fn query_cell(
    transport: &dyn Transport,
    request: &Request<'_>,
    retry: &RetryPolicy,
) -> std::result::Result<CellOutcome, String> {
    let mut delay = retry.backoff_ms;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match transport.complete(request) {
            Ok(text) => return Ok(CellOutcome::Answered(text)),
            Err(TransportError::Misconfigured(msg)) => return Err(msg),
            Err(TransportError::Permanent(reason)) => {
                return Ok(CellOutcome::Missing { attempts: attempt, reason })
            }
            Err(TransportError::Transient(reason)) => {
                if attempt >= retry.max_attempts {
                    return Ok(CellOutcome::Missing { attempts: attempt, reason });
                }
                if delay > 0 {
                    thread::sleep(Duration::from_millis(delay));
                }
                delay = delay.saturating_mul(2);
            }
        }
    }
}

/// Queries every (unit, annotator, criterion) cell. Cells that still fail
/// after the retry budget become [`MissingCell`]s; only a misconfigured
/// transport aborts the run.
pub fn collect(
    corpus: &[CorpusUnit],
    schema: &Schema,
    config: &PanelConfig,
    template: &PromptTemplate,
    transport: &dyn Transport,
) -> Result<Collection> {
    config.validate()?;
    let criteria = schema.criteria();
    let mut prompts = Vec::with_capacity(corpus.len() * criteria.len());
    for unit in corpus {
        for q in criteria {
            prompts.push(render_prompt(template, &unit.sentence, q).map_err(|e| match e {
                AuditError::Template(m) => AuditError::Template(format!("unit `{}`: {m}", unit.unit_id)),
                other => other,
            })?);
        }
    }

    let (n_a, n_q) = (config.annotators.len(), criteria.len());
    let total = corpus.len() * n_a * n_q;
    let outcomes: Mutex<Vec<Option<CellOutcome>>> = Mutex::new((0..total).map(|_| None).collect());
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let next = AtomicUsize::new(0);

    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= total || failure.lock().unwrap().is_some() {
            return;
        }
        let (s, rest) = (i / (n_a * n_q), i % (n_a * n_q));
        let (a, q) = (rest / n_q, rest % n_q);
        let request = Request {
            annotator: &config.annotators[a],
            decoding: &config.decoding,
            prompt: &prompts[s * n_q + q],
        };
        match query_cell(transport, &request, &config.retry) {
            Ok(outcome) => outcomes.lock().unwrap()[i] = Some(outcome),
            Err(msg) => {
                failure.lock().unwrap().get_or_insert(msg);
                return;
            }
        }
    };
    let workers = config.max_in_flight.min(total.max(1));
    if workers <= 1 {
        worker();
    } else {
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(worker);
            }
        });
    }
    if let Some(msg) = failure.into_inner().unwrap() {
        return Err(AuditError::Transport(msg));
    }

    let mut raw = Vec::new();
    let mut missing = Vec::new();
    for (i, outcome) in outcomes.into_inner().unwrap().into_iter().enumerate() {
        let (s, rest) = (i / (n_a * n_q), i % (n_a * n_q));
        let (a, q) = (rest / n_q, rest % n_q);
        let (unit_id, annotator_id, criterion_id) = (
            corpus[s].unit_id.clone(),
            config.annotators[a].id.clone(),
            criteria[q].id.clone(),
        );
        match outcome.expect("every cell is visited") {
            CellOutcome::Answered(raw_text) => raw.push(RawRecord {
                unit_id,
                annotator_id,
                criterion_id,
                raw_text,
            }),
            CellOutcome::Missing { attempts, reason } => missing.push(MissingCell {
                unit_id,
                annotator_id,
                criterion_id,
                attempts,
                reason,
            }),
        }
    }
    Ok(Collection { raw, missing })
}
