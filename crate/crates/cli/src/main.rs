use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use schema_audit_core::normalize::{clean_grid, read_raw_csv_path, write_raw_csv, NormalizationRules};
use schema_audit_core::panel::{collect, read_corpus_path, PanelConfig, PromptTemplate, ReplayTransport};
use schema_audit_core::report::{
    audit_tensor, check_invariants, load_tensor, threshold_section, write_alignment_csv, write_bundle,
    write_condov_csv, write_overlap_csv, write_ranks_csv, write_stability_csv, AuditOptions, LoadedTensor,
    LooOptions,
};
use schema_audit_core::robustness::{default_thresholds, loo_analysis, rank_stability, threshold_sweep, Metric, VariantValues};
use schema_audit_core::svg::{render_heatmap, render_stability_landscape};
use schema_audit_core::synth::{generate, PlantedSpec};
use schema_audit_core::tensor::write_long_csv;
use schema_audit_core::validation::{read_labels_path, validation_report};
use schema_audit_core::{vote_counts, AuditError, Result, Schema};
use serde_json::json;

/// Audit an annotation schema from multi-annotator binary criterion judgments.
#[derive(Parser, Debug)]
#[command(name = "audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a response grid, report its shape and dropped units, optionally write the binary long form
    Ingest {
        #[command(flatten)]
        input: Input,
        /// Write the filtered binary tensor here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map raw answers to 0/1 and report per-annotator cleaning statistics
    Normalize {
        /// Raw CSV: unit_id,annotator_id,criterion_id,raw_text
        #[arg(long)]
        input: PathBuf,
        /// JSON rule table replacing the default Oui/Non forms
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Binary long-form CSV output
        #[arg(long)]
        out: PathBuf,
    },
    /// Activation, vote distribution and UY/AS/NT zones per criterion
    Stability {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        thresholds: Thresholds,
        /// Directory for per-threshold CSV files
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coverage, category overlap and the directed conditional overlap matrix
    Overlap {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        mask: Mask,
        /// Directory for CSV files and heatmaps
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold sweep, ambiguity rank stability and fixed-size leave-out panels
    Robustness {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        loo: Loo,
        /// Directory for rank and leave-out CSV files
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expert agreement, Fleiss' kappa, test-retest and boundary alignment
    Validate {
        #[command(flatten)]
        input: Input,
        /// CSV: unit_id,expert_id,pass,category_id
        #[arg(long)]
        labels: PathBuf,
        /// Vote threshold for coverage and category activation
        #[arg(long, default_value_t = 1)]
        threshold: u32,
        /// Directory for alignment.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic binary tensor with planted structure
    Synth {
        /// Criteria ids come from this schema when --spec is not given
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Planted spec (JSON)
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Vote-count distribution over 0..=A shared by every schema criterion
        #[arg(long, value_delimiter = ',')]
        distribution: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1000)]
        units: usize,
        /// Overrides the seed in the spec
        #[arg(long)]
        seed: Option<u64>,
        /// Binary long-form CSV output
        #[arg(long)]
        out: PathBuf,
        /// Achieved-versus-target report (JSON)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Query a panel through a replay fixture and write the raw grid
    Collect {
        #[arg(long)]
        schema: PathBuf,
        /// CSV: unit_id,sentence
        #[arg(long)]
        corpus: PathBuf,
        /// Panel configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines fixture of recorded responses
        #[arg(long)]
        replay: PathBuf,
        /// Prompt template file; overrides --language
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Language::Fr)]
        language: Language,
        /// Raw CSV output
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: every analysis plus the report bundle
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        thresholds: Thresholds,
        #[command(flatten)]
        mask: Mask,
        #[command(flatten)]
        loo: Loo,
        /// Expert labels, adds the validation section
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Bundle directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Input {
    /// Schema JSON
    #[arg(long)]
    schema: PathBuf,
    /// Long-form CSV, binary (value column) or raw (raw_text column)
    #[arg(long)]
    tensor: PathBuf,
    /// Restrict the main panel to these annotators
    #[arg(long, value_delimiter = ',')]
    annotators: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct Thresholds {
    /// Vote thresholds, comma separated (default 1,2,ceil(A/2))
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
struct Mask {
    /// Hide within-category cells in the heatmap (default)
    #[arg(long, overrides_with = "no_mask_within")]
    mask_within: bool,
    /// Show within-category cells in the heatmap
    #[arg(long)]
    no_mask_within: bool,
}

impl Mask {
    fn enabled(&self) -> bool {
        !self.no_mask_within
    }
}

#[derive(Args, Debug)]
struct Loo {
    /// Annotator pool for leave-out panels
    #[arg(long, value_delimiter = ',')]
    loo_pool: Option<Vec<String>>,
    /// Fixed panel size for leave-out panels (default: pool size - 1)
    #[arg(long)]
    panel_size: Option<usize>,
    /// Threshold for leave-out panels
    #[arg(long, default_value_t = 1)]
    loo_threshold: u32,
    /// Rank cut-off for top-k frequencies
    #[arg(long, default_value_t = 3)]
    top_k: usize,
}

impl Loo {
    fn options(&self) -> Option<LooOptions> {
        let pool = self.loo_pool.clone()?;
        Some(LooOptions {
            panel_size: self.panel_size.unwrap_or(pool.len().saturating_sub(1)),
            pool,
            threshold: self.loo_threshold,
            top_k: self.top_k,
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Language {
    Fr,
    En,
}

struct Loaded {
    schema: Schema,
    tensor: LoadedTensor,
}

impl Input {
    /// Loads the full grid, ignoring `--annotators`.
    fn load_full(&self) -> Result<Loaded> {
        let schema = Schema::load(&self.schema)?;
        let tensor = load_tensor(&self.tensor, &schema, &NormalizationRules::default())?;
        Ok(Loaded { schema, tensor })
    }

    fn load(&self) -> Result<Loaded> {
        let mut loaded = self.load_full()?;
        if let Some(ids) = &self.annotators {
            loaded.tensor.tensor = loaded.tensor.tensor.select_annotators(ids)?;
        }
        Ok(loaded)
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    writeln!(io::stdout(), "{text}").map_err(|e| AuditError::Io { path: "<stdout>".into(), source: e })
}

fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("report types serialize")
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AuditError::Io { path: dir.into(), source: e })
}

fn create(path: PathBuf) -> Result<File> {
    File::create(&path).map_err(|e| AuditError::Io { path, source: e })
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| AuditError::Io { path, source: e })
}

fn thresholds_for(requested: &Thresholds, panel_size: u32) -> Vec<u32> {
    requested.thresholds.clone().unwrap_or_else(|| default_thresholds(panel_size))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => {
            let loaded = input.load()?;
            if let Some(path) = out {
                write_long_csv(create(path)?, &loaded.tensor.tensor.to_records())?;
            }
            print_json(&to_json(&loaded.tensor.provenance))
        }
        Command::Normalize { input, rules, out } => {
            let rules = match rules {
                Some(p) => NormalizationRules::load(p)?,
                None => NormalizationRules::default(),
            };
            let raw = read_raw_csv_path(&input)?;
            let (rows, report) = clean_grid(&raw, &rules)?;
            write_long_csv(create(out)?, &rows)?;
            print_json(&to_json(&report))
        }
        Command::Stability { input, thresholds, out } => {
            let Loaded { schema, tensor } = input.load()?;
            let votes = vote_counts(&tensor.tensor);
            let ts = thresholds_for(&thresholds, votes.panel_size());
            let sweep = threshold_sweep(&votes, &schema, &ts)?;
            if let Some(dir) = &out {
                out_dir(dir)?;
                for e in &sweep {
                    write_stability_csv(create(dir.join(format!("stability_t{}.csv", e.threshold)))?, &e.stability)?;
                    write_file(
                        dir.join(format!("landscape_t{}.svg", e.threshold)),
                        &render_stability_landscape(&e.stability),
                    )?;
                }
            }
            let tables: Vec<_> = sweep
                .iter()
                .map(|e| json!({"threshold": e.threshold, "stability": to_json(&e.stability)}))
                .collect();
            print_json(&json!({"panel_size": votes.panel_size(), "thresholds": tables}))
        }
        Command::Overlap { input, thresholds, mask, out } => {
            let Loaded { schema, tensor } = input.load()?;
            let votes = vote_counts(&tensor.tensor);
            let ts = thresholds_for(&thresholds, votes.panel_size());
            let mut sections = Vec::new();
            for &t in &ts {
                let section = threshold_section(&votes, &schema, t, mask.enabled())?;
                check_invariants(&section)?;
                if let Some(dir) = &out {
                    out_dir(dir)?;
                    write_overlap_csv(create(dir.join(format!("overlap_t{t}.csv")))?, &section.overlap)?;
                    write_condov_csv(create(dir.join(format!("condov_t{t}.csv")))?, &section.condov)?;
                    write_file(dir.join(format!("heatmap_t{t}.svg")), &render_heatmap(&section.condov, &schema))?;
                }
                sections.push(json!({
                    "threshold": t,
                    "overlap": to_json(&section.overlap),
                    "condov": to_json(&section.condov),
                }));
            }
            print_json(&json!({"panel_size": votes.panel_size(), "thresholds": sections}))
        }
        Command::Robustness { input, thresholds, loo, out } => {
            let Loaded { schema, tensor } = input.load_full()?;
            let main = match &input.annotators {
                Some(ids) => tensor.tensor.select_annotators(ids)?,
                None => tensor.tensor.clone(),
            };
            let votes = vote_counts(&main);
            let ts = thresholds_for(&thresholds, votes.panel_size());
            let sweep = threshold_sweep(&votes, &schema, &ts)?;
            let columns: Vec<VariantValues> = sweep
                .iter()
                .map(|e| VariantValues::from_rows(format!("t={}", e.threshold), &e.stability, Metric::Ambiguity))
                .collect();
            let ranks = rank_stability("ambiguity", &columns, loo.top_k)?;
            let loo_result = match loo.options() {
                Some(o) => Some(loo_analysis(&tensor.tensor, &schema, &o.pool, o.panel_size, o.threshold, o.top_k)?),
                None => None,
            };
            if let Some(dir) = &out {
                out_dir(dir)?;
                write_ranks_csv(create(dir.join("ambiguity_ranks.csv"))?, &ranks, false)?;
                if let Some(l) = &loo_result {
                    write_ranks_csv(create(dir.join("loo.csv"))?, &l.nt_ranks, true)?;
                }
            }
            let summaries: Vec<_> = sweep
                .iter()
                .map(|e| json!({"threshold": e.threshold, "overlap": to_json(&e.overlap)}))
                .collect();
            print_json(&json!({
                "panel_size": votes.panel_size(),
                "sweep": summaries,
                "ambiguity_ranks": to_json(&ranks),
                "loo": loo_result.as_ref().map(to_json),
            }))
        }
        Command::Validate { input, labels, threshold, out } => {
            let Loaded { schema, tensor } = input.load()?;
            let votes = vote_counts(&tensor.tensor);
            let labels = read_labels_path(&labels, &schema)?;
            let report = validation_report(&labels, &votes, &schema, threshold)?;
            if let Some(dir) = &out {
                out_dir(dir)?;
                write_alignment_csv(create(dir.join("alignment.csv"))?, &report)?;
            }
            print_json(&to_json(&report))
        }
        Command::Synth { schema, spec, distribution, units, seed, out, report } => {
            let mut spec = match (spec, schema, distribution) {
                (Some(path), _, _) => PlantedSpec::load(path)?,
                (None, Some(schema), Some(dist)) => {
                    let schema = Schema::load(schema)?;
                    let a = dist.len().checked_sub(1).ok_or_else(|| {
                        AuditError::InvalidArgument("--distribution needs at least two entries".into())
                    })?;
                    PlantedSpec::uniform(&schema, a as u32, dist, 0)?
                }
                _ => {
                    return Err(AuditError::InvalidArgument(
                        "give --spec, or --schema together with --distribution".into(),
                    ))
                }
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let result = generate(&spec, units)?;
            write_long_csv(create(out)?, &result.tensor.to_records())?;
            let summary = to_json(&result.report);
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&summary).expect("json value serializes");
                write_file(path, &(text + "\n"))?;
            }
            print_json(&summary)
        }
        Command::Collect { schema, corpus, config, replay, template, language, out } => {
            let schema = Schema::load(schema)?;
            let corpus = read_corpus_path(corpus)?;
            let config = PanelConfig::load(config)?;
            let template = match (template, language) {
                (Some(path), _) => PromptTemplate::load(path)?,
                (None, Language::Fr) => PromptTemplate::french(),
                (None, Language::En) => PromptTemplate::english(),
            };
            let transport = ReplayTransport::load(replay)?;
            let collection = collect(&corpus, &schema, &config, &template, &transport)?;
            write_raw_csv(create(out)?, &collection.raw)?;
            print_json(&json!({
                "cells": corpus.len() * config.annotators.len() * schema.criteria().len(),
                "answered": collection.raw.len(),
                "missing": to_json(&collection.missing),
            }))
        }
        Command::Report { input, thresholds, mask, loo, labels, out } => {
            let Loaded { schema, tensor } = input.load_full()?;
            let options = AuditOptions {
                thresholds: thresholds.thresholds,
                panel: input.annotators.clone(),
                mask_within: mask.enabled(),
                loo: loo.options(),
                labels,
                top_k: loo.top_k,
                ..AuditOptions::default()
            };
            let report = audit_tensor(&schema, tensor, &options)?;
            let files = write_bundle(&report, &schema, &out)?;
            print_json(&json!({"out": out.display().to_string(), "files": files}))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
