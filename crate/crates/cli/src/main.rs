//! `dstk`: batch front end for compiling dialogues into indexed-description
//! examples, decoding model output, scoring it and building data splits.

mod config;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dstk::corpus::write_canonical;
use dstk::jsonl;
use dstk::metrics::{
    align_golds, gold_records, schema_sensitivity_with, variant_indicators, Evaluator,
    SensitivityConfig,
};
use dstk::oracle::oracle_record;
use dstk::parse::{decode_record, DecodedRecord, PredictionRecord};
use dstk::prompt::compile_dialogue;
use dstk::schema::write_schemas_jsonl;
use dstk::splits::{strip_train_station_suffix, Partition, SplitParameter};
use dstk::{
    CompileOptions, CompiledExample, CorruptionMode, CorruptionSpec, DecodeMode, Dialogue,
    EvalReport, Normalizer, PrefixScope, SplitKind, SplitManifest, SplitSpec, TurnState,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use config::{Settings, SharedFlags};
use io::{open_input, open_output, require_paths, CorpusArgs};

#[derive(Parser)]
#[command(
    name = "dstk",
    version,
    about = "Description-driven dialogue state tracking toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert SGD or MultiWOZ 2.2 files into canonical dialogue JSONL
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Also write the schemata as canonical JSONL
        #[arg(long)]
        schemas_out: Option<PathBuf>,
    },
    /// Compile every turn into an (input, target) example
    Compile {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        shared: SharedFlags,
        /// Only compile dialogues listed in this split manifest
        #[arg(long)]
        split: Option<PathBuf>,
        /// With --split, keep only this partition
        #[arg(long, value_enum)]
        partition: Option<PartitionArg>,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Decode raw predictions into canonical states
    Parse {
        /// Compiled examples the predictions were made for
        #[arg(long)]
        examples: PathBuf,
        /// Prediction JSONL: dialogue_id, turn_index, raw
        #[arg(long, default_value = "-")]
        predictions: PathBuf,
        #[command(flatten)]
        shared: SharedFlags,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Score decoded states against gold
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Decoded-state JSONL from `parse`
        #[arg(long)]
        decoded: Option<PathBuf>,
        /// NAME=PATH of decoded states under one schema variant; two or more
        /// enable schema sensitivity
        #[arg(long = "variant", value_parser = parse_variant)]
        variants: Vec<(String, PathBuf)>,
        /// Use the sample standard deviation in schema sensitivity
        #[arg(long)]
        sample_std: bool,
        /// Count turns no variant got right in schema sensitivity
        #[arg(long)]
        include_zero_mean: bool,
        /// Per-turn results as TSV
        #[arg(long)]
        turns: Option<PathBuf>,
        #[command(flatten)]
        shared: SharedFlags,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Write a split manifest
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Dialogues per domain for few-shot-per-domain
        #[arg(long)]
        k: Option<usize>,
        /// Share of the corpus for few-shot-fraction
        #[arg(long)]
        fraction: Option<f64>,
        /// Held-out domain for leave-one-out
        #[arg(long)]
        domain: Option<String>,
        #[command(flatten)]
        shared: SharedFlags,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Emit predictions derived from gold, optionally corrupted
    Oracle {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        examples: PathBuf,
        /// Probability of corrupting a turn
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Comma-separated corruption modes
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "drop-slot,wrong-value,wrong-index,drop-intent"
        )]
        modes: Vec<CorruptionMode>,
        #[command(flatten)]
        shared: SharedFlags,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    FewShotPerDomain,
    FewShotFraction,
    LeaveOneOut,
    CrossDataset,
}

fn parse_variant(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), path.into()))
        }
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            schemas_out,
        } => ingest(&corpus, &out, schemas_out.as_deref()),
        Command::Compile {
            corpus,
            shared,
            split,
            partition,
            out,
        } => compile(&corpus, &shared, split.as_deref(), partition, &out),
        Command::Parse {
            examples,
            predictions,
            shared,
            out,
        } => parse(&examples, &predictions, &shared, &out),
        Command::Eval {
            corpus,
            decoded,
            variants,
            sample_std,
            include_zero_mean,
            turns,
            shared,
            out,
        } => {
            let sensitivity = SensitivityConfig {
                sample_std,
                include_zero_mean,
            };
            eval(
                &corpus,
                decoded.as_deref(),
                &variants,
                sensitivity,
                turns.as_deref(),
                &shared,
                &out,
            )
        }
        Command::Split {
            corpus,
            kind,
            k,
            fraction,
            domain,
            shared,
            out,
        } => split(&corpus, kind, k, fraction, domain, &shared, &out),
        Command::Oracle {
            corpus,
            examples,
            rate,
            modes,
            shared,
            out,
        } => oracle(&corpus, &examples, rate, modes, &shared, &out),
    }
}

#[derive(Serialize)]
struct Header<'a> {
    command: &'a str,
    settings: &'a Settings,
    #[serde(flatten)]
    extra: serde_json::Value,
}

fn write_header(
    w: &mut dyn Write,
    command: &str,
    settings: &Settings,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    jsonl::write_header(
        w,
        &Header {
            command,
            settings,
            extra,
        },
    )?;
    Ok(())
}

fn ingest(corpus: &CorpusArgs, out: &Path, schemas_out: Option<&Path>) -> anyhow::Result<()> {
    require_paths(corpus.paths())?;
    let catalog = corpus.catalog()?;
    let dialogues = corpus.dialogues(catalog.as_ref())?;
    let mut w = open_output(out)?;
    write_canonical(&mut w, &dialogues)?;
    w.flush()?;
    if let Some(path) = schemas_out {
        let Some(catalog) = &catalog else {
            bail!("--schemas-out needs --schemas");
        };
        let mut w = open_output(path)?;
        write_schemas_jsonl(&mut w, catalog.schemas())?;
        w.flush()?;
    }
    eprintln!(
        "ingested {} dialogues, {} turns",
        dialogues.len(),
        dialogues.iter().map(|d| d.turns.len()).sum::<usize>()
    );
    Ok(())
}

fn compile_options(settings: &Settings) -> CompileOptions {
    CompileOptions {
        style: settings.style,
        scope: settings.scope,
        domain_prefix: settings.domain_prefix,
        shuffle: settings.shuffle,
        shuffle_values: settings.shuffle_values,
        budget: settings.budget,
        include_requested: settings.include_requested,
        seed: settings.seed,
        ..CompileOptions::sgd()
    }
}

fn compile(
    corpus: &CorpusArgs,
    shared: &SharedFlags,
    split: Option<&Path>,
    partition: Option<PartitionArg>,
    out: &Path,
) -> anyhow::Result<()> {
    require_paths(corpus.paths().into_iter().chain(split))?;
    let settings = shared.resolve(PrefixScope::ActiveServices)?;
    let Some(catalog) = corpus.catalog()? else {
        bail!("compile needs --schemas");
    };
    let mut dialogues = corpus.dialogues(Some(&catalog))?;
    if let Some(path) = split {
        let manifest = SplitManifest::read(open_input(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        let wanted: BTreeSet<&str> = manifest
            .entries
            .iter()
            .filter(|e| match partition {
                None => true,
                Some(PartitionArg::Train) => e.partition == Some(Partition::Train),
                Some(PartitionArg::Eval) => e.partition == Some(Partition::Eval),
            })
            .map(|e| e.dialogue_id.as_str())
            .collect();
        dialogues.retain(|d| wanted.contains(d.id.as_str()));
    } else if partition.is_some() {
        bail!("--partition needs --split");
    }

    let options = compile_options(&settings);
    let compiled: Vec<Vec<CompiledExample>> = dialogues
        .par_iter()
        .map(|d| {
            compile_dialogue(d, &catalog, &options).with_context(|| format!("dialogue {}", d.id))
        })
        .collect::<anyhow::Result<_>>()?;
    let examples: Vec<&CompiledExample> = compiled.iter().flatten().collect();

    let mut w = open_output(out)?;
    write_header(
        &mut w,
        "compile",
        &settings,
        json!({ "dialogues": dialogues.len(), "examples": examples.len() }),
    )?;
    jsonl::write(&mut w, examples)?;
    w.flush()?;
    Ok(())
}

type TurnKey = (String, usize);

fn read_examples(path: &Path) -> anyhow::Result<HashMap<TurnKey, CompiledExample>> {
    let examples: Vec<CompiledExample> =
        jsonl::read(open_input(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(examples
        .into_iter()
        .map(|e| ((e.dialogue_id.clone(), e.turn_index), e))
        .collect())
}

fn parse(
    examples: &Path,
    predictions: &Path,
    shared: &SharedFlags,
    out: &Path,
) -> anyhow::Result<()> {
    require_paths([examples, predictions])?;
    let settings = shared.resolve(PrefixScope::ActiveServices)?;
    let examples = read_examples(examples)?;
    let predictions: Vec<PredictionRecord> = jsonl::read(open_input(predictions)?)
        .with_context(|| format!("reading {}", predictions.display()))?;
    let mode = if settings.lenient {
        DecodeMode::Lenient
    } else {
        DecodeMode::Strict
    };

    let decoded: Vec<DecodedRecord> = predictions
        .par_iter()
        .map(|p| {
            let example = examples
                .get(&(p.dialogue_id.clone(), p.turn_index))
                .with_context(|| {
                    format!(
                        "no compiled example for {} turn {}",
                        p.dialogue_id, p.turn_index
                    )
                })?;
            let mut record = decode_record(p, &example.assignment, mode);
            if settings.strip_train_station {
                record.state = strip_train_station_suffix(&record.state);
            }
            Ok(record)
        })
        .collect::<anyhow::Result<_>>()?;

    let flagged: Vec<&DecodedRecord> = decoded
        .iter()
        .filter(|r| !r.diagnostics.is_empty() || !r.state.errors.is_empty())
        .collect();
    for r in flagged.iter().take(10) {
        eprintln!(
            "{} turn {}: diagnostics {:?} errors {:?}",
            r.dialogue_id, r.turn_index, r.diagnostics, r.state.errors
        );
    }
    if !flagged.is_empty() {
        eprintln!(
            "{} of {} predictions had diagnostics or decode errors",
            flagged.len(),
            decoded.len()
        );
    }

    let mut w = open_output(out)?;
    write_header(
        &mut w,
        "parse",
        &settings,
        json!({ "predictions": decoded.len() }),
    )?;
    jsonl::write(&mut w, &decoded)?;
    w.flush()?;
    Ok(())
}

fn read_decoded(path: &Path) -> anyhow::Result<Vec<DecodedRecord>> {
    jsonl::read(open_input(path)?).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct Summary<'a> {
    jga: f64,
    intent_accuracy: f64,
    requested_slot_f1: f64,
    per_domain_jga: &'a BTreeMap<String, f64>,
    turns: usize,
}

impl<'a> From<&'a EvalReport> for Summary<'a> {
    fn from(r: &'a EvalReport) -> Self {
        Summary {
            jga: r.jga,
            intent_accuracy: r.intent_accuracy,
            requested_slot_f1: r.requested_slot_f1,
            per_domain_jga: &r.per_domain_jga,
            turns: r.turns,
        }
    }
}

fn eval(
    corpus: &CorpusArgs,
    decoded: Option<&Path>,
    variants: &[(String, PathBuf)],
    sensitivity: SensitivityConfig,
    turns: Option<&Path>,
    shared: &SharedFlags,
    out: &Path,
) -> anyhow::Result<()> {
    require_paths(
        corpus
            .paths()
            .into_iter()
            .chain(decoded)
            .chain(variants.iter().map(|(_, p)| p.as_path())),
    )?;
    if decoded.is_none() && variants.len() < 2 {
        bail!("give --decoded, or two or more --variant NAME=PATH");
    }
    if variants.len() == 1 {
        bail!("schema sensitivity needs at least two --variant inputs");
    }
    let settings = shared.resolve(PrefixScope::ActiveServices)?;
    let catalog = corpus.catalog()?;
    let golds = gold_records(&corpus.dialogues(catalog.as_ref())?);
    let evaluator = Evaluator::new(if settings.strip_train_station {
        Normalizer::train_station()
    } else {
        Normalizer::default()
    });
    let score = |path: &Path| -> anyhow::Result<EvalReport> {
        let preds = read_decoded(path)?;
        let aligned =
            align_golds(&preds, &golds).with_context(|| format!("aligning {}", path.display()))?;
        evaluator
            .evaluate(&preds, &aligned)
            .with_context(|| format!("scoring {}", path.display()))
    };

    let main = decoded.map(score).transpose()?;
    let mut body = serde_json::Map::new();
    body.insert("command".into(), json!("eval"));
    body.insert("settings".into(), serde_json::to_value(&settings)?);
    if let Some(report) = &main {
        body.insert(
            "report".into(),
            serde_json::to_value(Summary::from(report))?,
        );
    }
    if !variants.is_empty() {
        let mut reports = BTreeMap::new();
        for (name, path) in variants {
            if reports.insert(name.clone(), score(path)?).is_some() {
                bail!("variant {name} given twice");
            }
        }
        let report = schema_sensitivity_with(&variant_indicators(&reports)?, sensitivity)?;
        body.insert("sensitivity".into(), serde_json::to_value(&report)?);
        body.insert(
            "sensitivity_config".into(),
            serde_json::to_value(sensitivity)?,
        );
    }

    if let Some(path) = turns {
        let Some(report) = &main else {
            bail!("--turns needs --decoded");
        };
        let mut w = open_output(path)?;
        report.write_tsv(&mut w)?;
        w.flush()?;
    }
    let mut w = open_output(out)?;
    serde_json::to_writer_pretty(&mut w, &body)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn split(
    corpus: &CorpusArgs,
    kind: KindArg,
    k: Option<usize>,
    fraction: Option<f64>,
    domain: Option<String>,
    shared: &SharedFlags,
    out: &Path,
) -> anyhow::Result<()> {
    require_paths(corpus.paths())?;
    let settings = shared.resolve(PrefixScope::ActiveServices)?;
    let (kind, parameter) = match kind {
        KindArg::FewShotPerDomain => (
            SplitKind::FewShotPerDomain,
            SplitParameter::K(k.context("--k is required")?),
        ),
        KindArg::FewShotFraction => (
            SplitKind::FewShotFraction,
            SplitParameter::Fraction(fraction.context("--fraction is required")?),
        ),
        KindArg::LeaveOneOut => (
            SplitKind::LeaveOneOut,
            SplitParameter::Domain(domain.context("--domain is required")?),
        ),
        KindArg::CrossDataset => (SplitKind::CrossDataset, SplitParameter::None),
    };
    let catalog = corpus.catalog()?;
    let dialogues: Vec<Dialogue> = corpus.dialogues(catalog.as_ref())?;
    let spec = SplitSpec {
        kind,
        parameter,
        seed: settings.seed,
    };
    let manifest = SplitManifest::build(&dialogues, &spec)?;
    let mut w = open_output(out)?;
    manifest.write(&mut w)?;
    w.flush()?;
    eprintln!(
        "{} of {} dialogues",
        manifest.entries.len(),
        dialogues.len()
    );
    Ok(())
}

fn oracle(
    corpus: &CorpusArgs,
    examples: &Path,
    rate: f64,
    modes: Vec<CorruptionMode>,
    shared: &SharedFlags,
    out: &Path,
) -> anyhow::Result<()> {
    require_paths(corpus.paths().into_iter().chain([examples]))?;
    let settings = shared.resolve(PrefixScope::ActiveServices)?;
    let spec = CorruptionSpec {
        rate,
        modes: modes.into_iter().collect(),
        seed: settings.seed,
    };
    spec.validate()?;
    let catalog = corpus.catalog()?;
    let dialogues = corpus.dialogues(catalog.as_ref())?;
    let gold: HashMap<(&str, usize), &TurnState> = dialogues
        .iter()
        .flat_map(|d| {
            d.turns
                .iter()
                .map(move |t| ((d.id.as_str(), t.index), &t.state))
        })
        .collect();
    let examples: Vec<CompiledExample> = jsonl::read(open_input(examples)?)
        .with_context(|| format!("reading {}", examples.display()))?;

    let records: Vec<PredictionRecord> = examples
        .par_iter()
        .map(|e| {
            let state = gold
                .get(&(e.dialogue_id.as_str(), e.turn_index))
                .with_context(|| {
                    format!("no gold turn for {} turn {}", e.dialogue_id, e.turn_index)
                })?;
            Ok(oracle_record(e, state, &spec)?)
        })
        .collect::<anyhow::Result<_>>()?;

    let mut w = open_output(out)?;
    write_header(
        &mut w,
        "oracle",
        &settings,
        json!({ "rate": spec.rate, "modes": spec.modes }),
    )?;
    jsonl::write(&mut w, &records)?;
    w.flush()?;
    Ok(())
}
