//! `tegra`: runs the pipeline stages from one TOML config plus flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tegra_core::corpus::{
    corpus_char_lengths, save_corpus, synthetic_gazetteer, vocabulary,
};
use tegra_core::embedding::WordVectorTable;
use tegra_core::extraction::{export_triples, Extractor};
use tegra_core::graph::{graph_stats, summarize, write_stats_csv, export_graph_json, StatsRow};
use tegra_core::knowledge::save_kg;
use tegra_core::linking::Gazetteer;
use tegra_core::manifest::{metric_rows, replay, Manifest, MetricRow};
use tegra_core::model::{save_checkpoint, Mode};
use tegra_core::pipeline::{
    ablate, configured_variant, enrich_doc, load_documents, out_dir, prepare, run_experiment,
    save_links, selected_fold, selected_kgs, selected_plan, stage_graphs, stage_links,
    stage_triples, Paths, RunConfig, Variant,
};
use tegra_core::training::{
    error_report, format_table, write_results_csv, ExperimentResult, Prediction,
};

#[derive(Parser)]
#[command(name = "tegra", version, about = "Text-graph misinformation detection pipeline")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// TOML run config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for folds and initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Triple selection in tegra mode.
    #[arg(long, global = true, value_enum)]
    ts: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "text_only")]
    TextOnly,
    Teg,
    Tegra,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TextOnly => Mode::TextOnly,
            ModeArg::Teg => Mode::Teg,
            ModeArg::Tegra => Mode::Tegra,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Extract triples from the corpus into triples.jsonl.
    Extract,
    /// Link graph nodes to entities into links.json.
    Link,
    /// Write fold plans and both class KGs for every fold.
    BuildKg,
    /// Write the enriched graph pair of every document for the selected fold.
    Enrich,
    /// Per-document graph statistics into stats.csv.
    Stats,
    /// Train the configured mode on the selected fold.
    Train,
    /// Train every configured variant on every fold.
    Experiment {
        /// Re-run the last recorded experiment and compare metrics bitwise.
        #[arg(long)]
        replay: bool,
    },
    /// Full tegra against each single-channel drop.
    Ablate,
    /// Compare two variants' test predictions on the selected fold.
    ErrorReport {
        #[arg(long, default_value = "teg")]
        a: String,
        #[arg(long, default_value = "tegra")]
        b: String,
    },
    /// Write a synthetic corpus, gazetteer, word vectors and a run config using them.
    Synth,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract => "extract",
            Command::Link => "link",
            Command::BuildKg => "build-kg",
            Command::Enrich => "enrich",
            Command::Stats => "stats",
            Command::Train => "train",
            Command::Experiment { replay: false } => "experiment",
            Command::Experiment { replay: true } => "replay",
            Command::Ablate => "ablate",
            Command::ErrorReport { .. } => "error-report",
            Command::Synth => "synth",
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_paths(base: &Path, paths: &mut Paths) {
    for p in [
        &mut paths.corpus,
        &mut paths.triples,
        &mut paths.vectors,
        &mut paths.doc_embeddings,
        &mut paths.gazetteer,
        &mut paths.links,
        &mut paths.verbs,
        &mut paths.kg_true,
        &mut paths.kg_misinfo,
        &mut paths.folds,
    ]
    .into_iter()
    .flatten()
    {
        resolve(base, p);
    }
    if paths.out.as_os_str().is_empty() {
        paths.out = PathBuf::from("out");
    } else {
        resolve(base, &mut paths.out);
    }
}

fn load_config(flags: &Flags) -> anyhow::Result<RunConfig> {
    let mut run = match &flags.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let mut run: RunConfig = toml::from_str(&raw)
                .map_err(|e| tegra_core::Error::Config(e.message().to_string()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            resolve_paths(base, &mut run.paths);
            run
        }
        None => RunConfig {
            paths: Paths {
                out: PathBuf::from("out"),
                ..Paths::default()
            },
            ..RunConfig::default()
        },
    };
    if let Some(out) = &flags.out {
        run.paths.out = out.clone();
    }
    if let Some(seed) = flags.seed {
        run.base_seed = seed;
    }
    if let Some(mode) = flags.mode {
        run.mode = mode.into();
    }
    if let Some(ts) = flags.ts {
        run.ts = Some(matches!(ts, Switch::On));
    }
    Ok(run)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

struct Outcome {
    outputs: Vec<PathBuf>,
    metrics: Vec<MetricRow>,
}

impl Outcome {
    fn files(outputs: Vec<PathBuf>) -> Self {
        Outcome {
            outputs,
            metrics: Vec::new(),
        }
    }
}

fn extract(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    run.validate()?;
    let corpus = load_documents(run)?;
    let triples = stage_triples(run, &corpus)?;
    let path = out.join("triples.jsonl");
    export_triples(&triples, &path)?;
    let n: usize = triples.values().map(Vec::len).sum();
    println!("{n} triples from {} documents", corpus.len());
    Ok(Outcome::files(vec![path]))
}

fn link(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    run.validate()?;
    let corpus = load_documents(run)?;
    let graphs = stage_graphs(&corpus, &stage_triples(run, &corpus)?)?;
    let links = stage_links(run, &graphs)?;
    let path = out.join("links.json");
    save_links(&links, &path)?;
    let n: usize = links.values().map(Vec::len).sum();
    println!("{n} links over {} documents", links.len());
    Ok(Outcome::files(vec![path]))
}

fn build_kg(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let prepared = prepare(run)?;
    let mut outputs = Vec::new();
    for (k, plan) in prepared.folds(run)?.into_iter().enumerate() {
        let dir = out.join(format!("fold-{k}"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let (kg_true, kg_misinfo) = prepared.class_kgs(&plan)?;
        let files = [dir.join("plan.json"), dir.join("kg_true.json"), dir.join("kg_misinfo.json")];
        plan.save(&files[0])?;
        save_kg(&kg_true, &files[1])?;
        save_kg(&kg_misinfo, &files[2])?;
        println!("fold {k}: {} legit and {} misinfo triples", kg_true.len(), kg_misinfo.len());
        outputs.extend(files);
    }
    Ok(Outcome::files(outputs))
}

fn enrich(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let prepared = prepare(run)?;
    let plan = selected_plan(&prepared, run)?;
    let (kg_true, kg_misinfo) = selected_kgs(&prepared, run, &plan)?;
    let dir = out.join(format!("fold-{}", run.fold_index));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("enriched.jsonl");
    let mut body = String::new();
    let mut added = 0;
    for doc in &prepared.corpus {
        let pair = enrich_doc(&prepared, &doc.id, &kg_true, &kg_misinfo, run.cap_per_key)?;
        added += pair.added_true.len() + pair.added_misinfo.len();
        let line = serde_json::json!({
            "doc_id": doc.id,
            "g_true": export_graph_json(&pair.g_true),
            "g_misinfo": export_graph_json(&pair.g_misinfo),
        });
        body.push_str(&line.to_string());
        body.push('\n');
    }
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("{added} triples added over {} documents", prepared.corpus.len());
    Ok(Outcome::files(vec![path]))
}

fn stats(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    run.validate()?;
    let corpus = load_documents(run)?;
    let graphs = stage_graphs(&corpus, &stage_triples(run, &corpus)?)?;
    let links = stage_links(run, &graphs)?;
    let rows: Vec<StatsRow> = corpus
        .iter()
        .zip(corpus_char_lengths(&corpus))
        .map(|(d, chars)| StatsRow::new(&d.id, chars, &graph_stats(&graphs[&d.id], &links[&d.id])))
        .collect();
    let path = out.join("stats.csv");
    write_stats_csv(&rows, &path)?;
    println!("{}", serde_json::to_string(&summarize(&rows))?);
    Ok(Outcome::files(vec![path]))
}

fn write_predictions(predictions: &[Prediction], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["doc_id", "gold", "predicted", "p_legit", "p_misinfo"])?;
    for p in predictions {
        w.write_record([
            p.doc_id.clone(),
            p.gold.to_string(),
            p.predicted.to_string(),
            p.probs[0].to_string(),
            p.probs[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn train(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    run.validate_for_train()?;
    let prepared = prepare(run)?;
    let fold = selected_fold(&prepared, run)?;
    let variant = configured_variant(run);
    let (result, params) = fold.train_variant(&prepared, run, &variant)?;
    let dir = out.join(format!("fold-{}", run.fold_index));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let model = dir.join(format!("{}.model.json", variant.name));
    let config = run.model_config(&variant, prepared.table.dim(), prepared.d_text(), fold.index);
    save_checkpoint(&params, &config, &model)?;
    let predictions = dir.join(format!("{}.predictions.csv", variant.name));
    write_predictions(&result.predictions, &predictions)?;
    let results = vec![ExperimentResult::from_folds(&variant.name, vec![result])?];
    let csv = out.join("train.csv");
    write_results_csv(&results, &csv)?;
    print!("{}", format_table(&results));
    Ok(Outcome {
        outputs: vec![csv, model, predictions],
        metrics: metric_rows(&results),
    })
}

fn report_results(results: &[ExperimentResult], path: PathBuf) -> anyhow::Result<Outcome> {
    write_results_csv(results, &path)?;
    print!("{}", format_table(results));
    Ok(Outcome {
        outputs: vec![path],
        metrics: metric_rows(results),
    })
}

fn experiment(run: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let results = run_experiment(run)?;
    report_results(&results, out.join("results.csv"))
}

fn replay_last(out: &Path) -> anyhow::Result<(RunConfig, Outcome)> {
    let manifest = Manifest::load(out.join("manifest.json"))?;
    let step = manifest
        .last("experiment")
        .ok_or_else(|| anyhow!("manifest has no experiment step to replay"))?;
    let outcome = replay(step)?;
    if !outcome.identical() {
        bail!("replay differs from the record: {}", outcome.mismatches.join(", "));
    }
    println!("replay identical: {} metric rows", step.metrics.len());
    let done = report_results(&outcome.results, out.join("replay.csv"))?;
    Ok((step.run.clone(), done))
}

fn find_variant(name: &str, run: &RunConfig) -> anyhow::Result<Variant> {
    run.variants
        .iter()
        .chain(Variant::standard().iter())
        .find(|v| v.name == name)
        .cloned()
        .ok_or_else(|| tegra_core::Error::Config(format!("unknown variant {name:?}")).into())
}

fn error_report_cmd(run: &RunConfig, out: &Path, a: &str, b: &str) -> anyhow::Result<Outcome> {
    let (va, vb) = (find_variant(a, run)?, find_variant(b, run)?);
    let prepared = prepare(run)?;
    let fold = selected_fold(&prepared, run)?;
    let (ra, _) = fold.train_variant(&prepared, run, &va)?;
    let (rb, _) = fold.train_variant(&prepared, run, &vb)?;
    let report = error_report(a, &ra.predictions, b, &rb.predictions, &fold.records())?;
    let path = out.join("error_report.json");
    write_json(&report, &path)?;
    for bucket in &report.buckets {
        println!(
            "{a} {} / {b} {}: {} documents, {:.1} words, {:.1} base triples",
            if bucket.a_correct { "right" } else { "wrong" },
            if bucket.b_correct { "right" } else { "wrong" },
            bucket.count,
            bucket.words.mean,
            bucket.base_triples.mean
        );
    }
    println!("{} predictions differ", report.flips.len());
    let results = vec![
        ExperimentResult::from_folds(a, vec![ra])?,
        ExperimentResult::from_folds(b, vec![rb])?,
    ];
    Ok(Outcome {
        outputs: vec![path],
        metrics: metric_rows(&results),
    })
}

/// Writes the synthetic inputs as files and returns the config reading them.
fn synth(run: &RunConfig, out: &Path) -> anyhow::Result<(RunConfig, Outcome)> {
    let spec = run.synthetic.unwrap_or_default();
    let corpus = tegra_core::corpus::generate_synthetic(&spec)?;
    let files: BTreeMap<&str, PathBuf> = ["corpus", "gazetteer", "vectors", "config"]
        .into_iter()
        .zip(["corpus.jsonl", "gazetteer.tsv", "vectors.txt", "run.toml"])
        .map(|(k, f)| (k, out.join(f)))
        .collect();
    save_corpus(&corpus, &files["corpus"])?;
    Gazetteer::save(&synthetic_gazetteer(&spec), &files["gazetteer"])?;
    WordVectorTable::random(&vocabulary(&corpus), run.vector_dim, spec.seed)?.save(&files["vectors"])?;
    let derived = RunConfig {
        paths: Paths {
            corpus: Some(PathBuf::from("corpus.jsonl")),
            gazetteer: Some(PathBuf::from("gazetteer.tsv")),
            vectors: Some(PathBuf::from("vectors.txt")),
            out: PathBuf::from("."),
            ..Paths::default()
        },
        synthetic: None,
        extraction: Extractor::Builtin,
        ..run.clone()
    };
    let toml = toml::to_string(&derived).context("serializing the derived config")?;
    std::fs::write(&files["config"], toml)
        .with_context(|| format!("writing {}", files["config"].display()))?;
    println!("{} documents written to {}", corpus.len(), out.display());
    Ok((
        run.clone(),
        Outcome::files(files.into_values().collect()),
    ))
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.flags.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let run = load_config(&cli.flags)?;
    let out = out_dir(&run)?.to_path_buf();
    log::info!("{} into {}", cli.command.name(), out.display());
    let (recorded, outcome) = match &cli.command {
        Command::Extract => (run.clone(), extract(&run, &out)?),
        Command::Link => (run.clone(), link(&run, &out)?),
        Command::BuildKg => (run.clone(), build_kg(&run, &out)?),
        Command::Enrich => (run.clone(), enrich(&run, &out)?),
        Command::Stats => (run.clone(), stats(&run, &out)?),
        Command::Train => (run.clone(), train(&run, &out)?),
        Command::Experiment { replay: false } => (run.clone(), experiment(&run, &out)?),
        Command::Experiment { replay: true } => replay_last(&out)?,
        Command::Ablate => {
            let results = ablate(&run)?;
            (run.clone(), report_results(&results, out.join("ablation.csv"))?)
        }
        Command::ErrorReport { a, b } => (run.clone(), error_report_cmd(&run, &out, a, b)?),
        Command::Synth => synth(&run, &out)?,
    };
    let manifest_path = out.join("manifest.json");
    let mut manifest = Manifest::open(&manifest_path)?;
    manifest.record(cli.command.name(), &recorded, &outcome.outputs, outcome.metrics)?;
    manifest.save(&manifest_path)?;
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<tegra_core::Error>())
        .map_or("runtime", tegra_core::Error::kind)
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TEGRA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            fail(error_kind(&e), &message)
        }
    }
}
