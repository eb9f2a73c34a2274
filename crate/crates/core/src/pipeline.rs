//! End-to-end run configuration and the stages between a corpus and trained
//! fold results: extraction, graphs, linking, class KGs, enrichment and
//! featurization.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_synthetic, load_corpus, make_folds_with, synthetic_gazetteer, vocabulary, Document,
    FoldOptions, FoldPlan, Label, Split, SyntheticSpec,
};
use crate::embedding::{embed_text, DocEmbeddingStore, TextBackend, TextEncoder, WordVectorTable};
use crate::error::{Error, Result};
use crate::extraction::{extract_corpus, import_triples, Extractor, TriplesByDoc, VerbLexicon};
use crate::graph::{build_graph, DocGraph};
use crate::knowledge::{
    audit_leakage, build_class_kg, enrich, load_kg, ClassKG, EnrichedGraphPair, UrisByDoc, DEFAULT_CAP_PER_KEY,
};
use crate::linking::{
    attach_links, link_gazetteer, link_remote, uri_lookup, EntityLink, Gazetteer, RemoteConfig,
    DEFAULT_MIN_SPAN,
};
use crate::model::{Example, GraphInput, Mode, ModelConfig};
use crate::text::word_count;
use crate::training::{train_fold, DocRecord, ExperimentResult, FoldResult, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub doc_embeddings: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Links saved by an earlier run; replaces the linker when set.
    pub links: Option<PathBuf>,
    pub verbs: Option<PathBuf>,
    pub kg_true: Option<PathBuf>,
    pub kg_misinfo: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkerKind {
    None,
    Gazetteer,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    pub kind: LinkerKind,
    pub endpoint: Option<String>,
    pub confidence_threshold: f64,
    pub min_span: usize,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            kind: LinkerKind::Gazetteer,
            endpoint: None,
            confidence_threshold: 0.5,
            min_span: DEFAULT_MIN_SPAN,
        }
    }
}

/// Layer sizes shared by every variant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    pub n_gat_layers: usize,
    pub d_out: usize,
    pub d_h: usize,
    pub d_hidden: usize,
    pub leaky_slope: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        ModelHyper {
            n_gat_layers: 2,
            d_out: 64,
            d_h: 64,
            d_hidden: 128,
            leaky_slope: 0.2,
        }
    }
}

/// One model configuration compared in an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub ts: Option<bool>,
    #[serde(default)]
    pub dropped: Vec<Label>,
}

impl Variant {
    pub fn new(name: &str, mode: Mode, ts: Option<bool>) -> Self {
        Variant {
            name: name.to_string(),
            mode,
            ts,
            dropped: Vec::new(),
        }
    }

    /// text_only, teg, tegra and tegra without triple selection.
    pub fn standard() -> Vec<Variant> {
        vec![
            Variant::new("text_only", Mode::TextOnly, None),
            Variant::new("teg", Mode::Teg, None),
            Variant::new("tegra", Mode::Tegra, Some(true)),
            Variant::new("tegra-no-ts", Mode::Tegra, Some(false)),
        ]
    }

    /// Full tegra against each single-channel drop.
    pub fn ablation(ts: bool) -> Vec<Variant> {
        let mut out = vec![Variant::new("tegra", Mode::Tegra, Some(ts))];
        for (label, name) in [(Label::Legit, "g_true"), (Label::Misinfo, "g_misinfo")] {
            let mut v = Variant::new(&format!("tegra-without-{name}"), Mode::Tegra, Some(ts));
            v.dropped = vec![label];
            out.push(v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Generates the corpus instead of reading `paths.corpus`.
    pub synthetic: Option<SyntheticSpec>,
    pub extraction: Extractor,
    pub linker: LinkerConfig,
    pub text: TextBackend,
    /// Width of generated word vectors when no vector file is given.
    pub vector_dim: usize,
    pub mode: Mode,
    pub ts: Option<bool>,
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub folds: usize,
    pub base_seed: u64,
    pub stratified: bool,
    pub cap_per_key: usize,
    pub fold_index: usize,
    pub variants: Vec<Variant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            synthetic: None,
            extraction: Extractor::Builtin,
            linker: LinkerConfig::default(),
            text: TextBackend::WordMean,
            vector_dim: 32,
            mode: Mode::Tegra,
            ts: None,
            model: ModelHyper::default(),
            train: TrainConfig::desk(),
            folds: 5,
            base_seed: 0,
            stratified: false,
            cap_per_key: DEFAULT_CAP_PER_KEY,
            fold_index: 0,
            variants: Variant::standard(),
        }
    }
}

fn require_file(errors: &mut Vec<String>, field: &str, path: &Option<PathBuf>) {
    match path {
        None => errors.push(format!("{field} is required")),
        Some(p) if !p.is_file() => errors.push(format!("{field}: {} does not exist", p.display())),
        Some(_) => {}
    }
}

fn check_optional(errors: &mut Vec<String>, field: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        if !p.is_file() {
            errors.push(format!("{field}: {} does not exist", p.display()));
        }
    }
}

impl RunConfig {
    /// Checks inputs needed to prepare documents; lists every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let p = &self.paths;
        match (&self.synthetic, &p.corpus) {
            (Some(spec), _) => {
                if let Err(e) = spec.validate() {
                    errors.push(format!("synthetic: {e}"));
                }
            }
            (None, path) => require_file(&mut errors, "paths.corpus", path),
        }
        if self.extraction == Extractor::Imported {
            require_file(&mut errors, "paths.triples", &p.triples);
        }
        check_optional(&mut errors, "paths.verbs", &p.verbs);
        check_optional(&mut errors, "paths.links", &p.links);
        match self.linker.kind {
            _ if p.links.is_some() => {}
            LinkerKind::Gazetteer if self.synthetic.is_none() => {
                require_file(&mut errors, "paths.gazetteer", &p.gazetteer)
            }
            LinkerKind::Gazetteer => check_optional(&mut errors, "paths.gazetteer", &p.gazetteer),
            LinkerKind::Remote if self.linker.endpoint.is_none() => {
                errors.push("linker.endpoint is required for the remote linker".into())
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.linker.confidence_threshold) {
            errors.push("linker.confidence_threshold must lie in [0, 1]".into());
        }
        if self.synthetic.is_none() {
            require_file(&mut errors, "paths.vectors", &p.vectors);
        } else {
            check_optional(&mut errors, "paths.vectors", &p.vectors);
            if p.vectors.is_none() && self.vector_dim == 0 {
                errors.push("vector_dim must be positive".into());
            }
        }
        if self.text == TextBackend::Imported {
            require_file(&mut errors, "paths.doc_embeddings", &p.doc_embeddings);
        }
        if self.folds == 0 {
            errors.push("folds must be positive".into());
        }
        if self.cap_per_key == 0 {
            errors.push("cap_per_key must be positive".into());
        }
        if let Err(e) = self.train.validate() {
            errors.push(format!("train: {e}"));
        }
        if self.ts == Some(true) && self.mode != Mode::Tegra {
            errors.push("ts can only be enabled in tegra mode".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    /// Additional requirements of training one fold from prebuilt KGs.
    pub fn validate_for_train(&self) -> Result<()> {
        self.validate()?;
        let mut missing = Vec::new();
        if self.mode == Mode::Tegra {
            if self.paths.kg_true.is_none() {
                missing.push("paths.kg_true");
            }
            if self.paths.kg_misinfo.is_none() {
                missing.push("paths.kg_misinfo");
            }
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "tegra training needs prebuilt knowledge graphs; missing {}",
                missing.join(", ")
            )));
        }
        let mut errors = Vec::new();
        check_optional(&mut errors, "paths.kg_true", &self.paths.kg_true);
        check_optional(&mut errors, "paths.kg_misinfo", &self.paths.kg_misinfo);
        check_optional(&mut errors, "paths.folds", &self.paths.folds);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    pub fn fold_options(&self) -> FoldOptions {
        FoldOptions {
            stratified: self.stratified,
        }
    }

    /// Model config for `variant` on fold `fold`.
    pub fn model_config(&self, variant: &Variant, d_node: usize, d_text: usize, fold: usize) -> ModelConfig {
        let mut c = ModelConfig::new(variant.mode, d_node, d_text);
        c.n_gat_layers = self.model.n_gat_layers;
        c.d_out = self.model.d_out;
        c.d_h = self.model.d_h;
        c.d_hidden = self.model.d_hidden;
        c.leaky_slope = self.model.leaky_slope;
        c.ts_enabled = variant.ts.unwrap_or(variant.mode == Mode::Tegra);
        c.dropped = variant.dropped.clone();
        c.seed = self.base_seed.wrapping_add(fold as u64);
        c
    }

    pub fn train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            seed: self.base_seed.wrapping_add(fold as u64),
            ..self.train.clone()
        }
    }

    /// Every input file the run reads.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        let mut files = Vec::new();
        if self.synthetic.is_none() {
            files.extend(p.corpus.clone());
        }
        if self.extraction == Extractor::Imported {
            files.extend(p.triples.clone());
        }
        files.extend(p.verbs.clone());
        if p.links.is_some() {
            files.extend(p.links.clone());
        } else if self.linker.kind == LinkerKind::Gazetteer {
            files.extend(p.gazetteer.clone());
        }
        files.extend(p.vectors.clone());
        if self.text == TextBackend::Imported {
            files.extend(p.doc_embeddings.clone());
        }
        files.extend(p.folds.clone());
        files.extend(p.kg_true.clone());
        files.extend(p.kg_misinfo.clone());
        files
    }
}

pub fn load_documents(run: &RunConfig) -> Result<Vec<Document>> {
    match (&run.synthetic, &run.paths.corpus) {
        (Some(spec), _) => generate_synthetic(spec),
        (None, Some(path)) => load_corpus(path),
        (None, None) => Err(Error::Config("paths.corpus is required".into())),
    }
}

pub fn lexicon(run: &RunConfig) -> Result<VerbLexicon> {
    match &run.paths.verbs {
        Some(path) => VerbLexicon::from_files(path, None),
        None => Ok(VerbLexicon::default()),
    }
}

/// Extracted or imported triples; documents without triples get an empty list.
pub fn stage_triples(run: &RunConfig, corpus: &[Document]) -> Result<TriplesByDoc> {
    let mut triples = match run.extraction {
        Extractor::Builtin => extract_corpus(corpus, &lexicon(run)?),
        Extractor::Imported => {
            let path = run
                .paths
                .triples
                .as_ref()
                .ok_or_else(|| Error::Config("paths.triples is required".into()))?;
            import_triples(path)?
        }
    };
    for doc in corpus {
        triples.entry(doc.id.clone()).or_default();
    }
    Ok(triples)
}

pub fn stage_graphs(corpus: &[Document], triples: &TriplesByDoc) -> Result<BTreeMap<String, DocGraph>> {
    corpus
        .iter()
        .map(|d| {
            let list = triples.get(&d.id).map(Vec::as_slice).unwrap_or(&[]);
            Ok((d.id.clone(), build_graph(&d.id, list)?.graph))
        })
        .collect()
}

pub fn gazetteer(run: &RunConfig) -> Result<Gazetteer> {
    match (&run.paths.gazetteer, &run.synthetic) {
        (Some(path), _) => Gazetteer::load(path),
        (None, Some(spec)) => Ok(Gazetteer::from_pairs(synthetic_gazetteer(spec))),
        (None, None) => Err(Error::Config("paths.gazetteer is required".into())),
    }
}

pub type LinksByDoc = BTreeMap<String, Vec<EntityLink>>;

pub fn save_links(links: &LinksByDoc, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(links).expect("links serialize");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_links(path: impl AsRef<Path>) -> Result<LinksByDoc> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Links from `paths.links` when given, else from the configured linker.
/// Every graph gets an entry; saved links must name known nodes.
pub fn stage_links(run: &RunConfig, graphs: &BTreeMap<String, DocGraph>) -> Result<LinksByDoc> {
    if let Some(path) = &run.paths.links {
        let mut links = load_links(path)?;
        for (id, list) in &links {
            let g = graphs
                .get(id)
                .ok_or_else(|| Error::Validation(format!("links name unknown document {id}")))?;
            if let Some(l) = list.iter().find(|l| l.node_id >= g.nodes.len()) {
                return Err(Error::Validation(format!("{id}: link to missing node {}", l.node_id)));
            }
        }
        for id in graphs.keys() {
            links.entry(id.clone()).or_default();
        }
        return Ok(links);
    }
    match run.linker.kind {
        LinkerKind::None => Ok(graphs.keys().map(|k| (k.clone(), Vec::new())).collect()),
        LinkerKind::Gazetteer => {
            let gaz = gazetteer(run)?;
            Ok(graphs
                .par_iter()
                .map(|(id, g)| (id.clone(), link_gazetteer(g, &gaz, run.linker.min_span)))
                .collect())
        }
        LinkerKind::Remote => {
            let endpoint = run
                .linker
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("linker.endpoint is required".into()))?;
            let mut cfg = RemoteConfig::new(endpoint);
            cfg.confidence_threshold = run.linker.confidence_threshold;
            let mut out = LinksByDoc::new();
            for (id, g) in graphs {
                let report = link_remote(g, &cfg)?;
                if report.retries > 0 {
                    log::warn!("{id}: {} linking request(s) retried", report.retries);
                }
                out.insert(id.clone(), report.links);
            }
            Ok(out)
        }
    }
}

pub fn word_table(run: &RunConfig, corpus: &[Document]) -> Result<WordVectorTable> {
    match (&run.paths.vectors, &run.synthetic) {
        (Some(path), _) => WordVectorTable::load(path),
        (None, Some(spec)) => WordVectorTable::random(&vocabulary(corpus), run.vector_dim, spec.seed),
        (None, None) => Err(Error::Config("paths.vectors is required".into())),
    }
}

/// Fold-independent artifacts for a whole corpus.
pub struct Prepared {
    pub corpus: Vec<Document>,
    pub triples: TriplesByDoc,
    pub graphs: BTreeMap<String, DocGraph>,
    pub links: LinksByDoc,
    pub table: WordVectorTable,
    pub text: BTreeMap<String, Array1<f64>>,
}

impl Prepared {
    pub fn d_text(&self) -> usize {
        self.text.values().next().map_or(self.table.dim(), Array1::len)
    }

    pub fn uris_by_doc(&self) -> UrisByDoc {
        self.graphs
            .iter()
            .map(|(id, g)| {
                let linked = attach_links(g, self.links.get(id).map(Vec::as_slice).unwrap_or(&[]));
                (id.clone(), uri_lookup(&linked))
            })
            .collect()
    }

    pub fn folds(&self, run: &RunConfig) -> Result<Vec<FoldPlan>> {
        make_folds_with(&self.corpus, run.folds, run.base_seed, run.fold_options())
    }

    /// Both class KGs from the training split of `fold`.
    pub fn class_kgs(&self, fold: &FoldPlan) -> Result<(ClassKG, ClassKG)> {
        let uris = self.uris_by_doc();
        Ok((
            build_class_kg(fold, &self.corpus, &self.triples, &uris, Label::Legit)?,
            build_class_kg(fold, &self.corpus, &self.triples, &uris, Label::Misinfo)?,
        ))
    }
}

pub fn prepare(run: &RunConfig) -> Result<Prepared> {
    run.validate()?;
    let corpus = load_documents(run)?;
    let triples = stage_triples(run, &corpus)?;
    let graphs = stage_graphs(&corpus, &triples)?;
    let links = stage_links(run, &graphs)?;
    let table = word_table(run, &corpus)?;
    let store = match run.text {
        TextBackend::Imported => {
            let path = run
                .paths
                .doc_embeddings
                .as_ref()
                .ok_or_else(|| Error::Config("paths.doc_embeddings is required".into()))?;
            Some(DocEmbeddingStore::load(path)?)
        }
        TextBackend::WordMean => None,
    };
    let encoder = match &store {
        Some(s) => TextEncoder::Imported(s),
        None => TextEncoder::WordMean(&table),
    };
    let text = corpus
        .iter()
        .map(|d| Ok((d.id.clone(), Array1::from(embed_text(d, encoder)?))))
        .collect::<Result<_>>()?;
    Ok(Prepared {
        corpus,
        triples,
        graphs,
        links,
        table,
        text,
    })
}

/// Featurized inputs of one document for one fold.
#[derive(Debug, Clone)]
pub struct DocArtifacts {
    pub label: usize,
    pub text: Array1<f64>,
    pub base: GraphInput,
    pub g_true: GraphInput,
    pub g_misinfo: GraphInput,
    pub record: DocRecord,
}

pub struct FoldData {
    pub index: usize,
    pub plan: FoldPlan,
    pub kg_true: ClassKG,
    pub kg_misinfo: ClassKG,
    pub docs: BTreeMap<String, DocArtifacts>,
}

pub fn enrich_doc(
    prepared: &Prepared,
    doc_id: &str,
    kg_true: &ClassKG,
    kg_misinfo: &ClassKG,
    cap: usize,
) -> Result<EnrichedGraphPair> {
    let g = prepared
        .graphs
        .get(doc_id)
        .ok_or_else(|| Error::Lookup(doc_id.to_string()))?;
    let links = prepared.links.get(doc_id).map(Vec::as_slice).unwrap_or(&[]);
    enrich(g, links, kg_true, kg_misinfo, cap)
}

impl FoldData {
    pub fn build(
        prepared: &Prepared,
        index: usize,
        plan: FoldPlan,
        kgs: (ClassKG, ClassKG),
        cap: usize,
    ) -> Result<Self> {
        plan.check_against(&prepared.corpus)?;
        let (kg_true, kg_misinfo) = kgs;
        let table = &prepared.table;
        let docs = prepared
            .corpus
            .par_iter()
            .map(|d| {
                let pair = enrich_doc(prepared, &d.id, &kg_true, &kg_misinfo, cap)?;
                let base = &prepared.graphs[&d.id];
                let text = prepared
                    .text
                    .get(&d.id)
                    .cloned()
                    .ok_or_else(|| Error::Lookup(d.id.clone()))?;
                let artifacts = DocArtifacts {
                    label: d.label.index(),
                    text,
                    base: GraphInput::from_graph(base, &[], table)?,
                    g_true: GraphInput::from_graph(&pair.g_true, &pair.added_true, table)?,
                    g_misinfo: GraphInput::from_graph(&pair.g_misinfo, &pair.added_misinfo, table)?,
                    record: DocRecord {
                        words: word_count(&d.text),
                        base_triples: base.edges.len(),
                        consistency: pair.added_true.len(),
                        contradiction: pair.added_misinfo.len(),
                    },
                };
                Ok((d.id.clone(), artifacts))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(FoldData {
            index,
            plan,
            kg_true,
            kg_misinfo,
            docs,
        })
    }

    /// Examples of `split` in corpus order, carrying the graphs `mode` needs.
    pub fn examples(&self, corpus: &[Document], split: Split, mode: Mode) -> Vec<Example> {
        self.plan
            .ids(corpus, split)
            .into_iter()
            .map(|id| {
                let a = &self.docs[id];
                let graphs = match mode {
                    Mode::TextOnly => Vec::new(),
                    Mode::Teg => vec![a.base.clone()],
                    Mode::Tegra => vec![a.g_true.clone(), a.g_misinfo.clone()],
                };
                Example {
                    doc_id: id.to_string(),
                    text: a.text.clone(),
                    label: a.label,
                    graphs,
                }
            })
            .collect()
    }

    pub fn records(&self) -> BTreeMap<String, DocRecord> {
        self.docs
            .iter()
            .map(|(id, a)| (id.clone(), a.record.clone()))
            .collect()
    }

    pub fn train_variant(
        &self,
        prepared: &Prepared,
        run: &RunConfig,
        variant: &Variant,
    ) -> Result<(FoldResult, crate::model::ModelParams)> {
        let corpus = &prepared.corpus;
        let model = run.model_config(variant, prepared.table.dim(), prepared.d_text(), self.index);
        let train = self.examples(corpus, Split::Train, variant.mode);
        let val = self.examples(corpus, Split::Validation, variant.mode);
        let test = self.examples(corpus, Split::Test, variant.mode);
        let (mut result, params) =
            train_fold(self.index, &train, &val, &test, &model, &run.train_config(self.index))?;
        result.fold = self.index;
        Ok((result, params))
    }
}

/// The fold plan `run.fold_index` selects: `paths.folds` when given, else
/// regenerated from the base seed.
pub fn selected_plan(prepared: &Prepared, run: &RunConfig) -> Result<FoldPlan> {
    match &run.paths.folds {
        Some(path) => FoldPlan::load(path),
        None => prepared
            .folds(run)?
            .into_iter()
            .nth(run.fold_index)
            .ok_or_else(|| {
                Error::Config(format!("fold_index {} but only {} folds", run.fold_index, run.folds))
            }),
    }
}

/// Class KGs from `paths.kg_true`/`paths.kg_misinfo` when both are given,
/// else built from the plan's training split.
pub fn selected_kgs(prepared: &Prepared, run: &RunConfig, plan: &FoldPlan) -> Result<(ClassKG, ClassKG)> {
    match (&run.paths.kg_true, &run.paths.kg_misinfo) {
        (Some(t), Some(m)) => {
            let (kg_true, kg_misinfo) = (load_kg(t)?, load_kg(m)?);
            if kg_true.class_label != Label::Legit || kg_misinfo.class_label != Label::Misinfo {
                return Err(Error::Config(
                    "paths.kg_true and paths.kg_misinfo hold the wrong classes".into(),
                ));
            }
            audit_leakage(&kg_true, plan)?;
            audit_leakage(&kg_misinfo, plan)?;
            Ok((kg_true, kg_misinfo))
        }
        _ => prepared.class_kgs(plan),
    }
}

/// The fold `run.fold_index` from prebuilt artifacts where the config names them.
pub fn selected_fold(prepared: &Prepared, run: &RunConfig) -> Result<FoldData> {
    let plan = selected_plan(prepared, run)?;
    let kgs = selected_kgs(prepared, run, &plan)?;
    FoldData::build(prepared, run.fold_index, plan, kgs, run.cap_per_key)
}

/// Variant for the config's own mode and triple-selection flag.
pub fn configured_variant(run: &RunConfig) -> Variant {
    Variant::new(run.mode.as_str(), run.mode, run.ts)
}

/// Builds every fold's KGs and features from its own training split.
pub fn build_folds(prepared: &Prepared, run: &RunConfig) -> Result<Vec<FoldData>> {
    let plans = prepared.folds(run)?;
    plans
        .into_par_iter()
        .enumerate()
        .map(|(k, plan)| {
            let kgs = prepared.class_kgs(&plan)?;
            FoldData::build(prepared, k, plan, kgs, run.cap_per_key)
        })
        .collect()
}

/// Trains every variant on every fold. Jobs run in parallel; results come
/// back grouped by variant in the given order, folds ascending.
pub fn run_variants(
    prepared: &Prepared,
    folds: &[FoldData],
    run: &RunConfig,
    variants: &[Variant],
) -> Result<Vec<ExperimentResult>> {
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..folds.len()).map(move |f| (v, f)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(v, f)| {
            log::info!("training {} on fold {f}", variants[v].name);
            folds[f].train_variant(prepared, run, &variants[v]).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: Vec<Vec<FoldResult>> = vec![Vec::new(); variants.len()];
    for (&(v, _), r) in jobs.iter().zip(outcomes) {
        grouped[v].push(r);
    }
    variants
        .iter()
        .zip(grouped)
        .map(|(v, folds)| ExperimentResult::from_folds(&v.name, folds))
        .collect()
}

/// Variants from the config, or the standard comparison when none are listed.
pub fn run_experiment(run: &RunConfig) -> Result<Vec<ExperimentResult>> {
    let prepared = prepare(run)?;
    let folds = build_folds(&prepared, run)?;
    let variants = if run.variants.is_empty() {
        Variant::standard()
    } else {
        run.variants.clone()
    };
    for v in &variants {
        run.model_config(v, 1, 1, 0).validate()?;
    }
    run_variants(&prepared, &folds, run, &variants)
}

pub fn ablate(run: &RunConfig) -> Result<Vec<ExperimentResult>> {
    let variants = Variant::ablation(run.ts.unwrap_or(true));
    let ablation = RunConfig {
        variants,
        ..run.clone()
    };
    run_experiment(&ablation)
}

/// Output directory, created on demand.
pub fn out_dir(run: &RunConfig) -> Result<&Path> {
    let dir = run.paths.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}
