//! Class-specific knowledge graphs built from training documents, entity
//! keyed retrieval, and enrichment of a document graph into a true/misinfo
//! pair.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, FoldPlan, Label, Split};
use crate::error::{Error, Result};
use crate::extraction::{Extractor, Triple, TriplesByDoc};
use crate::graph::{DocGraph, EdgeRecord, Origin};
use crate::linking::{attach_links, EntityLink};
use crate::text::normalize;

pub const KG_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CAP_PER_KEY: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KgTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_doc: String,
    #[serde(default)]
    pub subject_uri: Option<String>,
    #[serde(default)]
    pub object_uri: Option<String>,
}

/// Normalized (subject, predicate, object); identical facts share it.
pub type CanonicalKey = (String, String, String);

impl KgTriple {
    pub fn canonical(&self) -> CanonicalKey {
        (
            normalize(&self.subject),
            normalize(&self.predicate),
            normalize(&self.object),
        )
    }

    pub fn to_triple(&self) -> Triple {
        Triple::new(
            &self.subject,
            &self.predicate,
            &self.object,
            &self.source_doc,
            Extractor::Imported,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKey {
    Uri(String),
    Label(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassKG {
    pub class_label: Label,
    pub triples: Vec<KgTriple>,
    pub entity_index: BTreeMap<EntityKey, Vec<usize>>,
    pub provenance: BTreeSet<String>,
    frequency: HashMap<CanonicalKey, usize>,
}

impl ClassKG {
    pub fn from_triples(
        class_label: Label,
        triples: Vec<KgTriple>,
        provenance: BTreeSet<String>,
    ) -> Self {
        let mut entity_index: BTreeMap<EntityKey, Vec<usize>> = BTreeMap::new();
        let mut frequency = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            let mut keys = vec![
                EntityKey::Label(normalize(&t.subject)),
                EntityKey::Label(normalize(&t.object)),
            ];
            keys.extend(t.subject_uri.iter().map(|u| EntityKey::Uri(u.clone())));
            keys.extend(t.object_uri.iter().map(|u| EntityKey::Uri(u.clone())));
            keys.sort();
            keys.dedup();
            for key in keys {
                entity_index.entry(key).or_default().push(i);
            }
            *frequency.entry(t.canonical()).or_insert(0) += 1;
        }
        ClassKG {
            class_label,
            triples,
            entity_index,
            provenance,
            frequency,
        }
    }

    pub fn empty(class_label: Label) -> Self {
        Self::from_triples(class_label, Vec::new(), BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn frequency(&self, key: &CanonicalKey) -> usize {
        self.frequency.get(key).copied().unwrap_or(0)
    }
}

/// Per-document map from normalized node label to linked uri.
pub type UrisByDoc = HashMap<String, HashMap<String, String>>;

/// Collects the triples of training documents labeled `class_label`.
/// Documents absent from `triples_by_doc` contribute nothing.
pub fn build_class_kg(
    fold: &FoldPlan,
    corpus: &[Document],
    triples_by_doc: &TriplesByDoc,
    uris_by_doc: &UrisByDoc,
    class_label: Label,
) -> Result<ClassKG> {
    fold.check_against(corpus)?;
    let mut triples = Vec::new();
    let mut provenance = BTreeSet::new();
    for doc in corpus {
        if doc.label != class_label || fold.split_of(&doc.id) != Some(Split::Train) {
            continue;
        }
        provenance.insert(doc.id.clone());
        let uris = uris_by_doc.get(&doc.id);
        let uri_of = |phrase: &str| uris.and_then(|m| m.get(&normalize(phrase)).cloned());
        for t in triples_by_doc.get(&doc.id).map(Vec::as_slice).unwrap_or(&[]) {
            if normalize(&t.subject).is_empty() || normalize(&t.object).is_empty() {
                continue;
            }
            triples.push(KgTriple {
                subject: t.subject.clone(),
                predicate: t.predicate.clone(),
                object: t.object.clone(),
                source_doc: doc.id.clone(),
                subject_uri: uri_of(&t.subject),
                object_uri: uri_of(&t.object),
            });
        }
    }
    Ok(ClassKG::from_triples(class_label, triples, provenance))
}

/// Errors if any KG source document is outside the fold's training split.
pub fn audit_leakage(kg: &ClassKG, fold: &FoldPlan) -> Result<()> {
    let leaked: Vec<&String> = kg
        .provenance
        .iter()
        .filter(|id| fold.split_of(id) != Some(Split::Train))
        .collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{} KG built from non-training documents: {leaked:?}",
            kg.class_label
        )))
    }
}

/// Triples touching any key, most frequent first (ties by insertion order),
/// at most `cap_per_key` per key, each distinct fact once overall.
pub fn retrieve(kg: &ClassKG, keys: &[EntityKey], cap_per_key: usize) -> Vec<KgTriple> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for key in keys {
        for t in retrieve_one(kg, key, cap_per_key, None) {
            if seen.insert(t.canonical()) {
                out.push(t);
            }
        }
    }
    out
}

/// Every copy of a fact touches the same keys, so counting within one key's
/// hits gives its KG frequency (minus the copies of `exclude_doc`).
fn retrieve_one(kg: &ClassKG, key: &EntityKey, cap: usize, exclude_doc: Option<&str>) -> Vec<KgTriple> {
    let Some(hits) = kg.entity_index.get(key) else {
        return Vec::new();
    };
    let mut firsts: Vec<(usize, CanonicalKey)> = Vec::new();
    let mut counts: HashMap<CanonicalKey, usize> = HashMap::new();
    for &i in hits {
        if exclude_doc == Some(kg.triples[i].source_doc.as_str()) {
            continue;
        }
        let c = kg.triples[i].canonical();
        let n = counts.entry(c.clone()).or_insert(0);
        if *n == 0 {
            firsts.push((i, c));
        }
        *n += 1;
    }
    firsts.sort_by(|(ia, ca), (ib, cb)| counts[cb].cmp(&counts[ca]).then(ia.cmp(ib)));
    firsts
        .into_iter()
        .take(cap.max(1))
        .map(|(i, _)| kg.triples[i].clone())
        .collect()
}

/// Retrieval for every node of `g`: by uri when linked, falling back to the
/// normalized label when the uri finds nothing or the node is unlinked.
/// Triples extracted from `g`'s own document are skipped, so a training
/// document is enriched the same way as an unseen one.
pub fn retrieve_for_graph(kg: &ClassKG, g: &DocGraph, cap_per_key: usize) -> Vec<KgTriple> {
    let own = Some(g.doc_id.as_str());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for node in &g.nodes {
        let mut hits = match &node.entity_uri {
            Some(uri) => retrieve_one(kg, &EntityKey::Uri(uri.clone()), cap_per_key, own),
            None => Vec::new(),
        };
        if hits.is_empty() {
            hits = retrieve_one(kg, &EntityKey::Label(node.norm.clone()), cap_per_key, own);
        }
        for t in hits {
            if seen.insert(t.canonical()) {
                out.push(t);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedGraphPair {
    pub g_true: DocGraph,
    pub g_misinfo: DocGraph,
    pub added_true: Vec<(KgTriple, usize)>,
    pub added_misinfo: Vec<(KgTriple, usize)>,
}

impl EnrichedGraphPair {
    pub fn channel(&self, label: Label) -> (&DocGraph, &[(KgTriple, usize)]) {
        match label {
            Label::Legit => (&self.g_true, &self.added_true),
            Label::Misinfo => (&self.g_misinfo, &self.added_misinfo),
        }
    }
}

fn materialize(g: &DocGraph, retrieved: Vec<KgTriple>, origin: Origin) -> (DocGraph, Vec<(KgTriple, usize)>) {
    let mut out = g.clone();
    let mut index = out.norm_index();
    let mut added = Vec::with_capacity(retrieved.len());
    for (group, t) in retrieved.into_iter().enumerate() {
        let mut endpoint = |phrase: &str, uri: &Option<String>| {
            let (id, created) = out.intern(&mut index, phrase, normalize(phrase), origin);
            let node = &mut out.nodes[id];
            if created {
                node.entity_uri = uri.clone();
            }
            if node.origin.is_added() && !node.ts_groups.contains(&group) {
                node.ts_groups.push(group);
            }
            id
        };
        let src = endpoint(&t.subject, &t.subject_uri);
        let dst = endpoint(&t.object, &t.object_uri);
        out.edges.push(EdgeRecord {
            src,
            dst,
            label: t.predicate.trim().to_string(),
            origin,
            triple_key: Some(group),
        });
        added.push((t, group));
    }
    (out, added)
}

/// Duplicates `g` and enriches each copy from one class KG. Every retrieved
/// triple gets its own ts_group, shared by its edge and the nodes it adds.
pub fn enrich(
    g: &DocGraph,
    links: &[EntityLink],
    kg_true: &ClassKG,
    kg_misinfo: &ClassKG,
    cap_per_key: usize,
) -> Result<EnrichedGraphPair> {
    if g.nodes.iter().any(|n| n.origin.is_added()) || g.edges.iter().any(|e| e.origin.is_added()) {
        return Err(Error::Validation(format!(
            "graph {:?} is already enriched",
            g.doc_id
        )));
    }
    let base = attach_links(g, links);
    let (g_true, added_true) = materialize(
        &base,
        retrieve_for_graph(kg_true, &base, cap_per_key),
        Origin::AddedTrue,
    );
    let (g_misinfo, added_misinfo) = materialize(
        &base,
        retrieve_for_graph(kg_misinfo, &base, cap_per_key),
        Origin::AddedMisinfo,
    );
    Ok(EnrichedGraphPair {
        g_true,
        g_misinfo,
        added_true,
        added_misinfo,
    })
}

#[derive(Serialize, Deserialize)]
struct KgFile {
    version: u32,
    class_label: Label,
    triples: Vec<KgTriple>,
    provenance: Vec<String>,
}

pub fn save_kg(kg: &ClassKG, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = KgFile {
        version: KG_FORMAT_VERSION,
        class_label: kg.class_label,
        triples: kg.triples.clone(),
        provenance: kg.provenance.iter().cloned().collect(),
    };
    let json = serde_json::to_string(&file).expect("kg serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<ClassKG> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: KgFile = serde_json::from_str(&raw)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.version != KG_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: KG format version {} (expected {KG_FORMAT_VERSION})",
            path.display(),
            file.version
        )));
    }
    Ok(ClassKG::from_triples(
        file.class_label,
        file.triples,
        file.provenance.into_iter().collect(),
    ))
}
