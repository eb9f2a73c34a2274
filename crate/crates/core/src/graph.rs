//! Per-document OpenIE graphs and their summary statistics.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::Triple;
use crate::linking::EntityLink;
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Base,
    AddedTrue,
    AddedMisinfo,
}

impl Origin {
    pub fn is_added(self) -> bool {
        self != Origin::Base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: usize,
    pub label: String,
    pub norm: String,
    pub origin: Origin,
    pub entity_uri: Option<String>,
    /// Retrieved triples this added node takes part in; the first one created
    /// it. Always empty for base nodes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ts_groups: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub label: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple_key: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocGraph {
    pub doc_id: String,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl DocGraph {
    pub fn empty(doc_id: impl Into<String>) -> Self {
        DocGraph {
            doc_id: doc_id.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn find_norm(&self, norm: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.norm == norm)
    }

    pub fn norm_index(&self) -> HashMap<String, usize> {
        self.nodes
            .iter()
            .map(|n| (n.norm.clone(), n.node_id))
            .collect()
    }

    /// Adds a node for `phrase` unless one with the same norm exists.
    pub(crate) fn intern(
        &mut self,
        index: &mut HashMap<String, usize>,
        phrase: &str,
        norm: String,
        origin: Origin,
    ) -> (usize, bool) {
        if let Some(&id) = index.get(&norm) {
            return (id, false);
        }
        let id = self.nodes.len();
        index.insert(norm.clone(), id);
        self.nodes.push(NodeRecord {
            node_id: id,
            label: phrase.trim().to_string(),
            norm,
            origin,
            entity_uri: None,
            ts_groups: Vec::new(),
        });
        (id, true)
    }

    /// Copy restricted to base-origin nodes and edges.
    pub fn base_subgraph(&self) -> DocGraph {
        let keep: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.origin == Origin::Base)
            .map(|n| n.node_id)
            .collect();
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        DocGraph {
            doc_id: self.doc_id.clone(),
            nodes: keep
                .iter()
                .enumerate()
                .map(|(i, &id)| NodeRecord {
                    node_id: i,
                    ..self.nodes[id].clone()
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| e.origin == Origin::Base)
                .map(|e| EdgeRecord {
                    src: remap[&e.src],
                    dst: remap[&e.dst],
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Checks id density, dangling edges and norm uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut norms = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.node_id != i {
                return Err(Error::Internal(format!("node {i} carries id {}", n.node_id)));
            }
            if n.norm.is_empty() {
                return Err(Error::Internal(format!("node {i} has an empty norm")));
            }
            if !norms.insert(n.norm.as_str()) {
                return Err(Error::Internal(format!("duplicate node norm {:?}", n.norm)));
            }
        }
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(Error::Internal(format!("dangling edge {}->{}", e.src, e.dst)));
            }
            if e.label.trim().is_empty() {
                return Err(Error::Internal("edge with empty label".into()));
            }
        }
        Ok(())
    }
}

/// Graph plus the number of triples dropped for an empty subject or object.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBuild {
    pub graph: DocGraph,
    pub skipped: usize,
}

pub fn build_graph(doc_id: &str, triples: &[Triple]) -> Result<GraphBuild> {
    let mut graph = DocGraph::empty(doc_id);
    let mut index = HashMap::new();
    let mut skipped = 0;
    for t in triples {
        if t.source_doc != doc_id {
            return Err(Error::Validation(format!(
                "triple from {:?} passed to graph of {:?}",
                t.source_doc, doc_id
            )));
        }
        let (s_norm, o_norm) = (normalize(&t.subject), normalize(&t.object));
        if s_norm.is_empty() || o_norm.is_empty() || t.predicate.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let (src, _) = graph.intern(&mut index, &t.subject, s_norm, Origin::Base);
        let (dst, _) = graph.intern(&mut index, &t.object, o_norm, Origin::Base);
        graph.edges.push(EdgeRecord {
            src,
            dst,
            label: t.predicate.trim().to_string(),
            origin: Origin::Base,
            triple_key: None,
        });
    }
    if skipped > 0 {
        log::warn!("{doc_id}: skipped {skipped} triple(s) with an empty phrase");
    }
    Ok(GraphBuild { graph, skipped })
}

/// Components of the edge-undirected graph; isolated nodes count once each.
pub fn connected_components(g: &DocGraph) -> usize {
    let mut ug = UnGraph::<(), ()>::with_capacity(g.nodes.len(), g.edges.len());
    let ids: Vec<_> = g.nodes.iter().map(|_| ug.add_node(())).collect();
    for e in &g.edges {
        ug.add_edge(ids[e.src], ids[e.dst], ());
    }
    petgraph::algo::connected_components(&ug)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_triples: usize,
    pub n_nodes: usize,
    pub n_components: usize,
    pub n_linked_entities: usize,
    pub degrees: Vec<usize>,
}

impl GraphStats {
    pub fn mean_degree(&self) -> f64 {
        if self.degrees.is_empty() {
            0.0
        } else {
            self.degrees.iter().sum::<usize>() as f64 / self.degrees.len() as f64
        }
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }
}

/// Degrees count every edge once at each endpoint (a self-loop adds two).
pub fn graph_stats(g: &DocGraph, links: &[EntityLink]) -> GraphStats {
    let mut degrees = vec![0usize; g.nodes.len()];
    for e in &g.edges {
        degrees[e.src] += 1;
        degrees[e.dst] += 1;
    }
    let mut linked: HashSet<usize> = g
        .nodes
        .iter()
        .filter(|n| n.entity_uri.is_some())
        .map(|n| n.node_id)
        .collect();
    linked.extend(links.iter().map(|l| l.node_id).filter(|&id| id < g.nodes.len()));
    GraphStats {
        n_triples: g.edges.iter().filter(|e| e.origin == Origin::Base).count(),
        n_nodes: g.nodes.len(),
        n_components: connected_components(g),
        n_linked_entities: linked.len(),
        degrees,
    }
}

#[derive(Serialize)]
struct NodeExport<'a> {
    id: usize,
    label: &'a str,
    norm: &'a str,
    origin: Origin,
    uri: Option<&'a str>,
    #[serde(skip_serializing_if = "<[usize]>::is_empty")]
    ts_groups: &'a [usize],
}

#[derive(Serialize)]
struct EdgeExport<'a> {
    src: usize,
    dst: usize,
    label: &'a str,
    origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    ts_group: Option<usize>,
}

#[derive(Serialize)]
struct GraphExport<'a> {
    doc_id: &'a str,
    nodes: Vec<NodeExport<'a>>,
    edges: Vec<EdgeExport<'a>>,
}

pub fn export_graph_json(g: &DocGraph) -> serde_json::Value {
    let export = GraphExport {
        doc_id: &g.doc_id,
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeExport {
                id: n.node_id,
                label: &n.label,
                norm: &n.norm,
                origin: n.origin,
                uri: n.entity_uri.as_deref(),
                ts_groups: &n.ts_groups,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeExport {
                src: e.src,
                dst: e.dst,
                label: &e.label,
                origin: e.origin,
                ts_group: e.triple_key,
            })
            .collect(),
    };
    serde_json::to_value(export).expect("graph serializes")
}

/// One row of the per-document statistics report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub doc_id: String,
    pub chars: usize,
    pub n_triples: usize,
    pub n_nodes: usize,
    pub n_components: usize,
    pub n_linked_entities: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
}

impl StatsRow {
    pub fn new(doc_id: &str, chars: usize, stats: &GraphStats) -> Self {
        StatsRow {
            doc_id: doc_id.to_string(),
            chars,
            n_triples: stats.n_triples,
            n_nodes: stats.n_nodes,
            n_components: stats.n_components,
            n_linked_entities: stats.n_linked_entities,
            mean_degree: stats.mean_degree(),
            max_degree: stats.max_degree(),
        }
    }
}

pub fn write_stats_csv(rows: &[StatsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Corpus-level means of the per-document rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsSummary {
    pub documents: usize,
    pub mean_chars: f64,
    pub mean_triples: f64,
    pub mean_nodes: f64,
    pub mean_components: f64,
    pub mean_linked_entities: f64,
    pub mean_degree: f64,
}

pub fn summarize(rows: &[StatsRow]) -> StatsSummary {
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&StatsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    StatsSummary {
        documents: rows.len(),
        mean_chars: mean(&|r| r.chars as f64),
        mean_triples: mean(&|r| r.n_triples as f64),
        mean_nodes: mean(&|r| r.n_nodes as f64),
        mean_components: mean(&|r| r.n_components as f64),
        mean_linked_entities: mean(&|r| r.n_linked_entities as f64),
        mean_degree: mean(&|r| r.mean_degree),
    }
}
