use ndarray::{Array1, Array2};

use crate::embedding::{embed_phrase, embed_spo, WordVectorTable};
use crate::error::{Error, Result};
use crate::graph::DocGraph;
use crate::knowledge::KgTriple;

/// Featurized graph: frozen node/edge embeddings plus the triple-selection
/// bookkeeping for retrieved elements.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub node_feats: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_feats: Array2<f64>,
    /// Retrieved-triple groups each node belongs to; empty for base nodes.
    pub node_groups: Vec<Vec<usize>>,
    pub edge_group: Vec<Option<usize>>,
    /// One embedding per retrieved triple (group), for relevance scoring.
    pub triple_feats: Array2<f64>,
}

fn rows(vectors: Vec<Vec<f64>>, dim: usize) -> Array2<f64> {
    let n = vectors.len();
    let flat: Vec<f64> = vectors.into_iter().flatten().collect();
    Array2::from_shape_vec((n, dim), flat).expect("rows have the table dimension")
}

impl GraphInput {
    pub fn n_nodes(&self) -> usize {
        self.node_feats.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.triple_feats.nrows()
    }

    pub fn empty(dim: usize) -> Self {
        GraphInput {
            node_feats: Array2::zeros((0, dim)),
            edges: Vec::new(),
            edge_feats: Array2::zeros((0, dim)),
            node_groups: Vec::new(),
            edge_group: Vec::new(),
            triple_feats: Array2::zeros((0, dim)),
        }
    }

    /// `added` lists the retrieved triples with their group ids, as produced
    /// by enrichment; pass `&[]` for a base graph.
    pub fn from_graph(
        g: &DocGraph,
        added: &[(KgTriple, usize)],
        table: &WordVectorTable,
    ) -> Result<Self> {
        let dim = table.dim();
        let n_groups = added.len();
        for (i, (_, group)) in added.iter().enumerate() {
            if *group != i {
                return Err(Error::Internal(format!(
                    "retrieved triple {i} carries group {group}"
                )));
            }
        }
        let check = |g: usize| -> Result<usize> {
            if g < n_groups {
                Ok(g)
            } else {
                Err(Error::Internal(format!("ts_group {g} has no retrieved triple")))
            }
        };
        let mut node_groups = Vec::with_capacity(g.nodes.len());
        for n in &g.nodes {
            node_groups.push(n.ts_groups.iter().map(|&x| check(x)).collect::<Result<Vec<_>>>()?);
        }
        let edge_group = g
            .edges
            .iter()
            .map(|e| e.triple_key.map(check).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphInput {
            node_feats: rows(g.nodes.iter().map(|n| embed_phrase(&n.label, table)).collect(), dim),
            edges: g.edges.iter().map(|e| (e.src, e.dst)).collect(),
            edge_feats: rows(g.edges.iter().map(|e| embed_phrase(&e.label, table)).collect(), dim),
            node_groups,
            edge_group,
            triple_feats: rows(
                added
                    .iter()
                    .map(|(t, _)| embed_spo(&t.subject, &t.predicate, &t.object, table))
                    .collect(),
                dim,
            ),
        })
    }
}

/// One classifiable document: text vector, gold class index, and the graphs
/// its mode needs (none, `[G]`, or `[G_true, G_misinfo]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub doc_id: String,
    pub text: Array1<f64>,
    pub label: usize,
    pub graphs: Vec<GraphInput>,
}
