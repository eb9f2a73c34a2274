//! Entity linking of graph nodes: an offline gazetteer and a client for
//! Spotlight-compatible annotation services.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::DocGraph;
use crate::text::normalize;

/// Annotated candidates with scores, and the retries it took.
type Lookup = Result<(Vec<(String, f64)>, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityLink {
    pub node_id: usize,
    pub uri: String,
    pub confidence: f64,
}

impl EntityLink {
    pub fn new(node_id: usize, uri: impl Into<String>, confidence: f64) -> Result<Self> {
        let uri = uri.into();
        if uri.trim().is_empty() {
            return Err(Error::Validation(format!("empty uri for node {node_id}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!(
                "link confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(EntityLink {
            node_id,
            uri,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: HashMap<String, String>,
}

impl Gazetteer {
    /// Builds from (surface, uri) pairs; the first uri for a surface form wins.
    pub fn from_pairs<I, S, U>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, U)>,
        S: AsRef<str>,
        U: Into<String>,
    {
        let mut entries = HashMap::new();
        for (surface, uri) in pairs {
            let key = normalize(surface.as_ref());
            if !key.is_empty() {
                entries.entry(key).or_insert_with(|| uri.into());
            }
        }
        Gazetteer { entries }
    }

    /// TSV lines `surface<TAB>uri`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (surface, uri) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected surface<TAB>uri".into(),
            })?;
            if uri.trim().is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty uri".into(),
                });
            }
            pairs.push((surface.to_string(), uri.trim().to_string()));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn save(pairs: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body: String = pairs.iter().map(|(s, u)| format!("{s}\t{u}\n")).collect();
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, norm: &str) -> Option<&str> {
        self.entries.get(norm).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const DEFAULT_MIN_SPAN: usize = 2;

/// Longest matching token span of `norm`, leftmost among equals. The full
/// phrase always qualifies; proper sub-spans need at least `min_span` tokens.
fn match_span<'g>(norm: &str, gaz: &'g Gazetteer, min_span: usize) -> Option<&'g str> {
    if let Some(uri) = gaz.get(norm) {
        return Some(uri);
    }
    let tokens: Vec<&str> = norm.split(' ').collect();
    let floor = min_span.max(1);
    for len in (floor..tokens.len()).rev() {
        for start in 0..=tokens.len() - len {
            if let Some(uri) = gaz.get(&tokens[start..start + len].join(" ")) {
                return Some(uri);
            }
        }
    }
    None
}

pub fn link_gazetteer(g: &DocGraph, gaz: &Gazetteer, min_span: usize) -> Vec<EntityLink> {
    g.nodes
        .iter()
        .filter_map(|n| {
            match_span(&n.norm, gaz, min_span).map(|uri| EntityLink {
                node_id: n.node_id,
                uri: uri.to_string(),
                confidence: 1.0,
            })
        })
        .collect()
}

/// Copy of `g` with each linked node's uri set. Applying the same links twice
/// gives the same graph as applying them once.
pub fn attach_links(g: &DocGraph, links: &[EntityLink]) -> DocGraph {
    let mut out = g.clone();
    for link in links {
        if let Some(node) = out.nodes.get_mut(link.node_id) {
            node.entity_uri = Some(link.uri.clone());
        }
    }
    out
}

/// Normalized label → uri for every linked node.
pub fn uri_lookup(g: &DocGraph) -> HashMap<String, String> {
    g.nodes
        .iter()
        .filter_map(|n| n.entity_uri.as_ref().map(|u| (n.norm.clone(), u.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub confidence_threshold: f64,
    pub max_retries: usize,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            confidence_threshold: 0.5,
            max_retries: 3,
            backoff_ms: 200,
            max_in_flight: 4,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteLinkReport {
    pub links: Vec<EntityLink>,
    /// Total retried requests across all nodes.
    pub retries: usize,
}

fn field<'a>(obj: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n))
}

fn as_score(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses an annotation response into (uri, score) pairs.
///
/// Spotlight omits the resource array when nothing was found, so a missing
/// array is an empty result rather than an error.
pub fn parse_annotation(body: &str) -> Result<Vec<(String, f64)>> {
    let json: Value =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("invalid json: {e}")))?;
    let resources = match &json {
        Value::Array(_) => Some(&json),
        Value::Object(_) => field(&json, &["Resources", "resources", "annotations", "annotation"]),
        _ => return Err(Error::Protocol("annotation response is not an object".into())),
    };
    let Some(resources) = resources else {
        return Ok(Vec::new());
    };
    let items: Vec<&Value> = match resources {
        Value::Array(items) => items.iter().collect(),
        Value::Object(_) => vec![resources],
        Value::Null => Vec::new(),
        _ => return Err(Error::Protocol("resource list is not an array".into())),
    };
    items
        .into_iter()
        .map(|item| {
            let uri = field(item, &["@URI", "URI", "uri"])
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Protocol("resource without URI".into()))?;
            let score = field(item, &["@similarityScore", "similarityScore"])
                .and_then(as_score)
                .ok_or_else(|| Error::Protocol(format!("resource {uri} without similarityScore")))?;
            Ok((uri.to_string(), score))
        })
        .collect()
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(String),
}

fn annotate_once(agent: &ureq::Agent, cfg: &RemoteConfig, text: &str) -> Attempt {
    let threshold = cfg.confidence_threshold.to_string();
    let resp = agent
        .post(&cfg.endpoint)
        .set("Accept", "application/json")
        .send_form(&[("text", text), ("confidence", threshold.as_str())]);
    match resp {
        Ok(r) => match r.into_string() {
            Ok(body) => Attempt::Done(body),
            Err(e) => Attempt::Retry(format!("read failed: {e}")),
        },
        Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
            Attempt::Retry(format!("status {code}"))
        }
        Err(ureq::Error::Status(code, _)) => Attempt::Fail(format!("status {code}")),
        Err(ureq::Error::Transport(t)) => Attempt::Retry(format!("transport: {t}")),
    }
}

fn annotate(
    agent: &ureq::Agent,
    cfg: &RemoteConfig,
    text: &str,
) -> Lookup {
    let mut retries = 0;
    loop {
        match annotate_once(agent, cfg, text) {
            Attempt::Done(body) => return Ok((parse_annotation(&body)?, retries)),
            Attempt::Fail(status) => {
                return Err(Error::Remote {
                    label: text.to_string(),
                    status,
                })
            }
            Attempt::Retry(status) => {
                if retries >= cfg.max_retries {
                    return Err(Error::Remote {
                        label: text.to_string(),
                        status,
                    });
                }
                let wait = cfg.backoff_ms.saturating_mul(1 << retries.min(16));
                log::debug!("retrying {text:?} after {status} in {wait}ms");
                std::thread::sleep(Duration::from_millis(wait));
                retries += 1;
            }
        }
    }
}

/// Annotates each node label with one request; links the best resource at or
/// above the threshold. The graph is not modified; see [`attach_links`].
pub fn link_remote(g: &DocGraph, cfg: &RemoteConfig) -> Result<RemoteLinkReport> {
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(cfg.timeout_ms))
        .build();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Lookup)>> = Mutex::new(Vec::new());
    let workers = cfg.max_in_flight.clamp(1, g.nodes.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(node) = g.nodes.get(i) else { break };
                let r = annotate(&agent, cfg, &node.label);
                results.lock().expect("results lock").push((node.node_id, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(id, _)| *id);
    let mut links = Vec::new();
    let mut retries = 0;
    for (node_id, r) in results {
        let (resources, node_retries) = r?;
        retries += node_retries;
        let best = resources
            .into_iter()
            .filter(|(_, score)| *score >= cfg.confidence_threshold)
            .fold(None::<(String, f64)>, |best, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            });
        if let Some((uri, score)) = best {
            links.push(EntityLink::new(node_id, uri, score.clamp(0.0, 1.0))?);
        }
    }
    Ok(RemoteLinkReport { links, retries })
}
