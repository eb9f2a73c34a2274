//! Frozen vector representations: word-vector tables for phrases and
//! triples, and imported per-document vectors for the text channel.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::extraction::Triple;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

fn parse_floats(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| Error::Format(format!("line {line}: bad float {f:?}: {e}")))
        })
        .collect()
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("vector dimension must be at least 1".into()));
        }
        Ok(WordVectorTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    /// Inserts unless the token is already present (first occurrence wins).
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Format(format!(
                "vector for {token:?} has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.vectors.contains_key(token) {
            return Ok(false);
        }
        self.vectors.insert(token.to_string(), vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Text format: optional `count dim` header, then `token v1 … vd` rows.
    /// Tokens are lowercased on load.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<WordVectorTable> = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if line_no == 1 && fields.len() == 2 {
                if let (Ok(_), Ok(dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                    table = Some(WordVectorTable::new(dim)?);
                    continue;
                }
            }
            let values = parse_floats(&fields[1..], line_no)?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(WordVectorTable::new(values.len()).map_err(|_| {
                    Error::Format(format!("line {line_no}: row without vector components"))
                })?),
            };
            if values.len() != t.dim {
                return Err(Error::Format(format!(
                    "line {line_no}: {} components, expected {}",
                    values.len(),
                    t.dim
                )));
            }
            t.insert(&fields[0].to_lowercase(), values)?;
        }
        table.ok_or_else(|| Error::Format(format!("{}: no vectors", path.display())))
    }

    /// Writes with a header, tokens sorted; floats use shortest round-trip form.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "{} {}", self.vectors.len(), self.dim).map_err(io)?;
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        for tok in tokens {
            write!(out, "{tok}").map_err(io)?;
            for v in &self.vectors[tok] {
                write!(out, " {v:?}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Seeded uniform vectors in [-1, 1] for each token, in the given order.
    pub fn random<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut table = WordVectorTable::new(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tok in tokens {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            table.insert(&tok.as_ref().to_lowercase(), v)?;
        }
        Ok(table)
    }
}

/// Mean of in-vocabulary token vectors; the zero vector when none are known.
pub fn embed_phrase(label: &str, table: &WordVectorTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for tok in tokenize(label) {
        if let Some(v) = table.get(&tok) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
    }
    sum
}

pub fn embed_triple(t: &Triple, table: &WordVectorTable) -> Vec<f64> {
    embed_spo(&t.subject, &t.predicate, &t.object, table)
}

pub fn embed_spo(subject: &str, predicate: &str, object: &str, table: &WordVectorTable) -> Vec<f64> {
    let parts = [
        embed_phrase(subject, table),
        embed_phrase(predicate, table),
        embed_phrase(object, table),
    ];
    (0..table.dim())
        .map(|i| (parts[0][i] + parts[1][i] + parts[2][i]) / 3.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl DocEmbeddingStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut vectors = HashMap::new();
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::Format(format!(
                    "vector for {id:?} has {} components, expected {dim}",
                    v.len()
                )));
            }
            if vectors.insert(id.clone(), v).is_some() {
                return Err(Error::Format(format!("duplicate document id {id:?}")));
            }
        }
        Ok(DocEmbeddingStore { dim, vectors })
    }

    /// Header `dim=<d>`, then `doc_id<TAB>v1 … vd` per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: empty embedding file", path.display())))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Format(format!("line 1: bad header {header:?}")))?;
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("line {line_no}: expected id<TAB>vector")))?;
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let v = parse_floats(&fields, line_no)?;
            if v.len() != dim {
                return Err(Error::Format(format!(
                    "line {line_no}: {} components, expected {dim}",
                    v.len()
                )));
            }
            rows.push((id.to_string(), v));
        }
        Self::from_rows(dim, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>, ids: &[&str]) -> Result<()> {
        let path = path.as_ref();
        let mut body = format!("dim={}\n", self.dim);
        for id in ids {
            let v = self.get(id)?;
            let joined: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            body.push_str(&format!("{id}\t{}\n", joined.join(" ")));
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextBackend {
    WordMean,
    Imported,
}

/// Source of text-channel vectors.
#[derive(Debug, Clone, Copy)]
pub enum TextEncoder<'a> {
    WordMean(&'a WordVectorTable),
    Imported(&'a DocEmbeddingStore),
}

impl TextEncoder<'_> {
    pub fn backend(&self) -> TextBackend {
        match self {
            TextEncoder::WordMean(_) => TextBackend::WordMean,
            TextEncoder::Imported(_) => TextBackend::Imported,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TextEncoder::WordMean(t) => t.dim(),
            TextEncoder::Imported(s) => s.dim(),
        }
    }
}

pub fn embed_text(doc: &Document, encoder: TextEncoder<'_>) -> Result<Vec<f64>> {
    match encoder {
        TextEncoder::WordMean(table) => Ok(embed_phrase(&doc.text, table)),
        TextEncoder::Imported(store) => store.get(&doc.id).map(<[f64]>::to_vec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::extraction::Extractor;
    use proptest::prelude::*;

    fn table() -> WordVectorTable {
        let mut t = WordVectorTable::new(3).unwrap();
        t.insert("red", vec![1.0, 0.0, 2.0]).unwrap();
        t.insert("fox", vec![0.0, 4.0, -2.0]).unwrap();
        t.insert("jumps", vec![3.0, 3.0, 3.0]).unwrap();
        t
    }

    #[test]
    fn load_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "Red 1 0 2\nfox 0 4 -2\nred 9 9 9\n").unwrap();
        let t = WordVectorTable::load(&path).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("red"), Some(&[1.0, 0.0, 2.0][..]));
    }

    #[test]
    fn header_declares_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "2 3\na 1 2 3\nb 4 5 6\n").unwrap();
        assert_eq!(WordVectorTable::load(&path).unwrap().len(), 2);
    }

    #[test]
    fn short_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "a 1 2 3\nb 4 5\n").unwrap();
        let err = WordVectorTable::load(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn save_load_is_bitwise() {
        let t = WordVectorTable::random(&["alpha", "beta", "gamma"], 5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        t.save(&path).unwrap();
        let back = WordVectorTable::load(&path).unwrap();
        for tok in ["alpha", "beta", "gamma"] {
            let a: Vec<u64> = t.get(tok).unwrap().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.get(tok).unwrap().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn phrase_cases() {
        let t = table();
        assert_eq!(embed_phrase("Fox", &t), vec![0.0, 4.0, -2.0]);
        assert_eq!(embed_phrase("red fox", &t), vec![0.5, 2.0, 0.0]);
        assert_eq!(embed_phrase("unknown words", &t), vec![0.0; 3]);
        assert_eq!(embed_phrase("", &t), vec![0.0; 3]);
        assert_eq!(embed_phrase("red, zzz fox!", &t), vec![0.5, 2.0, 0.0]);
    }

    #[test]
    fn triple_cases() {
        let t = table();
        let same = Triple::new("red fox", "red fox", "red fox", "d", Extractor::Builtin);
        assert_eq!(embed_triple(&same, &t), embed_phrase("red fox", &t));
        let spo = Triple::new("red", "fox", "jumps", "d", Extractor::Builtin);
        assert_eq!(embed_triple(&spo, &t), vec![4.0 / 3.0, 7.0 / 3.0, 1.0]);
    }

    #[test]
    fn triple_matches_token_level_oracle() {
        use rand::{Rng, SeedableRng};
        let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let t = WordVectorTable::random(&vocab, 6, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phrase = |rng: &mut ChaCha8Rng| -> String {
            (0..rng.gen_range(0..4))
                .map(|_| format!("W{}", rng.gen_range(0..40)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for _ in 0..50 {
            let (s, p, o) = (phrase(&mut rng), phrase(&mut rng), phrase(&mut rng));
            let got = embed_triple(&Triple::new(&s, &p, &o, "d", Extractor::Builtin), &t);
            // oracle: re-derive each phrase mean from raw tokens, then average
            let mean = |ph: &str| -> Vec<f64> {
                let hits: Vec<&[f64]> = ph
                    .split_whitespace()
                    .filter_map(|w| t.get(&w.to_lowercase()))
                    .collect();
                (0..6)
                    .map(|i| {
                        if hits.is_empty() {
                            0.0
                        } else {
                            hits.iter().map(|v| v[i]).sum::<f64>() / hits.len() as f64
                        }
                    })
                    .collect()
            };
            let (a, b, c) = (mean(&s), mean(&p), mean(&o));
            for i in 0..6 {
                assert!((got[i] - (a[i] + b[i] + c[i]) / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_backends() {
        let t = table();
        let doc = Document::new("d1", "fox", Label::Legit).unwrap();
        assert_eq!(embed_text(&doc, TextEncoder::WordMean(&t)).unwrap(), vec![0.0, 4.0, -2.0]);
        let long = Document::new("d2", "The red fox jumps. Red!", Label::Legit).unwrap();
        assert_eq!(
            embed_text(&long, TextEncoder::WordMean(&t)).unwrap(),
            embed_phrase(&long.text, &t)
        );
        let store = DocEmbeddingStore::from_rows(2, vec![("d1".into(), vec![0.25, -1.5])]).unwrap();
        let enc = TextEncoder::Imported(&store);
        assert_eq!(embed_text(&doc, enc).unwrap(), vec![0.25, -1.5]);
        assert_eq!(enc.backend(), TextBackend::Imported);
        match embed_text(&long, enc).unwrap_err() {
            Error::Lookup(id) => assert_eq!(id, "d2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn doc_store_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        std::fs::write(&path, "dim=3\nd1\t0.1 0.2 0.3\nd2\t1.000000 -2.5 0\n").unwrap();
        let store = DocEmbeddingStore::load(&path).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.get("d2").unwrap(), &[1.0, -2.5, 0.0]);
        std::fs::write(&path, "dim=3\nd1\t0.1 0.2\n").unwrap();
        assert!(DocEmbeddingStore::load(&path).is_err());
        std::fs::write(&path, "dim=2\nd1\t0.1 0.2\nd1\t0.1 0.2\n").unwrap();
        assert!(DocEmbeddingStore::load(&path).is_err());
        std::fs::write(&path, "3\nd1\t0.1 0.2 0.3\n").unwrap();
        assert!(DocEmbeddingStore::load(&path).is_err());
        let store = DocEmbeddingStore::from_rows(2, vec![("a".into(), vec![0.1, 1e-7])]).unwrap();
        store.save(&path, &["a"]).unwrap();
        assert_eq!(DocEmbeddingStore::load(&path).unwrap(), store);
    }

    proptest! {
        #[test]
        fn phrase_mean_ignores_token_order(perm in Just(vec!["red", "fox", "jumps", "zzz", "red"]).prop_shuffle()) {
            let t = table();
            let a = embed_phrase(&perm.join(" "), &t);
            let b = embed_phrase("red fox jumps zzz red", &t);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(x.is_finite());
            }
        }
    }
}
