//! Shallow rule-based triple extraction and triple-file import/export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Builtin,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_doc: String,
    pub extractor: Extractor,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        source_doc: impl Into<String>,
        extractor: Extractor,
    ) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            source_doc: source_doc.into(),
            extractor,
        }
    }
}

pub type TriplesByDoc = BTreeMap<String, Vec<Triple>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbLexicon {
    entries: BTreeSet<String>,
    particles: BTreeSet<String>,
}

const DEFAULT_VERBS: &str = include_str!("../data/verbs.txt");
const DEFAULT_PARTICLES: &str = include_str!("../data/particles.txt");

fn word_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl VerbLexicon {
    pub fn new<I, J, S, T>(entries: I, particles: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let check = |w: &str| -> Result<String> {
            let w = w.trim();
            if w.is_empty() || w.split_whitespace().count() != 1 {
                return Err(Error::Validation(format!(
                    "lexicon entry {w:?} must be a single token"
                )));
            }
            if w != w.to_lowercase() {
                return Err(Error::Validation(format!("lexicon entry {w:?} must be lowercase")));
            }
            Ok(w.to_string())
        };
        let entries = entries
            .into_iter()
            .map(|w| check(w.as_ref()))
            .collect::<Result<BTreeSet<_>>>()?;
        let particles = particles
            .into_iter()
            .map(|w| check(w.as_ref()))
            .collect::<Result<BTreeSet<_>>>()?;
        if entries.is_empty() {
            return Err(Error::Validation("verb lexicon is empty".into()));
        }
        Ok(VerbLexicon { entries, particles })
    }

    /// Reads newline-separated word lists; `#` starts a comment line.
    pub fn from_files(verbs: impl AsRef<Path>, particles: Option<&Path>) -> Result<Self> {
        let verbs = verbs.as_ref();
        let raw = std::fs::read_to_string(verbs).map_err(|e| Error::io(verbs, e))?;
        let particles_raw = match particles {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => DEFAULT_PARTICLES.to_string(),
        };
        Self::new(word_list(&raw), word_list(&particles_raw))
    }

    pub fn is_verb(&self, token: &str) -> bool {
        self.entries.contains(&token.to_lowercase())
    }

    pub fn is_particle(&self, token: &str) -> bool {
        self.particles.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for VerbLexicon {
    fn default() -> Self {
        Self::new(word_list(DEFAULT_VERBS), word_list(DEFAULT_PARTICLES))
            .expect("bundled lexicon is valid")
    }
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    /// A comma or semicolon directly followed this token.
    separator_after: bool,
}

fn sentence_tokens(sentence: &str) -> Vec<Token<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let separator_after = raw.ends_with(',') || raw.ends_with(';');
            let text = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!text.is_empty()).then_some(Token {
                text,
                separator_after,
            })
        })
        .collect()
}

fn split_clauses<'a>(tokens: &[Token<'a>], lexicon: &VerbLexicon) -> Vec<Vec<&'a str>> {
    let has_verb = |span: &[Token<'_>]| span.iter().any(|t| lexicon.is_verb(t.text));
    let mut clauses = Vec::new();
    let mut start = 0;
    for k in 0..tokens.len() {
        // (end of left side, start of right side)
        let cut = if tokens[k].text.eq_ignore_ascii_case("and") {
            Some((k, k + 1))
        } else if tokens[k].separator_after {
            Some((k + 1, k + 1))
        } else {
            None
        };
        let Some((left_end, right_start)) = cut else {
            continue;
        };
        if left_end <= start || right_start >= tokens.len() {
            continue;
        }
        if has_verb(&tokens[start..left_end]) && has_verb(&tokens[right_start..]) {
            clauses.push(tokens[start..left_end].iter().map(|t| t.text).collect());
            start = right_start;
        }
    }
    if start < tokens.len() {
        clauses.push(tokens[start..].iter().map(|t| t.text).collect());
    }
    clauses
}

/// (subject, predicate, object) token ranges for one clause.
fn clause_triple<'a>(
    clause: &[&'a str],
    lexicon: &VerbLexicon,
) -> Option<(Vec<&'a str>, Vec<&'a str>, Vec<&'a str>)> {
    let start = clause.iter().position(|t| lexicon.is_verb(t))?;
    let mut end = start;
    while end < clause.len() && lexicon.is_verb(clause[end]) {
        end += 1;
    }
    while end < clause.len() && lexicon.is_particle(clause[end]) {
        end += 1;
    }
    let subject = clause[..start].to_vec();
    let object = clause[end..].to_vec();
    if subject.is_empty() || object.is_empty() {
        return None;
    }
    Some((subject, clause[start..end].to_vec(), object))
}

/// Extracts at most one triple per clause. Sentences end at `.`, `?` or `!`.
pub fn extract_builtin(text: &str, lexicon: &VerbLexicon) -> Vec<Triple> {
    extract_for_doc(text, "", lexicon)
}

pub fn extract_for_doc(text: &str, doc_id: &str, lexicon: &VerbLexicon) -> Vec<Triple> {
    let mut triples = Vec::new();
    for sentence in text.split(['.', '?', '!']) {
        let tokens = sentence_tokens(sentence);
        for clause in split_clauses(&tokens, lexicon) {
            if let Some((s, p, o)) = clause_triple(&clause, lexicon) {
                triples.push(Triple::new(
                    s.join(" "),
                    p.join(" "),
                    o.join(" "),
                    doc_id,
                    Extractor::Builtin,
                ));
            }
        }
    }
    triples
}

/// Runs the built-in extractor over a corpus; every document gets an entry.
pub fn extract_corpus(corpus: &[Document], lexicon: &VerbLexicon) -> TriplesByDoc {
    corpus
        .par_iter()
        .map(|d| (d.id.clone(), extract_for_doc(&d.text, &d.id, lexicon)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TripleRecord {
    doc: String,
    subject: String,
    predicate: String,
    object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

/// Reads a triples file. Confidence values are accepted and dropped.
pub fn import_triples(path: impl AsRef<Path>) -> Result<TriplesByDoc> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = TriplesByDoc::new();
    let mut index = 0usize;
    for (line_idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_idx + 1,
            message: e.to_string(),
        })?;
        for (field, value) in [
            ("doc", &rec.doc),
            ("subject", &rec.subject),
            ("predicate", &rec.predicate),
            ("object", &rec.object),
        ] {
            if value.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "triple record {index} has an empty {field}"
                )));
            }
        }
        out.entry(rec.doc.clone()).or_default().push(Triple::new(
            rec.subject.trim(),
            rec.predicate.trim(),
            rec.object.trim(),
            rec.doc,
            Extractor::Imported,
        ));
        index += 1;
    }
    Ok(out)
}

pub fn export_triples(triples: &TriplesByDoc, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (doc, list) in triples {
        for t in list {
            let rec = TripleRecord {
                doc: doc.clone(),
                subject: t.subject.clone(),
                predicate: t.predicate.clone(),
                object: t.object.clone(),
                confidence: None,
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SyntheticSpec, FACT_RELATIONS};
    use proptest::prelude::*;

    fn lex(verbs: &[&str], particles: &[&str]) -> VerbLexicon {
        VerbLexicon::new(verbs.iter(), particles.iter()).unwrap()
    }

    fn spo(t: &Triple) -> (&str, &str, &str) {
        (&t.subject, &t.predicate, &t.object)
    }

    #[test]
    fn obama_hand_trace() {
        let l = lex(&["was", "born"], &["in"]);
        let out = extract_builtin("Barack Obama was born in Hawaii.", &l);
        assert_eq!(out.len(), 1);
        assert_eq!(spo(&out[0]), ("Barack Obama", "was born in", "Hawaii"));
        assert_eq!(out[0].extractor, Extractor::Builtin);
    }

    #[test]
    fn no_verb_no_triple() {
        assert!(extract_builtin("Hello world", &lex(&["sees"], &[])).is_empty());
    }

    #[test]
    fn two_sentences() {
        let out = extract_builtin("A sees B. C sees D.", &lex(&["sees"], &[]));
        let got: Vec<_> = out.iter().map(spo).collect();
        assert_eq!(got, vec![("A", "sees", "B"), ("C", "sees", "D")]);
    }

    #[test]
    fn and_splits_only_between_verb_clauses() {
        let l = lex(&["likes", "hates"], &[]);
        let out = extract_builtin("Tom likes cheese and Jerry hates cats", &l);
        let got: Vec<_> = out.iter().map(spo).collect();
        assert_eq!(got, vec![("Tom", "likes", "cheese"), ("Jerry", "hates", "cats")]);

        let out = extract_builtin("Tom and Jerry like cheese", &lex(&["like"], &[]));
        assert_eq!(spo(&out[0]), ("Tom and Jerry", "like", "cheese"));
    }

    #[test]
    fn comma_without_verb_on_both_sides_is_kept() {
        let l = lex(&["is"], &[]);
        let out = extract_builtin("Paris, the capital, is large; Rome is old!", &l);
        let got: Vec<_> = out.iter().map(spo).collect();
        assert_eq!(got, vec![("Paris the capital", "is", "large"), ("Rome", "is", "old")]);
    }

    #[test]
    fn predicate_needs_both_sides() {
        let l = lex(&["went"], &["in"]);
        assert!(extract_builtin("He went in.", &l).is_empty());
        assert!(extract_builtin("Went home.", &l).is_empty());
    }

    #[test]
    fn default_lexicon_parses_every_synthetic_relation() {
        let l = VerbLexicon::default();
        assert!(l.len() >= 150);
        for rel in FACT_RELATIONS {
            let out = extract_builtin(&format!("Kaloar {rel} Parigoium."), &l);
            assert_eq!(out.len(), 1, "{rel}");
            assert_eq!(spo(&out[0]), ("Kaloar", *rel, "Parigoium"));
        }
    }

    #[test]
    fn synthetic_corpus_yields_one_fact_triple_per_slot() {
        let spec = SyntheticSpec {
            n_docs: 30,
            ..Default::default()
        };
        let l = VerbLexicon::default();
        for doc in crate::corpus::generate_synthetic(&spec).unwrap() {
            let triples = extract_for_doc(&doc.text, &doc.id, &l);
            let facts = triples
                .iter()
                .filter(|t| t.object.ends_with("ium"))
                .count();
            assert_eq!(facts, spec.facts_per_doc, "{}", doc.text);
        }
    }

    #[test]
    fn lexicon_rejects_bad_entries() {
        assert!(VerbLexicon::new(Vec::<&str>::new(), ["in"]).is_err());
        assert!(VerbLexicon::new(["Was"], Vec::<&str>::new()).is_err());
        assert!(VerbLexicon::new(["was born"], Vec::<&str>::new()).is_err());
    }

    #[test]
    fn import_groups_by_doc_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut lines = String::new();
        for (doc, i) in [("d1", 0), ("d2", 0), ("d1", 1), ("d1", 2), ("d2", 1)] {
            lines.push_str(&format!(
                "{{\"doc\":\"{doc}\",\"subject\":\"s{i}\",\"predicate\":\"p\",\"object\":\"o\",\"confidence\":0.7}}\n"
            ));
        }
        std::fs::write(&path, lines).unwrap();
        let map = import_triples(&path).unwrap();
        assert_eq!(map["d1"].len(), 3);
        assert_eq!(map["d2"].len(), 2);
        let subjects: Vec<_> = map["d1"].iter().map(|t| t.subject.as_str()).collect();
        assert_eq!(subjects, vec!["s0", "s1", "s2"]);
        assert!(map["d1"].iter().all(|t| t.extractor == Extractor::Imported));
    }

    #[test]
    fn import_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            "{\"doc\":\"d1\",\"subject\":\"A\",\"predicate\":\"likes\",\"object\":\"B\"}\n",
        )
        .unwrap();
        let map = import_triples(&path).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(spo(&map["d1"][0]), ("A", "likes", "B"));
    }

    #[test]
    fn import_empty_predicate_names_record_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            "{\"doc\":\"d1\",\"subject\":\"A\",\"predicate\":\"x\",\"object\":\"B\"}\n{\"doc\":\"d1\",\"subject\":\"A\",\"predicate\":\" \",\"object\":\"B\"}\n",
        )
        .unwrap();
        let err = import_triples(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("record 1"), "{err}");
    }

    proptest! {
        #[test]
        fn emitted_phrases_are_contiguous_clause_tokens(
            words in prop::collection::vec(
                prop::sample::select(vec!["Alice", "bob", "sees", "was", "born", "in", "and", "Paris,", "x;", "the"]),
                0..24,
            )
        ) {
            let text = words.join(" ");
            let l = lex(&["sees", "was", "born"], &["in"]);
            let out = extract_builtin(&text, &l);
            prop_assert_eq!(&out, &extract_builtin(&text, &l));
            let tokens: Vec<String> = sentence_tokens(&text).iter().map(|t| t.text.to_string()).collect();
            let joined = format!(" {} ", tokens.join(" "));
            for t in &out {
                prop_assert!(!t.subject.is_empty() && !t.predicate.is_empty() && !t.object.is_empty());
                let whole = format!(" {} {} {} ", t.subject, t.predicate, t.object);
                prop_assert!(joined.contains(&whole), "{:?} not in {:?}", whole, joined);
            }
        }

        #[test]
        fn export_import_round_trip(
            rows in prop::collection::vec((0usize..3, "[a-zA-Z][a-z ]{0,8}[a-z]", "[a-z]{1,6}", "[A-Z][a-z]{0,5}"), 0..12)
        ) {
            let mut map = TriplesByDoc::new();
            for (d, s, p, o) in rows {
                let doc = format!("doc{d}");
                map.entry(doc.clone()).or_default().push(Triple::new(s, p, o, doc, Extractor::Imported));
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.jsonl");
            export_triples(&map, &path).unwrap();
            prop_assert_eq!(import_triples(&path).unwrap(), map);
        }
    }
}
