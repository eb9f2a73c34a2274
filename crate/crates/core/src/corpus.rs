//! Labeled corpora, seeded fold plans and the synthetic corpus generator.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legit,
    Misinfo,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Legit, Label::Misinfo];

    /// Class index used by the classifier head: legit = 0, misinfo = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Legit => 0,
            Label::Misinfo => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::Legit),
            1 => Some(Label::Misinfo),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Legit => "legit",
            Label::Misinfo => "misinfo",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legit" => Ok(Label::Legit),
            "misinfo" => Ok(Label::Misinfo),
            other => Err(Error::Validation(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
            label,
        };
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("document id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "document {:?} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        doc.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Validation(format!("duplicate document id {:?}", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub assignments: BTreeMap<String, Split>,
}

impl FoldPlan {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.assignments.get(id).copied()
    }

    /// Ids assigned to `split`, in corpus order.
    pub fn ids<'a>(&self, corpus: &'a [Document], split: Split) -> Vec<&'a str> {
        corpus
            .iter()
            .filter(|d| self.split_of(&d.id) == Some(split))
            .map(|d| d.id.as_str())
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignments.values().filter(|s| **s == split).count()
    }

    /// Checks that the plan covers exactly the corpus ids.
    pub fn check_against(&self, corpus: &[Document]) -> Result<()> {
        if self.assignments.len() != corpus.len() {
            return Err(Error::Validation(format!(
                "fold plan (seed {}) assigns {} ids but corpus has {}",
                self.seed,
                self.assignments.len(),
                corpus.len()
            )));
        }
        for doc in corpus {
            if !self.assignments.contains_key(&doc.id) {
                return Err(Error::Validation(format!(
                    "fold plan (seed {}) has no assignment for {:?}",
                    self.seed, doc.id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("fold plan serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldOptions {
    /// Interleave the classes before cutting so each split keeps the label ratio.
    pub stratified: bool,
}

/// Split sizes for `n` documents: train ⌊0.8n⌋, validation ⌊0.1n⌋, test the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let validation = n / 10;
    (train, validation, n - train - validation)
}

pub fn make_folds(corpus: &[Document], n_folds: usize, base_seed: u64) -> Result<Vec<FoldPlan>> {
    make_folds_with(corpus, n_folds, base_seed, FoldOptions::default())
}

pub fn make_folds_with(
    corpus: &[Document],
    n_folds: usize,
    base_seed: u64,
    options: FoldOptions,
) -> Result<Vec<FoldPlan>> {
    if n_folds == 0 {
        return Err(Error::Validation("n_folds must be at least 1".into()));
    }
    let (_, n_val, n_test) = split_sizes(corpus.len());
    if n_val == 0 || n_test == 0 {
        return Err(Error::Size(format!(
            "{} documents cannot fill non-empty validation and test splits (need at least 10)",
            corpus.len()
        )));
    }
    (0..n_folds as u64)
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            let order = if options.stratified {
                stratified_order(corpus, seed)
            } else {
                let mut idx: Vec<usize> = (0..corpus.len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                idx
            };
            Ok(cut(corpus, &order, seed))
        })
        .collect()
}

fn stratified_order(corpus: &[Document], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(corpus.len());
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus[i].label == label)
            .collect();
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        for (rank, i) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, label.index(), i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

fn cut(corpus: &[Document], order: &[usize], seed: u64) -> FoldPlan {
    let (n_train, n_val, _) = split_sizes(corpus.len());
    let assignments = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            (corpus[i].id.clone(), split)
        })
        .collect();
    FoldPlan { seed, assignments }
}

/// Character count (Unicode scalar values) of each document's raw text.
///
/// Empty texts never reach here: [`Document`] rejects them on construction.
pub fn corpus_char_lengths(corpus: &[Document]) -> Vec<usize> {
    corpus.iter().map(|d| d.text.chars().count()).collect()
}

/// Parameters of the synthetic fact corpus.
///
/// There are `n_fake_facts` entities; each owns one fake value and an even
/// share of the `n_true_facts` true values. Legit documents state true facts,
/// misinformation documents state the entity's fake value instead. Both
/// classes mention the other value in a verb-free sentence, so every document
/// of either class is drawn from the same token-multiset distribution.
///
/// The defaults keep true facts sparse (about one training document each) and
/// fake facts dense, so repeated fake facts are the main knowledge signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub n_true_facts: usize,
    pub n_fake_facts: usize,
    pub facts_per_doc: usize,
    pub noise_sentences_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_docs: 500,
            n_true_facts: 200,
            n_fake_facts: 20,
            facts_per_doc: 1,
            noise_sentences_per_doc: 2,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_docs", self.n_docs),
            ("n_true_facts", self.n_true_facts),
            ("n_fake_facts", self.n_fake_facts),
            ("facts_per_doc", self.facts_per_doc),
            ("noise_sentences_per_doc", self.noise_sentences_per_doc),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.n_true_facts < self.n_fake_facts {
            return Err(Error::Validation(
                "n_true_facts must be at least n_fake_facts (every entity needs a true value)".into(),
            ));
        }
        Ok(())
    }
}

/// Relation phrases; every one parses under the default lexicon.
pub const FACT_RELATIONS: &[&str] = &[
    "visited",
    "has visited",
    "supported",
    "was funded by",
    "met with",
    "praised",
];

const MENTION_TEMPLATES: &[&str] = &[
    "No further details on {}.",
    "More coverage of {} soon.",
    "Related reading: {}.",
];

const NOISE_ADJECTIVES: &[&str] = &[
    "quiet", "busy", "local", "regional", "recent", "early", "late", "brief", "steady", "mixed",
];
const NOISE_NOUNS: &[&str] = &[
    "markets", "weather", "traffic", "schools", "harbors", "farmers", "analysts", "reporters",
    "officials", "voters", "libraries", "museums", "bridges", "clinics", "festivals", "gardens",
];
const NOISE_PLACES: &[&str] = &[
    "the region", "the capital", "the coast", "the valley", "the north", "the south", "downtown",
];

const ENTITY_SYLLABLES: &[&str] = &["ka", "lo", "mi", "re", "ta", "vo", "de", "qu", "ba", "su", "te", "no"];
const VALUE_SYLLABLES: &[&str] = &["pa", "ri", "go", "za", "fe", "lu", "wi", "ho", "ne", "bo", "xa", "ju"];

fn syllable_name(index: usize, syllables: &[&str], suffix: &str) -> String {
    let base = syllables.len();
    let mut name = String::new();
    let mut rest = index;
    for _ in 0..3 {
        name.push_str(syllables[rest % base]);
        rest /= base;
    }
    name.push_str(suffix);
    let mut chars = name.chars();
    let first = chars.next().expect("non-empty").to_uppercase();
    first.chain(chars).collect()
}

pub fn synthetic_entity_name(i: usize) -> String {
    syllable_name(i, ENTITY_SYLLABLES, "ar")
}

pub fn synthetic_value_name(j: usize) -> String {
    syllable_name(j, VALUE_SYLLABLES, "ium")
}

/// Which values are true for an entity, and which one is its fake value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactTable {
    pub true_values: Vec<Vec<usize>>,
    pub fake_value: Vec<usize>,
    pub n_values: usize,
}

impl FactTable {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let n_entities = spec.n_fake_facts;
        let span = spec.n_true_facts.div_ceil(n_entities);
        // True values of entity e are the `span` values after e; the next one
        // is its fake value, which is true for other entities.
        let n_values = n_entities.max(span + 1);
        let mut true_values = vec![Vec::new(); n_entities];
        for k in 0..spec.n_true_facts {
            let entity = k % n_entities;
            let round = k / n_entities;
            true_values[entity].push((entity + 1 + round) % n_values);
        }
        let fake_value = (0..n_entities).map(|e| (e + 1 + span) % n_values).collect();
        FactTable {
            true_values,
            fake_value,
            n_values,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.true_values.len()
    }

    pub fn is_true(&self, entity: usize, value: usize) -> bool {
        self.true_values[entity].contains(&value)
    }
}

/// The random choices for one fact slot, shared by both renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactDraw {
    pub entity: usize,
    pub true_value: usize,
    pub relation: usize,
    pub mention_template: usize,
}

/// Renders a fact slot: the stated fact as a sentence plus a verb-free
/// mention of the other value.
pub fn render_fact(table: &FactTable, draw: FactDraw, label: Label) -> (String, String) {
    let fake = table.fake_value[draw.entity];
    let (stated, mentioned) = match label {
        Label::Legit => (draw.true_value, fake),
        Label::Misinfo => (fake, draw.true_value),
    };
    let fact = format!(
        "{} {} {}.",
        synthetic_entity_name(draw.entity),
        FACT_RELATIONS[draw.relation],
        synthetic_value_name(stated)
    );
    let mention =
        MENTION_TEMPLATES[draw.mention_template].replace("{}", &synthetic_value_name(mentioned));
    (fact, mention)
}

fn noise_sentence(rng: &mut ChaCha8Rng) -> String {
    let adj = NOISE_ADJECTIVES[rng.gen_range(0..NOISE_ADJECTIVES.len())];
    let place = NOISE_PLACES[rng.gen_range(0..NOISE_PLACES.len())];
    if rng.gen_bool(0.5) {
        let noun = NOISE_NOUNS[rng.gen_range(0..NOISE_NOUNS.len())];
        let mut s = format!("{adj} {noun} across {place}.");
        s[..1].make_ascii_uppercase();
        s
    } else {
        let a = NOISE_NOUNS[rng.gen_range(0..NOISE_NOUNS.len())];
        let b = NOISE_NOUNS[rng.gen_range(0..NOISE_NOUNS.len())];
        let relation = FACT_RELATIONS[rng.gen_range(0..FACT_RELATIONS.len())];
        let mut s = format!("{adj} {a} {relation} {b}.");
        s[..1].make_ascii_uppercase();
        s
    }
}

/// Generates a deterministic, class-balanced corpus of fact-bearing documents.
///
/// Labels alternate legit/misinfo by position; ids are `syn-NNNNN`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    let table = FactTable::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::with_capacity(spec.n_docs);
    for i in 0..spec.n_docs {
        let label = if i % 2 == 0 { Label::Legit } else { Label::Misinfo };
        let mut sentences = Vec::new();
        for _ in 0..spec.facts_per_doc {
            let entity = rng.gen_range(0..table.n_entities());
            let values = &table.true_values[entity];
            let draw = FactDraw {
                entity,
                true_value: values[rng.gen_range(0..values.len())],
                relation: rng.gen_range(0..FACT_RELATIONS.len()),
                mention_template: rng.gen_range(0..MENTION_TEMPLATES.len()),
            };
            let (fact, mention) = render_fact(&table, draw, label);
            sentences.push(fact);
            sentences.push(mention);
        }
        for _ in 0..spec.noise_sentences_per_doc {
            sentences.push(noise_sentence(&mut rng));
        }
        sentences.shuffle(&mut rng);
        docs.push(Document::new(format!("syn-{i:05}"), sentences.join(" "), label)?);
    }
    Ok(docs)
}

/// Sorted distinct tokens of a corpus.
pub fn vocabulary(corpus: &[Document]) -> Vec<String> {
    let mut vocab: Vec<String> = corpus
        .iter()
        .flat_map(|d| tokenize(&d.text))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    vocab.sort();
    vocab
}

/// Gazetteer lines (`surface<TAB>uri`) for every synthetic entity and value.
pub fn synthetic_gazetteer(spec: &SyntheticSpec) -> Vec<(String, String)> {
    let table = FactTable::new(spec);
    let mut entries: Vec<(String, String)> = (0..table.n_entities())
        .map(|e| {
            let name = synthetic_entity_name(e);
            let uri = format!("urn:synthetic:entity:{name}");
            (name, uri)
        })
        .collect();
    entries.extend((0..table.n_values).map(|v| {
        let name = synthetic_value_name(v);
        let uri = format!("urn:synthetic:value:{name}");
        (name, uri)
    }));
    entries
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, label: Label) -> Document {
        Document::new(id, format!("text of {id}"), label).unwrap()
    }

    fn corpus(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| doc(&format!("d{i}"), if i % 3 == 0 { Label::Misinfo } else { Label::Legit }))
            .collect()
    }

    #[test]
    fn load_two_lines_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"first\",\"label\":\"legit\"}\n{\"id\":\"b\",\"text\":\"second\\nline\",\"label\":\"misinfo\"}\n",
        )
        .unwrap();
        let docs = load_corpus(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "a");
        assert_eq!(docs[1].id, "b");
        assert_eq!(docs[1].text, "second\nline");
        assert_eq!(docs[1].label, Label::Misinfo);
    }

    #[test]
    fn duplicate_id_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"x\",\"label\":\"legit\"}\n{\"id\":\"a\",\"text\":\"y\",\"label\":\"legit\"}\n",
        )
        .unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"x\",\"label\":\"legit\"}\n{\"id\":\"b\",\"text\":\"x\",\"label\":\"maybe\"}\n",
        )
        .unwrap();
        match load_corpus(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_text_violates_invariant() {
        assert!(Document::new("a", "   \n", Label::Legit).is_err());
    }

    #[test]
    fn ten_docs_one_fold_is_8_1_1() {
        let plans = make_folds(&corpus(10), 1, 3).unwrap();
        assert_eq!(plans.len(), 1);
        let p = &plans[0];
        assert_eq!(p.count(Split::Train), 8);
        assert_eq!(p.count(Split::Validation), 1);
        assert_eq!(p.count(Split::Test), 1);
    }

    #[test]
    fn folds_are_deterministic() {
        let c = corpus(37);
        assert_eq!(make_folds(&c, 3, 11).unwrap(), make_folds(&c, 3, 11).unwrap());
    }

    #[test]
    fn five_folds_differ_pairwise() {
        let c = corpus(100);
        let plans = make_folds(&c, 5, 0).unwrap();
        for (i, p) in plans.iter().enumerate() {
            assert_eq!(p.seed, i as u64);
            assert_eq!(
                (p.count(Split::Train), p.count(Split::Validation), p.count(Split::Test)),
                (80, 10, 10)
            );
            for q in &plans[i + 1..] {
                assert_ne!(p.assignments, q.assignments);
            }
        }
    }

    #[test]
    fn small_corpus_is_a_size_error() {
        assert!(matches!(make_folds(&corpus(9), 1, 0), Err(Error::Size(_))));
        assert!(make_folds(&corpus(10), 0, 0).is_err());
    }

    #[test]
    fn stratified_keeps_sizes_and_balance() {
        let c = corpus(90);
        let plan = &make_folds_with(&c, 1, 5, FoldOptions { stratified: true }).unwrap()[0];
        assert_eq!(plan.count(Split::Train), 72);
        let test_misinfo = plan
            .ids(&c, Split::Test)
            .iter()
            .filter(|id| c.iter().find(|d| &d.id == *id).unwrap().label == Label::Misinfo)
            .count();
        // 30 of 90 are misinfo; the interleave gives 3 of 9 in test.
        assert_eq!(test_misinfo, 3);
    }

    #[test]
    fn char_lengths() {
        let c = vec![
            doc("a", Label::Legit),
            Document::new("b", "abc", Label::Legit).unwrap(),
            Document::new("c", "héllo", Label::Legit).unwrap(),
        ];
        assert_eq!(corpus_char_lengths(&c), vec![9, 3, 5]);
        let lens = [5usize, 10, 15];
        assert_eq!(lens.iter().sum::<usize>() as f64 / 3.0, 10.0);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n_docs: 4,
            seed: 7,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn misinfo_docs_state_a_fake_fact() {
        let spec = SyntheticSpec {
            n_docs: 40,
            ..Default::default()
        };
        let table = FactTable::new(&spec);
        let fakes: Vec<String> = (0..table.n_entities())
            .map(|e| {
                format!(
                    "{} {}",
                    synthetic_entity_name(e),
                    synthetic_value_name(table.fake_value[e])
                )
            })
            .collect();
        for d in generate_synthetic(&spec).unwrap() {
            let stated = d.text.split('.').any(|s| {
                let toks: Vec<&str> = s.split_whitespace().collect();
                toks.len() >= 3
                    && fakes.contains(&format!("{} {}", toks[0], toks[toks.len() - 1]))
            });
            assert_eq!(stated, d.label == Label::Misinfo, "{}", d.text);
        }
    }

    #[test]
    fn fake_values_are_never_true_for_their_entity() {
        for (t, f) in [(200, 20), (60, 20), (20, 20), (45, 10), (7, 3)] {
            let spec = SyntheticSpec {
                n_true_facts: t,
                n_fake_facts: f,
                ..Default::default()
            };
            let table = FactTable::new(&spec);
            for e in 0..table.n_entities() {
                assert!(!table.is_true(e, table.fake_value[e]));
                assert!(!table.true_values[e].is_empty());
            }
        }
    }

    #[test]
    fn both_renderings_share_a_token_multiset() {
        let spec = SyntheticSpec::default();
        let table = FactTable::new(&spec);
        for entity in 0..table.n_entities() {
            for &true_value in &table.true_values[entity] {
                let draw = FactDraw {
                    entity,
                    true_value,
                    relation: entity % FACT_RELATIONS.len(),
                    mention_template: entity % MENTION_TEMPLATES.len(),
                };
                let bag = |label| {
                    let (a, b) = render_fact(&table, draw, label);
                    let mut t = tokenize(&format!("{a} {b}"));
                    t.sort();
                    t
                };
                assert_eq!(bag(Label::Legit), bag(Label::Misinfo));
            }
        }
    }

    #[test]
    fn synthetic_names_are_distinct() {
        let mut seen = HashSet::new();
        for i in 0..500 {
            assert!(seen.insert(synthetic_entity_name(i)));
            assert!(seen.insert(synthetic_value_name(i)));
        }
    }
}
