//! Clauses, unfairness labels, gold rationale links and per-category
//! knowledge bases, plus their on-disk formats.
//!
//! Corpus files are JSON Lines, one clause per line:
//!
//! ```text
//! {"id":"c1","document_id":"box","text":"...","labels":{"ltd":"potentially_unfair"},"gold_rationales":{"ltd":["extent"]}}
//! ```
//!
//! Knowledge bases are TOML documents with a `category` key and an ordered
//! `[[entries]]` array of `{ id, text }` tables. See `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Ltd,
    Cr,
    Ter,
    Ch,
    A,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Ltd,
        Category::Cr,
        Category::Ter,
        Category::Ch,
        Category::A,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Category::Ltd => "ltd",
            Category::Cr => "cr",
            Category::Ter => "ter",
            Category::Ch => "ch",
            Category::A => "a",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Category::Ltd => "Limitation of liability",
            Category::Cr => "Content removal",
            Category::Ter => "Unilateral termination",
            Category::Ch => "Unilateral changes",
            Category::A => "Arbitration",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown category `{s}` (expected one of ltd, cr, ter, ch, a)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Fair,
    PotentiallyUnfair,
    ClearlyUnfair,
}

impl Label {
    pub fn is_unfair(self) -> bool {
        !matches!(self, Label::Fair)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationaleEntry {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    category: Category,
    entries: Vec<RationaleEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    category: String,
    entries: Vec<RationaleEntry>,
}

impl KnowledgeBase {
    pub fn new(category: Category, entries: Vec<RationaleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyKnowledgeBase);
        }
        let mut seen = HashSet::new();
        let mut problems = Vec::new();
        for e in &entries {
            if e.id.is_empty() {
                problems.push("rationale with empty id".to_string());
            } else if !seen.insert(e.id.as_str()) {
                problems.push(format!("duplicate rationale id `{}`", e.id));
            }
            if e.text.trim().is_empty() {
                problems.push(format!("rationale `{}` has empty text", e.id));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(KnowledgeBase { category, entries })
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn entries(&self) -> &[RationaleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&RationaleEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }
}

fn toml_line(src: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
        .unwrap_or(0)
}

/// Reads a knowledge base file and checks it belongs to `category`.
pub fn load_kb(path: impl AsRef<Path>, category: Category) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let src = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if src.trim().is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "knowledge base file is empty".into(),
        });
    }
    let file: KbFile = toml::from_str(&src).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: toml_line(&src, &e),
        message: e.message().to_string(),
    })?;
    let found: Category = file.category.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("unknown category `{}`", file.category),
    })?;
    if found != category {
        return Err(Error::CategoryMismatch {
            expected: category.to_string(),
            found: found.to_string(),
        });
    }
    KnowledgeBase::new(category, file.entries)
}

/// Conventional location of a category's knowledge base inside a KB directory.
pub fn kb_path(dir: impl AsRef<Path>, category: Category) -> PathBuf {
    dir.as_ref().join(format!("{}.toml", category.id()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub service: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clause {
    pub id: String,
    pub document_id: String,
    pub text: String,
    pub labels: BTreeMap<Category, Label>,
    pub gold_rationales: BTreeMap<Category, BTreeSet<String>>,
    /// 1-based source line, when loaded from a file.
    #[serde(skip)]
    pub line: Option<usize>,
}

impl Clause {
    /// Label for `category`; categories not listed are fair.
    pub fn label(&self, category: Category) -> Label {
        self.labels.get(&category).copied().unwrap_or(Label::Fair)
    }

    pub fn is_unfair(&self, category: Category) -> bool {
        self.label(category).is_unfair()
    }

    pub fn gold(&self, category: Category) -> Option<&BTreeSet<String>> {
        self.gold_rationales
            .get(&category)
            .filter(|g| !g.is_empty())
    }

    fn location(&self) -> String {
        match self.line {
            Some(l) => format!("line {l}, clause `{}`", self.id),
            None => format!("clause `{}`", self.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    clauses: Vec<Clause>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, clauses: Vec<Clause>) -> Result<Self> {
        let mut problems = Vec::new();
        let mut doc_ids = HashSet::new();
        for d in &documents {
            if !doc_ids.insert(d.id.as_str()) {
                problems.push(format!("duplicate document `{}`", d.id));
            }
        }
        let mut clause_ids = HashSet::new();
        for c in &clauses {
            if !clause_ids.insert(c.id.as_str()) {
                problems.push(format!("{}: duplicate clause id", c.location()));
            }
            if !doc_ids.contains(c.document_id.as_str()) {
                problems.push(format!(
                    "{}: unknown document `{}`",
                    c.location(),
                    c.document_id
                ));
            }
            for (cat, gold) in &c.gold_rationales {
                if !gold.is_empty() && !c.is_unfair(*cat) {
                    problems.push(format!(
                        "{}: gold rationales given for `{cat}` but the clause is fair there",
                        c.location()
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Corpus { documents, clauses })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn clause(&self, id: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.id == id)
    }

    /// Reports every gold rationale id that the matching knowledge base lacks.
    ///
    /// Categories with no knowledge base in `kbs` are not checked.
    pub fn validate_rationales(&self, kbs: &[&KnowledgeBase]) -> Result<()> {
        let mut problems = Vec::new();
        for c in &self.clauses {
            for (cat, gold) in &c.gold_rationales {
                let Some(kb) = kbs.iter().find(|kb| kb.category() == *cat) else {
                    continue;
                };
                for id in gold {
                    if !kb.contains(id) {
                        problems.push(format!(
                            "{}: unknown `{cat}` rationale `{id}`",
                            c.location()
                        ));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Sub-corpus holding the given documents (in the given order) and their clauses.
    fn restricted_to(&self, docs: &[&Document]) -> Corpus {
        let keep: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        Corpus {
            documents: docs.iter().map(|d| (*d).clone()).collect(),
            clauses: self
                .clauses
                .iter()
                .filter(|c| keep.contains(c.document_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Concatenates corpora with disjoint documents.
    pub fn concat(parts: &[&Corpus]) -> Result<Corpus> {
        let documents = parts
            .iter()
            .flat_map(|p| p.documents.iter().cloned())
            .collect();
        let clauses = parts
            .iter()
            .flat_map(|p| p.clauses.iter().cloned())
            .collect();
        Corpus::new(documents, clauses)
    }
}

/// Parses a JSON Lines corpus. Blank lines are skipped.
///
/// Documents are declared by first use: each distinct `document_id` becomes
/// a document whose service name is the id itself.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let src = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_corpus(&src, path)
}

pub fn parse_corpus(src: &str, path: &Path) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut doc_seen = HashSet::new();
    let mut clauses = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in src.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let mut clause: Clause =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        clause.line = Some(lineno);
        if clause.id.is_empty() {
            return Err(parse_err("field `id` is empty".into()));
        }
        if clause.document_id.is_empty() {
            return Err(parse_err("field `document_id` is empty".into()));
        }
        if !ids.insert(clause.id.clone()) {
            return Err(parse_err(format!("duplicate clause id `{}`", clause.id)));
        }
        for (cat, gold) in &clause.gold_rationales {
            if !gold.is_empty() && !clause.is_unfair(*cat) {
                return Err(parse_err(format!(
                    "field `gold_rationales`: `{cat}` has rationales but the clause is fair there"
                )));
            }
        }
        if doc_seen.insert(clause.document_id.clone()) {
            documents.push(Document {
                id: clause.document_id.clone(),
                service: clause.document_id.clone(),
            });
        }
        clauses.push(clause);
    }
    Corpus::new(documents, clauses)
}

/// Serializes a corpus back to JSON Lines.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for c in corpus.clauses() {
        out.push_str(&serde_json::to_string(c).expect("clause serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CategoryStats {
    pub clauses: usize,
    pub documents: usize,
    pub mean_words: f64,
}

/// Per-category clause count, document count and mean token length of the
/// clauses labeled unfair for that category.
pub fn corpus_stats(corpus: &Corpus) -> BTreeMap<Category, CategoryStats> {
    Category::ALL
        .into_iter()
        .map(|cat| {
            let mut docs = HashSet::new();
            let mut clauses = 0usize;
            let mut words = 0usize;
            for c in corpus.clauses().iter().filter(|c| c.is_unfair(cat)) {
                clauses += 1;
                words += tokenize(&c.text).len();
                docs.insert(c.document_id.as_str());
            }
            let mean_words = if clauses == 0 {
                0.0
            } else {
                words as f64 / clauses as f64
            };
            (
                cat,
                CategoryStats {
                    clauses,
                    documents: docs.len(),
                    mean_words,
                },
            )
        })
        .collect()
}

/// Renders statistics as a fixed-width text table, one row per category.
pub fn render_stats_table(stats: &BTreeMap<Category, CategoryStats>) -> String {
    let mut out = format!(
        "{:<26}{:>10}{:>13}{:>27}\n",
        "Type of clause", "# clauses", "# documents", "average length (# words)"
    );
    for cat in Category::ALL {
        let s = stats.get(&cat).copied().unwrap_or_default();
        out.push_str(&format!(
            "{:<26}{:>10}{:>13}{:>27.2}\n",
            cat.display_name(),
            s.clauses,
            s.documents,
            s.mean_words
        ));
    }
    out
}

/// Document-level train/validation/test split.
///
/// Documents are shuffled with a seeded generator, then the first
/// `round(train_frac * n)` go to training, the next `round(val_frac * n)` to
/// validation and the rest to test. Every part must receive a document.
pub fn split(
    corpus: &Corpus,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to at most 1 (got {train_frac}, {val_frac})"
        )));
    }
    let mut docs: Vec<&Document> = corpus.documents().iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);
    let n = docs.len();
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "split of {n} documents gives {n_train}/{n_val}/{n_test}; every part needs a document"
        )));
    }
    Ok((
        corpus.restricted_to(&docs[..n_train]),
        corpus.restricted_to(&docs[n_train..n_train + n_val]),
        corpus.restricted_to(&docs[n_train + n_val..]),
    ))
}
