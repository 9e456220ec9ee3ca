//! Corpus ingestion primitives: tokenization, stemming, stopwords, documents
//! and queries.
//!
//! Tokens are maximal runs of alphanumeric characters. Offsets are UTF-8 byte
//! offsets into the original text, so `&raw[start..end]` always yields the
//! surface form; for ASCII text they coincide with character offsets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Byte spans of the maximal alphanumeric runs in `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// A token with its stem and position in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Original text slice, case preserved.
    pub surface: String,
    pub stem: String,
    pub char_start: usize,
    pub char_end: usize,
    pub is_stopword: bool,
}

/// Word stemmer. Implementations must be deterministic and idempotent.
pub trait Stemmer: Send + Sync {
    /// Stable identity recorded in corpus manifests.
    fn id(&self) -> &str;
    /// Stems a lowercase token.
    fn stem(&self, word: &str) -> String;
}

/// Light English suffix stripper.
///
/// Rules, applied repeatedly until none fires:
///
/// - `-ies` → `-y` (length > 4, not `-eies`/`-aies`)
/// - `-sses` → `-ss`; `-xes`, `-ches`, `-shes`, `-zzes` drop `-es`
/// - `-s` is dropped unless the word ends in `-ss`, `-us` or `-is` (length > 3)
/// - `-ing` and `-ed` are dropped when at least three letters including a
///   vowel remain (`-eed` is kept); a trailing doubled consonant other than
///   `l`, `s`, `z` is then undoubled (`running` → `run`)
///
/// Tokens containing anything other than ASCII lowercase letters are left
/// untouched. Every rule shortens the word, so iteration terminates and the
/// result is a fixpoint, which makes the stemmer idempotent.
#[derive(Debug, Clone, Copy, Default)]
pub struct LightStemmer;

impl LightStemmer {
    pub const ID: &'static str = "light-english-v1";
}

fn has_vowel(s: &str) -> bool {
    s.bytes()
        .any(|b| matches!(b, b'a' | b'e' | b'i' | b'o' | b'u' | b'y'))
}

fn undouble(s: &str) -> String {
    let b = s.as_bytes();
    let n = b.len();
    if n >= 2
        && b[n - 1] == b[n - 2]
        && !matches!(
            b[n - 1],
            b'a' | b'e' | b'i' | b'o' | b'u' | b'l' | b's' | b'z'
        )
    {
        s[..n - 1].to_string()
    } else {
        s.to_string()
    }
}

fn light_step(s: &str) -> Option<String> {
    let n = s.len();
    if n > 4 && s.ends_with("ies") && !s.ends_with("eies") && !s.ends_with("aies") {
        let mut out = s[..n - 3].to_string();
        out.push('y');
        return Some(out);
    }
    if n > 4 && s.ends_with("sses") {
        return Some(s[..n - 2].to_string());
    }
    if n > 4
        && ["xes", "ches", "shes", "zzes"]
            .iter()
            .any(|suf| s.ends_with(suf))
    {
        return Some(s[..n - 2].to_string());
    }
    if n > 3 && s.ends_with('s') && !s.ends_with("ss") && !s.ends_with("us") && !s.ends_with("is") {
        return Some(s[..n - 1].to_string());
    }
    if s.ends_with("ing") {
        let base = &s[..n - 3];
        if base.len() >= 3 && has_vowel(base) {
            return Some(undouble(base));
        }
    }
    if s.ends_with("ed") && !s.ends_with("eed") {
        let base = &s[..n - 2];
        if base.len() >= 3 && has_vowel(base) {
            return Some(undouble(base));
        }
    }
    None
}

impl Stemmer for LightStemmer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn stem(&self, word: &str) -> String {
        if word.is_empty() || !word.bytes().all(|b| b.is_ascii_lowercase()) {
            return word.to_string();
        }
        let mut current = word.to_string();
        while let Some(next) = light_step(&current) {
            current = next;
        }
        current
    }
}

/// Identity stemmer, useful when the input is already normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoStemmer;

impl Stemmer for NoStemmer {
    fn id(&self) -> &str {
        "none"
    }

    fn stem(&self, word: &str) -> String {
        word.to_string()
    }
}

/// Named set of lowercase stopwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    name: String,
    terms: BTreeSet<String>,
}

const INQUERY: &str = include_str!("../data/inquery.txt");

impl StopwordList {
    /// Builds a list; terms are lowercased. Fails on an empty list.
    pub fn new<I, S>(name: &str, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: BTreeSet<String> = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(Error::EmptyStopwordList(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            terms,
        })
    }

    /// Parses the one-term-per-line format; `#` starts a comment.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        Self::new(
            name,
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    /// The bundled 418-term INQUERY-style list.
    pub fn inquery() -> Self {
        Self::parse("inquery-418", INQUERY).expect("bundled list is non-empty")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Case-insensitive membership.
    pub fn contains(&self, word: &str) -> bool {
        if word.chars().any(|c| c.is_uppercase()) {
            self.terms.contains(&word.to_lowercase())
        } else {
            self.terms.contains(word)
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

/// Tokenizer + stemmer + stopword list, shared by documents and queries.
#[derive(Clone)]
pub struct Analyzer {
    stemmer: Arc<dyn Stemmer>,
    stopwords: StopwordList,
}

impl core::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Analyzer")
            .field("stemmer", &self.stemmer.id())
            .field("stopwords", &self.stopwords.name())
            .finish()
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::new(Arc::new(LightStemmer), StopwordList::inquery())
    }
}

impl Analyzer {
    pub fn new(stemmer: Arc<dyn Stemmer>, stopwords: StopwordList) -> Self {
        Self { stemmer, stopwords }
    }

    pub fn stemmer_id(&self) -> &str {
        self.stemmer.id()
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    /// Stems a single (already lowercase) word.
    pub fn stem(&self, word: &str) -> String {
        self.stemmer.stem(word)
    }

    /// Tokenizes `text`, keeping stopwords.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        token_spans(text)
            .into_iter()
            .map(|(start, end)| {
                let surface = &text[start..end];
                let lower = surface.to_lowercase();
                let is_stopword = self.stopwords.contains(&lower);
                Token {
                    surface: surface.to_string(),
                    stem: self.stemmer.stem(&lower),
                    char_start: start,
                    char_end: end,
                    is_stopword,
                }
            })
            .collect()
    }

    pub fn document(&self, doc_id: &str, raw_text: &str) -> Document {
        Document {
            doc_id: doc_id.to_string(),
            tokens: self.tokenize(raw_text),
            raw_text: raw_text.to_string(),
        }
    }

    /// Builds a query; stopwords are removed from its token sequence.
    pub fn query(&self, query_id: &str, text: &str) -> Query {
        let tokens: Vec<Token> = self
            .tokenize(text)
            .into_iter()
            .filter(|t| !t.is_stopword)
            .collect();
        let unique_term_count = tokens
            .iter()
            .map(|t| t.stem.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        Query {
            query_id: query_id.to_string(),
            text: text.to_string(),
            tokens,
            unique_term_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub tokens: Vec<Token>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    /// Query tokens with stopwords removed.
    pub tokens: Vec<Token>,
    pub unique_term_count: usize,
}

impl Query {
    pub fn stems(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.stem.as_str())
    }
}

/// Immutable, analyzed collection of documents.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    analyzer: Analyzer,
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
}

impl CorpusStore {
    /// Analyzes `(doc_id, text)` records in order. Duplicate ids are rejected.
    pub fn build<I, A, B>(analyzer: Analyzer, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut docs = Vec::new();
        let mut by_id = BTreeMap::new();
        for (id, text) in records {
            let id = id.as_ref();
            if by_id.insert(id.to_string(), docs.len()).is_some() {
                return Err(Error::DuplicateDocId(id.to_string()));
            }
            docs.push(analyzer.document(id, text.as_ref()));
        }
        Ok(Self {
            analyzer,
            docs,
            by_id,
        })
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    /// Ids of documents with no tokens. These are kept in the store.
    pub fn empty_documents(&self) -> impl Iterator<Item = &str> {
        self.docs
            .iter()
            .filter(|d| d.is_empty())
            .map(|d| d.doc_id.as_str())
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(Document::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn analyzer() -> Analyzer {
        Analyzer::default()
    }

    #[test]
    fn punctuation_splits_tokens() {
        let toks = analyzer().tokenize("Cat, cat!");
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].stem, "cat");
        assert_eq!(toks[1].stem, "cat");
        assert_eq!((toks[0].char_start, toks[0].char_end), (0, 3));
        assert_eq!((toks[1].char_start, toks[1].char_end), (5, 8));
        assert_eq!(toks[0].surface, "Cat");
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(analyzer().tokenize("").is_empty());
        assert!(token_spans("  ,. ").is_empty());
    }

    #[test]
    fn hyphen_and_digits() {
        // Hand-enumerated: "IR" [0,2), "2024" [3,7), "test" [8,12).
        let text = "IR-2024 test";
        let expected = [("ir", 0, 2), ("2024", 3, 7), ("test", 8, 12)];
        let toks = analyzer().tokenize(text);
        assert_eq!(toks.len(), expected.len());
        for (t, (stem, s, e)) in toks.iter().zip(expected) {
            assert_eq!(t.stem, stem);
            assert_eq!((t.char_start, t.char_end), (s, e));
        }
    }

    #[test]
    fn three_word_document() {
        let d = analyzer().document("d1", "The cat sat.");
        assert_eq!(d.len(), 3);
        let surfaces: Vec<&str> = d
            .tokens
            .iter()
            .map(|t| &d.raw_text[t.char_start..t.char_end])
            .collect();
        assert_eq!(surfaces, vec!["The", "cat", "sat"]);
        assert!(d.tokens[0].is_stopword);
        assert!(!d.tokens[1].is_stopword);
    }

    #[test]
    fn stemmer_reference_vectors() {
        let s = LightStemmer;
        let cases = [
            ("cats", "cat"),
            ("cat", "cat"),
            ("running", "run"),
            ("jumped", "jump"),
            ("flies", "fly"),
            ("classes", "class"),
            ("boxes", "box"),
            ("matches", "match"),
            ("analysis", "analysis"),
            ("bus", "bus"),
            ("sing", "sing"),
            ("speed", "speed"),
            ("falling", "fall"),
            ("2024", "2024"),
            ("ties", "tie"),
        ];
        for (w, want) in cases {
            assert_eq!(s.stem(w), want, "stem({w})");
        }
    }

    #[test]
    fn bundled_stopwords() {
        let sw = StopwordList::inquery();
        assert_eq!(sw.len(), 418);
        assert!(sw.contains("the"));
        assert!(sw.contains("The"));
        assert!(!sw.contains("cat"));
    }

    #[test]
    fn stopword_file_comments() {
        let sw = StopwordList::parse("x", "# header\nthe\nOf # trailing\n\n").unwrap();
        assert_eq!(sw.len(), 2);
        assert!(sw.contains("of"));
        assert!(matches!(
            StopwordList::parse("e", "# nothing\n"),
            Err(Error::EmptyStopwordList(_))
        ));
    }

    #[test]
    fn query_drops_stopwords() {
        let q = analyzer().query("q1", "the history of cats and the cat");
        let stems: Vec<&str> = q.stems().collect();
        assert_eq!(stems, vec!["history", "cat", "cat"]);
        assert_eq!(q.unique_term_count, 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = CorpusStore::build(analyzer(), [("d1", "a"), ("d1", "b")]).unwrap_err();
        assert_eq!(err, Error::DuplicateDocId("d1".into()));
    }

    #[test]
    fn empty_documents_are_kept() {
        let store = CorpusStore::build(analyzer(), [("d1", "a b"), ("d2", "")]).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.empty_documents().collect::<Vec<_>>(), vec!["d2"]);
        assert_eq!(store.get("d2").unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn stem_is_idempotent_and_nonempty(w in "[a-z]{1,14}") {
            let s = LightStemmer;
            let once = s.stem(&w);
            prop_assert!(!once.is_empty());
            prop_assert_eq!(s.stem(&once), once);
        }

        #[test]
        fn offsets_round_trip(text in "[a-zA-Z0-9 ,.!?'\\-é]{0,60}") {
            let toks = analyzer().tokenize(&text);
            let mut last_end = 0;
            for t in &toks {
                prop_assert!(t.char_start < t.char_end);
                prop_assert!(t.char_start >= last_end);
                prop_assert_eq!(&text[t.char_start..t.char_end], t.surface.as_str());
                last_end = t.char_end;
            }
            prop_assert_eq!(toks, analyzer().tokenize(&text));
        }
    }
}
