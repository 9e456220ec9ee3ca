//! Synthetic collection in which document relevance is decided by a single
//! passage.
//!
//! Every query has three unique terms. Relevant documents and distractors
//! both hold three windows of background text, and both keep one window free
//! of query terms. A relevant document laces one window with the query terms
//! and contains the query once as a contiguous phrase; only that window is
//! judged relevant. A distractor laces one window with the same number of
//! occurrences and both query bigrams, but never the full phrase, and spills
//! a few more occurrences into a second window. Term statistics of documents
//! and of their best passages therefore barely separate the two kinds; the
//! phrase in the best passage does. The remaining documents are background
//! text with an occasional stray query term.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Paths};
use crate::error::Result;
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub docs: usize,
    pub queries: usize,
    pub relevant_per_query: usize,
    pub distractors_per_query: usize,
    /// Tokens per window; relevant documents and distractors have three.
    pub passage_len: usize,
    pub vocabulary: usize,
    /// Occurrences of each query term in the laced window of a relevant
    /// document or distractor.
    pub mentions: (usize, usize),
    /// Further occurrences of each query term in a distractor's second window.
    pub spill: (usize, usize),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            docs: 500,
            queries: 30,
            relevant_per_query: 8,
            distractors_per_query: 8,
            passage_len: 300,
            vocabulary: 4000,
            mentions: (2, 4),
            spill: (1, 2),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub corpus: Vec<(String, String)>,
    pub topics: Vec<(String, String)>,
    /// `(query, doc, grade)`.
    pub doc_qrels: Vec<(String, String, u8)>,
    /// `(query, doc, start, end)` byte ranges of the relevant windows.
    pub psg_qrels: Vec<(String, String, usize, usize)>,
}

const STOPWORDS: [&str; 12] = [
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "was", "on",
];

/// Pronounceable pseudo-word for `n`, ending in a consonant the stemmer
/// leaves alone.
fn word(n: usize) -> String {
    const C: &[u8] = b"bdfgkmnprtvz";
    const V: &[u8] = b"aiou";
    let mut s = String::new();
    let mut x = n;
    loop {
        s.push(C[x % C.len()] as char);
        x /= C.len();
        s.push(V[x % V.len()] as char);
        x /= V.len();
        if x == 0 {
            break;
        }
    }
    s.push('k');
    s
}

enum Kind {
    Relevant { query: usize, window: usize },
    Distractor { query: usize },
    Background,
}

struct Generator {
    rng: ChaCha8Rng,
    zipf: WeightedIndex<f64>,
    spec: SynthSpec,
}

impl Generator {
    fn background(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                if self.rng.random_bool(0.3) {
                    STOPWORDS[self.rng.random_range(0..STOPWORDS.len())].to_string()
                } else {
                    word(self.spec.queries * 3 + self.zipf.sample(&mut self.rng))
                }
            })
            .collect()
    }

    /// Overwrites `count` distinct random positions of `tokens[range]` with `term`.
    fn lace(
        &mut self,
        tokens: &mut [String],
        range: std::ops::Range<usize>,
        term: &str,
        count: usize,
    ) {
        let query_words = self.spec.queries * 3;
        let taken = |t: &str| (0..query_words).any(|n| word(n) == t);
        let mut slots: Vec<usize> = range.filter(|&i| !taken(&tokens[i])).collect();
        slots.shuffle(&mut self.rng);
        for &i in slots.iter().take(count) {
            tokens[i] = term.to_string();
        }
    }

    fn lace_all(
        &mut self,
        tokens: &mut [String],
        range: std::ops::Range<usize>,
        terms: &[String],
        count: (usize, usize),
    ) {
        for term in terms {
            let n = self.rng.random_range(count.0..=count.1);
            self.lace(tokens, range.clone(), term, n);
        }
    }

    /// Writes `terms` at consecutive positions inside `range`, away from the
    /// edges so that no neighbouring query term extends the run.
    fn phrase(&mut self, tokens: &mut [String], range: std::ops::Range<usize>, terms: &[String]) {
        let start = self
            .rng
            .random_range(range.start + 1..range.end - terms.len());
        for (k, term) in terms.iter().enumerate() {
            tokens[start + k] = term.clone();
        }
        let query_words = self.spec.queries * 3;
        for i in [start - 1, start + terms.len()] {
            if (0..query_words).any(|n| word(n) == tokens[i]) {
                tokens[i] = word(query_words + self.zipf.sample(&mut self.rng));
            }
        }
    }

    fn query_terms(q: usize) -> [String; 3] {
        [word(q * 3), word(q * 3 + 1), word(q * 3 + 2)]
    }
}

/// Joins tokens with spaces, ending a sentence every 12 tokens. Returns the
/// text and each token's byte range.
fn render(tokens: &[String]) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        spans.push((text.len(), text.len() + t.len()));
        text.push_str(t);
        if i % 12 == 11 || i + 1 == tokens.len() {
            text.push('.');
        }
    }
    (text, spans)
}

pub fn generate(spec: &SynthSpec) -> SynthData {
    let weights: Vec<f64> = (0..spec.vocabulary)
        .map(|r| 1.0 / (r as f64 + 2.0))
        .collect();
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        zipf: WeightedIndex::new(&weights).expect("positive weights"),
        spec: spec.clone(),
    };
    let mut kinds = Vec::new();
    for q in 0..spec.queries {
        kinds.extend((0..spec.relevant_per_query).map(|_| Kind::Relevant {
            query: q,
            window: 0,
        }));
        kinds.extend((0..spec.distractors_per_query).map(|_| Kind::Distractor { query: q }));
    }
    while kinds.len() < spec.docs {
        kinds.push(Kind::Background);
    }
    kinds.shuffle(&mut g.rng);

    let l = spec.passage_len;
    let mut data = SynthData {
        corpus: Vec::new(),
        topics: Vec::new(),
        doc_qrels: Vec::new(),
        psg_qrels: Vec::new(),
    };
    let width = kinds.len().to_string().len();
    for (i, kind) in kinds.iter_mut().enumerate() {
        let id = format!("D{:0width$}", i + 1);
        let tokens = match kind {
            Kind::Relevant { query, window } => {
                let mut t = g.background(3 * l);
                *window = g.rng.random_range(0..3);
                let range = *window * l..(*window + 1) * l;
                let terms = Generator::query_terms(*query);
                g.lace_all(&mut t, range.clone(), &terms, spec.mentions);
                g.phrase(&mut t, range, &terms);
                t
            }
            Kind::Distractor { query } => {
                let mut t = g.background(3 * l);
                let clean = g.rng.random_range(0..3);
                let used: Vec<usize> = (0..3).filter(|&w| w != clean).collect();
                let (main, second) = if g.rng.random_bool(0.5) {
                    (used[0], used[1])
                } else {
                    (used[1], used[0])
                };
                let terms = Generator::query_terms(*query);
                g.lace_all(&mut t, main * l..(main + 1) * l, &terms, spec.mentions);
                g.phrase(&mut t, main * l..(main + 1) * l, &terms[..2]);
                g.phrase(&mut t, main * l..(main + 1) * l, &terms[1..]);
                g.lace_all(&mut t, second * l..(second + 1) * l, &terms, spec.spill);
                t
            }
            Kind::Background => {
                let n = g.rng.random_range(l..=3 * l);
                let mut t = g.background(n);
                if g.rng.random_bool(0.5) {
                    let term = word(g.rng.random_range(0..spec.queries * 3));
                    g.lace(&mut t, 0..n, &term, 1);
                }
                t
            }
        };
        let (text, spans) = render(&tokens);
        match kind {
            Kind::Relevant { query, window } => {
                let q = format!("Q{:02}", *query + 1);
                let (start, end) = (spans[*window * l].0, spans[(*window + 1) * l - 1].1);
                data.doc_qrels.push((q.clone(), id.clone(), 1));
                data.psg_qrels.push((q, id.clone(), start, end));
            }
            Kind::Distractor { query } => {
                data.doc_qrels
                    .push((format!("Q{:02}", *query + 1), id.clone(), 0))
            }
            Kind::Background => {}
        }
        data.corpus.push((id, text));
    }
    data.topics = (0..spec.queries)
        .map(|q| {
            (
                format!("Q{:02}", q + 1),
                Generator::query_terms(q).join(" "),
            )
        })
        .collect();
    data.doc_qrels.sort();
    data.psg_qrels.sort();
    data
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TOPICS_FILE: &str = "topics.tsv";
pub const QRELS_FILE: &str = "qrels.txt";
pub const PSG_QRELS_FILE: &str = "psg_qrels.tsv";
pub const CONFIG_FILE: &str = "experiment.toml";

/// A configuration pointing at the files [`write`] produces.
pub fn default_config(methods: &[&str], seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(&format!(
        "methods = []\n[paths]\ncorpus = \"{CORPUS_FILE}\"\ntopics = \"{TOPICS_FILE}\"\ndoc_qrels = \"{QRELS_FILE}\"\n"
    ))
    .expect("static config");
    c.methods = methods.iter().map(|m| m.to_string()).collect();
    c.seed = seed;
    c.paths = Paths {
        corpus_format: Some("jsonl".into()),
        psg_qrels: Some(PathBuf::from(PSG_QRELS_FILE)),
        ..c.paths
    };
    c
}

/// Writes the collection files and an experiment config into `dir`.
pub fn write(dir: &Path, data: &SynthData, config: &ExperimentConfig) -> Result<()> {
    let mut corpus = String::new();
    for (id, text) in &data.corpus {
        let rec = serde_json::json!({ "id": id, "text": text });
        writeln!(corpus, "{rec}").unwrap();
    }
    io::write_text(&dir.join(CORPUS_FILE), &corpus)?;
    let topics: String = data
        .topics
        .iter()
        .map(|(q, t)| format!("{q}\t{t}\n"))
        .collect();
    io::write_text(&dir.join(TOPICS_FILE), &topics)?;
    let qrels: String = data
        .doc_qrels
        .iter()
        .map(|(q, d, g)| format!("{q} 0 {d} {g}\n"))
        .collect();
    io::write_text(&dir.join(QRELS_FILE), &qrels)?;
    let psg: String = data
        .psg_qrels
        .iter()
        .map(|(q, d, s, e)| format!("{q}\t{d}\t{s}\t{e}\n"))
        .collect();
    io::write_text(&dir.join(PSG_QRELS_FILE), &psg)?;
    io::write_text(&dir.join(CONFIG_FILE), &config.to_toml())
}
