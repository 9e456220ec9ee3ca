//! Positional inverted index and language-model scoring.
//!
//! Similarity between a text `x` and a scorable unit `y` (document, passage or
//! positional pseudo-document) is `exp(-CE(θx ‖ θy))`, where `θx` is the
//! unsmoothed maximum-likelihood model of `x` and
//! `θy(w) = (c(w, y) + μ·p_C(w)) / (|y| + μ)` is Dirichlet smoothed against the
//! collection. Natural logarithms are used throughout.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::list::RankedList;
use crate::math::{exp, floored_ln, ln};
use crate::text::{CorpusStore, Query};

pub type TermId = u32;

/// Width of the unordered-window (biterm) matches used by SDM.
pub const UNORDERED_WINDOW: u32 = 8;

/// Dirichlet smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmParams {
    pub mu: f64,
}

impl LmParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be finite and >= 0, got {mu}"
            )));
        }
        Ok(Self { mu })
    }
}

impl Default for LmParams {
    fn default() -> Self {
        Self { mu: 1000.0 }
    }
}

/// Interpolation weights of the sequential dependence model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdmWeights {
    pub unigram: f64,
    pub ordered: f64,
    pub unordered: f64,
}

impl SdmWeights {
    pub fn new(unigram: f64, ordered: f64, unordered: f64) -> Result<Self> {
        let ok = [unigram, ordered, unordered]
            .iter()
            .all(|w| (0.0..=1.0).contains(w))
            && (unigram + ordered + unordered - 1.0).abs() < 1e-9;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "SDM weights must lie in [0,1] and sum to 1, got ({unigram}, {ordered}, {unordered})"
            )));
        }
        Ok(Self {
            unigram,
            ordered,
            unordered,
        })
    }

    /// All weight triples on the simplex with `1/steps` spacing.
    pub fn simplex_grid(steps: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let n = steps.max(1);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                out.push(Self {
                    unigram: i as f64 / n as f64,
                    ordered: j as f64 / n as f64,
                    unordered: k as f64 / n as f64,
                });
            }
        }
        out
    }

    pub fn score(&self, c: &SdmComponents) -> f64 {
        self.unigram * c.unigram + self.ordered * c.ordered + self.unordered * c.unordered
    }
}

/// A unit that can be scored against a query: term counts plus a length.
pub trait TermCounts {
    fn count(&self, term: TermId) -> f64;
    fn length(&self) -> f64;
}

/// Sparse term-frequency vector of a token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermBag {
    counts: Vec<(TermId, u32)>,
    len: usize,
}

impl TermBag {
    pub fn from_terms(terms: &[TermId]) -> Self {
        let mut sorted = terms.to_vec();
        sorted.sort_unstable();
        let mut counts: Vec<(TermId, u32)> = Vec::new();
        for t in sorted {
            match counts.last_mut() {
                Some((last, c)) if *last == t => *c += 1,
                _ => counts.push((t, 1)),
            }
        }
        Self {
            counts,
            len: terms.len(),
        }
    }

    pub fn counts(&self) -> &[(TermId, u32)] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, term: TermId) -> u32 {
        self.counts
            .binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    /// Entropy of the MLE term distribution, in nats. Zero for an empty bag.
    pub fn entropy(&self) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        let n = self.len as f64;
        -self
            .counts
            .iter()
            .map(|&(_, c)| {
                let p = c as f64 / n;
                p * ln(p)
            })
            .sum::<f64>()
    }
}

impl TermCounts for TermBag {
    fn count(&self, term: TermId) -> f64 {
        self.get(term) as f64
    }

    fn length(&self) -> f64 {
        self.len as f64
    }
}

/// Positions of one term in one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub positions: Vec<u32>,
}

/// Positional inverted index over a corpus.
///
/// Term ids follow lexicographic stem order and document ids follow corpus
/// order; neither affects any score or ranking.
#[derive(Debug, Clone)]
pub struct PositionalIndex {
    stemmer_id: String,
    stopword_id: String,
    vocab: BTreeMap<String, TermId>,
    terms: Vec<String>,
    postings: Vec<Vec<Posting>>,
    collection_counts: Vec<u64>,
    collection_length: u64,
    doc_ids: Vec<String>,
    doc_pos: BTreeMap<String, u32>,
    doc_terms: Vec<Vec<TermId>>,
    doc_bags: Vec<TermBag>,
}

impl PositionalIndex {
    pub fn build(store: &CorpusStore) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab_set: BTreeSet<&str> = store
            .docs()
            .iter()
            .flat_map(|d| d.tokens.iter().map(|t| t.stem.as_str()))
            .collect();
        let vocab: BTreeMap<String, TermId> = vocab_set
            .iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), i as TermId))
            .collect();
        let doc_terms: Vec<Vec<TermId>> = store
            .docs()
            .iter()
            .map(|d| d.tokens.iter().map(|t| vocab[t.stem.as_str()]).collect())
            .collect();
        let doc_ids = store.docs().iter().map(|d| d.doc_id.clone()).collect();
        Self::assemble(
            store.analyzer().stemmer_id().to_string(),
            store.analyzer().stopwords().name().to_string(),
            vocab,
            doc_ids,
            doc_terms,
        )
    }

    fn assemble(
        stemmer_id: String,
        stopword_id: String,
        vocab: BTreeMap<String, TermId>,
        doc_ids: Vec<String>,
        doc_terms: Vec<Vec<TermId>>,
    ) -> Result<Self> {
        let v = vocab.len();
        let mut terms = alloc::vec![String::new(); v];
        for (s, &id) in &vocab {
            terms[id as usize] = s.clone();
        }
        let mut postings: Vec<Vec<Posting>> = alloc::vec![Vec::new(); v];
        let mut collection_counts = alloc::vec![0u64; v];
        for (d, seq) in doc_terms.iter().enumerate() {
            for (pos, &t) in seq.iter().enumerate() {
                collection_counts[t as usize] += 1;
                let list = &mut postings[t as usize];
                match list.last_mut() {
                    Some(p) if p.doc == d as u32 => p.positions.push(pos as u32),
                    _ => list.push(Posting {
                        doc: d as u32,
                        positions: alloc::vec![pos as u32],
                    }),
                }
            }
        }
        let mut doc_pos = BTreeMap::new();
        for (i, id) in doc_ids.iter().enumerate() {
            if doc_pos.insert(id.clone(), i as u32).is_some() {
                return Err(Error::DuplicateDocId(id.clone()));
            }
        }
        let collection_length = doc_terms.iter().map(|s| s.len() as u64).sum();
        let doc_bags = doc_terms.iter().map(|s| TermBag::from_terms(s)).collect();
        Ok(Self {
            stemmer_id,
            stopword_id,
            vocab,
            terms,
            postings,
            collection_counts,
            collection_length,
            doc_ids,
            doc_pos,
            doc_terms,
            doc_bags,
        })
    }

    /// Rebuilds an index from persisted postings, validating that every
    /// document position is covered exactly once.
    pub fn from_postings(
        stemmer_id: &str,
        stopword_id: &str,
        docs: Vec<(String, usize)>,
        postings: Vec<(String, Vec<Posting>)>,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = BTreeMap::new();
        let mut slots: Vec<Vec<Option<TermId>>> =
            docs.iter().map(|(_, n)| alloc::vec![None; *n]).collect();
        let mut names: Vec<&String> = postings.iter().map(|(s, _)| s).collect();
        names.sort();
        names.dedup();
        if names.len() != postings.len() {
            return Err(Error::MalformedIndex("repeated term in postings".into()));
        }
        for (i, s) in names.iter().enumerate() {
            vocab.insert((*s).clone(), i as TermId);
        }
        for (stem, list) in &postings {
            let t = vocab[stem];
            for p in list {
                let doc = slots.get_mut(p.doc as usize).ok_or_else(|| {
                    Error::MalformedIndex(format!(
                        "posting for `{stem}` names unknown doc {}",
                        p.doc
                    ))
                })?;
                for &pos in &p.positions {
                    match doc.get_mut(pos as usize) {
                        Some(slot @ None) => *slot = Some(t),
                        _ => {
                            return Err(Error::MalformedIndex(format!(
                                "position {pos} of doc {} is out of range or assigned twice",
                                p.doc
                            )))
                        }
                    }
                }
            }
        }
        let mut doc_terms = Vec::with_capacity(slots.len());
        for (d, seq) in slots.into_iter().enumerate() {
            let seq: Option<Vec<TermId>> = seq.into_iter().collect();
            doc_terms.push(seq.ok_or_else(|| {
                Error::MalformedIndex(format!("doc {d} has unassigned positions"))
            })?);
        }
        let doc_ids = docs.into_iter().map(|(id, _)| id).collect();
        Self::assemble(
            stemmer_id.to_string(),
            stopword_id.to_string(),
            vocab,
            doc_ids,
            doc_terms,
        )
    }

    pub fn stemmer_id(&self) -> &str {
        &self.stemmer_id
    }

    pub fn stopword_id(&self) -> &str {
        &self.stopword_id
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_id(&self, doc: usize) -> &str {
        &self.doc_ids[doc]
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_pos.get(doc_id).map(|&d| d as usize)
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_terms[doc].len()
    }

    pub fn doc_terms(&self, doc: usize) -> &[TermId] {
        &self.doc_terms[doc]
    }

    pub fn doc_bag(&self, doc: usize) -> &TermBag {
        &self.doc_bags[doc]
    }

    pub fn term_id(&self, stem: &str) -> Option<TermId> {
        self.vocab.get(stem).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn collection_length(&self) -> u64 {
        self.collection_length
    }

    /// Collection frequency.
    pub fn cf(&self, term: TermId) -> u64 {
        self.collection_counts[term as usize]
    }

    /// Document frequency.
    pub fn df(&self, term: TermId) -> usize {
        self.postings[term as usize].len()
    }

    pub fn postings(&self, term: TermId) -> &[Posting] {
        &self.postings[term as usize]
    }

    /// Every `(stem, postings)` pair in lexicographic stem order.
    pub fn iter_postings(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.terms
            .iter()
            .zip(&self.postings)
            .map(|(s, p)| (s.as_str(), p.as_slice()))
    }

    /// Positions of `term` in document `doc` (empty if absent).
    pub fn positions(&self, term: TermId, doc: usize) -> &[u32] {
        let list = &self.postings[term as usize];
        match list.binary_search_by_key(&(doc as u32), |p| p.doc) {
            Ok(i) => &list[i].positions,
            Err(_) => &[],
        }
    }

    /// Collection language model `p_C(w)`.
    pub fn p_collection(&self, term: TermId) -> f64 {
        if self.collection_length == 0 {
            0.0
        } else {
            self.cf(term) as f64 / self.collection_length as f64
        }
    }

    /// Builds the query model of `query`; out-of-vocabulary stems are dropped.
    pub fn query_model(&self, query: &Query) -> QueryModel {
        QueryModel::from_stems(query.stems(), self)
    }
}

/// Unsmoothed maximum-likelihood model of a short text (usually a query),
/// restricted to terms present in the collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryModel {
    sequence: Vec<TermId>,
    weights: Vec<(TermId, f64)>,
    dropped: usize,
}

impl QueryModel {
    pub fn from_stems<'a, I: IntoIterator<Item = &'a str>>(
        stems: I,
        index: &PositionalIndex,
    ) -> Self {
        let mut sequence = Vec::new();
        let mut dropped = 0;
        for s in stems {
            match index.term_id(s).filter(|&t| index.cf(t) > 0) {
                Some(t) => sequence.push(t),
                None => dropped += 1,
            }
        }
        let mut m = Self::from_terms(&sequence);
        m.dropped = dropped;
        m
    }

    pub fn from_terms(sequence: &[TermId]) -> Self {
        let bag = TermBag::from_terms(sequence);
        let n = sequence.len() as f64;
        let weights = bag
            .counts()
            .iter()
            .map(|&(t, c)| (t, c as f64 / n))
            .collect();
        Self {
            sequence: sequence.to_vec(),
            weights,
            dropped: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// In-vocabulary terms in query order.
    pub fn sequence(&self) -> &[TermId] {
        &self.sequence
    }

    /// Distinct terms with their MLE probability.
    pub fn weights(&self) -> &[(TermId, f64)] {
        &self.weights
    }

    /// Number of query tokens dropped as out-of-vocabulary.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

/// `exp(-CE(θx ‖ θy^Dir))`, in `[0, 1]`.
///
/// An empty query model scores 0. A zero smoothed probability (only possible
/// with `μ = 0`) also yields 0.
pub fn lm_similarity<Y: TermCounts + ?Sized>(
    x: &QueryModel,
    y: &Y,
    index: &PositionalIndex,
    params: LmParams,
) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let denom = y.length() + params.mu;
    if denom <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(t, p) in x.weights() {
        let theta = (y.count(t) + params.mu * index.p_collection(t)) / denom;
        if theta <= 0.0 {
            return 0.0;
        }
        acc += p * ln(theta);
    }
    exp(acc)
}

/// Documents containing any query term, scored by [`lm_similarity`], top `k`.
pub fn retrieve_lm(
    query: &Query,
    index: &PositionalIndex,
    params: LmParams,
    k: usize,
) -> RankedList {
    retrieve_model(&query.query_id, &index.query_model(query), index, params, k)
}

/// [`retrieve_lm`] for a pre-built query model.
pub fn retrieve_model(
    query_id: &str,
    model: &QueryModel,
    index: &PositionalIndex,
    params: LmParams,
    k: usize,
) -> RankedList {
    let mut candidates: BTreeSet<u32> = BTreeSet::new();
    for &(t, _) in model.weights() {
        candidates.extend(index.postings(t).iter().map(|p| p.doc));
    }
    let scored = candidates.into_iter().map(|d| {
        let d = d as usize;
        (
            index.doc_id(d).to_string(),
            lm_similarity(model, index.doc_bag(d), index, params),
        )
    });
    RankedList::from_scores(query_id, scored).truncated(k)
}

/// Number of positions `i` with `a` at `i` and `b` at `i + 1`.
pub fn ordered_count(pos_a: &[u32], pos_b: &[u32]) -> u32 {
    pos_a
        .iter()
        .filter(|&&i| pos_b.binary_search(&(i + 1)).is_ok())
        .count() as u32
}

/// Number of position pairs `(i, j)`, `i != j`, with `a` at `i`, `b` at `j`
/// and `|i - j| < window` (both inside a span of `window` tokens). When both
/// lists are the same term each unordered pair is counted once.
pub fn unordered_count(pos_a: &[u32], pos_b: &[u32], window: u32) -> u32 {
    if window == 0 {
        return 0;
    }
    let reach = window - 1;
    let mut total = 0u32;
    for &i in pos_a {
        let lo = i.saturating_sub(reach);
        let hi = i + reach;
        let start = pos_b.partition_point(|&p| p < lo);
        let end = pos_b.partition_point(|&p| p <= hi);
        let mut n = (end - start) as u32;
        if pos_b[start..end].binary_search(&i).is_ok() {
            n -= 1;
        }
        total += n;
    }
    if core::ptr::eq(pos_a, pos_b) || pos_a == pos_b {
        total / 2
    } else {
        total
    }
}

/// The three SDM feature values of one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdmComponents {
    pub unigram: f64,
    pub ordered: f64,
    pub unordered: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PairStats {
    a: TermId,
    b: TermId,
    ordered_cf: u64,
    unordered_cf: u64,
}

/// Per-query SDM state: collection-level pair counts for the query's
/// adjacent term pairs, gathered once when the query is prepared.
#[derive(Debug, Clone, PartialEq)]
pub struct SdmQuery {
    terms: Vec<TermId>,
    pairs: Vec<PairStats>,
}

impl SdmQuery {
    pub fn new(model: &QueryModel, index: &PositionalIndex) -> Self {
        let terms = model.sequence().to_vec();
        let pairs = terms
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (mut ordered_cf, mut unordered_cf) = (0u64, 0u64);
                let (pa, pb) = (index.postings(a), index.postings(b));
                let (mut i, mut j) = (0, 0);
                while i < pa.len() && j < pb.len() {
                    match pa[i].doc.cmp(&pb[j].doc) {
                        core::cmp::Ordering::Less => i += 1,
                        core::cmp::Ordering::Greater => j += 1,
                        core::cmp::Ordering::Equal => {
                            ordered_cf += ordered_count(&pa[i].positions, &pb[j].positions) as u64;
                            unordered_cf += unordered_count(
                                &pa[i].positions,
                                &pb[j].positions,
                                UNORDERED_WINDOW,
                            ) as u64;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                PairStats {
                    a,
                    b,
                    ordered_cf,
                    unordered_cf,
                }
            })
            .collect();
        Self { terms, pairs }
    }

    /// Unigram, ordered-bigram and unordered-window log-likelihoods of the
    /// document. Each log term is floored at [`crate::math::LOG_FLOOR`].
    /// Single-term queries have zero bigram components.
    pub fn components(
        &self,
        doc: usize,
        index: &PositionalIndex,
        params: LmParams,
    ) -> SdmComponents {
        let len = index.doc_len(doc) as f64;
        let denom = len + params.mu;
        let c_len = index.collection_length() as f64;
        let smoothed = |count: f64, cf: f64| -> f64 {
            if denom <= 0.0 || c_len <= 0.0 {
                return floored_ln(0.0);
            }
            floored_ln((count + params.mu * cf / c_len) / denom)
        };
        let bag = index.doc_bag(doc);
        let unigram = self
            .terms
            .iter()
            .map(|&t| smoothed(bag.count(t), index.cf(t) as f64))
            .sum();
        let mut ordered = 0.0;
        let mut unordered = 0.0;
        for p in &self.pairs {
            let (pa, pb) = (index.positions(p.a, doc), index.positions(p.b, doc));
            ordered += smoothed(ordered_count(pa, pb) as f64, p.ordered_cf as f64);
            unordered += smoothed(
                unordered_count(pa, pb, UNORDERED_WINDOW) as f64,
                p.unordered_cf as f64,
            );
        }
        SdmComponents {
            unigram,
            ordered,
            unordered,
        }
    }
}
