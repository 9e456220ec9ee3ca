//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! Oracles here work from plain token strings and never touch the index, so
//! they share no code with the implementation beyond tokenization.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use psgrank::config::ExperimentConfig;
use psgrank::experiment::run_experiment;
use psgrank::formats::write_model;
use psgrank::synth::{self, SynthSpec};
use psgrank_core::eval::{
    average_precision, interpolated_precision, precision_at, JudgmentMode, JudgmentSet,
};
use psgrank_core::features::{
    doc_feature_vectors, Embeddings, EntityAnnotations, EsaSpace, FeatureSchema, FeatureVector,
    PassageContext, SemanticResources, SynonymTable,
};
use psgrank_core::index::{lm_similarity, LmParams, PositionalIndex, TermBag};
use psgrank_core::ltr::{
    bucket_grade, mean_ndcg, ndcg_at_k, pairwise_errors, train_coordinate_ascent, train_pairwise,
    CoordinateAscentParams, GradedExample, PairwiseParams, QueryGroup,
};
use psgrank_core::passage::{Segmentation, SegmentedCorpus};
use psgrank_core::rank::{
    jpds_composition, positional_sims, rank_plm, rank_qsf, rerank_fpd, rerank_rrf, rr_score,
    smpd_features, FusionParams, PassageRanking, PlmParams,
};
use psgrank_core::text::{Analyzer, CorpusStore, NoStemmer, Query, StopwordList};
use psgrank_core::RankedList;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs one check and reports it on stderr directly, which the test
/// harness does not capture.
fn criterion(label: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance: {label}: {verdict}");
    if let Err(e) = result {
        resume_unwind(e);
    }
}

/// Relative closeness with a tiny absolute floor for values that should be 0.
fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) || (a - b).abs() < 1e-15
}

fn assert_close(what: &str, got: f64, want: f64, rel: f64) {
    assert!(
        close(got, want, rel),
        "{what}: got {got:e}, oracle {want:e}"
    );
}

// ---------------------------------------------------------------------------
// Fixture corpus

const STOPWORDS: [&str; 4] = ["the", "of", "a", "and"];
const VOCAB: [&str; 15] = [
    "apple", "banana", "cherry", "date", "elder", "fig", "grape", "kiwi", "lemon", "mango", "the",
    "of", "a", "and", "The",
];
const MU: f64 = 50.0;
const WINDOW: usize = 4;

struct Fixture {
    store: CorpusStore,
    index: PositionalIndex,
    segmented: SegmentedCorpus,
}

/// Oracle view of a token: stem, surface and stopword flag.
#[derive(Clone)]
struct Tok {
    stem: String,
    surface: String,
    stop: bool,
}

fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut records: Vec<(String, String)> = (1..=40)
        .map(|i| {
            let n = rng.random_range(3..24);
            let words: Vec<&str> = (0..n)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
                .collect();
            (format!("d{i:02}"), words.join(" "))
        })
        .collect();
    records.push(("d41".into(), String::new()));
    let analyzer = Analyzer::new(
        Arc::new(NoStemmer),
        StopwordList::new("mini", STOPWORDS).unwrap(),
    );
    let store = CorpusStore::build(analyzer, records).unwrap();
    let index = PositionalIndex::build(&store).unwrap();
    let segmented = SegmentedCorpus::new(&store, Segmentation::Window(WINDOW));
    Fixture {
        store,
        index,
        segmented,
    }
}

impl Fixture {
    fn toks(&self, doc: usize) -> Vec<Tok> {
        self.store.docs()[doc]
            .tokens
            .iter()
            .map(|t| Tok {
                stem: t.stem.clone(),
                surface: t.surface.clone(),
                stop: t.is_stopword,
            })
            .collect()
    }

    fn stems(&self, doc: usize) -> Vec<String> {
        self.toks(doc).into_iter().map(|t| t.stem).collect()
    }

    fn all_stems(&self) -> Vec<Vec<String>> {
        (0..self.store.len()).map(|d| self.stems(d)).collect()
    }

    fn position(&self, id: &str) -> usize {
        self.store.position(id).unwrap()
    }

    /// Passages as token ranges, windows of `WINDOW`; an empty document has
    /// one empty passage.
    fn chunks(&self, doc: usize) -> Vec<(usize, usize)> {
        let n = self.store.docs()[doc].tokens.len();
        if n == 0 {
            return vec![(0, 0)];
        }
        (0..n)
            .step_by(WINDOW)
            .map(|s| (s, (s + WINDOW).min(n)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Brute-force formula oracles

struct Collection<'a> {
    docs: &'a [Vec<String>],
}

impl Collection<'_> {
    fn len(&self) -> f64 {
        self.docs.iter().map(Vec::len).sum::<usize>() as f64
    }

    fn cf(&self, w: &str) -> f64 {
        self.docs.iter().flatten().filter(|t| *t == w).count() as f64
    }

    fn p(&self, w: &str) -> f64 {
        self.cf(w) / self.len()
    }

    /// Query stems that occur in the collection, in order.
    fn in_vocab(&self, stems: &[String]) -> Vec<String> {
        stems.iter().filter(|s| self.cf(s) > 0.0).cloned().collect()
    }

    /// `exp(Σ_w p_x(w) ln θ_y(w))` over the distinct words of `x`.
    fn sim(&self, x: &[String], y: &[String], mu: f64) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let distinct: BTreeSet<&String> = x.iter().collect();
        let mut log = 0.0;
        for w in distinct {
            let px = x.iter().filter(|t| *t == w).count() as f64 / x.len() as f64;
            let c = y.iter().filter(|t| *t == w).count() as f64;
            log += px * ((c + mu * self.p(w)) / (y.len() as f64 + mu)).ln();
        }
        log.exp()
    }
}

fn floored(x: f64) -> f64 {
    if x > 0.0 {
        x.ln().max(-50.0)
    } else {
        -50.0
    }
}

fn ordered_pairs(doc: &[String], a: &str, b: &str) -> f64 {
    (0..doc.len().saturating_sub(1))
        .filter(|&i| doc[i] == a && doc[i + 1] == b)
        .count() as f64
}

/// Co-occurrences within a span of 8 tokens; a repeated term counts each
/// unordered pair of its positions once.
fn window_pairs(doc: &[String], a: &str, b: &str) -> f64 {
    let mut n = 0;
    for i in 0..doc.len() {
        for j in 0..doc.len() {
            if i != j && doc[i] == a && doc[j] == b && i.abs_diff(j) < 8 && (a != b || i < j) {
                n += 1;
            }
        }
    }
    n as f64
}

fn sdm_oracle(coll: &Collection<'_>, q: &[String], doc: &[String], mu: f64) -> [f64; 3] {
    let c_len = coll.len();
    let smooth = |count: f64, cf: f64| floored((count + mu * cf / c_len) / (doc.len() as f64 + mu));
    let tf = |w: &str| doc.iter().filter(|t| *t == w).count() as f64;
    let unigram = q.iter().map(|w| smooth(tf(w), coll.cf(w))).sum();
    let (mut ordered, mut unordered) = (0.0, 0.0);
    for pair in q.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let o_cf: f64 = coll.docs.iter().map(|d| ordered_pairs(d, a, b)).sum();
        let u_cf: f64 = coll.docs.iter().map(|d| window_pairs(d, a, b)).sum();
        ordered += smooth(ordered_pairs(doc, a, b), o_cf);
        unordered += smooth(window_pairs(doc, a, b), u_cf);
    }
    [unigram, ordered, unordered]
}

/// SW1, SW2, Ent of a token span.
fn priors(toks: &[Tok]) -> [f64; 3] {
    if toks.is_empty() {
        return [0.0; 3];
    }
    let stop = toks.iter().filter(|t| t.stop).count() as f64;
    let present: BTreeSet<String> = toks
        .iter()
        .filter(|t| t.stop)
        .map(|t| t.surface.to_lowercase())
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in toks {
        *counts.entry(&t.stem).or_default() += 1;
    }
    let n = toks.len() as f64;
    let ent = -counts
        .values()
        .map(|&c| (c as f64 / n) * (c as f64 / n).ln())
        .sum::<f64>();
    [stop / n, present.len() as f64 / STOPWORDS.len() as f64, ent]
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn centroid(table: &BTreeMap<String, Vec<f64>>, stems: &[String]) -> Option<Vec<f64>> {
    let found: Vec<&Vec<f64>> = stems.iter().filter_map(|s| table.get(s)).collect();
    if found.is_empty() {
        return None;
    }
    let dim = found[0].len();
    Some(
        (0..dim)
            .map(|k| found.iter().map(|v| v[k]).sum::<f64>() / found.len() as f64)
            .collect(),
    )
}

/// ESA over the fixture: a text's profile is the min-max normalized
/// similarity of every document sharing a term with it.
struct EsaOracle<'a> {
    coll: Collection<'a>,
    keywords: usize,
}

impl EsaOracle<'_> {
    fn profile(&self, model: &[String]) -> BTreeMap<usize, f64> {
        if model.is_empty() {
            return BTreeMap::new();
        }
        let scores: BTreeMap<usize, f64> = self
            .coll
            .docs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.iter().any(|t| model.contains(t)))
            .map(|(i, d)| (i, self.coll.sim(model, d, MU)))
            .collect();
        let lo = scores.values().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
        scores
            .into_iter()
            .map(|(d, s)| (d, if hi > lo { (s - lo) / (hi - lo) } else { 1.0 }))
            .collect()
    }

    fn passage_model(&self, toks: &[Tok]) -> Vec<String> {
        let n = self.coll.docs.len() as f64;
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        for t in toks.iter().filter(|t| !t.stop) {
            *tf.entry(&t.stem).or_default() += 1.0;
        }
        let mut scored: Vec<(f64, String)> = tf
            .into_iter()
            .map(|(w, c)| {
                let df = self
                    .coll
                    .docs
                    .iter()
                    .filter(|d| d.iter().any(|t| t == w))
                    .count() as f64;
                (c * (n / df).ln(), w.to_string())
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(self.keywords)
            .map(|(_, w)| w)
            .collect()
    }

    fn cosine(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
        let dot: f64 = a.iter().filter_map(|(d, x)| b.get(d).map(|y| x * y)).sum();
        let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

struct Resources {
    embeddings: BTreeMap<String, Vec<f64>>,
    synonyms: BTreeMap<String, Vec<String>>,
    entities: BTreeMap<String, BTreeSet<String>>,
}

/// Gaussian-kernel positional similarity maximized over positions.
fn positional_oracle(coll: &Collection<'_>, q: &[String], span: &[String], sigma: f64) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    if span.is_empty() {
        return coll.sim(q, span, MU);
    }
    let k = |i: usize, j: usize| (-((i as f64 - j as f64).powi(2)) / (2.0 * sigma * sigma)).exp();
    let distinct: BTreeSet<&String> = q.iter().collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..span.len() {
        let z: f64 = (0..span.len()).map(|j| k(i, j)).sum();
        let mut log = 0.0;
        for w in &distinct {
            let pq = q.iter().filter(|t| t == w).count() as f64 / q.len() as f64;
            let c: f64 = (0..span.len())
                .filter(|&j| &span[j] == *w)
                .map(|j| k(i, j))
                .sum();
            log += pq * ((c + MU * coll.p(w)) / (z + MU)).ln();
        }
        best = best.max(log.exp());
    }
    best
}

/// Everything a query's passage oracle needs.
struct QueryOracle<'a> {
    fx: &'a Fixture,
    coll: Collection<'a>,
    /// Query stems without stopwords, including out-of-vocabulary ones.
    stems: Vec<String>,
    s_doc: Vec<usize>,
    /// Raw sims of each S_doc document's passages.
    psg: Vec<Vec<f64>>,
    doc: Vec<f64>,
}

impl<'a> QueryOracle<'a> {
    fn new(fx: &'a Fixture, docs: &'a [Vec<String>], query: &Query, s_doc: &[&str]) -> Self {
        let coll = Collection { docs };
        let stems: Vec<String> = query.tokens.iter().map(|t| t.stem.clone()).collect();
        let model = coll.in_vocab(&stems);
        let s_doc: Vec<usize> = s_doc.iter().map(|d| fx.position(d)).collect();
        let psg = s_doc
            .iter()
            .map(|&d| {
                fx.chunks(d)
                    .iter()
                    .map(|&(a, b)| coll.sim(&model, &docs[d][a..b], MU))
                    .collect()
            })
            .collect();
        let doc = s_doc
            .iter()
            .map(|&d| coll.sim(&model, &docs[d], MU))
            .collect();
        Self {
            fx,
            coll,
            stems,
            s_doc,
            psg,
            doc,
        }
    }

    fn psg_sum(&self) -> f64 {
        self.psg.iter().flatten().sum()
    }

    fn doc_sum(&self) -> f64 {
        self.doc.iter().sum()
    }

    fn psg20(
        &self,
        slot: usize,
        ordinal: usize,
        esa: &EsaOracle<'_>,
        res: &Resources,
        query_id: &str,
    ) -> [f64; 20] {
        let d = self.s_doc[slot];
        let chunks = self.fx.chunks(d);
        let (a, b) = chunks[ordinal];
        let toks = &self.fx.toks(d)[a..b];
        let stems: Vec<String> = toks.iter().map(|t| t.stem.clone()).collect();
        let content: Vec<String> = toks
            .iter()
            .filter(|t| !t.stop)
            .map(|t| t.stem.clone())
            .collect();
        let sims = &self.psg[slot];
        let n = sims.len() as f64;
        let mean = sims.iter().sum::<f64>() / n;
        let std = (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let doc_len = self.coll.docs[d].len();
        let pre = if ordinal == 0 { ordinal } else { ordinal - 1 };
        let follow = if ordinal + 1 < chunks.len() {
            ordinal + 1
        } else {
            ordinal
        };
        let [sw1, sw2, ent] = priors(toks);
        let unique: BTreeSet<&String> = self.stems.iter().collect();
        let exact = content
            .windows(self.stems.len().max(1))
            .any(|w| !self.stems.is_empty() && w == self.stems.as_slice());
        let overlap = |ok: &dyn Fn(&String) -> bool| {
            unique.iter().filter(|s| ok(s)).count() as f64 / unique.len() as f64
        };
        let term_overlap = overlap(&|s| stems.contains(s));
        let syn_overlap = overlap(&|s| {
            stems.contains(s)
                || res
                    .synonyms
                    .get(s.as_str())
                    .is_some_and(|syns| syns.iter().any(|x| stems.contains(x)))
        });
        let q_esa = esa.profile(&esa.coll.in_vocab(&self.stems));
        let esa_v = EsaOracle::cosine(&q_esa, &esa.profile(&esa.passage_model(toks)));
        let w2v = match (
            centroid(&res.embeddings, &self.stems),
            centroid(&res.embeddings, &content),
        ) {
            (Some(q), Some(p)) => cosine(&q, &p),
            _ => 0.0,
        };
        let pid = format!("{}#{ordinal}", self.fx.store.docs()[d].doc_id);
        let empty = BTreeSet::new();
        let entity = {
            let (qa, pa) = (
                res.entities.get(query_id).unwrap_or(&empty),
                res.entities.get(&pid).unwrap_or(&empty),
            );
            let union = qa.union(pa).count();
            if union == 0 {
                0.0
            } else {
                qa.intersection(pa).count() as f64 / union as f64
            }
        };
        [
            sims[ordinal] / self.psg_sum(),
            self.doc[slot] / self.doc_sum(),
            sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std,
            if doc_len == 0 {
                1.0
            } else {
                (b - a) as f64 / doc_len as f64
            },
            sims[pre],
            sims[follow],
            ent,
            sw1,
            sw2,
            unique.len() as f64,
            if exact { 1.0 } else { 0.0 },
            term_overlap,
            syn_overlap,
            content.len() as f64,
            (ordinal + 1) as f64 / chunks.len() as f64,
            esa_v,
            w2v,
            entity,
        ]
    }
}

fn resources(
    fx: &Fixture,
    index: Arc<PositionalIndex>,
    oracle: &mut Resources,
) -> SemanticResources {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut emb = Embeddings::new(3);
    for w in ["apple", "banana", "cherry", "fig", "kiwi", "mango"] {
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        emb.insert(w, v.clone()).unwrap();
        oracle.embeddings.insert(w.into(), v);
    }
    let mut syn = SynonymTable::default();
    for (a, b) in [("apple", "fig"), ("cherry", "date"), ("kiwi", "lemon")] {
        syn.insert(a, b);
        oracle.synonyms.entry(a.into()).or_default().push(b.into());
    }
    let mut ent = EntityAnnotations::default();
    let mut add = |item: &str, e: &str, conf: f64| {
        ent.insert(item, e, conf).unwrap();
        if conf >= 0.1 {
            oracle
                .entities
                .entry(item.into())
                .or_default()
                .insert(e.into());
        }
    };
    add("q1", "E1", 0.9);
    add("q1", "E2", 0.5);
    add("q2", "E3", 0.05);
    for p in fx.segmented.iter().take(30) {
        add(
            &p.passage_id,
            if p.ordinal % 2 == 0 { "E1" } else { "E3" },
            0.3,
        );
        if p.ordinal == 1 {
            add(&p.passage_id, "E2", 0.95);
        }
    }
    let mut esa = EsaSpace::new(index, LmParams::new(MU).unwrap()).with_limits(100, 5);
    let store = &fx.store;
    esa.precompute(fx.segmented.iter().take(10).map(|p| {
        let d = store.get(&p.doc_id).unwrap();
        (
            p.passage_id.as_str(),
            &d.tokens[p.token_range.0..p.token_range.1],
        )
    }));
    SemanticResources {
        embeddings: Some(emb),
        synonyms: Some(syn),
        entities: Some(ent),
        esa: Some(esa),
    }
}

#[test]
fn formula_oracles() {
    criterion("formula oracles", || {
        let started = Instant::now();
        let fx = fixture();
        let docs = fx.all_stems();
        let coll = Collection { docs: &docs };
        let params = LmParams::new(MU).unwrap();
        let analyzer = fx.store.analyzer();
        let queries = [
            analyzer.query("q1", "apple banana cherry"),
            analyzer.query("q2", "the grape apple apple"),
            analyzer.query("q3", "kiwi zzz lemon"),
            analyzer.query("q4", "mango"),
        ];
        let mut oracle_res = Resources {
            embeddings: BTreeMap::new(),
            synonyms: BTreeMap::new(),
            entities: BTreeMap::new(),
        };
        let index = Arc::new(PositionalIndex::build(&fx.store).unwrap());
        let res = resources(&fx, index, &mut oracle_res);
        let esa = EsaOracle {
            coll: Collection { docs: &docs },
            keywords: 5,
        };
        let all_ids: Vec<String> = fx.store.docs().iter().map(|d| d.doc_id.clone()).collect();
        let s_doc: Vec<&str> = all_ids
            .iter()
            .map(String::as_str)
            .step_by(2)
            .chain(["d41"])
            .collect();
        let mut checked = 0usize;

        for q in &queries {
            let stems: Vec<String> = q.tokens.iter().map(|t| t.stem.clone()).collect();
            let model = coll.in_vocab(&stems);
            let qm = fx.index.query_model(q);

            // lm_similarity on documents and arbitrary spans.
            for (d, stems) in docs.iter().enumerate() {
                assert_close(
                    "lm_similarity(doc)",
                    lm_similarity(&qm, fx.index.doc_bag(d), &fx.index, params),
                    coll.sim(&model, stems, MU),
                    1e-9,
                );
                let ids: Vec<u32> = fx.index.doc_terms(d).iter().take(5).copied().collect();
                let bag = TermBag::from_terms(&ids);
                let span: Vec<String> = stems.iter().take(5).cloned().collect();
                assert_close(
                    "lm_similarity(span)",
                    lm_similarity(&qm, &bag, &fx.index, params),
                    coll.sim(&model, &span, MU),
                    1e-9,
                );
                checked += 2;
            }

            // SDM components and the six document features.
            let refs: Vec<&str> = all_ids.iter().map(String::as_str).collect();
            for v in doc_feature_vectors(q, &refs, &fx.store, &fx.index, params).unwrap() {
                let d = fx.position(&v.item_id);
                let sdm = sdm_oracle(&coll, &model, &docs[d], MU);
                let pri = priors(&fx.toks(d));
                let want = [sdm[0], sdm[1], sdm[2], pri[0], pri[1], pri[2]];
                for (k, (g, w)) in v.values.iter().zip(want).enumerate() {
                    assert_close(
                        &format!(
                            "{} {} of {}",
                            q.query_id,
                            FeatureSchema::doc6().features()[k],
                            v.item_id
                        ),
                        *g,
                        w,
                        1e-9,
                    );
                    checked += 1;
                }
            }

            // The twenty passage features.
            let ctx =
                PassageContext::new(q, &s_doc, &fx.store, &fx.index, &fx.segmented, &res, params)
                    .unwrap();
            let qo = QueryOracle::new(&fx, &docs, q, &s_doc);
            let names = FeatureSchema::psg20();
            for (slot, p) in ctx.iter_passages() {
                let got = ctx.values(slot, p.ordinal);
                let want = qo.psg20(slot, p.ordinal, &esa, &oracle_res, &q.query_id);
                for k in 0..20 {
                    assert_close(
                        &format!("{} {} of {}", q.query_id, names.features()[k], p.passage_id),
                        got[k],
                        want[k],
                        1e-9,
                    );
                    checked += 1;
                }
            }

            // QSF and PLM scores.
            for lambda in [0.0, 0.3, 0.9] {
                for (id, score) in rank_qsf(&ctx, lambda).unwrap().entries() {
                    let (slot, ord) = slot_of(&ctx, id);
                    let want = (1.0 - lambda) * qo.psg[slot][ord] / qo.psg_sum()
                        + lambda * qo.doc[slot] / qo.doc_sum();
                    assert_close("QSF score", *score, want, 1e-9);
                    checked += 1;
                }
            }
            for (sigma, lambda, beta) in [(1.5, 0.4, 0.4), (4.0, 0.2, 0.6), (10.0, 1.0, 0.0)] {
                let pos: Vec<f64> = ctx
                    .iter_passages()
                    .map(|(s, p)| {
                        positional_oracle(
                            &coll,
                            &model,
                            &docs[qo.s_doc[s]][p.token_range.0..p.token_range.1],
                            sigma,
                        )
                    })
                    .collect();
                let pos_sum: f64 = pos.iter().sum();
                let order: Vec<String> = ctx
                    .iter_passages()
                    .map(|(_, p)| p.passage_id.clone())
                    .collect();
                for (id, score) in rank_plm(&ctx, PlmParams::new(sigma, lambda, beta).unwrap())
                    .unwrap()
                    .entries()
                {
                    let (slot, ord) = slot_of(&ctx, id);
                    let i = order.iter().position(|x| x == id).unwrap();
                    let share = |x: f64, s: f64| if s > 0.0 { x / s } else { 0.0 };
                    let want = lambda * share(pos[i], pos_sum)
                        + beta * qo.psg[slot][ord] / qo.psg_sum()
                        + (1.0 - lambda - beta) * qo.doc[slot] / qo.doc_sum();
                    assert_close("PLM score", *score, want, 1e-9);
                    checked += 1;
                }
            }
        }

        // Reciprocal-rank scores, fusion and SMPD statistics on random lists.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut docs_order: Vec<String> = (0..12).map(|i| format!("x{i:02}")).collect();
            docs_order.shuffle(&mut rng);
            let doc_list = RankedList::from_order("q", docs_order.clone());
            let mut psgs: Vec<String> = (0..12)
                .flat_map(|i| (0..rng.random_range(0..15)).map(move |k| format!("x{i:02}#{k}")))
                .collect();
            psgs.shuffle(&mut rng);
            let psg_list = RankedList::from_order("q", psgs.clone());
            let nu = [0.0, 30.0, 60.0][rng.random_range(0..3)];
            let alpha = rng.random_range(0..=10) as f64 / 10.0;
            for (r, id) in psgs.iter().enumerate() {
                assert_close(
                    "rr_score",
                    rr_score(id, &psg_list, nu).unwrap(),
                    1.0 / (nu + (r + 1) as f64),
                    1e-9,
                );
            }
            let ranks_of = |doc: &str| -> Vec<usize> {
                psgs.iter()
                    .enumerate()
                    .filter(|(_, p)| p.split('#').next() == Some(doc))
                    .map(|(r, _)| r + 1)
                    .collect()
            };
            let fused = rerank_rrf(&doc_list, &psg_list, FusionParams::new(nu, alpha).unwrap());
            for (id, score) in fused.entries() {
                let rd = docs_order.iter().position(|d| d == id).unwrap() + 1;
                let best = ranks_of(id).first().map_or(0.0, |&r| 1.0 / (nu + r as f64));
                assert_close(
                    "fusion score",
                    *score,
                    alpha / (nu + rd as f64) + (1.0 - alpha) * best,
                    1e-9,
                );
            }
            let ranking = PassageRanking::new(&psg_list);
            for d in &docs_order {
                let num = rng.random_range(0..20);
                let got = smpd_features(d, &ranking, nu, num);
                let rr: Vec<f64> = ranks_of(d).iter().map(|&r| 1.0 / (nu + r as f64)).collect();
                let want = if rr.is_empty() || num == 0 {
                    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, num as f64]
                } else {
                    let m = rr.iter().sum::<f64>() / rr.len() as f64;
                    let sd =
                        (rr.iter().map(|x| (x - m).powi(2)).sum::<f64>() / rr.len() as f64).sqrt();
                    let top = |k: usize| {
                        ranks_of(d).iter().filter(|&&r| r <= k).count() as f64 / num as f64
                    };
                    [
                        rr.iter().copied().fold(f64::MIN, f64::max),
                        rr.iter().copied().fold(f64::MAX, f64::min),
                        m,
                        sd,
                        top(50),
                        top(100),
                        num as f64,
                    ]
                };
                for k in 0..7 {
                    assert_close("SMPD statistic", got[k], want[k], 1e-9);
                }
                checked += 7;
            }
        }
        assert!(checked > 5000, "only {checked} values checked");
        let took = started.elapsed();
        println!("formula oracles: {checked} values in {took:?}");
        assert!(took < Duration::from_secs(10), "took {took:?}");
    });
}

fn slot_of(ctx: &PassageContext<'_>, passage_id: &str) -> (usize, usize) {
    ctx.iter_passages()
        .find(|(_, p)| p.passage_id == passage_id)
        .map(|(s, p)| (s, p.ordinal))
        .unwrap()
}

#[test]
fn grade_buckets() {
    criterion("grade buckets", || {
        let got: Vec<u8> = [0.05, 0.10, 0.25, 0.30, 0.50, 0.75, 0.99]
            .iter()
            .map(|&r| bucket_grade(r).unwrap())
            .collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 4, 4]);
    });
}

#[test]
fn jpds_schema_arity() {
    criterion("JPDs schema arity", || {
        assert_eq!(jpds_composition(false).schema().len(), 24);
        assert_eq!(jpds_composition(true).schema().len(), 25);
        assert!(jpds_composition(true)
            .schema()
            .features()
            .iter()
            .any(|f| f == "p:QueryLength"));
        assert!(!jpds_composition(false)
            .schema()
            .features()
            .iter()
            .any(|f| f.ends_with("DocQuerySim")));
    });
}

// ---------------------------------------------------------------------------
// Metric oracles

fn ap_oracle(run: &[String], grades: &BTreeMap<String, u8>) -> Option<f64> {
    let rel = |id: &String| grades.get(id).is_some_and(|&g| g >= 1);
    let total = grades.values().filter(|&&g| g >= 1).count();
    if total == 0 {
        return None;
    }
    let mut sum = 0.0;
    for k in 1..=run.len() {
        if rel(&run[k - 1]) {
            let hits = run[..k].iter().filter(|id| rel(id)).count();
            sum += hits as f64 / k as f64;
        }
    }
    Some(sum / total as f64)
}

fn dcg(grades: &[u8]) -> f64 {
    grades
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / (i as f64 + 2.0).log2())
        .sum()
}

fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn ndcg_oracle(run: &[String], grades: &BTreeMap<String, u8>) -> f64 {
    let judged: Vec<u8> = grades.values().copied().collect();
    let ideal = permutations(&judged)
        .iter()
        .map(|p| dcg(p))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        return 0.0;
    }
    let got: Vec<u8> = run
        .iter()
        .map(|id| grades.get(id).copied().unwrap_or(0))
        .collect();
    dcg(&got) / ideal
}

/// Character-level iP at levels i/100 from explicit character sets.
fn ip_oracle(
    retrieved: &[(String, (usize, usize))],
    relevant: &BTreeSet<(String, usize)>,
) -> Option<Vec<f64>> {
    if relevant.is_empty() {
        return None;
    }
    let total = relevant.len();
    let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut points = Vec::new();
    for (doc, (a, b)) in retrieved {
        seen.extend((*a..*b).map(|c| (doc.clone(), c)));
        let hit = seen.intersection(relevant).count();
        let precision = if seen.is_empty() {
            0.0
        } else {
            hit as f64 / seen.len() as f64
        };
        points.push((precision, hit));
    }
    Some(
        (0..=100)
            .map(|i| {
                points
                    .iter()
                    .filter(|p| p.1 * 100 >= i * total)
                    .map(|p| p.0)
                    .fold(0.0, f64::max)
            })
            .collect(),
    )
}

#[test]
fn metric_oracles() {
    criterion("metric oracles", || {
        let fx = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let docs: Vec<String> = fx
            .store
            .docs()
            .iter()
            .map(|d| d.doc_id.clone())
            .take(12)
            .collect();
        for case in 0..300 {
            let mut grades = BTreeMap::new();
            for d in docs.iter().take(8) {
                if rng.random_bool(0.8) {
                    grades.insert(d.clone(), rng.random_range(0..4u8));
                }
            }
            let mut pool = docs.clone();
            pool.shuffle(&mut rng);
            let run: Vec<String> = pool.into_iter().take(rng.random_range(0..=10)).collect();
            let list = RankedList::from_order("q", run.clone());
            let ap = average_precision(&list, Some(&grades), 1000);
            assert_eq!(ap, ap_oracle(&run, &grades), "AP case {case}");
            let rel = run
                .iter()
                .take(10)
                .filter(|id| grades.get(*id).is_some_and(|&g| g >= 1))
                .count();
            let p10 = precision_at(&list, Some(&grades), 10);
            assert_eq!(p10, rel as f64 / 10.0, "P@10 case {case}");
            let ndcg = ndcg_at_k(&list, &grades, 10);
            assert_eq!(ndcg, ndcg_oracle(&run, &grades), "NDCG@10 case {case}");
            for v in [ap.unwrap_or(0.0), p10, ndcg] {
                assert!((0.0..=1.0).contains(&v));
            }

            // Passage runs with random character judgments.
            let mut j = JudgmentSet::new(JudgmentMode::CharFocused);
            let mut relevant = BTreeSet::new();
            for d in docs.iter().take(6) {
                let len = fx.store.get(d).unwrap().raw_text.len();
                if len > 2 && rng.random_bool(0.6) {
                    let a = rng.random_range(0..len - 1);
                    let b = rng.random_range(a + 1..=len);
                    j.add_grade("q", d, 1);
                    j.add_span("q", d, a, b).unwrap();
                    relevant.extend((a..b).map(|c| (d.clone(), c)));
                }
            }
            let mut pool: Vec<_> = fx
                .segmented
                .iter()
                .filter(|p| docs[..8].contains(&p.doc_id))
                .collect();
            pool.shuffle(&mut rng);
            pool.truncate(rng.random_range(0..=10));
            let list = RankedList::from_order("q", pool.iter().map(|p| p.passage_id.clone()));
            let retrieved: Vec<(String, (usize, usize))> = pool
                .iter()
                .map(|p| (p.doc_id.clone(), p.char_range))
                .collect();
            let got = interpolated_precision(&list, &j, &fx.segmented).unwrap();
            let want = ip_oracle(&retrieved, &relevant);
            assert_eq!(got.is_some(), want.is_some(), "iP presence case {case}");
            if let (Some(got), Some(want)) = (got, want) {
                assert_eq!(got.curve, want, "iP curve case {case}");
                assert_eq!(
                    got.maip,
                    want.iter().sum::<f64>() / 101.0,
                    "MAiP case {case}"
                );
                for x in [0.0, 0.01, 0.1, 0.5, 1.0] {
                    assert_eq!(got.at(x), Some(want[(x * 100.0).round() as usize]));
                }
                assert!(
                    got.curve.windows(2).all(|w| w[0] >= w[1]),
                    "iP curve increases, case {case}"
                );
                assert!(got
                    .curve
                    .iter()
                    .chain([&got.maip])
                    .all(|v| (0.0..=1.0).contains(v)));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Trainers

fn vector(schema: &Arc<FeatureSchema>, values: Vec<f64>, q: &str, id: &str) -> FeatureVector {
    FeatureVector::new(schema.clone(), values, q, id).unwrap()
}

#[test]
fn trainer_properties() {
    criterion("trainer properties", || {
        let schema = Arc::new(FeatureSchema::new("T", ["f0", "f1", "f2", "f3"]).unwrap());
        let w = [1.0, -2.0, 0.5, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let separable: Vec<QueryGroup> = (0..6)
            .map(|g| {
                let q = format!("q{g}");
                let mut examples = Vec::new();
                while examples.len() < 12 {
                    let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                    let s: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                    // Grades are bands of the score with a gap around every edge.
                    let band = (s + 2.0) / 1.5;
                    if (band - band.round()).abs() < 0.1 {
                        continue;
                    }
                    let grade = band.floor().clamp(0.0, 4.0) as u8;
                    examples.push(GradedExample {
                        vector: vector(&schema, x, &q, &format!("{q}-{}", examples.len())),
                        grade,
                    });
                }
                QueryGroup::new(&q, examples)
            })
            .collect();
        let params = PairwiseParams {
            c: 10.0,
            epochs: 200,
            seed: 4,
            ..Default::default()
        };
        let (model, trace) = train_pairwise(&separable, &params).unwrap();
        assert_eq!(
            pairwise_errors(&model, &separable).unwrap(),
            0,
            "pairwise errors after 200 epochs: {:?}",
            trace.best_errors.last()
        );
        assert!(trace.epoch_errors.len() <= 200);
        let (again, _) = train_pairwise(&separable, &params).unwrap();
        assert_eq!(write_model(&model), write_model(&again));

        let graded: Vec<QueryGroup> = (0..5)
            .map(|g| {
                let q = format!("q{g}");
                let examples = (0..10)
                    .map(|i| {
                        let grade = rng.random_range(0..4u8);
                        let x = vec![
                            grade as f64,
                            rng.random_range(0.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(0.0..5.0),
                        ];
                        GradedExample {
                            vector: vector(&schema, x, &q, &format!("{q}-{i}")),
                            grade,
                        }
                    })
                    .collect();
                QueryGroup::new(&q, examples)
            })
            .collect();
        let ca = CoordinateAscentParams {
            seed: 8,
            ..Default::default()
        };
        let (model, trace) = train_coordinate_ascent(&graded, &ca).unwrap();
        assert!(
            trace.objective.windows(2).all(|p| p[1] > p[0]),
            "objective not monotone: {:?}",
            trace.objective
        );
        assert_eq!(*trace.objective.last().unwrap(), 1.0);
        assert_eq!(mean_ndcg(&model, &graded, 10).unwrap(), 1.0);
        let (again, _) = train_coordinate_ascent(&graded, &ca).unwrap();
        assert_eq!(write_model(&model), write_model(&again));
    });
}

// ---------------------------------------------------------------------------
// Synthetic experiments

const ALL_METHODS: [&str; 18] = [
    "LM",
    "SDM",
    "DocPsg",
    "init-LTR",
    "RRF",
    "SMPD",
    "JPDs",
    "JPDs-second",
    "JPDs-third",
    "JPDs-lowest",
    "JPD-2",
    "JPDm-avg",
    "JPDm-max",
    "JPDm-min",
    "FPD",
    "QSF",
    "PLM",
    "PsgLTR",
];

fn synthetic(dir: &Path, spec: &SynthSpec, methods: &[&str]) -> ExperimentConfig {
    let data = synth::generate(spec);
    let config = synth::default_config(methods, spec.seed);
    synth::write(dir, &data, &config).unwrap();
    config
}

#[test]
fn synthetic_effect() {
    criterion("synthetic passage effect", || {
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::default();
        let data = synth::generate(&spec);
        assert_eq!((data.corpus.len(), data.topics.len()), (500, 30));
        let config = synthetic(dir.path(), &spec, &["LM", "RRF", "JPDs", "JPDs-lowest"]);
        let out = run_experiment(config, dir.path()).unwrap();
        let map = |m: &str| out.summary(m, "MAP").unwrap();
        println!(
            "synthetic MAP: LM {:.4}, RRF {:.4}, JPDs {:.4}, JPDs-lowest {:.4}",
            map("LM"),
            map("RRF"),
            map("JPDs"),
            map("JPDs-lowest")
        );
        assert_eq!(out.report.per_query["LM"].len(), 30);
        assert!(map("RRF") >= map("LM") + 0.05);
        assert!(map("JPDs") >= map("LM") + 0.05);
        assert!(map("JPDs-lowest") <= map("JPDs"));
        let alphas: BTreeSet<String> = out
            .report
            .manifest
            .folds
            .iter()
            .map(|f| format!("{}", f.chosen["RRF"]["alpha"]))
            .collect();
        println!("RRF alpha chosen per fold: {alphas:?}");
        let took = started.elapsed();
        assert!(took < Duration::from_secs(300), "took {took:?}");
    });
}

#[test]
fn degenerate_parameters() {
    criterion("degenerate-parameter identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut docs: Vec<String> = (0..20).map(|i| format!("x{i:02}")).collect();
            docs.shuffle(&mut rng);
            let doc_list = RankedList::from_order("q", docs.clone());
            let mut psgs: Vec<String> = (0..20)
                .flat_map(|i| (0..3).map(move |k| format!("x{i:02}#{k}")))
                .collect();
            psgs.shuffle(&mut rng);
            let psg_list = RankedList::from_order("q", psgs);
            let mut other = docs.clone();
            other.shuffle(&mut rng);
            let other = RankedList::from_order("q", other);
            let nu = rng.random_range(0.0..100.0);
            let p = FusionParams::new(nu, 1.0).unwrap();
            assert_eq!(
                rerank_rrf(&doc_list, &psg_list, p)
                    .ids()
                    .collect::<Vec<_>>(),
                docs
            );
            assert_eq!(
                rerank_fpd(&doc_list, &other, p).ids().collect::<Vec<_>>(),
                docs
            );
        }

        let fx = fixture();
        let res = SemanticResources::default();
        let ids: Vec<&str> = fx.store.docs().iter().map(|d| d.doc_id.as_str()).collect();
        for text in ["apple banana", "grape grape kiwi", "lemon"] {
            let q = fx.store.analyzer().query("q", text);
            let ctx = PassageContext::new(
                &q,
                &ids,
                &fx.store,
                &fx.index,
                &fx.segmented,
                &res,
                LmParams::new(MU).unwrap(),
            )
            .unwrap();
            let pos = positional_sims(&ctx, 1e6);
            for ((s, p), got) in ctx.iter_passages().zip(pos) {
                let want = ctx.psg_sim(s, p.ordinal);
                assert!(
                    (got - want).abs() <= 1e-6 * want.abs().max(1e-300),
                    "{}: {got} vs {want}",
                    p.passage_id
                );
            }
        }
    });
}

#[test]
fn cv_hygiene() {
    criterion("held-out judgments never reach fold models", || {
        let spec = SynthSpec {
            docs: 90,
            queries: 5,
            relevant_per_query: 4,
            distractors_per_query: 4,
            passage_len: 60,
            seed: 3,
            ..Default::default()
        };
        let learned: Vec<&str> = ALL_METHODS
            .iter()
            .copied()
            .filter(|m| !["LM", "SDM", "DocPsg", "QSF", "PLM"].contains(m))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic(dir.path(), &spec, &learned);
        let clean = run_experiment(config.clone(), dir.path()).unwrap();
        let data = synth::generate(&spec);

        for target in ["Q02", "Q04"] {
            // Flip the target's judgments: distractors become relevant with
            // arbitrary spans, relevant documents become non-relevant.
            let mut qrels = String::new();
            let mut psg = String::new();
            for (q, d, g) in &data.doc_qrels {
                let grade = if q == target { 1 - g } else { *g };
                qrels.push_str(&format!("{q} 0 {d} {grade}\n"));
                if q == target && grade == 1 {
                    psg.push_str(&format!("{q}\t{d}\t0\t40\n"));
                }
            }
            for (q, d, s, e) in data.psg_qrels.iter().filter(|r| r.0 != target) {
                psg.push_str(&format!("{q}\t{d}\t{s}\t{e}\n"));
            }
            let poisoned = tempfile::tempdir().unwrap();
            synth::write(poisoned.path(), &data, &config).unwrap();
            std::fs::write(poisoned.path().join(synth::QRELS_FILE), qrels).unwrap();
            std::fs::write(poisoned.path().join(synth::PSG_QRELS_FILE), psg).unwrap();
            let out = run_experiment(config.clone(), poisoned.path()).unwrap();

            let prefix = Path::new("models").join(target);
            let models: Vec<_> = clean
                .files
                .keys()
                .filter(|p| p.starts_with(&prefix))
                .collect();
            // Every learned method except RRF, which only tunes α, stores a model.
            assert_eq!(
                models.len(),
                learned.len() - 1,
                "models of {target}: {models:?}"
            );
            for path in models {
                assert_eq!(
                    clean.files[path],
                    out.files[path],
                    "{} changed after poisoning {target}",
                    path.display()
                );
            }
            // The poisoning is visible: other folds train on the target's new judgments.
            assert!(clean.files.iter().any(|(p, t)| p.starts_with("models")
                && !p.starts_with(&prefix)
                && out.files[p] != *t));
        }
    });
}

#[test]
fn end_to_end_determinism() {
    criterion("end-to-end determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic(dir.path(), &SynthSpec::default(), &ALL_METHODS);
        let a = run_experiment(config.clone(), dir.path()).unwrap();
        let b = run_experiment(config, dir.path()).unwrap();
        assert_eq!(
            a.files.keys().collect::<Vec<_>>(),
            b.files.keys().collect::<Vec<_>>()
        );
        for (path, text) in &a.files {
            assert!(
                text == &b.files[path],
                "{} differs between runs",
                path.display()
            );
        }
        assert_eq!(a.files.keys().filter(|p| p.starts_with("runs")).count(), 18);

        let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
        a.write(&out_a).unwrap();
        b.write(&out_b).unwrap();
        for path in a.files.keys() {
            assert_eq!(
                std::fs::read(out_a.join(path)).unwrap(),
                std::fs::read(out_b.join(path)).unwrap()
            );
        }
    });
}
