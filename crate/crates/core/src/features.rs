//! Document-query and passage-query feature vectors.
//!
//! `DOC6` holds the three SDM components and three query-independent priors
//! (stopword ratios and term entropy). `PSG20` holds the passage features:
//! normalized passage and ambient-document similarities, statistics of the
//! similarities of the document's passages, neighbour similarities, priors,
//! lexical overlap measures, position and length, and three semantic
//! similarities (ESA, embedding centroids, entity Jaccard).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index::{
    lm_similarity, retrieve_model, LmParams, PositionalIndex, QueryModel, SdmQuery, TermBag, TermId,
};
use crate::math::{mean_std, sqrt};
use crate::passage::{neighbors, Passage, SegmentedCorpus};
use crate::text::{CorpusStore, Document, Query, StopwordList, Token};

pub const SDM_T: &str = "SDM-T";
pub const SDM_O: &str = "SDM-O";
pub const SDM_U: &str = "SDM-U";
pub const SW1: &str = "SW1";
pub const SW2: &str = "SW2";
pub const ENT: &str = "Ent";

pub const PSG_QUERY_SIM: &str = "PsgQuerySim";
pub const DOC_QUERY_SIM: &str = "DocQuerySim";
pub const MAX_PD_SIM: &str = "MaxPDSim";
pub const AVG_PD_SIM: &str = "AvgPDSim";
pub const STD_PD_SIM: &str = "StdPDSim";
pub const LENGTH_RATIO: &str = "LengthRatio";
pub const QUERY_SIM_PRE: &str = "QuerySimPre";
pub const QUERY_SIM_FOLLOW: &str = "QuerySimFollow";
pub const QUERY_LENGTH: &str = "QueryLength";
pub const EXACT_MATCH: &str = "ExactMatch";
pub const TERM_OVERLAP: &str = "TermOverlap";
pub const SYNONYMS_OVERLAP: &str = "SynonymsOverlap";
pub const PSG_LENGTH: &str = "PsgLength";
pub const PSG_LOCATION: &str = "PsgLocation";
pub const ESA: &str = "ESA";
pub const W2V: &str = "W2V";
pub const ENTITY: &str = "Entity";

pub const DOC6: [&str; 6] = [SDM_T, SDM_O, SDM_U, SW1, SW2, ENT];

pub const PSG20: [&str; 20] = [
    PSG_QUERY_SIM,
    DOC_QUERY_SIM,
    MAX_PD_SIM,
    AVG_PD_SIM,
    STD_PD_SIM,
    LENGTH_RATIO,
    QUERY_SIM_PRE,
    QUERY_SIM_FOLLOW,
    ENT,
    SW1,
    SW2,
    QUERY_LENGTH,
    EXACT_MATCH,
    TERM_OVERLAP,
    SYNONYMS_OVERLAP,
    PSG_LENGTH,
    PSG_LOCATION,
    ESA,
    W2V,
    ENTITY,
];

/// Entity annotations below this confidence are discarded at load time.
pub const ENTITY_CONFIDENCE_THRESHOLD: f64 = 0.1;

/// Named, ordered list of features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    name: String,
    features: Vec<String>,
}

impl FeatureSchema {
    pub fn new<I, S>(name: &str, features: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let features: Vec<String> = features.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.as_str()) {
                return Err(Error::NameCollision(f.clone()));
            }
        }
        Ok(Self {
            name: name.to_string(),
            features,
        })
    }

    pub fn doc6() -> Arc<Self> {
        Arc::new(Self::new("DOC6", DOC6).expect("distinct names"))
    }

    pub fn psg20() -> Arc<Self> {
        Arc::new(Self::new("PSG20", PSG20).expect("distinct names"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|f| f == feature)
    }

    fn unknown(&self, name: &str) -> Error {
        Error::UnknownFeature {
            name: name.to_string(),
            available: self.features.join(", "),
        }
    }

    /// Resolves feature names to indices; unknown names are an error.
    pub fn resolve(&self, names: &[&str]) -> Result<BTreeSet<usize>> {
        names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| self.unknown(n)))
            .collect()
    }
}

/// Values of one schema for one `(query, item)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: Arc<FeatureSchema>,
    pub values: Vec<f64>,
    pub query_id: String,
    pub item_id: String,
}

impl FeatureVector {
    pub fn new(
        schema: Arc<FeatureSchema>,
        values: Vec<f64>,
        query_id: &str,
        item_id: &str,
    ) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} ({} features)", schema.name(), schema.len()),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "feature {} of {item_id} is not finite ({})",
                schema.features()[i],
                values[i]
            )));
        }
        Ok(Self {
            schema,
            values,
            query_id: query_id.to_string(),
            item_id: item_id.to_string(),
        })
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.schema.index_of(feature).map(|i| self.values[i])
    }
}

/// One input of a [`Composition`].
#[derive(Debug, Clone, Copy)]
pub struct SchemaPart<'a> {
    /// Prepended to every feature name of this part (may be empty).
    pub prefix: &'a str,
    pub schema: &'a FeatureSchema,
    /// Unprefixed feature names to drop.
    pub exclusions: &'a [&'a str],
}

/// Plan for concatenating several vectors after per-part exclusions.
///
/// The output never contains an excluded feature, so a model trained on the
/// composed schema cannot read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    schema: Arc<FeatureSchema>,
    inputs: Vec<FeatureSchema>,
    picks: Vec<(usize, usize)>,
    boundaries: Vec<usize>,
}

impl Composition {
    pub fn new(name: &str, parts: &[SchemaPart<'_>]) -> Result<Self> {
        let mut names = Vec::new();
        let mut picks = Vec::new();
        let mut boundaries = Vec::new();
        for (p, part) in parts.iter().enumerate() {
            let excluded = part.schema.resolve(part.exclusions)?;
            for (i, f) in part.schema.features().iter().enumerate() {
                if !excluded.contains(&i) {
                    names.push(format!("{}{}", part.prefix, f));
                    picks.push((p, i));
                }
            }
            boundaries.push(names.len());
        }
        let schema = Arc::new(FeatureSchema::new(name, names)?);
        Ok(Self {
            schema,
            inputs: parts.iter().map(|p| p.schema.clone()).collect(),
            picks,
            boundaries,
        })
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    /// Index one past the last feature of each part in the output schema.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn apply(&self, item_id: &str, vectors: &[&FeatureVector]) -> Result<FeatureVector> {
        if vectors.len() != self.inputs.len() {
            return Err(Error::InvalidParameter(format!(
                "composition `{}` takes {} vectors, got {}",
                self.schema.name(),
                self.inputs.len(),
                vectors.len()
            )));
        }
        for (v, s) in vectors.iter().zip(&self.inputs) {
            if *v.schema != *s {
                return Err(Error::SchemaMismatch {
                    expected: s.name().to_string(),
                    found: v.schema.name().to_string(),
                });
            }
        }
        let values = self
            .picks
            .iter()
            .map(|&(p, i)| vectors[p].values[i])
            .collect();
        let query_id = vectors.first().map(|v| v.query_id.as_str()).unwrap_or("");
        FeatureVector::new(self.schema.clone(), values, query_id, item_id)
    }
}

/// `a ⊕ (b − exclusions)` with names kept as-is; colliding names are an error.
pub fn concat(a: &FeatureVector, b: &FeatureVector, exclusions: &[&str]) -> Result<FeatureVector> {
    let name = format!("{}+{}", a.schema.name(), b.schema.name());
    let plan = Composition::new(
        &name,
        &[
            SchemaPart {
                prefix: "",
                schema: &a.schema,
                exclusions: &[],
            },
            SchemaPart {
                prefix: "",
                schema: &b.schema,
                exclusions,
            },
        ],
    )?;
    plan.apply(&a.item_id, &[a, b])
}

/// Per-query min-max normalization, in place. Constant features map to 0.
pub fn minmax_normalize(vectors: &mut [FeatureVector]) {
    let Some(first) = vectors.first() else { return };
    let dims = first.values.len();
    for f in 0..dims {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vectors.iter() {
            lo = lo.min(v.values[f]);
            hi = hi.max(v.values[f]);
        }
        let range = hi - lo;
        for v in vectors.iter_mut() {
            v.values[f] = if range > 0.0 {
                (v.values[f] - lo) / range
            } else {
                0.0
            };
        }
    }
}

/// SW1, SW2 and Ent of a token span.
///
/// SW1 is the fraction of tokens that are stopwords, SW2 the fraction of the
/// stopword list present, Ent the entropy (nats) of the stem distribution.
pub fn text_priors(
    tokens: &[Token],
    terms: &[TermId],
    stopwords: &StopwordList,
) -> (f64, f64, f64) {
    if tokens.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut present = BTreeSet::new();
    let mut sw = 0usize;
    for t in tokens.iter().filter(|t| t.is_stopword) {
        sw += 1;
        present.insert(t.surface.to_lowercase());
    }
    let sw1 = sw as f64 / tokens.len() as f64;
    let sw2 = if stopwords.is_empty() {
        0.0
    } else {
        present.len() as f64 / stopwords.len() as f64
    };
    (sw1, sw2, TermBag::from_terms(terms).entropy())
}

/// The six document features, in [`DOC6`] order.
pub fn doc_features(
    sdm: &SdmQuery,
    doc: &Document,
    doc_pos: usize,
    index: &PositionalIndex,
    stopwords: &StopwordList,
    params: LmParams,
) -> [f64; 6] {
    let c = sdm.components(doc_pos, index, params);
    let (sw1, sw2, ent) = text_priors(&doc.tokens, index.doc_terms(doc_pos), stopwords);
    [c.unigram, c.ordered, c.unordered, sw1, sw2, ent]
}

/// DOC6 vectors for the listed documents of one query.
pub fn doc_feature_vectors(
    query: &Query,
    doc_ids: &[&str],
    store: &CorpusStore,
    index: &PositionalIndex,
    params: LmParams,
) -> Result<Vec<FeatureVector>> {
    let schema = FeatureSchema::doc6();
    let sdm = SdmQuery::new(&index.query_model(query), index);
    doc_ids
        .iter()
        .map(|id| {
            let pos = index
                .doc_index(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown document `{id}`")))?;
            let doc = store
                .get(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown document `{id}`")))?;
            let v = doc_features(&sdm, doc, pos, index, store.analyzer().stopwords(), params);
            FeatureVector::new(schema.clone(), v.to_vec(), &query.query_id, id)
        })
        .collect()
}

/// Term embeddings keyed by stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: BTreeMap::new(),
        }
    }

    /// Adds a vector; the first vector for a stem wins.
    pub fn insert(&mut self, stem: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "embedding for `{stem}` has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.table.entry(stem.to_string()).or_insert(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Mean vector of the in-vocabulary stems, `None` if there are none.
    pub fn centroid<'a, I: IntoIterator<Item = &'a str>>(&self, stems: I) -> Option<Vec<f64>> {
        let mut sum = alloc::vec![0.0; self.dim];
        let mut n = 0usize;
        for s in stems {
            if let Some(v) = self.table.get(s) {
                for (a, b) in sum.iter_mut().zip(v) {
                    *a += b;
                }
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|x| x / n as f64).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = sqrt(a.iter().map(|x| x * x).sum());
    let nb = sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Synonyms keyed by stem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymTable {
    pub fn insert(&mut self, stem: &str, synonym: &str) {
        if stem != synonym {
            self.map
                .entry(stem.to_string())
                .or_default()
                .insert(synonym.to_string());
        }
    }

    pub fn synonyms(&self, stem: &str) -> impl Iterator<Item = &str> {
        self.map.get(stem).into_iter().flatten().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Entity sets keyed by item id (query id or passage id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityAnnotations {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl EntityAnnotations {
    /// Records an annotation if its confidence reaches the threshold.
    pub fn insert(&mut self, item_id: &str, entity: &str, confidence: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidParameter(format!(
                "entity confidence {confidence} outside [0,1]"
            )));
        }
        if confidence >= ENTITY_CONFIDENCE_THRESHOLD {
            self.map
                .entry(item_id.to_string())
                .or_default()
                .insert(entity.to_string());
        }
        Ok(())
    }

    pub fn entities(&self, item_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(item_id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Jaccard coefficient; 0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Min-max normalized top-k retrieval scores over the concept space, keyed by
/// concept-space document position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EsaProfile {
    scores: Vec<(u32, f64)>,
}

impl EsaProfile {
    /// Cosine between two profiles; documents absent from one side count 0.
    pub fn cosine(&self, other: &EsaProfile) -> f64 {
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < self.scores.len() && j < other.scores.len() {
            match self.scores[i].0.cmp(&other.scores[j].0) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    dot += self.scores[i].1 * other.scores[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let na = sqrt(self.scores.iter().map(|(_, s)| s * s).sum());
        let nb = sqrt(other.scores.iter().map(|(_, s)| s * s).sum());
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    pub fn scores(&self) -> &[(u32, f64)] {
        &self.scores
    }
}

/// Explicit-semantic-analysis concept space: a retrieval index whose
/// documents act as concepts.
#[derive(Debug, Clone)]
pub struct EsaSpace {
    index: Arc<PositionalIndex>,
    params: LmParams,
    depth: usize,
    keywords: usize,
    cache: BTreeMap<String, EsaProfile>,
}

impl EsaSpace {
    pub const DEFAULT_DEPTH: usize = 100;
    pub const DEFAULT_KEYWORDS: usize = 20;

    pub fn new(index: Arc<PositionalIndex>, params: LmParams) -> Self {
        Self {
            index,
            params,
            depth: Self::DEFAULT_DEPTH,
            keywords: Self::DEFAULT_KEYWORDS,
            cache: BTreeMap::new(),
        }
    }

    pub fn with_limits(mut self, depth: usize, keywords: usize) -> Self {
        self.depth = depth;
        self.keywords = keywords;
        self.cache.clear();
        self
    }

    pub fn index(&self) -> &PositionalIndex {
        &self.index
    }

    pub fn params(&self) -> LmParams {
        self.params
    }

    fn profile(&self, model: &QueryModel) -> EsaProfile {
        if model.is_empty() {
            return EsaProfile::default();
        }
        let list = retrieve_model("esa", model, &self.index, self.params, self.depth);
        let (lo, hi) = list
            .entries()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
                (lo.min(*s), hi.max(*s))
            });
        let mut scores: Vec<(u32, f64)> = list
            .entries()
            .iter()
            .map(|(id, s)| {
                let norm = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
                (
                    self.index.doc_index(id).expect("retrieved from this index") as u32,
                    norm,
                )
            })
            .collect();
        scores.sort_unstable_by_key(|&(d, _)| d);
        EsaProfile { scores }
    }

    pub fn query_profile<'a, I: IntoIterator<Item = &'a str>>(&self, stems: I) -> EsaProfile {
        self.profile(&QueryModel::from_stems(stems, &self.index))
    }

    /// The highest tf·idf stems of a token span (stopwords skipped, ties by
    /// stem), resolved in the concept space.
    pub fn keywords(&self, tokens: &[Token]) -> Vec<TermId> {
        let mut tf: BTreeMap<TermId, u32> = BTreeMap::new();
        for t in tokens.iter().filter(|t| !t.is_stopword) {
            if let Some(id) = self.index.term_id(&t.stem) {
                *tf.entry(id).or_default() += 1;
            }
        }
        let n = self.index.num_docs() as f64;
        let mut scored: Vec<(f64, &str, TermId)> = tf
            .into_iter()
            .filter(|&(t, _)| self.index.df(t) > 0)
            .map(|(t, c)| {
                (
                    c as f64 * crate::math::ln(n / self.index.df(t) as f64),
                    self.index.term(t),
                    t,
                )
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored
            .into_iter()
            .take(self.keywords)
            .map(|(_, _, t)| t)
            .collect()
    }

    pub fn passage_profile(&self, tokens: &[Token]) -> EsaProfile {
        self.profile(&QueryModel::from_terms(&self.keywords(tokens)))
    }

    /// Fills the passage cache so later lookups are reads only.
    pub fn precompute<'a, I>(&mut self, passages: I)
    where
        I: IntoIterator<Item = (&'a str, &'a [Token])>,
    {
        for (id, tokens) in passages {
            if !self.cache.contains_key(id) {
                let p = self.passage_profile(tokens);
                self.cache.insert(id.to_string(), p);
            }
        }
    }

    pub fn cached(&self, passage_id: &str) -> Option<&EsaProfile> {
        self.cache.get(passage_id)
    }
}

/// Optional semantic resources. A missing table zeroes its feature.
#[derive(Debug, Clone, Default)]
pub struct SemanticResources {
    pub embeddings: Option<Embeddings>,
    pub synonyms: Option<SynonymTable>,
    pub entities: Option<EntityAnnotations>,
    pub esa: Option<EsaSpace>,
}

impl SemanticResources {
    /// Names of the features that evaluate to 0 for lack of a resource.
    pub fn degradations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.esa.is_none() {
            out.push(ESA);
        }
        if self.embeddings.is_none() {
            out.push(W2V);
        }
        if self.synonyms.is_none() {
            out.push(SYNONYMS_OVERLAP);
        }
        if self.entities.is_none() {
            out.push(ENTITY);
        }
        out
    }
}

/// Whether `needle` occurs contiguously in `hay`.
pub fn contains_run(hay: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty()
        && needle.len() <= hay.len()
        && hay.windows(needle.len()).any(|w| w == needle)
}

/// Query-level state shared by every passage feature of one query: the
/// document set `S_doc`, its passages `S_psg` and all query similarities.
pub struct PassageContext<'a> {
    query: &'a Query,
    model: QueryModel,
    index: &'a PositionalIndex,
    store: &'a CorpusStore,
    segmented: &'a SegmentedCorpus,
    resources: &'a SemanticResources,
    params: LmParams,
    s_doc: Vec<usize>,
    doc_sims: Vec<f64>,
    psg_sims: Vec<Vec<f64>>,
    doc_sim_sum: f64,
    psg_sim_sum: f64,
    query_esa: Option<EsaProfile>,
    query_centroid: Option<Vec<f64>>,
    schema: Arc<FeatureSchema>,
}

impl<'a> PassageContext<'a> {
    /// `s_doc` lists the document ids of `S_doc`; the store, index and
    /// segmentation must all come from the same corpus.
    pub fn new(
        query: &'a Query,
        s_doc: &[&str],
        store: &'a CorpusStore,
        index: &'a PositionalIndex,
        segmented: &'a SegmentedCorpus,
        resources: &'a SemanticResources,
        params: LmParams,
    ) -> Result<Self> {
        let model = index.query_model(query);
        let mut docs = Vec::with_capacity(s_doc.len());
        for id in s_doc {
            let pos = index
                .doc_index(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown document `{id}`")))?;
            if store.position(id) != Some(pos) {
                return Err(Error::InvalidParameter(format!(
                    "store and index disagree on the position of `{id}`"
                )));
            }
            docs.push(pos);
        }
        let doc_sims: Vec<f64> = docs
            .iter()
            .map(|&d| lm_similarity(&model, index.doc_bag(d), index, params))
            .collect();
        let psg_sims: Vec<Vec<f64>> = docs
            .iter()
            .map(|&d| {
                segmented
                    .of_doc(d)
                    .iter()
                    .map(|p| {
                        let bag = TermBag::from_terms(
                            &index.doc_terms(d)[p.token_range.0..p.token_range.1],
                        );
                        lm_similarity(&model, &bag, index, params)
                    })
                    .collect()
            })
            .collect();
        let doc_sim_sum = doc_sims.iter().sum();
        let psg_sim_sum = psg_sims.iter().flatten().sum();
        let query_esa = resources
            .esa
            .as_ref()
            .map(|e| e.query_profile(query.stems()));
        let query_centroid = resources
            .embeddings
            .as_ref()
            .and_then(|e| e.centroid(query.stems()));
        Ok(Self {
            query,
            model,
            index,
            store,
            segmented,
            resources,
            params,
            s_doc: docs,
            doc_sims,
            psg_sims,
            doc_sim_sum,
            psg_sim_sum,
            query_esa,
            query_centroid,
            schema: FeatureSchema::psg20(),
        })
    }

    pub fn query(&self) -> &Query {
        self.query
    }

    pub fn query_model(&self) -> &QueryModel {
        &self.model
    }

    pub fn params(&self) -> LmParams {
        self.params
    }

    /// Number of documents in `S_doc`.
    pub fn num_docs(&self) -> usize {
        self.s_doc.len()
    }

    /// Corpus position of the `slot`-th document of `S_doc`.
    pub fn doc_position(&self, slot: usize) -> usize {
        self.s_doc[slot]
    }

    pub fn doc_id(&self, slot: usize) -> &str {
        self.index.doc_id(self.s_doc[slot])
    }

    pub fn passages(&self, slot: usize) -> &'a [Passage] {
        self.segmented.of_doc(self.s_doc[slot])
    }

    /// Raw `sim(q, d)` of the `slot`-th document.
    pub fn doc_sim(&self, slot: usize) -> f64 {
        self.doc_sims[slot]
    }

    /// Raw `sim(q, g)` of a passage.
    pub fn psg_sim(&self, slot: usize, ordinal: usize) -> f64 {
        self.psg_sims[slot][ordinal]
    }

    pub fn doc_sim_sum(&self) -> f64 {
        self.doc_sim_sum
    }

    pub fn psg_sim_sum(&self) -> f64 {
        self.psg_sim_sum
    }

    /// `(slot, passage)` for every passage of `S_psg`, in document order.
    pub fn iter_passages(&self) -> impl Iterator<Item = (usize, &'a Passage)> + '_ {
        (0..self.s_doc.len()).flat_map(move |s| self.passages(s).iter().map(move |p| (s, p)))
    }

    fn passage_tokens(&self, slot: usize, p: &Passage) -> &'a [Token] {
        let doc = &self.store.docs()[self.s_doc[slot]];
        &doc.tokens[p.token_range.0..p.token_range.1]
    }

    /// The PSG20 values of one passage.
    pub fn values(&self, slot: usize, ordinal: usize) -> [f64; 20] {
        let d = self.s_doc[slot];
        let passages = self.passages(slot);
        let p = &passages[ordinal];
        let tokens = self.passage_tokens(slot, p);
        let terms = &self.index.doc_terms(d)[p.token_range.0..p.token_range.1];
        let sims = &self.psg_sims[slot];
        let sim = sims[ordinal];
        let norm = |x: f64, sum: f64| if sum > 0.0 { x / sum } else { 0.0 };

        let max_pd = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (avg_pd, std_pd) = mean_std(sims);
        let doc_len = self.index.doc_len(d);
        let length_ratio = if doc_len == 0 {
            1.0
        } else {
            p.len() as f64 / doc_len as f64
        };
        let (pre, follow) = neighbors(passages, ordinal);
        let (sw1, sw2, ent) = text_priors(tokens, terms, self.store.analyzer().stopwords());

        let query_stems: Vec<&str> = self.query.stems().collect();
        let unique: BTreeSet<&str> = query_stems.iter().copied().collect();
        let passage_stems: BTreeSet<&str> = tokens.iter().map(|t| t.stem.as_str()).collect();
        let content: Vec<&str> = tokens
            .iter()
            .filter(|t| !t.is_stopword)
            .map(|t| t.stem.as_str())
            .collect();
        let exact = contains_run(&content, &query_stems);
        let frac = |hits: usize| {
            if unique.is_empty() {
                0.0
            } else {
                hits as f64 / unique.len() as f64
            }
        };
        let term_overlap = frac(unique.iter().filter(|s| passage_stems.contains(*s)).count());
        let synonyms_overlap = match &self.resources.synonyms {
            None => 0.0,
            Some(table) => frac(
                unique
                    .iter()
                    .filter(|s| {
                        passage_stems.contains(*s)
                            || table.synonyms(s).any(|syn| passage_stems.contains(syn))
                    })
                    .count(),
            ),
        };
        let location = (p.ordinal + 1) as f64 / passages.len() as f64;

        let esa = match (&self.resources.esa, &self.query_esa) {
            (Some(space), Some(q)) => match space.cached(&p.passage_id) {
                Some(prof) => q.cosine(prof),
                None => q.cosine(&space.passage_profile(tokens)),
            },
            _ => 0.0,
        };
        let w2v = match (&self.resources.embeddings, &self.query_centroid) {
            (Some(e), Some(qc)) => e
                .centroid(content.iter().copied())
                .map(|c| cosine(qc, &c))
                .unwrap_or(0.0),
            _ => 0.0,
        };
        let entity = match &self.resources.entities {
            Some(ann) => {
                let empty = BTreeSet::new();
                jaccard(
                    ann.entities(&self.query.query_id).unwrap_or(&empty),
                    ann.entities(&p.passage_id).unwrap_or(&empty),
                )
            }
            None => 0.0,
        };

        [
            norm(sim, self.psg_sim_sum),
            norm(self.doc_sims[slot], self.doc_sim_sum),
            max_pd,
            avg_pd,
            std_pd,
            length_ratio,
            sims[pre.ordinal],
            sims[follow.ordinal],
            ent,
            sw1,
            sw2,
            self.query.unique_term_count as f64,
            if exact { 1.0 } else { 0.0 },
            term_overlap,
            synonyms_overlap,
            content.len() as f64,
            location,
            esa,
            w2v,
            entity,
        ]
    }

    pub fn features(&self, slot: usize, ordinal: usize) -> Result<FeatureVector> {
        let p = &self.passages(slot)[ordinal];
        FeatureVector::new(
            self.schema.clone(),
            self.values(slot, ordinal).to_vec(),
            &self.query.query_id,
            &p.passage_id,
        )
    }

    /// PSG20 vectors of every passage of `S_psg`, in document order.
    pub fn all_features(&self) -> Result<Vec<FeatureVector>> {
        self.iter_passages()
            .map(|(s, p)| self.features(s, p.ordinal))
            .collect()
    }

    pub fn index(&self) -> &'a PositionalIndex {
        self.index
    }

    pub fn store(&self) -> &'a CorpusStore {
        self.store
    }
}
