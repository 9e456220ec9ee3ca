//! Leave-one-out experiment harness.
//!
//! Each fold holds out one query. The remaining queries are split into a
//! training part and a validation part; learned rankers are fit on the
//! training part and their hyperparameters picked on the validation part,
//! while the unsupervised baselines are tuned on both parts together. Every
//! grade lookup inside a fold goes through a judgment set restricted to the
//! fold's non-test queries, so the held-out query's judgments cannot reach
//! its models.
//!
//! A fold runs in three stages:
//!
//! 1. the initial learned document ranker over the six document features,
//!    which also fixes the Dirichlet μ for everything downstream;
//! 2. the learned passage ranker, trained on the top QSF passages;
//! 3. the configured document re-rankers on top of both.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use psgrank_core::eval::{
    average_precision, interpolated_precision, paired_ttest, precision_at, CvPlan, Fold,
    JudgmentMode, JudgmentSet,
};
use psgrank_core::features::{
    doc_feature_vectors, minmax_normalize, Composition, EsaSpace, FeatureSchema, FeatureVector,
    PassageContext, SchemaPart, SemanticResources,
};
use psgrank_core::index::{retrieve_lm, LmParams, SdmComponents, SdmWeights};
use psgrank_core::ltr::{
    ndcg_at_k, train_coordinate_ascent, train_pairwise, CoordinateAscentParams, GradedExample,
    LinearModel, PairwiseParams, QueryGroup, TrainerKind,
};
use psgrank_core::passage::{Segmentation, SegmentedCorpus};
use psgrank_core::rank::{
    build_fpd_vectors, build_jpd2_vectors, build_jpdm_vectors, build_jpds_vectors,
    build_smpd_vectors, fpd_composition, jpd2_composition, jpdm_composition, jpds_composition,
    positional_sims, rank_docpsg, rank_plm_with, rank_qsf, rank_sdm, rerank_fpd, rerank_rrf,
    smpd_composition, Aggregate, DocInputs, FusionParams, Method, PassageRanking, PlmParams, Which,
};
use psgrank_core::text::Query;
use psgrank_core::RankedList;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::formats::{write_model, write_run};
use crate::io;
use crate::store::{Corpus, Manifest};

/// Everything an experiment reads, loaded and checked up front.
pub struct Dataset {
    pub config: ExperimentConfig,
    pub corpus: Corpus,
    pub segmented: SegmentedCorpus,
    /// Queries with at least one relevant document, sorted by id.
    pub queries: Vec<Query>,
    pub dropped_queries: Vec<String>,
    pub judgments: JudgmentSet,
    pub resources: SemanticResources,
    pub resource_ids: BTreeMap<String, String>,
    /// Initial LM retrieval per query.
    pub c_init: BTreeMap<String, RankedList>,
}

fn lm(mu: f64) -> Result<LmParams> {
    Ok(LmParams::new(mu)?)
}

impl Dataset {
    /// Loads every input named by `config`; relative paths resolve against `base`.
    pub fn load(config: ExperimentConfig, base: &Path) -> Result<Self> {
        config.validate(base)?;
        let path = |p: &Path| io::resolve(base, p);
        let paths = &config.paths;
        let corpus = Corpus::open(
            &path(&paths.corpus),
            config.corpus_format(),
            paths.stopwords.as_deref().map(path).as_deref(),
        )?;
        let mode = if config.segmentation.sentences {
            Segmentation::Sentences
        } else {
            Segmentation::window(config.segmentation.window)?
        };
        let segmented = SegmentedCorpus::new(&corpus.store, mode);

        let topics_path = path(&paths.topics);
        let topics = io::parse_topics(&io::read_text(&topics_path)?, &topics_path)?;
        let psg_text = match &paths.psg_qrels {
            Some(p) => Some((path(p), io::read_text(&path(p))?)),
            None => None,
        };
        let jmode = match &psg_text {
            Some((p, t)) => io::passage_qrels_mode(t, p)?,
            None => JudgmentMode::DocGraded,
        };
        let mut judgments = JudgmentSet::new(jmode);
        let qrels_path = path(&paths.doc_qrels);
        io::parse_doc_qrels(&io::read_text(&qrels_path)?, &qrels_path, &mut judgments)?;
        if let Some((p, t)) = &psg_text {
            io::parse_passage_qrels(t, p, &mut judgments)?;
        }
        if jmode == JudgmentMode::SentenceBinary {
            judgments.resolve_sentences(&segmented)?;
        }
        judgments
            .check_bounds(|d| corpus.store.get(d).map(|d| d.raw_text.len()))
            .map_err(|e| Error::invalid(e.to_string()))?;

        let analyzer = corpus.store.analyzer();
        let (mut queries, mut dropped) = (Vec::new(), Vec::new());
        for (id, text) in &topics {
            if judgments.relevant_docs(id) > 0 {
                queries.push(analyzer.query(id, text));
            } else {
                dropped.push(id.clone());
            }
        }
        queries.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        if queries.len() < 2 {
            return Err(Error::invalid(format!(
                "leave-one-out needs at least 2 queries with relevant documents, found {}",
                queries.len()
            )));
        }

        let mut resource_ids = BTreeMap::new();
        let mut resources = SemanticResources::default();
        if let Some(p) = &paths.embeddings {
            resources.embeddings = Some(io::parse_embeddings(
                &io::read_text(&path(p))?,
                &path(p),
                analyzer,
            )?);
            resource_ids.insert("embeddings".into(), path(p).display().to_string());
        }
        if let Some(p) = &paths.synonyms {
            resources.synonyms = Some(io::parse_synonyms(
                &io::read_text(&path(p))?,
                &path(p),
                analyzer,
            )?);
            resource_ids.insert("synonyms".into(), path(p).display().to_string());
        }
        if let Some(p) = &paths.entities {
            resources.entities = Some(io::parse_entities(&io::read_text(&path(p))?, &path(p))?);
            resource_ids.insert("entities".into(), path(p).display().to_string());
        }

        let init = lm(config.grids.init_mu)?;
        let c_init: BTreeMap<String, RankedList> = queries
            .par_iter()
            .map(|q| {
                (
                    q.query_id.clone(),
                    retrieve_lm(q, &corpus.index, init, config.cutoffs.docs),
                )
            })
            .collect();

        if config.esa.enabled {
            let mut esa = EsaSpace::new(corpus.index.clone(), init)
                .with_limits(config.esa.depth, config.esa.keywords);
            let docs: BTreeSet<&str> = c_init.values().flat_map(|l| l.ids()).collect();
            let store = &corpus.store;
            esa.precompute(docs.iter().flat_map(|d| {
                let pos = store.position(d).expect("retrieved from this corpus");
                let doc = &store.docs()[pos];
                segmented.of_doc(pos).iter().map(move |p| {
                    (
                        p.passage_id.as_str(),
                        &doc.tokens[p.token_range.0..p.token_range.1],
                    )
                })
            }));
            resources.esa = Some(esa);
            resource_ids.insert(
                "esa".into(),
                format!(
                    "experiment corpus {} (depth {}, keywords {})",
                    corpus.manifest.docs_sha256, config.esa.depth, config.esa.keywords
                ),
            );
        }
        resource_ids.insert("corpus".into(), corpus.manifest.docs_sha256.clone());

        Ok(Self {
            config,
            corpus,
            segmented,
            queries,
            dropped_queries: dropped,
            judgments,
            resources,
            resource_ids,
            c_init,
        })
    }

    pub fn query_ids(&self) -> Vec<&str> {
        self.queries.iter().map(|q| q.query_id.as_str()).collect()
    }
}

/// Fold-independent per-query state at one μ.
pub struct QueryData<'d> {
    pub ctx: PassageContext<'d>,
    pub docs: Vec<String>,
    pub sdm: Vec<SdmComponents>,
    /// Normalized DOC6 vectors in `docs` order.
    pub doc_vectors: Vec<FeatureVector>,
    /// Normalized PSG20 vectors of every passage, in context order.
    pub passage_vectors: Vec<FeatureVector>,
    pub inputs: DocInputs,
    /// Positional similarities per PLM σ, when PLM runs.
    pub plm: Vec<Vec<f64>>,
}

impl<'d> QueryData<'d> {
    fn build(ds: &'d Dataset, query: &'d Query, mu: f64, plm_sigmas: &[f64]) -> Result<Self> {
        let params = lm(mu)?;
        let docs: Vec<String> = ds.c_init[&query.query_id]
            .ids()
            .map(str::to_string)
            .collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let store = &ds.corpus.store;
        let index = &*ds.corpus.index;
        let ctx = PassageContext::new(
            query,
            &refs,
            store,
            index,
            &ds.segmented,
            &ds.resources,
            params,
        )?;
        let raw = doc_feature_vectors(query, &refs, store, index, params)?;
        let sdm = raw
            .iter()
            .map(|v| SdmComponents {
                unigram: v.values[0],
                ordered: v.values[1],
                unordered: v.values[2],
            })
            .collect();
        let mut doc_vectors = raw;
        minmax_normalize(&mut doc_vectors);
        let mut passage_vectors = ctx.all_features()?;
        minmax_normalize(&mut passage_vectors);
        let mut inputs = DocInputs {
            query_id: query.query_id.clone(),
            ..Default::default()
        };
        for v in &doc_vectors {
            inputs.doc_vectors.insert(v.item_id.clone(), v.clone());
        }
        for v in &passage_vectors {
            inputs.passage_vectors.insert(v.item_id.clone(), v.clone());
        }
        for s in 0..ctx.num_docs() {
            inputs.doc_passages.insert(
                ctx.doc_id(s).to_string(),
                ctx.passages(s)
                    .iter()
                    .map(|p| p.passage_id.clone())
                    .collect(),
            );
        }
        let plm = plm_sigmas
            .iter()
            .map(|&s| positional_sims(&ctx, s))
            .collect();
        Ok(Self {
            ctx,
            docs,
            sdm,
            doc_vectors,
            passage_vectors,
            inputs,
            plm,
        })
    }
}

/// One hyperparameter setting of an unsupervised baseline.
#[derive(Debug, Clone, Copy)]
enum Setting {
    Sdm(usize, SdmWeights),
    DocPsg(usize, f64),
    Qsf(usize, f64),
    Plm(usize, usize, PlmParams),
}

impl Setting {
    fn mu_index(self) -> usize {
        match self {
            Setting::Sdm(m, _)
            | Setting::DocPsg(m, _)
            | Setting::Qsf(m, _)
            | Setting::Plm(m, _, _) => m,
        }
    }
}

/// Per-query effectiveness of every setting of one baseline. Rows are filled
/// per query from that query's own judgments; a fold sums only the rows of
/// its non-test queries.
struct Table {
    settings: Vec<Setting>,
    /// `scores[setting][query]`.
    scores: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn best(&self, queries: &[usize], allowed: impl Fn(Setting) -> bool) -> Option<Setting> {
        let mut best: Option<(Setting, f64)> = None;
        for (s, row) in self.settings.iter().zip(&self.scores) {
            if !allowed(*s) {
                continue;
            }
            let v = mean(queries.iter().filter_map(|&q| row[q]));
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((*s, v));
            }
        }
        best.map(|(s, _)| s)
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// FNV-1a, to derive stable per-model seeds from labels.
fn mix(seed: u64, label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325 ^ seed, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Queries of one fold as indices into the dataset's query list.
struct FoldQueries {
    test: usize,
    train: Vec<usize>,
    validation: Vec<usize>,
    judgments: JudgmentSet,
}

impl FoldQueries {
    /// Where learned hyperparameters are picked.
    fn tuning(&self) -> &[usize] {
        if self.validation.is_empty() {
            &self.train
        } else {
            &self.validation
        }
    }

    fn non_test(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        v.sort_unstable();
        v
    }

    fn all(&self) -> Vec<usize> {
        let mut v = self.non_test();
        v.push(self.test);
        v
    }
}

/// Output of one fold.
struct FoldOutput {
    runs: BTreeMap<Method, RankedList>,
    models: BTreeMap<String, String>,
    chosen: BTreeMap<String, BTreeMap<String, f64>>,
}

struct Ranker {
    model: LinearModel,
    mu_index: usize,
    lists: BTreeMap<usize, RankedList>,
}

/// A prepared experiment: materials for every query at every μ.
pub struct Experiment<'d> {
    ds: &'d Dataset,
    mats: Vec<Vec<QueryData<'d>>>,
    methods: Vec<Method>,
    trainer: TrainerKind,
    tables: BTreeMap<Method, Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub measure: String,
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub significant: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRecord {
    pub test: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    /// Selected hyperparameters per method.
    pub chosen: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub seed: u64,
    pub trainer: String,
    pub methods: Vec<String>,
    pub segmentation: String,
    pub judgment_mode: String,
    pub corpus: Manifest,
    pub resources: BTreeMap<String, String>,
    pub degraded_features: Vec<String>,
    pub ablated: Vec<String>,
    pub queries: Vec<String>,
    pub dropped_queries: Vec<String>,
    pub config: ExperimentConfig,
    pub folds: Vec<FoldRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    /// Mean of every measure per method.
    pub summary: BTreeMap<String, BTreeMap<String, f64>>,
    /// `method → query → measure → value`.
    pub per_query: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    pub significance: Vec<Comparison>,
    pub manifest: RunManifest,
}

/// Files an experiment produces, by path relative to the output directory.
pub struct ExperimentOutput {
    pub report: Report,
    pub files: BTreeMap<PathBuf, String>,
}

impl ExperimentOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rel, text) in &self.files {
            io::write_text(&dir.join(rel), text)?;
        }
        Ok(())
    }

    pub fn summary(&self, method: &str, measure: &str) -> Option<f64> {
        self.report
            .summary
            .get(method)
            .and_then(|m| m.get(measure))
            .copied()
    }
}

pub const DOC_MEASURES: [&str; 3] = ["AP", "P@10", "NDCG@10"];
pub const PSG_MEASURES: [&str; 3] = ["MAiP", "iP[0.01]", "iP[0.1]"];

fn summary_name(measure: &str) -> &str {
    if measure == "AP" {
        "MAP"
    } else {
        measure
    }
}

fn sdm_weights(w: &SdmWeights) -> [(String, f64); 3] {
    [
        ("w_T".into(), w.unigram),
        ("w_O".into(), w.ordered),
        ("w_U".into(), w.unordered),
    ]
}

/// Names in `schema` that an ablation of `feature` removes: the name itself
/// or any prefixed copy (`p:ESA`, `p2:ESA`, …).
fn ablated_names<'s>(schema: &'s FeatureSchema, feature: &str) -> Vec<&'s str> {
    schema
        .features()
        .iter()
        .map(String::as_str)
        .filter(|n| *n == feature || n.rsplit_once(':').is_some_and(|(_, base)| base == feature))
        .collect()
}

/// The model schema each learned method trains on.
pub fn method_schema(
    method: Method,
    include_query_length: bool,
) -> Option<std::sync::Arc<FeatureSchema>> {
    let iql = include_query_length;
    Some(match method {
        Method::InitLtr => FeatureSchema::doc6(),
        Method::PsgLtr => FeatureSchema::psg20(),
        Method::Jpds | Method::JpdsSecond | Method::JpdsThird | Method::JpdsLowest => {
            jpds_composition(iql).schema().clone()
        }
        Method::Jpd2 => jpd2_composition(iql).schema().clone(),
        Method::JpdmAvg => jpdm_composition(Aggregate::Avg, iql).schema().clone(),
        Method::JpdmMax => jpdm_composition(Aggregate::Max, iql).schema().clone(),
        Method::JpdmMin => jpdm_composition(Aggregate::Min, iql).schema().clone(),
        Method::Fpd => fpd_composition(iql).schema().clone(),
        Method::Smpd => smpd_composition().schema().clone(),
        _ => return None,
    })
}

fn needs_passage_ranker(m: Method) -> bool {
    matches!(
        m,
        Method::Rrf
            | Method::Smpd
            | Method::Jpds
            | Method::JpdsSecond
            | Method::JpdsThird
            | Method::JpdsLowest
            | Method::Jpd2
            | Method::Fpd
            | Method::PsgLtr
    )
}

impl<'d> Experiment<'d> {
    pub fn prepare(ds: &'d Dataset) -> Result<Self> {
        let cfg = &ds.config;
        let methods = cfg.parsed_methods();
        let trainer = cfg
            .trainer_kind()
            .ok_or_else(|| Error::invalid(format!("unknown trainer `{}`", cfg.trainer)))?;
        let sigmas: &[f64] = if methods.contains(&Method::Plm) {
            &cfg.grids.plm_sigma
        } else {
            &[]
        };
        let mats = cfg
            .grids
            .mu
            .iter()
            .map(|&mu| {
                ds.queries
                    .par_iter()
                    .map(|q| QueryData::build(ds, q, mu, sigmas))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        log::info!(
            "prepared {} queries at {} values of mu",
            ds.queries.len(),
            cfg.grids.mu.len()
        );
        let mut exp = Self {
            ds,
            mats,
            methods,
            trainer,
            tables: BTreeMap::new(),
        };
        exp.tables = exp.baseline_tables()?;
        Ok(exp)
    }

    fn cfg(&self) -> &ExperimentConfig {
        &self.ds.config
    }

    fn learned(&self) -> bool {
        self.methods.iter().any(|m| m.needs_trainer())
    }

    fn qid(&self, q: usize) -> &str {
        &self.ds.queries[q].query_id
    }

    fn ap(&self, list: &RankedList, j: &JudgmentSet) -> Option<f64> {
        average_precision(list, j.doc_grades(&list.query_id), self.cfg().cutoffs.docs)
    }

    fn map(&self, lists: &BTreeMap<usize, RankedList>, queries: &[usize], j: &JudgmentSet) -> f64 {
        mean(queries.iter().filter_map(|q| self.ap(&lists[q], j)))
    }

    /// MAiP of a passage list; NDCG@k over document grades when the
    /// judgments carry no passage-level information.
    fn psg_metric(&self, list: &RankedList, j: &JudgmentSet) -> Result<Option<f64>> {
        let list = list.clone().truncated(self.cfg().cutoffs.passages);
        if j.mode() == JudgmentMode::DocGraded {
            if j.relevant_docs(&list.query_id) == 0 {
                return Ok(None);
            }
            let grades: BTreeMap<String, u8> = list
                .ids()
                .filter_map(|id| {
                    self.ds
                        .segmented
                        .get(id)
                        .map(|p| (id.to_string(), j.passage_grade(&list.query_id, p)))
                })
                .collect();
            return Ok(Some(ndcg_at_k(&list, &grades, self.cfg().training.ndcg_k)));
        }
        Ok(interpolated_precision(&list, j, &self.ds.segmented)?.map(|ip| ip.maip))
    }

    fn baseline_tables(&self) -> Result<BTreeMap<Method, Table>> {
        let cfg = self.cfg();
        let g = &cfg.grids;
        let mut wanted: Vec<Method> = self
            .methods
            .iter()
            .copied()
            .filter(|m| matches!(m, Method::Sdm | Method::DocPsg | Method::Qsf | Method::Plm))
            .collect();
        if self.learned() && !wanted.contains(&Method::Qsf) {
            wanted.push(Method::Qsf);
        }
        let mut tables = BTreeMap::new();
        for m in wanted {
            let mut settings = Vec::new();
            for mi in 0..g.mu.len() {
                match m {
                    Method::Sdm => settings.extend(
                        SdmWeights::simplex_grid(g.sdm_steps)
                            .into_iter()
                            .map(|w| Setting::Sdm(mi, w)),
                    ),
                    Method::DocPsg => {
                        settings.extend(g.docpsg_lambda.iter().map(|&l| Setting::DocPsg(mi, l)))
                    }
                    Method::Qsf => {
                        settings.extend(g.qsf_lambda.iter().map(|&l| Setting::Qsf(mi, l)))
                    }
                    Method::Plm => {
                        for (si, &sigma) in g.plm_sigma.iter().enumerate() {
                            for &lambda in &g.plm_weight {
                                for &beta in
                                    g.plm_weight.iter().filter(|&&b| lambda + b <= 1.0 + 1e-9)
                                {
                                    let beta = beta.min(1.0 - lambda).max(0.0);
                                    settings.push(Setting::Plm(
                                        mi,
                                        si,
                                        PlmParams::new(sigma, lambda, beta)?,
                                    ));
                                }
                            }
                        }
                    }
                    _ => unreachable!("only unsupervised baselines have tables"),
                }
            }
            let scores = settings
                .par_iter()
                .map(|&s| {
                    (0..self.ds.queries.len())
                        .map(|q| {
                            let list = self.baseline_list(s, q)?;
                            if m.ranks_passages() {
                                self.psg_metric(&list, &self.ds.judgments)
                            } else {
                                Ok(self.ap(&list, &self.ds.judgments))
                            }
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            tables.insert(m, Table { settings, scores });
        }
        Ok(tables)
    }

    fn baseline_list(&self, s: Setting, q: usize) -> Result<RankedList> {
        let cut = &self.cfg().cutoffs;
        let d = &self.mats[s.mu_index()][q];
        Ok(match s {
            Setting::Sdm(_, w) => rank_sdm(
                self.qid(q),
                d.docs.iter().map(String::as_str).zip(d.sdm.iter().copied()),
                w,
            )
            .truncated(cut.docs),
            Setting::DocPsg(_, l) => rank_docpsg(&d.ctx, l)?.truncated(cut.docs),
            Setting::Qsf(_, l) => rank_qsf(&d.ctx, l)?.truncated(cut.passages),
            Setting::Plm(_, si, p) => rank_plm_with(&d.ctx, &d.plm[si], p)?.truncated(cut.passages),
        })
    }

    fn setting_params(&self, s: Setting) -> BTreeMap<String, f64> {
        let mu = self.cfg().grids.mu[s.mu_index()];
        let mut out = BTreeMap::from([("mu".to_string(), mu)]);
        match s {
            Setting::Sdm(_, w) => out.extend(sdm_weights(&w)),
            Setting::DocPsg(_, l) => {
                out.insert("lambda_max".into(), l);
            }
            Setting::Qsf(_, l) => {
                out.insert("lambda".into(), l);
            }
            Setting::Plm(_, _, p) => out.extend([
                ("sigma".into(), p.sigma),
                ("lambda".into(), p.lambda),
                ("beta".into(), p.beta),
            ]),
        }
        out
    }

    fn trainer_settings(&self) -> Vec<Option<f64>> {
        match self.trainer {
            TrainerKind::PairwiseHinge => self.cfg().grids.svm_c.iter().map(|&c| Some(c)).collect(),
            TrainerKind::CoordinateAscent => vec![None],
        }
    }

    fn train(
        &self,
        groups: &[QueryGroup],
        c: Option<f64>,
        seed: u64,
        mu: f64,
    ) -> Result<LinearModel> {
        let t = &self.cfg().training;
        let mut model = match (self.trainer, c) {
            (TrainerKind::PairwiseHinge, Some(c)) => {
                train_pairwise(
                    groups,
                    &PairwiseParams {
                        c,
                        epochs: t.epochs,
                        seed,
                        max_pairs: t.max_pairs,
                    },
                )?
                .0
            }
            _ => {
                let p = CoordinateAscentParams {
                    restarts: t.ca_restarts,
                    iterations: t.ca_iterations,
                    k: t.ndcg_k,
                    seed,
                    ..Default::default()
                };
                train_coordinate_ascent(groups, &p)?.0
            }
        };
        model.hyperparams.insert("mu".into(), mu);
        Ok(model)
    }

    /// Drops the ablated features from vectors whose schema has them.
    fn project(
        &self,
        vectors: Vec<FeatureVector>,
        ablate: &[String],
    ) -> Result<Vec<FeatureVector>> {
        let Some(first) = vectors.first() else {
            return Ok(vectors);
        };
        let schema = first.schema.clone();
        let drop: Vec<&str> = ablate
            .iter()
            .flat_map(|f| ablated_names(&schema, f))
            .collect();
        if drop.is_empty() {
            return Ok(vectors);
        }
        let plan = Composition::new(
            &format!("{}-ablated", schema.name()),
            &[SchemaPart {
                prefix: "",
                schema: &schema,
                exclusions: &drop,
            }],
        )?;
        Ok(vectors
            .iter()
            .map(|v| plan.apply(&v.item_id, &[v]))
            .collect::<std::result::Result<_, _>>()?)
    }

    fn doc_groups(
        &self,
        vectors: &BTreeMap<usize, Vec<FeatureVector>>,
        queries: &[usize],
        j: &JudgmentSet,
    ) -> Vec<QueryGroup> {
        queries
            .iter()
            .map(|&q| {
                let grades = j.doc_grades(self.qid(q));
                let examples = vectors[&q]
                    .iter()
                    .map(|v| GradedExample {
                        vector: v.clone(),
                        grade: grades.and_then(|g| g.get(&v.item_id)).copied().unwrap_or(0),
                    })
                    .collect();
                QueryGroup::new(self.qid(q), examples)
            })
            .collect()
    }

    fn score_all(
        &self,
        model: &LinearModel,
        vectors: &BTreeMap<usize, Vec<FeatureVector>>,
    ) -> Result<BTreeMap<usize, RankedList>> {
        vectors
            .iter()
            .map(|(&q, vs)| Ok((q, model.score(self.qid(q), vs)?)))
            .collect()
    }

    /// Trains on the fold's training queries and keeps the setting with the
    /// best validation MAP after `finish` maps model scores to final lists.
    /// `extras` is an extra grid searched jointly with the trainer setting.
    fn fit_documents<V, F>(
        &self,
        fq: &FoldQueries,
        label: &str,
        mu_index: usize,
        extras: &[f64],
        vectors: V,
        finish: F,
    ) -> Result<(Ranker, BTreeMap<String, f64>)>
    where
        V: Fn(usize, f64) -> Result<Vec<FeatureVector>>,
        F: Fn(usize, RankedList, &[f64]) -> Result<RankedList>,
    {
        self.fit_documents_with(fq, label, mu_index, extras, &[vec![]], vectors, finish)
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_documents_with<V, F>(
        &self,
        fq: &FoldQueries,
        label: &str,
        mu_index: usize,
        extras: &[f64],
        post: &[Vec<f64>],
        vectors: V,
        finish: F,
    ) -> Result<(Ranker, BTreeMap<String, f64>)>
    where
        V: Fn(usize, f64) -> Result<Vec<FeatureVector>>,
        F: Fn(usize, RankedList, &[f64]) -> Result<RankedList>,
    {
        let mu = self.cfg().grids.mu[mu_index];
        let mut best: Option<(f64, LinearModel, f64, usize)> = None;
        for &extra in extras {
            let vs: BTreeMap<usize, Vec<FeatureVector>> = fq
                .non_test()
                .into_iter()
                .map(|q| Ok((q, vectors(q, extra)?)))
                .collect::<Result<_>>()?;
            let groups = self.doc_groups(&vs, &fq.train, &fq.judgments);
            for c in self.trainer_settings() {
                let model = self.train(
                    &groups,
                    c,
                    mix(self.cfg().seed, &format!("{label}/{}", fq.test)),
                    mu,
                )?;
                let scored = self.score_all(&model, &vs)?;
                for (pi, p) in post.iter().enumerate() {
                    let lists = fq
                        .tuning()
                        .iter()
                        .map(|&q| Ok((q, finish(q, scored[&q].clone(), p)?)))
                        .collect::<Result<BTreeMap<_, _>>>()?;
                    let obj = self.map(&lists, fq.tuning(), &fq.judgments);
                    if best.as_ref().is_none_or(|b| obj > b.0) {
                        best = Some((obj, model.clone(), extra, pi));
                    }
                }
            }
        }
        let (_, model, extra, pi) = best.expect("grids are non-empty");
        let mut lists = BTreeMap::new();
        for q in fq.all() {
            let vs = vectors(q, extra)?;
            lists.insert(q, finish(q, model.score(self.qid(q), &vs)?, &post[pi])?);
        }
        let mut chosen: BTreeMap<String, f64> = model.hyperparams.clone();
        chosen.insert("extra".into(), extra);
        for (i, v) in post[pi].iter().enumerate() {
            chosen.insert(format!("post{i}"), *v);
        }
        Ok((
            Ranker {
                model,
                mu_index,
                lists,
            },
            chosen,
        ))
    }

    /// Stage 1: the DOC6 ranker, searched jointly over μ.
    fn initial_ranker(&self, fq: &FoldQueries, ablate: &[String]) -> Result<Ranker> {
        let mut best: Option<(f64, Ranker)> = None;
        for mi in 0..self.mats.len() {
            let (r, _) = self.fit_documents(
                fq,
                "init-LTR",
                mi,
                &[0.0],
                |q, _| self.project(self.mats[mi][q].doc_vectors.clone(), ablate),
                |_, l, _| Ok(l),
            )?;
            let obj = self.map(&r.lists, fq.tuning(), &fq.judgments);
            if best.as_ref().is_none_or(|b| obj > b.0) {
                best = Some((obj, r));
            }
        }
        Ok(best.expect("mu grid is non-empty").1)
    }

    fn passage_objective(
        &self,
        lists: &BTreeMap<usize, RankedList>,
        queries: &[usize],
        j: &JudgmentSet,
    ) -> Result<f64> {
        let mut vals = Vec::new();
        for q in queries {
            if let Some(v) = self.psg_metric(&lists[q], j)? {
                vals.push(v);
            }
        }
        Ok(mean(vals))
    }

    /// Stage 2: the PSG20 passage ranker at the stage-1 μ, trained on the
    /// top QSF passages of the training queries.
    fn passage_ranker(
        &self,
        fq: &FoldQueries,
        mu_index: usize,
        ablate: &[String],
    ) -> Result<(Ranker, f64)> {
        let non_test = fq.non_test();
        let qsf = self.tables[&Method::Qsf]
            .best(&non_test, |s| s.mu_index() == mu_index)
            .expect("qsf grid is non-empty");
        let Setting::Qsf(_, lambda) = qsf else {
            unreachable!("QSF table holds QSF settings")
        };
        let mats = &self.mats[mu_index];
        let j = &fq.judgments;
        let groups = fq
            .train
            .iter()
            .map(|&q| {
                let d = &mats[q];
                let top = rank_qsf(&d.ctx, lambda)?.truncated(self.cfg().cutoffs.passages);
                let vs = top
                    .ids()
                    .map(|id| d.inputs.passage_vectors[id].clone())
                    .collect();
                let vs = self.project(vs, ablate)?;
                let examples = vs
                    .into_iter()
                    .map(|v| {
                        let p = self
                            .ds
                            .segmented
                            .get(&v.item_id)
                            .expect("passage of this corpus");
                        GradedExample {
                            grade: j.passage_grade(self.qid(q), p),
                            vector: v,
                        }
                    })
                    .collect();
                Ok(QueryGroup::new(self.qid(q), examples))
            })
            .collect::<Result<Vec<_>>>()?;
        let all: BTreeMap<usize, Vec<FeatureVector>> = fq
            .all()
            .into_iter()
            .map(|q| Ok((q, self.project(mats[q].passage_vectors.clone(), ablate)?)))
            .collect::<Result<_>>()?;
        let mu = self.cfg().grids.mu[mu_index];
        let mut best: Option<(f64, LinearModel)> = None;
        for c in self.trainer_settings() {
            let model = self.train(
                &groups,
                c,
                mix(self.cfg().seed, &format!("PsgLTR/{}", fq.test)),
                mu,
            )?;
            let lists = fq
                .tuning()
                .iter()
                .map(|&q| Ok((q, model.score(self.qid(q), &all[&q])?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let obj = self.passage_objective(&lists, fq.tuning(), j)?;
            if best.as_ref().is_none_or(|b| obj > b.0) {
                best = Some((obj, model));
            }
        }
        let model = best.expect("trainer grid is non-empty").1;
        let lists = self.score_all(&model, &all)?;
        Ok((
            Ranker {
                model,
                mu_index,
                lists,
            },
            lambda,
        ))
    }

    fn run_fold(&self, fold: &Fold, ablate: &[String]) -> Result<FoldOutput> {
        let index: BTreeMap<&str, usize> = self
            .ds
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| (q.query_id.as_str(), i))
            .collect();
        let ids = |v: &[String]| v.iter().map(|q| index[q.as_str()]).collect::<Vec<_>>();
        let non_test: Vec<&str> = fold
            .train
            .iter()
            .chain(&fold.validation)
            .map(String::as_str)
            .collect();
        let fq = FoldQueries {
            test: index[fold.test.as_str()],
            train: ids(&fold.train),
            validation: ids(&fold.validation),
            judgments: self.ds.judgments.restricted_to(&non_test),
        };
        let test = fq.test;
        log::debug!(
            "fold {}: {} training, {} validation queries",
            fold.test,
            fq.train.len(),
            fq.validation.len()
        );
        let cut = &self.cfg().cutoffs;
        let iql = self.cfg().training.include_query_length;
        let mut out = FoldOutput {
            runs: BTreeMap::new(),
            models: BTreeMap::new(),
            chosen: BTreeMap::new(),
        };

        for &m in &self.methods {
            if let Some(table) = self.tables.get(&m) {
                if self.methods.contains(&m) {
                    let s = table
                        .best(&fq.non_test(), |_| true)
                        .expect("grid is non-empty");
                    out.runs.insert(m, self.baseline_list(s, test)?);
                    out.chosen.insert(m.name().into(), self.setting_params(s));
                }
            }
        }
        if self.methods.contains(&Method::Lm) {
            out.runs
                .insert(Method::Lm, self.ds.c_init[self.qid(test)].clone());
        }
        if !self.learned() {
            return Ok(out);
        }

        let init = self.initial_ranker(&fq, &[])?;
        let mi = init.mu_index;
        let mats = &self.mats[mi];
        let c_ltr = &init.lists;
        let record = |out: &mut FoldOutput,
                      name: &str,
                      model: &LinearModel,
                      list: RankedList,
                      chosen: BTreeMap<String, f64>| {
            out.models.insert(name.to_string(), write_model(model));
            out.chosen.insert(name.to_string(), chosen);
            if let Some(m) = Method::parse(name) {
                out.runs.insert(m, list);
            }
        };
        if self.methods.contains(&Method::InitLtr) {
            let r = if ablate.is_empty() {
                None
            } else {
                Some(self.initial_ranker(&fq, ablate)?)
            };
            let r = r.as_ref().unwrap_or(&init);
            record(
                &mut out,
                "init-LTR",
                &r.model,
                r.lists[&test].clone(),
                r.model.hyperparams.clone(),
            );
        } else {
            out.models
                .insert("init-LTR".into(), write_model(&init.model));
        }

        if !self.methods.iter().any(|&m| {
            needs_passage_ranker(m)
                || matches!(m, Method::JpdmAvg | Method::JpdmMax | Method::JpdmMin)
        }) {
            return Ok(out);
        }
        let (psg, qsf_lambda) = self.passage_ranker(&fq, mi, &[])?;
        if self.methods.contains(&Method::PsgLtr) {
            let r = if ablate.is_empty() {
                None
            } else {
                Some(self.passage_ranker(&fq, mi, ablate)?.0)
            };
            let r = r.as_ref().unwrap_or(&psg);
            let mut chosen = r.model.hyperparams.clone();
            chosen.insert("qsf_lambda".into(), qsf_lambda);
            record(
                &mut out,
                "PsgLTR",
                &r.model,
                r.lists[&test].clone().truncated(cut.passages),
                chosen,
            );
        } else {
            out.models.insert("PsgLTR".into(), write_model(&psg.model));
        }
        let rankings: BTreeMap<usize, PassageRanking<'_>> = psg
            .lists
            .iter()
            .map(|(&q, l)| (q, PassageRanking::new(l)))
            .collect();
        let docs = |q: usize| mats[q].docs.iter().map(String::as_str).collect::<Vec<_>>();
        let g = &self.cfg().grids;
        let fusion_grid: Vec<Vec<f64>> = g
            .alpha
            .iter()
            .flat_map(|&a| g.nu.iter().map(move |&n| vec![a, n]))
            .collect();

        for &m in &self.methods {
            let name = m.name();
            let normalized = |vs: std::result::Result<Vec<FeatureVector>, psgrank_core::Error>| -> Result<Vec<FeatureVector>> {
                let mut vs = vs?;
                minmax_normalize(&mut vs);
                self.project(vs, ablate)
            };
            let plain = |_: usize, l: RankedList, _: &[f64]| Ok(l);
            let fitted = match m {
                Method::Rrf => {
                    let mut best: Option<(f64, f64, f64)> = None;
                    for p in &fusion_grid {
                        let fp = FusionParams::new(p[1], p[0])?;
                        let lists = fq
                            .tuning()
                            .iter()
                            .map(|&q| (q, rerank_rrf(&c_ltr[&q], &psg.lists[&q], fp)))
                            .collect();
                        let obj = self.map(&lists, fq.tuning(), &fq.judgments);
                        if best.is_none_or(|b| obj > b.0) {
                            best = Some((obj, p[0], p[1]));
                        }
                    }
                    let (_, alpha, nu) = best.expect("fusion grid is non-empty");
                    out.runs.insert(
                        m,
                        rerank_rrf(
                            &c_ltr[&test],
                            &psg.lists[&test],
                            FusionParams::new(nu, alpha)?,
                        ),
                    );
                    out.chosen.insert(
                        name.into(),
                        BTreeMap::from([
                            ("alpha".into(), alpha),
                            ("nu".into(), nu),
                            ("mu".into(), g.mu[mi]),
                        ]),
                    );
                    None
                }
                Method::Jpds | Method::JpdsSecond | Method::JpdsThird | Method::JpdsLowest => {
                    let which = match m {
                        Method::Jpds => Which::Best,
                        Method::JpdsSecond => Which::Second,
                        Method::JpdsThird => Which::Third,
                        _ => Which::Lowest,
                    };
                    Some(self.fit_documents(
                        &fq,
                        name,
                        mi,
                        &[0.0],
                        |q, _| {
                            normalized(build_jpds_vectors(
                                &docs(q),
                                &mats[q].inputs,
                                &rankings[&q],
                                which,
                                iql,
                            ))
                        },
                        plain,
                    )?)
                }
                Method::Jpd2 => Some(self.fit_documents(
                    &fq,
                    name,
                    mi,
                    &[0.0],
                    |q, _| {
                        normalized(build_jpd2_vectors(
                            &docs(q),
                            &mats[q].inputs,
                            &rankings[&q],
                            iql,
                        ))
                    },
                    plain,
                )?),
                Method::JpdmAvg | Method::JpdmMax | Method::JpdmMin => {
                    let agg = match m {
                        Method::JpdmAvg => Aggregate::Avg,
                        Method::JpdmMax => Aggregate::Max,
                        _ => Aggregate::Min,
                    };
                    Some(self.fit_documents(
                        &fq,
                        name,
                        mi,
                        &[0.0],
                        |q, _| normalized(build_jpdm_vectors(&docs(q), &mats[q].inputs, agg, iql)),
                        plain,
                    )?)
                }
                Method::Smpd => Some(self.fit_documents(
                    &fq,
                    name,
                    mi,
                    &g.nu,
                    |q, nu| {
                        normalized(build_smpd_vectors(
                            &docs(q),
                            &mats[q].inputs,
                            &rankings[&q],
                            nu,
                        ))
                    },
                    plain,
                )?),
                Method::Fpd => Some(self.fit_documents_with(
                    &fq,
                    name,
                    mi,
                    &[0.0],
                    &fusion_grid,
                    |q, _| {
                        normalized(build_fpd_vectors(
                            &docs(q),
                            &mats[q].inputs,
                            &rankings[&q],
                            iql,
                        ))
                    },
                    |q, l, p| Ok(rerank_fpd(&c_ltr[&q], &l, FusionParams::new(p[1], p[0])?)),
                )?),
                _ => None,
            };
            if let Some((r, mut chosen)) = fitted {
                let extra = chosen.remove("extra").unwrap_or(0.0);
                if m == Method::Smpd {
                    chosen.insert("nu".into(), extra);
                }
                if let (Some(a), Some(n)) = (chosen.remove("post0"), chosen.remove("post1")) {
                    chosen.insert("alpha".into(), a);
                    chosen.insert("nu".into(), n);
                }
                record(
                    &mut out,
                    name,
                    &r.model,
                    r.lists[&test].clone().truncated(cut.docs),
                    chosen,
                );
            }
        }
        Ok(out)
    }

    /// Runs every fold and assembles runs, models and the report. Features
    /// named in `ablate` are removed from each configured learned method's
    /// own model.
    pub fn run(&self, ablate: &[String]) -> Result<ExperimentOutput> {
        let cfg = self.cfg();
        let ids = self.ds.query_ids();
        let plan = CvPlan::leave_one_out(&ids, cfg.training.validation_fraction, cfg.seed)?;
        log::info!(
            "running {} folds for {} methods",
            plan.folds.len(),
            self.methods.len()
        );
        let folds: Vec<FoldOutput> = plan
            .folds
            .par_iter()
            .map(|f| self.run_fold(f, ablate))
            .collect::<Result<_>>()?;

        let mut files = BTreeMap::new();
        let mut per_query: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> =
            BTreeMap::new();
        for &m in &self.methods {
            let lists: Vec<&RankedList> = folds.iter().filter_map(|f| f.runs.get(&m)).collect();
            files.insert(
                PathBuf::from("runs").join(format!("{}.run", m.name())),
                write_run(lists.iter().copied(), m.name()),
            );
            let table = per_query.entry(m.name().to_string()).or_default();
            for l in lists {
                let row = self.measures(m, l)?;
                if !row.is_empty() {
                    table.insert(l.query_id.clone(), row);
                }
            }
        }
        for (fold, f) in plan.folds.iter().zip(&folds) {
            for (name, text) in &f.models {
                files.insert(
                    PathBuf::from("models")
                        .join(&fold.test)
                        .join(format!("{name}.model")),
                    text.clone(),
                );
            }
        }

        let summary = per_query
            .iter()
            .map(|(m, rows)| {
                let measures: BTreeSet<&String> = rows.values().flat_map(|r| r.keys()).collect();
                let means = measures
                    .into_iter()
                    .map(|k| {
                        (
                            summary_name(k).to_string(),
                            mean(rows.values().filter_map(|r| r.get(k).copied())),
                        )
                    })
                    .collect();
                (m.clone(), means)
            })
            .collect();
        let significance = self.significance(&per_query);

        let manifest = RunManifest {
            seed: cfg.seed,
            trainer: cfg.trainer.clone(),
            methods: self.methods.iter().map(|m| m.name().to_string()).collect(),
            segmentation: self.ds.segmented.mode().to_string(),
            judgment_mode: format!("{:?}", self.ds.judgments.mode()),
            corpus: self.ds.corpus.manifest.clone(),
            resources: self.ds.resource_ids.clone(),
            degraded_features: self
                .ds
                .resources
                .degradations()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ablated: ablate.to_vec(),
            queries: ids.iter().map(|s| s.to_string()).collect(),
            dropped_queries: self.ds.dropped_queries.clone(),
            config: cfg.clone(),
            folds: plan
                .folds
                .iter()
                .zip(&folds)
                .map(|(f, o)| FoldRecord {
                    test: f.test.clone(),
                    train: f.train.clone(),
                    validation: f.validation.clone(),
                    chosen: o.chosen.clone(),
                })
                .collect(),
        };
        let report = Report {
            summary,
            per_query,
            significance,
            manifest,
        };
        files.insert(
            PathBuf::from("report.json"),
            serde_json::to_string_pretty(&report).map_err(|e| Error::Runtime(e.to_string()))?
                + "\n",
        );
        files.insert(
            PathBuf::from("per_query.tsv"),
            per_query_tsv(&report.per_query),
        );
        files.insert(PathBuf::from("config.toml"), cfg.to_toml());
        Ok(ExperimentOutput { report, files })
    }

    /// Per-query measures of one method's test list, against the full judgments.
    fn measures(&self, m: Method, list: &RankedList) -> Result<BTreeMap<String, f64>> {
        let j = &self.ds.judgments;
        let mut row = BTreeMap::new();
        if m.ranks_passages() {
            let list = list.clone().truncated(self.cfg().cutoffs.passages);
            if let Some(ip) = interpolated_precision(&list, j, &self.ds.segmented)? {
                row.insert("MAiP".into(), ip.maip);
                row.insert("iP[0.01]".into(), ip.at(0.01).unwrap_or(0.0));
                row.insert("iP[0.1]".into(), ip.at(0.1).unwrap_or(0.0));
            }
        } else if let Some(ap) = self.ap(list, j) {
            let grades = j.doc_grades(&list.query_id);
            row.insert("AP".into(), ap);
            row.insert("P@10".into(), precision_at(list, grades, 10));
            row.insert(
                "NDCG@10".into(),
                grades.map_or(0.0, |g| ndcg_at_k(list, g, 10)),
            );
        }
        Ok(row)
    }

    fn significance(
        &self,
        per_query: &BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    ) -> Vec<Comparison> {
        let s = &self.cfg().significance;
        let mut out = Vec::new();
        for (measure, passages) in [("AP", false), ("MAiP", true)] {
            let ms: Vec<Method> = self
                .methods
                .iter()
                .copied()
                .filter(|m| m.ranks_passages() == passages)
                .collect();
            for (i, &a) in ms.iter().enumerate() {
                for &b in &ms[i + 1..] {
                    let (ra, rb) = (&per_query[a.name()], &per_query[b.name()]);
                    let qs: Vec<&String> = ra.keys().filter(|q| rb.contains_key(*q)).collect();
                    let xa: Vec<f64> = qs
                        .iter()
                        .filter_map(|q| ra[*q].get(measure).copied())
                        .collect();
                    let xb: Vec<f64> = qs
                        .iter()
                        .filter_map(|q| rb[*q].get(measure).copied())
                        .collect();
                    if xa.len() != xb.len() || xa.is_empty() {
                        continue;
                    }
                    let mut c = Comparison {
                        measure: summary_name(measure).to_string(),
                        a: a.name().into(),
                        b: b.name().into(),
                        mean_a: mean(xa.iter().copied()),
                        mean_b: mean(xb.iter().copied()),
                        t: None,
                        p: None,
                        significant: false,
                        note: None,
                    };
                    match paired_ttest(&xa, &xb, s.alpha, s.corrections) {
                        Ok(t) => {
                            c.t = Some(t.t);
                            c.p = Some(t.p);
                            c.significant = t.significant;
                        }
                        Err(e) => c.note = Some(e.to_string()),
                    }
                    out.push(c);
                }
            }
        }
        out
    }
}

fn per_query_tsv(per_query: &BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>) -> String {
    let mut s = String::from("method\tquery\tmeasure\tvalue\n");
    for (m, rows) in per_query {
        for (q, row) in rows {
            for (k, v) in row {
                s.push_str(&format!("{m}\t{q}\t{k}\t{v:?}\n"));
            }
        }
    }
    s
}

/// Loads, prepares and runs the experiment in a pool of `config.workers`
/// threads.
pub fn run_experiment(config: ExperimentConfig, base: &Path) -> Result<ExperimentOutput> {
    with_pool(config.workers, || {
        let ds = Dataset::load(config, base)?;
        Experiment::prepare(&ds)?.run(&[])
    })
}

pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    pool.install(f)
}

/// One learned method with and without a feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub method: String,
    pub measure: String,
    pub removed: Vec<String>,
    pub base: f64,
    pub ablated: f64,
    pub delta: f64,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub feature: String,
    pub rows: Vec<AblationRow>,
}

/// Retrains every configured learned method without `feature` (a feature
/// name such as `ESA`, or a prefixed one such as `p:ESA`) and compares.
pub fn ablate(
    exp: &Experiment<'_>,
    feature: &str,
) -> Result<(AblationReport, ExperimentOutput, ExperimentOutput)> {
    let iql = exp.cfg().training.include_query_length;
    let learned: Vec<Method> = exp
        .methods
        .iter()
        .copied()
        .filter(|m| m.needs_trainer() && *m != Method::Rrf)
        .collect();
    if learned.is_empty() {
        return Err(Error::invalid(
            "ablation needs a learned method (init-LTR, PsgLTR, SMPD, JPDs…, JPD-2, JPDm-…, FPD)",
        ));
    }
    let mut available = BTreeSet::new();
    let mut removed: BTreeMap<Method, Vec<String>> = BTreeMap::new();
    for &m in &learned {
        let schema = method_schema(m, iql).expect("learned methods have schemas");
        available.extend(schema.features().iter().cloned());
        let names: Vec<String> = ablated_names(&schema, feature)
            .into_iter()
            .map(str::to_string)
            .collect();
        if !names.is_empty() {
            removed.insert(m, names);
        }
    }
    if removed.is_empty() {
        return Err(psgrank_core::Error::UnknownFeature {
            name: feature.to_string(),
            available: available.into_iter().collect::<Vec<_>>().join(", "),
        }
        .into());
    }
    let base = exp.run(&[])?;
    let ablated = exp.run(&[feature.to_string()])?;
    let s = &exp.cfg().significance;
    let rows = removed
        .into_iter()
        .map(|(m, names)| {
            let measure = if m.ranks_passages() { "MAiP" } else { "AP" };
            let values = |o: &ExperimentOutput| -> Vec<f64> {
                o.report.per_query.get(m.name()).map_or(Vec::new(), |r| {
                    r.values()
                        .filter_map(|row| row.get(measure).copied())
                        .collect()
                })
            };
            let (xa, xb) = (values(&base), values(&ablated));
            let test = paired_ttest(&xb, &xa, s.alpha, s.corrections).ok();
            let (b, a) = (mean(xa.iter().copied()), mean(xb.iter().copied()));
            AblationRow {
                method: m.name().into(),
                measure: summary_name(measure).into(),
                removed: names,
                base: b,
                ablated: a,
                delta: a - b,
                t: test.map(|t| t.t),
                p: test.map(|t| t.p),
                significant: test.is_some_and(|t| t.significant),
            }
        })
        .collect();
    Ok((
        AblationReport {
            feature: feature.to_string(),
            rows,
        },
        base,
        ablated,
    ))
}

/// SVMlight-ready groups of normalized DOC6 (documents of the initial list)
/// and PSG20 (all their passages) vectors at the first μ of the grid.
pub fn feature_groups(exp: &Experiment<'_>) -> (Vec<QueryGroup>, Vec<QueryGroup>) {
    let j = &exp.ds.judgments;
    let mut docs = Vec::new();
    let mut psgs = Vec::new();
    for (q, d) in exp.mats[0].iter().enumerate() {
        let qid = exp.qid(q);
        let grades = j.doc_grades(qid);
        docs.push(QueryGroup::new(
            qid,
            d.doc_vectors
                .iter()
                .map(|v| GradedExample {
                    vector: v.clone(),
                    grade: grades.and_then(|g| g.get(&v.item_id)).copied().unwrap_or(0),
                })
                .collect(),
        ));
        psgs.push(QueryGroup::new(
            qid,
            d.passage_vectors
                .iter()
                .map(|v| GradedExample {
                    vector: v.clone(),
                    grade: j.passage_grade(
                        qid,
                        exp.ds
                            .segmented
                            .get(&v.item_id)
                            .expect("passage of this corpus"),
                    ),
                })
                .collect(),
        ));
    }
    (docs, psgs)
}
