//! Passage rankers and passage-informed document re-rankers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::PassageContext;
use crate::features::{
    Composition, FeatureSchema, FeatureVector, SchemaPart, AVG_PD_SIM, DOC_QUERY_SIM, MAX_PD_SIM,
    PSG_QUERY_SIM, QUERY_LENGTH, STD_PD_SIM,
};
use crate::index::{LmParams, PositionalIndex, QueryModel, SdmComponents, SdmWeights};
use crate::list::RankedList;
use crate::math::{exp, ln, mean_std};
use crate::passage::parse_passage_id;

/// Every retrieval method the toolkit runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Lm,
    Sdm,
    DocPsg,
    InitLtr,
    Rrf,
    Smpd,
    Jpds,
    JpdsSecond,
    JpdsThird,
    JpdsLowest,
    Jpd2,
    JpdmAvg,
    JpdmMax,
    JpdmMin,
    Fpd,
    Qsf,
    Plm,
    PsgLtr,
}

impl Method {
    pub const ALL: [Method; 18] = [
        Method::Lm,
        Method::Sdm,
        Method::DocPsg,
        Method::InitLtr,
        Method::Rrf,
        Method::Smpd,
        Method::Jpds,
        Method::JpdsSecond,
        Method::JpdsThird,
        Method::JpdsLowest,
        Method::Jpd2,
        Method::JpdmAvg,
        Method::JpdmMax,
        Method::JpdmMin,
        Method::Fpd,
        Method::Qsf,
        Method::Plm,
        Method::PsgLtr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lm => "LM",
            Method::Sdm => "SDM",
            Method::DocPsg => "DocPsg",
            Method::InitLtr => "init-LTR",
            Method::Rrf => "RRF",
            Method::Smpd => "SMPD",
            Method::Jpds => "JPDs",
            Method::JpdsSecond => "JPDs-second",
            Method::JpdsThird => "JPDs-third",
            Method::JpdsLowest => "JPDs-lowest",
            Method::Jpd2 => "JPD-2",
            Method::JpdmAvg => "JPDm-avg",
            Method::JpdmMax => "JPDm-max",
            Method::JpdmMin => "JPDm-min",
            Method::Fpd => "FPD",
            Method::Qsf => "QSF",
            Method::Plm => "PLM",
            Method::PsgLtr => "PsgLTR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether the method learns a ranker.
    pub fn needs_trainer(self) -> bool {
        !matches!(
            self,
            Method::Lm | Method::Sdm | Method::DocPsg | Method::Qsf | Method::Plm
        )
    }

    /// Whether the method ranks passages rather than documents.
    pub fn ranks_passages(self) -> bool {
        matches!(self, Method::Qsf | Method::Plm | Method::PsgLtr)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub nu: f64,
    pub alpha: f64,
}

impl FusionParams {
    pub fn new(nu: f64, alpha: f64) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "fusion needs nu >= 0 and alpha in [0,1], got nu={nu} alpha={alpha}"
            )));
        }
        Ok(Self { nu, alpha })
    }
}

/// `1/(ν + rank)` for a 1-based rank.
pub fn rr_from_rank(rank: usize, nu: f64) -> f64 {
    1.0 / (nu + rank as f64)
}

pub fn rr_score(item: &str, list: &RankedList, nu: f64) -> Result<f64> {
    Ok(rr_from_rank(list.rank_of(item)?, nu))
}

/// Passages of a ranked passage list grouped by document, in list order.
#[derive(Debug, Clone)]
pub struct PassageRanking<'a> {
    by_doc: BTreeMap<&'a str, Vec<(usize, &'a str)>>,
    len: usize,
}

/// Which of a document's ranked passages to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Best,
    Second,
    Third,
    Lowest,
}

impl<'a> PassageRanking<'a> {
    pub fn new(list: &'a RankedList) -> Self {
        let mut by_doc: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
        for (i, id) in list.ids().enumerate() {
            let doc = parse_passage_id(id).map_or(id, |(d, _)| d);
            by_doc.entry(doc).or_default().push((i + 1, id));
        }
        Self {
            by_doc,
            len: list.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(rank, passage_id)` of the document's passages, best first.
    pub fn of_doc(&self, doc: &str) -> &[(usize, &'a str)] {
        self.by_doc.get(doc).map_or(&[], Vec::as_slice)
    }

    /// The requested passage, falling back to the lowest-ranked one when the
    /// document has too few. `None` if none of its passages are ranked.
    pub fn select(&self, doc: &str, which: Which) -> Option<&'a str> {
        let ps = self.of_doc(doc);
        let i = match which {
            Which::Best => 0,
            Which::Second => 1,
            Which::Third => 2,
            Which::Lowest => usize::MAX,
        };
        ps.get(i).or(ps.last()).map(|&(_, id)| id)
    }
}

/// `α·rr(d) + (1−α)·max_g rr(g)`; a document without ranked passages gets 0
/// for the passage term.
pub fn rerank_rrf(
    doc_list: &RankedList,
    psg_list: &RankedList,
    params: FusionParams,
) -> RankedList {
    let ranking = PassageRanking::new(psg_list);
    let scored = doc_list.ids().enumerate().map(|(i, d)| {
        let best = ranking
            .of_doc(d)
            .first()
            .map_or(0.0, |&(r, _)| rr_from_rank(r, params.nu));
        (
            d,
            params.alpha * rr_from_rank(i + 1, params.nu) + (1.0 - params.alpha) * best,
        )
    });
    RankedList::from_scores(&doc_list.query_id, scored)
}

/// Fuses two rankings of the same documents with reciprocal-rank scores:
/// `α·rr(d, doc_list) + (1−α)·rr(d, other)`; absence from `other` scores 0.
pub fn fuse(doc_list: &RankedList, other: &RankedList, params: FusionParams) -> RankedList {
    let ranks = other.rank_map();
    let scored = doc_list.ids().enumerate().map(|(i, d)| {
        let o = ranks.get(d).map_or(0.0, |&r| rr_from_rank(r, params.nu));
        (
            d,
            params.alpha * rr_from_rank(i + 1, params.nu) + (1.0 - params.alpha) * o,
        )
    });
    RankedList::from_scores(&doc_list.query_id, scored)
}

/// FPD: the document ranking induced by the best-passage model fused with
/// the original document ranking.
pub fn rerank_fpd(
    doc_list: &RankedList,
    fpd_list: &RankedList,
    params: FusionParams,
) -> RankedList {
    fuse(doc_list, fpd_list, params)
}

pub const SMPD7: [&str; 7] = [
    "RRMax", "RRMin", "RRAvg", "RRStd", "Top50", "Top100", "NumPsg",
];

pub fn smpd_schema() -> Arc<FeatureSchema> {
    Arc::new(FeatureSchema::new("SMPD7", SMPD7).expect("distinct names"))
}

/// Max, min, mean and std of the reciprocal-rank scores of a document's
/// ranked passages, the fractions of its `num_psg` passages in the top 50
/// and top 100, and `num_psg`. Statistics are 0 when none is ranked.
pub fn smpd_features(doc: &str, ranking: &PassageRanking<'_>, nu: f64, num_psg: usize) -> [f64; 7] {
    let ps = ranking.of_doc(doc);
    if ps.is_empty() || num_psg == 0 {
        return [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, num_psg as f64];
    }
    let rr: Vec<f64> = ps.iter().map(|&(r, _)| rr_from_rank(r, nu)).collect();
    let max = rr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rr.iter().copied().fold(f64::INFINITY, f64::min);
    let (avg, std) = mean_std(&rr);
    let frac = |k: usize| ps.iter().filter(|&&(r, _)| r <= k).count() as f64 / num_psg as f64;
    [max, min, avg, std, frac(50), frac(100), num_psg as f64]
}

/// Normalized per-query vectors the document re-rankers draw on.
#[derive(Debug, Clone, Default)]
pub struct DocInputs {
    pub query_id: String,
    /// DOC6 vectors by document id.
    pub doc_vectors: BTreeMap<String, FeatureVector>,
    /// PSG20 vectors by passage id.
    pub passage_vectors: BTreeMap<String, FeatureVector>,
    /// Passage ids of each document, in ordinal order.
    pub doc_passages: BTreeMap<String, Vec<String>>,
}

impl DocInputs {
    fn doc_vector(&self, doc: &str) -> Result<&FeatureVector> {
        self.doc_vectors
            .get(doc)
            .ok_or_else(|| Error::ItemNotInList(doc.to_string()))
    }

    fn passage_vector(&self, id: &str) -> Result<&FeatureVector> {
        self.passage_vectors
            .get(id)
            .ok_or_else(|| Error::ItemNotInList(id.to_string()))
    }

    /// The document's passage with the highest passage-query similarity
    /// (earliest on ties).
    pub fn best_by_similarity(&self, doc: &str) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for id in self.doc_passages.get(doc)? {
            let s = self.passage_vectors.get(id)?.get(PSG_QUERY_SIM)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        best.map(|(id, _)| id)
    }

    /// The selected passage, or the best by similarity if the document has
    /// no ranked passage.
    pub fn select<'s>(
        &'s self,
        doc: &str,
        ranking: &PassageRanking<'s>,
        which: Which,
    ) -> Result<&'s str> {
        ranking
            .select(doc, which)
            .or_else(|| self.best_by_similarity(doc))
            .ok_or_else(|| Error::InvalidParameter(format!("document `{doc}` has no passages")))
    }
}

fn exclusions(base: &[&'static str], include_query_length: bool) -> Vec<&'static str> {
    let mut v = base.to_vec();
    if !include_query_length {
        v.push(QUERY_LENGTH);
    }
    v
}

const JPDS_EXCLUDED: [&str; 1] = [DOC_QUERY_SIM];
const JPD2_SECOND_EXCLUDED: [&str; 5] = [
    DOC_QUERY_SIM,
    MAX_PD_SIM,
    AVG_PD_SIM,
    STD_PD_SIM,
    QUERY_LENGTH,
];

/// DOC6 ⊕ passage vector without DocQuerySim (and QueryLength unless asked).
pub fn jpds_composition(include_query_length: bool) -> Composition {
    let ex = exclusions(&JPDS_EXCLUDED, include_query_length);
    Composition::new(
        "JPDs",
        &[
            SchemaPart {
                prefix: "d:",
                schema: &FeatureSchema::doc6(),
                exclusions: &[],
            },
            SchemaPart {
                prefix: "p:",
                schema: &FeatureSchema::psg20(),
                exclusions: &ex,
            },
        ],
    )
    .expect("static schema")
}

/// JPDs followed by the second-ranked passage's reduced vector.
pub fn jpd2_composition(include_query_length: bool) -> Composition {
    let ex = exclusions(&JPDS_EXCLUDED, include_query_length);
    Composition::new(
        "JPD-2",
        &[
            SchemaPart {
                prefix: "d:",
                schema: &FeatureSchema::doc6(),
                exclusions: &[],
            },
            SchemaPart {
                prefix: "p:",
                schema: &FeatureSchema::psg20(),
                exclusions: &ex,
            },
            SchemaPart {
                prefix: "p2:",
                schema: &FeatureSchema::psg20(),
                exclusions: &JPD2_SECOND_EXCLUDED,
            },
        ],
    )
    .expect("static schema")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Avg,
    Max,
    Min,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Avg => "avg",
            Aggregate::Max => "max",
            Aggregate::Min => "min",
        }
    }
}

/// DOC6 ⊕ per-feature aggregate over all passages. PsgQuerySim is dropped for
/// avg and max, where it duplicates AvgPDSim and MaxPDSim.
pub fn jpdm_composition(agg: Aggregate, include_query_length: bool) -> Composition {
    let base: &[&'static str] = match agg {
        Aggregate::Avg | Aggregate::Max => &[DOC_QUERY_SIM, PSG_QUERY_SIM],
        Aggregate::Min => &[DOC_QUERY_SIM],
    };
    let ex = exclusions(base, include_query_length);
    let prefix = format!("{}:", agg.name());
    Composition::new(
        &format!("JPDm-{}", agg.name()),
        &[
            SchemaPart {
                prefix: "d:",
                schema: &FeatureSchema::doc6(),
                exclusions: &[],
            },
            SchemaPart {
                prefix: &prefix,
                schema: &FeatureSchema::psg20(),
                exclusions: &ex,
            },
        ],
    )
    .expect("static schema")
}

/// Best-passage vector alone, for FPD's document ranker.
pub fn fpd_composition(include_query_length: bool) -> Composition {
    let ex = exclusions(&[], include_query_length);
    Composition::new(
        "FPD",
        &[SchemaPart {
            prefix: "p:",
            schema: &FeatureSchema::psg20(),
            exclusions: &ex,
        }],
    )
    .expect("static schema")
}

pub fn smpd_composition() -> Composition {
    Composition::new(
        "SMPD",
        &[
            SchemaPart {
                prefix: "d:",
                schema: &FeatureSchema::doc6(),
                exclusions: &[],
            },
            SchemaPart {
                prefix: "s:",
                schema: &smpd_schema(),
                exclusions: &[],
            },
        ],
    )
    .expect("static schema")
}

pub fn build_jpds_vectors(
    docs: &[&str],
    inputs: &DocInputs,
    ranking: &PassageRanking<'_>,
    which: Which,
    include_query_length: bool,
) -> Result<Vec<FeatureVector>> {
    let plan = jpds_composition(include_query_length);
    docs.iter()
        .map(|d| {
            let g = inputs.select(d, ranking, which)?;
            plan.apply(d, &[inputs.doc_vector(d)?, inputs.passage_vector(g)?])
        })
        .collect()
}

/// JPD-2: the best and second-best passages. A document with a single
/// ranked passage reuses it for the second slot.
pub fn build_jpd2_vectors(
    docs: &[&str],
    inputs: &DocInputs,
    ranking: &PassageRanking<'_>,
    include_query_length: bool,
) -> Result<Vec<FeatureVector>> {
    let plan = jpd2_composition(include_query_length);
    docs.iter()
        .map(|d| {
            let g1 = inputs.select(d, ranking, Which::Best)?;
            let g2 = inputs.select(d, ranking, Which::Second)?;
            plan.apply(
                d,
                &[
                    inputs.doc_vector(d)?,
                    inputs.passage_vector(g1)?,
                    inputs.passage_vector(g2)?,
                ],
            )
        })
        .collect()
}

/// Per-feature aggregate over every passage of the document.
pub fn aggregate_passages(vectors: &[&FeatureVector], agg: Aggregate) -> Vec<f64> {
    let dims = vectors.first().map_or(0, |v| v.values.len());
    (0..dims)
        .map(|f| {
            let it = vectors.iter().map(|v| v.values[f]);
            match agg {
                Aggregate::Avg => it.sum::<f64>() / vectors.len() as f64,
                Aggregate::Max => it.fold(f64::NEG_INFINITY, f64::max),
                Aggregate::Min => it.fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

pub fn build_jpdm_vectors(
    docs: &[&str],
    inputs: &DocInputs,
    agg: Aggregate,
    include_query_length: bool,
) -> Result<Vec<FeatureVector>> {
    let plan = jpdm_composition(agg, include_query_length);
    docs.iter()
        .map(|d| {
            let ids = inputs.doc_passages.get(*d).filter(|p| !p.is_empty());
            let ids = ids.ok_or_else(|| {
                Error::InvalidParameter(format!("document `{d}` has no passages"))
            })?;
            let vs = ids
                .iter()
                .map(|g| inputs.passage_vector(g))
                .collect::<Result<Vec<_>>>()?;
            let aggregated = FeatureVector::new(
                FeatureSchema::psg20(),
                aggregate_passages(&vs, agg),
                &inputs.query_id,
                d,
            )?;
            plan.apply(d, &[inputs.doc_vector(d)?, &aggregated])
        })
        .collect()
}

pub fn build_fpd_vectors(
    docs: &[&str],
    inputs: &DocInputs,
    ranking: &PassageRanking<'_>,
    include_query_length: bool,
) -> Result<Vec<FeatureVector>> {
    let plan = fpd_composition(include_query_length);
    docs.iter()
        .map(|d| {
            plan.apply(
                d,
                &[inputs.passage_vector(inputs.select(d, ranking, Which::Best)?)?],
            )
        })
        .collect()
}

pub fn build_smpd_vectors(
    docs: &[&str],
    inputs: &DocInputs,
    ranking: &PassageRanking<'_>,
    nu: f64,
) -> Result<Vec<FeatureVector>> {
    let plan = smpd_composition();
    let schema = smpd_schema();
    docs.iter()
        .map(|d| {
            let n = inputs.doc_passages.get(*d).map_or(0, Vec::len);
            let s = FeatureVector::new(
                schema.clone(),
                smpd_features(d, ranking, nu, n).to_vec(),
                &inputs.query_id,
                d,
            )?;
            plan.apply(d, &[inputs.doc_vector(d)?, &s])
        })
        .collect()
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in [0,1], got {x}"
        )))
    }
}

fn share(x: f64, sum: f64) -> f64 {
    if sum > 0.0 {
        x / sum
    } else {
        0.0
    }
}

/// QSF: `(1−λ)·sim(q,g)/Σ sim(q,g') + λ·sim(q,d_g)/Σ sim(q,d')` over `S_psg`.
pub fn rank_qsf(ctx: &PassageContext<'_>, lambda: f64) -> Result<RankedList> {
    check_unit("lambda", lambda)?;
    let scored = ctx.iter_passages().map(|(s, p)| {
        let v = (1.0 - lambda) * share(ctx.psg_sim(s, p.ordinal), ctx.psg_sim_sum())
            + lambda * share(ctx.doc_sim(s), ctx.doc_sim_sum());
        (p.passage_id.as_str(), v)
    });
    Ok(RankedList::from_scores(&ctx.query().query_id, scored))
}

/// Best positional query similarity within a token span and the position
/// achieving it (earliest on ties).
///
/// Position `i` has pseudo-counts `c'(w,i) = Σ_j c(w,j)·exp(−(i−j)²/2σ²)` and
/// pseudo-length `Σ_j exp(−(i−j)²/2σ²)`, Dirichlet-smoothed with the
/// collection model.
pub fn positional_best(
    model: &QueryModel,
    terms: &[u32],
    index: &PositionalIndex,
    params: LmParams,
    sigma: f64,
) -> (usize, f64) {
    if model.is_empty() {
        return (0, 0.0);
    }
    if terms.is_empty() {
        // No positions: zero pseudo-counts and length leave the background model.
        let log_sim: f64 = model
            .weights()
            .iter()
            .map(|&(t, w)| w * ln(index.p_collection(t)))
            .sum();
        return (0, exp(log_sim));
    }
    let n = terms.len();
    let kernel: Vec<f64> = (0..n)
        .map(|d| exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let mut prefix = alloc::vec![0.0; n + 1];
    for d in 0..n {
        prefix[d + 1] = prefix[d] + kernel[d];
    }
    let occurrences: Vec<(f64, f64, Vec<usize>)> = model
        .weights()
        .iter()
        .map(|&(t, w)| {
            (
                w,
                index.p_collection(t),
                (0..n).filter(|&j| terms[j] == t).collect(),
            )
        })
        .collect();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        // Kernel mass over positions 0..n seen from i: offsets 0..=i and 1..n-i.
        let z = prefix[i + 1] + prefix[n - i] - kernel[0];
        let denom = z + params.mu;
        let mut log_sim = 0.0;
        let mut zero = denom <= 0.0;
        for (w, pc, pos) in &occurrences {
            let c: f64 = pos.iter().map(|&j| kernel[i.abs_diff(j)]).sum();
            let theta = (c + params.mu * pc) / denom;
            if theta <= 0.0 {
                zero = true;
                break;
            }
            log_sim += w * ln(theta);
        }
        let s = if zero { 0.0 } else { exp(log_sim) };
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlmParams {
    pub sigma: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl PlmParams {
    pub fn new(sigma: f64, lambda: f64, beta: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        check_unit("lambda", lambda)?;
        check_unit("beta", beta)?;
        if lambda + beta > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "lambda + beta must not exceed 1, got {}",
                lambda + beta
            )));
        }
        Ok(Self {
            sigma,
            lambda,
            beta,
        })
    }
}

/// Positional similarity of every passage of `S_psg`, in context order.
pub fn positional_sims(ctx: &PassageContext<'_>, sigma: f64) -> Vec<f64> {
    ctx.iter_passages()
        .map(|(s, p)| {
            let terms =
                &ctx.index().doc_terms(ctx.doc_position(s))[p.token_range.0..p.token_range.1];
            positional_best(ctx.query_model(), terms, ctx.index(), ctx.params(), sigma).1
        })
        .collect()
}

/// PLM: `λ·pos + β·psg + (1−λ−β)·doc`, each similarity normalized by its sum
/// over `S_psg` (positional, passage) or `S_doc` (document).
pub fn rank_plm(ctx: &PassageContext<'_>, params: PlmParams) -> Result<RankedList> {
    let pos = positional_sims(ctx, params.sigma);
    rank_plm_with(ctx, &pos, params)
}

/// [`rank_plm`] with precomputed positional similarities.
pub fn rank_plm_with(
    ctx: &PassageContext<'_>,
    positional: &[f64],
    params: PlmParams,
) -> Result<RankedList> {
    PlmParams::new(params.sigma, params.lambda, params.beta)?;
    let pos_sum: f64 = positional.iter().sum();
    let rest = (1.0 - params.lambda - params.beta).max(0.0);
    let scored = ctx.iter_passages().zip(positional).map(|((s, p), &ps)| {
        let v = params.lambda * share(ps, pos_sum)
            + params.beta * share(ctx.psg_sim(s, p.ordinal), ctx.psg_sim_sum())
            + rest * share(ctx.doc_sim(s), ctx.doc_sim_sum());
        (p.passage_id.as_str(), v)
    });
    Ok(RankedList::from_scores(&ctx.query().query_id, scored))
}

/// Per-document interpolation weights `λmax·(1 − minmax(ln(1+|d|)))` over
/// `S_doc`; equal lengths give `λmax` everywhere.
pub fn docpsg_lambdas(ctx: &PassageContext<'_>, lambda_max: f64) -> Vec<f64> {
    let logs: Vec<f64> = (0..ctx.num_docs())
        .map(|s| ln(1.0 + ctx.index().doc_len(ctx.doc_position(s)) as f64))
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter()
        .map(|&l| lambda_max * (1.0 - if hi > lo { (l - lo) / (hi - lo) } else { 0.0 }))
        .collect()
}

/// DocPsg: `λ(d)·sim(q,d) + (1−λ(d))·max_g sim(q,g)` with length-dependent λ.
pub fn rank_docpsg(ctx: &PassageContext<'_>, lambda_max: f64) -> Result<RankedList> {
    check_unit("lambda_max", lambda_max)?;
    let lambdas = docpsg_lambdas(ctx, lambda_max);
    let scored = (0..ctx.num_docs()).map(|s| {
        let best = (0..ctx.passages(s).len())
            .map(|o| ctx.psg_sim(s, o))
            .fold(0.0, f64::max);
        (
            ctx.doc_id(s),
            lambdas[s] * ctx.doc_sim(s) + (1.0 - lambdas[s]) * best,
        )
    });
    Ok(RankedList::from_scores(&ctx.query().query_id, scored))
}

/// Orders documents by the weighted sum of their SDM components.
pub fn rank_sdm<'a, I>(query_id: &str, components: I, weights: SdmWeights) -> RankedList
where
    I: IntoIterator<Item = (&'a str, SdmComponents)>,
{
    RankedList::from_scores(
        query_id,
        components.into_iter().map(|(d, c)| (d, weights.score(&c))),
    )
}
