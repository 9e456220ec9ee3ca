//! Relevance grades and linear learning-to-rank.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::list::RankedList;
use crate::math::{log2, sqrt};

/// Maps the relevant fraction of a passage's characters to a grade in 0..=4.
pub fn bucket_grade(rfrac: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&rfrac) {
        return Err(Error::FractionOutOfRange(rfrac));
    }
    Ok(match rfrac {
        r if r < 0.10 => 0,
        r if r < 0.25 => 1,
        r if r < 0.50 => 2,
        r if r < 0.75 => 3,
        _ => 4,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrainerKind {
    PairwiseHinge,
    CoordinateAscent,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 2] = [TrainerKind::PairwiseHinge, TrainerKind::CoordinateAscent];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainerKind::PairwiseHinge => "pairwise_hinge",
            TrainerKind::CoordinateAscent => "coordinate_ascent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl core::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedExample {
    pub vector: FeatureVector,
    pub grade: u8,
}

/// The judged items of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub examples: Vec<GradedExample>,
}

impl QueryGroup {
    pub fn new(query_id: &str, examples: Vec<GradedExample>) -> Self {
        Self {
            query_id: query_id.to_string(),
            examples,
        }
    }
}

/// Weight vector over a feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub schema: Arc<FeatureSchema>,
    pub weights: Vec<f64>,
    pub trainer: TrainerKind,
    pub hyperparams: BTreeMap<String, f64>,
    pub seed: u64,
}

impl LinearModel {
    pub fn new(
        schema: Arc<FeatureSchema>,
        weights: Vec<f64>,
        trainer: TrainerKind,
    ) -> Result<Self> {
        if weights.len() != schema.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} weights", schema.len()),
                found: format!("{} weights", weights.len()),
            });
        }
        Ok(Self {
            schema,
            weights,
            trainer,
            hyperparams: BTreeMap::new(),
            seed: 0,
        })
    }

    fn check(&self, v: &FeatureVector) -> Result<()> {
        if *v.schema != *self.schema {
            return Err(Error::SchemaMismatch {
                expected: self.schema.name().to_string(),
                found: v.schema.name().to_string(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, v: &FeatureVector) -> Result<f64> {
        self.check(v)?;
        Ok(dot(&self.weights, &v.values))
    }

    /// Scores and orders the vectors of one query.
    pub fn score(&self, query_id: &str, vectors: &[FeatureVector]) -> Result<RankedList> {
        let scored = vectors
            .iter()
            .map(|v| Ok((v.item_id.clone(), self.dot(v)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RankedList::from_scores(query_id, scored))
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// DCG of grades in rank order, cut at `k`.
pub fn dcg(grades: impl IntoIterator<Item = u8>, k: usize) -> f64 {
    grades
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| ((1u64 << g) - 1) as f64 / log2(i as f64 + 2.0))
        .sum()
}

/// DCG of the best possible ordering of `grades`.
pub fn ideal_dcg(grades: impl IntoIterator<Item = u8>, k: usize) -> f64 {
    let mut g: Vec<u8> = grades.into_iter().collect();
    g.sort_unstable_by(|a, b| b.cmp(a));
    dcg(g, k)
}

/// NDCG@k of a list against graded judgments. Unjudged items have grade 0;
/// the ideal ordering ranges over every judged item.
pub fn ndcg_at_k(list: &RankedList, grades: &BTreeMap<String, u8>, k: usize) -> f64 {
    let ideal = ideal_dcg(grades.values().copied(), k);
    if ideal == 0.0 {
        return 0.0;
    }
    dcg(list.ids().map(|id| grades.get(id).copied().unwrap_or(0)), k) / ideal
}

/// Groups with items in ascending id order plus the common schema.
struct Prepared<'a> {
    schema: Arc<FeatureSchema>,
    groups: Vec<Vec<&'a GradedExample>>,
}

fn prepare(groups: &[QueryGroup]) -> Result<Prepared<'_>> {
    let schema = groups
        .iter()
        .flat_map(|g| g.examples.first())
        .map(|e| e.vector.schema.clone())
        .next()
        .ok_or(Error::NoTrainingSignal)?;
    let mut out = Vec::with_capacity(groups.len());
    let mut signal = false;
    for g in groups {
        let mut ex: Vec<&GradedExample> = g.examples.iter().collect();
        for e in &ex {
            if *e.vector.schema != *schema {
                return Err(Error::SchemaMismatch {
                    expected: schema.name().to_string(),
                    found: e.vector.schema.name().to_string(),
                });
            }
        }
        ex.sort_by(|a, b| a.vector.item_id.cmp(&b.vector.item_id));
        signal |= ex.iter().any(|e| e.grade != ex[0].grade);
        out.push(ex);
    }
    if !signal {
        return Err(Error::NoTrainingSignal);
    }
    Ok(Prepared {
        schema,
        groups: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseParams {
    /// Loss weight of the hinge terms relative to `½‖w‖²`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Pairs beyond this count are uniformly subsampled.
    pub max_pairs: usize,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        Self {
            c: 0.01,
            epochs: 50,
            seed: 0,
            max_pairs: 1_000_000,
        }
    }
}

/// Per-epoch training-pair errors of the pairwise trainer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairwiseTrace {
    pub epoch_errors: Vec<usize>,
    /// Errors of the best model so far after each epoch.
    pub best_errors: Vec<usize>,
    pub pairs: usize,
}

type Pair = (u32, u32, u32);

/// Calls `f` on every `(group, better, worse)` pair in a fixed order.
fn for_each_pair(groups: &[Vec<&GradedExample>], mut f: impl FnMut(Pair)) {
    for (g, ex) in groups.iter().enumerate() {
        for (i, a) in ex.iter().enumerate() {
            for (j, b) in ex.iter().enumerate() {
                if a.grade > b.grade {
                    f((g as u32, i as u32, j as u32));
                }
            }
        }
    }
}

fn collect_pairs(groups: &[Vec<&GradedExample>], max: usize, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut total = 0usize;
    for_each_pair(groups, |_| total += 1);
    if total <= max {
        let mut out = Vec::with_capacity(total);
        for_each_pair(groups, |p| out.push(p));
        return out;
    }
    let mut keep = rand::seq::index::sample(rng, total, max).into_vec();
    keep.sort_unstable();
    let mut out = Vec::with_capacity(max);
    let (mut n, mut next) = (0usize, 0usize);
    for_each_pair(groups, |p| {
        if next < keep.len() && keep[next] == n {
            out.push(p);
            next += 1;
        }
        n += 1;
    });
    out
}

fn pair_margin(w: &[f64], groups: &[Vec<&GradedExample>], (g, i, j): Pair) -> f64 {
    let (a, b) = (
        &groups[g as usize][i as usize].vector.values,
        &groups[g as usize][j as usize].vector.values,
    );
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y))
        .sum()
}

fn pair_errors(w: &[f64], groups: &[Vec<&GradedExample>], pairs: &[Pair]) -> usize {
    pairs
        .iter()
        .filter(|&&p| pair_margin(w, groups, p) <= 0.0)
        .count()
}

/// Linear pairwise hinge-loss ranker trained by stochastic subgradient descent
/// with a `1/(λt)` step size and projection onto the `1/√λ` ball, where
/// `λ = 1/(C·|pairs|)`. Pairs are visited in a seeded shuffled order each
/// epoch; the epoch with the fewest training-pair errors wins.
pub fn train_pairwise(
    groups: &[QueryGroup],
    params: &PairwiseParams,
) -> Result<(LinearModel, PairwiseTrace)> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    let prep = prepare(groups)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pairs = collect_pairs(&prep.groups, params.max_pairs.max(1), &mut rng);
    let dims = prep.schema.len();
    let lambda = 1.0 / (params.c * pairs.len() as f64);
    let radius = 1.0 / sqrt(lambda);

    let mut w = alloc::vec![0.0; dims];
    let mut best = w.clone();
    let mut best_err = pair_errors(&w, &prep.groups, &pairs);
    let mut trace = PairwiseTrace {
        pairs: pairs.len(),
        ..Default::default()
    };
    let mut t = 0u64;
    for _ in 0..params.epochs {
        pairs.shuffle(&mut rng);
        for &p in &pairs {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let violated = pair_margin(&w, &prep.groups, p) < 1.0;
            let decay = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|x| *x *= decay);
            if violated {
                let (a, b) = (
                    &prep.groups[p.0 as usize][p.1 as usize].vector.values,
                    &prep.groups[p.0 as usize][p.2 as usize].vector.values,
                );
                for (x, (u, v)) in w.iter_mut().zip(a.iter().zip(b)) {
                    *x += eta * (u - v);
                }
            }
            let norm = sqrt(w.iter().map(|x| x * x).sum());
            if norm > radius {
                w.iter_mut().for_each(|x| *x *= radius / norm);
            }
        }
        let err = pair_errors(&w, &prep.groups, &pairs);
        if err < best_err {
            best_err = err;
            best.clone_from(&w);
        }
        trace.epoch_errors.push(err);
        trace.best_errors.push(best_err);
        if best_err == 0 {
            break;
        }
    }
    let mut model = LinearModel::new(prep.schema, best, TrainerKind::PairwiseHinge)?;
    model.hyperparams.insert("C".into(), params.c);
    model
        .hyperparams
        .insert("epochs".into(), params.epochs as f64);
    model
        .hyperparams
        .insert("max_pairs".into(), params.max_pairs as f64);
    model.seed = params.seed;
    Ok((model, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateAscentParams {
    pub restarts: usize,
    /// Maximum passes over all coordinates per restart.
    pub iterations: usize,
    /// Additive steps tried on each coordinate.
    pub steps: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

impl Default for CoordinateAscentParams {
    fn default() -> Self {
        let base = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
        let steps = base.iter().flat_map(|&s| [s, -s]).collect();
        Self {
            restarts: 3,
            iterations: 25,
            steps,
            k: 10,
            seed: 0,
        }
    }
}

/// Objective after every accepted step of the winning restart, starting with
/// the objective of its initial weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AscentTrace {
    pub objective: Vec<f64>,
    pub restart: usize,
}

struct NdcgObjective<'a> {
    groups: &'a [Vec<&'a GradedExample>],
    ideal: Vec<f64>,
    k: usize,
}

impl NdcgObjective<'_> {
    /// Mean NDCG@k over groups with a relevant item, given per-item scores.
    fn eval(&self, scores: &[Vec<f64>], buf: &mut Vec<(f64, usize)>) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for ((ex, s), &ideal) in self.groups.iter().zip(scores).zip(&self.ideal) {
            if ideal == 0.0 {
                continue;
            }
            buf.clear();
            buf.extend(s.iter().copied().zip(0..));
            let order =
                |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            let k = self.k.min(buf.len());
            if k < buf.len() {
                buf.select_nth_unstable_by(k, order);
                buf.truncate(k);
            }
            buf.sort_unstable_by(order);
            sum += dcg(buf.iter().map(|&(_, i)| ex[i].grade), k) / ideal;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Listwise linear ranker: cyclic coordinate line search over a fixed step
/// grid, accepting only strict improvements of mean training NDCG@k.
/// Restart 0 starts from uniform weights, later restarts from seeded random
/// non-negative weights; the best restart wins (earliest on ties).
pub fn train_coordinate_ascent(
    groups: &[QueryGroup],
    params: &CoordinateAscentParams,
) -> Result<(LinearModel, AscentTrace)> {
    if params.k == 0 || params.restarts == 0 {
        return Err(Error::InvalidParameter(
            "coordinate ascent needs k >= 1 and restarts >= 1".into(),
        ));
    }
    let prep = prepare(groups)?;
    let dims = prep.schema.len();
    let ideal = prep
        .groups
        .iter()
        .map(|ex| ideal_dcg(ex.iter().map(|e| e.grade), params.k))
        .collect();
    let obj = NdcgObjective {
        groups: &prep.groups,
        ideal,
        k: params.k,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut buf = Vec::new();

    let mut best: Option<(f64, Vec<f64>, AscentTrace)> = None;
    for r in 0..params.restarts {
        let mut w: Vec<f64> = if r == 0 {
            alloc::vec![1.0 / dims as f64; dims]
        } else {
            let raw: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter()
                .map(|x| if s > 0.0 { x / s } else { 1.0 / dims as f64 })
                .collect()
        };
        let mut scores: Vec<Vec<f64>> = prep
            .groups
            .iter()
            .map(|ex| ex.iter().map(|e| dot(&w, &e.vector.values)).collect())
            .collect();
        let mut current = obj.eval(&scores, &mut buf);
        let mut trace = AscentTrace {
            objective: alloc::vec![current],
            restart: r,
        };
        let mut trial = scores.clone();
        for _ in 0..params.iterations {
            let mut moved = false;
            #[allow(clippy::needless_range_loop)]
            for j in 0..dims {
                let mut step_best: Option<(f64, f64)> = None;
                for &s in &params.steps {
                    for ((t, base), ex) in trial.iter_mut().zip(&scores).zip(&prep.groups) {
                        for ((ti, bi), e) in t.iter_mut().zip(base).zip(ex) {
                            *ti = bi + s * e.vector.values[j];
                        }
                    }
                    let v = obj.eval(&trial, &mut buf);
                    if v > step_best.map_or(current, |b| b.1) {
                        step_best = Some((s, v));
                    }
                }
                if let Some((s, v)) = step_best {
                    w[j] += s;
                    for (base, ex) in scores.iter_mut().zip(&prep.groups) {
                        for (bi, e) in base.iter_mut().zip(ex) {
                            *bi += s * e.vector.values[j];
                        }
                    }
                    current = v;
                    trace.objective.push(v);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| current > b.0) {
            best = Some((current, w, trace));
        }
    }
    let (_, w, trace) = best.expect("at least one restart");
    let mut model = LinearModel::new(prep.schema, w, TrainerKind::CoordinateAscent)?;
    model
        .hyperparams
        .insert("restarts".into(), params.restarts as f64);
    model
        .hyperparams
        .insert("iterations".into(), params.iterations as f64);
    model.hyperparams.insert("k".into(), params.k as f64);
    model.seed = params.seed;
    Ok((model, trace))
}

/// Training-pair errors (ties count as errors) of `model` over `groups`.
pub fn pairwise_errors(model: &LinearModel, groups: &[QueryGroup]) -> Result<usize> {
    let prep = prepare(groups)?;
    let mut n = 0;
    for_each_pair(&prep.groups, |p| {
        if pair_margin(&model.weights, &prep.groups, p) <= 0.0 {
            n += 1;
        }
    });
    Ok(n)
}

/// Mean NDCG@k of `model` over the groups that have a relevant item.
pub fn mean_ndcg(model: &LinearModel, groups: &[QueryGroup], k: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for g in groups {
        let grades: BTreeMap<String, u8> = g
            .examples
            .iter()
            .map(|e| (e.vector.item_id.clone(), e.grade))
            .collect();
        if ideal_dcg(grades.values().copied(), k) == 0.0 {
            continue;
        }
        let vectors: Vec<FeatureVector> = g.examples.iter().map(|e| e.vector.clone()).collect();
        sum += ndcg_at_k(&model.score(&g.query_id, &vectors)?, &grades, k);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
