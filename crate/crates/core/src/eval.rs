//! Effectiveness measures, significance testing and cross-validation plans.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::list::RankedList;
use crate::ltr::bucket_grade;
use crate::math::{exp, lgamma, ln, sqrt};
use crate::passage::{covered, merge_spans, Passage, SegmentedCorpus};

/// How passage-level relevance is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgmentMode {
    /// Document grades only.
    DocGraded,
    /// Character ranges of relevant text.
    CharFocused,
    /// Binary grades of sentence passages.
    SentenceBinary,
}

/// Document grades plus passage-level judgments for a set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentSet {
    mode: JudgmentMode,
    doc_grades: BTreeMap<String, BTreeMap<String, u8>>,
    char_spans: BTreeMap<String, BTreeMap<String, Vec<(usize, usize)>>>,
    sentence_grades: BTreeMap<String, BTreeMap<String, u8>>,
}

impl JudgmentSet {
    pub fn new(mode: JudgmentMode) -> Self {
        Self {
            mode,
            doc_grades: BTreeMap::new(),
            char_spans: BTreeMap::new(),
            sentence_grades: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> JudgmentMode {
        self.mode
    }

    pub fn add_grade(&mut self, query_id: &str, doc_id: &str, grade: u8) {
        self.doc_grades
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    /// Adds a relevant character range `[start, end)`.
    pub fn add_span(
        &mut self,
        query_id: &str,
        doc_id: &str,
        start: usize,
        end: usize,
    ) -> Result<()> {
        if self.mode != JudgmentMode::CharFocused {
            return Err(Error::InvalidParameter(
                "character spans need char-focused judgments".into(),
            ));
        }
        if start >= end {
            return Err(Error::InvalidParameter(format!(
                "empty character range {start}..{end} for {query_id}/{doc_id}"
            )));
        }
        let spans = self
            .char_spans
            .entry(query_id.to_string())
            .or_default()
            .entry(doc_id.to_string())
            .or_default();
        spans.push((start, end));
        *spans = merge_spans(spans);
        Ok(())
    }

    pub fn add_sentence(&mut self, query_id: &str, passage_id: &str, grade: u8) -> Result<()> {
        if self.mode != JudgmentMode::SentenceBinary {
            return Err(Error::InvalidParameter(
                "sentence grades need sentence-binary judgments".into(),
            ));
        }
        if grade > 1 {
            return Err(Error::InvalidParameter(format!(
                "sentence grade {grade} is not binary"
            )));
        }
        self.sentence_grades
            .entry(query_id.to_string())
            .or_default()
            .insert(passage_id.to_string(), grade);
        Ok(())
    }

    /// Turns relevant sentences into character spans of their documents.
    pub fn resolve_sentences(&mut self, segmented: &SegmentedCorpus) -> Result<()> {
        for (q, grades) in &self.sentence_grades {
            for pid in grades.iter().filter(|(_, g)| **g > 0).map(|(pid, _)| pid) {
                let p = segmented.get(pid).ok_or_else(|| {
                    Error::InvalidParameter(format!("unknown sentence passage `{pid}`"))
                })?;
                let spans = self
                    .char_spans
                    .entry(q.clone())
                    .or_default()
                    .entry(p.doc_id.clone())
                    .or_default();
                spans.push(p.char_range);
                *spans = merge_spans(spans);
            }
        }
        Ok(())
    }

    /// Query ids with any judgment.
    pub fn queries(&self) -> Vec<&str> {
        let mut q: Vec<&str> = self
            .doc_grades
            .keys()
            .chain(self.char_spans.keys())
            .chain(self.sentence_grades.keys())
            .map(String::as_str)
            .collect();
        q.sort_unstable();
        q.dedup();
        q
    }

    pub fn doc_grades(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.doc_grades.get(query_id)
    }

    /// Documents with grade ≥ 1.
    pub fn relevant_docs(&self, query_id: &str) -> usize {
        self.doc_grades
            .get(query_id)
            .map_or(0, |g| g.values().filter(|&&x| x >= 1).count())
    }

    pub fn spans(&self, query_id: &str) -> Option<&BTreeMap<String, Vec<(usize, usize)>>> {
        self.char_spans.get(query_id)
    }

    pub fn doc_spans(&self, query_id: &str, doc_id: &str) -> &[(usize, usize)] {
        self.char_spans
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .map_or(&[], Vec::as_slice)
    }

    /// Fraction of the passage's characters judged relevant.
    pub fn rfrac(&self, query_id: &str, passage: &Passage) -> f64 {
        if passage.char_len() == 0 {
            return 0.0;
        }
        covered(
            passage.char_range,
            self.doc_spans(query_id, &passage.doc_id),
        ) as f64
            / passage.char_len() as f64
    }

    /// Training grade of a passage: bucketed relevant fraction for character
    /// judgments, the sentence grade for sentence judgments, and the document
    /// grade otherwise.
    pub fn passage_grade(&self, query_id: &str, passage: &Passage) -> u8 {
        match self.mode {
            JudgmentMode::CharFocused => bucket_grade(self.rfrac(query_id, passage)).unwrap_or(0),
            JudgmentMode::SentenceBinary => self
                .sentence_grades
                .get(query_id)
                .and_then(|m| m.get(&passage.passage_id))
                .copied()
                .unwrap_or(0),
            JudgmentMode::DocGraded => self
                .doc_grades
                .get(query_id)
                .and_then(|m| m.get(&passage.doc_id))
                .copied()
                .unwrap_or(0),
        }
    }

    /// Checks every span against document lengths (in bytes).
    pub fn check_bounds(&self, doc_len: impl Fn(&str) -> Option<usize>) -> Result<()> {
        for (q, docs) in &self.char_spans {
            for (d, spans) in docs {
                let len = doc_len(d).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "judged document `{d}` ({q}) is not in the corpus"
                    ))
                })?;
                if let Some(&(_, end)) = spans.iter().find(|&&(_, e)| e > len) {
                    return Err(Error::InvalidParameter(format!(
                        "span end {end} beyond document `{d}` ({len} bytes) for {q}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy without any judgment of the given query.
    pub fn without_query(&self, query_id: &str) -> Self {
        let mut out = self.clone();
        out.doc_grades.remove(query_id);
        out.char_spans.remove(query_id);
        out.sentence_grades.remove(query_id);
        out
    }

    /// Copy restricted to the given queries.
    pub fn restricted_to(&self, queries: &[&str]) -> Self {
        let filter = |q: &String| queries.contains(&q.as_str());
        Self {
            mode: self.mode,
            doc_grades: self
                .doc_grades
                .iter()
                .filter(|(q, _)| filter(q))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            char_spans: self
                .char_spans
                .iter()
                .filter(|(q, _)| filter(q))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            sentence_grades: self
                .sentence_grades
                .iter()
                .filter(|(q, _)| filter(q))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// Average precision within the top `cutoff`; `None` without relevant
/// documents. Relevance is grade ≥ 1.
pub fn average_precision(
    list: &RankedList,
    grades: Option<&BTreeMap<String, u8>>,
    cutoff: usize,
) -> Option<f64> {
    let grades = grades?;
    let total = grades.values().filter(|&&g| g >= 1).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in list.ids().take(cutoff).enumerate() {
        if grades.get(id).is_some_and(|&g| g >= 1) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Fraction of the top `k` that is relevant; short lists count as padded
/// with non-relevant items.
pub fn precision_at(list: &RankedList, grades: Option<&BTreeMap<String, u8>>, k: usize) -> f64 {
    let Some(grades) = grades else { return 0.0 };
    if k == 0 {
        return 0.0;
    }
    list.ids()
        .take(k)
        .filter(|id| grades.get(*id).is_some_and(|&g| g >= 1))
        .count() as f64
        / k as f64
}

/// Mean AP over the runs whose query has relevant documents.
pub fn mean_average_precision<'a, I>(runs: I, judgments: &JudgmentSet, cutoff: usize) -> f64
where
    I: IntoIterator<Item = &'a RankedList>,
{
    let aps: Vec<f64> = runs
        .into_iter()
        .filter_map(|l| average_precision(l, judgments.doc_grades(&l.query_id), cutoff))
        .collect();
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// The 101 recall levels 0.00, 0.01, …, 1.00.
pub fn recall_levels() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Character-level interpolated precision at the given recall levels.
///
/// `retrieved` lists `(doc_id, char_range)` in rank order; `relevant` maps
/// documents to merged relevant spans. Characters are counted once per
/// document no matter how many retrieved passages cover them. Returns `None`
/// when nothing is relevant.
pub fn ip_curve(
    retrieved: &[(&str, (usize, usize))],
    relevant: &BTreeMap<String, Vec<(usize, usize)>>,
    levels: &[f64],
) -> Option<Vec<f64>> {
    let total: usize = relevant
        .values()
        .map(|s| s.iter().map(|(a, b)| b - a).sum::<usize>())
        .sum();
    if total == 0 {
        return None;
    }
    let mut seen: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    let (mut ret, mut rel) = (0usize, 0usize);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(retrieved.len());
    for &(doc, range) in retrieved {
        let spans = seen.entry(doc).or_default();
        let rel_spans = relevant.get(doc).map_or(&[][..], Vec::as_slice);
        // Pieces of `range` not yet retrieved for this document.
        let mut fresh = |from: usize, to: usize| {
            ret += to - from;
            rel += covered((from, to), rel_spans);
        };
        let mut cursor = range.0;
        for &(a, b) in spans.iter() {
            if b <= cursor {
                continue;
            }
            if a >= range.1 {
                break;
            }
            if a > cursor {
                fresh(cursor, a);
            }
            cursor = b;
        }
        if cursor < range.1 {
            fresh(cursor, range.1);
        }
        spans.push(range);
        *spans = merge_spans(spans);
        let precision = if ret == 0 {
            0.0
        } else {
            rel as f64 / ret as f64
        };
        points.push((precision, rel as f64 / total as f64));
    }
    Some(
        levels
            .iter()
            .map(|&x| {
                points
                    .iter()
                    .filter(|p| p.1 >= x - 1e-12)
                    .map(|p| p.0)
                    .fold(0.0, f64::max)
            })
            .collect(),
    )
}

/// Interpolated precision of one passage run.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPrecision {
    pub levels: Vec<f64>,
    pub curve: Vec<f64>,
    /// Mean of `curve` over the 101 standard levels.
    pub maip: f64,
}

impl InterpolatedPrecision {
    /// iP at a level, when it is one of `levels`.
    pub fn at(&self, x: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|l| (l - x).abs() < 1e-12)
            .map(|i| self.curve[i])
    }
}

/// iP curve and average interpolated precision of a passage run. `None` when
/// the query has no relevant characters.
pub fn interpolated_precision(
    run: &RankedList,
    judgments: &JudgmentSet,
    segmented: &SegmentedCorpus,
) -> Result<Option<InterpolatedPrecision>> {
    let Some(relevant) = judgments.spans(&run.query_id) else {
        return Ok(None);
    };
    let retrieved = run
        .ids()
        .map(|id| {
            segmented
                .get(id)
                .map(|p| (p.doc_id.as_str(), p.char_range))
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "unknown passage `{id}` in run for {}",
                        run.query_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let levels = recall_levels();
    Ok(ip_curve(&retrieved, relevant, &levels).map(|curve| {
        let maip = curve.iter().sum::<f64>() / curve.len() as f64;
        InterpolatedPrecision {
            levels,
            curve,
            maip,
        }
    }))
}

/// Result of a two-tailed paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub significant: bool,
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction,
/// converged to a relative tolerance of 1e-10.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = exp(lgamma(a + b) - lgamma(a) - lgamma(b) + a * ln(x) + b * ln(1.0 - x));
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - front * beta_fraction(1.0 - x, b, a) / b;
    }
    front * beta_fraction(x, a, b) / a
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-10;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        for (k, numerator) in [
            num,
            -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0)),
        ]
        .into_iter()
        .enumerate()
        {
            d = 1.0 + numerator * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + numerator / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if k == 1 && (delta - 1.0).abs() < TOL {
                return h;
            }
        }
    }
    h
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn t_two_tailed_p(t: f64, df: f64) -> f64 {
    incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Paired two-tailed t-test, significant when `p < alpha / corrections`.
/// Identical samples give `t = 0, p = 1`; non-zero differences without
/// variance are degenerate.
pub fn paired_ttest(a: &[f64], b: &[f64], alpha: f64, corrections: usize) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DegenerateSample(format!(
            "sample sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::DegenerateSample(
            "need at least two paired values".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) || corrections == 0 {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} / corrections {corrections}"
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1.0;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            df,
            significant: false,
        });
    }
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / df;
    if var <= f64::EPSILON * mean * mean {
        return Err(Error::DegenerateSample(
            "differences have zero variance".into(),
        ));
    }
    let t = mean / sqrt(var / n);
    let p = t_two_tailed_p(t, df);
    Ok(TTest {
        t,
        p,
        df,
        significant: p < alpha / corrections as f64,
    })
}

/// One leave-one-out fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Leave-one-out folds, each splitting the remaining queries into training
/// and validation with a seeded shuffle.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub folds: Vec<Fold>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl CvPlan {
    /// Folds over the (sorted, deduplicated) query ids. The validation part
    /// is `round(fraction·(n−1))` queries, kept within `1..n−1` when `n > 2`.
    /// With two queries the single training query also validates.
    pub fn leave_one_out(query_ids: &[&str], validation_fraction: f64, seed: u64) -> Result<Self> {
        let mut ids: Vec<&str> = query_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "leave-one-out needs at least 2 queries, got {}",
                ids.len()
            )));
        }
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {validation_fraction} outside [0,1)"
            )));
        }
        let folds = ids
            .iter()
            .enumerate()
            .map(|(i, test)| {
                let mut rest: Vec<String> = ids
                    .iter()
                    .filter(|q| *q != test)
                    .map(|q| q.to_string())
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                rest.shuffle(&mut rng);
                let n = rest.len();
                let mut v = libm::round(validation_fraction * n as f64) as usize;
                if n >= 2 {
                    v = v.clamp(usize::from(validation_fraction > 0.0), n - 1);
                } else {
                    v = 0;
                }
                let mut validation = rest.split_off(n - v);
                let mut train = rest;
                train.sort();
                validation.sort();
                Fold {
                    test: test.to_string(),
                    train,
                    validation,
                }
            })
            .collect();
        Ok(Self {
            folds,
            validation_fraction,
            seed,
        })
    }
}
