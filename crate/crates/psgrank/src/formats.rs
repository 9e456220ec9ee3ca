//! Text formats for models, feature dumps and TREC runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use psgrank_core::features::{FeatureSchema, FeatureVector};
use psgrank_core::ltr::{GradedExample, LinearModel, QueryGroup, TrainerKind};
use psgrank_core::RankedList;

use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "psgrank-model 1";

/// Model file:
///
/// ```text
/// psgrank-model 1
/// schema JPDs
/// trainer pairwise_hinge
/// seed 7
/// hyper C 0.01
/// weight d:SDM-T 0.4182…
/// ```
///
/// Floats use Rust's shortest round-trip formatting.
pub fn write_model(model: &LinearModel) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_HEADER}").unwrap();
    writeln!(s, "schema {}", model.schema.name()).unwrap();
    writeln!(s, "trainer {}", model.trainer.as_str()).unwrap();
    writeln!(s, "seed {}", model.seed).unwrap();
    for (k, v) in &model.hyperparams {
        writeln!(s, "hyper {k} {v:?}").unwrap();
    }
    for (f, w) in model.schema.features().iter().zip(&model.weights) {
        writeln!(s, "weight {f} {w:?}").unwrap();
    }
    s
}

pub fn parse_model(text: &str, path: &Path) -> Result<LinearModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MODEL_HEADER)) => {}
        _ => return Err(Error::parse(path, 1, format!("expected `{MODEL_HEADER}`"))),
    }
    let (mut schema, mut trainer, mut seed) = (None, None, 0u64);
    let mut hyper = BTreeMap::new();
    let (mut names, mut weights) = (Vec::new(), Vec::new());
    let float = |n: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::parse(path, n, format!("bad number `{s}`")))
    };
    for (n, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        match (f[0], f.len()) {
            ("schema", 2) => schema = Some(f[1].to_string()),
            ("trainer", 2) => {
                trainer =
                    Some(TrainerKind::parse(f[1]).ok_or_else(|| {
                        Error::parse(path, n, format!("unknown trainer `{}`", f[1]))
                    })?)
            }
            ("seed", 2) => {
                seed = f[1]
                    .parse()
                    .map_err(|_| Error::parse(path, n, "bad seed"))?
            }
            ("hyper", 3) => {
                hyper.insert(f[1].to_string(), float(n, f[2])?);
            }
            ("weight", 3) => {
                names.push(f[1].to_string());
                weights.push(float(n, f[2])?);
            }
            _ => return Err(Error::parse(path, n, format!("unrecognized line `{line}`"))),
        }
    }
    let schema = schema.ok_or_else(|| Error::parse(path, 0, "missing schema line"))?;
    let trainer = trainer.ok_or_else(|| Error::parse(path, 0, "missing trainer line"))?;
    let schema = Arc::new(FeatureSchema::new(&schema, names)?);
    let mut model = LinearModel::new(schema, weights, trainer)?;
    model.hyperparams = hyper;
    model.seed = seed;
    Ok(model)
}

/// SVMlight dump with a two-line header naming the schema:
///
/// ```text
/// # schema DOC6
/// # features SDM-T SDM-O SDM-U SW1 SW2 Ent
/// 2 qid:q1 1:0.5 2:0.25 … # doc-id
/// ```
pub fn write_svmlight(schema: &FeatureSchema, groups: &[QueryGroup]) -> String {
    let mut s = String::new();
    writeln!(s, "# schema {}", schema.name()).unwrap();
    writeln!(s, "# features {}", schema.features().join(" ")).unwrap();
    for g in groups {
        for e in &g.examples {
            write!(s, "{} qid:{}", e.grade, g.query_id).unwrap();
            for (i, v) in e.vector.values.iter().enumerate() {
                write!(s, " {}:{v:?}", i + 1).unwrap();
            }
            writeln!(s, " # {}", e.vector.item_id).unwrap();
        }
    }
    s
}

/// Parses a dump written by [`write_svmlight`]; groups keep file order.
pub fn parse_svmlight(text: &str, path: &Path) -> Result<(Arc<FeatureSchema>, Vec<QueryGroup>)> {
    let mut name = None;
    let mut features = None;
    let mut groups: Vec<QueryGroup> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# schema ") {
            name = Some(rest.trim().to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("# features ") {
            features = Some(
                rest.split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>(),
            );
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let schema = match (&name, &features) {
            (Some(nm), Some(fs)) => Arc::new(FeatureSchema::new(nm, fs.clone())?),
            _ => {
                return Err(Error::parse(
                    path,
                    n,
                    "data before the `# schema` and `# features` header",
                ))
            }
        };
        let (data, item) = line
            .split_once('#')
            .ok_or_else(|| Error::parse(path, n, "missing `# item_id` comment"))?;
        let mut f = data.split_whitespace();
        let grade: u8 = f
            .next()
            .and_then(|g| g.parse().ok())
            .ok_or_else(|| Error::parse(path, n, "bad grade"))?;
        let qid = f
            .next()
            .and_then(|q| q.strip_prefix("qid:"))
            .ok_or_else(|| Error::parse(path, n, "missing qid"))?;
        let mut values = vec![0.0; schema.len()];
        for pair in f {
            let (k, v) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(path, n, format!("bad pair `{pair}`")))?;
            let k: usize = k
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad index `{k}`")))?;
            if k == 0 || k > values.len() {
                return Err(Error::parse(
                    path,
                    n,
                    format!("feature index {k} outside 1..={}", values.len()),
                ));
            }
            values[k - 1] = v
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad value `{v}`")))?;
        }
        let vector = FeatureVector::new(schema, values, qid, item.trim())?;
        match groups.last_mut() {
            Some(g) if g.query_id == qid => g.examples.push(GradedExample { vector, grade }),
            _ => groups.push(QueryGroup::new(qid, vec![GradedExample { vector, grade }])),
        }
    }
    let schema = match (name, features) {
        (Some(nm), Some(fs)) => Arc::new(FeatureSchema::new(&nm, fs)?),
        _ => {
            return Err(Error::parse(
                path,
                0,
                "missing `# schema` / `# features` header",
            ))
        }
    };
    Ok((schema, groups))
}

/// TREC run lines `qid Q0 item rank score tag`, one block per list.
pub fn write_run<'a>(lists: impl IntoIterator<Item = &'a RankedList>, tag: &str) -> String {
    let mut s = String::new();
    for list in lists {
        for (i, (id, score)) in list.entries().iter().enumerate() {
            writeln!(s, "{} Q0 {id} {} {score:?} {tag}", list.query_id, i + 1).unwrap();
        }
    }
    s
}

/// Lists by query id, ordered by the rank column (file order on ties).
pub fn parse_run(text: &str, path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let mut by_query: BTreeMap<String, Vec<(usize, usize, String)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let rank: usize = f[3]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad rank `{}`", f[3])))?;
        f[4].parse::<f64>()
            .map_err(|_| Error::parse(path, i + 1, format!("bad score `{}`", f[4])))?;
        by_query
            .entry(f[0].to_string())
            .or_default()
            .push((rank, i, f[2].to_string()));
    }
    Ok(by_query
        .into_iter()
        .map(|(q, mut rows)| {
            rows.sort();
            let list = RankedList::from_order(&q, rows.into_iter().map(|r| r.2));
            (q, list)
        })
        .collect())
}
