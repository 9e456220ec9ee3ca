use std::collections::BTreeMap;
use std::sync::Arc;

use psgrank_core::eval::{average_precision, JudgmentMode, JudgmentSet};
use psgrank_core::features::{PassageContext, SemanticResources};
use psgrank_core::index::{retrieve_lm, LmParams, PositionalIndex};
use psgrank_core::passage::{Segmentation, SegmentedCorpus};
use psgrank_core::rank::{rank_qsf, rerank_rrf, FusionParams};
use psgrank_core::text::{Analyzer, CorpusStore, LightStemmer, StopwordList};

fn filler(n: usize) -> String {
    (0..n)
        .map(|i| format!("w{}", i % 17))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `focused` packs the query into one window of a long document; `spread`
/// scatters as many mentions over a short one.
fn corpus() -> CorpusStore {
    let focused = format!(
        "{} solar panel efficiency solar panel efficiency {}",
        filler(60),
        filler(60)
    );
    let spread = format!(
        "solar {} panel {} efficiency {} solar {} panel {} efficiency",
        filler(6),
        filler(6),
        filler(6),
        filler(6),
        filler(6)
    );
    let records = vec![
        ("focused".to_string(), focused),
        ("spread".to_string(), spread),
        ("other".to_string(), format!("panel {}", filler(30))),
        ("empty".to_string(), String::new()),
    ];
    let analyzer = Analyzer::new(Arc::new(LightStemmer), StopwordList::inquery());
    CorpusStore::build(analyzer, records).unwrap()
}

#[test]
fn passage_evidence_reorders_documents() {
    let store = corpus();
    let index = PositionalIndex::build(&store).unwrap();
    let segmented = SegmentedCorpus::new(&store, Segmentation::Window(10));
    let query = store.analyzer().query("q1", "solar panel efficiency");
    let params = LmParams::new(100.0).unwrap();

    let docs = retrieve_lm(&query, &index, params, 10);
    let ids: Vec<&str> = docs.ids().collect();
    assert_eq!(ids.len(), 3, "the empty document matches nothing");
    assert_eq!(
        ids[0], "spread",
        "whole-document scoring favours the short document"
    );

    let res = SemanticResources::default();
    let ctx = PassageContext::new(&query, &ids, &store, &index, &segmented, &res, params).unwrap();
    let passages = rank_qsf(&ctx, 0.0).unwrap();
    assert!(passages.ids().next().unwrap().starts_with("focused#"));

    let fused = rerank_rrf(&docs, &passages, FusionParams::new(60.0, 0.0).unwrap());
    assert_eq!(fused.ids().next(), Some("focused"));
    assert_eq!(fused.len(), docs.len());

    let mut judgments = JudgmentSet::new(JudgmentMode::DocGraded);
    judgments.add_grade("q1", "focused", 2);
    judgments.add_grade("q1", "other", 0);
    judgments.add_grade("q2", "spread", 1);
    let grades = judgments.doc_grades("q1");
    assert!(average_precision(&docs, grades, 1000).unwrap() < 1.0);
    assert_eq!(average_precision(&fused, grades, 1000), Some(1.0));

    let restricted = judgments.restricted_to(&["q1"]);
    assert!(restricted.doc_grades("q2").is_none());
    assert_eq!(restricted.doc_grades("q1").map(BTreeMap::len), Some(2));
}
