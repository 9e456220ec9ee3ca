//! Passage segmentation.
//!
//! Documents are cut into non-overlapping windows of `L` tokens (stopwords
//! included); the last window keeps whatever is left. A sentence mode splits
//! on `.`, `!` or `?` followed by whitespace instead. Every document yields at
//! least one passage, so a document with no tokens gets one empty passage.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::{CorpusStore, Document};

/// Separator between document id and window ordinal in a passage id.
pub const PASSAGE_ID_SEP: char = '#';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segmentation {
    /// Fixed windows of this many tokens.
    Window(usize),
    Sentences,
}

impl Segmentation {
    pub fn window(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter(
                "passage window length must be >= 1".into(),
            ));
        }
        Ok(Self::Window(len))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    /// Half-open token range within the document.
    pub token_range: (usize, usize),
    /// Half-open byte range covering exactly the passage's tokens.
    pub char_range: (usize, usize),
}

impl Passage {
    pub fn len(&self) -> usize {
        self.token_range.1 - self.token_range.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn char_len(&self) -> usize {
        self.char_range.1 - self.char_range.0
    }
}

pub fn passage_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}{PASSAGE_ID_SEP}{ordinal}")
}

/// Inverse of [`passage_id`].
pub fn parse_passage_id(id: &str) -> Option<(&str, usize)> {
    let (doc, ord) = id.rsplit_once(PASSAGE_ID_SEP)?;
    let ordinal = ord.parse().ok()?;
    (passage_id(doc, ordinal) == id).then_some((doc, ordinal))
}

fn make(doc: &Document, ordinal: usize, start: usize, end: usize) -> Passage {
    let char_range = if start < end {
        (doc.tokens[start].char_start, doc.tokens[end - 1].char_end)
    } else {
        (0, 0)
    };
    Passage {
        passage_id: passage_id(&doc.doc_id, ordinal),
        doc_id: doc.doc_id.clone(),
        ordinal,
        token_range: (start, end),
        char_range,
    }
}

fn sentence_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some((i, c)) = it.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = it.peek() {
                if next.is_whitespace() {
                    ends.push(i + c.len_utf8());
                }
            }
        }
    }
    ends
}

pub fn segment(doc: &Document, mode: Segmentation) -> Vec<Passage> {
    let n = doc.len();
    let mut out = Vec::new();
    match mode {
        Segmentation::Window(len) => {
            let len = len.max(1);
            let mut start = 0;
            while start < n {
                let end = (start + len).min(n);
                out.push(make(doc, out.len(), start, end));
                start = end;
            }
        }
        Segmentation::Sentences => {
            let ends = sentence_ends(&doc.raw_text);
            let mut start = 0;
            let mut b = 0;
            for (i, tok) in doc.tokens.iter().enumerate() {
                while b < ends.len() && ends[b] <= tok.char_start {
                    if i > start {
                        out.push(make(doc, out.len(), start, i));
                        start = i;
                    }
                    b += 1;
                }
            }
            if n > start {
                out.push(make(doc, out.len(), start, n));
            }
        }
    }
    if out.is_empty() {
        out.push(make(doc, 0, 0, 0));
    }
    out
}

/// `(pre, follow)` neighbours of the passage at `ordinal`. A passage at a
/// document boundary is its own missing neighbour.
pub fn neighbors(passages: &[Passage], ordinal: usize) -> (&Passage, &Passage) {
    let p = &passages[ordinal];
    let pre = if ordinal == 0 {
        p
    } else {
        &passages[ordinal - 1]
    };
    let follow = passages.get(ordinal + 1).unwrap_or(p);
    (pre, follow)
}

/// Sorts and merges half-open ranges; empty ranges are dropped.
pub fn merge_spans(spans: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut s: Vec<(usize, usize)> = spans.iter().copied().filter(|(a, b)| a < b).collect();
    s.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(s.len());
    for (a, b) in s {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Characters of `range` covered by the union of (merged) `spans`.
pub fn covered(range: (usize, usize), merged: &[(usize, usize)]) -> usize {
    merged
        .iter()
        .map(|&(a, b)| {
            let lo = a.max(range.0);
            let hi = b.min(range.1);
            hi.saturating_sub(lo)
        })
        .sum()
}

/// `(overlap_chars, passage_chars)` of a passage against relevant spans.
pub fn char_overlap(p: &Passage, spans: &[(usize, usize)]) -> (usize, usize) {
    (covered(p.char_range, &merge_spans(spans)), p.char_len())
}

/// Passages of every document in a store, addressable by id.
#[derive(Debug, Clone)]
pub struct SegmentedCorpus {
    mode: Segmentation,
    by_doc: Vec<Vec<Passage>>,
    by_id: BTreeMap<String, (usize, usize)>,
}

impl SegmentedCorpus {
    pub fn new(store: &CorpusStore, mode: Segmentation) -> Self {
        let by_doc: Vec<Vec<Passage>> = store.docs().iter().map(|d| segment(d, mode)).collect();
        let mut by_id = BTreeMap::new();
        for (d, ps) in by_doc.iter().enumerate() {
            for p in ps {
                by_id.insert(p.passage_id.clone(), (d, p.ordinal));
            }
        }
        Self {
            mode,
            by_doc,
            by_id,
        }
    }

    pub fn mode(&self) -> Segmentation {
        self.mode
    }

    /// Passages of the document at corpus position `doc`.
    pub fn of_doc(&self, doc: usize) -> &[Passage] {
        &self.by_doc[doc]
    }

    pub fn get(&self, passage_id: &str) -> Option<&Passage> {
        self.by_id.get(passage_id).map(|&(d, o)| &self.by_doc[d][o])
    }

    /// `(doc position, ordinal)` of a passage id.
    pub fn locate(&self, passage_id: &str) -> Option<(usize, usize)> {
        self.by_id.get(passage_id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.by_doc.iter().flatten()
    }
}

impl core::fmt::Display for Segmentation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Segmentation::Window(l) => write!(f, "window-{l}"),
            Segmentation::Sentences => f.write_str("sentences"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Analyzer;
    use alloc::vec;
    use proptest::prelude::*;

    fn doc_with(n: usize) -> Document {
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        Analyzer::default().document("d", &words.join(" "))
    }

    #[test]
    fn window_lengths() {
        let ps = segment(&doc_with(650), Segmentation::Window(300));
        assert_eq!(
            ps.iter().map(Passage::len).collect::<Vec<_>>(),
            vec![300, 300, 50]
        );
        let one = segment(&doc_with(300), Segmentation::Window(300));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].token_range, (0, 300));
    }

    #[test]
    fn empty_document_gets_one_empty_passage() {
        let ps = segment(&doc_with(0), Segmentation::Window(300));
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].ordinal, 0);
        assert!(ps[0].is_empty());
    }

    #[test]
    fn spans_reassemble_text() {
        let doc = Analyzer::default().document(
            "d",
            "Alpha, beta;  gamma... delta!\nepsilon zeta eta theta iota kappa lambda mu",
        );
        let ps = segment(&doc, Segmentation::Window(3));
        let covered_region =
            &doc.raw_text[doc.tokens[0].char_start..doc.tokens.last().unwrap().char_end];
        let mut rebuilt = String::new();
        for (i, p) in ps.iter().enumerate() {
            if i > 0 {
                let gap_start = ps[i - 1].char_range.1;
                rebuilt.push_str(&doc.raw_text[gap_start..p.char_range.0]);
            }
            rebuilt.push_str(&doc.raw_text[p.char_range.0..p.char_range.1]);
            assert_eq!(p.char_range.0, doc.tokens[p.token_range.0].char_start);
            assert_eq!(p.char_range.1, doc.tokens[p.token_range.1 - 1].char_end);
        }
        assert_eq!(rebuilt, covered_region);
    }

    #[test]
    fn sentence_mode() {
        let doc =
            Analyzer::default().document("d", "One two. Three four five! Six? Seven 8.5 nine ten.");
        let ps = segment(&doc, Segmentation::Sentences);
        let lens: Vec<usize> = ps.iter().map(Passage::len).collect();
        assert_eq!(lens, vec![2, 3, 1, 5]);
        assert_eq!(
            &doc.raw_text[ps[1].char_range.0..ps[1].char_range.1],
            "Three four five"
        );
    }

    #[test]
    fn neighbour_conventions() {
        let ps = segment(&doc_with(9), Segmentation::Window(3));
        let (pre, follow) = neighbors(&ps, 1);
        assert_eq!((pre.ordinal, follow.ordinal), (0, 2));
        assert_eq!(neighbors(&ps, 0).0.ordinal, 0);
        assert_eq!(neighbors(&ps, 2).1.ordinal, 2);
        let single = segment(&doc_with(2), Segmentation::Window(3));
        let (a, b) = neighbors(&single, 0);
        assert_eq!((a.ordinal, b.ordinal), (0, 0));
    }

    fn psg(range: (usize, usize)) -> Passage {
        Passage {
            passage_id: "d#0".into(),
            doc_id: "d".into(),
            ordinal: 0,
            token_range: (0, 1),
            char_range: range,
        }
    }

    #[test]
    fn overlap_arithmetic() {
        assert_eq!(char_overlap(&psg((0, 100)), &[(50, 150)]), (50, 100));
        assert_eq!(char_overlap(&psg((0, 100)), &[(200, 300)]), (0, 100));
    }

    #[test]
    fn id_round_trip() {
        assert_eq!(
            parse_passage_id(&passage_id("doc#7", 3)),
            Some(("doc#7", 3))
        );
        assert_eq!(parse_passage_id("nosep"), None);
        assert_eq!(parse_passage_id("d#01"), None);
    }

    proptest! {
        #[test]
        fn overlap_matches_bitmap(
            range in (0usize..80, 0usize..80),
            spans in proptest::collection::vec((0usize..100, 0usize..100), 0..6),
        ) {
            let (a, b) = (range.0.min(range.1), range.0.max(range.1));
            let spans: Vec<(usize, usize)> = spans.into_iter().map(|(x, y)| (x.min(y), x.max(y))).collect();
            let mut bitmap = [false; 100];
            for &(s, e) in &spans {
                for c in bitmap.iter_mut().take(e).skip(s) {
                    *c = true;
                }
            }
            let expected = (a..b).filter(|&i| bitmap[i]).count();
            prop_assert_eq!(char_overlap(&psg((a, b)), &spans), (expected, b - a));
        }

        #[test]
        fn windows_cover_document(n in 0usize..700, len in 1usize..320) {
            let doc = doc_with(n);
            let ps = segment(&doc, Segmentation::Window(len));
            prop_assert!(!ps.is_empty());
            prop_assert_eq!(ps.iter().map(Passage::len).sum::<usize>(), n);
            let mut next = 0;
            for (i, p) in ps.iter().enumerate() {
                prop_assert_eq!(p.ordinal, i);
                prop_assert_eq!(p.token_range.0, next);
                if i + 1 < ps.len() {
                    prop_assert_eq!(p.len(), len);
                }
                next = p.token_range.1;
                prop_assert_eq!(parse_passage_id(&p.passage_id), Some(("d", i)));
            }
        }
    }
}
