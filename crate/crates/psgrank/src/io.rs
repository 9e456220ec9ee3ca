//! Readers for corpora, topics, judgments and semantic resources.

use std::fs;
use std::path::{Path, PathBuf};

use psgrank_core::eval::{JudgmentMode, JudgmentSet};
use psgrank_core::features::{Embeddings, EntityAnnotations, SynonymTable};
use psgrank_core::text::{Analyzer, StopwordList};
use serde::Deserialize;

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Trecweb,
}

impl CorpusFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Trecweb => "trecweb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jsonl" => Some(CorpusFormat::Jsonl),
            "trecweb" => Some(CorpusFormat::Trecweb),
            _ => None,
        }
    }

    /// Guess from the extension: `.jsonl`/`.json` or anything else as TREC-web.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Trecweb,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    #[serde(default)]
    title: Option<String>,
}

/// `(id, text)` records of a JSONL corpus. A title is prepended to the text,
/// separated by a newline, so character offsets count from the title.
pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    data_lines(text)
        .map(|(n, line)| {
            let r: JsonRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let body = match r.title.filter(|t| !t.is_empty()) {
                Some(t) => format!("{t}\n{}", r.text),
                None => r.text,
            };
            Ok((r.id, body))
        })
        .collect()
}

/// `(id, text)` records of a TREC-web file. The body is everything after
/// `</DOCNO>` (and after `</DOCHDR>` when present) up to `</DOC>`, trimmed.
pub fn parse_trecweb(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut rest = text;
    let line_of = |offset: usize| text[..offset].lines().count().max(1);
    while let Some(start) = rest.find("<DOC>") {
        let offset = text.len() - rest.len() + start;
        let block = &rest[start + 5..];
        let end = block
            .find("</DOC>")
            .ok_or_else(|| Error::parse(path, line_of(offset), "unterminated <DOC>"))?;
        let block = &block[..end];
        let id_start = block
            .find("<DOCNO>")
            .ok_or_else(|| Error::parse(path, line_of(offset), "<DOC> without <DOCNO>"))?;
        let id_end = block
            .find("</DOCNO>")
            .ok_or_else(|| Error::parse(path, line_of(offset), "unterminated <DOCNO>"))?;
        let id = block[id_start + 7..id_end].trim().to_string();
        let mut body = &block[id_end + 8..];
        if let Some(h) = body.find("</DOCHDR>") {
            body = &body[h + 9..];
        }
        out.push((id, body.trim().to_string()));
        rest = &rest[start + 5 + end + 6..];
    }
    Ok(out)
}

pub fn read_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<(String, String)>> {
    let text = read_text(path)?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&text, path),
        CorpusFormat::Trecweb => parse_trecweb(&text, path),
    }
}

/// `query_id<TAB>text` lines.
pub fn parse_topics(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut seen = std::collections::BTreeSet::new();
    data_lines(text)
        .map(|(n, line)| {
            let (id, title) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, n, "expected query_id<TAB>text"))?;
            let id = id.trim();
            if id.is_empty() {
                return Err(Error::parse(path, n, "empty query id"));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(path, n, format!("duplicate query id `{id}`")));
            }
            Ok((id.to_string(), title.trim().to_string()))
        })
        .collect()
}

/// Adds `query_id 0 doc_id grade` lines to `judgments`.
pub fn parse_doc_qrels(text: &str, path: &Path, judgments: &mut JudgmentSet) -> Result<()> {
    for (n, line) in data_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(
                path,
                n,
                format!("expected 4 fields, found {}", f.len()),
            ));
        }
        let grade: i64 = f[3]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad grade `{}`", f[3])))?;
        // Negative grades (TREC's "junk") count as non-relevant.
        judgments.add_grade(f[0], f[2], grade.clamp(0, u8::MAX as i64) as u8);
    }
    Ok(())
}

/// Judgment mode of a passage qrels file: 4 tab-separated fields are
/// character ranges, 3 are sentence grades.
pub fn passage_qrels_mode(text: &str, path: &Path) -> Result<JudgmentMode> {
    match data_lines(text).next() {
        None => Ok(JudgmentMode::CharFocused),
        Some((n, line)) => match line.split('\t').count() {
            4 => Ok(JudgmentMode::CharFocused),
            3 => Ok(JudgmentMode::SentenceBinary),
            k => Err(Error::parse(
                path,
                n,
                format!("expected 3 or 4 tab-separated fields, found {k}"),
            )),
        },
    }
}

pub fn parse_passage_qrels(text: &str, path: &Path, judgments: &mut JudgmentSet) -> Result<()> {
    let num = |n: usize, s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad number `{s}`")))
    };
    for (n, line) in data_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        match (judgments.mode(), f.len()) {
            (JudgmentMode::CharFocused, 4) => judgments
                .add_span(f[0].trim(), f[1].trim(), num(n, f[2])?, num(n, f[3])?)
                .map_err(|e| Error::parse(path, n, e.to_string()))?,
            (JudgmentMode::SentenceBinary, 3) => judgments
                .add_sentence(f[0].trim(), f[1].trim(), num(n, f[2])? as u8)
                .map_err(|e| Error::parse(path, n, e.to_string()))?,
            (_, k) => {
                return Err(Error::parse(
                    path,
                    n,
                    format!("line has {k} fields; the file mixes judgment kinds"),
                ))
            }
        }
    }
    Ok(())
}

/// Stopword list named after the file stem.
pub fn read_stopwords(path: &Path) -> Result<StopwordList> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("custom");
    Ok(StopwordList::parse(name, &read_text(path)?)?)
}

/// `term v1 … vd` lines, keyed by the term's stem. The first line fixes `d`.
pub fn parse_embeddings(text: &str, path: &Path, analyzer: &Analyzer) -> Result<Embeddings> {
    let mut table: Option<Embeddings> = None;
    for (n, line) in data_lines(text) {
        let mut f = line.split_whitespace();
        let term = f.next().expect("data line is non-blank");
        let v = f
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| Error::parse(path, n, format!("bad component `{x}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let t = table.get_or_insert_with(|| Embeddings::new(v.len()));
        t.insert(&analyzer.stem(&term.to_lowercase()), v)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
    }
    table.ok_or_else(|| Error::parse(path, 0, "no embeddings"))
}

/// `term: syn1, syn2, …` lines, all stemmed.
pub fn parse_synonyms(text: &str, path: &Path, analyzer: &Analyzer) -> Result<SynonymTable> {
    let mut table = SynonymTable::default();
    for (n, line) in data_lines(text) {
        let (term, syns) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, n, "expected `term: syn, …`"))?;
        let term = analyzer.stem(&term.trim().to_lowercase());
        for s in syns.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            table.insert(&term, &analyzer.stem(&s.to_lowercase()));
        }
    }
    Ok(table)
}

/// `item_id<TAB>entity_id<TAB>confidence` lines.
pub fn parse_entities(text: &str, path: &Path) -> Result<EntityAnnotations> {
    let mut table = EntityAnnotations::default();
    for (n, line) in data_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(
                path,
                n,
                format!("expected 3 tab-separated fields, found {}", f.len()),
            ));
        }
        let conf: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad confidence `{}`", f[2])))?;
        table
            .insert(f[0].trim(), f[1].trim(), conf)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
    }
    Ok(table)
}

/// `path` relative to `base` unless absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
