//! On-disk corpus stores: an analyzed corpus plus a manifest that pins its
//! format, size, stemmer, stopword list and content checksum.
//!
//! Layout of a store directory:
//!
//! - `manifest.toml`
//! - `docs.jsonl`, one `{"id", "text"}` object per document in corpus order
//! - `stopwords.txt`, the list used at analysis time, sorted
//!
//! The positional index is rebuilt from `docs.jsonl` on load. Building is
//! deterministic, so a store always yields the same index.

use std::path::Path;
use std::sync::Arc;

use psgrank_core::index::PositionalIndex;
use psgrank_core::text::{Analyzer, CorpusStore, LightStemmer, NoStemmer, Stemmer, StopwordList};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, CorpusFormat};

pub const STORE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
const DOCS_FILE: &str = "docs.jsonl";
const STOPWORDS_FILE: &str = "stopwords.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub source_format: String,
    pub documents: usize,
    pub empty_documents: usize,
    pub tokens: usize,
    pub terms: usize,
    pub stemmer: String,
    pub stopwords: String,
    pub stopword_count: usize,
    pub docs_sha256: String,
    pub stopwords_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    text: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn stemmer_by_id(id: &str) -> Option<Arc<dyn Stemmer>> {
    match id {
        LightStemmer::ID => Some(Arc::new(LightStemmer)),
        "none" => Some(Arc::new(NoStemmer)),
        _ => None,
    }
}

fn docs_jsonl(store: &CorpusStore) -> String {
    let mut out = String::new();
    for d in store.docs() {
        let rec = DocRecord {
            id: d.doc_id.clone(),
            text: d.raw_text.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain strings serialize"));
        out.push('\n');
    }
    out
}

fn stopwords_text(list: &StopwordList) -> String {
    let mut terms: Vec<&str> = list.terms().collect();
    terms.sort_unstable();
    terms.iter().map(|t| format!("{t}\n")).collect()
}

/// An analyzed corpus with its index.
pub struct Corpus {
    pub store: CorpusStore,
    pub index: Arc<PositionalIndex>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn build(
        records: Vec<(String, String)>,
        source: CorpusFormat,
        stopwords: StopwordList,
    ) -> Result<Self> {
        let analyzer = Analyzer::new(Arc::new(LightStemmer), stopwords);
        let store = CorpusStore::build(analyzer, records)?;
        let index = Arc::new(PositionalIndex::build(&store)?);
        let manifest = Self::manifest_of(&store, &index, source.as_str());
        Ok(Self {
            store,
            index,
            manifest,
        })
    }

    fn manifest_of(store: &CorpusStore, index: &PositionalIndex, source: &str) -> Manifest {
        let sw = store.analyzer().stopwords();
        Manifest {
            format_version: STORE_FORMAT_VERSION,
            source_format: source.to_string(),
            documents: store.len(),
            empty_documents: store.empty_documents().count(),
            tokens: store.token_count(),
            terms: index.num_terms(),
            stemmer: store.analyzer().stemmer_id().to_string(),
            stopwords: sw.name().to_string(),
            stopword_count: sw.len(),
            docs_sha256: sha256_hex(docs_jsonl(store).as_bytes()),
            stopwords_sha256: sha256_hex(stopwords_text(sw).as_bytes()),
        }
    }

    /// A raw corpus file, or a store directory when `path` is a directory.
    pub fn open(
        path: &Path,
        format: Option<CorpusFormat>,
        stopwords: Option<&Path>,
    ) -> Result<Self> {
        if path.is_dir() {
            let corpus = Self::load(path)?;
            if let Some(sw) = stopwords {
                let list = io::read_stopwords(sw)?;
                if sha256_hex(stopwords_text(&list).as_bytes()) != corpus.manifest.stopwords_sha256
                {
                    return Err(Error::invalid(format!(
                        "stopword list {} differs from the one the store at {} was built with",
                        sw.display(),
                        path.display()
                    )));
                }
            }
            return Ok(corpus);
        }
        let format = format.unwrap_or_else(|| CorpusFormat::infer(path));
        let list = match stopwords {
            Some(sw) => io::read_stopwords(sw)?,
            None => StopwordList::inquery(),
        };
        Self::build(io::read_corpus(path, format)?, format, list)
    }

    /// Writes the store files and returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        io::write_text(&dir.join(DOCS_FILE), &docs_jsonl(&self.store))?;
        io::write_text(
            &dir.join(STOPWORDS_FILE),
            &stopwords_text(self.store.analyzer().stopwords()),
        )?;
        let manifest =
            toml::to_string(&self.manifest).map_err(|e| Error::Runtime(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        io::write_text(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a store, checking the manifest against the files.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let manifest: Manifest = toml::from_str(&io::read_text(&mpath)?)
            .map_err(|e| Error::parse(&mpath, 0, e.to_string()))?;
        let mut problems = Vec::new();
        if manifest.format_version != STORE_FORMAT_VERSION {
            problems.push(format!(
                "store format {} is not supported (expected {STORE_FORMAT_VERSION})",
                manifest.format_version
            ));
        }
        let stemmer = stemmer_by_id(&manifest.stemmer);
        if stemmer.is_none() {
            problems.push(format!("unknown stemmer `{}`", manifest.stemmer));
        }
        let docs_path = dir.join(DOCS_FILE);
        let docs_text = io::read_text(&docs_path)?;
        if sha256_hex(docs_text.as_bytes()) != manifest.docs_sha256 {
            problems.push(format!(
                "{} does not match the manifest checksum",
                docs_path.display()
            ));
        }
        let sw_text = io::read_text(&dir.join(STOPWORDS_FILE))?;
        if sha256_hex(sw_text.as_bytes()) != manifest.stopwords_sha256 {
            problems.push("stopwords.txt does not match the manifest checksum".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let stopwords = StopwordList::parse(&manifest.stopwords, &sw_text)?;
        let records = docs_text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let r: DocRecord = serde_json::from_str(l)
                    .map_err(|e| Error::parse(&docs_path, i + 1, e.to_string()))?;
                Ok((r.id, r.text))
            })
            .collect::<Result<Vec<_>>>()?;
        let store =
            CorpusStore::build(Analyzer::new(stemmer.expect("checked"), stopwords), records)?;
        let index = Arc::new(PositionalIndex::build(&store)?);
        let rebuilt = Self::manifest_of(&store, &index, &manifest.source_format);
        if rebuilt != manifest {
            return Err(Error::invalid(format!(
                "{} disagrees with the stored documents",
                mpath.display()
            )));
        }
        Ok(Self {
            store,
            index,
            manifest,
        })
    }
}
