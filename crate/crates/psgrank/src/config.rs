//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use psgrank_core::ltr::TrainerKind;
use psgrank_core::rank::Method;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, CorpusFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<String>,
    #[serde(default = "default_trainer")]
    pub trainer: String,
    /// Worker threads; 0 lets the pool decide. Output does not depend on it.
    #[serde(default)]
    pub workers: usize,
    pub paths: Paths,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub training: Training,
    #[serde(default)]
    pub significance: Significance,
    #[serde(default)]
    pub esa: EsaConfig,
}

fn default_trainer() -> String {
    TrainerKind::PairwiseHinge.as_str().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_format: Option<String>,
    pub topics: PathBuf,
    pub doc_qrels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psg_qrels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synonyms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Window length in tokens.
    pub window: usize,
    /// Segment into sentences instead of windows.
    pub sentences: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window: 300,
            sentences: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    pub docs: usize,
    pub passages: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            docs: 1000,
            passages: 1500,
        }
    }
}

/// `from/per, …, to/per`; dividing keeps values like 0.3 exact in text.
fn steps(from: u32, to: u32, per: f64) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / per).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    /// Dirichlet μ of the initial retrieval.
    pub init_mu: f64,
    /// Dirichlet μ of every feature and baseline.
    pub mu: Vec<f64>,
    pub svm_c: Vec<f64>,
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
    pub qsf_lambda: Vec<f64>,
    pub plm_sigma: Vec<f64>,
    /// Values for both PLM weights; pairs summing above 1 are skipped.
    pub plm_weight: Vec<f64>,
    pub docpsg_lambda: Vec<f64>,
    /// SDM weights range over the simplex with spacing `1/sdm_steps`.
    pub sdm_steps: u32,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            init_mu: 1000.0,
            mu: vec![500.0, 1500.0, 2500.0],
            svm_c: vec![0.0001, 0.01, 0.1],
            alpha: steps(0, 10, 10.0),
            nu: vec![0.0, 30.0, 60.0, 90.0, 100.0],
            qsf_lambda: steps(1, 9, 10.0),
            plm_sigma: vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
            plm_weight: steps(0, 5, 5.0),
            docpsg_lambda: steps(1, 9, 10.0),
            sdm_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Training {
    pub epochs: usize,
    pub max_pairs: usize,
    pub ca_restarts: usize,
    pub ca_iterations: usize,
    pub ndcg_k: usize,
    pub include_query_length: bool,
    pub validation_fraction: f64,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            epochs: 50,
            max_pairs: 1_000_000,
            ca_restarts: 3,
            ca_iterations: 25,
            ndcg_k: 10,
            include_query_length: false,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Significance {
    pub alpha: f64,
    /// Bonferroni family size.
    pub corrections: usize,
}

impl Default for Significance {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            corrections: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsaConfig {
    /// Use the experiment corpus as the concept space.
    pub enabled: bool,
    pub depth: usize,
    pub keywords: usize,
}

impl Default for EsaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            depth: 100,
            keywords: 20,
        }
    }
}

/// Scalar fields the command line may override.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trainer: Option<String>,
    pub workers: Option<usize>,
    pub method: Option<String>,
    pub window: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&io::read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = &o.trainer {
            self.trainer = t.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(m) = &o.method {
            self.methods = vec![m.clone()];
        }
        if let Some(w) = o.window {
            self.segmentation.window = w;
            self.segmentation.sentences = false;
        }
    }

    /// Parsed methods in configuration order, without duplicates.
    pub fn parsed_methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for m in self.methods.iter().filter_map(|m| Method::parse(m)) {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    pub fn trainer_kind(&self) -> Option<TrainerKind> {
        TrainerKind::parse(&self.trainer)
    }

    pub fn corpus_format(&self) -> Option<CorpusFormat> {
        self.paths
            .corpus_format
            .as_deref()
            .and_then(CorpusFormat::parse)
    }

    /// Every problem with the configuration; paths resolve against `base`.
    pub fn problems(&self, base: &Path) -> Vec<String> {
        let mut p = Vec::new();
        let allowed = || {
            Method::ALL
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", ")
        };
        if self.methods.is_empty() {
            p.push(format!(
                "methods: at least one method is required (allowed: {})",
                allowed()
            ));
        }
        for m in &self.methods {
            if Method::parse(m).is_none() {
                p.push(format!(
                    "methods: unknown method `{m}` (allowed: {})",
                    allowed()
                ));
            }
        }
        let methods = self.parsed_methods();
        let learned = methods.iter().any(|m| m.needs_trainer());
        if self.trainer_kind().is_none() {
            let names: Vec<_> = TrainerKind::ALL.iter().map(|t| t.as_str()).collect();
            p.push(format!(
                "trainer: unknown trainer `{}` (allowed: {})",
                self.trainer,
                names.join(", ")
            ));
        }
        if let Some(f) = &self.paths.corpus_format {
            if CorpusFormat::parse(f).is_none() {
                p.push(format!(
                    "paths.corpus_format: unknown format `{f}` (allowed: jsonl, trecweb)"
                ));
            }
        }
        let mut need = |name: &str, path: Option<&PathBuf>, required: bool| match path {
            Some(path) if !io::resolve(base, path).exists() => p.push(format!(
                "paths.{name}: {} does not exist",
                io::resolve(base, path).display()
            )),
            None if required => p.push(format!("paths.{name} is required")),
            _ => {}
        };
        need("corpus", Some(&self.paths.corpus), true);
        need("topics", Some(&self.paths.topics), true);
        need("doc_qrels", Some(&self.paths.doc_qrels), true);
        need("psg_qrels", self.paths.psg_qrels.as_ref(), false);
        need("stopwords", self.paths.stopwords.as_ref(), false);
        need("embeddings", self.paths.embeddings.as_ref(), false);
        need("synonyms", self.paths.synonyms.as_ref(), false);
        need("entities", self.paths.entities.as_ref(), false);

        if !self.segmentation.sentences && self.segmentation.window == 0 {
            p.push("segmentation.window must be >= 1".into());
        }
        if self.cutoffs.docs == 0 || self.cutoffs.passages == 0 {
            p.push("cutoffs.docs and cutoffs.passages must be >= 1".into());
        }
        let g = &self.grids;
        let mut grid =
            |name: &str, values: &[f64], used: bool, ok: fn(f64) -> bool, range: &str| {
                if !used {
                    return;
                }
                if values.is_empty() {
                    p.push(format!("grids.{name} must not be empty"));
                }
                for v in values.iter().filter(|v| !ok(**v)) {
                    p.push(format!("grids.{name}: value {v} is outside {range}"));
                }
            };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let has = |ms: &[Method]| methods.iter().any(|m| ms.contains(m));
        grid("init_mu", &[g.init_mu], true, positive, "(0, inf)");
        grid("mu", &g.mu, true, positive, "(0, inf)");
        grid(
            "svm_c",
            &g.svm_c,
            learned && self.trainer_kind() == Some(TrainerKind::PairwiseHinge),
            positive,
            "(0, inf)",
        );
        grid(
            "alpha",
            &g.alpha,
            has(&[Method::Rrf, Method::Fpd]),
            unit,
            "[0, 1]",
        );
        grid(
            "nu",
            &g.nu,
            has(&[Method::Rrf, Method::Fpd, Method::Smpd]),
            |x| x >= 0.0 && x.is_finite(),
            "[0, inf)",
        );
        grid(
            "qsf_lambda",
            &g.qsf_lambda,
            learned || has(&[Method::Qsf]),
            unit,
            "[0, 1]",
        );
        grid(
            "plm_sigma",
            &g.plm_sigma,
            has(&[Method::Plm]),
            positive,
            "(0, inf)",
        );
        grid(
            "plm_weight",
            &g.plm_weight,
            has(&[Method::Plm]),
            unit,
            "[0, 1]",
        );
        grid(
            "docpsg_lambda",
            &g.docpsg_lambda,
            has(&[Method::DocPsg]),
            unit,
            "[0, 1]",
        );
        if has(&[Method::Sdm]) && g.sdm_steps == 0 {
            p.push("grids.sdm_steps must be >= 1".into());
        }
        let t = &self.training;
        if learned {
            if t.epochs == 0
                || t.max_pairs == 0
                || t.ca_restarts == 0
                || t.ca_iterations == 0
                || t.ndcg_k == 0
            {
                p.push("training: epochs, max_pairs, ca_restarts, ca_iterations and ndcg_k must be >= 1".into());
            }
            if !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
                p.push(format!(
                    "training.validation_fraction {} is outside (0, 1)",
                    t.validation_fraction
                ));
            }
        }
        if !(self.significance.alpha > 0.0 && self.significance.alpha < 1.0) {
            p.push(format!(
                "significance.alpha {} is outside (0, 1)",
                self.significance.alpha
            ));
        }
        if self.significance.corrections == 0 {
            p.push("significance.corrections must be >= 1".into());
        }
        if self.esa.enabled && (self.esa.depth == 0 || self.esa.keywords == 0) {
            p.push("esa.depth and esa.keywords must be >= 1".into());
        }
        p
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        let p = self.problems(base);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}
