use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psgrank_core::eval::{
    average_precision, interpolated_precision, paired_ttest, precision_at, JudgmentMode,
    JudgmentSet,
};
use psgrank_core::features::FeatureSchema;
use psgrank_core::ltr::{
    ndcg_at_k, train_coordinate_ascent, train_pairwise, CoordinateAscentParams, PairwiseParams,
    TrainerKind,
};
use psgrank_core::passage::{Segmentation, SegmentedCorpus};
use psgrank_core::RankedList;
use serde::Serialize;

use psgrank::config::{ExperimentConfig, Overrides};
use psgrank::experiment::{ablate, feature_groups, with_pool, Dataset, Experiment};
use psgrank::formats::{parse_model, parse_run, parse_svmlight, write_model, write_svmlight};
use psgrank::io::{self, CorpusFormat};
use psgrank::store::Corpus;
use psgrank::synth::{self, SynthSpec};
use psgrank::{Error, Result};

/// Passage-informed document ranking experiments.
#[derive(Parser)]
#[command(name = "psgrank", version)]
struct Cli {
    /// Directory that relative command-line paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a corpus and write a store directory with its manifest.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        /// jsonl or trecweb; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        /// One stopword per line; the built-in list when omitted.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the passages of a corpus or store as TSV.
    Segment {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump normalized DOC6 and PSG20 vectors as SVMlight files.
    Features {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear model on an SVMlight dump.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "pairwise_hinge")]
        trainer: String,
        /// Regularization constant of the pairwise hinge trainer.
        #[arg(long, default_value_t = 0.01)]
        c: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a leave-one-out experiment and write runs, models and a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Score a TREC run against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Passage qrels; the run is then scored as a passage run.
        #[arg(long, requires = "corpus")]
        psg_qrels: Option<PathBuf>,
        /// Corpus or store the passage ids refer to.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long, default_value_t = 1000)]
        cutoff: usize,
        #[arg(long)]
        json: bool,
    },
    /// Retrain the configured learned methods without one feature and compare.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Feature name, e.g. `ESA`, or a prefixed one such as `p:ESA`.
        #[arg(long)]
        feature: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Paired two-tailed t-test between two document runs.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// AP, P@10 or NDCG@10.
        #[arg(long, default_value = "AP")]
        measure: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bonferroni family size.
        #[arg(long, default_value_t = 1)]
        corrections: usize,
    },
    /// Generate the synthetic collection and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        docs: usize,
        #[arg(long, default_value_t = 30)]
        queries: usize,
        /// Methods written into the generated config.
        #[arg(long, value_delimiter = ',', default_value = "LM,RRF,JPDs")]
        methods: Vec<String>,
    },
}

#[derive(Args)]
struct SegArgs {
    /// Passage window length in tokens.
    #[arg(long, default_value_t = 300)]
    window: usize,
    /// Segment into sentences instead of windows.
    #[arg(long)]
    sentences: bool,
}

impl SegArgs {
    fn mode(&self) -> Result<Segmentation> {
        if self.sentences {
            Ok(Segmentation::Sentences)
        } else {
            Ok(Segmentation::window(self.window)?)
        }
    }
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trainer: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Run this single method instead of the configured list.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    window: Option<usize>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            trainer: a.trainer.clone(),
            workers: a.workers,
            method: a.method.clone(),
            window: a.window,
        }
    }
}

/// Loads a config; its relative paths resolve against its own directory.
fn load_config(
    path: &Path,
    overrides: Option<&OverrideArgs>,
) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(o) = overrides {
        config.apply(&o.into());
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.validate(&base)?;
    Ok((config, base))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let at = |p: &Path| io::resolve(&cli.workdir, p);
    match &cli.command {
        Command::Index {
            corpus,
            format,
            stopwords,
            out,
        } => {
            let format = parse_format(format.as_deref())?;
            let c = Corpus::open(&at(corpus), format, stopwords.as_deref().map(at).as_deref())?;
            let path = c.save(&at(out))?;
            let m = &c.manifest;
            println!(
                "documents\t{}\nempty_documents\t{}\ntokens\t{}\nterms\t{}",
                m.documents, m.empty_documents, m.tokens, m.terms
            );
            println!("manifest\t{}", path.display());
        }
        Command::Segment { corpus, seg, out } => {
            let c = Corpus::open(&at(corpus), None, None)?;
            let segmented = SegmentedCorpus::new(&c.store, seg.mode()?);
            let mut s = String::from("passage_id\tdoc_id\tstart\tend\ttokens\n");
            for p in segmented.iter() {
                s.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    p.passage_id,
                    p.doc_id,
                    p.char_range.0,
                    p.char_range.1,
                    p.len()
                ));
            }
            io::write_text(&at(out), &s)?;
            println!("passages\t{}", segmented.len());
        }
        Command::Features { config, out } => {
            let (mut config, base) = load_config(&at(config), None)?;
            config.methods = vec!["LM".into()];
            let out = at(out);
            with_pool(config.workers, || {
                let ds = Dataset::load(config, &base)?;
                let exp = Experiment::prepare(&ds)?;
                let (docs, psgs) = feature_groups(&exp);
                io::write_text(
                    &out.join("doc6.svm"),
                    &write_svmlight(&FeatureSchema::doc6(), &docs),
                )?;
                io::write_text(
                    &out.join("psg20.svm"),
                    &write_svmlight(&FeatureSchema::psg20(), &psgs),
                )
            })?;
        }
        Command::Train {
            data,
            trainer,
            c,
            epochs,
            seed,
            out,
        } => {
            let path = at(data);
            let (_, groups) = parse_svmlight(&io::read_text(&path)?, &path)?;
            let kind = TrainerKind::parse(trainer).ok_or_else(|| {
                let allowed: Vec<&str> = TrainerKind::ALL.iter().map(|t| t.as_str()).collect();
                Error::invalid(format!(
                    "unknown trainer `{trainer}`; expected one of {}",
                    allowed.join(", ")
                ))
            })?;
            let model = match kind {
                TrainerKind::PairwiseHinge => {
                    train_pairwise(
                        &groups,
                        &PairwiseParams {
                            c: *c,
                            epochs: *epochs,
                            seed: *seed,
                            ..Default::default()
                        },
                    )?
                    .0
                }
                TrainerKind::CoordinateAscent => {
                    train_coordinate_ascent(
                        &groups,
                        &CoordinateAscentParams {
                            seed: *seed,
                            ..Default::default()
                        },
                    )?
                    .0
                }
            };
            io::write_text(&at(out), &write_model(&model))?;
            parse_model(&write_model(&model), &at(out))?;
        }
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let (config, base) = load_config(&at(config), Some(overrides))?;
            let output = psgrank::experiment::run_experiment(config, &base)?;
            output.write(&at(out))?;
            for (method, measures) in &output.report.summary {
                let cols: Vec<String> = measures
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.4}"))
                    .collect();
                println!("{method}\t{}", cols.join("\t"));
            }
        }
        Command::Eval {
            run,
            qrels,
            psg_qrels,
            corpus,
            seg,
            cutoff,
            json,
        } => {
            let table = evaluate(
                &at(run),
                &at(qrels),
                psg_qrels.as_deref().map(at),
                corpus.as_deref().map(at),
                seg,
                *cutoff,
            )?;
            print_table(&table, *json)?;
        }
        Command::Ablate {
            config,
            feature,
            out,
            overrides,
        } => {
            let (config, base) = load_config(&at(config), Some(overrides))?;
            let out = at(out);
            with_pool(config.workers, || {
                let ds = Dataset::load(config, &base)?;
                let exp = Experiment::prepare(&ds)?;
                let (report, base_run, ablated_run) = ablate(&exp, feature)?;
                base_run.write(&out.join("base"))?;
                ablated_run.write(&out.join("ablated"))?;
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Runtime(e.to_string()))?;
                io::write_text(&out.join("ablation.json"), &(text + "\n"))?;
                println!("method\tmeasure\tbase\tablated\tdelta\tp");
                for r in &report.rows {
                    let p = r.p.map_or("-".to_string(), |p| format!("{p:.4}"));
                    println!(
                        "{}\t{}\t{:.4}\t{:.4}\t{:+.4}\t{p}",
                        r.method, r.measure, r.base, r.ablated, r.delta
                    );
                }
                Ok(())
            })?;
        }
        Command::Ttest {
            a,
            b,
            qrels,
            measure,
            alpha,
            corrections,
        } => {
            if !["AP", "P@10", "NDCG@10"].contains(&measure.as_str()) {
                return Err(Error::invalid(format!(
                    "unknown measure `{measure}`; expected AP, P@10 or NDCG@10"
                )));
            }
            let none = SegArgs {
                window: 300,
                sentences: false,
            };
            let ta = evaluate(&at(a), &at(qrels), None, None, &none, 1000)?;
            let tb = evaluate(&at(b), &at(qrels), None, None, &none, 1000)?;
            let xa: Vec<f64> = ta.per_query.values().map(|r| r[measure.as_str()]).collect();
            let xb: Vec<f64> = tb.per_query.values().map(|r| r[measure.as_str()]).collect();
            let t = paired_ttest(&xa, &xb, *alpha, *corrections)?;
            println!(
                "measure\t{measure}\nqueries\t{}\nmean_a\t{:.4}\nmean_b\t{:.4}",
                xa.len(),
                ta.mean[measure.as_str()],
                tb.mean[measure.as_str()]
            );
            println!(
                "t\t{:.4}\ndf\t{}\np\t{:.6}\nsignificant\t{}",
                t.t, t.df, t.p, t.significant
            );
        }
        Command::Synth {
            out,
            seed,
            docs,
            queries,
            methods,
        } => {
            let spec = SynthSpec {
                seed: *seed,
                docs: *docs,
                queries: *queries,
                ..Default::default()
            };
            let data = synth::generate(&spec);
            let methods: Vec<&str> = methods.iter().map(String::as_str).collect();
            let config = synth::default_config(&methods, *seed);
            let dir = at(out);
            synth::write(&dir, &data, &config)?;
            config.validate(&dir)?;
            println!(
                "documents\t{}\nqueries\t{}\nconfig\t{}",
                data.corpus.len(),
                data.topics.len(),
                dir.join(synth::CONFIG_FILE).display()
            );
        }
    }
    Ok(())
}

fn parse_format(format: Option<&str>) -> Result<Option<CorpusFormat>> {
    format
        .map(|f| {
            CorpusFormat::parse(f).ok_or_else(|| {
                Error::invalid(format!(
                    "unknown corpus format `{f}`; expected jsonl or trecweb"
                ))
            })
        })
        .transpose()
}

#[derive(Serialize)]
struct EvalTable {
    /// Query → measure → value, over queries with at least one relevant item.
    per_query: BTreeMap<String, BTreeMap<&'static str, f64>>,
    mean: BTreeMap<&'static str, f64>,
}

/// Queries the qrels judge relevant but the run lacks count as zero.
fn evaluate(
    run: &Path,
    qrels: &Path,
    psg_qrels: Option<PathBuf>,
    corpus: Option<PathBuf>,
    seg: &SegArgs,
    cutoff: usize,
) -> Result<EvalTable> {
    let runs = parse_run(&io::read_text(run)?, run)?;
    let mode = match &psg_qrels {
        Some(p) => io::passage_qrels_mode(&io::read_text(p)?, p)?,
        None => JudgmentMode::DocGraded,
    };
    let mut j = JudgmentSet::new(mode);
    io::parse_doc_qrels(&io::read_text(qrels)?, qrels, &mut j)?;
    let mut per_query = BTreeMap::new();
    let queries: Vec<String> = j
        .queries()
        .into_iter()
        .filter(|q| j.relevant_docs(q) > 0)
        .map(str::to_string)
        .collect();
    if let (Some(p), Some(c)) = (&psg_qrels, &corpus) {
        io::parse_passage_qrels(&io::read_text(p)?, p, &mut j)?;
        let c = Corpus::open(c, None, None)?;
        let segmented = SegmentedCorpus::new(&c.store, seg.mode()?);
        if mode == JudgmentMode::SentenceBinary {
            j.resolve_sentences(&segmented)?;
        }
        for q in &queries {
            let list = runs
                .get(q)
                .cloned()
                .unwrap_or_else(|| RankedList::empty(q))
                .truncated(cutoff);
            let ip = interpolated_precision(&list, &j, &segmented)?;
            let (maip, p01, p1) = ip.map_or((0.0, 0.0, 0.0), |ip| {
                (
                    ip.maip,
                    ip.at(0.01).unwrap_or(0.0),
                    ip.at(0.1).unwrap_or(0.0),
                )
            });
            per_query.insert(
                q.clone(),
                BTreeMap::from([("MAiP", maip), ("iP[0.01]", p01), ("iP[0.1]", p1)]),
            );
        }
    } else {
        for q in &queries {
            let list = runs.get(q).cloned().unwrap_or_else(|| RankedList::empty(q));
            let grades = j.doc_grades(q);
            let ap = average_precision(&list, grades, cutoff).unwrap_or(0.0);
            let p10 = precision_at(&list, grades, 10);
            let ndcg = grades.map_or(0.0, |g| ndcg_at_k(&list, g, 10));
            per_query.insert(
                q.clone(),
                BTreeMap::from([("AP", ap), ("P@10", p10), ("NDCG@10", ndcg)]),
            );
        }
    }
    let mut mean: BTreeMap<&'static str, f64> = BTreeMap::new();
    for row in per_query.values() {
        for (k, v) in row {
            *mean.entry(k).or_default() += v / per_query.len() as f64;
        }
    }
    Ok(EvalTable { per_query, mean })
}

fn print_table(t: &EvalTable, json: bool) -> Result<()> {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(t).map_err(|e| Error::Runtime(e.to_string()))?
        );
        return Ok(());
    }
    for (q, row) in &t.per_query {
        for (k, v) in row {
            println!("{k}\t{q}\t{v:.4}");
        }
    }
    for (k, v) in &t.mean {
        let name = if *k == "AP" { "MAP" } else { k };
        println!("{name}\tall\t{v:.4}");
    }
    Ok(())
}
