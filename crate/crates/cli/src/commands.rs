use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use bookqa_core::artifgen::{self, generate_dataset};
use bookqa_core::corpus::{load_books_dir, load_questions, write_book, write_questions, AnnotatedBook, QaExample};
use bookqa_core::embeddings::{load_embeddings, save_embeddings};
use bookqa_core::harness::{
    baseline_rank, gate_sweep, pretrain_model, run_experiment, run_sweep, train_model, BaselineKind, Metrics, Pipeline,
    RetrievalMethod, RunPredictions, SweepSpec, ARM_PLAIN, ARM_PRETRAINED,
};
use bookqa_core::memnet::{load_checkpoint, save_checkpoint, Checkpoint, EmbeddingSource, TrainConfig};
use bookqa_core::retrieval::{load_external_scores, select_context, PassageIndex};
use bookqa_core::seeds::{derive, Stage};
use bookqa_core::synth::{self, SynthConfig};
use bookqa_core::{EmbeddingTable, MemNetParams};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::outputs::Outputs;
use crate::{BaselineArgs, GateArgs, SweepArgs, SynthArgs, TrainArgs};

fn jsonl_line(mut value: Value, config_hash: &str) -> String {
    value.as_object_mut().expect("records are objects").insert("config_hash".into(), json!(config_hash));
    let mut line = serde_json::to_string(&value).expect("records serialize");
    line.push('\n');
    line
}

fn pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    text
}

fn load_books(cfg: &RunConfig, out: Option<&mut Outputs>) -> Result<Vec<AnnotatedBook>, CliError> {
    let dir = cfg.require(&cfg.paths.books, "books")?;
    let books = load_books_dir(dir)?;
    if books.is_empty() {
        return Err(CliError::data(format!("no books in {}", dir.display())));
    }
    if let Some(out) = out {
        out.input_path("books", dir);
    }
    Ok(books)
}

#[derive(Clone, Copy)]
struct Needs {
    questions: bool,
    /// Use configured embeddings and artificial questions rather than
    /// deriving them.
    fixed_inputs: bool,
}

fn pipeline(cfg: &RunConfig, out: &mut Outputs, needs: Needs) -> Result<Pipeline, CliError> {
    let books = load_books(cfg, Some(out))?;
    let questions: Vec<QaExample> = match (&cfg.paths.questions, needs.questions) {
        (Some(_), _) | (None, true) => {
            let path = cfg.require(&cfg.paths.questions, "questions")?;
            out.input_path("questions", path);
            load_questions(path, &books)?
        }
        (None, false) => Vec::new(),
    };
    let mut pipeline = Pipeline::new(books, questions)?;
    if cfg.experiment.retrieval == RetrievalMethod::External || cfg.paths.external_scores.is_some() {
        let path = cfg.require(&cfg.paths.external_scores, "external_scores")?;
        out.input_path("external_scores", path);
        pipeline = pipeline.with_external_scores(load_external_scores(path)?);
    }
    if needs.fixed_inputs {
        if let Some(path) = &cfg.paths.embeddings {
            out.input_path("embeddings", path);
            pipeline = pipeline.with_embeddings(load_embeddings(path)?);
        }
        if let Some(path) = &cfg.paths.artificial {
            out.input_path("artificial", path);
            pipeline = pipeline.with_artificial_questions(artifgen::read_jsonl(path)?)?;
        }
    }
    out.input("data_hash", pipeline.data_hash());
    log::info!("{} books, {} questions, data {}", pipeline.books().len(), pipeline.questions().len(), pipeline.data_hash());
    Ok(pipeline)
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let books = load_books(cfg, None)?;
    let questions = match &cfg.paths.questions {
        Some(_) => Some(load_questions(cfg.require(&cfg.paths.questions, "questions")?, &books)?),
        None => None,
    };
    let sentences: usize = books.iter().map(|b| b.sentences.len()).sum();
    let tokens: usize = books.iter().flat_map(|b| &b.sentences).map(|s| s.tokens.len()).sum();
    let characters: usize = books.iter().map(|b| b.roster.len()).sum();
    let n_books = books.len();
    let n_questions = questions.as_ref().map(Vec::len);
    let pipeline = Pipeline::new(books, questions.unwrap_or_default())?;
    if let Some(path) = &cfg.paths.external_scores {
        let scores = load_external_scores(cfg.require(&cfg.paths.external_scores, "external_scores")?)?;
        log::info!("{}: {} window scores", path.display(), scores.len());
    }
    println!("config_hash {}", cfg.experiment.hash());
    println!("data_hash {}", pipeline.data_hash());
    println!("books {n_books}");
    println!("sentences {sentences}");
    println!("tokens {tokens}");
    println!("characters {characters}");
    if let Some(n) = n_questions {
        println!("questions {n}");
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<(), CliError> {
    let mut out = Outputs::new("synth", cfg)?;
    let sc = SynthConfig {
        books: args.book_count,
        sentences_per_book: args.sentences,
        characters_per_book: args.characters,
        questions: args.question_count,
        facts_per_book: args.facts,
        seed: derive(cfg.experiment.seed, Stage::Synth, 0, 0),
    };
    if sc.books == 0 || sc.sentences_per_book == 0 || sc.characters_per_book < 2 || sc.facts_per_book == 0 {
        return Err(CliError::config("synth needs at least one book, sentence and fact, and two characters per book"));
    }
    let corpus = synth::generate(&sc);
    for book in &corpus.books {
        let rel = format!("books/{}.jsonl", book.book_id);
        write_book(out.path(&rel)?, book)?;
        out.record(&rel)?;
    }
    write_questions(out.path("questions.jsonl")?, &corpus.questions)?;
    out.record("questions.jsonl")?;
    out.finish(cfg)
}

pub fn index(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("index", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: false, fixed_inputs: false })?;
    let index = pipeline.index(&cfg.experiment.bm25);
    log::info!("{} windows, {} terms", index.n_windows(), index.vocabulary_size());
    index.save(out.path("index.json")?)?;
    out.record("index.json")?;
    out.finish(cfg)
}

pub fn retrieve(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("retrieve", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: true, fixed_inputs: false })?;
    let e = &cfg.experiment;
    let contexts = match &cfg.paths.index {
        None => pipeline.contexts(e.retrieval, &e.bm25, e.context_sentences)?.to_vec(),
        Some(_) => {
            let path = cfg.require(&cfg.paths.index, "index")?;
            out.input_path("index", path);
            let index = PassageIndex::load(path)?;
            if index.config() != &e.bm25 {
                log::warn!("index snapshot was built with different BM25F settings; using the snapshot's");
            }
            let external = match e.retrieval {
                RetrievalMethod::External => Some(load_external_scores(cfg.require(&cfg.paths.external_scores, "external_scores")?)?),
                RetrievalMethod::Bm25f => None,
            };
            let all = index.n_windows();
            let mut contexts = Vec::new();
            for (q, nq) in pipeline.questions().iter().zip(pipeline.normalized_questions()) {
                let ranked = match &external {
                    Some(scores) => index.retrieve_external(scores, &q.question_id, &q.book_id, all)?,
                    None => index.retrieve(&q.book_id, nq, all)?,
                };
                contexts.push(select_context(&q.question_id, &ranked, e.context_sentences));
            }
            contexts
        }
    };
    let mut text = String::new();
    for (q, c) in pipeline.questions().iter().zip(&contexts) {
        let record = json!({
            "question_id": c.question_id,
            "book_id": q.book_id,
            "sentences": c.sentences,
            "windows": c.windows,
        });
        text.push_str(&jsonl_line(record, out.config_hash()));
    }
    out.write("contexts.jsonl", text)?;
    out.finish(cfg)
}

pub fn embed(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("embed", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: false, fixed_inputs: false })?;
    let table = pipeline.embeddings(&cfg.experiment.embeddings, cfg.experiment.seed)?;
    log::info!("{} vectors of dimension {}", table.len(), table.dim());
    save_embeddings(&table, out.path("embeddings.txt")?)?;
    out.record("embeddings.txt")?;
    out.finish(cfg)
}

pub fn genqa(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("genqa", cfg)?;
    let books = load_books(cfg, Some(&mut out))?;
    let (examples, stats) = generate_dataset(&books);
    log::info!("{} artificial questions", examples.len());
    let path = out.path("artificial.jsonl")?;
    artifgen::write_jsonl(&path, &examples).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    out.record("artificial.jsonl")?;
    let summary = json!({ "config_hash": out.config_hash(), "questions": examples.len(), "books": stats });
    out.write("genqa_stats.json", pretty(&summary))?;
    out.finish(cfg)
}

fn write_checkpoint(out: &mut Outputs, rel: &str, params: MemNetParams, table: &EmbeddingTable, config: TrainConfig) -> Result<(), CliError> {
    let ckpt = Checkpoint::new(params, EmbeddingSource::inline(table), config);
    save_checkpoint(&out.path(rel)?, &ckpt)?;
    out.record(rel)
}

pub fn pretrain(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("pretrain", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: false, fixed_inputs: true })?;
    let (params, table, log) = pretrain_model(&pipeline, &cfg.experiment)?;
    log::info!("pretraining loss {:?}", log.epoch_loss.last());
    let tc = TrainConfig { hops: cfg.experiment.hops, ..cfg.experiment.pretrain.clone() };
    write_checkpoint(&mut out, "pretrained.json", params, &table, tc)?;
    out.finish(cfg)
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<(), CliError> {
    let mut out = Outputs::new("train", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: true, fixed_inputs: true })?;
    let init = match &args.init {
        None => None,
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            out.input_path("init", path);
            let table = match &ckpt.embeddings {
                EmbeddingSource::Inline { .. } => ckpt.embeddings.table().expect("inline table"),
                EmbeddingSource::Reference { path } => load_embeddings(path)?,
            };
            if ckpt.hops != cfg.experiment.hops {
                return Err(CliError::config(format!("checkpoint has {} hops, config asks for {}", ckpt.hops, cfg.experiment.hops)));
            }
            Some((ckpt.params, table))
        }
    };
    let (params, table, log) = train_model(&pipeline, &cfg.experiment, init)?;
    log::info!("training loss {:?}", log.epoch_loss.last());
    let tc = TrainConfig { hops: cfg.experiment.hops, ..cfg.experiment.finetune.clone() };
    write_checkpoint(&mut out, "model.json", params, &table, tc)?;
    out.finish(cfg)
}

fn write_report(out: &mut Outputs, stem: &str, report: &bookqa_core::harness::EvalReport) -> Result<(), CliError> {
    out.write(&format!("{stem}.json"), report.to_json())?;
    out.write(&format!("{stem}.txt"), report.render_table())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new("evaluate", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: true, fixed_inputs: true })?;
    let outcome = run_experiment(&pipeline, &cfg.experiment)?;
    log::info!("{} runs", outcome.report.runs.len());
    write_report(&mut out, "report", &outcome.report)?;
    let mut text = String::new();
    for p in &outcome.predictions {
        text.push_str(&jsonl_line(serde_json::to_value(p).expect("predictions serialize"), out.config_hash()));
    }
    out.write("predictions.jsonl", text)?;
    out.finish(cfg)
}

pub fn sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<(), CliError> {
    let mut out = Outputs::new("sweep", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: true, fixed_inputs: true })?;
    let spec = SweepSpec { param: args.param, values: args.values.clone(), base: cfg.experiment.clone() };
    let result = run_sweep(&pipeline, &spec)?;
    let name = args.param.as_str();
    let mut csv = String::new();
    for (i, line) in result.to_csv().lines().enumerate() {
        let hash = if i == 0 { "config_hash" } else { result.points[i - 1].1.config_hash.as_str() };
        csv.push_str(&format!("{line},{hash}\n"));
    }
    for (v, report) in &result.points {
        write_report(&mut out, &format!("sweep/{name}={v}"), report)?;
    }
    out.write("sweep.csv", csv)?;
    out.finish(cfg)
}

pub fn baseline(cfg: &RunConfig, args: &BaselineArgs) -> Result<(), CliError> {
    let mut out = Outputs::new("baseline", cfg)?;
    let pipeline = pipeline(cfg, &mut out, Needs { questions: true, fixed_inputs: false })?;
    let e = &cfg.experiment;
    let contexts = pipeline.contexts(e.retrieval, &e.bm25, e.context_sentences)?;
    let books: BTreeMap<&str, _> = pipeline.normalized_books().iter().map(|b| (b.book_id.as_str(), b)).collect();
    let kinds: Vec<BaselineKind> = match args.kind {
        Some(k) => vec![k],
        None => BaselineKind::ALL.to_vec(),
    };
    let mut results = serde_json::Map::new();
    for kind in kinds {
        let preds: Vec<_> = pipeline
            .questions()
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let book = books[q.book_id.as_str()];
                let ctx: Vec<_> = contexts[i].sentences.iter().map(|&s| book.sentences[s].clone()).collect();
                baseline_rank(kind, &q.question_id, &q.gold, book, &ctx, derive(e.seed, Stage::RandomBaseline, 0, i as u64))
            })
            .collect();
        let m = Metrics::of(&preds);
        log::info!("{}: P@1 {:.3}, P@5 {:.3}, MRR {:.3}", kind.as_str(), m.p_at_1, m.p_at_5, m.mrr);
        results.insert(kind.as_str().into(), serde_json::to_value(m).expect("metrics serialize"));
    }
    let summary = json!({
        "config_hash": out.config_hash(),
        "data_hash": pipeline.data_hash(),
        "questions": pipeline.questions().len(),
        "baselines": results,
    });
    out.write("baselines.json", pretty(&summary))?;
    out.finish(cfg)
}

fn read_predictions(path: &Path) -> Result<Vec<RunPredictions>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn gate(cfg: &RunConfig, args: &GateArgs) -> Result<(), CliError> {
    let mut out = Outputs::new("gate", cfg)?;
    let path = args.predictions.clone().unwrap_or_else(|| cfg.output_dir().join("predictions.jsonl"));
    if !path.exists() {
        return Err(CliError::config(format!("predictions file {} does not exist; run evaluate first or pass --predictions", path.display())));
    }
    out.input_path("predictions", &path);
    let runs = read_predictions(&path)?;
    let has = |arm: &str| runs.iter().any(|r| r.arm == arm);
    let arm = match &args.arm {
        Some(a) => a.clone(),
        None if has(ARM_PRETRAINED) => ARM_PRETRAINED.to_string(),
        None => ARM_PLAIN.to_string(),
    };
    if !has(&arm) {
        return Err(CliError::config(format!("no predictions for arm {arm:?} in {}", path.display())));
    }
    out.input("arm", arm.clone());
    if args.thresholds.iter().any(|t| !t.is_finite()) {
        return Err(CliError::config("thresholds must be finite"));
    }
    // every trial contributes its own prediction for each question
    let preds: Vec<_> = runs.into_iter().filter(|r| r.arm == arm).flat_map(|r| r.predictions).collect();
    let mut csv = String::from("threshold,answered,total,coverage,selective_p_at_1,config_hash\n");
    for g in gate_sweep(&preds, &args.thresholds) {
        let sel = g.selective_p_at_1.map(|p| p.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{},{},{sel},{}\n", g.threshold, g.answered, g.total, g.coverage, out.config_hash()));
    }
    out.write("gate.csv", csv)?;
    out.finish(cfg)
}
