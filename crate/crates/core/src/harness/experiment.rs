use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::{content_hash, hash_parts, StageCache};
use super::report::{summarize, EvalReport, RunRecord};
use super::{baseline_rank, coverage_diagnostic, crossval_split, BaselineKind, FoldAssignment, HarnessError, Metrics, Prediction};
use crate::artifgen::{generate_dataset, ArtificialQaExample};
use crate::corpus::{book_to_jsonl, normalize_question, AnnotatedBook, CharacterId, NormalizedBook, NormalizedText, QaExample};
use crate::embeddings::{train_skipgram, EmbeddingTable, SgnsConfig};
use crate::memnet::{predict, train, train_instances, InstanceTokens, MemNetInstance, MemNetParams, TrainConfig, TrainLog};
use crate::par;
use crate::retrieval::{select_context, Bm25Config, ExternalScores, PassageIndex, RankedContext, ScoredWindow, WINDOW_SIZE};
use crate::seeds::{derive, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMethod {
    Bm25f,
    External,
}

impl RetrievalMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMethod::Bm25f => "bm25f",
            RetrievalMethod::External => "external",
        }
    }
}

/// Everything that determines an experiment's numbers besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub folds: usize,
    pub trials: usize,
    pub retrieval: RetrievalMethod,
    pub bm25: Bm25Config,
    pub context_sentences: usize,
    /// Skip-gram settings; the seed field is replaced by a derived seed.
    pub embeddings: SgnsConfig,
    pub hops: usize,
    pub finetune: TrainConfig,
    pub pretrain: TrainConfig,
    /// Run the pretrained arm as well as the plain one.
    pub pretrain_enabled: bool,
    pub pretrain_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            folds: 10,
            trials: 5,
            retrieval: RetrievalMethod::Bm25f,
            bm25: Bm25Config::default(),
            context_sentences: 100,
            embeddings: SgnsConfig::default(),
            hops: 3,
            finetune: TrainConfig::finetune(),
            pretrain: TrainConfig::pretrain(),
            pretrain_enabled: true,
            pretrain_fraction: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.context_sentences < WINDOW_SIZE {
            return bad(format!("context_sentences must be at least {WINDOW_SIZE}, got {}", self.context_sentences));
        }
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }
        if !(self.pretrain_fraction > 0.0 && self.pretrain_fraction <= 1.0) {
            return bad(format!("pretrain_fraction must lie in (0, 1], got {}", self.pretrain_fraction));
        }
        self.bm25.validate().map_err(HarnessError::Config)?;
        self.embeddings.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for t in [&self.finetune, &self.pretrain] {
            TrainConfig { hops: self.hops, ..t.clone() }.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Hash of the configuration alone.
    pub fn hash(&self) -> String {
        content_hash(self)
    }
}

/// Books, questions and cached intermediate stages shared by every
/// experiment run over the same data.
pub struct Pipeline {
    books: Vec<AnnotatedBook>,
    normalized: Vec<NormalizedBook>,
    book_pos: HashMap<String, usize>,
    questions: Vec<QaExample>,
    norm_questions: Vec<NormalizedText>,
    external: Option<ExternalScores>,
    fixed_embeddings: Option<EmbeddingTable>,
    fixed_artificial: Option<Arc<Vec<ArtificialQaExample>>>,
    data_hash: String,
    cache: StageCache,
}

/// Per-question output of one arm of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPredictions {
    pub fold: usize,
    pub trial: usize,
    pub arm: String,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub predictions: Vec<RunPredictions>,
}

pub const ARM_RANDOM: &str = "random";
pub const ARM_BOOK_FREQ: &str = "book_freq";
pub const ARM_CONTEXT_FREQ: &str = "context_freq";
pub const ARM_PLAIN: &str = "no_pretraining";
pub const ARM_PRETRAINED: &str = "pretrained";

fn question_error(q: &QaExample, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data(format!("question {}: {e}", q.question_id))
}

impl Pipeline {
    /// Validates the books and normalizes books and questions. Questions must
    /// refer to known books and roster characters.
    pub fn new(books: Vec<AnnotatedBook>, questions: Vec<QaExample>) -> Result<Self, HarnessError> {
        let mut book_pos = HashMap::new();
        for (i, b) in books.iter().enumerate() {
            b.validate().map_err(|e| HarnessError::Data(format!("book {}: {e}", b.book_id)))?;
            if book_pos.insert(b.book_id.clone(), i).is_some() {
                return Err(HarnessError::Data(format!("duplicate book id {}", b.book_id)));
            }
        }
        let mut norm_questions = Vec::with_capacity(questions.len());
        for q in &questions {
            let &pos = book_pos.get(&q.book_id).ok_or_else(|| question_error(q, format!("unknown book {}", q.book_id)))?;
            let roster = &books[pos].roster;
            if q.gold.is_empty() || q.gold.iter().any(|g| !roster.iter().any(|c| &c.id == g)) {
                return Err(question_error(q, "gold set is empty or outside the roster"));
            }
            norm_questions.push(normalize_question(q, roster));
        }
        let normalized = par::map(&books, NormalizedBook::from_book);
        let book_text: Vec<String> = books.iter().map(book_to_jsonl).collect();
        let q_text = serde_json::to_vec(&questions).expect("questions serialize");
        let data_hash = hash_parts(book_text.iter().map(|s| s.as_bytes()).chain([q_text.as_slice()]));
        Ok(Pipeline {
            books,
            normalized,
            book_pos,
            questions,
            norm_questions,
            external: None,
            fixed_embeddings: None,
            fixed_artificial: None,
            data_hash,
            cache: StageCache::new(),
        })
    }

    /// Supplies window scores for `RetrievalMethod::External`.
    pub fn with_external_scores(mut self, scores: ExternalScores) -> Self {
        let mut parts = Vec::new();
        for (qid, b, s, x) in scores.iter() {
            parts.push(format!("{qid}\t{b}\t{s}\t{:016x}", x.to_bits()));
        }
        self.data_hash = hash_parts([self.data_hash.as_bytes(), parts.join("\n").as_bytes()]);
        self.external = Some(scores);
        self
    }

    /// Uses `table` instead of training skip-gram vectors.
    pub fn with_embeddings(mut self, table: EmbeddingTable) -> Self {
        self.data_hash = hash_parts([self.data_hash.as_bytes(), &table_bytes(&table)[..]]);
        self.fixed_embeddings = Some(table);
        self
    }

    /// Uses previously generated artificial questions instead of generating
    /// them from the books.
    pub fn with_artificial_questions(mut self, questions: Vec<ArtificialQaExample>) -> Result<Self, HarnessError> {
        for a in &questions {
            let &pos = self.book_pos.get(&a.book_id).ok_or_else(|| HarnessError::Data(format!("artificial question {}: unknown book {}", a.question_id, a.book_id)))?;
            let n = self.normalized[pos].sentences.len();
            if a.context.iter().any(|&s| s >= n) {
                return Err(HarnessError::Data(format!("artificial question {}: context sentence out of range", a.question_id)));
            }
        }
        let bytes = serde_json::to_vec(&questions).expect("questions serialize");
        self.data_hash = hash_parts([self.data_hash.as_bytes(), b"artificial", &bytes[..]]);
        self.fixed_artificial = Some(Arc::new(questions));
        Ok(self)
    }

    pub fn books(&self) -> &[AnnotatedBook] {
        &self.books
    }

    pub fn normalized_books(&self) -> &[NormalizedBook] {
        &self.normalized
    }

    pub fn questions(&self) -> &[QaExample] {
        &self.questions
    }

    pub fn normalized_questions(&self) -> &[NormalizedText] {
        &self.norm_questions
    }

    pub fn cache(&self) -> &StageCache {
        &self.cache
    }

    /// Hash of books, questions, and any supplied scores or embeddings.
    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    fn book(&self, book_id: &str) -> &NormalizedBook {
        &self.normalized[self.book_pos[book_id]]
    }

    fn key(&self, parts: &[&str]) -> String {
        hash_parts(std::iter::once(self.data_hash.as_bytes()).chain(parts.iter().map(|p| p.as_bytes())))
    }

    /// Skip-gram vectors over every book sentence, extended with any roster
    /// character the vocabulary missed.
    pub fn embeddings(&self, cfg: &SgnsConfig, master_seed: u64) -> Result<Arc<EmbeddingTable>, HarnessError> {
        let sgns = SgnsConfig { seed: derive(master_seed, Stage::Embeddings, 0, 0), ..cfg.clone() };
        let key = match self.fixed_embeddings {
            Some(_) => self.key(&["fixed"]),
            None => self.key(&[&content_hash(&sgns)]),
        };
        self.cache.get_or_try_insert("embeddings", &key, || {
            let mut table = match &self.fixed_embeddings {
                Some(t) => t.clone(),
                None => train_skipgram(self.normalized.iter().flat_map(|b| &b.sentences), &sgns)
                    .map_err(|e| HarnessError::Stage { stage: "embeddings", message: e.to_string() })?,
            };
            let ids: Vec<&str> = self.normalized.iter().flat_map(|b| b.roster.iter().map(CharacterId::as_str)).collect();
            let added = table.ensure_tokens(ids, derive(master_seed, Stage::Embeddings, 1, 0));
            if added > 0 {
                log::info!("{added} roster characters were missing from the embedding vocabulary and got random vectors");
            }
            Ok(table)
        })
    }

    pub fn index(&self, bm25: &Bm25Config) -> Arc<PassageIndex> {
        let key = self.key(&[&content_hash(bm25)]);
        let built: Result<_, HarnessError> = self.cache.get_or_try_insert("index", &key, || Ok(PassageIndex::build(&self.normalized, *bm25)));
        built.expect("index construction is infallible")
    }

    /// Full window ranking of each question's book, in question order.
    pub fn rankings(&self, method: RetrievalMethod, bm25: &Bm25Config) -> Result<Arc<Vec<Vec<ScoredWindow>>>, HarnessError> {
        let key = self.key(&[method.as_str(), &content_hash(bm25)]);
        self.cache.get_or_try_insert("rankings", &key, || {
            let index = self.index(bm25);
            let all = index.n_windows();
            par::try_map(&(0..self.questions.len()).collect::<Vec<_>>(), |&i| {
                let q = &self.questions[i];
                let r = match method {
                    RetrievalMethod::Bm25f => index.retrieve(&q.book_id, &self.norm_questions[i], all),
                    RetrievalMethod::External => {
                        let table = self.external.as_ref().ok_or_else(|| HarnessError::Config("external retrieval needs a scores file".into()))?;
                        index.retrieve_external(table, &q.question_id, &q.book_id, all)
                    }
                };
                r.map_err(|e| question_error(q, e))
            })
        })
    }

    pub fn contexts(&self, method: RetrievalMethod, bm25: &Bm25Config, budget: usize) -> Result<Arc<Vec<RankedContext>>, HarnessError> {
        let key = self.key(&[method.as_str(), &content_hash(bm25), &budget.to_string()]);
        self.cache.get_or_try_insert("contexts", &key, || {
            let ranked = self.rankings(method, bm25)?;
            Ok(self.questions.iter().zip(ranked.iter()).map(|(q, r)| select_context(&q.question_id, r, budget)).collect())
        })
    }

    fn context_text(&self, book_id: &str, sentences: &[usize]) -> Vec<&NormalizedText> {
        let book = self.book(book_id);
        sentences.iter().map(|&s| &book.sentences[s]).collect()
    }

    /// Real questions as table rows, for one retrieval setting and table.
    fn question_tokens(&self, cfg: &ExperimentConfig, table: &EmbeddingTable, table_key: &str) -> Result<Arc<Vec<InstanceTokens>>, HarnessError> {
        let key = self.key(&["question-tokens", cfg.retrieval.as_str(), &content_hash(&cfg.bm25), &cfg.context_sentences.to_string(), table_key]);
        self.cache.get_or_try_insert("instances", &key, || {
            let contexts = self.contexts(cfg.retrieval, &cfg.bm25, cfg.context_sentences)?;
            par::try_map(&(0..self.questions.len()).collect::<Vec<_>>(), |&i| {
                let q = &self.questions[i];
                let ctx = self.context_text(&q.book_id, &contexts[i].sentences);
                InstanceTokens::new(&q.question_id, &self.norm_questions[i], &ctx, &self.book(&q.book_id).roster, &q.gold, table)
                    .map_err(|e| question_error(q, e))
            })
        })
    }

    pub fn artificial_questions(&self) -> Arc<Vec<ArtificialQaExample>> {
        if let Some(fixed) = &self.fixed_artificial {
            return Arc::clone(fixed);
        }
        let key = self.key(&["artificial"]);
        let r: Result<_, HarnessError> = self.cache.get_or_try_insert("artificial", &key, || {
            let (examples, stats) = generate_dataset(&self.books);
            for s in &stats {
                log::debug!("{}: {} sites, {} questions", s.book_id, s.sites, s.accepted);
            }
            Ok(examples)
        });
        r.expect("generation is infallible")
    }

    /// Artificial questions as table rows. Questions whose book has fewer
    /// than two characters are skipped.
    fn artificial_tokens(&self, table: &EmbeddingTable, table_key: &str) -> Result<Arc<Vec<InstanceTokens>>, HarnessError> {
        let key = self.key(&["artificial-tokens", table_key]);
        self.cache.get_or_try_insert("instances", &key, || {
            let art = self.artificial_questions();
            let built = par::map(&art, |a| {
                let pos = self.book_pos[&a.book_id];
                let q = normalize_question(&a.to_qa_example(), &self.books[pos].roster);
                let ctx = self.context_text(&a.book_id, &a.context);
                InstanceTokens::new(&a.question_id, &q, &ctx, &self.normalized[pos].roster, &a.gold, table)
            });
            Ok(built.into_iter().filter_map(Result::ok).collect())
        })
    }
}

fn to_prediction(inst: &MemNetInstance, toks: &InstanceTokens, params: &MemNetParams) -> Result<Prediction, HarnessError> {
    let ranked = predict(params, inst).map_err(|e| HarnessError::Stage { stage: "predict", message: e.to_string() })?;
    Ok(Prediction {
        question_id: toks.question_id.clone(),
        ranked: ranked.into_iter().map(|(j, p)| (toks.labels[j].clone(), p)).collect(),
        gold: toks.gold.iter().map(|&g| toks.labels[g].clone()).collect(),
        probabilistic: true,
    })
}

struct Pretrained {
    params: MemNetParams,
    table: EmbeddingTable,
}

fn train_err(stage: &'static str, trial: usize, fold: Option<usize>, e: impl std::fmt::Display) -> HarnessError {
    let at = match fold {
        Some(f) => format!("trial {trial}, fold {f}"),
        None => format!("trial {trial}"),
    };
    HarnessError::Stage { stage, message: format!("{at}: {e}") }
}

/// Finetunes `params` on `train_idx` and predicts `test_idx`.
fn finetune_and_predict(
    mut params: MemNetParams,
    table: &EmbeddingTable,
    tokens: &[InstanceTokens],
    encoded: Option<&[MemNetInstance]>,
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &TrainConfig,
    (trial, fold): (usize, usize),
) -> Result<Vec<Prediction>, HarnessError> {
    let err = |e: crate::memnet::MemNetError| train_err("finetune", trial, Some(fold), e);
    let mut table = table.clone();
    match encoded {
        Some(enc) if !cfg.embeddings_trainable => {
            let train_set: Vec<MemNetInstance> = train_idx.iter().map(|&i| enc[i].clone()).collect();
            train_instances(&mut params, &train_set, cfg).map_err(err)?;
        }
        _ => {
            let train_set: Vec<InstanceTokens> = train_idx.iter().map(|&i| tokens[i].clone()).collect();
            train(&mut params, &train_set, &mut table, cfg).map_err(err)?;
        }
    }
    test_idx
        .iter()
        .map(|&i| {
            let inst = match encoded {
                Some(enc) if !cfg.embeddings_trainable => enc[i].clone(),
                _ => tokens[i].encode(&table),
            };
            to_prediction(&inst, &tokens[i], &params)
        })
        .collect()
}

/// Pretraining for trial `t`: a seeded subset of the artificial questions,
/// fresh parameters, trainable embeddings.
fn pretrain_trial(art: &[InstanceTokens], table: &EmbeddingTable, cfg: &ExperimentConfig, t: usize) -> Result<(Pretrained, TrainLog), HarnessError> {
    if art.is_empty() {
        return Err(HarnessError::Data("no artificial questions could be generated for pretraining".into()));
    }
    let mut order: Vec<usize> = (0..art.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stage::PretrainSubset, t as u64, 0)));
    let keep = ((art.len() as f64 * cfg.pretrain_fraction).round() as usize).clamp(1, art.len());
    order.truncate(keep);
    order.sort_unstable();
    let subset: Vec<InstanceTokens> = order.iter().map(|&i| art[i].clone()).collect();
    let mut params = MemNetParams::init(table.dim(), cfg.hops, derive(cfg.seed, Stage::ParamInit, t as u64, 0));
    let mut tbl = table.clone();
    let pcfg = TrainConfig { hops: cfg.hops, seed: derive(cfg.seed, Stage::Pretrain, t as u64, 0), ..cfg.pretrain.clone() };
    let log = train(&mut params, &subset, &mut tbl, &pcfg).map_err(|e| train_err("pretrain", t, None, e))?;
    log::info!("trial {t}: pretrained on {} artificial questions, final loss {:?}", subset.len(), log.epoch_loss.last());
    Ok((Pretrained { params, table: tbl }, log))
}

/// Pretrains the model of trial 0 of an experiment with this config.
pub fn pretrain_model(pipeline: &Pipeline, cfg: &ExperimentConfig) -> Result<(MemNetParams, EmbeddingTable, TrainLog), HarnessError> {
    cfg.validate()?;
    let table = pipeline.embeddings(&cfg.embeddings, cfg.seed)?;
    let table_key = content_hash(&(pipeline.data_hash(), &cfg.embeddings, cfg.seed));
    let art = pipeline.artificial_tokens(&table, &table_key)?;
    let (p, log) = pretrain_trial(&art, &table, cfg, 0)?;
    Ok((p.params, p.table, log))
}

/// Finetunes on every question. Starts from `init` (parameters and their
/// embedding table) when given, otherwise from fresh parameters over the
/// pipeline's embeddings.
pub fn train_model(
    pipeline: &Pipeline,
    cfg: &ExperimentConfig,
    init: Option<(MemNetParams, EmbeddingTable)>,
) -> Result<(MemNetParams, EmbeddingTable, TrainLog), HarnessError> {
    cfg.validate()?;
    if pipeline.questions().is_empty() {
        return Err(HarnessError::Data("no questions".into()));
    }
    let (mut params, mut table) = match init {
        Some(pt) => pt,
        None => {
            let table = (*pipeline.embeddings(&cfg.embeddings, cfg.seed)?).clone();
            (MemNetParams::init(table.dim(), cfg.hops, derive(cfg.seed, Stage::ParamInit, 0, 0)), table)
        }
    };
    let table_key = hash_parts([pipeline.data_hash().as_bytes(), &table_bytes(&table)[..]]);
    let tokens = pipeline.question_tokens(cfg, &table, &table_key)?;
    let ft = TrainConfig { hops: cfg.hops, seed: derive(cfg.seed, Stage::Finetune, 0, 0), ..cfg.finetune.clone() };
    let log = train(&mut params, &tokens, &mut table, &ft).map_err(|e| train_err("finetune", 0, None, e))?;
    Ok((params, table, log))
}

fn table_bytes(table: &EmbeddingTable) -> Vec<u8> {
    let mut bytes = table.tokens().join("\n").into_bytes();
    for x in table.vectors() {
        bytes.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    bytes
}

/// Cross-validated experiment: baselines, the plain model, and (optionally)
/// the model pretrained on artificial questions, over `folds × trials` runs.
pub fn run_experiment(pipeline: &Pipeline, cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let questions = pipeline.questions();
    if questions.is_empty() {
        return Err(HarnessError::Data("no questions".into()));
    }
    let finetune_cfg = TrainConfig { hops: cfg.hops, ..cfg.finetune.clone() };

    let table = pipeline.embeddings(&cfg.embeddings, cfg.seed)?;
    let table_key = content_hash(&(pipeline.data_hash(), &cfg.embeddings, cfg.seed));
    let tokens = pipeline.question_tokens(cfg, &table, &table_key)?;
    let contexts = pipeline.contexts(cfg.retrieval, &cfg.bm25, cfg.context_sentences)?;
    let encoded: Vec<MemNetInstance> = par::map(&tokens, |t| t.encode(&table));
    let d = table.dim();

    let assignments: Vec<FoldAssignment> = (0..cfg.trials)
        .map(|t| crossval_split(questions, cfg.folds, derive(cfg.seed, Stage::CrossVal, t as u64, 0)))
        .collect::<Result<_, _>>()?;

    let pretrained: Vec<Option<Pretrained>> = if cfg.pretrain_enabled {
        let art = pipeline.artificial_tokens(&table, &table_key)?;
        par::try_map(&(0..cfg.trials).collect::<Vec<_>>(), |&t| pretrain_trial(&art, &table, cfg, t).map(|(p, _)| Some(p)))?
    } else {
        (0..cfg.trials).map(|_| None).collect()
    };
    let pretrained_encoded: Vec<Option<Vec<MemNetInstance>>> =
        pretrained.iter().map(|p| p.as_ref().map(|p| par::map(&tokens, |t| t.encode(&p.table)))).collect();

    // (fold, trial) order is the report order
    let runs: Vec<(usize, usize)> = (0..cfg.folds).flat_map(|f| (0..cfg.trials).map(move |t| (f, t))).collect();
    let results = par::try_map(&runs, |&(fold, trial)| -> Result<(RunRecord, Vec<RunPredictions>), HarnessError> {
        let (test_idx, train_idx) = assignments[trial].split(questions, fold);
        let mut arms: Vec<(&str, Vec<Prediction>)> = Vec::new();

        for kind in BaselineKind::ALL {
            let preds = test_idx
                .iter()
                .map(|&i| {
                    let q = &questions[i];
                    let book = pipeline.book(&q.book_id);
                    let ctx: Vec<NormalizedText> = contexts[i].sentences.iter().map(|&s| book.sentences[s].clone()).collect();
                    let seed = derive(cfg.seed, Stage::RandomBaseline, trial as u64, i as u64);
                    baseline_rank(kind, &q.question_id, &q.gold, book, &ctx, seed)
                })
                .collect();
            let name = match kind {
                BaselineKind::Random => ARM_RANDOM,
                BaselineKind::BookFreq => ARM_BOOK_FREQ,
                BaselineKind::ContextFreq => ARM_CONTEXT_FREQ,
            };
            arms.push((name, preds));
        }

        let init_seed = derive(cfg.seed, Stage::ParamInit, trial as u64, fold as u64 + 1);
        let ft_seed = derive(cfg.seed, Stage::Finetune, trial as u64, fold as u64);
        let ft = TrainConfig { seed: ft_seed, ..finetune_cfg.clone() };
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(HarnessError::Data(format!("trial {trial}, fold {fold}: empty train or test split")));
        }
        let plain = finetune_and_predict(
            MemNetParams::init(d, cfg.hops, init_seed),
            &table,
            &tokens,
            Some(&encoded),
            &train_idx,
            &test_idx,
            &ft,
            (trial, fold),
        )?;
        arms.push((ARM_PLAIN, plain));
        if let Some(p) = &pretrained[trial] {
            let enc = pretrained_encoded[trial].as_deref();
            let preds = finetune_and_predict(p.params.clone(), &p.table, &tokens, enc, &train_idx, &test_idx, &ft, (trial, fold))?;
            arms.push((ARM_PRETRAINED, preds));
        }

        let record = RunRecord {
            fold,
            trial,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            init_seed,
            finetune_seed: ft_seed,
            metrics: arms.iter().map(|(a, p)| (a.to_string(), Metrics::of(p))).collect::<BTreeMap<_, _>>(),
        };
        let preds = arms.into_iter().map(|(a, p)| RunPredictions { fold, trial, arm: a.to_string(), predictions: p }).collect();
        Ok((record, preds))
    })?;

    let coverage = {
        let ctx_text: Vec<Vec<NormalizedText>> = questions
            .iter()
            .zip(contexts.iter())
            .map(|(q, c)| pipeline.context_text(&q.book_id, &c.sentences).into_iter().cloned().collect())
            .collect();
        coverage_diagnostic(questions.iter().zip(&ctx_text).map(|(q, c)| (q.question_id.as_str(), c.as_slice(), q.gold.as_slice()))).fraction
    };

    let (records, preds): (Vec<RunRecord>, Vec<Vec<RunPredictions>>) = results.into_iter().unzip();
    let report = EvalReport {
        config_hash: hash_parts([cfg.hash().as_bytes(), pipeline.data_hash().as_bytes()]),
        data_hash: pipeline.data_hash().to_string(),
        config: cfg.clone(),
        seeds: (0..cfg.trials).map(|t| derive(cfg.seed, Stage::CrossVal, t as u64, 0)).collect(),
        n_books: pipeline.books().len(),
        n_questions: questions.len(),
        context_coverage: coverage,
        summary: summarize(&records),
        runs: records,
    };
    Ok(ExperimentOutcome { report, predictions: preds.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    pub(crate) fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            folds: 2,
            trials: 2,
            context_sentences: 20,
            embeddings: SgnsConfig { dim: 12, epochs: 2, min_count: 1, ..SgnsConfig::default() },
            finetune: TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::finetune() },
            ..ExperimentConfig::default()
        }
    }

    fn tiny_pipeline() -> Pipeline {
        let c = generate(&SynthConfig { books: 4, sentences_per_book: 40, characters_per_book: 4, questions: 16, facts_per_book: 6, seed: 3 });
        Pipeline::new(c.books, c.questions).unwrap()
    }

    #[test]
    fn report_shape_and_reproducibility() {
        let p = tiny_pipeline();
        let cfg = tiny_config();
        let a = run_experiment(&p, &cfg).unwrap();
        assert_eq!(a.report.runs.len(), 4);
        let order: Vec<(usize, usize)> = a.report.runs.iter().map(|r| (r.fold, r.trial)).collect();
        assert_eq!(order, [(0, 0), (0, 1), (1, 0), (1, 1)]);
        for r in &a.report.runs {
            assert_eq!(r.metrics.len(), 5);
            for m in r.metrics.values() {
                assert!(m.p_at_1 <= m.p_at_5 && m.p_at_1 <= m.mrr);
            }
        }
        let b = run_experiment(&tiny_pipeline(), &cfg).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn retrieval_is_cached_across_arms() {
        let p = tiny_pipeline();
        let cfg = tiny_config();
        run_experiment(&p, &ExperimentConfig { pretrain_enabled: false, ..cfg.clone() }).unwrap();
        let before = p.cache().counts("rankings");
        let contexts_before = p.contexts(cfg.retrieval, &cfg.bm25, cfg.context_sentences).unwrap();
        run_experiment(&p, &cfg).unwrap();
        let after = p.cache().counts("rankings");
        assert_eq!(after.misses, before.misses);
        assert!(after.hits > before.hits || p.cache().counts("contexts").hits > 0);
        let contexts_after = p.contexts(cfg.retrieval, &cfg.bm25, cfg.context_sentences).unwrap();
        assert!(Arc::ptr_eq(&contexts_before, &contexts_after));
    }

    #[test]
    fn rejects_bad_config() {
        let p = tiny_pipeline();
        assert!(matches!(run_experiment(&p, &ExperimentConfig { folds: 1, ..tiny_config() }), Err(HarnessError::Config(_))));
        assert!(matches!(run_experiment(&p, &ExperimentConfig { folds: 9, ..tiny_config() }), Err(HarnessError::TooFewBooks { .. })));
        assert!(matches!(
            run_experiment(&p, &ExperimentConfig { retrieval: RetrievalMethod::External, ..tiny_config() }),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn standalone_pretrain_then_train() {
        let p = tiny_pipeline();
        let cfg = ExperimentConfig { pretrain: TrainConfig { batch_size: 16, ..TrainConfig::pretrain() }, ..tiny_config() };
        let (params, table, log) = pretrain_model(&p, &cfg).unwrap();
        assert_eq!(log.epoch_loss.len(), 1);
        assert!(params.is_finite());
        assert_ne!(&table, &*p.embeddings(&cfg.embeddings, cfg.seed).unwrap());
        let (a, _, ft_log) = train_model(&p, &cfg, Some((params.clone(), table.clone()))).unwrap();
        assert_eq!(ft_log.epoch_loss.len(), cfg.finetune.epochs);
        let (b, _, _) = train_model(&p, &cfg, Some((params, table))).unwrap();
        assert_eq!(a, b);
        let (fresh, _, _) = train_model(&p, &cfg, None).unwrap();
        assert_ne!(fresh, a);
    }

    #[test]
    fn fixed_artificial_questions_are_used() {
        let p = tiny_pipeline();
        let mut art = (*p.artificial_questions()).clone();
        art.truncate(5);
        let p = p.with_artificial_questions(art.clone()).unwrap();
        assert_eq!(*p.artificial_questions(), art);
        let mut bad = art;
        bad[0].book_id = "nowhere".into();
        assert!(tiny_pipeline().with_artificial_questions(bad).is_err());
    }
}
