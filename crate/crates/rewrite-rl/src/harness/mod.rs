//! Pipeline orchestration behind the `rewrite-rl` binary.
//!
//! Every command reads and writes one run directory (`--out`):
//!
//! ```text
//! out/
//!   corpus/        documents.jsonl, examples.jsonl        (synth)
//!   checkpoints/   init.mfrw, rm_*.mfrw, ppo*.mfrw        (training commands)
//!   pairs/         pairs_<metric_tag>.jsonl               (build-pairs)
//!   logs/          ppo_log.csv                            (train-ppo)
//!   reports/       *.md / *.csv                           (train-rm, eval, trend, ablate)
//!   ablate/<tag>/  checkpoints, logs, reports per ablation
//!   run_meta.json  completion timestamps (the only non-deterministic file)
//! ```
//!
//! Commands validate their input artifacts before running: a missing file
//! names the command that produces it, and checkpoints must carry the same
//! vocabulary fingerprint and embedder hash seed as the corpus and config in
//! force. Everything except `run_meta.json` is byte-deterministic in the
//! config and seed.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_input_sequence, generate_synthetic, load_corpus, save_corpus, CorpusError,
    DialogueExample, SyntheticCorpus, DOCUMENTS_FILE,
};
use crate::embedding::HashingEmbedder;
use crate::metrics::{bleu, meteor_lite, metric_rewrite_ref, rouge_l, rouge_n};
use crate::nn::{
    init_train, load_checkpoint, rewrite_training_pair, save_checkpoint, Checkpoint,
    CheckpointError, RewriterPolicy, ScorerModel, Vocab,
};
use crate::ppo::{PpoConfig, PpoStepStats, PpoTrainer, RewardBundle};
use crate::preference::{
    build_preference_sets, encode_pairs, rm_accuracy, split_by_example, train_reward_model,
    PreferencePair, RewardMetric, RewardModels, RewriteScorer,
};
use crate::retrieval::RetrievalIndex;
use crate::stage_rng;

pub use config::RunConfig;
use report::{AccuracyRow, EvalReport, EvalRow, RewardRow, TrendRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration, flags, or missing/incompatible input artifacts.
    #[error("{0}")]
    Validation(String),
    /// Failures while executing an otherwise valid command.
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 2 for validation errors, 1 for runtime errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Runtime(_) => 1,
        }
    }
}

impl From<CorpusError> for HarnessError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Validation(_) => HarnessError::Validation(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<CheckpointError> for HarnessError {
    fn from(e: CheckpointError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

/// The pipeline stages, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    InitTrain,
    BuildPairs,
    TrainRm,
    TrainPpo,
    Eval,
    Ablate,
    Trend,
    PrintConfig,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::InitTrain => "init-train",
            Command::BuildPairs => "build-pairs",
            Command::TrainRm => "train-rm",
            Command::TrainPpo => "train-ppo",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Trend => "trend",
            Command::PrintConfig => "print-config",
        }
    }
}

/// All artifact locations inside one run directory.
#[derive(Debug, Clone)]
pub struct Paths {
    out: PathBuf,
}

impl Paths {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.out.join("logs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn pairs_dir(&self) -> PathBuf {
        self.out.join("pairs")
    }

    pub fn init_checkpoint(&self) -> PathBuf {
        self.checkpoints_dir().join("init.mfrw")
    }

    pub fn rm_checkpoint(&self, metric: RewardMetric) -> PathBuf {
        self.checkpoints_dir()
            .join(format!("rm_{}.mfrw", metric.tag()))
    }

    pub fn ppo_checkpoint(&self) -> PathBuf {
        self.checkpoints_dir().join("ppo.mfrw")
    }

    pub fn ppo_step_checkpoint(&self, step: usize) -> PathBuf {
        self.checkpoints_dir()
            .join(format!("ppo_step_{step:04}.mfrw"))
    }

    pub fn pairs_file(&self, metric: RewardMetric) -> PathBuf {
        self.pairs_dir()
            .join(format!("pairs_{}.jsonl", metric.tag()))
    }

    pub fn ppo_log(&self) -> PathBuf {
        self.logs_dir().join("ppo_log.csv")
    }

    pub fn rm_accuracy_md(&self) -> PathBuf {
        self.reports_dir().join("rm_accuracy.md")
    }

    pub fn rm_accuracy_csv(&self) -> PathBuf {
        self.reports_dir().join("rm_accuracy.csv")
    }

    pub fn eval_md(&self) -> PathBuf {
        self.reports_dir().join("eval.md")
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.reports_dir().join("eval.csv")
    }

    pub fn eval_reward_md(&self) -> PathBuf {
        self.reports_dir().join("eval_reward.md")
    }

    pub fn eval_reward_csv(&self) -> PathBuf {
        self.reports_dir().join("eval_reward.csv")
    }

    pub fn trend_csv(&self) -> PathBuf {
        self.reports_dir().join("trend.csv")
    }

    pub fn ablate_md(&self) -> PathBuf {
        self.reports_dir().join("ablate.md")
    }

    pub fn ablate_csv(&self) -> PathBuf {
        self.reports_dir().join("ablate.csv")
    }

    pub fn run_meta(&self) -> PathBuf {
        self.out.join("run_meta.json")
    }

    /// Nested run directory for one single-term ablation.
    pub fn ablation(&self, tag: &str) -> Paths {
        Paths::new(self.out.join("ablate").join(tag))
    }
}

/// Runs one command against a run directory. `print-config` needs no
/// directory; every other command requires `out`.
pub fn run(command: Command, config: &RunConfig, out: Option<&Path>) -> Result<(), HarnessError> {
    config.validate()?;
    if command == Command::PrintConfig {
        print!("{}", config.dump());
        return Ok(());
    }
    let out = out.ok_or_else(|| {
        HarnessError::Validation(format!("--out DIR is required for `{}`", command.name()))
    })?;
    let paths = Paths::new(out);
    match command {
        Command::Synth => cmd_synth(&paths, config),
        Command::InitTrain => cmd_init_train(&paths, config),
        Command::BuildPairs => cmd_build_pairs(&paths, config),
        Command::TrainRm => cmd_train_rm(&paths, config),
        Command::TrainPpo => cmd_train_ppo(&paths, config),
        Command::Eval => cmd_eval(&paths, config),
        Command::Ablate => cmd_ablate(&paths, config),
        Command::Trend => cmd_trend(&paths, config),
        Command::PrintConfig => unreachable!("handled above"),
    }?;
    record_completion(&paths, command)
}

// ---------------------------------------------------------------------------
// shared plumbing

fn io_error(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Runtime(format!("io error on {}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn require_artifact(path: &Path, producer: &str) -> Result<(), HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Validation(format!(
            "missing artifact {}; run `{producer}` first",
            path.display()
        )));
    }
    Ok(())
}

fn load_corpus_checked(paths: &Paths) -> Result<SyntheticCorpus, HarnessError> {
    require_artifact(&paths.corpus_dir().join(DOCUMENTS_FILE), "synth")?;
    Ok(load_corpus(&paths.corpus_dir())?)
}

/// Token table shared by every model of a run: all document and dialogue
/// text in corpus order, so it is a pure function of the corpus.
pub fn corpus_vocab(corpus: &SyntheticCorpus) -> Vocab {
    let mut texts: Vec<&str> = corpus.documents.iter().map(|d| d.text.as_str()).collect();
    for example in &corpus.examples {
        texts.push(&example.query);
        texts.push(&example.manual_rewrite);
        for turn in &example.history {
            texts.push(&turn.query);
            texts.push(&turn.answer);
        }
    }
    Vocab::build(texts)
}

/// 80/20 train/eval split by example id; the eval fifth never touches any
/// training stage.
pub fn split_examples(corpus: &SyntheticCorpus) -> (Vec<DialogueExample>, Vec<DialogueExample>) {
    corpus.examples.iter().cloned().partition(|e| e.id % 5 != 4)
}

fn check_compatible(
    checkpoint: &Checkpoint,
    path: &Path,
    vocab: &Vocab,
    config: &RunConfig,
) -> Result<(), HarnessError> {
    if checkpoint.vocab.fingerprint() != vocab.fingerprint() {
        return Err(HarnessError::Validation(format!(
            "{} was built against vocabulary hash {:016x}, but the corpus under --out yields \
             {:016x}; re-run the producing command against this corpus",
            path.display(),
            checkpoint.vocab.fingerprint(),
            vocab.fingerprint()
        )));
    }
    if checkpoint.embed_hash_seed != config.embed_hash_seed {
        return Err(HarnessError::Validation(format!(
            "{} carries embedder hash seed {}, but embed.hash_seed is {}",
            path.display(),
            checkpoint.embed_hash_seed,
            config.embed_hash_seed
        )));
    }
    Ok(())
}

fn load_policy(
    path: &Path,
    producer: &str,
    vocab: &Vocab,
    config: &RunConfig,
) -> Result<RewriterPolicy<f32>, HarnessError> {
    require_artifact(path, producer)?;
    let checkpoint = load_checkpoint(path)?;
    check_compatible(&checkpoint, path, vocab, config)?;
    Ok(checkpoint.into_policy()?)
}

fn load_reward_model(
    paths: &Paths,
    metric: RewardMetric,
    vocab: &Vocab,
    config: &RunConfig,
) -> Result<ScorerModel<f32>, HarnessError> {
    let path = paths.rm_checkpoint(metric);
    require_artifact(&path, "train-rm")?;
    let checkpoint = load_checkpoint(&path)?;
    check_compatible(&checkpoint, &path, vocab, config)?;
    let expected = format!("rm:{}", metric.tag());
    if checkpoint.tag != expected {
        return Err(HarnessError::Validation(format!(
            "{} holds model tag `{}`, expected `{expected}`",
            path.display(),
            checkpoint.tag
        )));
    }
    Ok(checkpoint.into_scorer()?)
}

fn load_reward_models(
    paths: &Paths,
    vocab: &Vocab,
    config: &RunConfig,
) -> Result<RewardModels<f32>, HarnessError> {
    Ok(RewardModels {
        d_plus: load_reward_model(paths, RewardMetric::DPlus, vocab, config)?,
        rank_weighted: load_reward_model(paths, RewardMetric::RankWeighted, vocab, config)?,
        generation: load_reward_model(paths, RewardMetric::Generation, vocab, config)?,
    })
}

fn build_index(corpus: &SyntheticCorpus, config: &RunConfig) -> RetrievalIndex {
    RetrievalIndex::build(
        HashingEmbedder::new(config.embed_dim, config.embed_hash_seed),
        &corpus.documents,
    )
}

fn build_scorer<'a>(
    index: &'a RetrievalIndex,
    corpus: &'a SyntheticCorpus,
    config: &RunConfig,
) -> RewriteScorer<'a> {
    RewriteScorer {
        index,
        documents: &corpus.documents,
        top_l: config.top_l,
        context_weight: config.context_weight,
        rouge: config.rouge,
    }
}

/// Everything the RL and evaluation stages consume.
struct LoadedStack {
    corpus: SyntheticCorpus,
    vocab: Vocab,
    init: RewriterPolicy<f32>,
    reward_models: RewardModels<f32>,
}

fn load_stack(paths: &Paths, config: &RunConfig) -> Result<LoadedStack, HarnessError> {
    let corpus = load_corpus_checked(paths)?;
    let vocab = corpus_vocab(&corpus);
    let init = load_policy(&paths.init_checkpoint(), "init-train", &vocab, config)?;
    let reward_models = load_reward_models(paths, &vocab, config)?;
    Ok(LoadedStack {
        corpus,
        vocab,
        init,
        reward_models,
    })
}

// ---------------------------------------------------------------------------
// pair persistence

/// JSONL row for one persisted preference pair.
#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    context: String,
    chosen: String,
    rejected: String,
    metric_tag: String,
    chosen_value: f64,
    rejected_value: f64,
}

fn write_pairs(
    path: &Path,
    metric: RewardMetric,
    pairs: &[PreferencePair],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    for pair in pairs {
        let record = PairRecord {
            context: pair.context.clone(),
            chosen: pair.chosen.clone(),
            rejected: pair.rejected.clone(),
            metric_tag: metric.tag().to_string(),
            chosen_value: pair.chosen_value,
            rejected_value: pair.rejected_value,
        };
        out.push_str(&serde_json::to_string(&record).expect("pair record serializes"));
        out.push('\n');
    }
    write_file(path, &out)
}

fn read_pairs(path: &Path, metric: RewardMetric) -> Result<Vec<PreferencePair>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(line).map_err(|e| {
            HarnessError::Runtime(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if record.metric_tag != metric.tag() {
            return Err(HarnessError::Validation(format!(
                "{}:{}: pair carries metric_tag `{}`, expected `{}`",
                path.display(),
                lineno + 1,
                record.metric_tag,
                metric.tag()
            )));
        }
        if !(record.chosen_value > record.rejected_value) {
            return Err(HarnessError::Validation(format!(
                "{}:{}: chosen value {} does not exceed rejected value {}",
                path.display(),
                lineno + 1,
                record.chosen_value,
                record.rejected_value
            )));
        }
        pairs.push(PreferencePair {
            example_id: lineno,
            context: record.context,
            chosen: record.chosen,
            rejected: record.rejected,
            chosen_value: record.chosen_value,
            rejected_value: record.rejected_value,
        });
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// evaluation plumbing

/// The raw-RAG baseline query: the dialogue text oldest-first, then the
/// current query, concatenated verbatim.
pub fn concat_history(example: &DialogueExample) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for turn in &example.history {
        parts.push(&turn.query);
        parts.push(&turn.answer);
    }
    parts.push(&example.query);
    parts.join(" ")
}

fn greedy_rewrites(policy: &RewriterPolicy<f32>, examples: &[DialogueExample]) -> Vec<String> {
    examples
        .iter()
        .map(|example| {
            let ids = policy.vocab.encode(&build_input_sequence(example));
            policy.decode_greedy(&ids).text(&policy.vocab)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct SystemScores {
    rouge1: f64,
    rouge2: f64,
    rouge_l: f64,
    bleu: f64,
    meteor: f64,
    mrr: f64,
}

/// Runs each rewrite through retrieve→generate and averages answer overlap
/// with the ground truth plus the gold document's reciprocal rank.
fn score_system(
    scorer: &RewriteScorer,
    examples: &[DialogueExample],
    rewrites: &[String],
) -> SystemScores {
    assert_eq!(examples.len(), rewrites.len(), "one rewrite per example");
    let mut acc = SystemScores::default();
    for (example, rewrite) in examples.iter().zip(rewrites) {
        let measured = scorer.measure(example, rewrite);
        let answer = &measured.answer.text;
        let truth = &example.ground_truth;
        acc.rouge1 += rouge_n(answer, truth, 1).f1;
        acc.rouge2 += rouge_n(answer, truth, 2).f1;
        acc.rouge_l += rouge_l(answer, truth).f1;
        acc.bleu += bleu(answer, truth);
        acc.meteor += meteor_lite(answer, truth);
        acc.mrr += measured.ranked.reciprocal_rank(example.gold_doc_id);
    }
    let n = examples.len() as f64;
    SystemScores {
        rouge1: acc.rouge1 / n,
        rouge2: acc.rouge2 / n,
        rouge_l: acc.rouge_l / n,
        bleu: acc.bleu / n,
        meteor: acc.meteor / n,
        mrr: acc.mrr / n,
    }
}

/// Mean combined reward of a system's rewrites under the configured weights,
/// using the trained reward models plus the live m_q metric.
fn mean_combined_reward(
    reward_models: &RewardModels<f32>,
    examples: &[DialogueExample],
    rewrites: &[String],
    config: &RunConfig,
) -> f64 {
    let total: f64 = examples
        .iter()
        .zip(rewrites)
        .map(|(example, rewrite)| {
            let scaled = reward_models.score_scaled_all(example, rewrite);
            let m_q = metric_rewrite_ref(rewrite, &example.manual_rewrite, config.rouge);
            RewardBundle::combine(scaled, m_q, config.ppo.lambda, config.ppo.mu).r_rl
        })
        .sum();
    total / examples.len() as f64
}

fn eval_row(system: &str, scores: SystemScores) -> EvalRow {
    EvalRow {
        system: system.to_string(),
        rouge1: scores.rouge1,
        rouge2: scores.rouge2,
        rouge_l: scores.rouge_l,
        bleu: scores.bleu,
        meteor: scores.meteor,
        mrr: scores.mrr,
    }
}

// ---------------------------------------------------------------------------
// commands

fn cmd_synth(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let corpus = generate_synthetic(&config.synth_config())?;
    save_corpus(&paths.corpus_dir(), &corpus)?;
    println!(
        "synth: {} documents, {} examples -> {}",
        corpus.documents.len(),
        corpus.examples.len(),
        paths.corpus_dir().display()
    );
    Ok(())
}

fn cmd_init_train(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let corpus = load_corpus_checked(paths)?;
    let vocab = corpus_vocab(&corpus);
    let (train, _) = split_examples(&corpus);
    let pairs: Vec<_> = train
        .iter()
        .map(|example| rewrite_training_pair(&vocab, example))
        .collect();
    let mut policy = RewriterPolicy::<f32>::new(
        config.model,
        vocab,
        &mut stage_rng(config.seed, "init-model", 0),
    );
    let losses = init_train(&mut policy, &pairs, &config.init, config.seed);
    let path = paths.init_checkpoint();
    save_checkpoint(
        &path,
        &Checkpoint::from_policy(&policy, "init", config.embed_hash_seed),
    )?;
    println!(
        "init-train: {} examples, {} batches, loss {:.4} -> {:.4}, saved {}",
        train.len(),
        losses.len(),
        losses.first().expect("at least one batch"),
        losses.last().expect("at least one batch"),
        path.display()
    );
    Ok(())
}

fn cmd_build_pairs(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let corpus = load_corpus_checked(paths)?;
    let vocab = corpus_vocab(&corpus);
    let policy = load_policy(&paths.init_checkpoint(), "init-train", &vocab, config)?;
    let index = build_index(&corpus, config);
    let scorer = build_scorer(&index, &corpus, config);
    let (train, _) = split_examples(&corpus);
    let sets = build_preference_sets(
        &train,
        &policy,
        &scorer,
        config.pairs_temperature,
        config.pairs_min_margin,
        config.seed,
    );
    for metric in RewardMetric::ALL {
        let file = paths.pairs_file(metric);
        let pairs = sets.by_metric(metric);
        write_pairs(&file, metric, pairs)?;
        println!(
            "build-pairs: {} pairs for metric {} -> {}",
            pairs.len(),
            metric.tag(),
            file.display()
        );
    }
    Ok(())
}

/// Minimum pair count per reward model; fewer would make the held-out
/// accuracy meaningless.
const MIN_PAIRS: usize = 50;

fn cmd_train_rm(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let corpus = load_corpus_checked(paths)?;
    let vocab = corpus_vocab(&corpus);
    let policy = load_policy(&paths.init_checkpoint(), "init-train", &vocab, config)?;
    let mut rows = Vec::new();
    for metric in RewardMetric::ALL {
        let file = paths.pairs_file(metric);
        require_artifact(&file, "build-pairs")?;
        let pairs = read_pairs(&file, metric)?;
        if pairs.len() < MIN_PAIRS {
            return Err(HarnessError::Validation(format!(
                "{} holds {} pairs but reward-model training needs at least {MIN_PAIRS}; \
                 raise synth.num_examples",
                file.display(),
                pairs.len()
            )));
        }
        let (train, held_out) = split_by_example(&pairs, config.rm_train_frac);
        let encoded_train = encode_pairs(&policy.vocab, &train);
        let encoded_held_out = encode_pairs(&policy.vocab, &held_out);
        let mut model = ScorerModel::from_encoder(&policy);
        train_reward_model(&mut model, &encoded_train, &config.rm, config.seed)
            .map_err(HarnessError::Runtime)?;
        let accuracy = rm_accuracy(&model, &encoded_held_out);
        let path = paths.rm_checkpoint(metric);
        save_checkpoint(
            &path,
            &Checkpoint::from_scorer(
                &model,
                &format!("rm:{}", metric.tag()),
                config.embed_hash_seed,
            ),
        )?;
        println!(
            "train-rm: metric {} held-out accuracy {:.4} ({} train / {} held-out pairs)",
            metric.tag(),
            accuracy,
            train.len(),
            held_out.len()
        );
        rows.push(AccuracyRow {
            metric_tag: metric.tag().to_string(),
            train_pairs: train.len(),
            eval_pairs: held_out.len(),
            accuracy,
        });
    }
    write_file(&paths.rm_accuracy_md(), &report::accuracy_markdown(&rows)?)?;
    write_file(&paths.rm_accuracy_csv(), &report::accuracy_csv(&rows)?)?;
    Ok(())
}

/// Shared PPO loop for the main run and the ablations: trains from the
/// loaded init policy, logging and checkpointing into `out_paths`.
fn train_ppo_into(
    stack: &LoadedStack,
    ppo: &PpoConfig,
    config: &RunConfig,
    out_paths: &Paths,
    label: &str,
) -> Result<(), HarnessError> {
    let (train, _) = split_examples(&stack.corpus);
    let value = ScorerModel::from_encoder(&stack.init);
    let mut trainer = PpoTrainer::new(
        stack.init.clone(),
        value,
        &stack.reward_models,
        &train,
        ppo.clone(),
        config.seed,
    );
    let log_path = out_paths.ppo_log();
    if let Some(parent) = log_path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    let mut log = BufWriter::new(fs::File::create(&log_path).map_err(|e| io_error(&log_path, e))?);
    writeln!(log, "{}", report::PPO_LOG_HEADER).map_err(|e| io_error(&log_path, e))?;
    let mut last: Option<PpoStepStats> = None;
    for step in 0..ppo.total_steps {
        let stats = trainer.run_step();
        writeln!(log, "{}", report::ppo_log_line(&stats)).map_err(|e| io_error(&log_path, e))?;
        if (step + 1) % ppo.checkpoint_every == 0 {
            save_checkpoint(
                &out_paths.ppo_step_checkpoint(step + 1),
                &Checkpoint::from_policy(
                    &trainer.policy,
                    &format!("ppo:{}", step + 1),
                    config.embed_hash_seed,
                ),
            )?;
            println!(
                "{label}: step {} mean_r_RL {:.4} mean_kl {:.4} mean_m_q {:.4}",
                step + 1,
                stats.mean_r_rl,
                stats.mean_kl,
                stats.mean_m_q
            );
        }
        last = Some(stats);
    }
    log.flush().map_err(|e| io_error(&log_path, e))?;
    let path = out_paths.ppo_checkpoint();
    save_checkpoint(
        &path,
        &Checkpoint::from_policy(&trainer.policy, "ppo", config.embed_hash_seed),
    )?;
    let last = last.expect("total_steps is validated positive");
    println!(
        "{label}: {} steps, final mean_r_RL {:.4}, saved {}",
        ppo.total_steps,
        last.mean_r_rl,
        path.display()
    );
    Ok(())
}

fn cmd_train_ppo(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let stack = load_stack(paths, config)?;
    train_ppo_into(&stack, &config.ppo, config, paths, "train-ppo")
}

/// The four systems compared by `eval`, in report order.
pub const EVAL_SYSTEMS: [&str; 4] = ["concat-history", "init-rewriter", "ppo-rewriter", "manual"];

fn cmd_eval(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let stack = load_stack(paths, config)?;
    let ppo_policy = load_policy(&paths.ppo_checkpoint(), "train-ppo", &stack.vocab, config)?;
    let index = build_index(&stack.corpus, config);
    let scorer = build_scorer(&index, &stack.corpus, config);
    let (_, eval_examples) = split_examples(&stack.corpus);

    let systems: [(&str, Vec<String>); 4] = [
        (
            "concat-history",
            eval_examples.iter().map(concat_history).collect(),
        ),
        (
            "init-rewriter",
            greedy_rewrites(&stack.init, &eval_examples),
        ),
        ("ppo-rewriter", greedy_rewrites(&ppo_policy, &eval_examples)),
        (
            "manual",
            eval_examples
                .iter()
                .map(|e| e.manual_rewrite.clone())
                .collect(),
        ),
    ];

    let mut eval_report = EvalReport::default();
    let mut reward_rows = Vec::new();
    for (system, rewrites) in &systems {
        let scores = score_system(&scorer, &eval_examples, rewrites);
        eval_report.rows.push(eval_row(system, scores));
        reward_rows.push(RewardRow {
            system: system.to_string(),
            mean_r_rl: mean_combined_reward(&stack.reward_models, &eval_examples, rewrites, config),
        });
    }

    let markdown = eval_report.to_markdown()?;
    write_file(&paths.eval_md(), &markdown)?;
    write_file(&paths.eval_csv(), &eval_report.to_csv()?)?;
    write_file(
        &paths.eval_reward_md(),
        &report::reward_markdown(&reward_rows)?,
    )?;
    write_file(&paths.eval_reward_csv(), &report::reward_csv(&reward_rows)?)?;
    println!(
        "eval: {} held-out examples\n{markdown}",
        eval_examples.len()
    );
    Ok(())
}

/// Evaluates every saved PPO step checkpoint under `run_paths` and writes
/// the ROUGE-1/MRR series.
fn trend_into(
    run_paths: &Paths,
    vocab: &Vocab,
    scorer: &RewriteScorer,
    eval_examples: &[DialogueExample],
    config: &RunConfig,
) -> Result<Vec<TrendRow>, HarnessError> {
    let checkpoints = discover_step_checkpoints(&run_paths.checkpoints_dir());
    if checkpoints.is_empty() {
        return Err(HarnessError::Validation(format!(
            "no PPO step checkpoints under {}; run `train-ppo` first",
            run_paths.checkpoints_dir().display()
        )));
    }
    let mut rows = Vec::new();
    for (step, path) in checkpoints {
        let policy = load_policy(&path, "train-ppo", vocab, config)?;
        let rewrites = greedy_rewrites(&policy, eval_examples);
        let scores = score_system(scorer, eval_examples, &rewrites);
        rows.push(TrendRow {
            step,
            rouge1: scores.rouge1,
            mrr: scores.mrr,
        });
    }
    write_file(&run_paths.trend_csv(), &report::trend_csv(&rows)?)?;
    Ok(rows)
}

fn discover_step_checkpoints(dir: &Path) -> Vec<(usize, PathBuf)> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(step) = name
                .strip_prefix("ppo_step_")
                .and_then(|rest| rest.strip_suffix(".mfrw"))
                .and_then(|digits| digits.parse::<usize>().ok())
            {
                out.push((step, entry.path()));
            }
        }
    }
    out.sort_by_key(|(step, _)| *step);
    out
}

fn cmd_trend(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let corpus = load_corpus_checked(paths)?;
    let vocab = corpus_vocab(&corpus);
    let index = build_index(&corpus, config);
    let scorer = build_scorer(&index, &corpus, config);
    let (_, eval_examples) = split_examples(&corpus);
    let rows = trend_into(paths, &vocab, &scorer, &eval_examples, config)?;
    println!(
        "trend: {} checkpoints -> {}",
        rows.len(),
        paths.trend_csv().display()
    );
    Ok(())
}

/// Single-term reward configurations mirroring the ablation table: one
/// weight at 1, everything else (including the KL coefficient) at 0, so the
/// policy optimizes exactly one feedback signal.
pub const ABLATIONS: [(&str, [f64; 3], f64); 4] = [
    ("lambda1", [1.0, 0.0, 0.0], 0.0),
    ("lambda2", [0.0, 1.0, 0.0], 0.0),
    ("lambda3", [0.0, 0.0, 1.0], 0.0),
    ("mu", [0.0, 0.0, 0.0], 1.0),
];

fn cmd_ablate(paths: &Paths, config: &RunConfig) -> Result<(), HarnessError> {
    let stack = load_stack(paths, config)?;
    let combined = load_policy(&paths.ppo_checkpoint(), "train-ppo", &stack.vocab, config)?;
    let index = build_index(&stack.corpus, config);
    let scorer = build_scorer(&index, &stack.corpus, config);
    let (_, eval_examples) = split_examples(&stack.corpus);

    let mut table = EvalReport::default();
    let score_policy = |policy: &RewriterPolicy<f32>| {
        let rewrites = greedy_rewrites(policy, &eval_examples);
        score_system(&scorer, &eval_examples, &rewrites)
    };
    table
        .rows
        .push(eval_row("combined", score_policy(&combined)));

    for (tag, lambda, mu) in ABLATIONS {
        let sub = paths.ablation(tag);
        let ppo = PpoConfig {
            lambda,
            mu,
            eta: 0.0,
            ..config.ppo.clone()
        };
        train_ppo_into(&stack, &ppo, config, &sub, &format!("ablate[{tag}]"))?;
        let policy = load_policy(&sub.ppo_checkpoint(), "ablate", &stack.vocab, config)?;
        trend_into(&sub, &stack.vocab, &scorer, &eval_examples, config)?;
        table.rows.push(eval_row(tag, score_policy(&policy)));
    }

    let markdown = table.to_markdown()?;
    write_file(&paths.ablate_md(), &markdown)?;
    write_file(&paths.ablate_csv(), &table.to_csv()?)?;
    println!("ablate: 4 single-term runs\n{markdown}");
    Ok(())
}

// ---------------------------------------------------------------------------
// run metadata sidecar

/// Completion timestamps, the only file allowed to differ between identical
/// re-runs.
#[derive(Debug, Default, Serialize, Deserialize)]
struct RunMeta {
    #[serde(default)]
    completed_unix: BTreeMap<String, u64>,
}

fn record_completion(paths: &Paths, command: Command) -> Result<(), HarnessError> {
    let path = paths.run_meta();
    let mut meta: RunMeta = fs::read_to_string(&path)
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok())
        .unwrap_or_default();
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    meta.completed_unix.insert(command.name().to_string(), now);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_file(&path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SynthConfig;

    #[test]
    fn split_holds_out_every_fifth_example() {
        let corpus = generate_synthetic(&SynthConfig {
            seed: 1,
            num_examples: 50,
            max_history_turns: 2,
        })
        .unwrap();
        let (train, eval) = split_examples(&corpus);
        assert_eq!(train.len(), 40);
        assert_eq!(eval.len(), 10);
        assert!(eval.iter().all(|e| e.id % 5 == 4));
        assert!(train.iter().all(|e| e.id % 5 != 4));
    }

    #[test]
    fn concat_history_is_oldest_first_plus_query() {
        let example = DialogueExample {
            id: 0,
            history: vec![
                crate::corpus::DialogueTurn {
                    query: "q1".into(),
                    answer: "a1".into(),
                },
                crate::corpus::DialogueTurn {
                    query: "q2".into(),
                    answer: "a2".into(),
                },
            ],
            query: "q3".into(),
            manual_rewrite: String::new(),
            ground_truth: String::new(),
            gold_doc_id: 0,
        };
        assert_eq!(concat_history(&example), "q1 a1 q2 a2 q3");
    }

    #[test]
    fn pair_files_round_trip_and_reject_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs_G.jsonl");
        let pairs = vec![PreferencePair {
            example_id: 0,
            context: "[CLS] what is it [SEP]".into(),
            chosen: "what is the height of the old harbor".into(),
            rejected: "what what".into(),
            chosen_value: 0.9,
            rejected_value: 0.1,
        }];
        write_pairs(&path, RewardMetric::Generation, &pairs).unwrap();
        let loaded = read_pairs(&path, RewardMetric::Generation).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].context, pairs[0].context);
        assert_eq!(loaded[0].chosen, pairs[0].chosen);
        assert_eq!(loaded[0].chosen_value, pairs[0].chosen_value);

        // wrong metric tag is a wiring mistake, not a parse error
        let err = read_pairs(&path, RewardMetric::DPlus).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("metric_tag"));

        // a pair that violates the build-time ordering is rejected
        let bad = r#"{"context":"c","chosen":"a","rejected":"b","metric_tag":"G","chosen_value":0.1,"rejected_value":0.9}"#;
        fs::write(&path, format!("{bad}\n")).unwrap();
        let err = read_pairs(&path, RewardMetric::Generation).unwrap_err();
        assert!(err.to_string().contains("does not exceed"));
    }

    #[test]
    fn step_checkpoints_discovered_in_step_order() {
        let dir = tempfile::tempdir().unwrap();
        for step in [40usize, 20, 100] {
            fs::write(dir.path().join(format!("ppo_step_{step:04}.mfrw")), b"x").unwrap();
        }
        fs::write(dir.path().join("ppo.mfrw"), b"x").unwrap();
        fs::write(dir.path().join("init.mfrw"), b"x").unwrap();
        let found = discover_step_checkpoints(dir.path());
        let steps: Vec<usize> = found.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![20, 40, 100]);
    }

    #[test]
    fn missing_artifacts_name_their_producer() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let err = run(Command::InitTrain, &config, Some(dir.path())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("`synth`"), "{err}");

        let err = run(Command::Eval, &config, Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("`synth`"), "{err}");
    }

    #[test]
    fn out_dir_is_required_except_for_print_config() {
        let config = RunConfig::default();
        let err = run(Command::Synth, &config, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--out"));
        run(Command::PrintConfig, &config, None).unwrap();
    }

    fn smoke_config() -> RunConfig {
        let mut config = RunConfig::default();
        for (key, value) in [
            ("seed", "11"),
            ("synth.num_examples", "80"),
            ("model.embed_dim", "12"),
            ("model.hidden_dim", "16"),
            ("model.attn_dim", "8"),
            ("model.max_len", "12"),
            ("init.epochs", "2"),
            ("rm.epochs", "2"),
            ("ppo.total_steps", "2"),
            ("ppo.checkpoint_every", "1"),
            ("ppo.batch_size", "4"),
            ("ppo.epochs", "2"),
        ] {
            config.set(key, value).unwrap();
        }
        config
    }

    #[test]
    fn pipeline_smoke_produces_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let config = smoke_config();
        let paths = Paths::new(out);

        for command in [
            Command::Synth,
            Command::InitTrain,
            Command::BuildPairs,
            Command::TrainRm,
            Command::TrainPpo,
            Command::Eval,
            Command::Trend,
            Command::Ablate,
        ] {
            run(command, &config, Some(out)).unwrap_or_else(|e| panic!("{}: {e}", command.name()));
        }

        for metric in RewardMetric::ALL {
            assert!(paths.pairs_file(metric).exists());
            assert!(paths.rm_checkpoint(metric).exists());
        }
        assert!(paths.init_checkpoint().exists());
        assert!(paths.ppo_checkpoint().exists());
        assert!(paths.ppo_log().exists());
        assert!(paths.rm_accuracy_csv().exists());

        // eval report: header plus the four fixed systems, in order
        let eval_csv = fs::read_to_string(paths.eval_csv()).unwrap();
        let systems: Vec<&str> = eval_csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(systems, EVAL_SYSTEMS.to_vec());

        // trend: one row per step checkpoint
        let trend = fs::read_to_string(paths.trend_csv()).unwrap();
        assert_eq!(trend.lines().count(), 1 + 2);

        // ablation table: combined plus the four single-term runs
        let ablate_csv = fs::read_to_string(paths.ablate_csv()).unwrap();
        let runs: Vec<&str> = ablate_csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(
            runs,
            vec!["combined", "lambda1", "lambda2", "lambda3", "mu"]
        );
        for (tag, ..) in ABLATIONS {
            assert!(paths.ablation(tag).ppo_checkpoint().exists());
            assert!(paths.ablation(tag).trend_csv().exists());
        }

        // the PPO log matches its declared header
        let log = fs::read_to_string(paths.ppo_log()).unwrap();
        assert_eq!(log.lines().next(), Some(report::PPO_LOG_HEADER));
        assert_eq!(log.lines().count(), 1 + 2);

        // the sidecar carries a timestamp per completed command
        let meta: RunMeta =
            serde_json::from_str(&fs::read_to_string(paths.run_meta()).unwrap()).unwrap();
        assert!(meta.completed_unix.contains_key("synth"));
        assert!(meta.completed_unix.contains_key("ablate"));

        // re-running eval reproduces the report byte for byte
        let before = fs::read_to_string(paths.eval_csv()).unwrap();
        run(Command::Eval, &config, Some(out)).unwrap();
        assert_eq!(fs::read_to_string(paths.eval_csv()).unwrap(), before);

        // an embedder-seed change is refused with both hashes named
        let mut drifted = config.clone();
        drifted.set("embed.hash_seed", "12345").unwrap();
        let err = run(Command::Eval, &drifted, Some(out)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("12345"), "{err}");
        assert!(
            err.to_string()
                .contains(&config.embed_hash_seed.to_string()),
            "{err}"
        );
    }
}
