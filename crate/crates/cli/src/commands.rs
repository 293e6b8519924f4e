use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use qfsum_core::corpus::{
    build_candidates, parse_bioasq, read_corpus_dump, tokenize, write_bioasq, write_corpus_dump, Question,
    DEFAULT_CANDIDATE_CAP,
};
use qfsum_core::embeddings::{load_contextual, load_word_vectors, ContextualStore, EmbeddingSource, EmbeddingTable};
use qfsum_core::harness::{cross_validate, holdout, report_table, split_ratio, EvalReport, Method, MethodRun};
use qfsum_core::labeling::{label_corpus, label_corpus_cached, LabelCache, LabelRecord, LabeledQuestion, DEFAULT_POSITIVES};
use qfsum_core::rl::{rl_train, summarize_with_policy, PolicyModel, PpoConfig};
use qfsum_core::rouge::rouge_su4_multi;
use qfsum_core::scorer::{train, ScorerConfig, ScorerModel, Variant};
use qfsum_core::summarizer::{
    firstn, n_for_type, score_summary, select_top_n, write_answers, write_audit, AuditRecord, SummaryResult,
};
use qfsum_core::synthetic::{contextual_store, generate, SyntheticSpec};

use crate::config::{resolve, FileConfig, Overrides};
use crate::run::{Manifest, RunDir};
use crate::{Cli, CliError, Command, CorpusArgs, PpoArgs, ScorerArgs};

struct Ctx {
    file: FileConfig,
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: PathBuf,
}

impl Ctx {
    fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage(format!("{command} needs --seed (or `seed` in the config file)")))
    }

    fn manifest(&self, command: &str, config: serde_json::Value) -> Manifest {
        Manifest::new(command, self.seed, self.jobs, config)
    }

    fn start(&self, manifest: &Manifest) -> Result<RunDir, CliError> {
        RunDir::create(&self.out_dir, manifest)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusSettings {
    cap: usize,
    positives: usize,
}

impl CorpusSettings {
    fn resolve(ctx: &Ctx, args: &CorpusArgs) -> Result<Self, CliError> {
        let base = CorpusSettings {
            cap: DEFAULT_CANDIDATE_CAP,
            positives: DEFAULT_POSITIVES,
        };
        let mut flags = Overrides::default();
        flags.set("cap", args.cap).set("positives", args.positives);
        let s: CorpusSettings = resolve(&base, "corpus", &[ctx.file.section("corpus"), flags.into_map()])?;
        if s.cap == 0 || s.positives == 0 {
            return Err(CliError::Usage("cap and positives must be positive".into()));
        }
        Ok(s)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::input(path, e))
}

fn load_questions(path: &Path) -> Result<Vec<Question>, CliError> {
    let reader = open(path)?;
    let questions = if path.extension().is_some_and(|e| e == "jsonl") {
        read_corpus_dump(reader)?
    } else {
        parse_bioasq(reader)?
    };
    log::info!("{}: {} questions", path.display(), questions.len());
    Ok(questions)
}

enum Embeddings {
    Table(EmbeddingTable),
    Store(ContextualStore),
}

impl Embeddings {
    fn load(path: &Path) -> Result<Self, CliError> {
        let mut reader = open(path)?;
        let mut head = [0u8; 9];
        let n = reader.read(&mut head).map_err(|e| CliError::input(path, e))?;
        let rest = std::io::Cursor::new(head[..n].to_vec()).chain(reader);
        if &head[..n] == b"QFSUM-CTX" {
            Ok(Embeddings::Store(load_contextual(rest)?))
        } else {
            Ok(Embeddings::Table(load_word_vectors(BufReader::new(rest))?))
        }
    }

    fn source(&self) -> &dyn EmbeddingSource {
        match self {
            Embeddings::Table(t) => t,
            Embeddings::Store(s) => s,
        }
    }
}

fn required_embeddings(path: Option<&PathBuf>, why: &str) -> Result<PathBuf, CliError> {
    path.cloned()
        .ok_or_else(|| CliError::Usage(format!("{why} needs --embeddings")))
}

fn scorer_config(ctx: &Ctx, args: &ScorerArgs, variant: Option<&str>, seed: u64) -> Result<ScorerConfig, CliError> {
    let file = ctx.file.section("scorer");
    let name = variant
        .map(str::to_string)
        .or_else(|| file.get("variant").and_then(|v| v.as_str()).map(str::to_string))
        .unwrap_or_else(|| "nnc".to_string());
    let variant: Variant = name.parse().map_err(|e: qfsum_core::Error| CliError::Usage(e.to_string()))?;
    let mut flags = Overrides::default();
    flags
        .set("variant", Some(variant))
        .set("epochs", args.epochs)
        .set("batch_size", args.batch_size)
        .set("dropout", args.dropout)
        .set("hidden_dim", args.hidden_dim)
        .set("learning_rate", args.learning_rate)
        .set("max_sentence_len", args.max_sentence_len)
        .set("seed", Some(seed));
    let config: ScorerConfig = resolve(&ScorerConfig::defaults(variant, seed), "scorer", &[file, flags.into_map()])?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn ppo_config(ctx: &Ctx, args: &PpoArgs, cap: usize, seed: u64) -> Result<PpoConfig, CliError> {
    let mut flags = Overrides::default();
    flags
        .set("total_timesteps", args.timesteps)
        .set("horizon", args.horizon)
        .set("minibatches", args.minibatches)
        .set("eval_interval", args.eval_interval)
        .set("eval_samples", args.eval_samples)
        .set("learning_rate", args.ppo_learning_rate)
        .set("hidden_dim", args.policy_hidden)
        .set("candidate_cap", Some(cap))
        .set("seed", Some(seed));
    let base = PpoConfig {
        seed,
        ..PpoConfig::default()
    };
    let config: PpoConfig = resolve(&base, "ppo", &[ctx.file.section("ppo"), flags.into_map()])?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn write_report(run: &RunDir, reports: &[EvalReport]) -> Result<(), CliError> {
    run.write_json("report.json", reports)?;
    run.write_bytes("report.txt", report_table(reports).as_bytes())
}

#[derive(Serialize)]
struct QuestionScore<'a> {
    question_id: &'a str,
    selected: &'a [usize],
    f1: f64,
}

fn write_per_question(run: &RunDir, summaries: &[SummaryResult], scores: &[f64]) -> Result<(), CliError> {
    let rows: Vec<QuestionScore<'_>> = summaries
        .iter()
        .zip(scores)
        .map(|(s, &f1)| QuestionScore {
            question_id: &s.question_id,
            selected: &s.selected,
            f1,
        })
        .collect();
    run.write_jsonl("per_question.jsonl", &rows)
}

pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed()?);
    let jobs = cli.jobs.or(file.jobs()?);
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {j} worker threads: {e}")))?;
    }
    let ctx = Ctx {
        file,
        seed,
        jobs,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Ingest { input } => ingest(&ctx, &input),
        Command::Label { corpus } => label(&ctx, &corpus),
        Command::Train {
            corpus,
            embeddings,
            labels,
            scorer,
        } => train_cmd(&ctx, &corpus, &embeddings, labels.as_deref(), &scorer),
        Command::Summarize {
            corpus,
            model,
            embeddings,
        } => summarize(&ctx, &corpus, model.as_deref(), embeddings.as_deref()),
        Command::Evaluate {
            corpus,
            method,
            model,
            embeddings,
            scorer,
            ppo,
        } => match (method, model) {
            (_, Some(model)) => {
                let emb = required_embeddings(embeddings.as_ref(), "evaluate --model")?;
                evaluate_model(&ctx, &corpus, &model, &emb)
            }
            (Some(method), None) => evaluate_method(&ctx, &corpus, &method, embeddings.as_deref(), &scorer, &ppo),
            (None, None) => Err(CliError::Usage("evaluate needs --method or --model".into())),
        },
        Command::Crossval {
            corpus,
            method,
            k,
            embeddings,
            scorer,
            ppo,
        } => crossval(&ctx, &corpus, &method, k, embeddings.as_deref(), &scorer, &ppo),
        Command::RlTrain { corpus, embeddings, ppo } => rl_train_cmd(&ctx, &corpus, &embeddings, &ppo),
        Command::RlEval {
            corpus,
            policy,
            embeddings,
        } => rl_eval(&ctx, &corpus, &policy, &embeddings),
        Command::Rouge { candidate, reference } => rouge(&ctx, &candidate, &reference),
        Command::Synth {
            questions,
            sentences,
            relevant,
            dim,
            contextual,
        } => synth(&ctx, questions, sentences, relevant, dim, contextual),
    }
}

fn ingest(ctx: &Ctx, input: &Path) -> Result<PathBuf, CliError> {
    let mut manifest = ctx.manifest("ingest", json!({}));
    manifest.add_input("input", input)?;
    let questions = parse_bioasq(open(input)?)?;
    let run = ctx.start(&manifest)?;
    run.write_with("corpus.jsonl", |w| write_corpus_dump(&questions, w))?;
    let mut by_type = BTreeMap::new();
    for q in &questions {
        *by_type.entry(q.qtype.as_str()).or_insert(0usize) += 1;
    }
    let candidates: usize = questions.iter().map(|q| build_candidates(q, usize::MAX).len()).sum();
    run.write_json(
        "ingest.json",
        &json!({ "questions": questions.len(), "by_type": by_type, "sentences": candidates }),
    )?;
    run.finish()
}

fn label(ctx: &Ctx, args: &CorpusArgs) -> Result<PathBuf, CliError> {
    let settings = CorpusSettings::resolve(ctx, args)?;
    let mut manifest = ctx.manifest("label", json!({ "corpus": settings }));
    manifest.add_input("corpus", &args.corpus)?;
    let questions = load_questions(&args.corpus)?;
    let labeled = label_corpus(&questions, settings.cap, settings.positives)?;
    let mut cache = LabelCache::default();
    for lq in &labeled {
        cache.insert(LabelRecord {
            question_id: lq.question.id.clone(),
            targets: lq.targets.clone(),
            labels: lq.labels.clone(),
        });
    }
    let run = ctx.start(&manifest)?;
    run.write_with("labels.jsonl", |w| cache.write(w))?;
    run.write_json(
        "label_stats.json",
        &json!({ "questions": questions.len(), "labeled": labeled.len(), "skipped": questions.len() - labeled.len() }),
    )?;
    run.finish()
}

fn labeled_corpus(
    questions: &[Question],
    labels: Option<&Path>,
    settings: &CorpusSettings,
) -> Result<Vec<LabeledQuestion>, CliError> {
    match labels {
        Some(path) => Ok(label_corpus_cached(questions, &LabelCache::read(open(path)?)?, settings.cap)?),
        None => Ok(label_corpus(questions, settings.cap, settings.positives)?),
    }
}

fn train_cmd(
    ctx: &Ctx,
    corpus: &CorpusArgs,
    embeddings: &Path,
    labels: Option<&Path>,
    args: &ScorerArgs,
) -> Result<PathBuf, CliError> {
    let seed = ctx.require_seed("train")?;
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let config = scorer_config(ctx, args, args.variant.as_deref(), seed)?;
    let mut manifest = ctx.manifest("train", json!({ "corpus": settings, "scorer": config }));
    manifest.add_input("corpus", &corpus.corpus)?;
    manifest.add_input("embeddings", embeddings)?;
    if let Some(l) = labels {
        manifest.add_input("labels", l)?;
    }
    let questions = load_questions(&corpus.corpus)?;
    let labeled = labeled_corpus(&questions, labels, &settings)?;
    let emb = Embeddings::load(embeddings)?;
    let (model, log) = train(&labeled, emb.source(), &config)?;
    let run = ctx.start(&manifest)?;
    run.write_with("model.ckpt", |w| model.save(w))?;
    run.write_jsonl("train_log.jsonl", &log)?;
    run.finish()
}

fn summarize(ctx: &Ctx, corpus: &CorpusArgs, model: Option<&Path>, embeddings: Option<&Path>) -> Result<PathBuf, CliError> {
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let method = if model.is_some() { "scorer" } else { "firstn" };
    let mut manifest = ctx.manifest("summarize", json!({ "corpus": settings, "method": method }));
    manifest.add_input("corpus", &corpus.corpus)?;
    let loaded = match (model, embeddings) {
        (Some(m), Some(e)) => {
            manifest.add_input("model", m)?;
            manifest.add_input("embeddings", e)?;
            Some((ScorerModel::load(open(m)?)?, Embeddings::load(e)?))
        }
        _ => None,
    };
    let questions = load_questions(&corpus.corpus)?;
    let mut summaries = Vec::with_capacity(questions.len());
    let mut audit = Vec::with_capacity(questions.len());
    for q in &questions {
        let pool = build_candidates(q, settings.cap);
        let (summary, scores) = match &loaded {
            Some((model, emb)) if !pool.is_empty() => {
                let scores = model.predict_scores(q, &pool, emb.source())?;
                (select_top_n(&q.id, &scores, &pool, n_for_type(q.qtype))?, scores)
            }
            _ => {
                let scores = pool.iter().map(|c| -(c.position as f64)).collect();
                (firstn(q, &pool), scores)
            }
        };
        audit.push(AuditRecord {
            question_id: q.id.clone(),
            selected: summary.selected.clone(),
            scores,
        });
        summaries.push(summary);
    }
    let run = ctx.start(&manifest)?;
    run.write_with("answers.json", |w| write_answers(&summaries, w))?;
    run.write_with("audit.jsonl", |w| write_audit(&audit, w))?;
    run.finish()
}

fn evaluate_model(ctx: &Ctx, corpus: &CorpusArgs, model_path: &Path, embeddings: &Path) -> Result<PathBuf, CliError> {
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let mut manifest = ctx.manifest("evaluate", json!({ "corpus": settings }));
    manifest.add_input("corpus", &corpus.corpus)?;
    manifest.add_input("model", model_path)?;
    manifest.add_input("embeddings", embeddings)?;
    let model = ScorerModel::load(open(model_path)?)?;
    let emb = Embeddings::load(embeddings)?;
    let labeled = label_corpus(&load_questions(&corpus.corpus)?, settings.cap, settings.positives)?;
    if labeled.is_empty() {
        return Err(qfsum_core::Error::Validation("no evaluable questions".into()).into());
    }
    let mut summaries = Vec::with_capacity(labeled.len());
    let mut scores = Vec::with_capacity(labeled.len());
    for lq in &labeled {
        let s = model.predict_scores(&lq.question, &lq.pool, emb.source())?;
        let summary = select_top_n(&lq.question.id, &s, &lq.pool, n_for_type(lq.question.qtype))?;
        scores.push(score_summary(&lq.question, &lq.pool, &summary)?);
        summaries.push(summary);
    }
    let run_result = MethodRun { summaries, scores };
    let report = EvalReport::from_entries(model.config.variant.to_string(), vec![run_result.mean()]);
    let run = ctx.start(&manifest)?;
    write_report(&run, &[report])?;
    write_per_question(&run, &run_result.summaries, &run_result.scores)?;
    run.finish()
}

struct MethodSetup {
    name: String,
    scorer: Option<ScorerConfig>,
    ppo: Option<PpoConfig>,
    embeddings: Option<Embeddings>,
}

impl MethodSetup {
    fn build(
        ctx: &Ctx,
        name: &str,
        seed: u64,
        cap: usize,
        embeddings: Option<&Path>,
        scorer: &ScorerArgs,
        ppo: &PpoArgs,
        manifest_inputs: &mut Vec<(String, PathBuf)>,
    ) -> Result<Self, CliError> {
        let mut setup = MethodSetup {
            name: name.to_string(),
            scorer: None,
            ppo: None,
            embeddings: None,
        };
        match name {
            "firstn" | "random" => return Ok(setup),
            "ppo" => setup.ppo = Some(ppo_config(ctx, ppo, cap, seed)?),
            variant => setup.scorer = Some(scorer_config(ctx, scorer, Some(variant), seed)?),
        }
        let path = required_embeddings(embeddings.map(Path::to_path_buf).as_ref(), &format!("method {name}"))?;
        manifest_inputs.push(("embeddings".into(), path.clone()));
        setup.embeddings = Some(Embeddings::load(&path)?);
        Ok(setup)
    }

    fn config_json(&self) -> serde_json::Value {
        json!({ "method": self.name, "scorer": self.scorer, "ppo": self.ppo })
    }

    fn method(&self) -> Method<'_> {
        let source = || self.embeddings.as_ref().expect("learned methods load embeddings").source();
        match (self.name.as_str(), &self.scorer, &self.ppo) {
            ("firstn", ..) => Method::Firstn,
            ("random", ..) => Method::Random,
            (_, Some(config), _) => Method::Scorer {
                config: config.clone(),
                source: source(),
            },
            (_, _, Some(config)) => Method::Policy {
                config: config.clone(),
                source: source(),
            },
            _ => unreachable!("method setup is consistent"),
        }
    }
}

fn evaluate_method(
    ctx: &Ctx,
    corpus: &CorpusArgs,
    name: &str,
    embeddings: Option<&Path>,
    scorer: &ScorerArgs,
    ppo: &PpoArgs,
) -> Result<PathBuf, CliError> {
    let seed = ctx.require_seed("evaluate --method")?;
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let mut inputs = vec![("corpus".to_string(), corpus.corpus.clone())];
    let setup = MethodSetup::build(ctx, name, seed, settings.cap, embeddings, scorer, ppo, &mut inputs)?;
    let mut manifest = ctx.manifest(
        "evaluate",
        json!({ "corpus": settings, "protocol": "holdout-5:1", "method": setup.config_json() }),
    );
    for (role, path) in &inputs {
        manifest.add_input(role, path)?;
    }
    let labeled = label_corpus(&load_questions(&corpus.corpus)?, settings.cap, settings.positives)?;
    let (report, run_result) = holdout(&setup.method(), &labeled, seed)?;
    let run = ctx.start(&manifest)?;
    write_report(&run, &[report])?;
    write_per_question(&run, &run_result.summaries, &run_result.scores)?;
    run.finish()
}

fn crossval(
    ctx: &Ctx,
    corpus: &CorpusArgs,
    name: &str,
    k: usize,
    embeddings: Option<&Path>,
    scorer: &ScorerArgs,
    ppo: &PpoArgs,
) -> Result<PathBuf, CliError> {
    let seed = ctx.require_seed("crossval")?;
    if k < 2 {
        return Err(CliError::Usage("--k must be at least 2".into()));
    }
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let mut inputs = vec![("corpus".to_string(), corpus.corpus.clone())];
    let setup = MethodSetup::build(ctx, name, seed, settings.cap, embeddings, scorer, ppo, &mut inputs)?;
    let mut manifest = ctx.manifest(
        "crossval",
        json!({ "corpus": settings, "k": k, "method": setup.config_json() }),
    );
    for (role, path) in &inputs {
        manifest.add_input(role, path)?;
    }
    let labeled = label_corpus(&load_questions(&corpus.corpus)?, settings.cap, settings.positives)?;
    let report = cross_validate(&setup.method(), &labeled, k, seed)?;
    let run = ctx.start(&manifest)?;
    write_report(&run, &[report])?;
    run.finish()
}

fn usable(questions: Vec<Question>, cap: usize) -> Vec<Question> {
    questions
        .into_iter()
        .filter(|q| !build_candidates(q, cap).is_empty() && q.ideal_answers.iter().any(|a| !a.trim().is_empty()))
        .collect()
}

fn rl_train_cmd(ctx: &Ctx, corpus: &CorpusArgs, embeddings: &Path, args: &PpoArgs) -> Result<PathBuf, CliError> {
    let seed = ctx.require_seed("rl-train")?;
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let config = ppo_config(ctx, args, settings.cap, seed)?;
    let mut manifest = ctx.manifest("rl-train", json!({ "corpus": settings, "ppo": config }));
    manifest.add_input("corpus", &corpus.corpus)?;
    manifest.add_input("embeddings", embeddings)?;
    let questions = usable(load_questions(&corpus.corpus)?, settings.cap);
    let ids: Vec<String> = questions.iter().map(|q| q.id.clone()).collect();
    let (train_ids, test_ids) = split_ratio(&ids, seed)?;
    let pick = |wanted: &[String]| -> Vec<Question> {
        let set: std::collections::HashSet<&str> = wanted.iter().map(String::as_str).collect();
        questions.iter().filter(|q| set.contains(q.id.as_str())).cloned().collect()
    };
    let (train_q, test_q) = (pick(&train_ids), pick(&test_ids));
    let emb = Embeddings::load(embeddings)?;
    let outcome = rl_train(&train_q, &test_q, emb.source(), &config)?;
    let firstn_mean = test_q
        .iter()
        .map(|q| {
            let pool = build_candidates(q, settings.cap);
            score_summary(q, &pool, &firstn(q, &pool))
        })
        .sum::<qfsum_core::Result<f64>>()?
        / test_q.len() as f64;
    let run = ctx.start(&manifest)?;
    run.write_with("policy.ckpt", |w| outcome.best.save(&config, w))?;
    run.write_jsonl("curve.jsonl", &outcome.curve)?;
    run.write_json("split.json", &json!({ "train": train_ids, "test": test_ids }))?;
    run.write_json(
        "rl_report.json",
        &json!({
            "best_test_f1": outcome.best_score,
            "best_timestep": outcome.best_timestep,
            "firstn_test_f1": firstn_mean,
            "final_update": outcome.last_stats,
        }),
    )?;
    run.finish()
}

fn rl_eval(ctx: &Ctx, corpus: &CorpusArgs, policy: &Path, embeddings: &Path) -> Result<PathBuf, CliError> {
    let settings = CorpusSettings::resolve(ctx, corpus)?;
    let (model, stored) = PolicyModel::load(open(policy)?)?;
    let config = PpoConfig {
        seed: ctx.seed.unwrap_or(stored.seed),
        candidate_cap: settings.cap,
        ..stored
    };
    let mut manifest = ctx.manifest("rl-eval", json!({ "corpus": settings, "ppo": config }));
    manifest.add_input("corpus", &corpus.corpus)?;
    manifest.add_input("policy", policy)?;
    manifest.add_input("embeddings", embeddings)?;
    let questions = usable(load_questions(&corpus.corpus)?, settings.cap);
    let emb = Embeddings::load(embeddings)?;
    let results = summarize_with_policy(&model, &questions, emb.source(), &config)?;
    let (summaries, scores): (Vec<SummaryResult>, Vec<f64>) = results.into_iter().unzip();
    let report = EvalReport::from_entries("ppo", vec![scores.iter().sum::<f64>() / scores.len().max(1) as f64]);
    let run = ctx.start(&manifest)?;
    run.write_with("answers.json", |w| write_answers(&summaries, w))?;
    write_report(&run, &[report])?;
    write_per_question(&run, &summaries, &scores)?;
    run.finish()
}

fn rouge(ctx: &Ctx, candidate: &Path, references: &[PathBuf]) -> Result<PathBuf, CliError> {
    let mut manifest = ctx.manifest("rouge", json!({}));
    manifest.add_input("candidate", candidate)?;
    for (i, r) in references.iter().enumerate() {
        manifest.add_input(&format!("reference{}", i + 1), r)?;
    }
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::input(p, e));
    let cand = tokenize(&read(candidate)?);
    let refs = references
        .iter()
        .map(|r| read(r).map(|t| tokenize(&t)))
        .collect::<Result<Vec<_>, _>>()?;
    let score = rouge_su4_multi(&cand, &refs)?;
    println!(
        "ROUGE-SU4 precision {:.4} recall {:.4} F1 {:.4}",
        score.precision, score.recall, score.f1
    );
    let run = ctx.start(&manifest)?;
    run.write_json(
        "rouge.json",
        &json!({ "precision": score.precision, "recall": score.recall, "f1": score.f1 }),
    )?;
    run.finish()
}

fn synth(ctx: &Ctx, questions: usize, sentences: usize, relevant: usize, dim: usize, contextual: bool) -> Result<PathBuf, CliError> {
    let seed = ctx.require_seed("synth")?;
    if relevant > sentences || questions == 0 || dim == 0 {
        return Err(CliError::Usage(
            "need questions ≥ 1, dim ≥ 1 and relevant ≤ sentences".into(),
        ));
    }
    let spec = SyntheticSpec {
        questions,
        sentences,
        relevant,
        dim,
        seed,
    };
    let manifest = ctx.manifest(
        "synth",
        json!({ "questions": questions, "sentences": sentences, "relevant": relevant, "dim": dim, "contextual": contextual }),
    );
    let data = generate(&spec)?;
    let run = ctx.start(&manifest)?;
    run.write_with("corpus.json", |w| write_bioasq(&data.questions, w))?;
    run.write_with("vectors.txt", |w| data.table.write_text(w))?;
    if contextual {
        for (name, sentence_level) in [("contextual-token.bin", false), ("contextual-sentence.bin", true)] {
            let store = contextual_store(&data.questions, &data.table, sentence_level, DEFAULT_CANDIDATE_CAP)?;
            run.write_with(name, |w| store.write(w))?;
        }
    }
    run.finish()
}
