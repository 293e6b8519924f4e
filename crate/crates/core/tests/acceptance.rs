//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any blocking criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfsum_core::corpus::{build_candidates, CandidateSentence, Question, QuestionType, DEFAULT_CANDIDATE_CAP};
use qfsum_core::embeddings::{EmbeddingSource, TokenMatrix};
use qfsum_core::harness::{cross_validate, holdout, split_ratio, split_sizes, Method};
use qfsum_core::labeling::{label_corpus, LabeledQuestion, DEFAULT_POSITIVES};
use qfsum_core::neural::gradcheck::{central_difference, param_difference, param_rel_error, rel_error};
use qfsum_core::neural::ops::{relu_grad, sigmoid_grad, softmax_backward, tanh, tanh_grad};
use qfsum_core::neural::{bce, ce_softmax, dense, dense_backward, mse, relu, sigmoid, softmax, BiLstm, ParamSet, Tensor};
use qfsum_core::rl::{
    compute_gae, ppo_loss, ppo_train_env, rl_train, BanditEnv, PolicyNet, PpoBatch, PpoConfig,
};
use qfsum_core::rouge::{rouge_su4, su4_counts};
use qfsum_core::scorer::{train, ScorerConfig, ScorerModel, Variant};
use qfsum_core::summarizer::{firstn, n_for_type, score_summary, select_top_n};
use qfsum_core::synthetic::{contextual_store, generate, SyntheticSpec};

const FD_TOLERANCE: f64 = 1e-5;

struct Outcome {
    pass: bool,
    blocking: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Outcome {
            pass,
            blocking: true,
            detail,
        }
    }
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(shape, random_vec(shape.iter().product(), rng)).unwrap()
}

fn labeled(spec: SyntheticSpec) -> (Vec<LabeledQuestion>, qfsum_core::synthetic::SyntheticData) {
    let data = generate(&spec).unwrap();
    let corpus = label_corpus(&data.questions, DEFAULT_CANDIDATE_CAP, DEFAULT_POSITIVES).unwrap();
    (corpus, data)
}

// ROUGE --------------------------------------------------------------------

/// Enumerate every unigram and every ordered pair at most five positions
/// apart, then clip counts against the reference.
fn brute_force_counts(c: &[String], r: &[String]) -> (usize, usize, usize) {
    fn units(t: &[String]) -> BTreeMap<(String, String), usize> {
        let mut bag = BTreeMap::new();
        for i in 0..t.len() {
            *bag.entry((t[i].clone(), String::new())).or_insert(0) += 1;
            for j in i + 1..t.len() {
                if j - i <= 5 {
                    *bag.entry((t[i].clone(), t[j].clone())).or_insert(0) += 1;
                }
            }
        }
        bag
    }
    let (cu, ru) = (units(c), units(r));
    let matches = cu.iter().map(|(k, n)| (*n).min(*ru.get(k).unwrap_or(&0))).sum();
    (matches, cu.values().sum(), ru.values().sum())
}

fn rouge_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vocab = ["a", "b", "c", "d", "e"];
    let sample = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.gen_range(0..=15);
        (0..n).map(|_| vocab[rng.gen_range(0..5)].to_string()).collect()
    };
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (c, r) = (sample(&mut rng), sample(&mut rng));
        let (m, nc, nr) = brute_force_counts(&c, &r);
        let counts = su4_counts(&c, &r);
        if (counts.matches, counts.candidate_units, counts.reference_units) != (m, nc, nr) {
            return Outcome::check(false, format!("pair {i}: counts {counts:?} vs oracle ({m}, {nc}, {nr})"));
        }
        let (p, rc) = if nc == 0 || nr == 0 {
            (0.0, 0.0)
        } else {
            (m as f64 / nc as f64, m as f64 / nr as f64)
        };
        let f = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
        let s = rouge_su4(&c, &r);
        worst = worst.max((s.precision - p).abs().max((s.recall - rc).abs()).max((s.f1 - f).abs()));
    }
    Outcome::check(worst <= 1e-12, format!("1000 pairs, counts exact, max P/R/F1 error {worst:.1e}"))
}

// Gradients ----------------------------------------------------------------

struct FdTally {
    configs: usize,
    worst: f64,
    worst_at: String,
}

impl FdTally {
    fn record(&mut self, what: &str, err: f64) {
        self.configs += 1;
        if err > self.worst || err.is_nan() {
            self.worst = err;
            self.worst_at = what.to_string();
        }
    }
}

fn fd_dense(t: &mut FdTally, rng: &mut ChaCha8Rng) {
    for _ in 0..20 {
        let (b, i, o) = (rng.gen_range(1..5), rng.gen_range(1..7), rng.gen_range(1..5));
        let x = random_tensor(&[b, i], rng);
        let w = random_tensor(&[i, o], rng);
        let bias = random_tensor(&[o], rng);
        let up = random_tensor(&[b, o], rng);
        let loss = |x: &Tensor, w: &Tensor, bias: &Tensor| -> f64 {
            let y = dense(x, w, bias).unwrap();
            y.data().iter().zip(up.data()).map(|(a, c)| a * c).sum()
        };
        let g = dense_backward(&x, &w, &up).unwrap();
        let err = rel_error(g.weights.data(), &central_difference(&w, |w| loss(&x, w, &bias)))
            .max(rel_error(g.input.data(), &central_difference(&x, |x| loss(x, &w, &bias))))
            .max(rel_error(g.bias.data(), &central_difference(&bias, |b| loss(&x, &w, b))));
        t.record("dense", err);
    }
}

fn fd_lstm(t: &mut FdTally, rng: &mut ChaCha8Rng) {
    for trial in 0..15 {
        let (d, h) = (rng.gen_range(1..5), rng.gen_range(1..4));
        let lstm = BiLstm::new("r", d, h);
        let mut params = ParamSet::new(trial);
        lstm.init(&mut params, rng);
        let len = rng.gen_range(2..6);
        let seqs: Vec<TokenMatrix> = (0..rng.gen_range(1..4))
            .map(|_| {
                let real = rng.gen_range(1..=len);
                let rows: Vec<Vec<f64>> = (0..real).map(|_| random_vec(d, rng)).collect();
                TokenMatrix::from_real_rows(rows.iter().map(Vec::as_slice), d, len)
            })
            .collect();
        let refs: Vec<&TokenMatrix> = seqs.iter().collect();
        let up = random_tensor(&[seqs.len(), h], rng);
        let weighted = |out: &Tensor| -> f64 { out.data().iter().zip(up.data()).map(|(a, b)| a * b).sum() };

        let (_, cache) = lstm.forward(&params, &refs).unwrap();
        let mut grads = params.zeros_like();
        let dx = lstm.backward(&params, &cache, &up, &mut grads, true).unwrap().unwrap();
        let numeric = param_difference(&params, |p| weighted(&lstm.forward(p, &refs).unwrap().0));
        let mut err = param_rel_error(&grads, &numeric);
        for (k, seq) in seqs.iter().enumerate() {
            let fd = central_difference(&seq.rows, |rows| {
                let probe = TokenMatrix {
                    rows: rows.clone(),
                    mask: seq.mask.clone(),
                };
                let mut all = refs.clone();
                all[k] = &probe;
                weighted(&lstm.forward(&params, &all).unwrap().0)
            });
            let masked: Vec<f64> = fd
                .chunks(d)
                .zip(&seq.mask)
                .flat_map(|(row, &m)| row.iter().map(move |v| if m == 1 { *v } else { 0.0 }))
                .collect();
            err = err.max(rel_error(dx[k].data(), &masked));
        }
        t.record("bilstm", err);
    }
}

fn fd_scalar(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let step = 1e-5;
    (f(x + step) - f(x - step)) / (2.0 * step)
}

fn fd_activations_and_losses(t: &mut FdTally, rng: &mut ChaCha8Rng) {
    let rel = |a: f64, b: f64| rel_error(&[a], &[b]);
    for _ in 0..10 {
        let x = rng.gen_range(-4.0..4.0);
        t.record("sigmoid", rel(sigmoid_grad(sigmoid(x)), fd_scalar(sigmoid, x)));
        t.record("tanh", rel(tanh_grad(tanh(x)), fd_scalar(tanh, x)));
        let away = if x.abs() < 1e-3 { x + 0.5 } else { x };
        t.record("relu", rel(relu_grad(away), fd_scalar(relu, away)));

        let n = rng.gen_range(2..6);
        let z = Tensor::vector(random_vec(n, rng).iter().map(|v| 3.0 * v).collect());
        let g = random_vec(n, rng);
        let analytic = softmax_backward(&softmax(z.data()), &g);
        let numeric = central_difference(&z, |z| softmax(z.data()).iter().zip(&g).map(|(p, g)| p * g).sum());
        t.record("softmax", rel_error(&analytic, &numeric));

        let p = rng.gen_range(0.05..0.95);
        let y = f64::from(rng.gen_range(0..2u8));
        t.record("bce", rel(bce(p, y).1, fd_scalar(|p| bce(p, y).0, p)));
        let target = rng.gen_range(-1.0..1.0);
        t.record("mse", rel(mse(p, target).1, fd_scalar(|p| mse(p, target).0, p)));
        let class = rng.gen_range(0..n);
        let (_, analytic) = ce_softmax(z.data(), class);
        t.record("ce_softmax", rel_error(&analytic, &central_difference(&z, |z| ce_softmax(z.data(), class).0)));
    }
}

fn fd_scorers(t: &mut FdTally) {
    for seed in 0..2u64 {
        let (corpus, data) = labeled(SyntheticSpec {
            questions: 3,
            sentences: 4,
            relevant: 2,
            dim: 4,
            seed: 40 + seed,
        });
        let questions: Vec<Question> = corpus.iter().map(|lq| lq.question.clone()).collect();
        let tokens = contextual_store(&questions, &data.table, false, DEFAULT_CANDIDATE_CAP).unwrap();
        let sentences = contextual_store(&questions, &data.table, true, DEFAULT_CANDIDATE_CAP).unwrap();
        let cases: [(Variant, &dyn EmbeddingSource); 9] = [
            (Variant::Nnc, &data.table),
            (Variant::Nnr, &data.table),
            (Variant::SiameseLstm, &data.table),
            (Variant::MeanContextual, &tokens),
            (Variant::ContextualLstm, &tokens),
            (Variant::SbertR, &sentences),
            (Variant::SbertC, &sentences),
            (Variant::SbertMR, &sentences),
            (Variant::SbertMC, &sentences),
        ];
        let examples = vec![(0, 0), (0, 2), (1, 1), (2, 3), (2, 0)];
        for (variant, source) in cases {
            let mut config = ScorerConfig::defaults(variant, seed);
            config.hidden_dim = 3;
            let model = ScorerModel::new(config, source.dim()).unwrap();
            let (_, analytic) = model.loss_and_gradient(&corpus, &examples, source).unwrap();
            let numeric = param_difference(&model.params, |p| {
                let mut probe = model.clone();
                probe.params = p.clone();
                probe.loss_and_gradient(&corpus, &examples, source).unwrap().0
            });
            t.record(&format!("scorer {variant}"), param_rel_error(&analytic, &numeric));
        }
    }
}

fn fd_policy(t: &mut FdTally, rng: &mut ChaCha8Rng) {
    let config = PpoConfig::default();
    for seed in 0..10 {
        let net = PolicyNet::new(rng.gen_range(2..6), rng.gen_range(2..5));
        let params = net.init_params(seed);
        let m = rng.gen_range(2..8);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| random_vec(net.state_dim, rng)).collect();
        let states = Tensor::from_rows(&rows).unwrap();
        let cache = net.forward(&params, &states).unwrap();
        let actions: Vec<usize> = (0..m).map(|_| rng.gen_range(0..2)).collect();
        let batch = PpoBatch {
            old_log_probs: actions
                .iter()
                .enumerate()
                .map(|(i, &a)| cache.log_probs(i)[a] + rng.gen_range(-0.3..0.3))
                .collect(),
            states,
            actions,
            advantages: random_vec(m, rng).iter().map(|a| 2.0 * a).collect(),
            returns: random_vec(m, rng),
        };
        let (_, analytic) = ppo_loss(&net, &params, &batch, &config).unwrap();
        let numeric = param_difference(&params, |p| ppo_loss(&net, p, &batch, &config).unwrap().0.total_loss);
        t.record("policy", param_rel_error(&analytic, &numeric));
    }
}

fn gradient_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut t = FdTally {
        configs: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    fd_dense(&mut t, &mut rng);
    fd_lstm(&mut t, &mut rng);
    fd_activations_and_losses(&mut t, &mut rng);
    fd_scorers(&mut t);
    fd_policy(&mut t, &mut rng);
    Outcome::check(
        t.configs >= 100 && t.worst < FD_TOLERANCE,
        format!("{} configurations, worst relative error {:.1e} ({})", t.configs, t.worst, t.worst_at),
    )
}

// Labeling and selection ---------------------------------------------------

fn labeling_contract() -> Outcome {
    let (corpus, _) = labeled(SyntheticSpec {
        questions: 200,
        seed: 3,
        ..SyntheticSpec::default()
    });
    if corpus.len() != 200 {
        return Outcome::check(false, format!("{} of 200 questions labeled", corpus.len()));
    }
    for lq in &corpus {
        let positives = lq.labels.iter().filter(|&&l| l == 1).count();
        if positives != DEFAULT_POSITIVES.min(lq.pool.len()) {
            return Outcome::check(false, format!("{}: {positives} positives", lq.question.id));
        }
        for (i, (&ti, &li)) in lq.targets.iter().zip(&lq.labels).enumerate() {
            for (j, (&tj, &lj)) in lq.targets.iter().zip(&lq.labels).enumerate() {
                let ordered = ti > tj || (ti == tj && i < j);
                if li == 1 && lj == 0 && !ordered {
                    return Outcome::check(false, format!("{}: candidate {} outranks {}", lq.question.id, j + 1, i + 1));
                }
            }
        }
    }
    Outcome::check(true, "200 questions, min(5, P) positives, ranking respected".into())
}

fn pool_of(n: usize) -> Vec<CandidateSentence> {
    (0..n)
        .map(|i| CandidateSentence {
            text: format!("s{i}"),
            tokens: vec![format!("s{i}")],
            position: i + 1,
            document_id: "d".into(),
        })
        .collect()
}

fn selection_contract() -> Outcome {
    let n: Vec<usize> = QuestionType::ALL.iter().map(|&t| n_for_type(t)).collect();
    if n != [6, 2, 2, 3] {
        return Outcome::check(false, format!("n_for_type gives {n:?}"));
    }
    let transforms: [fn(f64) -> f64; 4] = [|x| 3.0 * x + 1.0, |x| x * x * x, |x| (x / 100.0).exp(), f64::atan];
    let mut runner = TestRunner::new(PropConfig {
        cases: 500,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (prop::collection::vec(-1000i32..1000, 1..60), 1usize..10, 0usize..4);
    let result = runner.run(&strategy, |(raw, n, which)| {
        let scores: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
        let mapped: Vec<f64> = scores.iter().map(|&s| transforms[which](s)).collect();
        let pool = pool_of(scores.len());
        let a = select_top_n("q", &scores, &pool, n).unwrap();
        let b = select_top_n("q", &mapped, &pool, n).unwrap();
        prop_assert_eq!(&a.selected, &b.selected);
        prop_assert_eq!(a.selected.len(), n.min(pool.len()));
        Ok(())
    });
    match result {
        Ok(()) => Outcome::check(true, "n_for_type (6, 2, 2, 3); 500 monotone-transform cases".into()),
        Err(e) => Outcome::check(false, format!("property failed: {e}")),
    }
}

// Learning signal ----------------------------------------------------------

struct SeedRun {
    /// Time spent on nnc, random and firstn for this seed.
    elapsed: Duration,
    nnc: f64,
    nnr: f64,
    random: f64,
    firstn: f64,
}

fn synthetic_runs(seeds: u64) -> Vec<SeedRun> {
    (0..seeds)
        .map(|seed| {
            let (corpus, data) = labeled(SyntheticSpec {
                questions: 200,
                seed,
                ..SyntheticSpec::default()
            });
            let score = |method: Method<'_>| holdout(&method, &corpus, seed).unwrap().0.mean;
            let scorer = |variant| {
                let mut config = ScorerConfig::defaults(variant, seed);
                config.batch_size = 64;
                score(Method::Scorer {
                    config,
                    source: &data.table,
                })
            };
            let t = Instant::now();
            let (nnc, random, firstn) = (scorer(Variant::Nnc), score(Method::Random), score(Method::Firstn));
            let elapsed = t.elapsed();
            SeedRun {
                elapsed,
                nnc,
                nnr: scorer(Variant::Nnr),
                random,
                firstn,
            }
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn learning_signal(runs: &[SeedRun]) -> Outcome {
    let runs = &runs[..3];
    let nnc = mean(runs.iter().map(|r| r.nnc));
    let random = mean(runs.iter().map(|r| r.random));
    let firstn = mean(runs.iter().map(|r| r.firstn));
    let elapsed: Duration = runs.iter().map(|r| r.elapsed).sum();
    Outcome::check(
        nnc - random >= 0.05 && nnc - firstn >= 0.05 && elapsed <= Duration::from_secs(600),
        format!(
            "3 seeds: nnc {nnc:.3}, random {random:.3}, firstn {firstn:.3} [{:.1}s, budget 600s]",
            elapsed.as_secs_f64()
        ),
    )
}

fn nnc_vs_nnr(runs: &[SeedRun]) -> Outcome {
    let diffs: Vec<f64> = runs.iter().map(|r| r.nnc - r.nnr).collect();
    let d = mean(diffs.iter().copied());
    let sd = (diffs.iter().map(|x| (x - d).powi(2)).sum::<f64>() / (diffs.len() as f64 - 1.0)).sqrt();
    let nnc = mean(runs.iter().map(|r| r.nnc));
    let nnr = mean(runs.iter().map(|r| r.nnr));
    let blocking = d < -sd;
    let note = if d > 0.0 {
        ""
    } else if blocking {
        "; nnr ahead by more than 1 stdev"
    } else {
        "; non-blocking, within 1 stdev"
    };
    Outcome {
        pass: d > 0.0,
        blocking,
        detail: format!(
            "informational, {} seeds: nnc {nnc:.3}, nnr {nnr:.3}, difference {d:+.3} (stdev {sd:.3}){note}",
            runs.len()
        ),
    }
}

// PPO ----------------------------------------------------------------------

/// Advantage as the explicit discounted sum of TD errors up to the end of
/// the episode or the trajectory.
fn direct_gae(r: &[f64], v: &[f64], done: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if done[t] {
                0.0
            } else if t + 1 < n {
                v[t + 1]
            } else {
                last
            };
            r[t] + gamma * next - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for (l, k) in (t..n).enumerate() {
                sum += (gamma * lambda).powi(l as i32) * delta[k];
                if done[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn ppo_machinery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = random_vec(5, &mut rng);
        let v = random_vec(5, &mut rng);
        let done: Vec<bool> = (0..5).map(|_| rng.gen_bool(0.3)).collect();
        let last = rng.gen_range(-1.0..1.0);
        let (gamma, lambda) = (rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0));
        let (adv, ret) = compute_gae(&r, &v, &done, last, gamma, lambda);
        let oracle = direct_gae(&r, &v, &done, last, gamma, lambda);
        for t in 0..5 {
            worst = worst.max((adv[t] - oracle[t]).abs()).max((ret[t] - oracle[t] - v[t]).abs());
        }
    }
    let mut probs = Vec::new();
    for seed in 0..3 {
        let mut env = BanditEnv::new(2);
        let config = PpoConfig {
            seed,
            ..PpoConfig::default()
        };
        let model = ppo_train_env(&mut env, &config, 20_000).unwrap();
        let p = [true, false]
            .iter()
            .map(|&good| model.net.policy_value(&model.params, &env.state_for(good)).unwrap().0[BanditEnv::rewarding_action(good)])
            .fold(1.0, f64::min);
        probs.push(p);
    }
    Outcome::check(
        worst <= 1e-10 && probs.iter().all(|&p| p > 0.9),
        format!(
            "GAE max error {worst:.1e}; bandit min P(rewarding) per seed {}",
            probs.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn rl_end_to_end() -> Outcome {
    let data = generate(&SyntheticSpec {
        questions: 30,
        dim: 100,
        seed: 0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let ids: Vec<String> = data.questions.iter().map(|q| q.id.clone()).collect();
    let (train_ids, test_ids) = split_ratio(&ids, 0).unwrap();
    let pick = |set: &[String]| -> Vec<Question> {
        data.questions.iter().filter(|q| set.contains(&q.id)).cloned().collect()
    };
    let (train_q, test_q) = (pick(&train_ids), pick(&test_ids));
    let config = PpoConfig {
        total_timesteps: 50_000,
        ..PpoConfig::default()
    };
    let outcome = rl_train(&train_q, &test_q, &data.table, &config).unwrap();
    let baseline = mean(test_q.iter().map(|q| {
        let pool = build_candidates(q, DEFAULT_CANDIDATE_CAP);
        score_summary(q, &pool, &firstn(q, &pool)).unwrap()
    }));
    Outcome::check(
        outcome.best_score >= baseline,
        format!(
            "{}/{} split: best test F1 {:.3} at step {}, firstn {baseline:.3}",
            train_q.len(),
            test_q.len(),
            outcome.best_score,
            outcome.best_timestep
        ),
    )
}

// Splits and determinism ---------------------------------------------------

fn split_arithmetic() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, want) in [(3243, (2702, 541)), (2747, (2289, 458))] {
        let ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        let (train, test) = split_ratio(&ids, 11).unwrap();
        ok &= split_sizes(n) == want && (train.len(), test.len()) == want;
        parts.push(format!("{n} -> {}/{}", train.len(), test.len()));
    }
    Outcome::check(ok, parts.join(", "))
}

fn determinism() -> Outcome {
    let (corpus, data) = labeled(SyntheticSpec {
        questions: 24,
        dim: 8,
        seed: 5,
        ..SyntheticSpec::default()
    });
    let questions: Vec<Question> = corpus.iter().map(|lq| lq.question.clone()).collect();
    let store = contextual_store(&questions, &data.table, false, DEFAULT_CANDIDATE_CAP).unwrap();
    let run = |threads: usize| -> Vec<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut out = Vec::new();
            for (variant, source) in [
                (Variant::Nnc, &data.table as &dyn EmbeddingSource),
                (Variant::ContextualLstm, &store),
            ] {
                let mut config = ScorerConfig::defaults(variant, 9);
                config.epochs = 2;
                config.batch_size = 32;
                config.hidden_dim = 4;
                let (model, log) = train(&corpus, source, &config).unwrap();
                let mut bytes = Vec::new();
                model.save(&mut bytes).unwrap();
                out.push(bytes);
                out.push(serde_json::to_vec(&log.iter().map(|l| l.mean_loss).collect::<Vec<_>>()).unwrap());
                let report = cross_validate(&Method::Scorer { config, source }, &corpus, 3, 4).unwrap();
                out.push(serde_json::to_vec(&report).unwrap());
            }
            out.push(serde_json::to_vec(&cross_validate(&Method::Random, &corpus, 4, 1).unwrap()).unwrap());
            let config = PpoConfig {
                total_timesteps: 800,
                horizon: 200,
                eval_interval: 400,
                hidden_dim: 8,
                seed: 3,
                ..PpoConfig::default()
            };
            let outcome = rl_train(&questions[..20], &questions[20..], &data.table, &config).unwrap();
            let mut bytes = Vec::new();
            outcome.best.save(&config, &mut bytes).unwrap();
            out.push(bytes);
            out.push(serde_json::to_vec(&outcome.curve).unwrap());
            out
        })
    };
    let (a, b, c) = (run(1), run(1), run(4));
    Outcome::check(
        a == b && a == c,
        format!("{} serialized outputs identical across reruns and thread counts", a.len()),
    )
}

// Runner -------------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let mut failed = Vec::new();
    let mut report = |name: &str, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let elapsed = t.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let pass = outcome.pass && in_time;
        let budget_note = budget.map(|b| format!(", budget {}s", b.as_secs())).unwrap_or_default();
        println!(
            "{} {name}: {} [{:.1}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
        if !pass && (outcome.blocking || !in_time) {
            failed.push(name.to_string());
        }
    };
    let secs = |s| Some(Duration::from_secs(s));
    report("rouge oracle equivalence", secs(10), &mut rouge_oracle);
    report("gradient soundness", secs(120), &mut gradient_soundness);
    report("labeling contract", secs(30), &mut labeling_contract);
    report("selection contract", None, &mut selection_contract);
    let mut runs = Vec::new();
    let t = Instant::now();
    runs.extend(synthetic_runs(5));
    println!("     (synthetic runs for the next two criteria, 5 seeds: {:.1}s)", t.elapsed().as_secs_f64());
    report("desk-scale learning signal", None, &mut || learning_signal(&runs));
    report("nnc > nnr direction", None, &mut || nnc_vs_nnr(&runs));
    report("ppo machinery", secs(300), &mut ppo_machinery);
    report("rl end-to-end", secs(900), &mut rl_end_to_end);
    report("split arithmetic", secs(1), &mut split_arithmetic);
    report("determinism", None, &mut determinism);
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if !failed.is_empty() {
        eprintln!("blocking failures: {}", failed.join(", "));
        std::process::exit(1);
    }
}
