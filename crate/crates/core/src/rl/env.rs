//! Episodic environments. In the summarisation environment an episode walks
//! a question's candidate pool once; action 1 appends the current candidate
//! to the summary. The only reward is the ROUGE-SU4 F1 of the finished
//! summary, paid on the last step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, CandidateSentence, Question};
use crate::embeddings::{EmbeddingSource, Slot};
use crate::error::{Error, Result};
use crate::rouge::rouge_su4_multi;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn state_dim(&self) -> usize;

    /// Start a new episode and return its first state.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;

    fn step(&mut self, action: usize) -> Result<Step>;
}

/// Number of state entries for embeddings of width `dim`.
pub fn state_dim_for(dim: usize) -> usize {
    5 * dim + 1
}

/// One question's episode. Stores per-candidate row sums so every state is
/// O(dim) to assemble.
#[derive(Debug, Clone)]
pub struct SummaryEnv {
    question_id: String,
    dim: usize,
    references: Vec<Vec<String>>,
    pool: Vec<CandidateSentence>,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    question_mean: Vec<f64>,
    document_mean: Vec<f64>,
    cursor: usize,
    selected: Vec<usize>,
    summary_sum: Vec<f64>,
    summary_count: usize,
    done: bool,
}

fn mean_of(sum: &[f64], count: usize) -> Vec<f64> {
    if count == 0 {
        vec![0.0; sum.len()]
    } else {
        sum.iter().map(|x| x / count as f64).collect()
    }
}

impl SummaryEnv {
    pub fn new(question: &Question, pool: Vec<CandidateSentence>, source: &dyn EmbeddingSource) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Environment(format!("question {} has no candidates", question.id)));
        }
        let dim = source.dim();
        let (q_sum, q_count) = source.row_sum(&question.id, Slot::Question, &tokenize(&question.body))?;
        let mut sums = Vec::with_capacity(pool.len());
        let mut counts = Vec::with_capacity(pool.len());
        for c in &pool {
            let (s, n) = source.row_sum(&question.id, Slot::Candidate(c.position), &c.tokens)?;
            sums.push(s);
            counts.push(n);
        }
        let mut doc = vec![0.0; dim];
        for s in &sums {
            doc.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        let document_mean = mean_of(&doc, counts.iter().sum());
        let mut env = SummaryEnv {
            question_id: question.id.clone(),
            dim,
            references: question.reference_tokens(),
            pool,
            sums,
            counts,
            question_mean: mean_of(&q_sum, q_count),
            document_mean,
            cursor: 0,
            selected: Vec::new(),
            summary_sum: vec![0.0; dim],
            summary_count: 0,
            done: false,
        };
        env.restart();
        Ok(env)
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn pool(&self) -> &[CandidateSentence] {
        &self.pool
    }

    /// Positions appended so far, in episode order.
    pub fn selected(&self) -> Vec<usize> {
        self.selected.iter().map(|&i| self.pool[i].position).collect()
    }

    pub fn summary_tokens(&self) -> Vec<&str> {
        self.selected
            .iter()
            .flat_map(|&i| self.pool[i].tokens.iter().map(String::as_str))
            .collect()
    }

    pub fn restart(&mut self) -> Vec<f64> {
        self.cursor = 0;
        self.selected.clear();
        self.summary_sum.iter_mut().for_each(|x| *x = 0.0);
        self.summary_count = 0;
        self.done = false;
        self.state()
    }

    fn state(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(state_dim_for(d));
        if self.cursor < self.pool.len() {
            out.extend(mean_of(&self.sums[self.cursor], self.counts[self.cursor]));
        } else {
            out.extend(std::iter::repeat_n(0.0, d));
        }
        out.extend_from_slice(&self.question_mean);
        out.extend(mean_of(&self.summary_sum, self.summary_count));
        let mut after = vec![0.0; d];
        let mut after_count = 0;
        for i in self.cursor + 1..self.pool.len() {
            after.iter_mut().zip(&self.sums[i]).for_each(|(a, b)| *a += b);
            after_count += self.counts[i];
        }
        out.extend(mean_of(&after, after_count));
        out.extend_from_slice(&self.document_mean);
        out.push(self.selected.len() as f64);
        out
    }

    fn terminal_reward(&self) -> Result<f64> {
        if self.selected.is_empty() {
            return Ok(0.0);
        }
        Ok(rouge_su4_multi(&self.summary_tokens(), &self.references)?.f1)
    }

    pub fn advance(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::State(format!(
                "episode for question {} is already finished",
                self.question_id
            )));
        }
        if action > 1 {
            return Err(Error::State(format!("invalid action {action}")));
        }
        if action == 1 {
            let i = self.cursor;
            self.selected.push(i);
            self.summary_sum
                .iter_mut()
                .zip(&self.sums[i])
                .for_each(|(a, b)| *a += b);
            self.summary_count += self.counts[i];
        }
        self.cursor += 1;
        self.done = self.cursor == self.pool.len();
        let reward = if self.done { self.terminal_reward()? } else { 0.0 };
        Ok(Step {
            state: self.state(),
            reward,
            done: self.done,
        })
    }
}

/// Cycles episodes over a set of questions, reshuffling after each pass.
pub struct QuestionCycle {
    envs: Vec<SummaryEnv>,
    order: Vec<usize>,
    next: usize,
    current: usize,
}

impl QuestionCycle {
    pub fn new(envs: Vec<SummaryEnv>) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::Validation("no training questions with candidates".into()));
        }
        let order = (0..envs.len()).collect();
        Ok(QuestionCycle {
            next: envs.len(),
            envs,
            order,
            current: 0,
        })
    }
}

impl Environment for QuestionCycle {
    fn state_dim(&self) -> usize {
        state_dim_for(self.envs[0].dim)
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if self.next == self.order.len() {
            use rand::seq::SliceRandom;
            self.order.shuffle(rng);
            self.next = 0;
        }
        self.current = self.order[self.next];
        self.next += 1;
        Ok(self.envs[self.current].restart())
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        self.envs[self.current].advance(action)
    }
}

/// One-step task with two states. In the "good" state action 1 pays 1; in
/// the other state action 0 pays 1. The state is a one-hot flag padded
/// with zeros to `dim`.
pub struct BanditEnv {
    dim: usize,
    good: bool,
    done: bool,
}

impl BanditEnv {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "bandit state needs at least two entries");
        BanditEnv {
            dim,
            good: false,
            done: true,
        }
    }

    pub fn state_for(&self, good: bool) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        s[usize::from(!good)] = 1.0;
        s
    }

    pub fn rewarding_action(good: bool) -> usize {
        usize::from(good)
    }
}

impl Environment for BanditEnv {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.good = rng.gen_bool(0.5);
        self.done = false;
        Ok(self.state_for(self.good))
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::State("bandit episode already finished".into()));
        }
        self.done = true;
        let reward = if action == Self::rewarding_action(self.good) { 1.0 } else { 0.0 };
        Ok(Step {
            state: vec![0.0; self.dim],
            reward,
            done: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_candidates, QuestionType, SourceSnippet};
    use crate::embeddings::EmbeddingTable;

    fn question(text: &str, ideal: &str) -> Question {
        Question {
            id: "q".into(),
            qtype: QuestionType::Summary,
            body: "alpha beta".into(),
            snippets: vec![SourceSnippet {
                document_id: "d".into(),
                text: text.into(),
            }],
            ideal_answers: vec![ideal.into()],
        }
    }

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("alpha", &[1.0, 0.0]).unwrap();
        t.insert("beta", &[0.0, 1.0]).unwrap();
        t.insert("gamma", &[1.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn reset_state_layout() {
        let q = question("Alpha beta. Gamma gamma. Beta.", "alpha beta");
        let pool = build_candidates(&q, 50);
        let env = SummaryEnv::new(&q, pool, &table()).unwrap();
        let mut env = env;
        let s = env.restart();
        assert_eq!(s.len(), state_dim_for(2));
        assert_eq!(&s[0..2], &[0.5, 0.5]);
        assert_eq!(&s[2..4], &[0.5, 0.5]);
        assert_eq!(&s[4..6], &[0.0, 0.0]);
        assert_eq!(&s[6..8], &[2.0 / 3.0, 1.0]);
        assert_eq!(&s[8..10], &[0.6, 0.8]);
        assert_eq!(s[10], 0.0);
    }

    #[test]
    fn rewards_and_termination() {
        let q = question("Alpha beta. Gamma gamma.", "Alpha beta. Gamma gamma.");
        let pool = build_candidates(&q, 50);
        let mut env = SummaryEnv::new(&q, pool, &table()).unwrap();
        let first = env.advance(1).unwrap();
        assert_eq!((first.reward, first.done), (0.0, false));
        assert_eq!(first.state[10], 1.0);
        let last = env.advance(1).unwrap();
        assert_eq!((last.reward, last.done), (1.0, true));
        assert!(matches!(env.advance(0), Err(Error::State(_))));

        env.restart();
        env.advance(0).unwrap();
        assert_eq!(env.advance(0).unwrap().reward, 0.0);
    }

    #[test]
    fn empty_pool_is_an_environment_error() {
        let q = question("", "x");
        assert!(matches!(
            SummaryEnv::new(&q, vec![], &table()),
            Err(Error::Environment(_))
        ));
    }
}
