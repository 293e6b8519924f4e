//! ROUGE-SU4: unigrams plus skip-bigrams with at most four intervening
//! tokens, pooled into a single clipped multiset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SU4_MAX_SKIP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit<'a> {
    Unigram(&'a str),
    SkipBigram(&'a str, &'a str),
}

/// Multiset of units, as occurrence counts.
pub type UnitBag<'a> = HashMap<Unit<'a>, usize>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Raw counts behind a [`RougeScore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub matches: usize,
    pub candidate_units: usize,
    pub reference_units: usize,
}

impl MatchCounts {
    pub fn score(&self) -> RougeScore {
        if self.candidate_units == 0 || self.reference_units == 0 {
            return RougeScore::default();
        }
        let precision = self.matches as f64 / self.candidate_units as f64;
        let recall = self.matches as f64 / self.reference_units as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

/// Number of units `skip_units` produces for a sequence of `n` tokens.
pub fn unit_count(n: usize, max_skip: usize) -> usize {
    let window = max_skip + 1;
    (0..n).map(|i| 1 + window.min(n - 1 - i)).sum()
}

pub fn skip_units<S: AsRef<str>>(tokens: &[S], max_skip: usize) -> UnitBag<'_> {
    let window = max_skip + 1;
    let mut bag = UnitBag::with_capacity(tokens.len() * (window + 1));
    for (i, first) in tokens.iter().enumerate() {
        let first = first.as_ref();
        *bag.entry(Unit::Unigram(first)).or_default() += 1;
        for second in tokens.iter().skip(i + 1).take(window) {
            *bag.entry(Unit::SkipBigram(first, second.as_ref()))
                .or_default() += 1;
        }
    }
    bag
}

/// Clipped multiset intersection size.
fn intersection(a: &UnitBag<'_>, b: &UnitBag<'_>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(unit, &n)| large.get(unit).map_or(0, |&m| n.min(m)))
        .sum()
}

pub fn su4_counts<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> MatchCounts {
    let cand = skip_units(candidate, SU4_MAX_SKIP);
    let refr = skip_units(reference, SU4_MAX_SKIP);
    MatchCounts {
        matches: intersection(&cand, &refr),
        candidate_units: cand.values().sum(),
        reference_units: refr.values().sum(),
    }
}

pub fn rouge_su4<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> RougeScore {
    su4_counts(candidate, reference).score()
}

/// Best single-reference score by F1; ties go to the earliest reference.
pub fn rouge_su4_multi<S: AsRef<str>, T: AsRef<str>>(
    candidate: &[S],
    references: &[Vec<T>],
) -> Result<RougeScore> {
    if references.is_empty() {
        return Err(Error::Validation(
            "ROUGE needs at least one reference".into(),
        ));
    }
    let cand = skip_units(candidate, SU4_MAX_SKIP);
    let cand_total: usize = cand.values().sum();
    let mut best: Option<RougeScore> = None;
    for reference in references {
        let refr = skip_units(reference, SU4_MAX_SKIP);
        let score = MatchCounts {
            matches: intersection(&cand, &refr),
            candidate_units: cand_total,
            reference_units: refr.values().sum(),
        }
        .score();
        if best.is_none_or(|b| score.f1 > b.f1) {
            best = Some(score);
        }
    }
    Ok(best.unwrap_or_default())
}
