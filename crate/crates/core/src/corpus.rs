//! BioASQ question files, sentence splitting, tokenization and the
//! per-question candidate pool.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Default cap on the number of candidate sentences per question.
pub const DEFAULT_CANDIDATE_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Summary,
    Factoid,
    Yesno,
    List,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Summary,
        QuestionType::Factoid,
        QuestionType::Yesno,
        QuestionType::List,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Summary => "summary",
            QuestionType::Factoid => "factoid",
            QuestionType::Yesno => "yesno",
            QuestionType::List => "list",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summary" => Ok(QuestionType::Summary),
            "factoid" => Ok(QuestionType::Factoid),
            "yesno" => Ok(QuestionType::Yesno),
            "list" => Ok(QuestionType::List),
            other => Err(Error::Validation(format!("unknown question type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSnippet {
    pub document_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub qtype: QuestionType,
    pub body: String,
    pub snippets: Vec<SourceSnippet>,
    pub ideal_answers: Vec<String>,
}

impl Question {
    /// Tokenized ideal answers, in list order.
    pub fn reference_tokens(&self) -> Vec<Vec<String>> {
        self.ideal_answers.iter().map(|a| tokenize(a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub text: String,
    pub tokens: Vec<String>,
    /// 1-based index in the question's candidate pool.
    pub position: usize,
    pub document_id: String,
}

/// Parse a BioASQ-style JSON document (`{"questions": [...]}`).
///
/// Snippets whose text is blank are dropped with a warning. A question
/// without an `ideal_answer` field parses with an empty answer list.
pub fn parse_bioasq<R: Read>(mut raw: R) -> Result<Vec<Question>> {
    let mut buf = String::new();
    raw.read_to_string(&mut buf)?;
    let doc: Value =
        serde_json::from_str(&buf).map_err(|e| Error::parse("document", e.to_string()))?;
    let entries = doc
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse("document", "missing top-level \"questions\" array"))?;

    entries
        .iter()
        .enumerate()
        .map(|(index, entry)| parse_entry(index, entry))
        .collect()
}

fn parse_entry(index: usize, entry: &Value) -> Result<Question> {
    let loc = || format!("questions[{index}]");
    let obj = entry
        .as_object()
        .ok_or_else(|| Error::parse(loc(), "entry is not an object"))?;

    let body = obj
        .get("body")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(loc(), "missing string field \"body\""))?
        .to_string();
    let qtype_raw = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(loc(), "missing string field \"type\""))?;
    let qtype: QuestionType = qtype_raw.parse().map_err(|_| {
        Error::Validation(format!("{}: unknown question type {qtype_raw:?}", loc()))
    })?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        None => format!("q{index}"),
        Some(_) => return Err(Error::parse(loc(), "field \"id\" must be a string")),
    };

    let ideal_answers = match obj.get("ideal_answer") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(loc(), "ideal_answer items must be strings"))
            })
            .collect::<Result<_>>()?,
        Some(_) => {
            return Err(Error::parse(
                loc(),
                "ideal_answer must be a string or a list of strings",
            ))
        }
    };

    let raw_snippets = obj
        .get("snippets")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(loc(), "missing array field \"snippets\""))?;
    let mut snippets = Vec::with_capacity(raw_snippets.len());
    for (si, s) in raw_snippets.iter().enumerate() {
        let text = s
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(format!("{}.snippets[{si}]", loc()), "missing \"text\""))?;
        if text.trim().is_empty() {
            log::warn!("{}.snippets[{si}]: blank snippet dropped", loc());
            continue;
        }
        let document_id = s
            .get("document")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        snippets.push(SourceSnippet {
            document_id,
            text: text.to_string(),
        });
    }

    Ok(Question {
        id,
        qtype,
        body,
        snippets,
        ideal_answers,
    })
}

/// Write questions back out in BioASQ layout.
pub fn write_bioasq<W: Write>(questions: &[Question], out: W) -> Result<()> {
    let entries: Vec<Value> = questions
        .iter()
        .map(|q| {
            serde_json::json!({
                "id": q.id,
                "type": q.qtype.as_str(),
                "body": q.body,
                "ideal_answer": q.ideal_answers,
                "snippets": q.snippets.iter().map(|s| serde_json::json!({
                    "document": s.document_id,
                    "text": s.text,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::to_writer_pretty(out, &serde_json::json!({ "questions": entries }))?;
    Ok(())
}

/// Normalized corpus dump: one JSON question record per line.
pub fn write_corpus_dump<W: Write>(questions: &[Question], mut out: W) -> Result<()> {
    for q in questions {
        serde_json::to_writer(&mut out, q)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_dump<R: BufRead>(input: R) -> Result<Vec<Question>> {
    let mut questions = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("line {}", lineno + 1), e.to_string()))?;
        questions.push(q);
    }
    Ok(questions)
}

/// Lowercase, then split on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Rule-based splitter: a sentence ends at `.`, `?` or `!` when the next
/// non-whitespace character, after at least one whitespace character, is an
/// uppercase letter or a digit.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            let has_gap = j > i + 1;
            let opens_sentence = chars
                .get(j)
                .map(|&(_, n)| n.is_uppercase() || n.is_ascii_digit())
                .unwrap_or(false);
            if has_gap && opens_sentence {
                let end = byte + c.len_utf8();
                push_trimmed(&mut sentences, &text[start..end]);
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Candidate pool: snippet order, then sentence order, duplicates kept,
/// truncated to `cap`.
pub fn build_candidates(q: &Question, cap: usize) -> Vec<CandidateSentence> {
    assert!(cap >= 1, "candidate cap must be at least 1");
    q.snippets
        .iter()
        .flat_map(|snippet| {
            split_sentences(&snippet.text)
                .into_iter()
                .map(move |text| (text, snippet.document_id.clone()))
        })
        .take(cap)
        .enumerate()
        .map(|(i, (text, document_id))| CandidateSentence {
            tokens: tokenize(&text),
            text,
            position: i + 1,
            document_id,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question_with(snippets: &[&str]) -> Question {
        Question {
            id: "q".into(),
            qtype: QuestionType::Summary,
            body: "What?".into(),
            snippets: snippets
                .iter()
                .enumerate()
                .map(|(i, t)| SourceSnippet {
                    document_id: format!("d{i}"),
                    text: t.to_string(),
                })
                .collect(),
            ideal_answers: vec!["x".into()],
        }
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The BRCA1 gene."), vec!["the", "brca1", "gene"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("IL-2/IL-4"), vec!["il", "2", "il", "4"]);
    }

    #[test]
    fn split_basic_cases() {
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("A single sentence."), vec!["A single sentence."]);
        assert_eq!(
            split_sentences("First. Second? Third."),
            vec!["First.", "Second?", "Third."]
        );
    }

    #[test]
    fn split_protects_decimals_and_lowercase_continuations() {
        assert_eq!(split_sentences("Give 3.5 mg daily. Then stop."), vec![
            "Give 3.5 mg daily.",
            "Then stop."
        ]);
        assert_eq!(split_sentences("e.g. this one stays whole."), vec![
            "e.g. this one stays whole."
        ]);
        assert_eq!(split_sentences("Dose was 2. 5 patients died."), vec![
            "Dose was 2.",
            "5 patients died."
        ]);
    }

    #[test]
    fn candidates_counting_and_cap() {
        let q = question_with(&["A one. B two. C three.", "D four. E five. F six."]);
        let pool = build_candidates(&q, DEFAULT_CANDIDATE_CAP);
        assert_eq!(pool.len(), 6);
        assert_eq!(
            pool.iter().map(|c| c.position).collect::<Vec<_>>(),
            (1..=6).collect::<Vec<_>>()
        );
        assert_eq!(pool[3].document_id, "d1");

        let many: Vec<String> = (0..60).map(|i| format!("Sentence {i}.")).collect();
        let refs: Vec<&str> = many.iter().map(String::as_str).collect();
        assert_eq!(build_candidates(&question_with(&refs), 50).len(), 50);

        let first = build_candidates(&q, 1);
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].text, "A one.");
    }

    #[test]
    fn duplicates_are_kept() {
        let q = question_with(&["Same text.", "Same text."]);
        let pool = build_candidates(&q, 50);
        assert_eq!(pool.len(), 2);
        assert_eq!(pool[1].position, 2);
    }

    #[test]
    fn no_snippets_gives_empty_pool() {
        assert!(build_candidates(&question_with(&[]), 50).is_empty());
    }

    #[test]
    fn parse_wraps_scalar_ideal_answer() {
        let raw = r#"{"questions": [{"id": "a", "body": "B?", "type": "factoid",
            "ideal_answer": "Only one.",
            "snippets": [{"document": "http://x/1", "text": "S one. S two."}]}]}"#;
        let qs = parse_bioasq(raw.as_bytes()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].ideal_answers, vec!["Only one."]);
        assert_eq!(qs[0].qtype, QuestionType::Factoid);
        assert_eq!(qs[0].snippets[0].document_id, "http://x/1");
    }

    #[test]
    fn parse_empty_and_errors() {
        assert!(parse_bioasq(r#"{"questions": []}"#.as_bytes())
            .unwrap()
            .is_empty());

        let bad_type = r#"{"questions": [{"body": "b", "type": "essay", "snippets": []}]}"#;
        assert!(matches!(
            parse_bioasq(bad_type.as_bytes()),
            Err(Error::Validation(_))
        ));

        let missing = r#"{"questions": [{"body": "b", "type": "list", "snippets": []},
                                         {"type": "list", "snippets": []}]}"#;
        match parse_bioasq(missing.as_bytes()) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "questions[1]"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dump_round_trip() {
        let qs = vec![question_with(&["A. B."]), question_with(&[])];
        let mut buf = Vec::new();
        write_corpus_dump(&qs, &mut buf).unwrap();
        assert_eq!(read_corpus_dump(&buf[..]).unwrap(), qs);

        let mut bio = Vec::new();
        write_bioasq(&qs, &mut bio).unwrap();
        assert_eq!(parse_bioasq(&bio[..]).unwrap(), qs);
    }
}
