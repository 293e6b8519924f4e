//! Token embeddings from a word2vec table or a precomputed contextual
//! store, and their reduction to sentence vectors.
//!
//! The contextual store file layout is documented in
//! `docs/contextual-embedding-format.md`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::neural::Tensor;

pub const DEFAULT_EMBEDDING_DIM: usize = 100;

/// Key of a contextual entry within one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Question,
    /// 1-based candidate position.
    Candidate(usize),
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Question => f.write_str("question"),
            Slot::Candidate(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for Slot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "question" {
            return Ok(Slot::Question);
        }
        match s.parse::<usize>() {
            Ok(p) if p >= 1 => Ok(Slot::Candidate(p)),
            _ => Err(Error::Validation(format!("invalid slot {s:?}"))),
        }
    }
}

/// Padded token-embedding matrix with a real-token mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    /// `L × dim`; padded rows are zero.
    pub rows: Tensor,
    /// 1 = real token, 0 = padding.
    pub mask: Vec<u8>,
}

impl TokenMatrix {
    pub fn zeros(len: usize, dim: usize) -> Self {
        TokenMatrix {
            rows: Tensor::zeros(&[len, dim]),
            mask: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Number of leading rows up to and including the last real token.
    pub fn effective_len(&self) -> usize {
        self.mask.iter().rposition(|&m| m == 1).map_or(0, |i| i + 1)
    }

    /// Build from real rows, truncated to `max_len` and zero-padded.
    pub fn from_real_rows<'a>(real: impl IntoIterator<Item = &'a [f64]>, dim: usize, max_len: usize) -> Self {
        let mut m = TokenMatrix::zeros(max_len, dim);
        for (i, row) in real.into_iter().take(max_len).enumerate() {
            m.rows.row_mut(i).copy_from_slice(row);
            m.mask[i] = 1;
        }
        m
    }
}

/// Mask-weighted mean of the real rows; all-padding gives the zero vector.
pub fn mean_reduce(m: &TokenMatrix) -> Vec<f64> {
    let dim = m.dim();
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for (i, &mask) in m.mask.iter().enumerate() {
        if mask == 1 {
            n += 1;
            for (a, v) in acc.iter_mut().zip(m.rows.row(i)) {
                *a += v;
            }
        }
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    acc
}

/// Static word-vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    values: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            index: HashMap::new(),
            values: Vec::new(),
        })
    }

    /// Insert a vector; returns false (and keeps the old one) for duplicates.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape("embedding insert", &[self.dim], &[vector.len()]));
        }
        if self.index.contains_key(token) {
            return Ok(false);
        }
        self.index.insert(token.to_string(), self.index.len());
        self.values.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = vec![""; self.index.len()];
        for (t, &i) in &self.index {
            out[i] = t;
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for token in self.tokens() {
            write!(out, "{token}")?;
            for v in self.get(token).unwrap_or_default() {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Read the word2vec text format: a `V D` header, then one token and `D`
/// reals per line.
pub fn load_word_vectors<R: BufRead>(raw: R) -> Result<EmbeddingTable> {
    let mut lines = raw.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "missing header"))??;
    let mut parts = header.split_whitespace();
    let (vocab, dim) = match (
        parts.next().and_then(|v| v.parse::<usize>().ok()),
        parts.next().and_then(|d| d.parse::<usize>().ok()),
    ) {
        (Some(v), Some(d)) if d > 0 => (v, d),
        _ => return Err(Error::parse("line 1", format!("bad header {header:?}"))),
    };

    let mut table = EmbeddingTable::new(dim)?;
    let mut seen = 0usize;
    let mut vector = Vec::with_capacity(dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        vector.clear();
        for f in fields {
            let v = f
                .parse::<f32>()
                .map_err(|_| Error::parse(format!("line {lineno}"), format!("bad number {f:?}")))?;
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("expected {dim} values, found {}", vector.len()),
            ));
        }
        if !table.insert(token, &vector)? {
            log::warn!("line {lineno}: duplicate token {token:?}, keeping first vector");
        }
        seen += 1;
    }
    if seen != vocab {
        return Err(Error::parse(
            "header",
            format!("header announces {vocab} vectors, file has {seen}"),
        ));
    }
    Ok(table)
}

/// Row `i` = vector for `tokens[i]` (zero when out of vocabulary), truncated
/// to `max_len` and zero-padded.
pub fn embed_tokens<S: AsRef<str>>(table: &EmbeddingTable, tokens: &[S], max_len: usize) -> TokenMatrix {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut m = TokenMatrix::zeros(max_len, table.dim);
    for (i, tok) in tokens.iter().take(max_len).enumerate() {
        if let Some(v) = table.get(tok.as_ref()) {
            for (dst, &src) in m.rows.row_mut(i).iter_mut().zip(v) {
                *dst = f64::from(src);
            }
        }
        m.mask[i] = 1;
    }
    m
}

const CONTEXTUAL_MAGIC: &str = "QFSUM-CTX 1";

/// Precomputed contextual embeddings keyed by (question id, slot).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextualStore {
    dim: usize,
    model: String,
    entries: BTreeMap<(String, Slot), (usize, Vec<f32>)>,
}

impl ContextualStore {
    pub fn new(dim: usize, model: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        Ok(ContextualStore {
            dim,
            model: model.into(),
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when every entry holds a single row.
    pub fn is_sentence_level(&self) -> bool {
        self.entries.values().all(|(l, _)| *l == 1)
    }

    pub fn insert(&mut self, question_id: &str, slot: Slot, rows: usize, data: Vec<f32>) -> Result<()> {
        if rows == 0 {
            return Err(Error::Validation(format!(
                "entry ({question_id}, {slot}) has no rows"
            )));
        }
        if data.len() != rows * self.dim {
            return Err(Error::Validation(format!(
                "entry ({question_id}, {slot}) has {} values, expected {rows}×{}",
                data.len(),
                self.dim
            )));
        }
        if question_id.contains(['\t', '\n']) {
            return Err(Error::Validation(format!(
                "question id {question_id:?} contains a tab or newline"
            )));
        }
        self.entries
            .insert((question_id.to_string(), slot), (rows, data));
        Ok(())
    }

    pub fn contains(&self, question_id: &str, slot: Slot) -> bool {
        self.entries.contains_key(&(question_id.to_string(), slot))
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, Slot)> {
        self.entries.keys().map(|(q, s)| (q.as_str(), *s))
    }

    /// Rows of an entry as `(L, data)`.
    pub fn get(&self, question_id: &str, slot: Slot) -> Result<(usize, &[f32])> {
        self.entries
            .get(&(question_id.to_string(), slot))
            .map(|(l, d)| (*l, d.as_slice()))
            .ok_or_else(|| Error::MissingEmbedding {
                question_id: question_id.to_string(),
                slot: slot.to_string(),
            })
    }

    /// Serialize: text header with the record index, then the raw payload.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::new();
        header.push_str(CONTEXTUAL_MAGIC);
        header.push('\n');
        header.push_str(&format!("model\t{}\n", self.model.replace(['\t', '\n'], " ")));
        header.push_str(&format!("records\t{}\n", self.entries.len()));
        let mut offset = 0usize;
        for ((qid, slot), (rows, _)) in &self.entries {
            header.push_str(&format!("{qid}\t{slot}\t{rows}\t{}\t{offset}\n", self.dim));
            offset += rows * self.dim * 4;
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        for (_, data) in self.entries.values() {
            for v in data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Parse a contextual-embedding file.
pub fn load_contextual<R: Read>(mut raw: R) -> Result<ContextualStore> {
    let mut bytes = Vec::new();
    raw.read_to_end(&mut bytes)?;
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::parse("header", "unterminated header"))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::parse("header", "header is not UTF-8"))?;
    let payload = &bytes[end + 2..];

    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, magic)) if magic == CONTEXTUAL_MAGIC => {}
        _ => return Err(Error::parse("line 1", "not a contextual embedding file")),
    }
    let mut model = String::new();
    let mut announced: Option<usize> = None;
    let mut records = Vec::new();
    for (i, line) in lines {
        let loc = format!("line {}", i + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["model", m] => model = m.to_string(),
            ["records", n] => {
                announced = Some(n.parse().map_err(|_| Error::parse(&loc, "bad record count"))?)
            }
            [qid, slot, rows, dim, offset] => {
                let parse = |s: &str, what: &str| -> Result<usize> {
                    s.parse()
                        .map_err(|_| Error::parse(&loc, format!("bad {what} {s:?}")))
                };
                records.push((
                    qid.to_string(),
                    slot.parse::<Slot>()?,
                    parse(rows, "row count")?,
                    parse(dim, "dim")?,
                    parse(offset, "offset")?,
                ));
            }
            _ => return Err(Error::parse(loc, format!("unrecognised header line {line:?}"))),
        }
    }
    if let Some(n) = announced {
        if n != records.len() {
            return Err(Error::parse(
                "header",
                format!("{n} records announced, {} listed", records.len()),
            ));
        }
    }

    let dim = match records.first() {
        Some(r) => r.3,
        None => return ContextualStore::new(1, model),
    };
    let mut store = ContextualStore::new(dim, model)?;
    for (qid, slot, rows, rdim, offset) in records {
        if rdim != dim {
            return Err(Error::Validation(format!(
                "record ({qid}, {slot}) has dim {rdim}, file dim is {dim}"
            )));
        }
        let len = rows * dim * 4;
        let chunk = payload.get(offset..offset + len).ok_or_else(|| {
            Error::parse("payload", format!("record ({qid}, {slot}) exceeds payload"))
        })?;
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        store.insert(&qid, slot, rows, data)?;
    }
    Ok(store)
}

/// Provenance of token vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    WordVectors,
    Contextual { sentence_level: bool },
}

/// Anything that can produce a token matrix for a question slot.
pub trait EmbeddingSource: Sync {
    fn dim(&self) -> usize;

    fn kind(&self) -> SourceKind;

    fn token_matrix(&self, question_id: &str, slot: Slot, tokens: &[String], max_len: usize) -> Result<TokenMatrix>;

    /// Sum of the real rows and their count, without truncation.
    fn row_sum(&self, question_id: &str, slot: Slot, tokens: &[String]) -> Result<(Vec<f64>, usize)>;
}

impl EmbeddingSource for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> SourceKind {
        SourceKind::WordVectors
    }

    fn token_matrix(&self, _question_id: &str, _slot: Slot, tokens: &[String], max_len: usize) -> Result<TokenMatrix> {
        Ok(embed_tokens(self, tokens, max_len))
    }

    fn row_sum(&self, _question_id: &str, _slot: Slot, tokens: &[String]) -> Result<(Vec<f64>, usize)> {
        let mut acc = vec![0.0; self.dim];
        for t in tokens {
            if let Some(v) = self.get(t) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += f64::from(x);
                }
            }
        }
        Ok((acc, tokens.len()))
    }
}

impl EmbeddingSource for ContextualStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> SourceKind {
        SourceKind::Contextual {
            sentence_level: self.is_sentence_level(),
        }
    }

    fn token_matrix(&self, question_id: &str, slot: Slot, _tokens: &[String], max_len: usize) -> Result<TokenMatrix> {
        let (rows, data) = self.get(question_id, slot)?;
        let mut m = TokenMatrix::zeros(max_len, self.dim);
        for i in 0..rows.min(max_len) {
            for (dst, &src) in m
                .rows
                .row_mut(i)
                .iter_mut()
                .zip(&data[i * self.dim..(i + 1) * self.dim])
            {
                *dst = f64::from(src);
            }
            m.mask[i] = 1;
        }
        Ok(m)
    }

    fn row_sum(&self, question_id: &str, slot: Slot, _tokens: &[String]) -> Result<(Vec<f64>, usize)> {
        let (rows, data) = self.get(question_id, slot)?;
        let mut acc = vec![0.0; self.dim];
        for row in data.chunks_exact(self.dim) {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += f64::from(x);
            }
        }
        Ok((acc, rows))
    }
}
