//! Associative recall: `R` key/value pairs, the separator `??`, then a query
//! key. The answer is the value stored under the query.
//!
//! ```text
//! c9k8j3f1??k  ->  8
//! ```

mod cache;
mod dataset;

use std::fmt;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

pub use cache::{read_cache, write_cache, CacheHeader};
pub use dataset::{
    batch_iter, generate_splits, length_policy, Batch, Batches, DatasetSplit, SplitRole, SplitSizes,
};

/// 26 letters, 10 digits and `?`.
pub const ALPHABET_SIZE: usize = 37;
/// Largest pair count: keys are distinct letters.
pub const MAX_PAIRS: usize = 26;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("pair count R={0} out of range 1..=26")]
    PairCount(usize),
    #[error("unsupported sequence length L={0} (use 9, 30 or 50, or give an explicit pair count)")]
    UnsupportedLength(usize),
    #[error("length L={length} cannot hold R={pairs} pairs (needs at least {needed})")]
    TooShort { length: usize, pairs: usize, needed: usize },
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(char),
    #[error("malformed example: {0}")]
    Malformed(String),
    #[error("{0}")]
    Contract(String),
    #[error("cache line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TaskError {
    /// True for errors caused by bad task settings rather than data or I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            TaskError::PairCount(_) | TaskError::UnsupportedLength(_) | TaskError::TooShort { .. }
        )
    }
}

/// One alphabet symbol, stored as its one-hot index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(u8);

impl Symbol {
    pub const QUERY: Symbol = Symbol(36);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < ALPHABET_SIZE).then_some(Symbol(index as u8))
    }

    pub fn from_char(c: char) -> Result<Self, TaskError> {
        match c {
            'a'..='z' => Ok(Symbol(c as u8 - b'a')),
            '0'..='9' => Ok(Symbol(26 + c as u8 - b'0')),
            '?' => Ok(Symbol::QUERY),
            _ => Err(TaskError::UnknownSymbol(c)),
        }
    }

    pub fn letter(i: usize) -> Self {
        assert!(i < 26);
        Symbol(i as u8)
    }

    pub fn digit(d: usize) -> Self {
        assert!(d < 10);
        Symbol(26 + d as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn to_char(self) -> char {
        match self.0 {
            0..=25 => (b'a' + self.0) as char,
            26..=35 => (b'0' + self.0 - 26) as char,
            _ => '?',
        }
    }

    pub fn is_letter(self) -> bool {
        self.0 < 26
    }

    pub fn is_digit(self) -> bool {
        (26..36).contains(&self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A recall sequence. `tokens` includes `pad` leading `?` symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecallExample {
    pub tokens: Vec<Symbol>,
    pub target: Symbol,
    pub pad: usize,
}

impl RecallExample {
    /// Builds `pad` × `?`, the pairs, `??`, then the query key. The target
    /// is looked up from the pairs.
    pub fn from_pairs(pairs: &[(char, char)], query: char, pad: usize) -> Result<Self, TaskError> {
        let mut tokens = vec![Symbol::QUERY; pad];
        for &(k, v) in pairs {
            tokens.push(Symbol::from_char(k)?);
            tokens.push(Symbol::from_char(v)?);
        }
        tokens.extend([Symbol::QUERY, Symbol::QUERY, Symbol::from_char(query)?]);
        let target = pairs
            .iter()
            .find(|(k, _)| *k == query)
            .map(|&(_, v)| Symbol::from_char(v))
            .ok_or_else(|| TaskError::Malformed(format!("query {query:?} not among the keys")))??;
        let ex = Self { tokens, target, pad };
        ex.check()?;
        Ok(ex)
    }

    /// Parses a token string such as `"c9k8j3f1??k"` with its answer.
    /// Leading `?` symbols before the first key are padding.
    pub fn parse(tokens: &str, target: char) -> Result<Self, TaskError> {
        let tokens = tokens.chars().map(Symbol::from_char).collect::<Result<Vec<_>, _>>()?;
        let pad = tokens.iter().take_while(|s| **s == Symbol::QUERY).count();
        let ex = Self {
            tokens,
            target: Symbol::from_char(target)?,
            pad,
        };
        ex.check()?;
        Ok(ex)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        (self.tokens.len() - self.pad).saturating_sub(3) / 2
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Symbol, Symbol)> + '_ {
        self.tokens[self.pad..self.pad + 2 * self.pair_count()]
            .chunks_exact(2)
            .map(|kv| (kv[0], kv[1]))
    }

    pub fn query(&self) -> Symbol {
        *self.tokens.last().expect("non-empty")
    }

    /// One-hot indices of the tokens.
    pub fn indices(&self) -> Vec<usize> {
        self.tokens.iter().map(|s| s.index()).collect()
    }

    pub fn token_string(&self) -> String {
        self.tokens.iter().map(|s| s.to_char()).collect()
    }

    /// Verifies the layout, key uniqueness and that the target is the value
    /// stored under the query key.
    pub fn check(&self) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::Malformed(format!("{}: {m}", self.token_string())));
        let core = self.tokens.len().saturating_sub(self.pad);
        if core < 5 || core.is_multiple_of(2) {
            return bad(format!("core length {core} is not 2R+3"));
        }
        if self.tokens[..self.pad].iter().any(|s| *s != Symbol::QUERY) {
            return bad("padding must be '?'".into());
        }
        let n = self.tokens.len();
        if self.tokens[n - 3] != Symbol::QUERY || self.tokens[n - 2] != Symbol::QUERY {
            return bad("missing '??' separator".into());
        }
        let mut seen = [false; 26];
        for (k, v) in self.pairs() {
            if !k.is_letter() || !v.is_digit() {
                return bad(format!("pair {k}{v} is not letter+digit"));
            }
            if std::mem::replace(&mut seen[k.index()], true) {
                return bad(format!("duplicate key {k}"));
            }
        }
        let hits: Vec<_> = self.pairs().filter(|(k, _)| *k == self.query()).collect();
        match hits.as_slice() {
            [(_, v)] if *v == self.target => Ok(()),
            [(_, v)] => bad(format!("target {} but query stores {v}", self.target)),
            _ => bad(format!("query {} not among the keys", self.query())),
        }
    }
}

/// Draws `R` distinct letter keys, i.i.d. digit values and a uniform query
/// among the keys.
pub fn generate_recall_example<R: Rng + ?Sized>(
    pairs: usize,
    pad: usize,
    rng: &mut R,
) -> Result<RecallExample, TaskError> {
    if !(1..=MAX_PAIRS).contains(&pairs) {
        return Err(TaskError::PairCount(pairs));
    }
    let keys = index::sample(rng, 26, pairs);
    let mut tokens = Vec::with_capacity(pad + 2 * pairs + 3);
    tokens.resize(pad, Symbol::QUERY);
    let mut values = Vec::with_capacity(pairs);
    for k in keys.iter() {
        let v = Symbol::digit(rng.random_range(0..10));
        tokens.push(Symbol::letter(k));
        tokens.push(v);
        values.push(v);
    }
    let q = rng.random_range(0..pairs);
    tokens.extend([Symbol::QUERY, Symbol::QUERY, Symbol::letter(keys.index(q))]);
    Ok(RecallExample {
        tokens,
        target: values[q],
        pad,
    })
}

/// Dense one-hot view of an example.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotSequence {
    pub vectors: Vec<[f32; ALPHABET_SIZE]>,
    pub target: usize,
}

impl OneHotSequence {
    pub fn encode(example: &RecallExample) -> Self {
        let vectors = example
            .tokens
            .iter()
            .map(|s| {
                let mut v = [0.0; ALPHABET_SIZE];
                v[s.index()] = 1.0;
                v
            })
            .collect();
        Self {
            vectors,
            target: example.target.index(),
        }
    }

    pub fn decode(&self) -> Result<RecallExample, TaskError> {
        let mut text = String::with_capacity(self.vectors.len());
        for v in &self.vectors {
            let hot: Vec<_> = (0..ALPHABET_SIZE).filter(|&i| v[i] != 0.0).collect();
            match hot.as_slice() {
                [i] if v[*i] == 1.0 => text.push(Symbol(*i as u8).to_char()),
                _ => return Err(TaskError::Malformed("vector is not one-hot".into())),
            }
        }
        let target = Symbol::from_index(self.target)
            .ok_or_else(|| TaskError::Malformed(format!("target index {}", self.target)))?;
        RecallExample::parse(&text, target.to_char())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng;

    #[test]
    fn symbol_ordering() {
        assert_eq!(Symbol::from_char('a').unwrap().index(), 0);
        assert_eq!(Symbol::from_char('z').unwrap().index(), 25);
        assert_eq!(Symbol::from_char('0').unwrap().index(), 26);
        assert_eq!(Symbol::from_char('9').unwrap().index(), 35);
        assert_eq!(Symbol::from_char('?').unwrap().index(), 36);
        assert!(matches!(Symbol::from_char('A'), Err(TaskError::UnknownSymbol('A'))));
        for i in 0..ALPHABET_SIZE {
            let s = Symbol::from_index(i).unwrap();
            assert_eq!(Symbol::from_char(s.to_char()).unwrap(), s);
        }
    }

    #[test]
    fn printed_example_parses() {
        let ex = RecallExample::parse("c9k8j3f1??k", '8').unwrap();
        assert_eq!(ex.pair_count(), 4);
        assert_eq!(ex.target.to_char(), '8');
        assert!(RecallExample::parse("c9k8j3f1??k", '9').is_err());
        assert!(RecallExample::parse("c9c8??c", '8').is_err());
    }

    #[test]
    fn single_pair() {
        let ex = RecallExample::from_pairs(&[('a', '7')], 'a', 0).unwrap();
        assert_eq!(ex.token_string(), "a7??a");
        assert_eq!(ex.target.to_char(), '7');
        let padded = RecallExample::from_pairs(&[('a', '7')], 'a', 1).unwrap();
        assert_eq!(padded.token_string(), "?a7??a");
        assert_eq!(RecallExample::parse("?a7??a", '7').unwrap(), padded);
    }

    #[test]
    fn generated_examples_are_well_formed() {
        let mut r = rng::stream(5, 0);
        for _ in 0..10_000 {
            let ex = generate_recall_example(3, 0, &mut r).unwrap();
            assert_eq!(ex.len(), 9);
            ex.check().unwrap();
        }
    }

    #[test]
    fn pair_count_range() {
        let mut r = rng::stream(5, 0);
        assert!(matches!(generate_recall_example(0, 0, &mut r), Err(TaskError::PairCount(0))));
        assert!(generate_recall_example(27, 0, &mut r).is_err());
        let full = generate_recall_example(26, 0, &mut r).unwrap();
        full.check().unwrap();
    }

    #[test]
    fn one_hot_round_trip() {
        let ex = RecallExample::parse("a7??a", '7').unwrap();
        let oh = OneHotSequence::encode(&ex);
        assert_eq!(oh.vectors[0][0], 1.0);
        assert_eq!(oh.vectors[2][36], 1.0);
        assert!(oh.vectors.iter().all(|v| v.iter().sum::<f32>() == 1.0));
        assert_eq!(oh.target, 33);
        assert_eq!(oh.decode().unwrap(), ex);
    }
}
