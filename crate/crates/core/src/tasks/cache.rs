//! Text cache: a header `#recall v1 L=<L> R=<R> seed=<seed>` followed by
//! one `tokens<TAB>target` line per example.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DatasetSplit, RecallExample, TaskError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheHeader {
    pub length: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl CacheHeader {
    fn line(&self) -> String {
        format!("#recall v1 L={} R={} seed={}", self.length, self.pairs, self.seed)
    }

    fn parse(line: &str) -> Result<Self, TaskError> {
        let err = |detail: String| TaskError::Parse { line: 1, detail };
        let mut parts = line.split_whitespace();
        if parts.next() != Some("#recall") || parts.next() != Some("v1") {
            return Err(err(format!("expected '#recall v1' header, found {line:?}")));
        }
        let mut field = |key: &str| -> Result<u64, TaskError> {
            let part = parts.next().ok_or_else(|| err(format!("missing {key}=")))?;
            part.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(format!("bad header field {part:?}, expected {key}=<int>")))
        };
        Ok(Self {
            length: field("L")? as usize,
            pairs: field("R")? as usize,
            seed: field("seed")?,
        })
    }
}

pub fn write_cache(path: &Path, split: &DatasetSplit) -> Result<(), TaskError> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = CacheHeader {
        length: split.length,
        pairs: split.pairs,
        seed: split.seed,
    };
    writeln!(out, "{}", header.line())?;
    for ex in &split.examples {
        writeln!(out, "{}\t{}", ex.token_string(), ex.target)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<(CacheHeader, Vec<RecallExample>), TaskError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or(TaskError::Parse {
        line: 1,
        detail: "empty file".into(),
    })??;
    let header = CacheHeader::parse(&first)?;
    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let parse_err = |detail: String| TaskError::Parse { line: lineno, detail };
        let (tokens, target) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected tokens<TAB>target".into()))?;
        let mut chars = target.chars();
        let (Some(t), None) = (chars.next(), chars.next()) else {
            return Err(parse_err(format!("target {target:?} is not one symbol")));
        };
        let ex = RecallExample::parse(tokens, t).map_err(|e| parse_err(e.to_string()))?;
        if ex.len() != header.length || ex.pair_count() != header.pairs {
            return Err(parse_err(format!(
                "example has L={} R={}, header says L={} R={}",
                ex.len(),
                ex.pair_count(),
                header.length,
                header.pairs
            )));
        }
        examples.push(ex);
    }
    Ok((header, examples))
}
