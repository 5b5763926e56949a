use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{generate_recall_example, RecallExample, TaskError, MAX_PAIRS};
use crate::engine::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

impl SplitRole {
    pub const ALL: [SplitRole; 3] = [SplitRole::Train, SplitRole::Val, SplitRole::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Val => "val",
            SplitRole::Test => "test",
        }
    }

    /// Substream of the master data seed this split is drawn from.
    pub fn stream(self) -> u64 {
        match self {
            SplitRole::Train => 0,
            SplitRole::Val => 1,
            SplitRole::Test => 2,
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitRole {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitRole::Train),
            "val" => Ok(SplitRole::Val),
            "test" => Ok(SplitRole::Test),
            _ => Err(TaskError::Contract(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, role: SplitRole) -> usize {
        match role {
            SplitRole::Train => self.train,
            SplitRole::Val => self.val,
            SplitRole::Test => self.test,
        }
    }
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 20_000,
            val: 2_000,
            test: 2_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub role: SplitRole,
    pub length: usize,
    pub pairs: usize,
    pub seed: u64,
    pub examples: Vec<RecallExample>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Pair count and leading padding for a nominal length. `R` defaults to
/// `floor((L-3)/2)` for the supported lengths 9, 30 and 50; any other
/// length needs an explicit `R`. Padding fills the gap to exactly `L` steps.
pub fn length_policy(length: usize, pairs: Option<usize>) -> Result<(usize, usize), TaskError> {
    let pairs = match pairs {
        Some(r) => r,
        None if matches!(length, 9 | 30 | 50) => (length - 3) / 2,
        None => return Err(TaskError::UnsupportedLength(length)),
    };
    if !(1..=MAX_PAIRS).contains(&pairs) {
        return Err(TaskError::PairCount(pairs));
    }
    let needed = 2 * pairs + 3;
    if length < needed {
        return Err(TaskError::TooShort {
            length,
            pairs,
            needed,
        });
    }
    Ok((pairs, length - needed))
}

/// Train, validation and test splits, each drawn from its own substream of
/// `seed`.
pub fn generate_splits(
    length: usize,
    sizes: SplitSizes,
    seed: u64,
    pairs: Option<usize>,
) -> Result<[DatasetSplit; 3], TaskError> {
    let (pairs, pad) = length_policy(length, pairs)?;
    let make = |role: SplitRole| -> Result<DatasetSplit, TaskError> {
        let n = sizes.get(role);
        if n == 0 {
            return Err(TaskError::Contract(format!("{role} split size must be positive")));
        }
        let mut r = rng::stream(seed, role.stream());
        let examples = (0..n)
            .map(|_| generate_recall_example(pairs, pad, &mut r))
            .collect::<Result<_, _>>()?;
        Ok(DatasetSplit {
            role,
            length,
            pairs,
            seed,
            examples,
        })
    };
    Ok([make(SplitRole::Train)?, make(SplitRole::Val)?, make(SplitRole::Test)?])
}

/// A minibatch as one-hot indices: `inputs[b][t]` is the symbol index of
/// step `t` of example `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub struct Batches<'a> {
    split: &'a DatasetSplit,
    order: Vec<usize>,
    size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.size).min(self.order.len());
        let picked = &self.order[self.pos..end];
        self.pos = end;
        let examples = picked.iter().map(|&i| &self.split.examples[i]);
        Some(Batch {
            inputs: examples.clone().map(|e| e.indices()).collect(),
            targets: examples.map(|e| e.target.index()).collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// Iterates the split in an order shuffled by `(shuffle_seed, epoch)`;
/// `None` keeps the stored order. The last batch may be short.
pub fn batch_iter(
    split: &DatasetSplit,
    batch_size: usize,
    shuffle: Option<(u64, u64)>,
) -> Result<Batches<'_>, TaskError> {
    if batch_size == 0 {
        return Err(TaskError::Contract("batch size must be positive".into()));
    }
    if let Some(first) = split.examples.first() {
        if let Some(bad) = split.examples.iter().position(|e| e.len() != first.len()) {
            return Err(TaskError::Contract(format!(
                "mixed lengths in {} split: example 0 has {} steps, example {bad} has {}",
                split.role,
                first.len(),
                split.examples[bad].len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    if let Some((seed, epoch)) = shuffle {
        order.shuffle(&mut rng::stream(seed, epoch));
    }
    Ok(Batches {
        split,
        order,
        size: batch_size,
        pos: 0,
    })
}
