use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::checkpoint::save_checkpoint;
use super::metrics::{MetricsRecord, MetricsWriter};
use super::{Precision, TrainConfig, TrainError};
use crate::cells::{Model, Recurrent};
use crate::engine::{adam_step, clip_gradients, AdamState, EngineError, GradientMap, Graph, Scalar};
use crate::tasks::{batch_iter, generate_splits, DatasetSplit};

/// Loss, correctness and parameter gradient of one sequence.
pub fn example_gradient<T: Scalar>(
    model: &Model<T>,
    inputs: &[usize],
    target: usize,
) -> Result<(f64, bool, GradientMap<T>), EngineError> {
    let mut g = Graph::new();
    let (loss, logits) = model.sequence_loss(&mut g, inputs, target)?;
    let value = g.value(loss).item().as_f64();
    let correct = argmax(g.value(logits).data()) == target;
    Ok((value, correct, g.backward(loss)?))
}

fn forward<T: Scalar>(model: &Model<T>, inputs: &[usize], target: usize) -> Result<(f64, bool), EngineError> {
    let mut g = Graph::new();
    let (loss, logits) = model.sequence_loss(&mut g, inputs, target)?;
    Ok((g.value(loss).item().as_f64(), argmax(g.value(logits).data()) == target))
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Clips `grads` entry-wise to `clip` and applies one Adam step.
pub fn apply_gradients<T: Scalar>(
    model: &mut Model<T>,
    grads: &GradientMap<T>,
    opt: &mut AdamState<T>,
    clip: (f64, f64),
) -> Result<(), EngineError> {
    let clipped = clip_gradients(grads, clip.0, clip.1)?;
    adam_step(model.params_mut(), &clipped, opt)
}

/// One pass over `split` in the order fixed by `(shuffle_seed, epoch)`.
/// Loss and accuracy are averaged over the examples as seen before each
/// batch's update.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut AdamState<T>,
    split: &DatasetSplit,
    config: &TrainConfig,
    epoch: usize,
) -> Result<MetricsRecord, TrainError> {
    if split.is_empty() {
        return Err(TrainError::EmptySplit(split.role.to_string()));
    }
    let start = Instant::now();
    let (mut loss_sum, mut correct) = (0.0f64, 0usize);
    let batches = batch_iter(split, config.batch_size, Some((config.shuffle_seed, epoch as u64)))?;
    for (b, batch) in batches.enumerate() {
        let shared = &*model;
        let results = batch
            .inputs
            .par_iter()
            .zip(&batch.targets)
            .map(|(x, &t)| example_gradient(shared, x, t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grads = GradientMap::new();
        let mut batch_loss = 0.0;
        for (loss, ok, g) in &results {
            batch_loss += loss;
            correct += *ok as usize;
            grads.accumulate(g)?;
        }
        if !batch_loss.is_finite() || !grads.all_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: b,
                loss: batch_loss / batch.len() as f64,
            });
        }
        loss_sum += batch_loss;
        grads.scale(T::one() / T::from_f64(batch.len() as f64));
        apply_gradients(model, &grads, opt, config.clip)?;
    }
    Ok(MetricsRecord {
        epoch,
        split: split.role,
        loss: loss_sum / split.len() as f64,
        accuracy: correct as f64 / split.len() as f64,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Mean loss and argmax accuracy over `split`. Never touches parameters.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    split: &DatasetSplit,
    epoch: usize,
) -> Result<MetricsRecord, TrainError> {
    if split.is_empty() {
        return Err(TrainError::EmptySplit(split.role.to_string()));
    }
    let start = Instant::now();
    let results = split
        .examples
        .par_iter()
        .map(|e| forward(model, &e.indices(), e.target.index()))
        .collect::<Result<Vec<_>, _>>()?;
    let loss: f64 = results.iter().map(|r| r.0).sum();
    let correct = results.iter().filter(|r| r.1).count();
    Ok(MetricsRecord {
        epoch,
        split: split.role,
        loss: loss / split.len() as f64,
        accuracy: correct as f64 / split.len() as f64,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    /// Train and val rows per epoch, then one test row.
    pub history: Vec<MetricsRecord>,
    pub epochs_run: usize,
    /// First epoch whose validation accuracy reached the early-stop level.
    pub epochs_to_converge: Option<usize>,
    pub best_val_accuracy: f64,
    pub final_val_accuracy: f64,
    pub test: MetricsRecord,
    /// Files written under the output directory.
    pub artifacts: Vec<PathBuf>,
}

/// Trains until validation accuracy reaches `config.early_stop` or the
/// epoch budget runs out, then evaluates on the test split. With `out`,
/// writes `metrics.csv`, `best.ckpt` and `final.ckpt` there.
pub fn run_experiment(config: &TrainConfig, out: Option<&Path>) -> Result<ExperimentResult, TrainError> {
    config.validate()?;
    match config.precision {
        Precision::F32 => run_typed::<f32>(config, out),
        Precision::F64 => run_typed::<f64>(config, out),
    }
}

fn run_typed<T: Scalar>(config: &TrainConfig, out: Option<&Path>) -> Result<ExperimentResult, TrainError> {
    let [train, val, test] = generate_splits(config.length, config.sizes, config.data_seed, config.pairs)?;
    let mut model = Model::<T>::init(&config.model, config.init_seed)?;
    let mut opt = AdamState::new(model.params(), config.adam)?;

    let mut artifacts = Vec::new();
    let mut writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("metrics.csv");
            let w = MetricsWriter::create(&path)?;
            artifacts.push(path);
            Some(w)
        }
        None => None,
    };
    let mut history = Vec::new();
    let mut record = |rec: MetricsRecord, history: &mut Vec<MetricsRecord>| -> Result<(), TrainError> {
        if let Some(w) = writer.as_mut() {
            w.write(&rec)?;
        }
        history.push(rec);
        Ok(())
    };

    let mut best = f64::NEG_INFINITY;
    let mut converged = None;
    let mut epochs_run = 0;
    let mut last_val = 0.0;
    for epoch in 1..=config.max_epochs {
        let tr = train_epoch(&mut model, &mut opt, &train, config, epoch);
        let tr = match tr {
            Ok(r) => r,
            Err(e) => {
                warn!("aborting after {} epochs: {e}", epoch - 1);
                return Err(e);
            }
        };
        let va = evaluate(&model, &val, epoch)?;
        info!(
            "{} L={} epoch {epoch}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4} ({:.1}s)",
            config.model.family, config.length, tr.loss, tr.accuracy, va.loss, va.accuracy, tr.wall_time_s
        );
        epochs_run = epoch;
        last_val = va.accuracy;
        let improved = va.accuracy > best;
        let done = va.accuracy >= config.early_stop;
        record(tr, &mut history)?;
        record(va, &mut history)?;
        if improved {
            best = last_val;
            if let Some(dir) = out {
                save_checkpoint(&dir.join("best.ckpt"), &config.model, model.params())?;
            }
        }
        if done {
            converged = Some(epoch);
            break;
        }
    }

    let te = evaluate(&model, &test, epochs_run)?;
    record(te.clone(), &mut history)?;
    if let Some(dir) = out {
        save_checkpoint(&dir.join("final.ckpt"), &config.model, model.params())?;
        artifacts.push(dir.join("best.ckpt"));
        artifacts.push(dir.join("final.ckpt"));
    }
    Ok(ExperimentResult {
        history,
        epochs_run,
        epochs_to_converge: converged,
        best_val_accuracy: best,
        final_val_accuracy: last_val,
        test: te,
        artifacts,
    })
}
