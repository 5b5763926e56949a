use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use weinet_core::cells::{Family, Model, Recurrent, UpdateVariant};
use weinet_core::engine::Scalar;
use weinet_core::tasks::{generate_splits, write_cache};
use weinet_core::training::{
    evaluate, load_checkpoint, restore_checkpoint, run_experiment, ExperimentResult, MetricsRecord,
};
use weinet_core::verify::{gradcheck_suite, oracle_suite, CheckRow};
use weinet_core::{OpKind, Precision, SplitRole, TrainConfig};

use crate::config::{parse_config, render_config};
use crate::error::CliError;
use crate::manifest::Manifest;
use crate::Sweep;

pub const EFFECTIVE_CONFIG: &str = "effective_config.ini";

pub fn train(cfg: &TrainConfig, out: &Path) -> Result<(), CliError> {
    let mut manifest = Manifest::new(out)?;
    manifest.write(EFFECTIVE_CONFIG, &render_config(cfg))?;
    let result = run_experiment(cfg, Some(out))?;
    for a in &result.artifacts {
        manifest.add(a);
    }
    println!("{}", summary_line(cfg, &result));
    manifest.finish()?;
    Ok(())
}

fn summary_line(cfg: &TrainConfig, r: &ExperimentResult) -> String {
    format!(
        "{} L={}: epochs {} | best val {:.4} | test loss {:.4} acc {:.4}",
        run_label(cfg),
        cfg.length,
        epochs_cell(r, cfg.max_epochs),
        r.best_val_accuracy,
        r.test.loss,
        r.test.accuracy
    )
}

/// Epochs to converge, or the budget with a marker.
fn epochs_cell(r: &ExperimentResult, budget: usize) -> String {
    match r.epochs_to_converge {
        Some(e) => e.to_string(),
        None => format!("{budget} (not converged)"),
    }
}

fn run_label(cfg: &TrainConfig) -> String {
    let m = &cfg.model;
    match m.family {
        Family::WeiNet if m.router => format!("weinet-{}-k{}", m.variant, m.memories),
        Family::WeiNet => format!("weinet-{}", m.variant),
        f => f.to_string(),
    }
}

pub fn eval(cfg: &TrainConfig, checkpoint: &Path, split: SplitRole, out: &Path) -> Result<(), CliError> {
    let rec = match cfg.precision {
        Precision::F32 => eval_typed::<f32>(cfg, checkpoint, split)?,
        Precision::F64 => eval_typed::<f64>(cfg, checkpoint, split)?,
    };
    let mut manifest = Manifest::new(out)?;
    manifest.write(EFFECTIVE_CONFIG, &render_config(cfg))?;
    manifest.write(
        &format!("eval_{split}.csv"),
        &format!("{}\n{}\n", weinet_core::training::METRICS_HEADER, rec.csv_row()),
    )?;
    println!("{split}: loss {:.4} accuracy {:.4} ({} examples)", rec.loss, rec.accuracy, cfg.sizes.get(split));
    manifest.finish()?;
    Ok(())
}

fn eval_typed<T: Scalar>(cfg: &TrainConfig, checkpoint: &Path, split: SplitRole) -> Result<MetricsRecord, CliError> {
    let mut model = Model::<T>::init(&cfg.model, cfg.init_seed)?;
    let loaded = load_checkpoint::<T>(checkpoint, &cfg.model)?;
    restore_checkpoint(model.params_mut(), loaded)?;
    let splits = generate_splits(cfg.length, cfg.sizes, cfg.data_seed, cfg.pairs)?;
    let data = splits
        .iter()
        .find(|s| s.role == split)
        .expect("all three roles are generated");
    Ok(evaluate(&model, data, 0)?)
}

fn report(rows: &[CheckRow], verbose: bool) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
    let mut text = String::new();
    for r in rows {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        text.push_str(&format!(
            "{status}  {:<width$}  worst {:.3e}  (tol {:.0e})\n",
            r.label, r.worst, r.tolerance
        ));
        if verbose {
            for p in &r.params {
                text.push_str(&format!(
                    "        {:<14} {:.3e}  at [{}]  analytic {:+.6e}  numeric {:+.6e}\n",
                    p.name, p.worst_relative, p.worst_index, p.analytic, p.numeric
                ));
            }
        }
    }
    text
}

fn finish_report(name: &str, rows: &[CheckRow], verbose: bool, out: &Path) -> Result<(), CliError> {
    let text = report(rows, verbose);
    print!("{text}");
    let mut manifest = Manifest::new(out)?;
    manifest.write(name, &text)?;
    manifest.finish()?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed()).map(|r| r.label.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn gradcheck(seed: u64, fault: Option<OpKind>, out: &Path) -> Result<(), CliError> {
    if let Some(op) = fault {
        info!("injecting a backward fault into {op}");
    }
    let rows = gradcheck_suite(seed, fault)?;
    finish_report("gradcheck.txt", &rows, true, out)
}

pub fn oracle(seed: u64, out: &Path) -> Result<(), CliError> {
    let rows = oracle_suite(seed)?;
    finish_report("oracle.txt", &rows, false, out)
}

/// Runs `runs` on a pool of `jobs` threads. Each run owns `out/<name>`.
fn run_all(
    runs: &[(String, TrainConfig)],
    jobs: usize,
    out: &Path,
) -> Result<Vec<Result<ExperimentResult, CliError>>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(pool.install(|| {
        runs.par_iter()
            .map(|(name, cfg)| {
                let dir = out.join(name);
                fs::create_dir_all(&dir)?;
                fs::write(dir.join(EFFECTIVE_CONFIG), render_config(cfg))?;
                info!("starting {name}");
                Ok(run_experiment(cfg, Some(&dir))?)
            })
            .collect()
    }))
}

fn record_run(manifest: &mut Manifest, name: &str, result: &ExperimentResult) {
    manifest.add(&manifest.path(&format!("{name}/{EFFECTIVE_CONFIG}")));
    for a in &result.artifacts {
        manifest.add(a);
    }
}

/// One row of the comparison table.
#[derive(Debug)]
struct CompareRow {
    config: String,
    model: String,
    length: usize,
    epochs: String,
    converged: bool,
    test_accuracy: String,
}

pub fn compare(
    dir: &Path,
    seed: Option<u64>,
    overrides: &[String],
    jobs: usize,
    out: &Path,
) -> Result<(), CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ini"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no .ini configs in {}", dir.display())));
    }
    let runs = files
        .iter()
        .map(|p| {
            let name = p.file_stem().expect("file name").to_string_lossy().into_owned();
            Ok((name, parse_config(Some(p), seed, overrides)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut manifest = Manifest::new(out)?;
    let results = run_all(&runs, jobs, out)?;
    let mut rows = Vec::new();
    let mut first_error = None;
    for ((name, cfg), result) in runs.iter().zip(results) {
        let row = match result {
            Ok(r) => {
                record_run(&mut manifest, name, &r);
                CompareRow {
                    config: name.clone(),
                    model: run_label(cfg),
                    length: cfg.length,
                    epochs: epochs_cell(&r, cfg.max_epochs),
                    converged: r.epochs_to_converge.is_some(),
                    test_accuracy: format!("{:.4}", r.test.accuracy),
                }
            }
            Err(e) => {
                log::error!("{name}: {e}");
                let row = CompareRow {
                    config: name.clone(),
                    model: run_label(cfg),
                    length: cfg.length,
                    epochs: format!("aborted: {e}"),
                    converged: false,
                    test_accuracy: "-".into(),
                };
                first_error.get_or_insert(e);
                row
            }
        };
        rows.push(row);
    }

    let mut csv = String::from("config,model,length,epochs_to_converge,converged,test_accuracy\n");
    for r in &rows {
        let epochs = if r.converged { r.epochs.clone() } else { String::new() };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config, r.model, r.length, epochs, r.converged, r.test_accuracy
        ));
    }
    manifest.write("compare.csv", &csv)?;
    let table = compare_table(&rows);
    print!("{table}");
    manifest.write("compare.txt", &table)?;
    manifest.finish()?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn compare_table(rows: &[CompareRow]) -> String {
    let header = ["model", "L", "epochs", "test acc"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| [r.model.clone(), r.length.to_string(), r.epochs.clone(), r.test_accuracy.clone()])
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |c: [&str; 4]| {
        format!(
            "{:<w0$}  {:>w1$}  {:<w2$}  {:>w3$}\n",
            c[0],
            c[1],
            c[2],
            c[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        )
    };
    let mut text = line(header);
    for c in &cells {
        text.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
    }
    text
}

/// The runs of a sweep, named after the setting they change.
pub fn sweep_runs(base: &TrainConfig, sweep: Sweep) -> Vec<(String, TrainConfig)> {
    let mut weinet = base.clone();
    weinet.model.family = Family::WeiNet;
    match sweep {
        Sweep::Variant => [UpdateVariant::FullMatrix, UpdateVariant::RowCol, UpdateVariant::Gated]
            .into_iter()
            .map(|v| {
                let mut c = weinet.clone();
                c.model.variant = v;
                (v.to_string(), c)
            })
            .collect(),
        Sweep::Router => [("router-off", 1, false), ("router-on-k2", 2, true)]
            .into_iter()
            .map(|(name, k, on)| {
                let mut c = weinet.clone();
                c.model.memories = k;
                c.model.router = on;
                (name.to_string(), c)
            })
            .collect(),
    }
}

pub fn curves(base: &TrainConfig, sweep: Sweep, jobs: usize, out: &Path) -> Result<(), CliError> {
    let runs = sweep_runs(base, sweep);
    for (_, c) in &runs {
        c.validate()?;
    }
    let mut manifest = Manifest::new(out)?;
    let results = run_all(&runs, jobs, out)?;
    for ((name, cfg), result) in runs.iter().zip(results) {
        let r = result?;
        record_run(&mut manifest, name, &r);
        let mut csv = String::from("epoch,val_accuracy\n");
        for rec in r.history.iter().filter(|h| h.split == SplitRole::Val) {
            csv.push_str(&format!("{},{}\n", rec.epoch, rec.accuracy));
        }
        manifest.write(&format!("curve_{name}.csv"), &csv)?;
        println!("{name}: {}", summary_line(cfg, &r));
    }
    manifest.finish()?;
    Ok(())
}

pub fn gen_data(cfg: &TrainConfig, out: &Path) -> Result<(), CliError> {
    let mut manifest = Manifest::new(out)?;
    for split in generate_splits(cfg.length, cfg.sizes, cfg.data_seed, cfg.pairs)? {
        let path = manifest.path(&format!("{}.txt", split.role));
        write_cache(&path, &split)?;
        manifest.add(&path);
        println!("{}: {} examples -> {}", split.role, split.len(), path.display());
    }
    manifest.finish()?;
    Ok(())
}
