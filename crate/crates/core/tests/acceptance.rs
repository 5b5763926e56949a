//! Acceptance checks for the library. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.
//!
//! Criteria 4 to 7 train desk-scale models and take hours on one core.
//! `ACCEPTANCE_ONLY=1,2,3` restricts the run to the listed criteria and
//! `ACCEPTANCE_OUT` sets where run artifacts go (default
//! `target/acceptance`).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use weinet_core::cells::UpdateVariant;
use weinet_core::engine::rng;
use weinet_core::tasks::{generate_recall_example, length_policy, OneHotSequence, Symbol, ALPHABET_SIZE};
use weinet_core::training::{first_epoch_reaching, run_experiment, ExperimentResult, METRICS_HEADER};
use weinet_core::verify::{closed_form_suite, degeneracy_suite, gradcheck_suite};
use weinet_core::{Family, ModelConfig, SplitRole, TrainConfig};

const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const CLOSED_FORM_TOL: f64 = 1e-10;
const CLOSED_FORM_INSTANCES: usize = 50;
const CLOSED_FORM_BUDGET: Duration = Duration::from_secs(30);
const DEGENERACY_TOL: f64 = 1e-12;
const DEGENERACY_STEPS: usize = 50;
const DEGENERACY_BUDGET: Duration = Duration::from_secs(10);
const L9_TARGET: f64 = 0.99;
const L9_BUDGET: usize = 60;
const L50_BUDGET: usize = 100;
const L50_MARGIN: f64 = 0.30;
const VARIANT_THRESHOLD: f64 = 0.95;
const VARIANT_RATIO: f64 = 1.5;
const ROUTER_BUDGET: usize = 100;
const ROUTER_IDENTITY_EPOCHS: usize = 3;
const TASK_EXAMPLES: usize = 100_000;
const TASK_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: u32, title: &'static str, passed: bool, detail: String) -> Outcome {
    let o = Outcome {
        id,
        title,
        passed,
        detail,
    };
    println!("{}", line(&o));
    o
}

fn line(o: &Outcome) -> String {
    format!(
        "[{}] {}. {}: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.title,
        o.detail
    )
}

/// Desk-scale protocol: 20K/2K/2K examples, H=50, Adam 1e-4, batch 128,
/// clip [-5, 5].
fn desk(family: Family, variant: UpdateVariant, length: usize, budget: usize, stop: f64) -> TrainConfig {
    let cfg = TrainConfig {
        model: ModelConfig {
            family,
            variant,
            ..ModelConfig::default()
        },
        length,
        max_epochs: budget,
        early_stop: stop,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.model.hidden, 50);
    assert_eq!((cfg.sizes.train, cfg.sizes.val), (20_000, 2_000));
    assert_eq!(cfg.adam.lr, 1e-4);
    assert_eq!(cfg.batch_size, 128);
    assert_eq!(cfg.clip, (-5.0, 5.0));
    cfg
}

fn train(cfg: &TrainConfig, dir: &Path) -> Result<ExperimentResult, String> {
    println!("    training {} L={} into {}", cfg.model.layout_key(), cfg.length, dir.display());
    let start = Instant::now();
    let r = run_experiment(cfg, Some(dir)).map_err(|e| e.to_string())?;
    println!(
        "    done: {} epochs, converged {:?}, best val {:.4}, final val {:.4}, {:.0}s",
        r.epochs_run,
        r.epochs_to_converge,
        r.best_val_accuracy,
        r.final_val_accuracy,
        start.elapsed().as_secs_f64()
    );
    Ok(r)
}

/// Metrics CSV with the wall-time column removed.
fn timeless_metrics(path: &Path) -> std::io::Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n"))
}

fn write_curve(path: &Path, r: &ExperimentResult) -> std::io::Result<()> {
    let mut csv = String::from("epoch,val_accuracy\n");
    for rec in r.history.iter().filter(|h| h.split == SplitRole::Val) {
        csv.push_str(&format!("{},{}\n", rec.epoch, rec.accuracy));
    }
    fs::write(path, csv)
}

fn criterion_1() -> Outcome {
    const TITLE: &str = "gradient oracle (6 family/variant combinations, H=6, I=5, T=4, batch 2, f64)";
    let start = Instant::now();
    let rows = match gradcheck_suite(1, None) {
        Ok(r) => r,
        Err(e) => return outcome(1, TITLE, false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let required = ["weinet-fullmatrix", "weinet-rowcol", "weinet-gated", "fw-ln", "lstm", "rhn"];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for label in required {
        match rows.iter().find(|r| r.label == label) {
            Some(r) => {
                worst = worst.max(r.worst);
                if !(r.worst < GRAD_TOL) {
                    failures.push(format!("{label} {:.2e}", r.worst));
                }
            }
            None => failures.push(format!("{label} missing")),
        }
    }
    let passed = failures.is_empty() && elapsed < GRAD_BUDGET;
    outcome(
        1,
        TITLE,
        passed,
        format!(
            "worst rel err {worst:.2e} (< {GRAD_TOL:.0e}), {:.1}s (< {}s){}",
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn criterion_2() -> Outcome {
    const TITLE: &str = "closed-form unroll vs recurrence (50 instances, T<=20, H<=8, f64)";
    let start = Instant::now();
    match closed_form_suite(CLOSED_FORM_INSTANCES, 2) {
        Ok(row) => {
            let elapsed = start.elapsed();
            outcome(
                2,
                TITLE,
                row.worst < CLOSED_FORM_TOL && elapsed < CLOSED_FORM_BUDGET,
                format!(
                    "max abs diff {:.2e} (< {CLOSED_FORM_TOL:.0e}), {:.2}s (< {}s)",
                    row.worst,
                    elapsed.as_secs_f64(),
                    CLOSED_FORM_BUDGET.as_secs()
                ),
            )
        }
        Err(e) => outcome(2, TITLE, false, e.to_string()),
    }
}

fn criterion_3() -> Outcome {
    const TITLE: &str = "degeneracy to scalar fast weights (lambda=0.9, eta=0.5, T=50, f64)";
    let start = Instant::now();
    match degeneracy_suite(DEGENERACY_STEPS, 3) {
        Ok(row) => {
            let elapsed = start.elapsed();
            outcome(
                3,
                TITLE,
                row.worst < DEGENERACY_TOL && elapsed < DEGENERACY_BUDGET,
                format!(
                    "max abs diff {:.2e} (< {DEGENERACY_TOL:.0e}), {:.2}s (< {}s)",
                    row.worst,
                    elapsed.as_secs_f64(),
                    DEGENERACY_BUDGET.as_secs()
                ),
            )
        }
        Err(e) => outcome(3, TITLE, false, e.to_string()),
    }
}

fn l9_config() -> TrainConfig {
    desk(Family::WeiNet, UpdateVariant::RowCol, 9, L9_BUDGET, L9_TARGET)
}

fn criterion_4(out: &Path) -> Outcome {
    const TITLE: &str = "length-9 WeiNet reaches 99% val accuracy within 60 epochs";
    match train(&l9_config(), &out.join("c4_weinet_l9")) {
        Ok(r) => outcome(
            4,
            TITLE,
            r.epochs_to_converge.is_some_and(|e| e <= L9_BUDGET),
            match r.epochs_to_converge {
                Some(e) => format!("converged at epoch {e} (val {:.4})", r.final_val_accuracy),
                None => format!(
                    "{L9_BUDGET} (not converged): best val {:.4}, final val {:.4}",
                    r.best_val_accuracy, r.final_val_accuracy
                ),
            },
        ),
        Err(e) => outcome(4, TITLE, false, e),
    }
}

fn criteria_5_6(out: &Path) -> (Outcome, Outcome) {
    const T5: &str = "length-50 WeiNet beats FW-LN val accuracy by >= 30 points (100 epochs)";
    const T6: &str = "length-50 RowCol reaches 95% within 1.5x the FullMatrix epochs";
    let weinet = train(
        &desk(Family::WeiNet, UpdateVariant::RowCol, 50, L50_BUDGET, L9_TARGET),
        &out.join("c5_weinet_rowcol_l50"),
    );
    let fw = train(
        &desk(Family::FastWeights, UpdateVariant::RowCol, 50, L50_BUDGET, L9_TARGET),
        &out.join("c5_fastweights_l50"),
    );
    let c5 = match (&weinet, &fw) {
        (Ok(w), Ok(f)) => {
            let gap = w.final_val_accuracy - f.final_val_accuracy;
            outcome(
                5,
                T5,
                gap >= L50_MARGIN,
                format!(
                    "weinet {:.4} vs fw-ln {:.4}: gap {:+.1} points (>= {:.0})",
                    w.final_val_accuracy,
                    f.final_val_accuracy,
                    100.0 * gap,
                    100.0 * L50_MARGIN
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(5, T5, false, e.clone()),
    };

    let full = train(
        &desk(Family::WeiNet, UpdateVariant::FullMatrix, 50, L50_BUDGET, VARIANT_THRESHOLD),
        &out.join("c6_weinet_fullmatrix_l50"),
    );
    let c6 = match (&weinet, &full) {
        (Ok(rc), Ok(fm)) => {
            let curves = write_curve(&out.join("curve_rowcol_l50.csv"), rc)
                .and_then(|_| write_curve(&out.join("curve_fullmatrix_l50.csv"), fm));
            let r = first_epoch_reaching(&rc.history, VARIANT_THRESHOLD);
            let f = first_epoch_reaching(&fm.history, VARIANT_THRESHOLD);
            let passed = match (r, f) {
                (Some(r), Some(f)) => r as f64 <= VARIANT_RATIO * f as f64,
                (Some(_), None) => true,
                (None, _) => false,
            };
            let show = |e: Option<usize>| e.map_or(format!("{L50_BUDGET} (not converged)"), |e| e.to_string());
            let mut detail = format!(
                "epochs to 95%: rowcol {}, fullmatrix {}; best val rowcol {:.4}, fullmatrix {:.4}; curves in {}",
                show(r),
                show(f),
                rc.best_val_accuracy,
                fm.best_val_accuracy,
                out.display()
            );
            if let Err(e) = curves {
                detail.push_str(&format!(" (curve write failed: {e})"));
            }
            outcome(6, T6, passed, detail)
        }
        (Err(e), _) | (_, Err(e)) => outcome(6, T6, false, e.clone()),
    };
    (c5, c6)
}

fn criterion_7(out: &Path) -> Outcome {
    const TITLE: &str = "router: K=1 bit-identical to no router; K=2 converges on length 9 in 100 epochs";
    let with_router = |k: usize, on: bool, budget: usize| {
        let mut c = desk(Family::WeiNet, UpdateVariant::RowCol, 9, budget, L9_TARGET);
        c.model.memories = k;
        c.model.router = on;
        c
    };
    let off_dir = out.join("c7_router_off");
    let on_dir = out.join("c7_router_on_k1");
    let identical = train(&with_router(1, false, ROUTER_IDENTITY_EPOCHS), &off_dir).and_then(|_| {
        train(&with_router(1, true, ROUTER_IDENTITY_EPOCHS), &on_dir)?;
        let a = timeless_metrics(&off_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        let b = timeless_metrics(&on_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
        Ok(a == b && a.starts_with(METRICS_HEADER.rsplit_once(',').unwrap().0))
    });
    let k2 = train(&with_router(2, true, ROUTER_BUDGET), &out.join("c7_router_on_k2"));
    match (identical, k2) {
        (Ok(same), Ok(r)) => {
            let converged = r.epochs_to_converge.is_some();
            outcome(
                7,
                TITLE,
                same && converged,
                format!(
                    "K=1 metrics over {ROUTER_IDENTITY_EPOCHS} epochs {}; K=2 {}",
                    if same { "identical" } else { "DIFFER" },
                    match r.epochs_to_converge {
                        Some(e) => format!("converged at epoch {e}"),
                        None => format!(
                            "{ROUTER_BUDGET} (not converged), best val {:.4}",
                            r.best_val_accuracy
                        ),
                    }
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(7, TITLE, false, e),
    }
}

fn criterion_8(out: &Path, first_run: Option<&Path>) -> Outcome {
    const TITLE: &str = "determinism: repeating the length-9 run gives an identical metrics CSV";
    let first = match first_run {
        Some(p) => p.to_path_buf(),
        None => {
            let p = out.join("c4_weinet_l9");
            if let Err(e) = train(&l9_config(), &p) {
                return outcome(8, TITLE, false, e);
            }
            p
        }
    };
    let again = out.join("c8_weinet_l9_repeat");
    if let Err(e) = train(&l9_config(), &again) {
        return outcome(8, TITLE, false, e);
    }
    match (
        timeless_metrics(&first.join("metrics.csv")),
        timeless_metrics(&again.join("metrics.csv")),
    ) {
        (Ok(a), Ok(b)) => {
            let rows = a.lines().count() - 1;
            outcome(
                8,
                TITLE,
                a == b,
                format!("{rows} rows {}", if a == b { "byte-identical" } else { "DIFFER" }),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(8, TITLE, false, e.to_string()),
    }
}

/// Checks each example directly from its tokens, without the library's own
/// validation.
fn task_violations(length: usize, seed: u64) -> Result<usize, String> {
    let (pairs, pad) = length_policy(length, None).map_err(|e| e.to_string())?;
    let mut r = rng::stream(seed, length as u64);
    let mut bad = 0;
    for _ in 0..TASK_EXAMPLES {
        let e = generate_recall_example(pairs, pad, &mut r).map_err(|e| e.to_string())?;
        let t = &e.tokens;
        let mut ok = t.len() == length && t.len() == pad + 2 * pairs + 3;
        ok &= t[..pad].iter().all(|&s| s == Symbol::QUERY);
        let body = &t[pad..pad + 2 * pairs];
        let keys: Vec<Symbol> = body.iter().step_by(2).copied().collect();
        let values: Vec<Symbol> = body.iter().skip(1).step_by(2).copied().collect();
        ok &= keys.iter().all(|k| k.is_letter()) && values.iter().all(|v| v.is_digit());
        let distinct: BTreeSet<_> = keys.iter().collect();
        ok &= distinct.len() == pairs;
        ok &= t[pad + 2 * pairs] == Symbol::QUERY && t[pad + 2 * pairs + 1] == Symbol::QUERY;
        let query = t[length - 1];
        let hits: Vec<usize> = (0..pairs).filter(|&i| keys[i] == query).collect();
        ok &= hits.len() == 1 && values[hits[0]] == e.target;
        ok &= t.iter().filter(|&&s| s == Symbol::QUERY).count() == pad + 2;
        let hot = OneHotSequence::encode(&e);
        ok &= hot.vectors.len() == length;
        for (v, s) in hot.vectors.iter().zip(t) {
            ok &= v.len() == ALPHABET_SIZE
                && v.iter().sum::<f32>() == 1.0
                && v.iter().all(|&x| x == 0.0 || x == 1.0)
                && v[s.index()] == 1.0;
        }
        if !ok {
            bad += 1;
        }
    }
    Ok(bad)
}

fn criterion_9() -> Outcome {
    const TITLE: &str = "task invariants over 100K examples per length (9, 30, 50)";
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut passed = true;
    for length in [9, 30, 50] {
        match task_violations(length, 9) {
            Ok(bad) => {
                passed &= bad == 0;
                parts.push(format!("L={length}: {bad} violations"));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("L={length}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    passed &= elapsed < TASK_BUDGET;
    outcome(
        9,
        TITLE,
        passed,
        format!("{}; {:.1}s (< {}s)", parts.join(", "), elapsed.as_secs_f64(), TASK_BUDGET.as_secs()),
    )
}

fn selected() -> BTreeSet<u32> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) if !list.trim().is_empty() => list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect(),
        _ => (1..=9).collect(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let only = selected();
    let out = std::env::var_os("ACCEPTANCE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance"));
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("cannot create {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    let out = out.canonicalize().unwrap_or(out);
    println!("acceptance: criteria {only:?}, artifacts in {}", out.display());

    let mut results = Vec::new();
    let run = |id: u32| only.contains(&id);
    if run(1) {
        results.push(criterion_1());
    }
    if run(2) {
        results.push(criterion_2());
    }
    if run(3) {
        results.push(criterion_3());
    }
    if run(9) {
        results.push(criterion_9());
    }
    let c4_dir = out.join("c4_weinet_l9");
    if run(4) {
        results.push(criterion_4(&out));
    }
    if run(8) {
        results.push(criterion_8(&out, run(4).then_some(c4_dir.as_path())));
    }
    if run(7) {
        results.push(criterion_7(&out));
    }
    if run(5) || run(6) {
        let (c5, c6) = criteria_5_6(&out);
        if run(5) {
            results.push(c5);
        }
        if run(6) {
            results.push(c6);
        }
    }

    results.sort_by_key(|o| o.id);
    println!("\nacceptance summary");
    for o in &results {
        println!("{}", line(o));
    }
    let failed = results.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
