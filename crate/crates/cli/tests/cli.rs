use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--override",
    "task.train=64",
    "--override",
    "task.val=32",
    "--override",
    "task.test=32",
    "--override",
    "model.hidden=8",
    "--override",
    "run.batch_size=16",
    "--override",
    "run.max_epochs=2",
];

fn weinet(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weinet"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("manifest.txt"))
        .expect("manifest written")
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn gradcheck_passes_and_reports_every_case() {
    let dir = TempDir::new().unwrap();
    let o = weinet(&["gradcheck"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<_> = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert!(rows.len() >= 6, "{text}");
    assert!(rows.iter().all(|l| l.starts_with("PASS")));
    for label in ["weinet-fullmatrix", "weinet-rowcol", "weinet-gated", "fw-ln", "lstm", "rhn"] {
        assert!(text.contains(label), "{label}");
    }
    // per-parameter breakdown
    assert!(text.contains("controller.w") && text.contains("lstm.w_f"));
    assert!(manifest(dir.path()).contains(&"gradcheck.txt".to_string()));
}

#[test]
fn corrupted_backward_rule_fails_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let o = weinet(&["gradcheck", "--fault", "tanh"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    assert!(stderr(&o).contains("verification failed"), "{}", stderr(&o));
}

#[test]
fn oracle_passes_with_stress_case() {
    let dir = TempDir::new().unwrap();
    let o = weinet(&["oracle"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("T=20"));
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn typo_in_family_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[model]\narch = weinnet\n").unwrap();
    let o = weinet(&["train", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    for f in ["weinet", "fastweights", "lstm", "rhn"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn unknown_key_and_missing_arch_carry_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[model]\narch = lstm\n\n[run]\nmax_epoch = 3\n").unwrap();
    let o = weinet(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    fs::write(&cfg, "# nothing\n[model]\nhidden = 10\n").unwrap();
    let o = weinet(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2") && stderr(&o).contains("model.arch"), "{}", stderr(&o));
}

#[test]
fn gen_data_writes_three_reproducible_caches() {
    let dir = TempDir::new().unwrap();
    let args = [
        "gen-data",
        "--seed",
        "5",
        "--override",
        "task.train=1000",
        "--override",
        "task.val=100",
        "--override",
        "task.test=100",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(weinet(&args, &a).status.code(), Some(0));
    assert_eq!(weinet(&args, &b).status.code(), Some(0));
    for (name, n) in [("train.txt", 1000), ("val.txt", 100), ("test.txt", 100)] {
        let text = fs::read_to_string(a.join(name)).unwrap();
        assert_eq!(text.lines().count(), n + 1, "{name}");
        let header = text.lines().next().unwrap();
        assert!(header.contains("L=9") && header.contains("R=3") && header.contains("seed=7"), "{header}");
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
    let m = manifest(&a);
    assert!(m.contains(&"train.txt".to_string()) && m.contains(&"manifest.txt".to_string()));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--override", "model.arch=rhn"];
    args.extend_from_slice(SMALL);
    let o = weinet(&args, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(not converged)"));

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("epoch,split,loss,accuracy,wall_time_s"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 2 + 1);
    let echo = fs::read_to_string(out.join("effective_config.ini")).unwrap();
    assert!(echo.contains("arch = rhn") && echo.contains("hidden = 8"));
    let m = manifest(&out);
    for f in ["best.ckpt", "final.ckpt", "metrics.csv", "effective_config.ini"] {
        assert!(m.contains(&f.to_string()), "{f}: {m:?}");
    }

    let ckpt = out.join("final.ckpt");
    let mut eval = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--split", "val", "--override", "model.arch=rhn"];
    eval.extend_from_slice(SMALL);
    let o = weinet(&eval, &dir.path().join("eval"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // the last val row of training and the checkpoint evaluation agree
    let last_val = metrics.lines().rfind(|l| l.contains(",val,")).unwrap();
    let acc: f64 = last_val.split(',').nth(3).unwrap().parse().unwrap();
    assert!(stdout(&o).contains(&format!("accuracy {acc:.4}")), "{} vs {last_val}", stdout(&o));

    // a checkpoint from a different layout is a config error
    let mut wrong = eval.clone();
    wrong.extend_from_slice(&["--override", "model.hidden=9"]);
    let o = weinet(&wrong, &dir.path().join("eval2"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    // a missing file aborts at runtime
    let mut missing = eval.clone();
    missing[2] = "/nonexistent/x.ckpt";
    assert_eq!(weinet(&missing, &dir.path().join("eval3")).status.code(), Some(3));
}

#[test]
fn compare_tabulates_every_config() {
    let dir = TempDir::new().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir_all(&configs).unwrap();
    for arch in ["weinet", "fastweights", "lstm", "rhn"] {
        fs::write(configs.join(format!("{arch}.ini")), format!("[model]\narch = {arch}\n")).unwrap();
    }
    let out = dir.path().join("out");
    let mut args = vec!["compare", "--configs", configs.to_str().unwrap(), "--jobs", "2"];
    args.extend_from_slice(SMALL);
    let o = weinet(&args, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert!(csv.starts_with("config,model,length,epochs_to_converge,converged,test_accuracy\n"));
    let table = fs::read_to_string(out.join("compare.txt")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("2 (not converged)"), "{table}");
    for arch in ["weinet", "fastweights", "lstm", "rhn"] {
        assert!(out.join(arch).join("metrics.csv").exists());
    }
    assert!(manifest(&out).contains(&"lstm/metrics.csv".to_string()));
}

#[test]
fn router_curves_have_one_row_per_epoch() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["curves", "--sweep", "router"];
    args.extend_from_slice(SMALL);
    let o = weinet(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curves: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.starts_with("curve_").then_some(name)
        })
        .collect();
    assert_eq!(curves.len(), 2, "{curves:?}");
    for c in curves {
        let text = fs::read_to_string(dir.path().join(&c)).unwrap();
        assert_eq!(text.lines().next(), Some("epoch,val_accuracy"));
        assert_eq!(text.lines().count() - 1, 2, "{c}");
    }
}

#[test]
fn overrides_beat_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.ini");
    fs::write(&cfg, "[model]\narch = lstm\n[optimizer]\nlr = 1e-4\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--override", "optimizer.lr=1e-3"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--override", "run.max_epochs=1"]);
    let o = weinet(&args, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let echo = fs::read_to_string(out.join("effective_config.ini")).unwrap();
    assert!(echo.contains("lr = 1e-3"), "{echo}");
    assert!(echo.contains("max_epochs = 1"));
}
