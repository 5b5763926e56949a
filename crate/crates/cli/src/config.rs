//! `key = value` config files with `[model]`, `[task]`, `[optimizer]` and
//! `[run]` sections. `#` and `;` start comments.
//!
//! | key | default |
//! |-----|---------|
//! | model.arch | weinet (weinet, fastweights, lstm, rhn) |
//! | model.hidden | 50 |
//! | model.memories | 1 |
//! | model.router | off |
//! | model.variant | rowcol (fullmatrix, rowcol, gated, crossbitdot) |
//! | model.stats | attention (attention, decay) |
//! | model.fw_lambda / fw_eta / fw_inner_steps | 0.9 / 0.5 / 1 |
//! | task.length | 9 |
//! | task.pairs | auto |
//! | task.train / val / test | 20000 / 2000 / 2000 |
//! | optimizer.lr | 1e-4 |
//! | optimizer.beta1 / beta2 / eps | 0.9 / 0.999 / 1e-8 |
//! | optimizer.clip_min / clip_max | -5 / 5 |
//! | run.batch_size | 128 |
//! | run.max_epochs | 100 |
//! | run.early_stop | 1.0 |
//! | run.seed | 1 (sets init/shuffle/data seeds to seed, seed+1, seed+2) |
//! | run.init_seed / shuffle_seed / data_seed | from run.seed |
//! | run.precision | f32 |
//!
//! A config file must set `model.arch`.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;
use weinet_core::training::{Precision, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("{origin} line {line}: {detail}")]
    At {
        origin: String,
        line: usize,
        detail: String,
    },
    #[error("cannot read {path}: {detail}")]
    Read { path: String, detail: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

const SECTIONS: [&str; 4] = ["model", "task", "optimizer", "run"];

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "model.arch",
    "model.hidden",
    "model.memories",
    "model.router",
    "model.variant",
    "model.stats",
    "model.fw_lambda",
    "model.fw_eta",
    "model.fw_inner_steps",
    "task.length",
    "task.pairs",
    "task.train",
    "task.val",
    "task.test",
    "optimizer.lr",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "optimizer.clip_min",
    "optimizer.clip_max",
    "run.batch_size",
    "run.max_epochs",
    "run.early_stop",
    "run.seed",
    "run.init_seed",
    "run.shuffle_seed",
    "run.data_seed",
    "run.precision",
];

const REQUIRED: &[&str] = &["model.arch"];

/// One `key = value` assignment and where it came from.
#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    origin: String,
    line: usize,
}

fn parse_value<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("bad value {v:?}: {e}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value {v:?}: expected on/off")),
    }
}

fn apply(cfg: &mut TrainConfig, key: &str, v: &str) -> Result<(), String> {
    let m = &mut cfg.model;
    match key {
        "model.arch" => m.family = parse_value(v)?,
        "model.hidden" => m.hidden = parse_value(v)?,
        "model.memories" => m.memories = parse_value(v)?,
        "model.router" => m.router = parse_bool(v)?,
        "model.variant" => m.variant = parse_value(v)?,
        "model.stats" => m.stats = parse_value(v)?,
        "model.fw_lambda" => m.fw_lambda = parse_value(v)?,
        "model.fw_eta" => m.fw_eta = parse_value(v)?,
        "model.fw_inner_steps" => m.fw_inner_steps = parse_value(v)?,
        "task.length" => cfg.length = parse_value(v)?,
        "task.pairs" => {
            cfg.pairs = if v == "auto" { None } else { Some(parse_value(v)?) }
        }
        "task.train" => cfg.sizes.train = parse_value(v)?,
        "task.val" => cfg.sizes.val = parse_value(v)?,
        "task.test" => cfg.sizes.test = parse_value(v)?,
        "optimizer.lr" => cfg.adam.lr = parse_value(v)?,
        "optimizer.beta1" => cfg.adam.beta1 = parse_value(v)?,
        "optimizer.beta2" => cfg.adam.beta2 = parse_value(v)?,
        "optimizer.eps" => cfg.adam.eps = parse_value(v)?,
        "optimizer.clip_min" => cfg.clip.0 = parse_value(v)?,
        "optimizer.clip_max" => cfg.clip.1 = parse_value(v)?,
        "run.batch_size" => cfg.batch_size = parse_value(v)?,
        "run.max_epochs" => cfg.max_epochs = parse_value(v)?,
        "run.early_stop" => cfg.early_stop = parse_value(v)?,
        "run.seed" => *cfg = cfg.clone().with_seed(parse_value(v)?),
        "run.init_seed" => cfg.init_seed = parse_value(v)?,
        "run.shuffle_seed" => cfg.shuffle_seed = parse_value(v)?,
        "run.data_seed" => cfg.data_seed = parse_value(v)?,
        "run.precision" => cfg.precision = parse_value::<Precision>(v)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

type Parsed = (Vec<Entry>, Vec<(String, usize)>);

fn parse_text(text: &str, origin: &str) -> Result<Parsed, ParseError> {
    let err = |line: usize, detail: String| ParseError::At {
        origin: origin.to_string(),
        line,
        detail,
    };
    let mut section: Option<String> = None;
    let mut entries = Vec::new();
    let mut headers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let text = raw.split(['#', ';']).next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("malformed section header {text:?}")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}] (expected model, task, optimizer or run)")));
            }
            headers.push((name.to_string(), line));
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, found {text:?}")))?;
        let sec = section
            .as_ref()
            .ok_or_else(|| err(line, "key outside of a [section]".into()))?;
        let key = format!("{sec}.{}", k.trim());
        if !KEYS.contains(&key.as_str()) {
            return Err(err(line, format!("unknown key {key:?}")));
        }
        if entries.iter().any(|e: &Entry| e.key == key) {
            return Err(err(line, format!("duplicate key {key:?}")));
        }
        entries.push(Entry {
            key,
            value: v.trim().to_string(),
            origin: origin.to_string(),
            line,
        });
    }
    Ok((entries, headers))
}

/// Parses `--override section.key=value` arguments.
fn parse_overrides(overrides: &[String]) -> Result<Vec<Entry>, ParseError> {
    overrides
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let err = |detail: String| ParseError::At {
                origin: "--override".into(),
                line: i + 1,
                detail,
            };
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| err(format!("expected KEY=VALUE, found {o:?}")))?;
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key {key:?}")));
            }
            Ok(Entry {
                key,
                value: v.trim().to_string(),
                origin: "--override".into(),
                line: i + 1,
            })
        })
        .collect()
}

/// Seeds go first so explicit per-purpose seeds win over `run.seed`.
fn apply_entries(cfg: &mut TrainConfig, entries: &[Entry]) -> Result<(), ParseError> {
    let (seeds, rest): (Vec<_>, Vec<_>) = entries.iter().partition(|e| e.key == "run.seed");
    for e in seeds.into_iter().chain(rest) {
        apply(cfg, &e.key, &e.value).map_err(|detail| ParseError::At {
            origin: e.origin.clone(),
            line: e.line,
            detail: format!("{}: {detail}", e.key),
        })?;
    }
    Ok(())
}

/// Builds a validated config from optional file text, then `--seed`, then
/// overrides, in that order.
pub fn parse_config_text(
    text: Option<(&str, &str)>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<TrainConfig, ParseError> {
    let mut cfg = TrainConfig::default();
    if let Some((text, origin)) = text {
        let (entries, headers) = parse_text(text, origin)?;
        for req in REQUIRED {
            if !entries.iter().any(|e| e.key == *req) {
                let section = req.split('.').next().expect("dotted key");
                let line = headers
                    .iter()
                    .find(|(s, _)| s == section)
                    .map(|h| h.1)
                    .unwrap_or(text.lines().count());
                return Err(ParseError::At {
                    origin: origin.to_string(),
                    line,
                    detail: format!("missing required key {req:?}"),
                });
            }
        }
        apply_entries(&mut cfg, &entries)?;
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    apply_entries(&mut cfg, &parse_overrides(overrides)?)?;
    cfg.validate().map_err(|e| ParseError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<TrainConfig, ParseError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ParseError::Read {
                path: p.display().to_string(),
                detail: e.to_string(),
            })?;
            parse_config_text(Some((&text, &p.display().to_string())), seed, overrides)
        }
        None => parse_config_text(None, seed, overrides),
    }
}

/// The effective config in the file format; parsing it back yields the
/// same config.
pub fn render_config(cfg: &TrainConfig) -> String {
    let m = &cfg.model;
    let pairs = cfg.pairs.map_or("auto".to_string(), |r| r.to_string());
    format!(
        "[model]
arch = {}
hidden = {}
memories = {}
router = {}
variant = {}
stats = {}
fw_lambda = {}
fw_eta = {}
fw_inner_steps = {}

[task]
length = {}
pairs = {pairs}
train = {}
val = {}
test = {}

[optimizer]
lr = {:e}
beta1 = {}
beta2 = {}
eps = {:e}
clip_min = {}
clip_max = {}

[run]
batch_size = {}
max_epochs = {}
early_stop = {}
init_seed = {}
shuffle_seed = {}
data_seed = {}
precision = {}
",
        m.family,
        m.hidden,
        m.memories,
        if m.router { "on" } else { "off" },
        m.variant,
        m.stats.name(),
        m.fw_lambda,
        m.fw_eta,
        m.fw_inner_steps,
        cfg.length,
        cfg.sizes.train,
        cfg.sizes.val,
        cfg.sizes.test,
        cfg.adam.lr,
        cfg.adam.beta1,
        cfg.adam.beta2,
        cfg.adam.eps,
        cfg.clip.0,
        cfg.clip.1,
        cfg.batch_size,
        cfg.max_epochs,
        cfg.early_stop,
        cfg.init_seed,
        cfg.shuffle_seed,
        cfg.data_seed,
        cfg.precision,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use weinet_core::{Family, UpdateVariant};

    fn parse(text: &str, overrides: &[&str]) -> Result<TrainConfig, ParseError> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config_text(Some((text, "test.ini")), None, &o)
    }

    #[test]
    fn arch_alone_gives_defaults() {
        let c = parse("[model]\narch = weinet\n", &[]).unwrap();
        assert_eq!(c.model.family, Family::WeiNet);
        assert_eq!(c.model.hidden, 50);
        assert_eq!(c.model.memories, 1);
        assert!(!c.model.router);
        assert_eq!(c.model.variant, UpdateVariant::RowCol);
        assert_eq!(c, TrainConfig::default());
    }

    #[test]
    fn override_wins_over_file() {
        let text = "[model]\narch=weinet\n[optimizer]\nlr = 1e-4\n";
        assert_eq!(parse(text, &[]).unwrap().adam.lr, 1e-4);
        assert_eq!(parse(text, &["optimizer.lr=1e-3"]).unwrap().adam.lr, 1e-3);
    }

    #[test]
    fn typo_in_arch_names_valid_families() {
        let err = parse("[model]\n\narch=weinnet\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        for f in ["weinet", "fastweights", "lstm", "rhn"] {
            assert!(msg.contains(f), "{msg}");
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("[model]\narch=weinet\nwidth = 3\n", 3, "unknown key"),
            ("[model]\narch=weinet\nhidden = many\n", 3, "bad value"),
            ("[model]\nhidden = 8\n", 1, "missing required key"),
            ("[model]\narch=lstm\n[extra]\n", 3, "unknown section"),
            ("arch=lstm\n", 1, "outside"),
            ("[model]\narch=lstm\narch=rhn\n", 3, "duplicate"),
        ];
        for (text, line, what) in cases {
            match parse(text, &[]) {
                Err(ParseError::At { line: l, detail, .. }) => {
                    assert_eq!(l, line, "{text:?}");
                    assert!(detail.contains(what), "{detail}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(parse("[model]\narch=lstm\n", &["model.nope=1"]), Err(ParseError::At { .. })));
    }

    #[test]
    fn validation_errors_surface() {
        assert!(matches!(
            parse("[model]\narch=weinet\nmemories=2\n", &[]),
            Err(ParseError::Invalid(_))
        ));
    }

    #[test]
    fn seeds() {
        let c = parse("[model]\narch=rhn\n[run]\ndata_seed = 9\nseed = 4\n", &[]).unwrap();
        assert_eq!((c.init_seed, c.shuffle_seed, c.data_seed), (4, 5, 9));
        let c = parse_config_text(Some(("[model]\narch=rhn\n", "x")), Some(10), &[]).unwrap();
        assert_eq!((c.init_seed, c.shuffle_seed, c.data_seed), (10, 11, 12));
    }

    #[test]
    fn rendered_config_parses_back() {
        let c = parse(
            "[model]\narch=weinet\nvariant=gated\nmemories=2\nrouter=on\n[task]\nlength=50\n[run]\nprecision=f64\n",
            &["optimizer.lr=3e-4"],
        )
        .unwrap();
        let text = render_config(&c);
        assert_eq!(parse(&text, &[]).unwrap(), c);
    }
}
