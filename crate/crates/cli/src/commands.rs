use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use lvad_core::baselines::{AeDetector, EncDecDetector, OsvmDetector};
use lvad_core::checkpoint::{AeCheckpoint, Checkpoint, CheckpointModel, EncDecCheckpoint, OsvmCheckpoint};
use lvad_core::config::RunConfig;
use lvad_core::data::{generate_dataset, load_dataset, load_execution, write_dataset, Dataset, Execution, Layout, Split};
use lvad_core::detector::{train_detector, Preprocessor, ScoreRecord};
use lvad_core::eval::{cross_validate, roc_csv, MethodKind};

use crate::{ConfigArgs, DetectArgs, EvaluateArgs, GenerateArgs, LayoutChoice, TrainArgs};

const CONFIG_FILE: &str = "config.toml";

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    Ok(RunConfig::load(args.config.as_deref(), &args.overrides)?)
}

/// Creates `dir`, refusing to reuse a non-empty one unless forced.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            bail!("{} is not empty; pass --force to write into it", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(&dir.join(CONFIG_FILE), cfg.to_toml()?)
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.join("dataset"));
    prepare_dir(&out, args.force)?;
    let ds = generate_dataset(&cfg.benchmark)?;
    write_dataset(&ds, &out)?;
    write_config(&out, &cfg)?;
    let anomalous = ds.executions.iter().filter(|e| e.is_anomalous()).count();
    info!(
        "wrote {} executions ({anomalous} anomalous) in {} groups to {}",
        ds.executions.len(),
        cfg.benchmark.groups,
        out.display()
    );
    Ok(())
}

fn split(ds: &Dataset, which: Split) -> Vec<Execution> {
    ds.entries()
        .filter(|(m, _)| m.split == which)
        .map(|(_, e)| e.clone())
        .collect()
}

fn refuse_anomalies(set: &[Execution], what: &str) -> Result<()> {
    if let Some(e) = set.iter().find(|e| e.is_anomalous()) {
        bail!(
            "the {what} split contains anomalous execution '{}'; detectors are trained on non-anomalous executions only",
            e.id
        );
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let method = args.method;
    if method == MethodKind::Random {
        bail!("random has no trainable state");
    }
    if args.pretrain.is_some() && method != MethodKind::LstmVae {
        bail!("--pretrain is only supported for lstm_vae");
    }
    let ds = load_dataset(&args.dataset).with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let (train, val) = (split(&ds, Split::Train), split(&ds, Split::Val));
    refuse_anomalies(&train, "training")?;
    refuse_anomalies(&val, "validation")?;
    if train.is_empty() || val.is_empty() {
        bail!("dataset needs non-empty train and val splits");
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.join(format!("train-{method}")));
    prepare_dir(&out, args.force)?;

    let model = match method {
        MethodKind::LstmVae => {
            let pool = match &args.pretrain {
                Some(dir) => {
                    let p = split(&load_dataset(dir)?, Split::Train);
                    refuse_anomalies(&p, "pre-training")?;
                    Some(p)
                }
                None => None,
            };
            let mut dc = cfg.methods.detector.clone();
            dc.model.seed = cfg.seed;
            let (det, report) = train_detector(&train, &val, pool.as_deref(), &cfg.methods.preprocess, &dc)?;
            write_file(&out.join("history.csv"), report.history.to_csv())?;
            if let Some(h) = &report.pretrain {
                write_file(&out.join("pretrain_history.csv"), h.to_csv())?;
            }
            info!(
                "trained {} epochs, best {} (validation loss {:.4})",
                report.history.epochs.len(),
                report.history.best_epoch,
                report.history.best_val_loss().unwrap_or(f64::NAN)
            );
            CheckpointModel::LstmVae(det)
        }
        _ => {
            let pre = Preprocessor::fit(&cfg.methods.preprocess, &train)?;
            let (tm, vm) = (pre.apply_all(&train)?, pre.apply_all(&val)?);
            match method {
                MethodKind::Ae => {
                    let (det, history) = AeDetector::fit(&tm, &vm, &cfg.methods.ae, cfg.seed)?;
                    write_file(&out.join("history.csv"), history.to_csv())?;
                    CheckpointModel::Ae(AeCheckpoint {
                        preprocessor: pre,
                        detector: det,
                    })
                }
                MethodKind::EncdecAd => {
                    let (det, history) = EncDecDetector::fit(&tm, &vm, &cfg.methods.encdec, cfg.seed)?;
                    write_file(&out.join("history.csv"), history.to_csv())?;
                    CheckpointModel::EncdecAd(EncDecCheckpoint {
                        preprocessor: pre,
                        detector: det,
                    })
                }
                MethodKind::Osvm => {
                    let det = OsvmDetector::fit(&tm, &vm, &cfg.methods.osvm)?;
                    CheckpointModel::Osvm(OsvmCheckpoint {
                        preprocessor: pre,
                        window: det.window,
                        model: det.offset_model()?,
                    })
                }
                MethodKind::LstmVae | MethodKind::Random => unreachable!("handled above"),
            }
        }
    };
    let ck = Checkpoint::new(model).with_config(&cfg)?;
    let path = out.join("checkpoint.json");
    ck.save(&path)?;
    write_config(&out, &cfg)?;
    info!("wrote {} (model hash {})", path.display(), ck.hash()?);
    Ok(())
}

/// Streams the score trace to stdout; returns whether an anomaly was found.
pub fn detect(args: &DetectArgs) -> Result<bool> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let exec = load_execution(&args.input)?;
    let shaped = ck
        .model
        .preprocessor()
        .apply(&exec)
        .with_context(|| format!("{} does not fit the checkpoint's {} layout", args.input.display(), ck.model.layout()))?;
    let c = args.c.unwrap_or_else(|| ck.model.default_c());
    let stdout = io::stdout();
    let mut out = stdout.lock();

    let first = match &ck.model {
        CheckpointModel::LstmVae(det) => {
            writeln!(out, "{}", ScoreRecord::csv_header(det.scoring.model.latent_dim()))?;
            let mut state = det.scoring.new_state();
            for x in shaped.signals.iter_rows() {
                let rec = det.scoring.detect_step(x, &mut state, c)?;
                writeln!(out, "{}", rec.csv_row())?;
                out.flush()?;
            }
            state.first_detection()
        }
        other => {
            let trace = other.window_trace(&shaped.signals)?.expect("windowed method");
            writeln!(out, "t,residual,threshold,decision")?;
            let mut latched = false;
            for (r, t) in trace.residuals.iter().zip(&trace.steps) {
                latched |= *r > c;
                writeln!(out, "{t},{r:?},{c:?},{}", latched as u8)?;
            }
            out.flush()?;
            trace.first_above(c)
        }
    };
    match first {
        Some(t) => eprintln!("anomaly detected at step {t} (c = {c})"),
        None => eprintln!("no anomaly (c = {c})"),
    }
    Ok(first.is_some())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if !args.methods.is_empty() {
        cfg.eval.methods = args.methods.clone();
    }
    let layouts = match args.layout {
        None => vec![cfg.methods.preprocess.layout],
        Some(LayoutChoice::Raw17) => vec![Layout::Raw17],
        Some(LayoutChoice::Features4) => vec![Layout::Features4],
        Some(LayoutChoice::Both) => vec![Layout::Raw17, Layout::Features4],
    };
    if let [only] = layouts[..] {
        cfg.methods.preprocess.layout = only;
    }
    cfg.validate()?;
    let out: PathBuf = args.out.clone().unwrap_or_else(|| cfg.output.join("eval"));
    prepare_dir(&out, args.force)?;
    let ds = match &args.dataset {
        Some(dir) => load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?,
        None => generate_dataset(&cfg.benchmark)?,
    };
    write_config(&out, &cfg)?;

    let mut table: BTreeMap<String, BTreeMap<&'static str, f64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for &layout in &layouts {
        let mut methods = cfg.methods.clone();
        methods.preprocess.layout = layout;
        info!("evaluating {} with the {layout} layout", join_methods(&cfg.eval.methods));
        let cv = cross_validate(&ds, &methods, &cfg.eval, cfg.seed)?;
        let dir = out.join(layout.name());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("report.json"), cv.to_json()? + "\n")?;
        for r in &cv.reports {
            write_file(&dir.join(format!("{}.json", r.method)), serde_json::to_string_pretty(r)? + "\n")?;
            write_file(&dir.join(format!("{}_roc.csv", r.method)), roc_csv(std::slice::from_ref(r)))?;
            if !order.contains(&r.method) {
                order.push(r.method.clone());
            }
            table.entry(r.method.clone()).or_default().insert(layout.name(), r.pooled_auc);
        }
    }

    let names: Vec<&str> = layouts.iter().map(|l| l.name()).collect();
    let mut csv = format!("method,{}\n", names.join(","));
    let mut text = format!("{:<16}{}\n", "pooled AUC", names.iter().map(|n| format!("{n:>11}")).collect::<String>());
    for m in &order {
        let row = &table[m];
        let cells: Vec<String> = names
            .iter()
            .map(|n| row.get(n).map(|v| format!("{v:.4}")).unwrap_or_default())
            .collect();
        csv.push_str(&format!("{m},{}\n", cells.join(",")));
        text.push_str(&format!("{m:<16}{}\n", cells.iter().map(|c| format!("{c:>11}")).collect::<String>()));
    }
    write_file(&out.join("table.csv"), csv)?;
    print!("{text}");
    info!("reports written to {}", out.display());
    Ok(())
}

fn join_methods(m: &[MethodKind]) -> String {
    m.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
}
