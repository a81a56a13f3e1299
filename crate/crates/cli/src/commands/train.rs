use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use dial_core::data::truth_from_triples;
use dial_core::trainer::{train_with, EvalSet, EvalSets, METRICS_HEADER};
use dial_core::{Checkpoint, DialError, Example, PreferenceTriple, StepRecord, Trainer};

use super::{load_labeled, prepare_out_dir, read_records, write_json, write_text};
use crate::config::{self, relative_to, resolve_out, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{now, RunManifest};
use crate::svg;

pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const FINAL_METRICS: &str = "final_metrics.json";
pub const CONFIG_COPY: &str = "config.json";
pub const LOSS_PLOT: &str = "losses.svg";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    /// Continue from `<out>/checkpoint.json` after checking dataset hashes.
    #[arg(long, conflicts_with = "force")]
    pub resume: bool,
}

struct Inputs {
    cfg: RunConfig,
    src: Vec<PreferenceTriple>,
    tgt: Vec<Example>,
    evals: EvalSets,
    dataset_paths: Vec<PathBuf>,
}

fn load_inputs(args: &TrainArgs) -> CliResult<Inputs> {
    let (mut cfg, raw): (RunConfig, _) = config::load(&args.config, config::unknown_run_keys)?;
    let at = |p: &Path| relative_to(&args.config, p);
    let (src_path, tgt_path) = (at(&cfg.data.src), at(&cfg.data.tgt));
    for p in [&src_path, &tgt_path] {
        if !p.is_file() {
            return Err(CliError::Usage(format!("dataset {} does not exist", p.display())));
        }
    }
    let src: Vec<PreferenceTriple> = read_records(&src_path)?;
    let tgt: Vec<Example> = read_records(&tgt_path)?;
    let Some(first) = src.first() else {
        return Err(CliError::Usage(format!(
            "{} holds no preference triples",
            src_path.display()
        )));
    };
    if raw["model"].get("input_dim").is_none() {
        cfg.model.input_dim = first.chosen().dim();
    }
    let mut dataset_paths = vec![src_path.clone(), tgt_path];
    let metric = cfg.eval_metric;
    let src_eval = match &cfg.data.eval_src {
        Some(p) => {
            let p = at(p);
            dataset_paths.push(p.clone());
            load_labeled(&p)?
        }
        None => truth_from_triples(&src),
    };
    let tgt_eval = match &cfg.data.eval_tgt {
        Some(p) => {
            let p = at(p);
            dataset_paths.push(p.clone());
            Some(load_labeled(&p)?)
        }
        None => None,
    };
    let evals = EvalSets {
        src: Some(EvalSet {
            records: src_eval,
            metric,
        }),
        tgt: tgt_eval.map(|records| EvalSet { records, metric }),
    };
    cfg.train.validate()?;
    cfg.model.validate()?;
    Ok(Inputs {
        cfg,
        src,
        tgt,
        evals,
        dataset_paths,
    })
}

/// Keeps the header and the rows up to `step`, so a resumed run appends
/// exactly where its checkpoint left off.
fn truncate_metrics(path: &Path, step: u64) -> CliResult<()> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut kept = String::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let keep = i == 0
            || line
                .split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s <= step);
        if keep {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_text(path, &kept)
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let inp = load_inputs(args)?;
    let out_arg = args.out.clone().unwrap_or_else(|| inp.cfg.out_dir.clone());
    let paths: Vec<&Path> = inp.dataset_paths.iter().map(PathBuf::as_path).collect();

    let (out, mut trainer, mut manifest) = if args.resume {
        let out = resolve_out(&out_arg);
        let manifest = RunManifest::read(&out.join(MANIFEST))?;
        manifest.verify_datasets()?;
        let ck = Checkpoint::load(&out.join(CHECKPOINT))?;
        let mut t = Trainer::from_checkpoint(ck)?;
        let mut wanted = inp.cfg.train.clone();
        wanted.epochs = t.cfg.epochs;
        if wanted != t.cfg || inp.cfg.model != t.model_config {
            return Err(CliError::Usage(
                "config differs from the checkpoint in more than `train.epochs`".into(),
            ));
        }
        t.cfg.epochs = inp.cfg.train.epochs;
        truncate_metrics(&out.join(METRICS), t.step)?;
        (out, t, manifest)
    } else {
        let manifest = RunManifest::start("train", &inp.cfg, inp.cfg.train.seed, &paths)?;
        let out = prepare_out_dir(&out_arg, args.force)?;
        let t = Trainer::new(inp.cfg.model.clone(), inp.cfg.train.clone())?;
        write_text(&out.join(METRICS), &format!("{METRICS_HEADER}\n"))?;
        (out, t, manifest)
    };
    manifest.finished_at = None;
    manifest.write(&out.join(MANIFEST))?;
    write_json(&out.join(CONFIG_COPY), &inp.cfg)?;

    let metrics_path = out.join(METRICS);
    let mut metrics = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| CliError::io(&metrics_path, e))?;
    let mut losses: Vec<(f64, f64, f64)> = Vec::new();
    let mut on_step = |r: &StepRecord| -> dial_core::Result<()> {
        writeln!(metrics, "{}", r.csv_row())?;
        metrics.flush()?;
        losses.push((r.step as f64, r.losses.src_loss, 0.0));
        Ok(())
    };
    let every = inp.cfg.checkpoint_every;
    let ck_dir = out.join("checkpoints");
    let mut on_epoch = |t: &Trainer| -> dial_core::Result<()> {
        let ck = t.checkpoint();
        ck.save(&out.join(CHECKPOINT))?;
        if every > 0 && t.epoch.is_multiple_of(every as u64) {
            std::fs::create_dir_all(&ck_dir)?;
            ck.save(&ck_dir.join(format!("epoch_{:04}.json", t.epoch)))?;
        }
        Ok(())
    };
    let outcome = train_with(
        &mut trainer,
        &inp.src,
        &inp.tgt,
        &inp.evals,
        &mut on_step,
        &mut on_epoch,
    );
    let outcome = match outcome {
        Err(e @ DialError::NonFinite { .. }) => {
            log::error!("training stopped: {e}");
            return Err(e.into());
        }
        other => other?,
    };
    if trainer.epoch == 0 {
        trainer.checkpoint().save(&out.join(CHECKPOINT))?;
    }
    write_json(&out.join(FINAL_METRICS), &outcome.final_metrics)?;
    if !losses.is_empty() {
        write_text(
            &out.join(LOSS_PLOT),
            &svg::line_with_errors("source loss", "step", "src_loss", &losses),
        )?;
    }
    manifest.finished_at = Some(now());
    manifest.outputs = [METRICS, CHECKPOINT, FINAL_METRICS, CONFIG_COPY, LOSS_PLOT]
        .iter()
        .map(|f| out.join(f))
        .filter(|p| p.exists())
        .collect();
    manifest.write(&out.join(MANIFEST))?;
    log::info!(
        "trained {} steps over {} epochs; outputs in {}",
        outcome.final_metrics.steps,
        outcome.final_metrics.epochs,
        out.display()
    );
    Ok(())
}
