//! Target-fraction sweep at a fixed example budget.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use dial_core::datagen::{gen_two_moons, TwoMoonsConfig};
use dial_core::trainer::{train, EvalSet, EvalSets, Method};
use dial_core::Example;
use serde::Serialize;

use super::{prepare_out_dir, write_json, write_text};
use crate::config::{self, GenSpec, ScalingConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{now, RunManifest};
use crate::svg;

pub const RUNS_CSV: &str = "runs.csv";
pub const SCALING_CSV: &str = "scaling.csv";
pub const SCALING_SVG: &str = "scaling.svg";
pub const SUMMARY: &str = "scaling_summary.json";

/// Offset between a run's seed and the seed of its held-out target sample.
pub const EVAL_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Examples per run, split between source points and target points.
    #[arg(long, default_value_t = 400)]
    pub budget: usize,
    /// Target fractions of the budget.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub mix: f64,
    pub seed: u64,
    pub n_src: usize,
    pub n_tgt: usize,
    pub n_pairs: usize,
    pub method: Method,
    pub accuracy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixPoint {
    pub mix: f64,
    pub n_src: usize,
    pub n_tgt: usize,
    pub runs: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub best_mix: f64,
    pub best_mean: f64,
    /// The best mix lies strictly inside the grid.
    pub interior_peak: bool,
    pub points: Vec<MixPoint>,
}

/// `(n_src, n_tgt)` for a target fraction of the budget.
pub fn split(budget: usize, mix: f64) -> (usize, usize) {
    let n_tgt = ((mix * budget as f64).round() as usize).min(budget);
    (budget - n_tgt, n_tgt)
}

/// Mean and standard error (sample sd over `sqrt(n)`; `0` for one run).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One (mix, seed) run. Mix 0 trains source-only.
pub fn run_one(cfg: &ScalingConfig, budget: usize, mix: f64, seed: u64) -> RunRow {
    let GenSpec::TwoMoons { shift, noise_sd, .. } = cfg.task else {
        unreachable!("checked before the sweep starts")
    };
    let (n_src, n_tgt) = split(budget, mix);
    let method = if n_tgt == 0 { Method::SrcPref } else { cfg.train.method };
    let mut row = RunRow {
        mix,
        seed,
        n_src,
        n_tgt,
        n_pairs: 0,
        method,
        accuracy: None,
        status: "ok".into(),
    };
    let result = (|| -> dial_core::Result<(usize, f64)> {
        let (src, tgt, _) = gen_two_moons(&TwoMoonsConfig {
            n_src,
            n_tgt: n_tgt.max(4),
            shift,
            noise_sd,
            seed,
        })?;
        let (_, held_out, _) = gen_two_moons(&TwoMoonsConfig {
            n_src: 4,
            n_tgt: cfg.n_eval,
            shift,
            noise_sd,
            seed: seed + EVAL_SEED_OFFSET,
        })?;
        let triples = src.preference_triples;
        if triples.len() < 2 {
            return Err(dial_core::DialError::Empty("source pairs (< 2)"));
        }
        let tgt: Vec<Example> = if n_tgt == 0 { Vec::new() } else { tgt.examples };
        let mut tc = cfg.train.clone();
        tc.method = method;
        tc.seed = seed;
        let evals = EvalSets {
            src: None,
            tgt: Some(EvalSet {
                records: held_out.truth,
                metric: cfg.eval_metric,
            }),
        };
        let out = train(&cfg.model, &tc, &triples, &tgt, &evals)?;
        let acc = out
            .final_metrics
            .eval_accuracy_tgt
            .ok_or(dial_core::DialError::Empty("target evaluation"))?;
        Ok((triples.len(), acc))
    })();
    match result {
        Ok((pairs, acc)) => {
            row.n_pairs = pairs;
            row.accuracy = Some(acc);
        }
        Err(e) => {
            log::warn!("mix {mix} seed {seed} skipped: {e}");
            row.status = format!("skipped: {e}");
        }
    }
    row
}

/// Runs every (mix, seed) job on `threads` workers; rows come back in grid
/// order whatever the scheduling.
pub fn sweep(cfg: &ScalingConfig, budget: usize, grid: &[f64], seeds: &[u64], threads: usize) -> Vec<RunRow> {
    let jobs: Vec<(f64, u64)> = grid.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let slots: Vec<Mutex<Option<RunRow>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(mix, seed)) = jobs.get(i) else { break };
                let row = run_one(cfg, budget, mix, seed);
                log::info!("mix {mix} seed {seed}: {:?}", row.accuracy);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(row);
            });
        }
    });
    slots
        .into_iter()
        .filter_map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
        .collect()
}

pub fn aggregate(grid: &[f64], budget: usize, rows: &[RunRow]) -> Vec<MixPoint> {
    grid.iter()
        .filter_map(|&mix| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.mix == mix)
                .filter_map(|r| r.accuracy)
                .collect();
            if accs.is_empty() {
                return None;
            }
            let (mean, stderr) = mean_stderr(&accs);
            let (n_src, n_tgt) = split(budget, mix);
            Some(MixPoint {
                mix,
                n_src,
                n_tgt,
                runs: accs.len(),
                mean,
                stderr,
            })
        })
        .collect()
}

pub fn run(args: &ScalingArgs) -> CliResult<()> {
    let (mut cfg, raw): (ScalingConfig, _) = config::load(&args.config, config::unknown_scaling_keys)?;
    if !matches!(cfg.task, GenSpec::TwoMoons { .. }) {
        return Err(CliError::Usage("scaling supports the two-moons task only".into()));
    }
    if raw["model"].get("input_dim").is_none() {
        cfg.model.input_dim = 2;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    if args.grid.is_empty() || args.grid.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(CliError::Usage("grid values must lie in [0, 1]".into()));
    }
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = prepare_out_dir(&args.out, args.force)?;
    let mut manifest = RunManifest::start("scaling", &cfg, cfg.train.seed, &[])?;
    manifest.write(&out.join("manifest.json"))?;

    let seeds: Vec<u64> = (0..args.seeds).map(|i| cfg.train.seed + i).collect();
    let rows = sweep(&cfg, args.budget, &args.grid, &seeds, threads);

    let mut runs = String::from("mix,seed,n_src,n_tgt,n_pairs,method,accuracy,status\n");
    for r in &rows {
        let method = serde_json::to_value(r.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from));
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{},{},{}",
            r.mix,
            r.seed,
            r.n_src,
            r.n_tgt,
            r.n_pairs,
            method.unwrap_or_default(),
            r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.status.replace(',', ";")
        );
    }
    write_text(&out.join(RUNS_CSV), &runs)?;

    let points = aggregate(&args.grid, args.budget, &rows);
    if points.is_empty() {
        return Err(CliError::Numeric("every run of the sweep failed".into()));
    }
    let mut csv = String::from("mix,n_src,n_tgt,runs,mean_accuracy,stderr\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            p.mix, p.n_src, p.n_tgt, p.runs, p.mean, p.stderr
        );
    }
    write_text(&out.join(SCALING_CSV), &csv)?;
    let line: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.mix, p.mean, p.stderr)).collect();
    write_text(
        &out.join(SCALING_SVG),
        &svg::line_with_errors(
            "target accuracy vs target fraction",
            "target fraction",
            "accuracy",
            &line,
        ),
    )?;

    let best = points
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("non-empty");
    let (lo, hi) = (points[0].mix, points[points.len() - 1].mix);
    let summary = Summary {
        best_mix: best.mix,
        best_mean: best.mean,
        interior_peak: best.mix > lo && best.mix < hi,
        points: points.clone(),
    };
    write_json(&out.join(SUMMARY), &summary)?;
    log::info!(
        "best mix {} (mean {:.4}); interior peak: {}",
        best.mix,
        best.mean,
        summary.interior_peak
    );

    manifest.finished_at = Some(now());
    manifest.outputs = [RUNS_CSV, SCALING_CSV, SCALING_SVG, SUMMARY]
        .iter()
        .map(|f| out.join(f))
        .collect();
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_covers_budget() {
        assert_eq!(split(400, 0.0), (400, 0));
        assert_eq!(split(400, 0.2), (320, 80));
        assert_eq!(split(10, 1.0), (0, 10));
    }

    #[test]
    fn stderr_matches_hand_computation() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[0.7]), (0.7, 0.0));
    }
}
