use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dial_core::data::to_jsonl;
use dial_core::datagen::{
    gen_gaussian_pair, gen_odd_one_out, gen_two_moons, MoonShift, OddOneOutConfig, TwoMoonsConfig,
};
use dial_core::{Example, PreferenceTriple, TruthRecord};
use serde::Serialize;

use super::prepare_out_dir;
use crate::config::GenSpec;
use crate::error::{CliError, CliResult};
use crate::manifest::{FileHash, RunManifest};

pub const SRC_PREFS: &str = "src_prefs.jsonl";
pub const TGT_UNLABELED: &str = "tgt_unlabeled.jsonl";
pub const TGT_TRUTH: &str = "tgt_truth.jsonl";
pub const SRC_POINTS: &str = "src_points.jsonl";
pub const TGT_POINTS: &str = "tgt_points.jsonl";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    TwoMoons,
    OddOneOut,
    GaussianPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftKind {
    Fewshot,
    Rotate,
    Translate,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,

    /// two-moons: source points (each yields about half a preference pair).
    #[arg(long, default_value_t = 50)]
    pub n_src: usize,
    #[arg(long, default_value_t = 500)]
    pub n_tgt: usize,
    #[arg(long, value_enum, default_value = "fewshot")]
    pub shift: ShiftKind,
    #[arg(long)]
    pub arc_fraction: Option<f64>,
    #[arg(long)]
    pub arc_start: Option<f64>,
    #[arg(long, default_value_t = 45.0)]
    pub degrees: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dx: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dy: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,

    /// odd-one-out: number of categories.
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    #[arg(long, default_value_t = 20)]
    pub items_per_cat: usize,
    #[arg(long, default_value_t = 0)]
    pub src_base_cat: usize,
    #[arg(long, default_value_t = 1)]
    pub tgt_base_cat: usize,
    /// odd-one-out: questions per domain; gaussian-pair: points per side.
    #[arg(long)]
    pub n: Option<usize>,
    /// odd-one-out and gaussian-pair: ambient dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub cluster_sd: Option<f64>,

    #[arg(long, default_value_t = 2.0)]
    pub mean_shift: f64,
}

impl GenArgs {
    pub fn spec(&self) -> CliResult<GenSpec> {
        let odd_default = OddOneOutConfig::new(2, 4, 0, 1, 1, 0);
        Ok(match self.task {
            Task::TwoMoons => {
                let shift = match self.shift {
                    ShiftKind::Fewshot => {
                        let MoonShift::FewshotSubsample {
                            arc_fraction,
                            arc_start,
                        } = MoonShift::fewshot()
                        else {
                            unreachable!()
                        };
                        MoonShift::FewshotSubsample {
                            arc_fraction: self.arc_fraction.unwrap_or(arc_fraction),
                            arc_start: self.arc_start.unwrap_or(arc_start),
                        }
                    }
                    ShiftKind::Rotate => MoonShift::Rotate { degrees: self.degrees },
                    ShiftKind::Translate => MoonShift::Translate {
                        dx: self.dx,
                        dy: self.dy,
                    },
                };
                GenSpec::TwoMoons {
                    n_src: self.n_src,
                    n_tgt: self.n_tgt,
                    shift,
                    noise_sd: self.noise_sd,
                }
            }
            Task::OddOneOut => GenSpec::OddOneOut {
                categories: self.categories,
                items_per_cat: self.items_per_cat,
                src_base_cat: self.src_base_cat,
                tgt_base_cat: self.tgt_base_cat,
                n: self.n.unwrap_or(200),
                dim: self.dim.unwrap_or(odd_default.dim),
                cluster_sd: self.cluster_sd.unwrap_or(odd_default.cluster_sd),
            },
            Task::GaussianPair => GenSpec::GaussianPair {
                dim: self.dim.unwrap_or(2),
                mean_shift: self.mean_shift,
                n: self.n.unwrap_or(1024),
            },
        })
    }
}

/// A generated domain pair.
pub enum Generated {
    Preferences {
        src: Vec<PreferenceTriple>,
        tgt: Vec<Example>,
        tgt_truth: Vec<TruthRecord>,
    },
    Points(Vec<Vec<f64>>, Vec<Vec<f64>>),
}

pub fn generate(spec: &GenSpec, seed: u64) -> CliResult<Generated> {
    let (s, t) = match *spec {
        GenSpec::TwoMoons {
            n_src,
            n_tgt,
            shift,
            noise_sd,
        } => {
            let (s, t, _) = gen_two_moons(&TwoMoonsConfig {
                n_src,
                n_tgt,
                shift,
                noise_sd,
                seed,
            })?;
            (s, t)
        }
        GenSpec::OddOneOut {
            categories,
            items_per_cat,
            src_base_cat,
            tgt_base_cat,
            n,
            dim,
            cluster_sd,
        } => {
            let mut c = OddOneOutConfig::new(categories, items_per_cat, src_base_cat, tgt_base_cat, n, seed);
            c.dim = dim;
            c.cluster_sd = cluster_sd;
            let (s, t, _) = gen_odd_one_out(&c)?;
            (s, t)
        }
        GenSpec::GaussianPair { dim, mean_shift, n } => {
            let (a, b) = gen_gaussian_pair(dim, mean_shift, n, seed)?;
            return Ok(Generated::Points(a, b));
        }
    };
    Ok(Generated::Preferences {
        src: s.preference_triples,
        tgt: t.examples,
        tgt_truth: t.truth,
    })
}

#[derive(Serialize)]
struct GenRecord<'a> {
    spec: &'a GenSpec,
    seed: u64,
}

pub fn run(args: &GenArgs) -> CliResult<()> {
    let spec = args.spec()?;
    let generated = generate(&spec, args.seed)?;
    let out = prepare_out_dir(&args.out, args.force)?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    match &generated {
        Generated::Preferences { src, tgt, tgt_truth } => {
            files.push((out.join(SRC_PREFS), to_jsonl(src)?));
            files.push((out.join(TGT_UNLABELED), to_jsonl(tgt)?));
            files.push((out.join(TGT_TRUTH), to_jsonl(tgt_truth)?));
        }
        Generated::Points(a, b) => {
            files.push((out.join(SRC_POINTS), to_jsonl(a)?));
            files.push((out.join(TGT_POINTS), to_jsonl(b)?));
        }
    }
    for (p, bytes) in &files {
        std::fs::write(p, bytes).map_err(|e| CliError::io(p, e))?;
    }
    let paths: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
    let mut m = RunManifest::start(
        "gen",
        &GenRecord {
            spec: &spec,
            seed: args.seed,
        },
        args.seed,
        &[],
    )?;
    m.outputs = files.iter().map(|(p, _)| p.clone()).collect();
    m.datasets = paths.iter().map(|p| FileHash::of(p)).collect::<CliResult<_>>()?;
    m.finished_at = Some(crate::manifest::now());
    m.write(&out.join(MANIFEST))?;
    log::info!("wrote {} files to {}", files.len() + 1, out.display());
    Ok(())
}
