//! Read-only commands over a checkpoint or point sets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dial_core::eval::{
    correlations, expected_disagreement, lemma1_check, ordered_pairs, preference_accuracy, project_embeddings,
    theorem1_check, top1_accuracy, truth_pairwise_accuracy_from_scores, truth_top1_accuracy_from_scores,
    write_embeddings_csv, BoundReport,
};
use dial_core::oracle::{w1_exact_1d, w1_exact_assignment};
use dial_core::{Checkpoint, DialError, EmpiricalDistribution, ModelParams, PreferenceTriple, TruthRecord};
use serde::Serialize;

use super::{load_labeled, prepare_out_dir, read_records, write_json, write_text};
use crate::error::{CliError, CliResult};
use crate::svg;

pub const EVAL_METRICS: &str = "eval_metrics.json";
pub const BOUND_REPORT: &str = "bound_report.json";
pub const EMBEDDINGS_CSV: &str = "embeddings.csv";
pub const EMBEDDINGS_SVG: &str = "embeddings.svg";
pub const WD_REPORT: &str = "wd.json";

fn load_params(path: &Path) -> CliResult<ModelParams> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?.params())
}

fn emit(value: &impl Serialize, out: Option<(&Path, bool)>, file: &str) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(DialError::from)?;
    println!("{text}");
    if let Some((dir, force)) = out {
        let dir = prepare_out_dir(dir, force)?;
        write_json(&dir.join(file), value)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ground-truth records (or preference triples) to score.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Preference triples to score.
    #[arg(long)]
    pub prefs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Metrics that cannot be computed (constant scores, no ordered pairs)
/// come out as `null`.
pub fn eval_metrics(
    params: &ModelParams,
    truth: Option<&[TruthRecord]>,
    prefs: Option<&[PreferenceTriple]>,
) -> CliResult<BTreeMap<String, Option<f64>>> {
    let mut m = BTreeMap::new();
    let soft = |r: dial_core::Result<f64>| -> CliResult<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(DialError::Degenerate(_) | DialError::Empty(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    if let Some(records) = truth {
        let examples: Vec<_> = records.iter().map(TruthRecord::example).collect();
        let r = params.reward_batch(&examples)?;
        let f: Vec<f64> = records.iter().map(|t| t.f).collect();
        m.insert(
            "pairwise_accuracy".into(),
            soft(truth_pairwise_accuracy_from_scores(records, &r))?,
        );
        m.insert(
            "top1_accuracy".into(),
            soft(truth_top1_accuracy_from_scores(records, &r))?,
        );
        let (pr, sr) = match correlations(&r, &f) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(DialError::Degenerate(_)) => (None, None),
            Err(e) => return Err(e.into()),
        };
        m.insert("pearson_r".into(), pr);
        m.insert("spearman_rho".into(), sr);
        m.insert(
            "expected_disagreement".into(),
            soft(expected_disagreement(&r, &ordered_pairs(records)))?,
        );
        m.insert("n_truth".into(), Some(records.len() as f64));
    }
    if let Some(triples) = prefs {
        m.insert(
            "preference_accuracy".into(),
            soft(preference_accuracy(params, triples))?,
        );
        m.insert("preference_top1".into(), soft(top1_accuracy(params, triples))?);
        m.insert("n_triples".into(), Some(triples.len() as f64));
    }
    Ok(m)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    if args.truth.is_none() && args.prefs.is_none() {
        return Err(CliError::Usage("eval needs --truth and/or --prefs".into()));
    }
    let params = load_params(&args.checkpoint)?;
    let truth = args.truth.as_deref().map(load_labeled).transpose()?;
    let prefs = args
        .prefs
        .as_deref()
        .map(read_records::<PreferenceTriple>)
        .transpose()?;
    let m = eval_metrics(&params, truth.as_deref(), prefs.as_deref())?;
    emit(&m, args.out.as_deref().map(|d| (d, args.force)), EVAL_METRICS)
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source ground truth (or preference triples).
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Records used per domain; the exact W1 solver is cubic in this.
    #[arg(long, default_value_t = 256)]
    pub max_n: usize,
    /// Random triples for the per-triple loss bound; `0` skips it.
    #[arg(long, default_value_t = 0)]
    pub lemma_triples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
pub struct BoundOutput {
    #[serde(flatten)]
    pub report: BoundReport,
    /// Largest observed loss-difference / bound ratio; `<= 1` when the
    /// per-triple bound holds.
    pub lemma_max_ratio: Option<f64>,
}

pub fn bound(args: &BoundArgs) -> CliResult<()> {
    let params = load_params(&args.checkpoint)?;
    let mut src = load_labeled(&args.src)?;
    let mut tgt = load_labeled(&args.tgt)?;
    let n = args.max_n.min(src.len()).min(tgt.len());
    src.truncate(n);
    tgt.truncate(n);
    let report = theorem1_check(&params, &src, &tgt)?;
    let lemma_max_ratio = if args.lemma_triples > 0 {
        let context_dim = src.first().map_or(0, |r| r.x.len());
        Some(lemma1_check(&params, context_dim, args.lemma_triples, args.seed)?)
    } else {
        None
    };
    let out = BoundOutput {
        report,
        lemma_max_ratio,
    };
    emit(&out, Some((&args.out, args.force)), BOUND_REPORT)?;
    if !out.report.holds {
        return Err(CliError::Numeric(format!(
            "bound violated: eps_T = {} > rhs = {}",
            out.report.eps_t, out.report.rhs
        )));
    }
    if let Some(r) = lemma_max_ratio.filter(|&r| r > 1.0) {
        return Err(CliError::Numeric(format!("per-triple bound violated: ratio {r}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Records drawn from each domain (leading records of each file).
    #[arg(long, default_value_t = 500)]
    pub max_n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn project(args: &ProjectArgs) -> CliResult<()> {
    let params = load_params(&args.checkpoint)?;
    let mut examples = Vec::new();
    let (mut domains, mut labels) = (Vec::new(), Vec::new());
    for (tag, path) in [("src", &args.src), ("tgt", &args.tgt)] {
        for r in load_labeled(path)?.into_iter().take(args.max_n) {
            domains.push(tag.to_string());
            labels.push(if r.f >= 0.5 { "pos" } else { "neg" }.to_string());
            examples.push(r.example());
        }
    }
    let rows = project_embeddings(&params, &examples, &domains, &labels)?;
    let out = prepare_out_dir(&args.out, args.force)?;
    write_embeddings_csv(&out.join(EMBEDDINGS_CSV), &rows)?;
    let pts: Vec<(f64, f64, String)> = rows
        .iter()
        .map(|r| (r.pc1, r.pc2, format!("{}/{}", r.domain_tag, r.label_tag)))
        .collect();
    write_text(
        &out.join(EMBEDDINGS_SVG),
        &svg::scatter("embeddings", "PC1", "PC2", &pts),
    )?;
    log::info!("projected {} embeddings into {}", rows.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WdMethod {
    /// `one-d` for scalar points, `assignment` otherwise.
    Auto,
    OneD,
    Assignment,
}

#[derive(Debug, Clone, Args)]
pub struct OracleWdArgs {
    /// JSONL, one point (JSON array) per line.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: WdMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
pub struct WdOutput {
    pub w1: f64,
    pub method: WdMethod,
    pub n_a: usize,
    pub n_b: usize,
    pub dim: usize,
}

pub fn oracle_wd(args: &OracleWdArgs) -> CliResult<()> {
    let a: Vec<Vec<f64>> = read_records(&args.a)?;
    let b: Vec<Vec<f64>> = read_records(&args.b)?;
    let p = EmpiricalDistribution::new(a)?;
    let q = EmpiricalDistribution::new(b)?;
    if p.dim() != q.dim() {
        return Err(DialError::SizeMismatch(p.dim(), q.dim()).into());
    }
    let method = match args.method {
        WdMethod::Auto if p.dim() == 1 => WdMethod::OneD,
        WdMethod::Auto => WdMethod::Assignment,
        m => m,
    };
    let w1 = match method {
        WdMethod::OneD => {
            if p.dim() != 1 {
                return Err(CliError::Usage(format!(
                    "one-d needs scalar points, got dim {}",
                    p.dim()
                )));
            }
            let flat = |d: &EmpiricalDistribution| d.points().iter().map(|v| v[0]).collect::<Vec<_>>();
            w1_exact_1d(&flat(&p), &flat(&q))?
        }
        _ => w1_exact_assignment(&p, &q)?,
    };
    let out = WdOutput {
        w1,
        method,
        n_a: p.len(),
        n_b: q.len(),
        dim: p.dim(),
    };
    emit(&out, args.out.as_deref().map(|d| (d, args.force)), WD_REPORT)
}
