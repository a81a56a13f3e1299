//! Alternating critic / embedder optimisation.

mod checkpoint;
mod optim;

pub use checkpoint::{Checkpoint, RngState};
pub use optim::{adamw_update, Moments, OptimizerState, ADAM_EPS, BETA1, BETA2};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::{PreferenceTriple, TruthRecord};
use crate::datagen::stream;
use crate::error::{DialError, Result};
use crate::eval::{truth_pairwise_accuracy, truth_top1_accuracy};
use crate::losses::{gap_node, interpolate, penalty_node, source_loss_node, LossBundle, SourceBatch};
use crate::model::{batch_matrix, Example, ModelConfig, ModelParams, ParamGroup, Trainable};

/// Stream ids under the run seed.
const DATA_STREAM: u64 = 0;
const CRITIC_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Dial,
    /// Preference loss only: no critic, no alignment term.
    SrcPref,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub lambda_da: f64,
    pub lambda_gp: f64,
    pub critic_iters: usize,
    /// Turning the critic off with `lambda_da = 0` reproduces `src-pref`.
    pub critic_enabled: bool,
    pub lr_main: f64,
    pub lr_critic: f64,
    pub weight_decay_critic: f64,
    pub weight_decay_main: f64,
    pub batch_src: usize,
    pub batch_tgt: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate every this many steps; `0` evaluates at epoch ends only.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Dial,
            lambda_da: 0.01,
            lambda_gp: 1.0,
            critic_iters: 3,
            critic_enabled: true,
            lr_main: 5e-5,
            lr_critic: 1e-4,
            weight_decay_critic: 1e-3,
            weight_decay_main: 0.0,
            batch_src: 32,
            batch_tgt: 32,
            epochs: 1,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DialError::Config(m));
        for (name, v) in [("lr_main", self.lr_main), ("lr_critic", self.lr_critic)] {
            if v <= 0.0 || !v.is_finite() {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("lambda_da", self.lambda_da),
            ("lambda_gp", self.lambda_gp),
            ("weight_decay_critic", self.weight_decay_critic),
            ("weight_decay_main", self.weight_decay_main),
        ] {
            if v < 0.0 || !v.is_finite() {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.critic_iters < 1 {
            return bad("critic_iters must be >= 1".into());
        }
        if self.batch_src < 1 || self.batch_tgt < 1 {
            return bad("batch sizes must be >= 1".into());
        }
        if self.method == Method::Dial && !self.critic_enabled && self.lambda_da > 0.0 {
            return bad("lambda_da > 0 needs the critic".into());
        }
        Ok(())
    }

    pub fn uses_critic(&self) -> bool {
        self.method == Method::Dial && self.critic_enabled
    }

    /// Weight of the alignment term actually applied.
    pub fn effective_lambda_da(&self) -> f64 {
        if self.uses_critic() {
            self.lambda_da
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    #[default]
    Pairwise,
    Top1,
}

/// Held-out ground truth plus the accuracy convention to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub records: Vec<TruthRecord>,
    pub metric: AccuracyMetric,
}

impl EvalSet {
    pub fn accuracy(&self, params: &ModelParams) -> Result<f64> {
        match self.metric {
            AccuracyMetric::Pairwise => truth_pairwise_accuracy(params, &self.records),
            AccuracyMetric::Top1 => truth_top1_accuracy(params, &self.records),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSets {
    pub src: Option<EvalSet>,
    pub tgt: Option<EvalSet>,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub losses: LossBundle,
    pub eval_accuracy_src: Option<f64>,
    pub eval_accuracy_tgt: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "step,epoch,src_loss,wd_gap,grad_penalty,critic_loss,eval_accuracy_src,eval_accuracy_tgt";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.losses.src_loss,
            self.losses.wd_gap,
            self.losses.grad_penalty,
            self.losses.critic_loss,
            opt(self.eval_accuracy_src),
            opt(self.eval_accuracy_tgt)
        )
    }
}

/// Summary written to `final_metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub method: Method,
    pub steps: u64,
    pub epochs: u64,
    pub last_losses: Option<LossBundle>,
    pub eval_accuracy_src: Option<f64>,
    pub eval_accuracy_tgt: Option<f64>,
}

/// Cycles through a dataset in reshuffled order. Every epoch starts from the
/// identity permutation so the order depends only on the RNG state.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: 0,
        }
    }

    fn start_epoch(&mut self, rng: &mut ChaCha8Rng) {
        self.order.sort_unstable();
        self.order.shuffle(rng);
        self.pos = 0;
    }

    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Mutable training state: parameters, optimiser moments, RNG streams.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model_config: ModelConfig,
    pub cfg: TrainConfig,
    pub params: ModelParams,
    pub opt_main: OptimizerState,
    pub opt_critic: OptimizerState,
    rng_data: ChaCha8Rng,
    rng_critic: ChaCha8Rng,
    pub step: u64,
    pub epoch: u64,
}

fn sizes(params: &mut ModelParams, t: Trainable) -> Vec<usize> {
    params.trainable_tensors_mut(t).iter().map(|s| s.len()).collect()
}

impl Trainer {
    pub fn new(model_config: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&model_config, &mut stream(cfg.seed, INIT_STREAM))?;
        Self::with_params(model_config, cfg, params)
    }

    pub fn with_params(model_config: ModelConfig, cfg: TrainConfig, mut params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let opt_main = OptimizerState::new(&sizes(&mut params, Trainable::MAIN));
        let opt_critic = OptimizerState::new(&sizes(&mut params, Trainable::CRITIC));
        Ok(Self {
            rng_data: stream(cfg.seed, DATA_STREAM),
            rng_critic: stream(cfg.seed, CRITIC_STREAM),
            model_config,
            cfg,
            params,
            opt_main,
            opt_critic,
            step: 0,
            epoch: 0,
        })
    }

    /// One alternating update on the given batches.
    pub fn train_step(&mut self, batch_src: &[PreferenceTriple], batch_tgt: &[Example]) -> Result<LossBundle> {
        let step = self.step + 1;
        let src = SourceBatch::from_triples(batch_src)?;
        // the target batch is only read when the critic is on
        let tgt_input = if self.cfg.uses_critic() {
            batch_matrix(batch_tgt)?
        } else {
            Tensor::zeros(&[0, src.input.cols()])
        };
        let mut bundle = LossBundle::default();

        if self.cfg.uses_critic() {
            let before = (
                self.params.checksum(ParamGroup::Embedder),
                self.params.checksum(ParamGroup::Reward),
            );
            critic_phase(
                &mut self.params,
                &mut self.opt_critic,
                &self.cfg,
                &src.input,
                &tgt_input,
                &mut self.rng_critic,
                step,
                &mut bundle,
            )?;
            assert_eq!(
                before,
                (
                    self.params.checksum(ParamGroup::Embedder),
                    self.params.checksum(ParamGroup::Reward)
                ),
                "critic phase touched theta or phi"
            );
        }

        let psi_before = self.params.checksum(ParamGroup::Critic);
        main_phase(
            &mut self.params,
            &mut self.opt_main,
            &self.cfg,
            &src,
            &tgt_input,
            step,
            &mut bundle,
        )?;
        assert_eq!(
            psi_before,
            self.params.checksum(ParamGroup::Critic),
            "main phase touched psi"
        );
        self.step = step;
        Ok(bundle)
    }

    fn steps_per_epoch(&self, n_src: usize, n_tgt: usize) -> usize {
        let per = |n: usize, b: usize| if n == 0 { 0 } else { n.div_ceil(b.min(n)) };
        per(n_src, self.cfg.batch_src).max(per(n_tgt, self.cfg.batch_tgt))
    }

    /// Runs one epoch; `observer` sees every step record as it is produced.
    pub fn run_epoch(
        &mut self,
        src: &[PreferenceTriple],
        tgt: &[Example],
        evals: &EvalSets,
        observer: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        if src.is_empty() {
            return Err(DialError::Empty("source preference set"));
        }
        if tgt.is_empty() && self.cfg.uses_critic() {
            return Err(DialError::Empty("target example set"));
        }
        let bs = self.cfg.batch_src.min(src.len());
        let bt = self.cfg.batch_tgt.min(tgt.len());
        let n_steps = self.steps_per_epoch(src.len(), tgt.len());
        let mut src_cycle = Cycler::new(src.len());
        let mut tgt_cycle = Cycler::new(tgt.len());
        src_cycle.start_epoch(&mut self.rng_data);
        tgt_cycle.start_epoch(&mut self.rng_data);
        let epoch = self.epoch + 1;
        let mut records = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let si = src_cycle.take(bs, &mut self.rng_data);
            let ti = if tgt.is_empty() {
                Vec::new()
            } else {
                tgt_cycle.take(bt, &mut self.rng_data)
            };
            let bsrc: Vec<PreferenceTriple> = si.iter().map(|&i| src[i].clone()).collect();
            let btgt: Vec<Example> = ti.iter().map(|&i| tgt[i].clone()).collect();
            let losses = self.train_step(&bsrc, &btgt)?;
            let due =
                k + 1 == n_steps || (self.cfg.eval_every > 0 && self.step.is_multiple_of(self.cfg.eval_every as u64));
            let (acc_s, acc_t) = if due { self.evaluate(evals)? } else { (None, None) };
            let rec = StepRecord {
                step: self.step,
                epoch,
                losses,
                eval_accuracy_src: acc_s,
                eval_accuracy_tgt: acc_t,
            };
            observer(&rec)?;
            records.push(rec);
        }
        self.epoch = epoch;
        Ok(records)
    }

    pub fn evaluate(&self, evals: &EvalSets) -> Result<(Option<f64>, Option<f64>)> {
        let s = evals.src.as_ref().map(|e| e.accuracy(&self.params)).transpose()?;
        let t = evals.tgt.as_ref().map(|e| e.accuracy(&self.params)).transpose()?;
        Ok((s, t))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model_config.clone(),
            train_config: self.cfg.clone(),
            theta: self.params.theta.clone(),
            phi: self.params.phi.clone(),
            psi: self.params.psi.clone(),
            opt_main: self.opt_main.clone(),
            opt_critic: self.opt_critic.clone(),
            rng_state: vec![RngState::capture(&self.rng_data), RngState::capture(&self.rng_critic)],
            step: self.step,
            epoch: self.epoch,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let [data, critic] = ck.rng_state.as_slice() else {
            return Err(DialError::InvalidArgument(format!(
                "checkpoint carries {} rng streams, expected 2",
                ck.rng_state.len()
            )));
        };
        let (rng_data, rng_critic) = (data.restore()?, critic.restore()?);
        let params = ck.params();
        let mut t = Self::with_params(ck.model_config, ck.train_config, params)?;
        if t.opt_main.moments.len() != ck.opt_main.moments.len()
            || t.opt_critic.moments.len() != ck.opt_critic.moments.len()
        {
            return Err(DialError::InvalidArgument(
                "optimizer state does not match parameters".into(),
            ));
        }
        t.opt_main = ck.opt_main;
        t.opt_critic = ck.opt_critic;
        t.rng_data = rng_data;
        t.rng_critic = rng_critic;
        t.step = ck.step;
        t.epoch = ck.epoch;
        Ok(t)
    }
}

#[allow(clippy::too_many_arguments)]
fn critic_phase(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    src_input: &Tensor,
    tgt_input: &Tensor,
    rng: &mut ChaCha8Rng,
    step: u64,
    bundle: &mut LossBundle,
) -> Result<()> {
    // theta is frozen for the whole phase
    let emb_s = params.embed_batch(src_input)?;
    let emb_t = params.embed_batch(tgt_input)?;
    for it in 0..cfg.critic_iters {
        let mut g = Graph::new();
        let model = params.bind(&mut g, Trainable::CRITIC);
        let zs = g.constant(emb_s.clone());
        let zt = g.constant(emb_t.clone());
        let gap = gap_node(&mut g, &model, zs, zt)?;
        let zi = g.constant(interpolate(&emb_s, &emb_t, rng)?);
        let pen = penalty_node(&mut g, &model, zi)?;
        let neg_gap = g.scale(gap, -1.0)?;
        let loss = if cfg.lambda_gp > 0.0 {
            let wp = g.scale(pen, cfg.lambda_gp)?;
            g.add(neg_gap, wp)?
        } else {
            neg_gap
        };
        let (gv, pv, lv) = (g.value(gap).item()?, g.value(pen).item()?, g.value(loss).item()?);
        for (name, v) in [("wd_gap", gv), ("grad_penalty", pv), ("critic_loss", lv)] {
            if !v.is_finite() {
                return Err(DialError::NonFinite { step, component: name });
            }
        }
        if it == 0 {
            bundle.wd_gap = gv;
            bundle.grad_penalty = pv;
            bundle.critic_loss = lv;
        }
        let grads = g.backward(loss)?;
        let gs: Vec<Tensor> = model
            .trainable_nodes(Trainable::CRITIC)
            .into_iter()
            .map(|n| grads.wrt(n))
            .collect();
        opt.apply(
            params.trainable_tensors_mut(Trainable::CRITIC),
            &gs,
            cfg.lr_critic,
            cfg.weight_decay_critic,
        )?;
    }
    Ok(())
}

fn main_phase(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    src: &SourceBatch,
    tgt_input: &Tensor,
    step: u64,
    bundle: &mut LossBundle,
) -> Result<()> {
    let lambda = cfg.effective_lambda_da();
    let mut g = Graph::new();
    let model = params.bind(&mut g, Trainable::MAIN);
    let xs = g.constant(src.input.clone());
    let zs = model.embed(&mut g, xs)?;
    let src_loss = source_loss_node(&mut g, &model, zs, src)?;
    let sv = g.value(src_loss).item()?;
    if !sv.is_finite() {
        return Err(DialError::NonFinite {
            step,
            component: "src_loss",
        });
    }
    bundle.src_loss = sv;
    let total = if cfg.uses_critic() {
        let xt = g.constant(tgt_input.clone());
        let zt = model.embed(&mut g, xt)?;
        let gap = gap_node(&mut g, &model, zs, zt)?;
        let gv = g.value(gap).item()?;
        if !gv.is_finite() {
            return Err(DialError::NonFinite {
                step,
                component: "embedder_da_loss",
            });
        }
        bundle.embedder_da_loss = gv;
        if lambda > 0.0 {
            let w = g.scale(gap, lambda)?;
            g.add(src_loss, w)?
        } else {
            src_loss
        }
    } else {
        src_loss
    };
    let grads = g.backward(total)?;
    let gs: Vec<Tensor> = model
        .trainable_nodes(Trainable::MAIN)
        .into_iter()
        .map(|n| grads.wrt(n))
        .collect();
    opt.apply(
        params.trainable_tensors_mut(Trainable::MAIN),
        &gs,
        cfg.lr_main,
        cfg.weight_decay_main,
    )
}

/// Trains only the critic, on embeddings of `src` and `tgt` under frozen
/// theta: `rounds` rounds of `cfg.critic_iters` updates, each on fresh
/// minibatches. Returns the losses of each round's first update.
pub fn fit_critic(
    params: &mut ModelParams,
    src: &[Example],
    tgt: &[Example],
    cfg: &TrainConfig,
    rounds: usize,
) -> Result<Vec<LossBundle>> {
    cfg.validate()?;
    if src.is_empty() || tgt.is_empty() {
        return Err(DialError::Empty("critic training set"));
    }
    let mut opt = OptimizerState::new(&sizes(params, Trainable::CRITIC));
    let mut rng_data = stream(cfg.seed, DATA_STREAM);
    let mut rng_critic = stream(cfg.seed, CRITIC_STREAM);
    let (mut cs, mut ct) = (Cycler::new(src.len()), Cycler::new(tgt.len()));
    cs.start_epoch(&mut rng_data);
    ct.start_epoch(&mut rng_data);
    let mut out = Vec::with_capacity(rounds);
    for r in 0..rounds {
        let bs: Vec<Example> = cs
            .take(cfg.batch_src.min(src.len()), &mut rng_data)
            .into_iter()
            .map(|i| src[i].clone())
            .collect();
        let bt: Vec<Example> = ct
            .take(cfg.batch_tgt.min(tgt.len()), &mut rng_data)
            .into_iter()
            .map(|i| tgt[i].clone())
            .collect();
        let mut b = LossBundle::default();
        critic_phase(
            params,
            &mut opt,
            cfg,
            &batch_matrix(&bs)?,
            &batch_matrix(&bt)?,
            &mut rng_critic,
            r as u64 + 1,
            &mut b,
        )?;
        out.push(b);
    }
    Ok(out)
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<StepRecord>,
    pub final_metrics: FinalMetrics,
}

/// Trains from a fresh initialisation for `cfg.epochs` epochs.
pub fn train(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    src: &[PreferenceTriple],
    tgt: &[Example],
    evals: &EvalSets,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(model_config.clone(), cfg.clone())?;
    train_with(&mut t, src, tgt, evals, &mut |_| Ok(()), &mut |_| Ok(()))
}

/// Epoch loop over an existing trainer; `on_epoch` runs after each epoch
/// (checkpointing hooks in here).
pub fn train_with(
    t: &mut Trainer,
    src: &[PreferenceTriple],
    tgt: &[Example],
    evals: &EvalSets,
    on_step: &mut dyn FnMut(&StepRecord) -> Result<()>,
    on_epoch: &mut dyn FnMut(&Trainer) -> Result<()>,
) -> Result<TrainOutcome> {
    if src.is_empty() {
        return Err(DialError::Empty("source preference set"));
    }
    if tgt.is_empty() && t.cfg.uses_critic() {
        return Err(DialError::Empty("target example set"));
    }
    let dim = t.params.input_dim();
    if let Some(bad) = src
        .iter()
        .flat_map(|s| std::iter::once(s.chosen()).chain(s.rejected()))
        .find(|e| e.dim() != dim)
    {
        return Err(DialError::SizeMismatch(dim, bad.dim()));
    }
    if let Some(bad) = tgt.iter().find(|e| e.dim() != dim) {
        return Err(DialError::SizeMismatch(dim, bad.dim()));
    }
    let mut history = Vec::new();
    while (t.epoch as usize) < t.cfg.epochs {
        history.extend(t.run_epoch(src, tgt, evals, on_step)?);
        on_epoch(t)?;
    }
    let last = history
        .iter()
        .rev()
        .find(|r| r.eval_accuracy_src.is_some() || r.eval_accuracy_tgt.is_some());
    let final_metrics = FinalMetrics {
        method: t.cfg.method,
        steps: t.step,
        epochs: t.epoch,
        last_losses: history.last().map(|r| r.losses),
        eval_accuracy_src: last.and_then(|r| r.eval_accuracy_src),
        eval_accuracy_tgt: last.and_then(|r| r.eval_accuracy_tgt),
    };
    Ok(TrainOutcome {
        params: t.params.clone(),
        history,
        final_metrics,
    })
}

#[cfg(test)]
mod tests;
