//! Training: trajectory balance over hybrid online/offline batches with MLE
//! regularization on the offline share, relative trajectory balance against
//! a frozen prior for finetuning, and the shared optimizer machinery (Adam
//! with decoupled weight decay, stepwise learning-rate halving, global
//! gradient-norm clipping).
//!
//! Single-threaded and bit-reproducible: every trajectory draws from its own
//! counter-derived RNG substream, so batch composition depends only on
//! (seed, step, slot index).

use crate::autodiff::{Tape, Tensor, Var};
use crate::descriptors::{DescriptorError, Evaluator};
use crate::mdp::{
    apply, backward_actions, deconstruct, forward_actions, Action, MdpConfig, MdpError, State,
    Trajectory,
};
use crate::molgraph::MolGraph;
use crate::policy::{self, Binding, Direction, PolicyError, PolicyParams};
use crate::reward::{
    aggregate_reward, floored_log_reward_with, sample_conditionals, ConditionalSpec,
    ConditioningContext, RewardError, SampleMode, DEFAULT_OOB_PERCENT, DEFAULT_SIGMA_FRAC,
    ILLEGAL_ACTION_LOGREWARD,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    /// Non-finite loss. The CLI maps this to exit code 4.
    #[error("numeric abort at step {step}: {detail}")]
    NumericAbort { step: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// TB + MLE over the hybrid online/offline mix.
    Pretrain,
    /// TB on the finetuning reward, single policy, online batches.
    FinetuneTb,
    /// RTB against a frozen prior, online batches from the posterior.
    FinetuneRtb,
    /// Same losses as FinetuneTb; callers start from random parameters.
    TaskTrain,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "pretrain" => Some(Mode::Pretrain),
            "finetune_tb" | "tb" => Some(Mode::FinetuneTb),
            "finetune_rtb" | "rtb" => Some(Mode::FinetuneRtb),
            "tasktrain" => Some(Mode::TaskTrain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Reward exponent: residuals use beta * log R.
    pub beta: f64,
    /// TB weight in the pretraining total.
    pub lambda1: f64,
    /// MLE weight in the pretraining total.
    pub lambda2: f64,
    /// Online fraction of each sampling round; the rest is deconstructed
    /// from the dataset.
    pub mix_ratio: f64,
    pub learning_rate: f64,
    /// The logZ head trains faster than the trunk.
    pub z_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Steps for the main learning rate to halve.
    pub lr_decay: f64,
    pub z_lr_decay: f64,
    pub grad_clip: f64,
    /// Trajectories produced per sampling round.
    pub sampling_batch_size: usize,
    /// Trajectories consumed per gradient step.
    pub training_batch_size: usize,
    pub max_num_iter: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub random_action_prob: f64,
    pub random_stop_prob: f64,
    pub sample_temp: f64,
    /// Chance a sampled conditional range is an out-of-band example.
    pub oob_percent: f64,
    /// Offline range width around the property value, as a fraction of the
    /// sampling window.
    pub sigma_frac: f64,
    /// Restart cap for offline deconstruction walks; None disables.
    pub num_back_steps_max: Option<usize>,
    /// Stddev of the logZ-head noise applied when finetuning starts.
    pub logz_recalibration_sigma: f64,
    /// Score backward steps with the learned heads; false falls back to a
    /// uniform distribution over legal backward actions.
    pub p_b_is_parameterized: bool,
    /// Shuffle each training batch before the gradient step.
    pub batch_shuffle: bool,
    /// Reward bootstrapping is not supported; validation rejects true.
    pub bootstrap_own_reward: bool,
    /// Floor for log R in residuals; keeps near-zero rewards finite.
    pub illegal_action_logreward: f64,
}

impl TrainConfig {
    pub fn pretrain_defaults() -> TrainConfig {
        TrainConfig {
            beta: 96.0,
            lambda1: 0.04,
            lambda2: 20.0,
            mix_ratio: 0.5,
            learning_rate: 1e-4,
            z_learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-8,
            lr_decay: 20_000.0,
            z_lr_decay: 20_000.0,
            grad_clip: 10.0,
            sampling_batch_size: 2048,
            training_batch_size: 64,
            max_num_iter: 500_000,
            seed: 1_428_570,
            checkpoint_every: 1000,
            random_action_prob: 0.001,
            random_stop_prob: 0.001,
            sample_temp: 1.0,
            oob_percent: DEFAULT_OOB_PERCENT,
            sigma_frac: DEFAULT_SIGMA_FRAC,
            num_back_steps_max: None,
            logz_recalibration_sigma: 0.0,
            p_b_is_parameterized: true,
            batch_shuffle: false,
            bootstrap_own_reward: false,
            illegal_action_logreward: ILLEGAL_ACTION_LOGREWARD,
        }
    }

    pub fn finetune_defaults() -> TrainConfig {
        TrainConfig {
            beta: 64.0,
            mix_ratio: 1.0,
            sampling_batch_size: 1024,
            checkpoint_every: 500,
            logz_recalibration_sigma: 0.1,
            ..TrainConfig::pretrain_defaults()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.into()));
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return bad("mix_ratio must lie in [0, 1]");
        }
        if self.beta <= 0.0 {
            return bad("beta must be positive");
        }
        if self.learning_rate <= 0.0 || self.z_learning_rate <= 0.0 {
            return bad("learning rates must be positive");
        }
        if self.lr_decay <= 0.0 || self.z_lr_decay <= 0.0 {
            return bad("decay horizons must be positive");
        }
        if self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        if self.training_batch_size == 0 || self.sampling_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.sampling_batch_size % self.training_batch_size != 0 {
            return bad("sampling_batch_size must be a multiple of training_batch_size");
        }
        if self.sample_temp <= 0.0 {
            return bad("sample_temp must be positive");
        }
        if !(0.0..=1.0).contains(&self.random_action_prob)
            || !(0.0..=1.0).contains(&self.random_stop_prob)
        {
            return bad("exploration probabilities must lie in [0, 1]");
        }
        if self.bootstrap_own_reward {
            return bad("bootstrap_own_reward is not supported");
        }
        if !self.illegal_action_logreward.is_finite() {
            return bad("illegal_action_logreward must be finite");
        }
        Ok(())
    }

    /// Main learning rate after `step` updates: halves every `lr_decay`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.learning_rate * (-(step as f64) / self.lr_decay).exp2()
    }

    pub fn z_lr_at(&self, step: usize) -> f64 {
        self.z_learning_rate * (-(step as f64) / self.z_lr_decay).exp2()
    }
}

/// Per-step loss record. In pretraining `total = lambda1*tb + lambda2*mle`
/// exactly; in RTB finetuning `total = rtb`.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub tb: f64,
    pub mle: f64,
    pub rtb: f64,
    pub total: f64,
    pub residuals: Vec<f64>,
    pub mean_reward: f64,
    pub validity: f64,
}

/// Exploration knobs for online rollouts.
#[derive(Debug, Clone, Copy)]
pub struct Exploration {
    pub random_action_prob: f64,
    pub random_stop_prob: f64,
    pub temp: f64,
}

impl Exploration {
    pub fn none() -> Exploration {
        Exploration { random_action_prob: 0.0, random_stop_prob: 0.0, temp: 1.0 }
    }
}

/// Independent RNG for one (seed, step, slot, salt) cell. SplitMix-style
/// mixing keeps distinct cells uncorrelated.
pub fn substream(seed: u64, step: u64, slot: u64, salt: u64) -> ChaCha8Rng {
    let mut x = seed ^ 0x9e3779b97f4a7c15;
    for w in [step, slot, salt] {
        x ^= w.wrapping_add(0x9e3779b97f4a7c15).wrapping_mul(0xbf58476d1ce4e5b9);
        x ^= x >> 27;
        x = x.wrapping_mul(0x94d049bb133111eb);
        x ^= x >> 31;
    }
    ChaCha8Rng::seed_from_u64(x)
}

/// One on-policy rollout from `s0` to a terminal state.
pub fn rollout(
    params: &PolicyParams,
    s0: &State,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
    explore: &Exploration,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, TrainError> {
    let mut states = vec![s0.clone()];
    let mut actions = Vec::new();
    // The masking never dead-ends, so the only exit is Stop.
    for t in 0..mdp_cfg.max_traj_len + 1 {
        let s = states.last().unwrap().clone();
        let legal = forward_actions(&s, t, mdp_cfg)?;
        debug_assert!(!legal.is_empty(), "forward masking must not dead-end");

        let idx = if rng.gen::<f64>() < explore.random_action_prob {
            rng.gen_range(0..legal.len())
        } else if rng.gen::<f64>() < explore.random_stop_prob
            && legal.first() == Some(&crate::mdp::Action::Stop)
        {
            0
        } else {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let out = policy::forward(
                &mut tape,
                &bound,
                params,
                &s,
                t,
                ctx,
                mdp_cfg,
                Direction::Forward,
            )?;
            sample_categorical(&tape.value(out.log_probs).data, explore.temp, rng)
        };
        let a = legal[idx].clone();
        let next = apply(&s, &a)?;
        let stop = a == crate::mdp::Action::Stop;
        states.push(next);
        actions.push(a);
        if stop {
            return Ok(Trajectory { states, actions, terminal: true });
        }
    }
    Err(TrainError::NumericAbort {
        step: 0,
        detail: "rollout exceeded max_traj_len without stopping".into(),
    })
}

/// Draw an index from log-probabilities at the given temperature.
fn sample_categorical(log_probs: &[f64], temp: f64, rng: &mut ChaCha8Rng) -> usize {
    let scaled: Vec<f64> = log_probs.iter().map(|lp| lp / temp).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|lp| (lp - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Trajectory-balance loss of one trajectory:
/// (logZ(c) + sum log P_F - beta*log R - sum log P_B)^2.
/// With `p_b_parameterized` false, log P_B is the constant uniform mass over
/// legal backward actions instead of the learned heads, so no backward
/// gradient exists. Returns the squared loss and the residual value.
pub fn tb_loss(
    tape: &mut Tape,
    bound: &Binding,
    params: &PolicyParams,
    traj: &Trajectory,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
    beta: f64,
    log_reward: f64,
    p_b_parameterized: bool,
) -> Result<(Var, f64), TrainError> {
    let logz = policy::log_z(tape, bound, params, ctx);
    let lpf = policy::log_prob_of(tape, bound, params, traj, ctx, mdp_cfg, Direction::Forward)?;
    let a = tape.add(logz, lpf);
    let residual = if p_b_parameterized {
        let lpb =
            policy::log_prob_of(tape, bound, params, traj, ctx, mdp_cfg, Direction::Backward)?;
        let b = tape.add_const(a, -beta * log_reward);
        tape.sub(b, lpb)
    } else {
        let lpb = uniform_backward_log_prob(traj, mdp_cfg)?;
        tape.add_const(a, -beta * log_reward - lpb)
    };
    let loss = tape.square(residual);
    let r = tape.value(residual).item();
    Ok((loss, r))
}

/// Sum over non-Stop steps of -ln(number of legal backward actions at the
/// successor state). Stop contributes nothing, mirroring the learned P_B.
fn uniform_backward_log_prob(traj: &Trajectory, mdp_cfg: &MdpConfig) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (t, action) in traj.actions.iter().enumerate() {
        if matches!(action, Action::Stop) {
            continue;
        }
        let k = backward_actions(&traj.states[t + 1], mdp_cfg)?.len();
        total -= (k as f64).ln();
    }
    Ok(total)
}

/// Offline maximum-likelihood term: -sum of forward step log-probabilities.
pub fn mle_loss(
    tape: &mut Tape,
    bound: &Binding,
    params: &PolicyParams,
    traj: &Trajectory,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
) -> Result<Var, TrainError> {
    let lpf = policy::log_prob_of(tape, bound, params, traj, ctx, mdp_cfg, Direction::Forward)?;
    Ok(tape.neg(lpf))
}

/// Relative trajectory-balance loss against a frozen prior:
/// (logZ(phi) + sum log P_F(phi) - beta*log R_ft - sum log P_F(theta))^2.
/// The prior's log-probability is evaluated off-tape, so no gradient ever
/// reaches it.
pub fn rtb_loss(
    tape: &mut Tape,
    bound: &Binding,
    params: &PolicyParams,
    prior: &PolicyParams,
    traj: &Trajectory,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
    beta: f64,
    log_reward: f64,
) -> Result<(Var, f64), TrainError> {
    let prior_lpf = {
        let mut scratch = Tape::new();
        let pb = prior.bind(&mut scratch);
        let v = policy::log_prob_of(
            &mut scratch,
            &pb,
            prior,
            traj,
            ctx,
            mdp_cfg,
            Direction::Forward,
        )?;
        scratch.value(v).item()
    };
    let logz = policy::log_z(tape, bound, params, ctx);
    let lpf = policy::log_prob_of(tape, bound, params, traj, ctx, mdp_cfg, Direction::Forward)?;
    let a = tape.add(logz, lpf);
    let residual = tape.add_const(a, -beta * log_reward - prior_lpf);
    let loss = tape.square(residual);
    let r = tape.value(residual).item();
    Ok((loss, r))
}

/// Rescale gradients in place so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in &g.data {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data.iter_mut() {
                *v *= k;
            }
        }
    }
    norm
}

/// Adam with decoupled weight decay. Tensors whose names start with `logz.`
/// form their own learning-rate group.
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Adam {
        let m = params.tensors().iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        let v = params.tensors().iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect();
        Adam { m, v, t: 0 }
    }

    /// One update. `grads` aligns with `params.tensors()`; `lrs` gives the
    /// per-tensor learning rate.
    pub fn update(
        &mut self,
        params: &mut PolicyParams,
        grads: &[Tensor],
        lrs: &[f64],
        cfg: &TrainConfig,
    ) {
        self.t += 1;
        let (b1, b2, eps, wd) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let lr = lrs[i];
            for j in 0..p.data.len() {
                let g = grads[i].data[j];
                let m = b1 * self.m[i].data[j] + (1.0 - b1) * g;
                let v = b2 * self.v[i].data[j] + (1.0 - b2) * g * g;
                self.m[i].data[j] = m;
                self.v[i].data[j] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                p.data[j] -= lr * (mhat / (vhat.sqrt() + eps) + wd * p.data[j]);
            }
        }
    }
}

/// One trajectory ready for loss computation.
pub struct BatchItem {
    pub traj: Trajectory,
    pub ctx: ConditioningContext,
    pub offline: bool,
    pub reward: f64,
    pub log_reward: f64,
}

/// How per-trajectory conditioning ranges are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Resample ranges per trajectory (pretraining).
    Resampled,
    /// Use each spec's canonical range (finetuning on a fixed task).
    Fixed,
}

/// Where training output goes. Everything is optional so tests can train
/// fully in memory.
pub struct TrainIo<'a> {
    pub checkpoint_dir: Option<&'a Path>,
    pub log: Option<&'a mut dyn Write>,
    /// Log real wall time per interval. Off by default: timing lines break
    /// byte-for-byte reproducibility between runs.
    pub log_wall_time: bool,
}

impl Default for TrainIo<'_> {
    fn default() -> Self {
        TrainIo { checkpoint_dir: None, log: None, log_wall_time: false }
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub mode: Mode,
    pub mdp_cfg: MdpConfig,
    pub specs: Vec<ConditionalSpec>,
    pub evaluator: Evaluator,
    pub params: PolicyParams,
    /// Frozen prior for RTB; never updated.
    pub prior: Option<PolicyParams>,
    pub dataset: Vec<MolGraph>,
    /// Episode start: empty, or a frozen scaffold.
    pub s0: State,
    pub conditioning: Conditioning,
    ext_reward: Option<Box<dyn Fn(&MolGraph) -> f64 + Send + Sync>>,
    workers: usize,
    opt: Adam,
    step: usize,
    pool: Vec<BatchItem>,
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        mode: Mode,
        mdp_cfg: MdpConfig,
        specs: Vec<ConditionalSpec>,
        params: PolicyParams,
    ) -> Result<Trainer, TrainError> {
        cfg.validate()?;
        if specs.is_empty() {
            return Err(TrainError::BadConfig("at least one conditional is required".into()));
        }
        let expected = ConditioningContext::encoding_len(specs.len());
        if params.config.cond_dim != expected {
            return Err(TrainError::BadConfig(format!(
                "policy cond_dim {} does not match {} conditionals (need {expected})",
                params.config.cond_dim,
                specs.len()
            )));
        }
        let opt = Adam::new(&params);
        let conditioning =
            if mode == Mode::Pretrain { Conditioning::Resampled } else { Conditioning::Fixed };
        Ok(Trainer {
            cfg,
            mode,
            mdp_cfg,
            specs,
            evaluator: Evaluator::new(),
            params,
            prior: None,
            dataset: Vec::new(),
            s0: State::empty(),
            conditioning,
            ext_reward: None,
            workers: 1,
            opt,
            step: 0,
            pool: Vec::new(),
        })
    }

    pub fn with_prior(mut self, prior: PolicyParams) -> Trainer {
        self.prior = Some(prior);
        self
    }

    pub fn with_dataset(mut self, dataset: Vec<MolGraph>) -> Trainer {
        self.dataset = dataset;
        self
    }

    pub fn with_scaffold(mut self, s0: State) -> Trainer {
        self.s0 = s0;
        self
    }

    pub fn with_external_reward(
        mut self,
        f: Box<dyn Fn(&MolGraph) -> f64 + Send + Sync>,
    ) -> Trainer {
        self.ext_reward = Some(f);
        self
    }

    /// Sampling threads for pool refills. Batches are identical for any
    /// worker count because every slot draws from its own counter-derived
    /// substream and the pool keeps slot order.
    pub fn with_workers(mut self, workers: usize) -> Trainer {
        self.workers = workers.max(1);
        self
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    fn check_mode_inputs(&self) -> Result<(), TrainError> {
        if self.mode == Mode::FinetuneRtb && self.prior.is_none() {
            return Err(TrainError::BadConfig("RTB finetuning requires a prior".into()));
        }
        if self.mode == Mode::Pretrain && self.cfg.mix_ratio < 1.0 && self.dataset.is_empty() {
            return Err(TrainError::BadConfig(
                "mix_ratio < 1 needs a dataset for the offline share".into(),
            ));
        }
        Ok(())
    }

    fn context_for(&self, slot_rng: &mut ChaCha8Rng, values: Option<&[f64]>) -> Result<ConditioningContext, TrainError> {
        match self.conditioning {
            Conditioning::Fixed => Ok(ConditioningContext::fixed(&self.specs)?),
            Conditioning::Resampled => {
                let mode = match values {
                    Some(v) => SampleMode::Offline { property_values: v },
                    None => SampleMode::Online,
                };
                Ok(sample_conditionals(
                    &self.specs,
                    mode,
                    self.cfg.sigma_frac,
                    self.cfg.oob_percent,
                    slot_rng,
                )?)
            }
        }
    }

    fn reward_of(&self, x: &MolGraph, ctx: &ConditioningContext) -> Result<(f64, f64), TrainError> {
        let ext = match &self.ext_reward {
            Some(f) => Some(f(x)),
            None => None,
        };
        let r = aggregate_reward(x, ctx, &self.evaluator, ext)?;
        Ok((r, floored_log_reward_with(r, self.cfg.illegal_action_logreward)))
    }

    /// Produce one sampling round of trajectories. Non-pretrain modes are
    /// fully online; pretraining splits the round by mix_ratio.
    fn refill_pool(&mut self) -> Result<(), TrainError> {
        self.pool.clear();
        let total = self.cfg.sampling_batch_size;
        let online = if self.mode == Mode::Pretrain {
            (self.cfg.mix_ratio * total as f64).round() as usize
        } else {
            total
        };
        let explore = Exploration {
            random_action_prob: self.cfg.random_action_prob,
            random_stop_prob: self.cfg.random_stop_prob,
            temp: self.cfg.sample_temp,
        };
        if self.workers <= 1 || total < 2 {
            for slot in 0..total {
                let item = self.slot_item(slot, online, &explore)?;
                self.pool.push(item);
            }
            return Ok(());
        }
        let workers = self.workers.min(total);
        let chunk = total.div_ceil(workers);
        let mut results: Vec<Result<BatchItem, TrainError>> = std::thread::scope(|scope| {
            let this = &*self;
            let explore = &explore;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(total);
                    scope.spawn(move || {
                        (lo..hi)
                            .map(|slot| this.slot_item(slot, online, explore))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sampling worker panicked"))
                .collect()
        });
        for item in results.drain(..) {
            self.pool.push(item?);
        }
        Ok(())
    }

    /// Build the trajectory for one pool slot. Depends only on
    /// (seed, step, slot), so slots can be produced in any order or thread.
    fn slot_item(
        &self,
        slot: usize,
        online: usize,
        explore: &Exploration,
    ) -> Result<BatchItem, TrainError> {
        let mut rng = substream(self.cfg.seed, self.step as u64, slot as u64, 0);
        if slot < online {
            let ctx = self.context_for(&mut rng, None)?;
            let traj = rollout(&self.params, &self.s0, &ctx, &self.mdp_cfg, explore, &mut rng)?;
            let x = &traj.states.last().unwrap().graph;
            let (reward, log_reward) = self.reward_of(x, &ctx)?;
            Ok(BatchItem { traj, ctx, offline: false, reward, log_reward })
        } else {
            let x = self.dataset[rng.gen_range(0..self.dataset.len())].clone();
            let frozen = if self.s0.frozen_nodes > 0 {
                Some((self.s0.frozen_nodes, self.s0.frozen_edges))
            } else {
                None
            };
            let traj = deconstruct(
                &x,
                frozen,
                &self.mdp_cfg,
                &mut |_s: &State, acts: &[Action]| rng.gen_range(0..acts.len()),
                self.cfg.num_back_steps_max,
            )?;
            let mut values = Vec::with_capacity(self.specs.len());
            for spec in &self.specs {
                values.push(self.evaluator.eval(&spec.property, &x)?);
            }
            let ctx = self.context_for(&mut rng, Some(&values))?;
            let (reward, log_reward) = self.reward_of(&x, &ctx)?;
            Ok(BatchItem { traj, ctx, offline: true, reward, log_reward })
        }
    }

    /// Assemble the next training batch, refilling the sampling pool when it
    /// runs dry. Consumption order within a round is the sampling order
    /// unless batch_shuffle permutes the drawn batch.
    pub fn assemble_batch(&mut self) -> Result<Vec<BatchItem>, TrainError> {
        self.check_mode_inputs()?;
        if self.pool.len() < self.cfg.training_batch_size {
            self.refill_pool()?;
        }
        let mut batch: Vec<BatchItem> =
            self.pool.drain(..self.cfg.training_batch_size).collect();
        if self.cfg.batch_shuffle {
            let mut rng = substream(self.cfg.seed, self.step as u64, 0, 2);
            batch.shuffle(&mut rng);
        }
        Ok(batch)
    }

    /// One optimization step. Returns the loss record.
    pub fn train_step(&mut self) -> Result<LossBreakdown, TrainError> {
        let batch = self.assemble_batch()?;
        let n = batch.len() as f64;
        let mean_reward = batch.iter().map(|b| b.reward).sum::<f64>() / n;
        let validity = batch
            .iter()
            .filter(|b| b.traj.terminal && !b.traj.states.last().unwrap().graph.is_empty())
            .count() as f64
            / n;

        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let mut residuals = Vec::with_capacity(batch.len());
        let mut tb_terms: Vec<Var> = Vec::new();
        let mut mle_terms: Vec<Var> = Vec::new();
        let mut rtb_terms: Vec<Var> = Vec::new();

        for item in &batch {
            match self.mode {
                Mode::Pretrain | Mode::FinetuneTb | Mode::TaskTrain => {
                    let (loss, r) = tb_loss(
                        &mut tape,
                        &bound,
                        &self.params,
                        &item.traj,
                        &item.ctx,
                        &self.mdp_cfg,
                        self.cfg.beta,
                        item.log_reward,
                        self.cfg.p_b_is_parameterized,
                    )?;
                    tb_terms.push(loss);
                    residuals.push(r);
                    if self.mode == Mode::Pretrain && item.offline {
                        let m = mle_loss(
                            &mut tape,
                            &bound,
                            &self.params,
                            &item.traj,
                            &item.ctx,
                            &self.mdp_cfg,
                        )?;
                        mle_terms.push(m);
                    }
                }
                Mode::FinetuneRtb => {
                    let prior = self.prior.as_ref().expect("checked by check_mode_inputs");
                    let (loss, r) = rtb_loss(
                        &mut tape,
                        &bound,
                        &self.params,
                        prior,
                        &item.traj,
                        &item.ctx,
                        &self.mdp_cfg,
                        self.cfg.beta,
                        item.log_reward,
                    )?;
                    rtb_terms.push(loss);
                    residuals.push(r);
                }
            }
        }

        let mean_of = |tape: &mut Tape, terms: &[Var]| -> Option<Var> {
            let (&first, rest) = terms.split_first()?;
            let mut acc = first;
            for &t in rest {
                acc = tape.add(acc, t);
            }
            Some(tape.scale(acc, 1.0 / terms.len() as f64))
        };

        let tb_mean = mean_of(&mut tape, &tb_terms);
        let mle_mean = mean_of(&mut tape, &mle_terms);
        let rtb_mean = mean_of(&mut tape, &rtb_terms);

        let total_var = match self.mode {
            Mode::Pretrain => {
                let tb = tape.scale(tb_mean.unwrap(), self.cfg.lambda1);
                match mle_mean {
                    Some(m) => {
                        let mm = tape.scale(m, self.cfg.lambda2);
                        tape.add(tb, mm)
                    }
                    None => tb,
                }
            }
            Mode::FinetuneTb | Mode::TaskTrain => tb_mean.unwrap(),
            Mode::FinetuneRtb => rtb_mean.unwrap(),
        };

        let tb_val = tb_mean.map_or(0.0, |v| tape.value(v).item());
        let mle_val = mle_mean.map_or(0.0, |v| tape.value(v).item());
        let rtb_val = rtb_mean.map_or(0.0, |v| tape.value(v).item());
        let total = tape.value(total_var).item();

        if !total.is_finite() {
            return Err(TrainError::NumericAbort {
                step: self.step,
                detail: format!(
                    "non-finite loss {total}; residuals {residuals:?}; rewards {:?}",
                    batch.iter().map(|b| b.reward).collect::<Vec<_>>()
                ),
            });
        }

        // No hidden terms: the decomposition must hold to the last bit.
        match self.mode {
            Mode::Pretrain => {
                let recomposed = if mle_terms.is_empty() {
                    self.cfg.lambda1 * tb_val
                } else {
                    self.cfg.lambda1 * tb_val + self.cfg.lambda2 * mle_val
                };
                assert_eq!(total, recomposed, "loss decomposition broken");
            }
            Mode::FinetuneRtb => assert_eq!(total, rtb_val),
            _ => assert_eq!(total, tb_val),
        }

        let grads = tape.backward(total_var);
        let mut aligned: Vec<Tensor> = bound
            .vars()
            .iter()
            .map(|v| grads[v.index()].clone())
            .collect();
        clip_global_norm(&mut aligned, self.cfg.grad_clip);

        let lr = self.cfg.lr_at(self.step);
        let z_lr = self.cfg.z_lr_at(self.step);
        let lrs: Vec<f64> = self
            .params
            .names()
            .iter()
            .map(|n| if n.starts_with("logz.") { z_lr } else { lr })
            .collect();
        self.opt.update(&mut self.params, &aligned, &lrs, &self.cfg);
        self.step += 1;

        Ok(LossBreakdown {
            tb: tb_val,
            mle: mle_val,
            rtb: rtb_val,
            total,
            residuals,
            mean_reward,
            validity,
        })
    }

    /// Run `iters` steps, writing checkpoints and log records every
    /// `checkpoint_every` steps.
    pub fn run(&mut self, iters: usize, io: &mut TrainIo) -> Result<LossBreakdown, TrainError> {
        self.check_mode_inputs()?;
        let started = std::time::Instant::now();
        let mut last = None;
        for _ in 0..iters {
            let rec = self.train_step()?;
            if self.step % self.cfg.checkpoint_every == 0 || self.step == self.cfg.max_num_iter {
                if let Some(dir) = io.checkpoint_dir {
                    std::fs::create_dir_all(dir)?;
                    self.params.save(&dir.join(format!("step_{:07}.ckpt", self.step)))?;
                    self.params.save(&dir.join("latest.ckpt"))?;
                }
                if let Some(log) = io.log.as_deref_mut() {
                    let wall = if io.log_wall_time { started.elapsed().as_secs_f64() } else { 0.0 };
                    writeln!(
                        log,
                        "step={} tb={:.6e} mle={:.6e} rtb={:.6e} total={:.6e} reward={:.6e} validity={:.4} wall={:.3}",
                        self.step, rec.tb, rec.mle, rec.rtb, rec.total, rec.mean_reward, rec.validity, wall
                    )?;
                }
            }
            last = Some(rec);
        }
        last.ok_or_else(|| TrainError::BadConfig("run of zero iterations".into()))
    }
}

/// Sample the molecule at inference slot `index` with exploration off.
/// Deterministic in (seed, index) alone, so any index set can be produced
/// in any order or thread.
pub fn sample_terminal(
    params: &PolicyParams,
    specs: &[ConditionalSpec],
    mdp_cfg: &MdpConfig,
    s0: &State,
    index: u64,
    seed: u64,
    temp: f64,
) -> Result<(MolGraph, ConditioningContext, Trajectory), TrainError> {
    let explore = Exploration { random_action_prob: 0.0, random_stop_prob: 0.0, temp };
    let mut rng = substream(seed, 0, index, 1);
    let ctx = ConditioningContext::fixed(specs)?;
    let traj = rollout(params, s0, &ctx, mdp_cfg, &explore, &mut rng)?;
    let x = traj.states.last().unwrap().graph.clone();
    Ok((x, ctx, traj))
}

/// Sample slots `[start, start + n)`, optionally across worker threads.
/// The output is in slot order regardless of worker count.
pub fn sample_terminal_range(
    params: &PolicyParams,
    specs: &[ConditionalSpec],
    mdp_cfg: &MdpConfig,
    s0: &State,
    start: u64,
    n: usize,
    seed: u64,
    temp: f64,
    workers: usize,
) -> Result<Vec<(MolGraph, ConditioningContext, Trajectory)>, TrainError> {
    let workers = workers.max(1).min(n.max(1));
    if workers <= 1 {
        return (0..n as u64)
            .map(|i| sample_terminal(params, specs, mdp_cfg, s0, start + i, seed, temp))
            .collect();
    }
    let chunk = n.div_ceil(workers);
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(n);
                scope.spawn(move || {
                    (lo..hi)
                        .map(|i| {
                            sample_terminal(
                                params,
                                specs,
                                mdp_cfg,
                                s0,
                                start + i as u64,
                                seed,
                                temp,
                            )
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sampling worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Sample `n` molecules with exploration off, one substream per sample.
/// Returns each terminal graph with its context and trajectory.
pub fn sample_terminals(
    params: &PolicyParams,
    specs: &[ConditionalSpec],
    mdp_cfg: &MdpConfig,
    s0: &State,
    n: usize,
    seed: u64,
    temp: f64,
) -> Result<Vec<(MolGraph, ConditioningContext, Trajectory)>, TrainError> {
    sample_terminal_range(params, specs, mdp_cfg, s0, 0, n, seed, temp, 1)
}
