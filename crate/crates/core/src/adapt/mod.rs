//! Two-phase episodic loop.
//!
//! Phase 1 re-draws the adaptable parameters of an episode and fits them to
//! the support pairs for a few inner steps with a fresh optimizer. Phase 2
//! predicts the query pairs once; during training its loss updates the trunk
//! perturbations with the layerwise trunk rates.

mod config;
mod run;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{batch_tensor, kunet_decode, Model, ParamGroup, Slot, VariantTag};
use crate::ndcore::{adam_step, sgd_step, AdamState, Tape, Var};
use crate::synthgen::Pair;

pub use config::{AdaptConfig, GradTransform, OptimizerKind};
pub use run::{
    adapt_and_predict, evaluate, mean_std, train_run, train_run_observed, EpisodeRecord, EpochStats,
    EvalReport, PhaseEvent, Predictions, RunLog,
};

/// Optimizer with per-slot state, created lazily on first update.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    states: BTreeMap<Slot, AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            states: BTreeMap::new(),
        }
    }

    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &[(Slot, Vec<f64>)],
        lr: impl Fn(Slot) -> f64,
    ) -> Result<()> {
        for (slot, g) in grads {
            let params = model.slot_mut(*slot)?;
            match self.kind {
                OptimizerKind::Sgd => sgd_step(params, g, lr(*slot))?,
                OptimizerKind::Adam => {
                    let state = self
                        .states
                        .entry(*slot)
                        .or_insert_with(|| AdamState::new(g.len()));
                    adam_step(params, g, state, lr(*slot))?;
                }
            }
        }
        Ok(())
    }
}

fn split_pairs(pairs: &[Pair], model: &Model) -> Result<(crate::ndcore::Tensor, crate::ndcore::Tensor)> {
    if pairs.is_empty() {
        return Err(Error::Contract("task loss needs at least one pair".into()));
    }
    let xs: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.clone()).collect();
    let ys: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
    Ok((
        batch_tensor(&xs, model.arch.input_len)?,
        batch_tensor(&ys, model.arch.output_len)
            .map_err(|e| Error::dim(format!("targets: {e}")))?,
    ))
}

/// Tape nodes of one loss evaluation.
struct LossGraph {
    tape: Tape,
    bound: crate::model::Bound,
    mse: Var,
    total: Var,
}

fn build_loss(model: &Model, pairs: &[Pair], group: ParamGroup) -> Result<LossGraph> {
    let (x, y) = split_pairs(pairs, model)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, group)?;
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let pred = model.forward_bound(&mut tape, &bound, xv)?;
    let mse = tape.mse(pred, yv)?;
    let pen = model.penalty(&mut tape, &bound)?;
    let total = tape.weighted_sum(&[(mse, 1.0), (pen, 1.0)])?;
    Ok(LossGraph {
        tape,
        bound,
        mse,
        total,
    })
}

/// Mean squared error over the pairs plus `sum_l gamma_l ||theta_l||^2`
/// (the penalty is zero for variants without trunk perturbations).
pub fn task_loss(model: &Model, pairs: &[Pair]) -> Result<f64> {
    let g = build_loss(model, pairs, ParamGroup::Nothing)?;
    Ok(g.tape.value(g.total).item())
}

/// Mean squared prediction error over the pairs, without the penalty.
pub fn pair_mse(model: &Model, pairs: &[Pair]) -> Result<f64> {
    let g = build_loss(model, pairs, ParamGroup::Nothing)?;
    Ok(g.tape.value(g.mse).item())
}

/// Support loss before and after each phase-1 step.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase1Trace {
    pub losses: Vec<f64>,
}

impl Phase1Trace {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

fn phase1_group(model: &Model, cfg: &AdaptConfig) -> Result<ParamGroup> {
    Ok(match model.variant() {
        VariantTag::Dynamic if cfg.joint_phase1 => ParamGroup::TrunkAndBranch,
        VariantTag::Dynamic => ParamGroup::Branch,
        VariantTag::InitAll => ParamGroup::All,
        VariantTag::Lora => ParamGroup::Adapters,
        VariantTag::Static => {
            return Err(Error::Contract("the static variant has no test-time adaptation phase".into()))
        }
    })
}

/// Fits the adaptable set to the support pairs for `steps` updates at rate
/// `beta` with a fresh optimizer. Returns the support loss trace
/// (`steps + 1` entries: before the first and after the last update).
pub fn phase1_adapt(
    model: &mut Model,
    support: &[Pair],
    cfg: &AdaptConfig,
    steps: usize,
) -> Result<Phase1Trace> {
    phase1_impl(model, support, cfg, steps, true)
}

fn phase1_impl(
    model: &mut Model,
    support: &[Pair],
    cfg: &AdaptConfig,
    steps: usize,
    cache_trunk: bool,
) -> Result<Phase1Trace> {
    let group = phase1_group(model, cfg)?;
    if !cfg.phase1_enabled || steps == 0 {
        return Ok(Phase1Trace {
            losses: vec![task_loss(model, support)?],
        });
    }
    let mut opt = Optimizer::new(cfg.optimizer);
    let trunk_rate = |slot: Slot| match slot {
        Slot::Theta(l) => cfg.alphas.get(l).copied().unwrap_or(cfg.beta),
        _ => cfg.beta,
    };
    let mut losses = Vec::with_capacity(steps + 1);

    if group == ParamGroup::Branch && cache_trunk {
        // Trunk is fixed during phase 1: encode the support inputs once.
        let (x, y) = split_pairs(support, model)?;
        let levels = model.encode_constants(&x)?;
        for _ in 0..steps {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, ParamGroup::Branch)?;
            let level_vars: Vec<Var> = levels.iter().map(|t| tape.constant(t.clone())).collect();
            let pred = kunet_decode(
                &mut tape,
                &model.arch,
                &bound.layers[model.arch.trunk_depth..],
                &level_vars,
                1.0,
            )?;
            let yv = tape.constant(y.clone());
            let mse = tape.mse(pred, yv)?;
            let pen = model.penalty(&mut tape, &bound)?;
            let total = tape.weighted_sum(&[(mse, 1.0), (pen, 1.0)])?;
            losses.push(tape.value(total).item());
            tape.backward(total)?;
            let mut grads = bound.slot_grads(&tape);
            cfg.grad_transform.apply(&mut grads);
            opt.step(model, &grads, trunk_rate)?;
        }
    } else {
        for _ in 0..steps {
            let mut g = build_loss(model, support, group)?;
            losses.push(g.tape.value(g.total).item());
            g.tape.backward(g.total)?;
            let mut grads = g.bound.slot_grads(&g.tape);
            cfg.grad_transform.apply(&mut grads);
            opt.step(model, &grads, trunk_rate)?;
        }
    }
    losses.push(task_loss(model, support)?);
    Ok(Phase1Trace { losses })
}

/// One pass over the query pairs. With `train_trunk` (dynamic variant only)
/// the query loss, penalty included, updates each `theta_l` at rate
/// `alpha_l` through `trunk_opt`. Returns the query MSE seen by the pass.
pub fn phase2_step(
    model: &mut Model,
    query: &[Pair],
    cfg: &AdaptConfig,
    train_trunk: bool,
    trunk_opt: &mut Optimizer,
) -> Result<f64> {
    if !train_trunk {
        return pair_mse(model, query);
    }
    if model.variant() != VariantTag::Dynamic {
        return Err(Error::Contract(format!(
            "phase-2 trunk updates apply to the dynamic variant, not {}",
            model.variant()
        )));
    }
    let mut g = build_loss(model, query, ParamGroup::Trunk)?;
    let mse = g.tape.value(g.mse).item();
    g.tape.backward(g.total)?;
    let mut grads = g.bound.slot_grads(&g.tape);
    cfg.grad_transform.apply(&mut grads);
    trunk_opt.step(model, &grads, |slot| match slot {
        Slot::Theta(l) => cfg.alphas[l],
        _ => unreachable!("only theta is trainable in phase 2"),
    })?;
    Ok(mse)
}

/// Supervised update of the static baseline on all pairs of an episode.
/// Returns the pre-update MSE over the pairs.
pub fn static_step(
    model: &mut Model,
    pairs: &[Pair],
    cfg: &AdaptConfig,
    opt: &mut Optimizer,
) -> Result<f64> {
    if model.variant() != VariantTag::Static {
        return Err(Error::Contract("static_step needs the static variant".into()));
    }
    let mut g = build_loss(model, pairs, ParamGroup::All)?;
    let mse = g.tape.value(g.mse).item();
    g.tape.backward(g.total)?;
    let mut grads = g.bound.slot_grads(&g.tape);
    cfg.grad_transform.apply(&mut grads);
    opt.step(model, &grads, |_| cfg.static_lr)?;
    Ok(mse)
}

#[cfg(test)]
mod tests;
