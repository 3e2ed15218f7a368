//! Placing a model's parameters on a tape.

use serde::{Deserialize, Serialize};

use super::{lora_effective_weight, Block, Model, Params, VariantTag};
use crate::error::{Error, Result};
use crate::ndcore::{Tape, Tensor, Var};

/// Addressable flat parameter vector inside a model. Indices are global
/// layer numbers (trunk layers first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Theta(usize),
    Psi(usize),
    Layer(usize),
    Down(usize),
    Up(usize),
}

/// Which parameters become trainable leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Nothing,
    Branch,
    Trunk,
    TrunkAndBranch,
    All,
    Adapters,
}

/// Result of binding: effective kernels per layer and the trainable leaves.
#[derive(Debug, Default)]
pub struct Bound {
    pub layers: Vec<(Var, Var)>,
    /// Leaves whose gradients, concatenated in order, match the slot layout.
    pub trainable: Vec<(Slot, Vec<Var>)>,
    penalty_terms: Vec<(Var, f64)>,
    penalty_const: f64,
}

impl Bound {
    /// Gradients per trainable slot after `Tape::backward`.
    pub fn slot_grads(&self, tape: &Tape) -> Vec<(Slot, Vec<f64>)> {
        self.trainable
            .iter()
            .map(|(slot, vars)| {
                let mut g = Vec::new();
                for &v in vars {
                    match tape.grad(v) {
                        Some(gv) => g.extend_from_slice(gv),
                        None => g.extend(std::iter::repeat_n(0.0, tape.value(v).numel())),
                    }
                }
                (*slot, g)
            })
            .collect()
    }
}

fn bind_block(tape: &mut Tape, block: &Block, trainable: bool) -> (Var, Var) {
    let (w, b) = (block.weight_tensor(), block.bias_tensor());
    if trainable {
        (tape.param(w), tape.param(b))
    } else {
        (tape.constant(w), tape.constant(b))
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl Model {
    pub fn bind(&self, tape: &mut Tape, group: ParamGroup) -> Result<Bound> {
        let allowed = match self.variant() {
            VariantTag::Dynamic => matches!(
                group,
                ParamGroup::Nothing | ParamGroup::Branch | ParamGroup::Trunk | ParamGroup::TrunkAndBranch
            ),
            VariantTag::Static | VariantTag::InitAll => {
                matches!(group, ParamGroup::Nothing | ParamGroup::All)
            }
            VariantTag::Lora => matches!(group, ParamGroup::Nothing | ParamGroup::Adapters),
        };
        if !allowed {
            return Err(Error::Contract(format!(
                "{group:?} parameters cannot be trained on the {} variant",
                self.variant()
            )));
        }
        let mut bound = Bound::default();
        match &self.params {
            Params::Dynamic { trunk, branch } => {
                let train_trunk = matches!(group, ParamGroup::Trunk | ParamGroup::TrunkAndBranch);
                let train_branch = matches!(group, ParamGroup::Branch | ParamGroup::TrunkAndBranch);
                for (l, t) in trunk.iter().enumerate() {
                    if train_trunk {
                        let (pw, pb) = bind_block(tape, &t.phi, false);
                        let (tw, tb) = bind_block(tape, &t.theta, true);
                        let w = tape.add(pw, tw)?;
                        let b = tape.add(pb, tb)?;
                        bound.layers.push((w, b));
                        bound.trainable.push((Slot::Theta(l), vec![tw, tb]));
                        bound.penalty_terms.push((tw, t.gamma));
                        bound.penalty_terms.push((tb, t.gamma));
                    } else {
                        let eff = super::effective_weight(t);
                        bound.layers.push(bind_block(tape, &eff, false));
                        bound.penalty_const += t.gamma * sum_sq(&t.theta.values);
                    }
                }
                let first = trunk.len();
                for (k, b) in branch.iter().enumerate() {
                    let pair = bind_block(tape, &b.psi, train_branch);
                    bound.layers.push(pair);
                    if train_branch {
                        bound.trainable.push((Slot::Psi(first + k), vec![pair.0, pair.1]));
                    }
                }
            }
            Params::Static { layers } => {
                let train = group == ParamGroup::All;
                for (l, block) in layers.iter().enumerate() {
                    let pair = bind_block(tape, block, train);
                    bound.layers.push(pair);
                    if train {
                        bound.trainable.push((Slot::Layer(l), vec![pair.0, pair.1]));
                    }
                }
            }
            Params::InitAll { layers } => {
                let train = group == ParamGroup::All;
                for (l, layer) in layers.iter().enumerate() {
                    let pair = bind_block(tape, &layer.psi, train);
                    bound.layers.push(pair);
                    if train {
                        bound.trainable.push((Slot::Layer(l), vec![pair.0, pair.1]));
                    }
                }
            }
            Params::Lora { base, adapters } => {
                let train = group == ParamGroup::Adapters;
                for (l, (block, ad)) in base.iter().zip(adapters).enumerate() {
                    if train {
                        let bw = tape.constant(block.weight_tensor());
                        let down = tape.param(Tensor::new(vec![ad.d_in, ad.rank], ad.down.clone())?);
                        let up = tape.param(Tensor::new(vec![ad.rank, ad.d_out], ad.up.clone())?);
                        let prod = tape.matmul(down, up)?;
                        let delta = tape.scale(prod, ad.scale);
                        let w = tape.add(bw, delta)?;
                        let b = tape.constant(block.bias_tensor());
                        bound.layers.push((w, b));
                        bound.trainable.push((Slot::Down(l), vec![down]));
                        bound.trainable.push((Slot::Up(l), vec![up]));
                    } else {
                        let w = lora_effective_weight(block.weight(), ad)?;
                        let eff = Block::from_parts(block.d_in, block.d_out, &w, block.bias())?;
                        bound.layers.push(bind_block(tape, &eff, false));
                    }
                }
            }
        }
        Ok(bound)
    }

    pub fn forward_bound(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        super::kunet_forward(tape, &self.arch, &bound.layers, x)
    }

    /// `sum_l gamma_l ||theta_l||^2` as a tape node (zero for variants without theta).
    pub fn penalty(&self, tape: &mut Tape, bound: &Bound) -> Result<Var> {
        let terms: Vec<(Var, f64)> = bound
            .penalty_terms
            .iter()
            .map(|&(v, g)| (tape.sum_squares(v), g))
            .collect();
        let c = tape.constant(Tensor::scalar(bound.penalty_const));
        let mut all = terms;
        all.push((c, 1.0));
        tape.weighted_sum(&all)
    }

    /// Mutable flat view of one parameter vector.
    pub fn slot_mut(&mut self, slot: Slot) -> Result<&mut [f64]> {
        let variant = self.variant();
        let missing = || Error::Contract(format!("slot {slot:?} does not exist on the {variant} variant"));
        match (&mut self.params, slot) {
            (Params::Dynamic { trunk, .. }, Slot::Theta(l)) => {
                trunk.get_mut(l).map(|t| t.theta.values.as_mut_slice()).ok_or_else(missing)
            }
            (Params::Dynamic { trunk, branch }, Slot::Psi(l)) => {
                let k = l.checked_sub(trunk.len()).ok_or_else(missing)?;
                branch.get_mut(k).map(|b| b.psi.values.as_mut_slice()).ok_or_else(missing)
            }
            (Params::Static { layers }, Slot::Layer(l)) => {
                layers.get_mut(l).map(|b| b.values.as_mut_slice()).ok_or_else(missing)
            }
            (Params::InitAll { layers }, Slot::Layer(l)) => {
                layers.get_mut(l).map(|b| b.psi.values.as_mut_slice()).ok_or_else(missing)
            }
            (Params::Lora { adapters, .. }, Slot::Down(l)) => {
                adapters.get_mut(l).map(|a| a.down.as_mut_slice()).ok_or_else(missing)
            }
            (Params::Lora { adapters, .. }, Slot::Up(l)) => {
                adapters.get_mut(l).map(|a| a.up.as_mut_slice()).ok_or_else(missing)
            }
            _ => Err(missing()),
        }
    }

    /// Encoder activations for a batch, as plain tensors (no gradient).
    pub fn encode_constants(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, ParamGroup::Nothing)?;
        let xv = tape.constant(x.clone());
        let levels = super::kunet_encode(
            &mut tape,
            &self.arch,
            &bound.layers[..self.arch.trunk_depth],
            xv,
        )?;
        Ok(levels.into_iter().map(|v| tape.value(v).clone()).collect())
    }
}
