//! Trunk-branch networks and their baselines.
//!
//! A network is a stack of weight-and-bias blocks wired into a two-level
//! Kernel-U-Net (or a single linear map). What differs between variants is
//! where each block's values come from:
//!
//! * `Dynamic`: trunk layers use `phi + theta`, branch layers use `psi`,
//!   which is re-drawn from its init distribution at every episode.
//! * `Static`: one plain parameter set.
//! * `InitAll`: every block is re-drawn per episode.
//! * `Lora`: frozen base blocks plus a low-rank adapter per layer.

mod bind;
mod kunet;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Tape, Tensor};
use crate::synthgen::Rng64;

pub use bind::{Bound, ParamGroup, Slot};
pub use kunet::{kunet_decode, kunet_encode, kunet_forward};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Patch-wise encoder/decoder with skip connections.
    Kunet,
    /// One affine map from input window to output window.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub backbone: Backbone,
    /// Number of trunk layers (encoder levels).
    pub trunk_depth: usize,
    /// Number of branch layers (decoder levels).
    pub branch_depth: usize,
    pub input_len: usize,
    pub output_len: usize,
    pub patch_len: usize,
    /// Tokens merged into one at each encoder level above the first.
    pub merges: Vec<usize>,
    pub latent_dim: usize,
    pub layer_norm: bool,
    pub activation: Activation,
    pub ln_eps: f64,
}

impl ArchitectureSpec {
    /// Two encoder and two decoder levels, 10-sample patches, latent width 128.
    /// The second level merges every patch into one window-wide token.
    pub fn kunet(input_len: usize, output_len: usize) -> Self {
        ArchitectureSpec {
            backbone: Backbone::Kunet,
            trunk_depth: 2,
            branch_depth: 2,
            input_len,
            output_len,
            patch_len: 10,
            merges: vec![(input_len / 10).max(1)],
            latent_dim: 128,
            layer_norm: true,
            activation: Activation::Relu,
            ln_eps: 1e-5,
        }
    }

    pub fn linear(input_len: usize, output_len: usize) -> Self {
        ArchitectureSpec {
            backbone: Backbone::Linear,
            trunk_depth: 0,
            branch_depth: 1,
            input_len,
            output_len,
            patch_len: input_len,
            merges: Vec::new(),
            latent_dim: output_len,
            layer_norm: false,
            activation: Activation::Relu,
            ln_eps: 1e-5,
        }
    }

    pub fn depth(&self) -> usize {
        self.trunk_depth + self.branch_depth
    }

    /// Patches at the finest encoder level.
    pub fn num_patches(&self) -> usize {
        self.input_len / self.patch_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.output_len == 0 {
            return Err(Error::config("input_len/output_len", "must be positive"));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::config("ln_eps", "must be positive"));
        }
        match self.backbone {
            Backbone::Linear => {
                if self.trunk_depth != 0 || self.branch_depth != 1 {
                    return Err(Error::config(
                        "backbone",
                        "the linear backbone is a single layer (trunk_depth 0, branch_depth 1)",
                    ));
                }
            }
            Backbone::Kunet => {
                if self.trunk_depth < 1 || self.branch_depth < 1 {
                    return Err(Error::config("trunk_depth/branch_depth", "must both be >= 1"));
                }
                if self.trunk_depth != self.branch_depth {
                    return Err(Error::config(
                        "branch_depth",
                        "the U-Net decoder mirrors the encoder, so branch_depth must equal trunk_depth",
                    ));
                }
                if self.patch_len == 0 || !self.input_len.is_multiple_of(self.patch_len) {
                    return Err(Error::config(
                        "patch_len",
                        format!(
                            "input length {} is not divisible by patch length {}",
                            self.input_len, self.patch_len
                        ),
                    ));
                }
                let p0 = self.num_patches();
                if self.merges.len() != self.trunk_depth - 1 {
                    return Err(Error::config(
                        "merges",
                        format!(
                            "{} merge factors for {} encoder levels above the first",
                            self.merges.len(),
                            self.trunk_depth - 1
                        ),
                    ));
                }
                let merged: usize = self.merges.iter().product();
                if self.merges.contains(&0) || !p0.is_multiple_of(merged) {
                    return Err(Error::config(
                        "merges",
                        format!("{p0} patches cannot be merged by factors {:?}", self.merges),
                    ));
                }
                if !self.output_len.is_multiple_of(p0) {
                    return Err(Error::config(
                        "output_len",
                        format!("output length {} is not divisible by {p0} patches", self.output_len),
                    ));
                }
                if self.latent_dim < 2 && self.layer_norm {
                    return Err(Error::config("latent_dim", "layer norm needs width >= 2"));
                }
            }
        }
        Ok(())
    }

    /// `(d_in, d_out)` of every layer's kernel, trunk first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.backbone {
            Backbone::Linear => vec![(self.input_len, self.output_len)],
            Backbone::Kunet => {
                let d = self.latent_dim;
                let mut shapes = Vec::with_capacity(self.depth());
                shapes.push((self.patch_len, d));
                for f in &self.merges {
                    shapes.push((f * d, d));
                }
                for (k, f) in self.merges.iter().rev().enumerate() {
                    shapes.push((if k == 0 { d } else { 2 * d }, f * d));
                }
                let head_in = if self.branch_depth == 1 { d } else { 2 * d };
                shapes.push((head_in, self.output_len / self.num_patches()));
                shapes
            }
        }
    }

    /// Flattened representation widths `d_0 .. d_N` between layers.
    pub fn dims(&self) -> Vec<usize> {
        match self.backbone {
            Backbone::Linear => vec![self.input_len, self.output_len],
            Backbone::Kunet => {
                let d = self.latent_dim;
                let tokens = self.level_tokens();
                let mut dims = vec![self.input_len];
                dims.extend(tokens.iter().map(|t| t * d));
                dims.extend(tokens.iter().rev().skip(1).map(|t| t * d));
                dims.push(self.output_len);
                dims
            }
        }
    }

    /// Token count at each encoder level, finest first.
    pub fn level_tokens(&self) -> Vec<usize> {
        let mut t = vec![self.num_patches()];
        for f in &self.merges {
            t.push(t.last().unwrap() / f);
        }
        t
    }

    /// Parameters per layer (weights plus biases).
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).collect()
    }

    /// Total budget: trunk block sizes plus branch block sizes.
    pub fn budget(&self) -> usize {
        self.layer_sizes().iter().sum()
    }
}

/// Weight-and-bias block: `d_in * d_out` row-major weights, then `d_out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub d_in: usize,
    pub d_out: usize,
    pub values: Vec<f64>,
}

impl Block {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Block {
            d_in,
            d_out,
            values: vec![0.0; d_in * d_out + d_out],
        }
    }

    pub fn from_parts(d_in: usize, d_out: usize, weight: &[f64], bias: &[f64]) -> Result<Self> {
        if weight.len() != d_in * d_out || bias.len() != d_out {
            return Err(Error::dim(format!(
                "block {d_in}x{d_out} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Block {
            d_in,
            d_out,
            values: [weight, bias].concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weight(&self) -> &[f64] {
        &self.values[..self.d_in * self.d_out]
    }

    pub fn bias(&self) -> &[f64] {
        &self.values[self.d_in * self.d_out..]
    }

    pub fn weight_tensor(&self) -> Tensor {
        Tensor::new(vec![self.d_in, self.d_out], self.weight().to_vec()).expect("block shape")
    }

    pub fn bias_tensor(&self) -> Tensor {
        Tensor::vector(self.bias().to_vec())
    }

    fn same_shape(&self, other: &Block) -> bool {
        self.d_in == other.d_in && self.d_out == other.d_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum InitSpec {
    /// Independent draws from `U(-scale, scale)`.
    Uniform { scale: f64 },
}

impl InitSpec {
    pub fn fan_in(d_in: usize) -> Self {
        InitSpec::Uniform {
            scale: 1.0 / (d_in as f64).sqrt(),
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        match self {
            InitSpec::Uniform { scale } => scale * scale / 3.0,
        }
    }

    pub fn fill(&self, out: &mut [f64], rng: &mut Rng64) {
        match *self {
            InitSpec::Uniform { scale } => {
                for v in out {
                    *v = rng.gen_range(-scale..scale);
                }
            }
        }
    }

    pub fn draw(&self, d_in: usize, d_out: usize, rng: &mut Rng64) -> Block {
        let mut b = Block::zeros(d_in, d_out);
        self.fill(&mut b.values, rng);
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkLayerParams {
    pub phi: Block,
    pub theta: Block,
    pub gamma: f64,
}

impl TrunkLayerParams {
    pub fn new(phi: Block, gamma: f64) -> Self {
        let theta = Block::zeros(phi.d_in, phi.d_out);
        TrunkLayerParams { phi, theta, gamma }
    }
}

/// `phi + theta`, elementwise.
pub fn effective_weight(layer: &TrunkLayerParams) -> Block {
    let mut out = layer.phi.clone();
    for (o, t) in out.values.iter_mut().zip(&layer.theta.values) {
        *o += t;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchLayerParams {
    pub psi: Block,
    pub init: InitSpec,
}

impl BranchLayerParams {
    pub fn drawn(d_in: usize, d_out: usize, rng: &mut Rng64) -> Self {
        let init = InitSpec::fan_in(d_in);
        BranchLayerParams {
            psi: init.draw(d_in, d_out, rng),
            init,
        }
    }

    pub fn reinit(&mut self, rng: &mut Rng64) {
        self.init.fill(&mut self.psi.values, rng);
    }
}

/// Low-rank weight update `scale * down * up` for a `d_in x d_out` kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub d_in: usize,
    pub d_out: usize,
    pub rank: usize,
    pub scale: f64,
    /// `d_in x rank`, row-major.
    pub down: Vec<f64>,
    /// `rank x d_out`, row-major.
    pub up: Vec<f64>,
}

impl LoraAdapter {
    /// `down` drawn from `U(+-1/sqrt(d_in))`, `up` zero.
    pub fn new(d_in: usize, d_out: usize, rank: usize, scale: f64, rng: &mut Rng64) -> Result<Self> {
        check_rank(d_in, d_out, rank)?;
        let mut a = LoraAdapter {
            d_in,
            d_out,
            rank,
            scale,
            down: vec![0.0; d_in * rank],
            up: vec![0.0; rank * d_out],
        };
        a.reinit(rng);
        Ok(a)
    }

    pub fn reinit(&mut self, rng: &mut Rng64) {
        InitSpec::fan_in(self.d_in).fill(&mut self.down, rng);
        self.up.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn len(&self) -> usize {
        self.down.len() + self.up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_rank(d_in: usize, d_out: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank >= d_in.min(d_out) {
        return Err(Error::config(
            "lora_rank",
            format!("rank {rank} must be in 1..{} for a {d_in}x{d_out} kernel", d_in.min(d_out)),
        ));
    }
    Ok(())
}

/// `base + scale * down * up` for a row-major `d_in x d_out` base weight.
pub fn lora_effective_weight(base: &[f64], adapter: &LoraAdapter) -> Result<Vec<f64>> {
    check_rank(adapter.d_in, adapter.d_out, adapter.rank)?;
    if base.len() != adapter.d_in * adapter.d_out
        || adapter.down.len() != adapter.d_in * adapter.rank
        || adapter.up.len() != adapter.rank * adapter.d_out
    {
        return Err(Error::dim(format!(
            "base of {} entries vs adapter {}x{} rank {}",
            base.len(),
            adapter.d_in,
            adapter.d_out,
            adapter.rank
        )));
    }
    let mut delta = vec![0.0; base.len()];
    crate::ndcore::matmul_acc(
        &adapter.down,
        &adapter.up,
        &mut delta,
        adapter.d_in,
        adapter.rank,
        adapter.d_out,
    );
    Ok(base
        .iter()
        .zip(&delta)
        .map(|(b, d)| b + adapter.scale * d)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantTag {
    Dynamic,
    Static,
    InitAll,
    Lora,
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantTag::Dynamic => "dynamic",
            VariantTag::Static => "static",
            VariantTag::InitAll => "init-all",
            VariantTag::Lora => "lora",
        })
    }
}

impl FromStr for VariantTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dynamic" => Ok(VariantTag::Dynamic),
            "static" => Ok(VariantTag::Static),
            "init-all" | "initall" => Ok(VariantTag::InitAll),
            "lora" => Ok(VariantTag::Lora),
            other => Err(Error::config("variant", format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Params {
    Dynamic {
        trunk: Vec<TrunkLayerParams>,
        branch: Vec<BranchLayerParams>,
    },
    Static {
        layers: Vec<Block>,
    },
    InitAll {
        layers: Vec<BranchLayerParams>,
    },
    Lora {
        base: Vec<Block>,
        adapters: Vec<LoraAdapter>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: ArchitectureSpec,
    pub params: Params,
}

/// Parameter counts by role.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamAudit {
    pub phi: usize,
    pub theta: usize,
    pub psi: usize,
    pub plain: usize,
    pub frozen_base: usize,
    pub adapter: usize,
    /// Sum of per-layer block sizes, counting each trunk layer once.
    pub budget: usize,
}

impl Model {
    pub fn dynamic(arch: ArchitectureSpec, gammas: &[f64], rng: &mut Rng64) -> Result<Self> {
        arch.validate()?;
        if arch.trunk_depth == 0 || arch.branch_depth == 0 {
            return Err(Error::config(
                "variant",
                "the dynamic variant needs at least one trunk and one branch layer",
            ));
        }
        if gammas.len() != arch.trunk_depth {
            return Err(Error::config(
                "gammas",
                format!("{} values for {} trunk layers", gammas.len(), arch.trunk_depth),
            ));
        }
        if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::config("gammas", format!("must be >= 0, got {g}")));
        }
        let shapes = arch.layer_shapes();
        let trunk = shapes[..arch.trunk_depth]
            .iter()
            .zip(gammas)
            .map(|(&(i, o), &g)| TrunkLayerParams::new(InitSpec::fan_in(i).draw(i, o, rng), g))
            .collect();
        let branch = shapes[arch.trunk_depth..]
            .iter()
            .map(|&(i, o)| BranchLayerParams::drawn(i, o, rng))
            .collect();
        Ok(Model {
            arch,
            params: Params::Dynamic { trunk, branch },
        })
    }

    pub fn static_model(arch: ArchitectureSpec, rng: &mut Rng64) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .iter()
            .map(|&(i, o)| InitSpec::fan_in(i).draw(i, o, rng))
            .collect();
        Ok(Model {
            arch,
            params: Params::Static { layers },
        })
    }

    pub fn init_all(arch: ArchitectureSpec, rng: &mut Rng64) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .iter()
            .map(|&(i, o)| BranchLayerParams::drawn(i, o, rng))
            .collect();
        Ok(Model {
            arch,
            params: Params::InitAll { layers },
        })
    }

    /// Freezes a trained static model and attaches one adapter per layer.
    pub fn lora_from(base: &Model, rank: usize, scale: f64, rng: &mut Rng64) -> Result<Self> {
        let Params::Static { layers } = &base.params else {
            return Err(Error::Contract(format!(
                "LoRA needs a static base model, got {}",
                base.variant()
            )));
        };
        let adapters = layers
            .iter()
            .map(|b| LoraAdapter::new(b.d_in, b.d_out, rank, scale, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            arch: base.arch.clone(),
            params: Params::Lora {
                base: layers.clone(),
                adapters,
            },
        })
    }

    pub fn variant(&self) -> VariantTag {
        match self.params {
            Params::Dynamic { .. } => VariantTag::Dynamic,
            Params::Static { .. } => VariantTag::Static,
            Params::InitAll { .. } => VariantTag::InitAll,
            Params::Lora { .. } => VariantTag::Lora,
        }
    }

    /// Re-draws every branch block `psi` from its init distribution.
    pub fn reinit_branch(&mut self, rng: &mut Rng64) -> Result<()> {
        match &mut self.params {
            Params::Dynamic { branch, .. } => {
                branch.iter_mut().for_each(|b| b.reinit(rng));
                Ok(())
            }
            _ => Err(Error::Contract(format!(
                "reinit_branch applies to the dynamic variant, not {}",
                self.variant()
            ))),
        }
    }

    pub fn reinit_all(&mut self, rng: &mut Rng64) -> Result<()> {
        match &mut self.params {
            Params::InitAll { layers } => {
                layers.iter_mut().for_each(|b| b.reinit(rng));
                Ok(())
            }
            _ => Err(Error::Contract(format!(
                "reinit_all applies to the init-all variant, not {}",
                self.variant()
            ))),
        }
    }

    pub fn reinit_adapters(&mut self, rng: &mut Rng64) -> Result<()> {
        match &mut self.params {
            Params::Lora { adapters, .. } => {
                adapters.iter_mut().for_each(|a| a.reinit(rng));
                Ok(())
            }
            _ => Err(Error::Contract(format!(
                "reinit_adapters applies to the lora variant, not {}",
                self.variant()
            ))),
        }
    }

    /// Resets whatever the variant re-draws per episode; no-op for `Static`.
    pub fn reset_episode(&mut self, rng: &mut Rng64) -> Result<()> {
        match self.variant() {
            VariantTag::Dynamic => self.reinit_branch(rng),
            VariantTag::InitAll => self.reinit_all(rng),
            VariantTag::Lora => self.reinit_adapters(rng),
            VariantTag::Static => Ok(()),
        }
    }

    pub fn audit(&self) -> ParamAudit {
        let mut a = ParamAudit::default();
        match &self.params {
            Params::Dynamic { trunk, branch } => {
                for t in trunk {
                    a.phi += t.phi.len();
                    a.theta += t.theta.len();
                }
                a.psi = branch.iter().map(|b| b.psi.len()).sum();
                a.budget = a.phi + a.psi;
            }
            Params::Static { layers } => {
                a.plain = layers.iter().map(Block::len).sum();
                a.budget = a.plain;
            }
            Params::InitAll { layers } => {
                a.psi = layers.iter().map(|b| b.psi.len()).sum();
                a.budget = a.psi;
            }
            Params::Lora { base, adapters } => {
                a.frozen_base = base.iter().map(Block::len).sum();
                a.adapter = adapters.iter().map(LoraAdapter::len).sum();
                a.budget = a.frozen_base;
            }
        }
        a
    }

    /// Per-layer blocks the forward pass would use right now.
    pub fn effective_blocks(&self) -> Result<Vec<Block>> {
        Ok(match &self.params {
            Params::Dynamic { trunk, branch } => trunk
                .iter()
                .map(effective_weight)
                .chain(branch.iter().map(|b| b.psi.clone()))
                .collect(),
            Params::Static { layers } => layers.clone(),
            Params::InitAll { layers } => layers.iter().map(|b| b.psi.clone()).collect(),
            Params::Lora { base, adapters } => base
                .iter()
                .zip(adapters)
                .map(|(b, a)| {
                    let w = lora_effective_weight(b.weight(), a)?;
                    Block::from_parts(b.d_in, b.d_out, &w, b.bias())
                })
                .collect::<Result<_>>()?,
        })
    }

    /// Batched inference: `inputs` are `n` windows of length `input_len`.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, ParamGroup::Nothing)?;
        let x = tape.constant(batch_tensor(inputs, self.arch.input_len)?);
        let y = self.forward_bound(&mut tape, &bound, x)?;
        Ok(tape
            .value(y)
            .data()
            .chunks(self.arch.output_len)
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// Single-window forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.numel() != self.arch.input_len {
            return Err(Error::dim(format!(
                "layer 0 expects an input of length {}, got shape {:?}",
                self.arch.input_len,
                x.shape()
            )));
        }
        let y = self.predict(&[x.data().to_vec()])?;
        Ok(Tensor::vector(y.into_iter().next().expect("one row")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(text)?;
        m.arch.validate()?;
        m.check_shapes()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_text(path)?)
    }

    fn check_shapes(&self) -> Result<()> {
        let shapes = self.arch.layer_shapes();
        let blocks = self.effective_blocks()?;
        if blocks.len() != shapes.len() {
            return Err(Error::dim(format!(
                "checkpoint has {} layers, architecture needs {}",
                blocks.len(),
                shapes.len()
            )));
        }
        for (l, (b, &(i, o))) in blocks.iter().zip(&shapes).enumerate() {
            if (b.d_in, b.d_out) != (i, o) || b.values.len() != i * o + o {
                return Err(Error::dim(format!(
                    "layer {l} is {}x{}, expected {i}x{o}",
                    b.d_in, b.d_out
                )));
            }
        }
        if let Params::Dynamic { trunk, .. } = &self.params {
            for (l, t) in trunk.iter().enumerate() {
                if !t.phi.same_shape(&t.theta) || t.phi.len() != t.theta.len() {
                    return Err(Error::dim(format!("trunk layer {l}: theta shape differs from phi")));
                }
            }
        }
        Ok(())
    }
}

/// Stacks equal-length windows into an `n x len` tensor.
pub fn batch_tensor(rows: &[Vec<f64>], len: usize) -> Result<Tensor> {
    if rows.is_empty() {
        return Err(Error::dim("empty batch"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != len) {
        return Err(Error::dim(format!(
            "layer 0 expects windows of length {len}, got {}",
            r.len()
        )));
    }
    Tensor::new(vec![rows.len(), len], rows.concat())
}

#[cfg(test)]
mod tests;
