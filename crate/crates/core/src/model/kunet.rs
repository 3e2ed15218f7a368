//! Kernel-U-Net graph construction.
//!
//! The input window is cut into `patch_len` patches, each patch is mapped to
//! a `latent_dim` vector by the first encoder kernel, and every further
//! encoder level merges groups of `merges[l]` adjacent tokens. Decoder levels
//! split each token back into its group and concatenate the encoder activation of the
//! matching level before the next kernel. The last kernel maps each finest
//! token to `output_len / num_patches` samples.

use super::{ArchitectureSpec, Activation, Backbone};
use crate::error::{Error, Result};
use crate::ndcore::{Tape, Var};

fn hidden(tape: &mut Tape, arch: &ArchitectureSpec, z: Var) -> Result<Var> {
    let z = if arch.layer_norm {
        tape.layer_norm(z, None, None, arch.ln_eps)?
    } else {
        z
    };
    Ok(match arch.activation {
        Activation::Relu => tape.relu(z),
        Activation::Tanh => tape.tanh(z),
    })
}

fn rows(tape: &Tape, v: Var) -> Result<usize> {
    tape.value(v)
        .dims2()
        .map(|(r, _)| r)
        .ok_or_else(|| Error::dim(format!("expected a matrix, got {:?}", tape.value(v).shape())))
}

fn layer_affine(tape: &mut Tape, layer: usize, x: Var, (w, b): (Var, Var)) -> Result<Var> {
    tape.affine(x, w, b)
        .map_err(|e| Error::dim(format!("layer {layer}: {e}")))
}

/// Runs the trunk kernels on `x: n x input_len`; returns the activation of
/// every encoder level, finest first.
pub fn kunet_encode(
    tape: &mut Tape,
    arch: &ArchitectureSpec,
    trunk: &[(Var, Var)],
    x: Var,
) -> Result<Vec<Var>> {
    if arch.backbone != Backbone::Kunet {
        return Err(Error::Contract("kunet_encode needs the kunet backbone".into()));
    }
    if trunk.len() != arch.trunk_depth {
        return Err(Error::dim(format!(
            "{} trunk kernels bound, architecture has {}",
            trunk.len(),
            arch.trunk_depth
        )));
    }
    let n = rows(tape, x)?;
    let cols = tape.value(x).numel() / n;
    if cols != arch.input_len {
        return Err(Error::dim(format!(
            "layer 0 expects input width {}, got {cols}",
            arch.input_len
        )));
    }
    let d = arch.latent_dim;
    let patches = tape.reshape(x, vec![n * arch.num_patches(), arch.patch_len])?;
    let z = layer_affine(tape, 0, patches, trunk[0])?;
    let mut levels = vec![hidden(tape, arch, z)?];
    for (l, &kernel) in trunk.iter().enumerate().skip(1) {
        let prev = *levels.last().unwrap();
        let r = rows(tape, prev)?;
        let f = arch.merges[l - 1];
        let merged = tape.reshape(prev, vec![r / f, f * d])?;
        let z = layer_affine(tape, l, merged, kernel)?;
        levels.push(hidden(tape, arch, z)?);
    }
    Ok(levels)
}

/// Runs the branch kernels on encoder activations; returns `n x output_len`.
/// `skip_gain` scales every skip activation (1.0 in normal use).
pub fn kunet_decode(
    tape: &mut Tape,
    arch: &ArchitectureSpec,
    branch: &[(Var, Var)],
    levels: &[Var],
    skip_gain: f64,
) -> Result<Var> {
    if branch.len() != arch.branch_depth || levels.len() != arch.trunk_depth {
        return Err(Error::dim(format!(
            "decoder got {} kernels and {} encoder levels for depth {}+{}",
            branch.len(),
            levels.len(),
            arch.trunk_depth,
            arch.branch_depth
        )));
    }
    let d = arch.latent_dim;
    let first = arch.trunk_depth;
    let mut h = *levels.last().unwrap();
    for (k, &kernel) in branch[..branch.len() - 1].iter().enumerate() {
        let z = layer_affine(tape, first + k, h, kernel)?;
        let z = hidden(tape, arch, z)?;
        let r = rows(tape, z)?;
        let f = arch.merges[arch.merges.len() - 1 - k];
        let split = tape.reshape(z, vec![f * r, d])?;
        let mut skip = levels[levels.len() - 2 - k];
        if skip_gain != 1.0 {
            skip = tape.scale(skip, skip_gain);
        }
        h = tape.concat_cols(split, skip)?;
    }
    let y = layer_affine(tape, first + branch.len() - 1, h, *branch.last().unwrap())?;
    let total = tape.value(y).numel();
    tape.reshape(y, vec![total / arch.output_len, arch.output_len])
}

/// Full forward pass over all `N` bound kernels, trunk first.
pub fn kunet_forward(
    tape: &mut Tape,
    arch: &ArchitectureSpec,
    layers: &[(Var, Var)],
    x: Var,
) -> Result<Var> {
    if layers.len() != arch.depth() {
        return Err(Error::dim(format!(
            "{} kernels bound, architecture has {}",
            layers.len(),
            arch.depth()
        )));
    }
    match arch.backbone {
        Backbone::Linear => layer_affine(tape, 0, x, layers[0]),
        Backbone::Kunet => {
            let levels = kunet_encode(tape, arch, &layers[..arch.trunk_depth], x)?;
            kunet_decode(tape, arch, &layers[arch.trunk_depth..], &levels, 1.0)
        }
    }
}
