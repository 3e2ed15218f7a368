use serde::{Deserialize, Serialize};

use super::{phase1_adapt, phase2_step, static_step, AdaptConfig, Optimizer};
use crate::error::{Error, Result};
use crate::model::{Model, VariantTag};
use crate::synthgen::{derived_rng, rng_from_seed, Episode, Pair, Rng64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_support_loss: f64,
    pub mean_query_mse: f64,
}

/// Training trace. Wall-clock time is kept out of this record so that
/// reruns serialize to identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub variant: VariantTag,
    pub seed: u64,
    pub config: AdaptConfig,
    pub epochs: Vec<EpochStats>,
    pub episode_support_loss: Vec<f64>,
    pub episode_query_mse: Vec<f64>,
}

/// Points in an episode at which [`train_run_observed`] calls its observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseEvent {
    EpisodeStart,
    AfterReset,
    AfterPhase1,
    AfterPhase2,
}

pub fn train_run(episodes: &[Episode], model: &mut Model, cfg: &AdaptConfig, seed: u64) -> Result<RunLog> {
    train_run_observed(episodes, model, cfg, seed, &mut |_, _| {})
}

/// Runs `epochs x batches_per_epoch` episodes, in order, from `episodes`.
pub fn train_run_observed(
    episodes: &[Episode],
    model: &mut Model,
    cfg: &AdaptConfig,
    seed: u64,
    observer: &mut dyn FnMut(PhaseEvent, &Model),
) -> Result<RunLog> {
    cfg.validate()?;
    let needed = cfg.train_episodes();
    if episodes.len() < needed {
        return Err(Error::config(
            "dataset",
            format!(
                "training needs {needed} episodes ({} epochs x {} batches), dataset has {}",
                cfg.epochs,
                cfg.batches_per_epoch,
                episodes.len()
            ),
        ));
    }
    if model.variant() == VariantTag::Dynamic && cfg.alphas.len() != model.arch.trunk_depth {
        return Err(Error::config(
            "alphas",
            format!("{} rates for {} trunk layers", cfg.alphas.len(), model.arch.trunk_depth),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut persistent = Optimizer::new(cfg.optimizer);
    let mut support_losses = Vec::with_capacity(needed);
    let mut query_mses = Vec::with_capacity(needed);

    for ep in &episodes[..needed] {
        observer(PhaseEvent::EpisodeStart, model);
        let (support_loss, query_mse) = match model.variant() {
            VariantTag::Static => {
                observer(PhaseEvent::AfterReset, model);
                let support = super::pair_mse(model, &ep.support)?;
                let query = super::pair_mse(model, &ep.query)?;
                observer(PhaseEvent::AfterPhase1, model);
                let all: Vec<Pair> = ep.all_pairs().cloned().collect();
                static_step(model, &all, cfg, &mut persistent)?;
                observer(PhaseEvent::AfterPhase2, model);
                (support, query)
            }
            variant => {
                model.reset_episode(&mut rng)?;
                observer(PhaseEvent::AfterReset, model);
                let trace = phase1_adapt(model, &ep.support, cfg, cfg.inner_steps)?;
                observer(PhaseEvent::AfterPhase1, model);
                let train_trunk = variant == VariantTag::Dynamic;
                let q = phase2_step(model, &ep.query, cfg, train_trunk, &mut persistent)?;
                observer(PhaseEvent::AfterPhase2, model);
                (trace.last(), q)
            }
        };
        support_losses.push(support_loss);
        query_mses.push(query_mse);
    }

    let b = cfg.batches_per_epoch;
    let epochs = (0..cfg.epochs)
        .map(|e| EpochStats {
            epoch: e,
            mean_support_loss: mean(&support_losses[e * b..(e + 1) * b]),
            mean_query_mse: mean(&query_mses[e * b..(e + 1) * b]),
        })
        .collect();
    Ok(RunLog {
        variant: model.variant(),
        seed,
        config: cfg.clone(),
        epochs,
        episode_support_loss: support_losses,
        episode_query_mse: query_mses,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub source_i: usize,
    pub source_j: usize,
    pub query_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: String,
    pub episodes: usize,
    pub mean_mse: f64,
    /// Population standard deviation over episodes.
    pub std_mse: f64,
    pub records: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn from_records(dataset: &str, variant: &str, records: Vec<EpisodeRecord>) -> Self {
        let vals: Vec<f64> = records.iter().map(|r| r.query_mse).collect();
        let (m, s) = mean_std(&vals);
        EvalReport {
            dataset: dataset.to_string(),
            variant: variant.to_string(),
            episodes: records.len(),
            mean_mse: m,
            std_mse: s,
            records,
        }
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// One output window per input window.
pub type Predictions = Vec<Vec<f64>>;

/// Adapts a copy of `model` to the episode's support pairs and returns the
/// predictions for the support and query inputs.
pub fn adapt_and_predict(
    model: &Model,
    episode: &Episode,
    cfg: &AdaptConfig,
    rng: &mut Rng64,
) -> Result<(Predictions, Predictions)> {
    let mut m = model.clone();
    if m.variant() != VariantTag::Static {
        m.reset_episode(rng)?;
        phase1_adapt(&mut m, &episode.support, cfg, cfg.eval_steps())?;
    }
    let inputs = |pairs: &[Pair]| pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>();
    Ok((m.predict(&inputs(&episode.support))?, m.predict(&inputs(&episode.query))?))
}

/// Test-time protocol over `episodes`: per episode, a copy of the model is
/// reset and adapted on the support pairs, then scored on the query pairs
/// without any update. The model itself is never modified.
pub fn evaluate(
    episodes: &[Episode],
    model: &Model,
    cfg: &AdaptConfig,
    dataset: &str,
    label: &str,
    seed: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut frozen = Optimizer::new(cfg.optimizer);
    let records = episodes
        .iter()
        .enumerate()
        .map(|(index, ep)| {
            let mut m = model.clone();
            if m.variant() != VariantTag::Static {
                let mut rng = derived_rng(seed, index as u64);
                m.reset_episode(&mut rng)?;
                phase1_adapt(&mut m, &ep.support, cfg, cfg.eval_steps())?;
            }
            let query_mse = phase2_step(&mut m, &ep.query, cfg, false, &mut frozen)?;
            Ok(EpisodeRecord {
                index,
                source_i: ep.source_i,
                source_j: ep.source_j,
                query_mse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(dataset, label, records))
}
