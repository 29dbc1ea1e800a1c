//! Alternating least-squares adversarial training.
//!
//! Each step: advance both networks' power iterations, recompute the
//! discriminator's reference statistics from the fixed reference batch,
//! enhance the minibatch, update the discriminator on real and enhanced
//! pairs, recompute the reference statistics for the updated
//! discriminator, then update the generator through the discriminator plus
//! the L1 term.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::log::{StepRecord, TrainLog};
use super::loss::{d_loss_from_scores, g_adv_from_scores, l1_term};
use super::optim::{OptimState, RmsProp};
use crate::audio::{preemphasize, segment_for_training, UtterancePair, EMPHASIS_COEF};
use crate::error::{Error, Result};
use crate::model::{sample_latent, Discriminator, GenCache, Generator, Latent, ModelConfig, Parameters};
use crate::nn::VbnMode;
use crate::rng::{stream, Stream};

/// Everything a checkpoint holds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub gen: Generator,
    pub disc: Discriminator,
    pub g_opt: OptimState,
    pub d_opt: OptimState,
    pub tcfg: TrainConfig,
    /// Updates applied so far.
    pub step: usize,
}

impl TrainState {
    pub fn new(model: &ModelConfig, tcfg: TrainConfig) -> Result<Self> {
        tcfg.validate()?;
        let gen = Generator::build(model, tcfg.seed)?;
        let disc = Discriminator::build(model, tcfg.seed)?;
        Ok(Self {
            g_opt: OptimState::for_params(&gen),
            d_opt: OptimState::for_params(&disc),
            gen,
            disc,
            tcfg,
            step: 0,
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.gen.config()
    }

    /// Generator attention gains followed by the discriminator's.
    pub fn betas(&self) -> Vec<f64> {
        let mut b = self.gen.betas();
        b.extend(self.disc.betas());
        b
    }

    fn optimizer(&self) -> RmsProp {
        RmsProp {
            lr: self.tcfg.lr,
            decay: self.tcfg.rmsprop_decay,
            eps: self.tcfg.rmsprop_eps,
        }
    }
}

/// Pre-emphasized, windowed `(clean, noisy)` training segments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn from_pairs(dataset: &[UtterancePair], window: usize, overlap: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        for p in dataset {
            clean.extend(segment_for_training(&preemphasize(&p.clean, EMPHASIS_COEF), window, overlap).segments);
            noisy.extend(segment_for_training(&preemphasize(&p.noisy, EMPHASIS_COEF), window, overlap).segments);
        }
        Ok(Self { clean, noisy })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

fn per_example<T: Send>(parallel: bool, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn sum_in_order<P: Parameters + Clone>(mut parts: impl Iterator<Item = P>) -> P {
    let mut total = parts.next().expect("non-empty batch");
    for p in parts {
        total.accumulate(&p);
    }
    total
}

fn diverged(step: usize, what: &str, record: &StepRecord) -> Error {
    Error::DivergedLoss {
        step,
        detail: format!("{what} is not finite; {record:?}"),
    }
}

/// Generator outputs for a minibatch, with the caches its backward pass
/// needs.
pub struct Enhanced {
    pub outputs: Vec<(Vec<f64>, GenCache)>,
}

fn reference_pairs<'a>(set: &'a TrainingSet, reference: &[usize]) -> Vec<(&'a [f64], &'a [f64])> {
    reference.iter().map(|&i| (&set.clean[i][..], &set.noisy[i][..])).collect()
}

/// Enhance the minibatch's noisy segments with fresh latents.
pub fn enhance_batch(
    state: &TrainState,
    set: &TrainingSet,
    batch: &[usize],
    latent_rng: &mut impl rand::Rng,
) -> Result<Enhanced> {
    let shape = state.model_config().latent_shape();
    let latents: Vec<Latent> = batch.iter().map(|_| sample_latent(shape, latent_rng)).collect();
    let gen = &state.gen;
    let outputs = per_example(state.tcfg.parallel, batch.len(), |j| {
        gen.forward_cached(&set.noisy[batch[j]], &latents[j])
    })?;
    Ok(Enhanced { outputs })
}

/// One RMSprop step on the discriminator's least-squares objective, after
/// which the reference statistics are recomputed for the new weights.
/// Returns the discriminator loss before the update.
pub fn update_discriminator(
    state: &mut TrainState,
    set: &TrainingSet,
    batch: &[usize],
    enhanced: &Enhanced,
    reference: &[usize],
) -> Result<f64> {
    let b = batch.len() as f64;
    let view = state.disc.view()?;
    let parts = per_example(state.tcfg.parallel, batch.len(), |j| {
        let (x, n) = (&set.clean[batch[j]], &set.noisy[batch[j]]);
        let (real, rc) = view.forward_cached(x, n, VbnMode::Training)?;
        let (fake, fc) = view.forward_cached(&enhanced.outputs[j].0, n, VbnMode::Training)?;
        let (mut g, _) = view.backward(&rc, (real - 1.0) / b)?;
        g.accumulate(&view.backward(&fc, fake / b)?.0);
        Ok((real, fake, g))
    })?;
    drop(view);
    let real: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let fake: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let loss = d_loss_from_scores(&real, &fake);
    if !loss.is_finite() {
        return Ok(loss);
    }
    let grads = sum_in_order(parts.into_iter().map(|p| p.2));
    let opt = state.optimizer();
    opt.step(&mut state.disc, &grads, &mut state.d_opt)?;
    state.disc.set_reference(&reference_pairs(set, reference))?;
    Ok(loss)
}

/// One RMSprop step on the generator objective through the current
/// discriminator. Returns the adversarial and (unweighted) L1 terms before
/// the update.
pub fn update_generator(
    state: &mut TrainState,
    set: &TrainingSet,
    batch: &[usize],
    enhanced: Enhanced,
) -> Result<(f64, f64)> {
    let b = batch.len() as f64;
    let lambda = state.tcfg.lambda_l1;
    let view = state.disc.view()?;
    let gen = &state.gen;
    let parts = per_example(state.tcfg.parallel, batch.len(), |j| {
        let (x, n) = (&set.clean[batch[j]], &set.noisy[batch[j]]);
        let (y, cache) = &enhanced.outputs[j];
        let (fake, fc) = view.forward_cached(y, n, VbnMode::Training)?;
        let (_, g_in) = view.backward(&fc, (fake - 1.0) / b)?;
        let scale = lambda / (b * y.len() as f64);
        let mut g_y = g_in.channel(0);
        for ((g, &yv), &xv) in g_y.iter_mut().zip(y).zip(x) {
            let d = yv - xv;
            if d != 0.0 {
                *g += scale * d.signum();
            }
        }
        Ok((fake, gen.backward(cache, &g_y)?))
    })?;
    drop(view);
    let fake: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let adv = g_adv_from_scores(&fake);
    let outs: Vec<Vec<f64>> = enhanced.outputs.into_iter().map(|e| e.0).collect();
    let clean: Vec<Vec<f64>> = batch.iter().map(|&i| set.clean[i].clone()).collect();
    let l1 = l1_term(&outs, &clean);
    if !(adv.is_finite() && l1.is_finite()) {
        return Ok((adv, l1));
    }
    let grads = sum_in_order(parts.into_iter().map(|p| p.1));
    let opt = state.optimizer();
    opt.step(&mut state.gen, &grads, &mut state.g_opt)?;
    Ok((adv, l1))
}

/// One discriminator update followed by one generator update on `batch`.
pub fn train_step(
    state: &mut TrainState,
    set: &TrainingSet,
    batch: &[usize],
    reference: &[usize],
    latent_rng: &mut impl rand::Rng,
) -> Result<StepRecord> {
    let step = state.step + 1;
    let mut record = StepRecord {
        step,
        d_loss: f64::NAN,
        g_adv: f64::NAN,
        g_l1: f64::NAN,
        betas: state.betas(),
    };
    state.gen.spectral_step()?;
    state.disc.spectral_step()?;
    state.disc.set_reference(&reference_pairs(set, reference))?;
    let enhanced = enhance_batch(state, set, batch, latent_rng)?;
    record.d_loss = update_discriminator(state, set, batch, &enhanced, reference)?;
    if !record.d_loss.is_finite() {
        return Err(diverged(step, "discriminator loss", &record));
    }
    (record.g_adv, record.g_l1) = update_generator(state, set, batch, enhanced)?;
    if !record.is_finite() {
        return Err(diverged(step, "generator loss", &record));
    }
    state.step = step;
    Ok(record)
}

/// Run the configured schedule. Minibatches are drawn from a per-epoch
/// shuffle of all training segments; the first minibatch also serves as
/// the discriminator's reference batch for the whole run. `on_step` sees
/// the state after every update, e.g. to write periodic checkpoints.
pub fn train(
    state: &mut TrainState,
    dataset: &[UtterancePair],
    on_step: &mut dyn FnMut(&TrainState, &StepRecord) -> Result<()>,
) -> Result<TrainLog> {
    state.tcfg.validate()?;
    let set = TrainingSet::from_pairs(dataset, state.model_config().window(), state.tcfg.overlap)?;
    let bs = state.tcfg.batch_size.min(set.len());
    let per_epoch = set.len().div_ceil(bs);
    let total = state.tcfg.steps.unwrap_or(state.tcfg.epochs * per_epoch);
    let mut data_rng = stream(state.tcfg.seed, Stream::Data);
    let mut latent_rng = stream(state.tcfg.seed, Stream::Latent);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut reference: Option<Vec<usize>> = None;
    let mut log = TrainLog::default();
    while log.records.len() < total {
        order.shuffle(&mut data_rng);
        for batch in order.chunks(bs) {
            if log.records.len() >= total {
                break;
            }
            let reference = reference.get_or_insert_with(|| batch.to_vec());
            let record = train_step(state, &set, batch, reference, &mut latent_rng)?;
            on_step(state, &record)?;
            log.records.push(record);
        }
    }
    Ok(log)
}
