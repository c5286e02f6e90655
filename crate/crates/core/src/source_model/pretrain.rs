use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::forward;
use super::loss::{loss_and_gradients, LossSpec};
use super::optim::{Adam, AdamConfig};
use super::params::{AdaptableMask, ModelParams};
use crate::error::{RadarError, Result};
use crate::feature_io::{Dataset, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: AdamConfig::with_lr(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Full-parameter supervised cross-entropy training on a labeled source
/// dataset. Returns the trained parameters and per-epoch statistics.
pub fn pretrain(
    params: ModelParams,
    dataset: &Dataset,
    config: &PretrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    if dataset.role() != Role::Source {
        return Err(RadarError::invalid("pretraining requires a source dataset"));
    }
    if config.batch_size == 0 {
        return Err(RadarError::invalid(
            "pretraining batch_size must be at least 1",
        ));
    }
    let labels = dataset
        .records()
        .iter()
        .map(|r| {
            r.label().ok_or_else(|| RadarError::InvalidRecord {
                id: r.id.clone(),
                message: "source record has no label".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if dataset.dims() != params.config.input_dims {
        return Err(RadarError::invalid(format!(
            "dataset dims {} do not match model input dims {}",
            dataset.dims(),
            params.config.input_dims
        )));
    }

    let mut params = params;
    let mask = AdaptableMask::all(&params);
    let mut opt = Adam::new(config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let traces = chunk
                .iter()
                .map(|&i| forward(&params, &dataset.records()[i]))
                .collect::<Result<Vec<_>>>()?;
            let spec = LossSpec::supervised(chunk.iter().map(|&i| labels[i]).collect());
            let (loss, grads) = loss_and_gradients(&params, &mask, &traces, &spec)?;
            if !loss.total.is_finite() {
                return Err(RadarError::Diverged {
                    epoch,
                    loss: loss.total,
                });
            }
            loss_sum += loss.total * chunk.len() as f64;
            correct += chunk
                .iter()
                .zip(&traces)
                .filter(|(&i, t)| t.prediction() == labels[i])
                .count();
            opt.step(&mut params, &mask, &grads)?;
            if !params.is_finite() {
                return Err(RadarError::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        let n = dataset.len().max(1) as f64;
        log.push(EpochStats {
            epoch,
            loss: loss_sum / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok((params, log))
}
