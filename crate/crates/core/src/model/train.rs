//! Mini-batch SGD with momentum under either the round-robin scheduler or the naive
//! sum of all three losses.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::NormalizedImage;
use crate::encode::{RepelMap, TriStateLabelMap};
use crate::error::{Error, Result};
use crate::loss::{naive_sum_loss, LossKind, LossTarget, SchedulerState};
use crate::model::network::{loss_gradient, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 8,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", "must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// One loss per iteration, chosen by the iteration index.
    #[default]
    Scheduler,
    /// All three losses summed every iteration.
    NaiveSum,
}

/// The quantity minimized at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Single(LossKind),
    NaiveSum,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Single(kind) => kind.fmt(f),
            Objective::NaiveSum => f.write_str("SUM"),
        }
    }
}

/// An image with all three training targets.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub image: NormalizedImage,
    pub voronoi: TriStateLabelMap,
    pub cluster: TriStateLabelMap,
    pub repel: RepelMap,
}

impl TrainingExample {
    pub fn target(&self, kind: LossKind) -> LossTarget<'_> {
        match kind {
            LossKind::Voronoi => LossTarget::Voronoi(&self.voronoi),
            LossKind::Repel => LossTarget::Repel(&self.repel),
            LossKind::Cluster => LossTarget::Cluster(&self.cluster),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: u64,
    pub epoch: usize,
    pub objective: Objective,
    /// Batch-mean value of the objective.
    pub loss: f64,
    /// Batch-mean Voronoi, repel and cluster losses (naive-sum mode only).
    pub components: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// Mean loss of `kind` per epoch, using the component values in naive-sum mode.
    /// Epochs in which `kind` never appears are `None`.
    pub fn epoch_means(&self, kind: LossKind) -> Vec<Option<f64>> {
        let epochs = self.records.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        let mut sums = vec![(0.0, 0usize); epochs];
        let slot = LossKind::ALL.iter().position(|&k| k == kind).expect("known kind");
        for r in &self.records {
            let value = match (r.objective, r.components) {
                (Objective::Single(k), _) if k == kind => Some(r.loss),
                (Objective::NaiveSum, Some(c)) => Some(c[slot]),
                _ => None,
            };
            if let Some(v) = value {
                sums[r.epoch].0 += v;
                sums[r.epoch].1 += 1;
            }
        }
        sums.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,epoch,loss_kind,value\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.iteration, r.epoch, r.objective, r.loss));
        }
        out
    }
}

/// Trains from a seeded initialization. The dataset is reshuffled every epoch and split into
/// batches of `batch_size` (the last batch may be smaller). The iteration counter that drives
/// the scheduler is global across epochs.
pub fn train(
    config: &TrainConfig,
    dataset: &[TrainingExample],
    mode: TrainMode,
) -> Result<(ModelParams<f32>, TrainLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<f32>::init_with(&mut rng);
    let mut velocity = ModelParams::<f32>::zeros();
    let mut scheduler = SchedulerState::default();
    let mut log = TrainLog::default();
    let lr = config.learning_rate as f32;
    let momentum = config.momentum as f32;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let iteration = scheduler.iteration;
            let objective = match mode {
                TrainMode::Scheduler => Objective::Single(scheduler.step()),
                TrainMode::NaiveSum => {
                    scheduler.iteration += 1;
                    Objective::NaiveSum
                }
            };

            let per_image: Vec<Result<(Vec<f64>, ModelParams<f32>)>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &dataset[i];
                    match objective {
                        Objective::Single(kind) => loss_gradient(&params, &ex.image, &[ex.target(kind)]),
                        Objective::NaiveSum => loss_gradient(&params, &ex.image, &LossKind::ALL.map(|k| ex.target(k))),
                    }
                })
                .collect();

            // fixed-order reduction
            let scale = 1.0 / batch.len() as f32;
            let mut grad = ModelParams::<f32>::zeros();
            let mut sums = vec![0.0f64; if objective == Objective::NaiveSum { 3 } else { 1 }];
            for result in per_image {
                let (losses, g) = result?;
                for (s, l) in sums.iter_mut().zip(&losses) {
                    *s += l;
                }
                for (acc, v) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *acc += v * scale;
                }
            }
            let means: Vec<f64> = sums.iter().map(|s| s / batch.len() as f64).collect();
            let (loss, components) = match objective {
                Objective::Single(_) => (means[0], None),
                Objective::NaiveSum => (
                    naive_sum_loss(means[0], means[1], means[2]),
                    Some([means[0], means[1], means[2]]),
                ),
            };
            if !loss.is_finite() || grad.as_slice().iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    iteration,
                    objective: objective.to_string(),
                    value: loss,
                });
            }

            for ((p, v), g) in params
                .as_mut_slice()
                .iter_mut()
                .zip(velocity.as_mut_slice())
                .zip(grad.as_slice())
            {
                *v = momentum * *v + g;
                *p -= lr * *v;
            }

            log::debug!("iteration {iteration} epoch {epoch} {objective} {loss:.6}");
            log.records.push(TrainRecord {
                iteration,
                epoch,
                objective,
                loss,
                components,
            });
        }
        if let Some(last) = log.records.last() {
            log::info!("epoch {}/{} done, last loss {:.5}", epoch + 1, config.epochs, last.loss);
        }
    }
    Ok((params, log))
}
