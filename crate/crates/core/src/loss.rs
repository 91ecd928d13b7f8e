//! Training losses and the round-robin task scheduler.
//!
//! All losses compare against the nuclei channel `o` of a [`ProbabilityMap`]:
//!
//! * cluster: binary cross entropy averaged over all `n*m` pixels,
//! * Voronoi: binary cross entropy averaged over the non-ignored pixels only,
//! * repel: mean squared error over all pixels.
//!
//! Probabilities are clamped to `[1e-7, 1 - 1e-7]` before taking logs. Loss values are
//! accumulated in `f64` regardless of the map's element type.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encode::{RepelMap, TriState, TriStateLabelMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

pub const PROB_EPSILON: f64 = 1e-7;

/// Two-channel per-pixel softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap<T = f64> {
    pub nuclei: Grid<T>,
    pub background: Grid<T>,
}

impl<T: Scalar> ProbabilityMap<T> {
    /// Builds a map from the nuclei channel, deriving the background as `1 - nuclei`.
    pub fn from_nuclei(nuclei: Grid<T>) -> Self {
        let background = nuclei.map(|&p| T::one() - p);
        Self { nuclei, background }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.nuclei.dims()
    }

    pub fn cast<U: Scalar>(&self) -> ProbabilityMap<U> {
        ProbabilityMap {
            nuclei: self.nuclei.map(|&v| U::of(v.f64())),
            background: self.background.map(|&v| U::of(v.f64())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossKind {
    Voronoi,
    Repel,
    Cluster,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Voronoi, LossKind::Repel, LossKind::Cluster];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Voronoi => "VORONOI",
            LossKind::Repel => "REPEL",
            LossKind::Cluster => "CLUSTER",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss used at global training iteration `i`: Voronoi when `i % 3 == 0`, repel when
/// `i % 3 == 1`, cluster when `i % 3 == 2`.
pub fn select_loss(iteration: u64) -> LossKind {
    match iteration % 3 {
        0 => LossKind::Voronoi,
        1 => LossKind::Repel,
        _ => LossKind::Cluster,
    }
}

/// Global iteration counter. It is never reset between epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub iteration: u64,
}

impl SchedulerState {
    pub fn current(&self) -> LossKind {
        select_loss(self.iteration)
    }

    /// Returns the loss for the current iteration and advances by one.
    pub fn step(&mut self) -> LossKind {
        let kind = self.current();
        self.iteration += 1;
        kind
    }
}

/// Unweighted sum of the three losses.
pub fn naive_sum_loss(voronoi: f64, repel: f64, cluster: f64) -> f64 {
    voronoi + repel + cluster
}

/// A target paired with the loss that consumes it.
#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    Voronoi(&'a TriStateLabelMap),
    Repel(&'a RepelMap),
    Cluster(&'a TriStateLabelMap),
}

impl LossTarget<'_> {
    pub fn kind(&self) -> LossKind {
        match self {
            LossTarget::Voronoi(_) => LossKind::Voronoi,
            LossTarget::Repel(_) => LossKind::Repel,
            LossTarget::Cluster(_) => LossKind::Cluster,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            LossTarget::Voronoi(t) | LossTarget::Cluster(t) => t.dims(),
            LossTarget::Repel(t) => t.dims(),
        }
    }

    pub fn loss<T: Scalar>(&self, output: &ProbabilityMap<T>) -> Result<f64> {
        match self {
            LossTarget::Voronoi(t) => voronoi_loss(t, output),
            LossTarget::Repel(t) => repel_loss(t, output),
            LossTarget::Cluster(t) => cluster_loss(t, output),
        }
    }

    /// Loss value and its derivative with respect to every nuclei probability.
    pub fn loss_and_grad<T: Scalar>(&self, output: &ProbabilityMap<T>) -> Result<(f64, Grid<T>)> {
        output.nuclei.ensure_dims(self.dims())?;
        match self {
            LossTarget::Voronoi(t) => {
                let n = t.supervised_count();
                if n == 0 {
                    return Err(Error::EmptyVoronoiSupervision);
                }
                Ok(cross_entropy_with_grad(t, &output.nuclei, n))
            }
            LossTarget::Cluster(t) => {
                ensure_no_ignored(t)?;
                Ok(cross_entropy_with_grad(t, &output.nuclei, t.labels().len()))
            }
            LossTarget::Repel(t) => {
                let n = t.values.len() as f64;
                let scale = T::of(2.0 / n);
                let mut sum = 0.0;
                let grad = Grid::from_vec(
                    t.values.width(),
                    t.values.height(),
                    t.values
                        .iter()
                        .zip(output.nuclei.iter())
                        .map(|(&target, &o)| {
                            let r = o - T::of(target);
                            sum += r.f64() * r.f64();
                            scale * r
                        })
                        .collect(),
                )?;
                Ok((sum / n, grad))
            }
        }
    }
}

pub fn cluster_loss<T: Scalar>(target: &TriStateLabelMap, output: &ProbabilityMap<T>) -> Result<f64> {
    output.nuclei.ensure_dims(target.dims())?;
    ensure_no_ignored(target)?;
    Ok(cross_entropy(target, &output.nuclei, target.labels().len()))
}

pub fn voronoi_loss<T: Scalar>(target: &TriStateLabelMap, output: &ProbabilityMap<T>) -> Result<f64> {
    output.nuclei.ensure_dims(target.dims())?;
    let n = target.supervised_count();
    if n == 0 {
        return Err(Error::EmptyVoronoiSupervision);
    }
    Ok(cross_entropy(target, &output.nuclei, n))
}

pub fn repel_loss<T: Scalar>(target: &RepelMap, output: &ProbabilityMap<T>) -> Result<f64> {
    output.nuclei.ensure_dims(target.dims())?;
    let sum: f64 = target
        .values
        .iter()
        .zip(output.nuclei.iter())
        .map(|(&t, &o)| {
            let r = t - o.f64();
            r * r
        })
        .sum();
    Ok(sum / target.values.len() as f64)
}

fn ensure_no_ignored(target: &TriStateLabelMap) -> Result<()> {
    if target.count(TriState::Ignored) > 0 {
        return Err(Error::InvalidInput(
            "cluster target must not contain ignored pixels".into(),
        ));
    }
    Ok(())
}

#[inline]
fn clamp_prob(o: f64) -> f64 {
    o.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

fn cross_entropy<T: Scalar>(target: &TriStateLabelMap, nuclei: &Grid<T>, divisor: usize) -> f64 {
    let sum: f64 = target
        .labels()
        .iter()
        .zip(nuclei.iter())
        .map(|(&s, &o)| match s {
            TriState::Foreground => -clamp_prob(o.f64()).ln(),
            TriState::Background => -(1.0 - clamp_prob(o.f64())).ln(),
            TriState::Ignored => 0.0,
        })
        .sum();
    sum / divisor as f64
}

fn cross_entropy_with_grad<T: Scalar>(target: &TriStateLabelMap, nuclei: &Grid<T>, divisor: usize) -> (f64, Grid<T>) {
    let eps = T::of(PROB_EPSILON);
    let lo = eps;
    let hi = T::one() - eps;
    let inv_n = T::one() / T::of(divisor as f64);
    let grad = Grid::from_vec(
        nuclei.width(),
        nuclei.height(),
        target
            .labels()
            .iter()
            .zip(nuclei.iter())
            .map(|(&s, &o)| {
                // the clamp is flat outside [lo, hi]
                if o < lo || o > hi {
                    return T::zero();
                }
                match s {
                    TriState::Foreground => -inv_n / o,
                    TriState::Background => inv_n / (T::one() - o),
                    TriState::Ignored => T::zero(),
                }
            })
            .collect(),
    )
    .expect("dims match");
    (cross_entropy(target, nuclei, divisor), grad)
}
