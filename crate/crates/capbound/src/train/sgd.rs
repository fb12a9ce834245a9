//! Projected SGD with momentum and periodic constraint enforcement.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::LabeledData;
use super::margin::{error_rate, margins, ramp_risk};
use super::net::{ConvLayer, LayerConstraint, TinyNet};
use crate::convop::ConvSpec;
use crate::error::{usage, Result};
use crate::lipschitz::{layer_lipschitz, PowerOptions};
use crate::project::{alternating_projections, init_scale_to_feasible, project_l21_ball, ConstraintSet};
use crate::tensors::{group_norm_21, KernelTensor};

/// Relative slack accepted after the final projection cycles.
pub const FEASIBILITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay to zero over the run.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps between projection cycles.
    pub cadence: usize,
    pub post_cycles: usize,
    pub seed: u64,
    /// Margin at which the logged ramp risk is evaluated.
    pub ramp_margin: f64,
    pub power: PowerOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            schedule: LrSchedule::Cosine,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 16,
            epochs: 20,
            cadence: 15,
            post_cycles: 15,
            seed: 0,
            ramp_margin: 1.0,
            power: PowerOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return usage("cadence must be >= 1");
        }
        if self.batch_size == 0 {
            return usage("batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !(self.ramp_margin > 0.0) {
            return usage("learning rate and ramp margin must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return usage("momentum must lie in [0, 1) and weight decay must be >= 0");
        }
        Ok(())
    }

    fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = step as f64 / total.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub name: String,
    pub lipschitz: f64,
    pub distance: f64,
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the state before training; the last record follows the post-training cycles.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub ramp_risk: f64,
    pub layers: Vec<LayerState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize, step: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TinyNet,
    pub trajectory: Vec<EpochRecord>,
    pub status: TrainStatus,
}

impl TrainOutcome {
    pub fn last(&self) -> &EpochRecord {
        self.trajectory.last().expect("trajectory starts with epoch 0")
    }
}

/// Lipschitz constant and (2,1) distance of one layer.
pub fn layer_state(layer: &ConvLayer, spec: &ConvSpec, opts: PowerOptions) -> Result<LayerState> {
    Ok(LayerState {
        name: layer.name.clone(),
        lipschitz: layer_lipschitz(&layer.weight, spec, opts)?.value,
        distance: group_norm_21(&layer.weight.sub(&layer.reference)),
    })
}

/// Runs `cycles` projection cycles; layers without a circular stride-1 geometry use a
/// (2,1)-ball projection followed by rescaling to the Lipschitz bound.
pub fn project_layer(
    layer: &ConvLayer,
    spec: &ConvSpec,
    c: &LayerConstraint,
    cycles: usize,
    opts: PowerOptions,
) -> Result<KernelTensor> {
    if !c.is_active() || cycles == 0 {
        return Ok(layer.weight.clone());
    }
    if spec.fft_eligible() {
        let set = ConstraintSet::new(layer.reference.clone(), c.distance_bound, c.lipschitz_bound, *spec)?;
        return Ok(alternating_projections(&layer.weight, &set, cycles)?.0);
    }
    let mut k = layer.weight.clone();
    for _ in 0..cycles {
        k = project_l21_ball(&k, &layer.reference, c.distance_bound);
        let lip = layer_lipschitz(&k, spec, opts)?.value;
        if lip > c.lipschitz_bound {
            k = k.scaled(c.lipschitz_bound / lip);
        }
    }
    Ok(k)
}

/// Moves `weight` toward the reference along the segment until both bounds hold,
/// assuming the reference itself meets the Lipschitz bound.
pub fn segment_repair(
    layer: &ConvLayer,
    spec: &ConvSpec,
    c: &LayerConstraint,
    opts: PowerOptions,
) -> Result<KernelTensor> {
    let diff = layer.weight.sub(&layer.reference);
    let dist = group_norm_21(&diff);
    let at = |t: f64| {
        let mut k = layer.reference.clone();
        k.axpy(t, &diff);
        k
    };
    let lip_ok = |k: &KernelTensor| -> Result<bool> {
        Ok(layer_lipschitz(k, spec, opts)?.value <= c.lipschitz_bound)
    };
    let mut hi = if dist > c.distance_bound { c.distance_bound / dist } else { 1.0 };
    if lip_ok(&at(hi))? {
        return Ok(at(hi));
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if lip_ok(&at(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo))
}

fn relative_excess(value: f64, bound: f64) -> f64 {
    if value <= bound {
        0.0
    } else if bound > 0.0 {
        (value - bound) / bound
    } else {
        value
    }
}

/// Largest relative violation of a layer.
pub fn layer_violation(state: &LayerState, c: &LayerConstraint) -> f64 {
    relative_excess(state.lipschitz, c.lipschitz_bound).max(relative_excess(state.distance, c.distance_bound))
}

fn record(
    net: &TinyNet,
    epoch: usize,
    train: &LabeledData,
    test: &LabeledData,
    config: &TrainConfig,
) -> Result<EpochRecord> {
    let logits = net.forward_batch(&train.batch)?;
    let test_logits = net.forward_batch(&test.batch)?;
    let train_loss = logits
        .iter()
        .zip(&train.labels)
        .map(|(l, &y)| super::net::cross_entropy(l, y).0)
        .sum::<f64>()
        / train.len() as f64;
    let specs = net.specs();
    Ok(EpochRecord {
        epoch,
        train_loss,
        train_error: error_rate(&logits, &train.labels)?,
        test_error: error_rate(&test_logits, &test.labels)?,
        ramp_risk: ramp_risk(&logits, &train.labels, config.ramp_margin)?,
        layers: net
            .layers
            .iter()
            .zip(&specs)
            .map(|(l, s)| layer_state(l, s, config.power))
            .collect::<Result<_>>()?,
    })
}

/// Rescales each constrained reference (and its weight) so the reference meets the Lipschitz bound.
pub fn scale_to_feasible(net: &mut TinyNet, constraints: &[LayerConstraint], opts: PowerOptions) -> Result<()> {
    let specs = net.specs();
    for ((l, spec), c) in net.layers.iter_mut().zip(&specs).zip(constraints) {
        if !c.lipschitz_bound.is_finite() {
            continue;
        }
        let lip = layer_lipschitz(&l.reference, spec, opts)?.value;
        if lip > c.lipschitz_bound {
            let scaled = init_scale_to_feasible(&l.reference, spec, c.lipschitz_bound)?;
            let f = c.lipschitz_bound / lip;
            l.weight = l.weight.scaled(f);
            l.reference = scaled;
        }
    }
    Ok(())
}

/// Final projection cycles followed by a repair step for layers still outside tolerance.
pub fn finalize_constraints(net: &mut TinyNet, constraints: &[LayerConstraint], config: &TrainConfig) -> Result<()> {
    let specs = net.specs();
    for ((l, spec), c) in net.layers.iter_mut().zip(&specs).zip(constraints) {
        if !c.is_active() {
            continue;
        }
        l.weight = project_layer(l, spec, c, config.post_cycles, config.power)?;
        let state = layer_state(l, spec, config.power)?;
        if layer_violation(&state, c) > 0.5 * FEASIBILITY_TOL {
            l.weight = segment_repair(l, spec, c, config.power)?;
        }
    }
    Ok(())
}

/// Trains with SGD + momentum, projecting every `cadence` steps and finishing with
/// `post_cycles` projection cycles. The log holds one record per epoch plus the initial state.
pub fn train_projected(
    mut net: TinyNet,
    train: &LabeledData,
    test: &LabeledData,
    constraints: &[LayerConstraint],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if constraints.len() != net.layers.len() {
        return usage(format!(
            "{} constraints for {} layers",
            constraints.len(),
            net.layers.len()
        ));
    }
    if train.is_empty() || test.is_empty() {
        return usage("train and test sets must be non-empty");
    }
    scale_to_feasible(&mut net, constraints, config.power)?;
    let specs = net.specs();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<KernelTensor> = net
        .layers
        .iter()
        .map(|l| KernelTensor::zeros(l.weight.shape()))
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let samples = train.refs();
    let mut trajectory = vec![record(&net, 0, train, test, config)?];
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<_> = chunk.iter().map(|&i| samples[i]).collect();
            let ys: Vec<_> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, grads) = net.loss_and_grad(&xs, &ys)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Ok(TrainOutcome {
                    net,
                    trajectory,
                    status: TrainStatus::Diverged { epoch, step },
                });
            }
            let lr = config.lr_at(step, total_steps);
            for ((l, v), g) in net.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                let mut g = g.clone();
                g.axpy(config.weight_decay, &l.weight);
                *v = v.scaled(config.momentum);
                v.axpy(1.0, &g);
                l.weight.axpy(-lr, v);
            }
            step += 1;
            if step % config.cadence == 0 {
                for ((l, spec), c) in net.layers.iter_mut().zip(&specs).zip(constraints) {
                    l.weight = project_layer(l, spec, c, 1, config.power)?;
                }
            }
        }
        if epoch == config.epochs {
            finalize_constraints(&mut net, constraints, config)?;
        }
        let rec = record(&net, epoch, train, test, config)?;
        if !rec.train_loss.is_finite() {
            trajectory.push(rec);
            return Ok(TrainOutcome {
                net,
                trajectory,
                status: TrainStatus::Diverged { epoch, step },
            });
        }
        trajectory.push(rec);
    }
    if config.epochs == 0 {
        finalize_constraints(&mut net, constraints, config)?;
    }
    Ok(TrainOutcome {
        net,
        trajectory,
        status: TrainStatus::Completed,
    })
}

/// Median of the training margins; used as a reference margin scale.
pub fn median_margin(net: &TinyNet, data: &LabeledData) -> Result<f64> {
    let logits = net.forward_batch(&data.batch)?;
    let mut m = margins(&logits, &data.labels)?;
    m.sort_by(f64::total_cmp);
    Ok(m[m.len() / 2])
}

/// Median over layers of a per-layer quantity.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
