//! Accuracy and capacity over a grid of uniform per-layer constraints.

use serde::{Deserialize, Serialize};

use super::data::{synth_data, LabeledData, Task};
use super::net::{LayerConstraint, NetArch, TinyNet};
use super::sgd::{median, median_margin, train_projected, TrainConfig, TrainOutcome, TrainStatus};
use crate::capacity::{margin_for_equal_ramp_loss, rademacher_clubs, rademacher_spades, MarginMatch};
use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub task: Task,
    pub arch: NetArch,
    pub train: TrainConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub data_seed: u64,
    pub init_seed: u64,
    /// Lipschitz bounds as multiples of the unconstrained median.
    pub lipschitz_fractions: Vec<f64>,
    /// Distance bounds as multiples of the unconstrained median.
    pub distance_fractions: Vec<f64>,
}

impl SweepConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            arch: NetArch::demo(super::data::SIDE, 4, 2),
            train: TrainConfig::default(),
            n_train: 256,
            n_test: 512,
            data_seed: 1,
            init_seed: 2,
            lipschitz_fractions: vec![0.25, 0.5, 0.75, 1.0],
            distance_fractions: vec![0.05, 0.1, 0.25, 0.5],
        }
    }
}

/// Summary of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub lipschitz_fraction: Option<f64>,
    pub distance_fraction: Option<f64>,
    pub lipschitz_bound: Option<f64>,
    pub distance_bound: Option<f64>,
    pub status: TrainStatus,
    pub train_error: f64,
    pub test_error: f64,
    pub median_lipschitz: f64,
    pub median_distance: f64,
    /// Margin at which the ramp risk equals the baseline's; `None` when no margin matches.
    pub margin: Option<f64>,
    pub clubs: Option<f64>,
    pub spades: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: Task,
    pub reference_margin: f64,
    pub baseline: CellResult,
    /// Row-major over (Lipschitz fraction, distance fraction).
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    /// Cells whose test error is within `slack` of the baseline.
    pub fn preserving(&self, slack: f64) -> Vec<bool> {
        self.cells
            .iter()
            .map(|c| c.status == TrainStatus::Completed && c.test_error <= self.baseline.test_error + slack)
            .collect()
    }

    /// Human-readable test-accuracy table.
    pub fn table(&self) -> String {
        let label = |x: Option<f64>| x.unwrap_or(f64::INFINITY);
        let mut s_fr: Vec<f64> = Vec::new();
        let mut b_fr: Vec<f64> = Vec::new();
        for c in &self.cells {
            let (a, b) = (label(c.lipschitz_fraction), label(c.distance_fraction));
            if !s_fr.contains(&a) {
                s_fr.push(a);
            }
            if !b_fr.contains(&b) {
                b_fr.push(b);
            }
        }
        let mut out = format!(
            "task {:?}: baseline test acc {:.3}, median Lip {:.3}, median dist {:.3}\n",
            self.task,
            1.0 - self.baseline.test_error,
            self.baseline.median_lipschitz,
            self.baseline.median_distance
        );
        out.push_str("s\\b  ");
        for b in &b_fr {
            out.push_str(&format!("{b:>8.2}"));
        }
        out.push('\n');
        for (i, s) in s_fr.iter().enumerate() {
            out.push_str(&format!("{s:<5.2}"));
            for j in 0..b_fr.len() {
                let c = &self.cells[i * b_fr.len() + j];
                match c.status {
                    TrainStatus::Completed => out.push_str(&format!("{:>8.3}", 1.0 - c.test_error)),
                    TrainStatus::Diverged { .. } => out.push_str(&format!("{:>8}", "div")),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn summarize(
    out: &TrainOutcome,
    train: &LabeledData,
    reference: Option<(&[Vec<f64>], f64)>,
    fractions: (Option<f64>, Option<f64>),
    bounds: (Option<f64>, Option<f64>),
    cfg: &SweepConfig,
) -> Result<CellResult> {
    let last = out.last();
    let lips: Vec<f64> = last.layers.iter().map(|l| l.lipschitz).collect();
    let dists: Vec<f64> = last.layers.iter().map(|l| l.distance).collect();
    let logits = out.net.forward_batch(&train.batch)?;
    let margin = match (out.status.clone(), reference) {
        (TrainStatus::Diverged { .. }, _) => None,
        (_, None) => Some(median_margin(&out.net, train)?),
        (_, Some((ref_logits, gamma_ref))) => {
            match margin_for_equal_ramp_loss(ref_logits, &train.labels, gamma_ref, &logits, &train.labels, 1e6 * gamma_ref)? {
                MarginMatch::Found(g) => Some(g),
                MarginMatch::NoSolution => None,
            }
        }
    };
    let (clubs, spades) = match margin {
        Some(g) if g > 0.0 => {
            let input = out.net.capacity_input(&train.batch, g, cfg.train.power)?;
            (Some(rademacher_clubs(&input)?), Some(rademacher_spades(&input)?))
        }
        _ => (None, None),
    };
    Ok(CellResult {
        lipschitz_fraction: fractions.0,
        distance_fraction: fractions.1,
        lipschitz_bound: bounds.0,
        distance_bound: bounds.1,
        status: out.status.clone(),
        train_error: last.train_error,
        test_error: last.test_error,
        median_lipschitz: median(&lips),
        median_distance: median(&dists),
        margin,
        clubs,
        spades,
    })
}

/// Trains the unconstrained baseline, then one model per grid cell from the same initialization.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    run_sweep_with(cfg, |_, _| Ok(()))
}

/// Like [`run_sweep`], calling `on_run` with a label (`baseline` or `s<i>_b<j>`) after each training run.
pub fn run_sweep_with<F>(cfg: &SweepConfig, mut on_run: F) -> Result<SweepReport>
where
    F: FnMut(&str, &TrainOutcome) -> Result<()>,
{
    if cfg.lipschitz_fractions.is_empty() || cfg.distance_fractions.is_empty() {
        return usage("constraint grid must be non-empty");
    }
    let train = synth_data(cfg.task, cfg.n_train, cfg.data_seed)?;
    let test = synth_data(cfg.task, cfg.n_test, cfg.data_seed.wrapping_add(1_000_003))?;
    let net = TinyNet::init(cfg.arch.clone(), cfg.init_seed)?;
    let layers = net.layers.len();
    let base = train_projected(net.clone(), &train, &test, &vec![LayerConstraint::NONE; layers], &cfg.train)?;
    if base.status != TrainStatus::Completed {
        return Err(crate::Error::Numerical("unconstrained baseline diverged".into()));
    }
    on_run("baseline", &base)?;
    let baseline = summarize(&base, &train, None, (None, None), (None, None), cfg)?;
    let gamma_ref = baseline.margin.unwrap_or(f64::NAN);
    if !(gamma_ref > 0.0) {
        return Err(crate::Error::Numerical("baseline median margin is not positive".into()));
    }
    let ref_logits = base.net.forward_batch(&train.batch)?;
    let mut cells = Vec::new();
    let finite = |x: f64| x.is_finite().then_some(x);
    for (i, &fs) in cfg.lipschitz_fractions.iter().enumerate() {
        for (j, &fb) in cfg.distance_fractions.iter().enumerate() {
            if fs.is_nan() || fb.is_nan() || fs < 0.0 || fb < 0.0 {
                return usage(format!("grid fractions must be non-negative, got ({fs}, {fb})"));
            }
            let s = fs * baseline.median_lipschitz;
            let b = fb * baseline.median_distance;
            let out = train_projected(net.clone(), &train, &test, &vec![LayerConstraint::new(s, b); layers], &cfg.train)?;
            on_run(&format!("s{i}_b{j}"), &out)?;
            cells.push(summarize(
                &out,
                &train,
                Some((&ref_logits, gamma_ref)),
                (finite(fs), finite(fb)),
                (finite(s), finite(b)),
                cfg,
            )?);
        }
    }
    Ok(SweepReport {
        task: cfg.task,
        reference_margin: gamma_ref,
        baseline,
        cells,
    })
}
