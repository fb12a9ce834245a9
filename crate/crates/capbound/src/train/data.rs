//! Seeded synthetic two-class image tasks on `1×8×8` grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::tensors::{gauss, DataBatch, Sample};

pub const SIDE: usize = 8;
const NOISE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// A bright or dark bump; the pixel mean separates the classes.
    Blobs,
    /// Small or large rings of equal total mass; the pixel mean carries no signal.
    Rings,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Task::Blobs),
            "rings" => Ok(Task::Rings),
            _ => usage(format!("unknown task '{s}' (expected blobs or rings)")),
        }
    }
}

/// Samples with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub batch: DataBatch,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(batch: DataBatch, labels: Vec<usize>) -> Result<Self> {
        if batch.len() != labels.len() {
            return usage(format!("{} samples but {} labels", batch.len(), labels.len()));
        }
        Ok(Self { batch, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn refs(&self) -> Vec<&Sample> {
        self.batch.samples().iter().collect()
    }
}

fn centered_noise(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..SIDE * SIDE).map(|_| NOISE * gauss(rng)).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

fn pattern(f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..SIDE * SIDE)
        .map(|i| f((i / SIDE) as f64, (i % SIDE) as f64))
        .collect()
}

fn blob(rng: &mut ChaCha8Rng, sign: f64) -> Vec<f64> {
    let cy = rng.random_range(1.5..SIDE as f64 - 2.5);
    let cx = rng.random_range(1.5..SIDE as f64 - 2.5);
    let width = rng.random_range(0.9..1.5);
    pattern(|y, x| {
        let d2 = (y - cy).powi(2) + (x - cx).powi(2);
        sign * 1.5 * (-d2 / (2.0 * width * width)).exp()
    })
}

fn ring(rng: &mut ChaCha8Rng, large: bool) -> Vec<f64> {
    let c = (SIDE as f64 - 1.0) / 2.0;
    let cy = c + rng.random_range(-0.5..0.5);
    let cx = c + rng.random_range(-0.5..0.5);
    let radius = if large {
        rng.random_range(2.2..2.8)
    } else {
        rng.random_range(1.5..2.1)
    };
    let mut p = pattern(|y, x| {
        let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
        (-(r - radius).powi(2) / (2.0 * 0.35 * 0.35)).exp()
    });
    let mass: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v *= 8.0 / mass);
    p
}

/// `n` samples with alternating labels `0, 1, 0, …`.
pub fn synth_data(task: Task, n: usize, seed: u64) -> Result<LabeledData> {
    if n < 2 {
        return usage("synthetic data needs n >= 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let signal = match task {
            Task::Blobs => blob(&mut rng, if label == 1 { 1.0 } else { -1.0 }),
            Task::Rings => ring(&mut rng, label == 1),
        };
        let noise = centered_noise(&mut rng);
        let data = signal.iter().zip(&noise).map(|(s, e)| s + e).collect();
        samples.push(Sample::new([1, SIDE, SIDE], data)?);
        labels.push(label);
    }
    LabeledData::new(DataBatch::new(samples)?, labels)
}

/// Nearest-neighbour upsampling of every sample by an integer factor.
pub fn upsample(data: &LabeledData, factor: usize) -> Result<LabeledData> {
    if factor == 0 {
        return usage("upsampling factor must be >= 1");
    }
    let samples = data
        .batch
        .samples()
        .iter()
        .map(|s| {
            let [c, h, w] = s.shape;
            let (hh, ww) = (h * factor, w * factor);
            let mut v = Vec::with_capacity(c * hh * ww);
            for ch in 0..c {
                for y in 0..hh {
                    for x in 0..ww {
                        v.push(s.get(ch, y / factor, x / factor));
                    }
                }
            }
            Sample::new([c, hh, ww], v)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledData::new(DataBatch::new(samples)?, data.labels.clone())
}

pub fn pixel_mean(x: &Sample) -> f64 {
    x.data.iter().sum::<f64>() / x.data.len() as f64
}

/// Smallest error of `mean > t` or `mean < t` over all thresholds `t`, with means rounded to 1e-9.
pub fn best_threshold_error(data: &LabeledData) -> f64 {
    let mut pts: Vec<(f64, usize)> = data
        .batch
        .samples()
        .iter()
        .map(|s| (pixel_mean(s) * 1e9).round() / 1e9)
        .zip(data.labels.iter().copied())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let ones = pts.iter().filter(|p| p.1 == 1).count();
    // predict 1 above the cut: errors = ones below + zeros above
    let mut ones_below = 0;
    let mut zeros_below = 0;
    let mut best = n;
    for cut in 0..=n {
        if cut > 0 {
            if pts[cut - 1].1 == 1 {
                ones_below += 1;
            } else {
                zeros_below += 1;
            }
            if cut < n && pts[cut].0 == pts[cut - 1].0 {
                continue;
            }
        }
        let zeros_above = (n - ones) - zeros_below;
        let above = ones_below + zeros_above;
        let below = (ones - ones_below) + zeros_below;
        best = best.min(above).min(below);
    }
    best as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_data(Task::Rings, 10, 3).unwrap();
        let b = synth_data(Task::Rings, 10, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_data(Task::Rings, 10, 4).unwrap());
        assert!(synth_data(Task::Blobs, 1, 0).is_err());
    }

    #[test]
    fn blobs_split_by_mean_at_zero() {
        let d = synth_data(Task::Blobs, 400, 11).unwrap();
        for (s, &y) in d.batch.samples().iter().zip(&d.labels) {
            assert_eq!(pixel_mean(s) > 0.0, y == 1);
        }
        assert_eq!(best_threshold_error(&d), 0.0);
    }

    #[test]
    fn upsampling_repeats_pixels() {
        let d = synth_data(Task::Blobs, 4, 0).unwrap();
        let u = upsample(&d, 3).unwrap();
        assert_eq!(u.batch.shape(), [1, 24, 24]);
        let (a, b) = (&d.batch.samples()[1], &u.batch.samples()[1]);
        assert_eq!(b.get(0, 7, 23), a.get(0, 2, 7));
        assert!((u.batch.norm() - 3.0 * d.batch.norm()).abs() < 1e-9);
    }

    #[test]
    fn rings_defeat_mean_threshold() {
        let d = synth_data(Task::Rings, 400, 11).unwrap();
        let means: Vec<f64> = d.batch.samples().iter().map(pixel_mean).collect();
        let spread = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - means.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-12);
        assert!(best_threshold_error(&d) >= 0.4);
    }
}
