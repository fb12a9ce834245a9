//! Exhaustive covers, the Maurey cover enumeration and Monte-Carlo Rademacher averages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{binomial_bound_check, BinomialCheck};
use crate::convop::{conv_forward, ConvSpec};
use crate::error::{usage, Error, Result};
use crate::tensors::{gauss, group_norm_21, DataBatch, KernelTensor, Sample};

/// Largest point set accepted by [`brute_force_cover`].
pub const MAX_COVER_POINTS: usize = 20;
const MAX_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteForceCover {
    /// Smallest cover with centers among the points.
    pub internal: usize,
    /// Smallest cover with centers among the candidates, when candidates were given.
    pub external: Option<usize>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimal number of closed `eps`-balls around `centers` covering `points`.
fn min_cover(points: &[Vec<f64>], centers: &[Vec<f64>], eps: f64) -> Option<usize> {
    let n = points.len();
    if n == 0 {
        return Some(0);
    }
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut masks: Vec<u32> = centers
        .iter()
        .map(|c| {
            points
                .iter()
                .enumerate()
                .filter(|(_, p)| dist(p, c) <= eps)
                .fold(0u32, |m, (i, _)| m | (1 << i))
        })
        .filter(|&m| m != 0)
        .collect();
    masks.sort_unstable();
    masks.dedup();
    // drop balls dominated by another ball
    let dominated: Vec<bool> = masks
        .iter()
        .map(|&m| masks.iter().any(|&o| o != m && o & m == m))
        .collect();
    let masks: Vec<u32> = masks.into_iter().zip(dominated).filter(|(_, d)| !d).map(|(m, _)| m).collect();
    if masks.iter().fold(0, |a, &m| a | m) != full {
        return None;
    }
    let mut best = n.min(masks.len()) + 1;
    dfs(full, 0, 0, &masks, &mut best);
    Some(best)
}

fn dfs(full: u32, covered: u32, used: usize, masks: &[u32], best: &mut usize) {
    if covered == full {
        *best = (*best).min(used);
        return;
    }
    if used + 1 >= *best {
        return;
    }
    let first = (!covered & full).trailing_zeros();
    for &m in masks.iter().filter(|&&m| m & (1 << first) != 0) {
        dfs(full, covered | m, used + 1, masks, best);
    }
}

/// Exact internal (and optionally external) covering numbers of a small point set.
pub fn brute_force_cover(points: &[Vec<f64>], eps: f64, candidates: Option<&[Vec<f64>]>) -> Result<BruteForceCover> {
    if points.len() > MAX_COVER_POINTS {
        return Err(Error::Resource(format!(
            "exact covering limited to {MAX_COVER_POINTS} points, got {}",
            points.len()
        )));
    }
    if !(eps >= 0.0) {
        return usage("covering radius must be >= 0");
    }
    if let Some(c) = candidates {
        if c.len() > MAX_CANDIDATES {
            return Err(Error::Resource(format!("at most {MAX_CANDIDATES} candidate centers")));
        }
    }
    let internal = min_cover(points, points, eps).expect("points cover themselves");
    let external = match candidates {
        Some(c) => Some(min_cover(points, c, eps).ok_or_else(|| {
            Error::Usage("candidate centers do not cover every point at this radius".into())
        })?),
        None => None,
    };
    Ok(BruteForceCover { internal, external })
}

/// A tiny convolution layer class together with a data sample.
#[derive(Debug, Clone)]
pub struct MaureyInstance {
    pub spec: ConvSpec,
    pub c_out: usize,
    pub data: DataBatch,
    /// (2,1) norm bound.
    pub radius: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaureyReport {
    /// Number of summands `m = ⌈b²‖X‖²/ε²⌉`.
    pub m: u64,
    pub params: usize,
    pub cover_size: u64,
    pub binomial: BinomialCheck,
    pub kernels_tested: usize,
    /// Largest distance from a tested kernel to its nearest cover element.
    pub worst_distance: f64,
    pub all_covered: bool,
}

const MAX_MAUREY_ELEMENTS: u128 = 2_000_000;

/// Sample outputs of the convolution with kernel `k`, concatenated.
fn outputs(k: &KernelTensor, spec: &ConvSpec, data: &DataBatch) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for s in data.samples() {
        v.extend_from_slice(&conv_forward(k, spec, s)?.data);
    }
    Ok(v)
}

/// Enumerates the Maurey cover of `{K : ‖K‖_{2,1} ≤ b}` and checks it on `kernels` random members.
pub fn maurey_cover_oracle(inst: &MaureyInstance, kernels: usize, seed: u64) -> Result<MaureyReport> {
    let spec = &inst.spec;
    let [c_in, _, _] = spec.input_shape;
    let (kh, kw) = spec.kernel_shape;
    let shape = [inst.c_out, c_in, kh, kw];
    let params = shape.iter().product::<usize>();
    if !(inst.eps > 0.0) || !(inst.radius >= 0.0) {
        return usage("need eps > 0 and radius >= 0");
    }
    if spec.input_shape != inst.data.shape() {
        return usage("data shape does not match the layer input");
    }
    let xnorm = inst.data.norm();
    let m = (inst.radius * inst.radius * xnorm * xnorm / (inst.eps * inst.eps)).ceil() as u64;
    let binomial = binomial_bound_check(m, 2 * params as u64 - 1)?;
    if binomial.exact > MAX_MAUREY_ELEMENTS {
        return Err(Error::Resource(format!("Maurey cover has {} elements", binomial.exact)));
    }

    // generators ±(‖X‖b/‖X_r‖)·E_{prij}, evaluated on the sample
    let channel_norms: Vec<f64> = (0..c_in)
        .map(|r| {
            inst.data
                .samples()
                .iter()
                .map(|s| s.data[r * s.shape[1] * s.shape[2]..(r + 1) * s.shape[1] * s.shape[2]].iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut gens: Vec<Vec<f64>> = Vec::with_capacity(2 * params);
    for idx in 0..params {
        let r = (idx / (kh * kw)) % c_in;
        let mut e = KernelTensor::zeros(shape);
        let scale = if channel_norms[r] > 0.0 { xnorm * inst.radius / channel_norms[r] } else { 0.0 };
        e.data_mut()[idx] = scale;
        let out = outputs(&e, spec, &inst.data)?;
        gens.push(out.iter().map(|v| -v).collect());
        gens.push(out);
    }
    let g = gens.len();
    let gram: Vec<f64> = (0..g * g)
        .map(|ij| gens[ij / g].iter().zip(&gens[ij % g]).map(|(a, b)| a * b).sum())
        .collect();

    // all compositions of m into g parts, with their quadratic forms
    let mut elements: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut parts = vec![0u32; g];
    compositions(m as u32, 0, &mut parts, &mut |p| {
        let mut q = 0.0;
        for i in 0..g {
            if p[i] == 0 {
                continue;
            }
            for j in 0..g {
                q += p[i] as f64 * p[j] as f64 * gram[i * g + j];
            }
        }
        elements.push((p.to_vec(), q));
    });
    let mf = m.max(1) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..kernels {
        let mut k = KernelTensor::from_fn(shape, |_, _, _, _| gauss(&mut rng));
        let n21 = group_norm_21(&k);
        let target = inst.radius * rng.random::<f64>();
        k = if n21 > 0.0 { k.scaled(target / n21) } else { k };
        let u = outputs(&k, spec, &inst.data)?;
        let uu: f64 = u.iter().map(|v| v * v).sum();
        let ug: Vec<f64> = gens.iter().map(|v| v.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
        let best = if m == 0 {
            uu
        } else {
            elements
                .iter()
                .map(|(p, q)| {
                    let lin: f64 = p.iter().zip(&ug).map(|(&c, x)| c as f64 * x).sum();
                    uu - 2.0 * lin / mf + q / (mf * mf)
                })
                .fold(f64::INFINITY, f64::min)
        };
        worst = worst.max(best.max(0.0).sqrt());
    }
    Ok(MaureyReport {
        m,
        params,
        cover_size: if m == 0 { 1 } else { elements.len() as u64 },
        binomial,
        kernels_tested: kernels,
        worst_distance: worst,
        all_covered: worst <= inst.eps * (1.0 + 1e-12),
    })
}

fn compositions(left: u32, pos: usize, parts: &mut [u32], f: &mut dyn FnMut(&[u32])) {
    if pos + 1 == parts.len() {
        parts[pos] = left;
        f(parts);
        parts[pos] = 0;
        return;
    }
    for v in 0..=left {
        parts[pos] = v;
        compositions(left - v, pos + 1, parts, f);
    }
    parts[pos] = 0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

fn best_correlation(family: &[Vec<f64>], sigma: &[f64]) -> f64 {
    let n = sigma.len() as f64;
    family
        .iter()
        .map(|h| h.iter().zip(sigma).map(|(a, s)| a * s).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Monte-Carlo estimate of `E_σ sup_h (1/n) Σ σ_i h(x_i)` for a finite family given by its values.
pub fn sampled_rademacher(family: &[Vec<f64>], trials: usize, seed: u64) -> Result<RademacherEstimate> {
    let n = check_family(family)?;
    if trials == 0 {
        return usage("need at least one trial");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma = vec![0.0; n];
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..trials {
        sigma.iter_mut().for_each(|s| *s = if rng.random::<bool>() { 1.0 } else { -1.0 });
        let v = best_correlation(family, &sigma);
        sum += v;
        sq += v * v;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = ((sq / t - mean * mean) * t / (t - 1.0).max(1.0)).max(0.0);
    Ok(RademacherEstimate { mean, std_error: (var / t).sqrt(), trials })
}

/// Exact average over all `2^n` sign vectors.
pub fn exact_rademacher(family: &[Vec<f64>]) -> Result<f64> {
    let n = check_family(family)?;
    if n > 24 {
        return Err(Error::Resource(format!("exact Rademacher average limited to 24 points, got {n}")));
    }
    let mut sigma = vec![0.0; n];
    let mut acc = 0.0;
    for mask in 0u32..(1 << n) {
        for (i, s) in sigma.iter_mut().enumerate() {
            *s = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
        }
        acc += best_correlation(family, &sigma);
    }
    Ok(acc / (1u64 << n) as f64)
}

fn check_family(family: &[Vec<f64>]) -> Result<usize> {
    let n = family.first().map(|h| h.len()).unwrap_or(0);
    if n == 0 || family.iter().any(|h| h.len() != n) {
        return usage("family must be non-empty with equal-length value vectors");
    }
    Ok(n)
}

/// One-sample helper for constructing Maurey instances.
pub fn random_batch(shape: [usize; 3], n: usize, seed: u64) -> DataBatch {
    DataBatch::new((0..n).map(|k| Sample::random(shape, seed.wrapping_add(k as u64))).collect()).expect("consistent shapes")
}
