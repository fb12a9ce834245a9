//! Spectral norms of convolutional and dense layers.
//!
//! Circular stride-1 convolutions are block-diagonalized by the 2-D DFT: the singular
//! values of `M_K` are those of the `c_out × c_in` matrices `K̂(f)` over all `h·w`
//! frequencies. Everything else goes through power iteration.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::convop::{conv_adjoint, conv_forward, ConvSpec};
use crate::error::{usage, Result};
use crate::tensors::{gauss, kernel_offset, DenseMatrix, KernelTensor, Sample};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    PowerIteration,
    FftExact,
    DenseSvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub method: SpectralMethod,
    pub iterations_used: usize,
    /// Relative change of the estimate at termination.
    pub residual: f64,
}

/// Power-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            seed: DEFAULT_SEED,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration on `AᵀA` for an operator given by `apply` and `adjoint`.
pub fn power_iteration_op(
    dim: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    adjoint: impl Fn(&[f64]) -> Vec<f64>,
    opts: PowerOptions,
) -> Result<SpectralEstimate> {
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return usage("power iteration needs tol > 0 and max_iters >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut prev = f64::NAN;
    let mut value = 0.0;
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    for it in 1..=opts.max_iters {
        iters = it;
        let y = apply(&x);
        value = norm(&y);
        if value == 0.0 {
            residual = 0.0;
            break;
        }
        if prev.is_finite() {
            residual = (value - prev).abs() / value;
            if residual < opts.tol {
                break;
            }
        }
        prev = value;
        let z = adjoint(&y);
        let nz = norm(&z);
        if nz == 0.0 {
            residual = 0.0;
            break;
        }
        x = z.into_iter().map(|v| v / nz).collect();
    }
    Ok(SpectralEstimate {
        value,
        method: SpectralMethod::PowerIteration,
        iterations_used: iters,
        residual,
    })
}

/// Estimate of `‖M_K‖₂` by alternating forward and adjoint convolutions.
pub fn power_iteration(
    k: &KernelTensor,
    spec: &ConvSpec,
    tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    spec.check_kernel(k)?;
    let in_shape = spec.input_shape;
    let out_shape = spec.output_shape(k.c_out());
    let dim = in_shape.iter().product();
    power_iteration_op(
        dim,
        |x| {
            conv_forward(k, spec, &Sample { shape: in_shape, data: x.to_vec() })
                .expect("shape checked")
                .data
        },
        |y| {
            conv_adjoint(k, spec, &Sample { shape: out_shape, data: y.to_vec() })
                .expect("shape checked")
                .data
        },
        PowerOptions { tol, max_iters, seed },
    )
}

/// Power iteration on a dense matrix.
pub fn power_iteration_matrix(a: &DenseMatrix, opts: PowerOptions) -> Result<SpectralEstimate> {
    let at = a.transpose();
    power_iteration_op(a.cols(), |x| a.matvec(x), |y| at.matvec(y), opts)
}

/// Places a kernel inside an `h × w` grid so that, read as an `h × w` kernel, it defines
/// the same circular convolution.
pub fn embed_in_grid(k: &KernelTensor, h: usize, w: usize) -> Result<KernelTensor> {
    if k.k_h() > h || k.k_w() > w {
        return usage(format!(
            "kernel {}x{} does not fit grid {h}x{w}",
            k.k_h(),
            k.k_w()
        ));
    }
    let (ra, rb) = grid_window(k.k_h(), k.k_w(), h, w);
    let mut g = KernelTensor::zeros([k.c_out(), k.c_in(), h, w]);
    for o in 0..k.c_out() {
        for i in 0..k.c_in() {
            for a in 0..k.k_h() {
                for b in 0..k.k_w() {
                    g.set(o, i, a + ra, b + rb, k.get(o, i, a, b));
                }
            }
        }
    }
    Ok(g)
}

/// First grid row and column of the `k_h × k_w` support window.
pub fn grid_window(k_h: usize, k_w: usize, h: usize, w: usize) -> (usize, usize) {
    (
        (kernel_offset(k_h) - kernel_offset(h)) as usize,
        (kernel_offset(k_w) - kernel_offset(w)) as usize,
    )
}

/// Inverse of [`embed_in_grid`]: reads the support window back out.
pub fn extract_from_grid(g: &KernelTensor, k_h: usize, k_w: usize) -> Result<KernelTensor> {
    if k_h > g.k_h() || k_w > g.k_w() {
        return usage("support larger than grid");
    }
    let (ra, rb) = grid_window(k_h, k_w, g.k_h(), g.k_w());
    Ok(KernelTensor::from_fn(
        [g.c_out(), g.c_in(), k_h, k_w],
        |o, i, a, b| g.get(o, i, a + ra, b + rb),
    ))
}

/// Per-frequency transfer matrices of a grid kernel, frequency-major.
pub struct FrequencyMatrices {
    pub h: usize,
    pub w: usize,
    pub mats: Vec<DMatrix<Complex64>>,
}

fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let (fr, fc) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_mut(w) {
        fr.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        fc.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// 2-D DFT of every `(o, i)` channel pair of a grid kernel.
pub fn grid_spectrum(g: &KernelTensor) -> FrequencyMatrices {
    let [co, ci, h, w] = g.shape();
    let mut planner = FftPlanner::new();
    let mut mats = vec![DMatrix::<Complex64>::zeros(co, ci); h * w];
    let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
    for o in 0..co {
        for i in 0..ci {
            for a in 0..h {
                for b in 0..w {
                    buf[a * w + b] = Complex64::new(g.get(o, i, a, b), 0.0);
                }
            }
            fft2(&mut buf, h, w, false, &mut planner);
            for (f, v) in buf.iter().enumerate() {
                mats[f][(o, i)] = *v;
            }
        }
    }
    FrequencyMatrices { h, w, mats }
}

/// Inverse of [`grid_spectrum`], keeping the real part.
pub fn grid_from_spectrum(fm: &FrequencyMatrices) -> KernelTensor {
    let (h, w) = (fm.h, fm.w);
    let (co, ci) = fm.mats[0].shape();
    let mut planner = FftPlanner::new();
    let mut g = KernelTensor::zeros([co, ci, h, w]);
    let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
    let scale = 1.0 / (h * w) as f64;
    for o in 0..co {
        for i in 0..ci {
            for (f, v) in buf.iter_mut().enumerate() {
                *v = fm.mats[f][(o, i)];
            }
            fft2(&mut buf, h, w, true, &mut planner);
            for a in 0..h {
                for b in 0..w {
                    g.set(o, i, a, b, buf[a * w + b].re * scale);
                }
            }
        }
    }
    g
}

/// All singular values of `M_K` with their maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Sorted in decreasing order.
    pub values: Vec<f64>,
    pub max: f64,
}

impl Spectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let max = values.first().copied().unwrap_or(0.0);
        Self { values, max }
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Linear-interpolated quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let pos = (1.0 - q.clamp(0.0, 1.0)) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let t = pos - lo as f64;
        self.values[lo] * (1.0 - t) + self.values[hi] * t
    }
}

/// One-sided Jacobi SVD of a complex matrix.
///
/// Returns `(W, V)` with `W = M·V`, `V` unitary and the columns of `W` mutually
/// orthogonal; the column norms of `W` are the singular values.
pub fn jacobi_svd(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = m.ncols();
    let mut w = m.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.norm();
                if g <= 1e-15 * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let ap = mat[(r, p)];
                        let aq = mat[(r, q)] * phase.conj();
                        mat[(r, p)] = ap * c - aq * sn;
                        mat[(r, q)] = ap * sn + aq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (w, v)
}

/// Singular values of a complex matrix, `min(rows, cols)` of them, unsorted.
pub fn complex_singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let tall = if m.nrows() >= m.ncols() { m.clone() } else { m.adjoint() };
    let (w, _) = jacobi_svd(&tall);
    w.column_iter().map(|c| c.norm()).collect()
}

pub fn fft_exact_spectrum(k: &KernelTensor, spec: &ConvSpec) -> Result<Spectrum> {
    spec.check_kernel(k)?;
    if !spec.fft_eligible() {
        return usage("exact spectrum needs circular padding and stride 1");
    }
    let [_, h, w] = spec.input_shape;
    let fm = grid_spectrum(&embed_in_grid(k, h, w)?);
    let mut values = Vec::with_capacity(h * w * k.c_out().min(k.c_in()));
    for m in fm.mats {
        values.extend(complex_singular_values(&m));
    }
    Ok(Spectrum::from_values(values))
}

pub fn dense_singular_values(a: &DenseMatrix) -> Vec<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    Spectrum::from_values(a.to_nalgebra().singular_values().iter().copied().collect()).values
}

pub fn dense_spectral_norm(a: &DenseMatrix) -> f64 {
    dense_singular_values(a).first().copied().unwrap_or(0.0)
}

/// Lipschitz constant of a layer: exact when the FFT applies, power iteration otherwise.
pub fn layer_lipschitz(k: &KernelTensor, spec: &ConvSpec, opts: PowerOptions) -> Result<SpectralEstimate> {
    if spec.fft_eligible() {
        let s = fft_exact_spectrum(k, spec)?;
        Ok(SpectralEstimate {
            value: s.max,
            method: SpectralMethod::FftExact,
            iterations_used: 0,
            residual: 0.0,
        })
    } else {
        power_iteration(k, spec, opts.tol, opts.max_iters, opts.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convop::{materialize, DEFAULT_MATERIALIZE_CAP};
    use crate::tensors::Padding;

    /// Direct O(n²) complex DFT of one channel pair.
    fn direct_dft(g: &KernelTensor, o: usize, i: usize) -> Vec<Complex64> {
        let [_, _, h, w] = g.shape();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for fh in 0..h {
            for fw in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..h {
                    for b in 0..w {
                        let ang = -2.0 * std::f64::consts::PI
                            * ((fh * a) as f64 / h as f64 + (fw * b) as f64 / w as f64);
                        acc += Complex64::from_polar(g.get(o, i, a, b), ang);
                    }
                }
                out[fh * w + fw] = acc;
            }
        }
        out
    }

    #[test]
    fn jacobi_svd_handles_clustered_and_deficient_matrices() {
        // columns 0 and 1 nearly equal in norm and orthogonal; column 3 = 2·column 0
        let mut m = DMatrix::<Complex64>::zeros(4, 4);
        m[(0, 0)] = Complex64::new(4.12, 0.3);
        m[(1, 1)] = Complex64::new(0.0, 4.1201);
        m[(2, 2)] = Complex64::new(0.8, -0.1);
        for r in 0..4 {
            m[(r, 3)] = m[(r, 0)] * 2.0;
        }
        let rot = DMatrix::from_fn(4, 4, |r, c| Complex64::from_polar(0.5, (r * c) as f64 * std::f64::consts::FRAC_PI_2));
        let m = &rot * m;
        let (w, v) = jacobi_svd(&m);
        assert!((&w * v.adjoint() - &m).norm() < 1e-12);
        assert!((v.adjoint() * &v - DMatrix::identity(4, 4)).norm() < 1e-12);
        let mut sv = complex_singular_values(&m);
        sv.sort_by(|a, b| b.total_cmp(a));
        let top = (4.12f64.powi(2) + 0.09).sqrt() * 5f64.sqrt();
        assert!((sv[0] - top).abs() < 1e-12);
        assert!(sv[3].abs() < 1e-12);
        let wide = m.rows(0, 2).into_owned();
        assert_eq!(complex_singular_values(&wide).len(), 2);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let g = KernelTensor::random([2, 3, 4, 5], 1.0, 3);
        let fm = grid_spectrum(&g);
        for o in 0..2 {
            for i in 0..3 {
                let d = direct_dft(&g, o, i);
                for f in 0..20 {
                    assert!((fm.mats[f][(o, i)] - d[f]).norm() < 1e-10);
                }
            }
        }
        let back = grid_from_spectrum(&fm);
        assert!(back.frobenius_distance(&g) < 1e-12);
    }

    #[test]
    fn embedding_preserves_operator() {
        let k = KernelTensor::random([2, 2, 2, 3], 1.0, 5);
        let spec = ConvSpec::circular([2, 5, 4], 2, 3).unwrap();
        let g = embed_in_grid(&k, 5, 4).unwrap();
        let gspec = ConvSpec::circular([2, 5, 4], 5, 4).unwrap();
        let x = Sample::random([2, 5, 4], 1);
        let a = conv_forward(&k, &spec, &x).unwrap();
        let b = conv_forward(&g, &gspec, &x).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(extract_from_grid(&g, 2, 3).unwrap(), k);
    }

    #[test]
    fn trivial_spectra() {
        let spec = ConvSpec::circular([2, 4, 4], 3, 3).unwrap();
        let s = fft_exact_spectrum(&KernelTensor::delta(2, 3, 3), &spec).unwrap();
        assert_eq!(s.values.len(), 32);
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let k = KernelTensor::new([1, 1, 1, 1], vec![-0.7]).unwrap();
        let spec = ConvSpec::circular([1, 3, 5], 1, 1).unwrap();
        let s = fft_exact_spectrum(&k, &spec).unwrap();
        assert!(s.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let p = power_iteration(&k, &spec, 1e-6, 1000, 0).unwrap();
        assert!((p.value - 0.7).abs() < 1e-12);
        let z = power_iteration(&KernelTensor::zeros([1, 1, 1, 1]), &spec, 1e-6, 1000, 0).unwrap();
        assert_eq!(z.value, 0.0);
        let bad = ConvSpec::new([1, 4, 4], (1, 1), (2, 2), Padding::Circular).unwrap();
        assert!(fft_exact_spectrum(&k, &bad).is_err());
    }

    #[test]
    fn spectrum_matches_dense_svd() {
        for seed in 0..5 {
            let k = KernelTensor::random([3, 2, 3, 3], 1.0, seed);
            let spec = ConvSpec::circular([2, 4, 4], 3, 3).unwrap();
            let s = fft_exact_spectrum(&k, &spec).unwrap();
            let m = materialize(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
            let d = dense_singular_values(&m);
            assert_eq!(s.values.len(), d.len());
            for (a, b) in s.values.iter().zip(&d) {
                assert!((a - b).abs() < 1e-8);
            }
            let p = power_iteration(&k, &spec, 1e-10, 10_000, seed).unwrap();
            assert!(p.value <= s.max * (1.0 + 1e-12));
            assert!((p.value - s.max).abs() < 1e-4 * s.max);
        }
    }

    #[test]
    fn strided_power_iteration_matches_dense() {
        let k = KernelTensor::random([3, 2, 3, 3], 1.0, 8);
        let spec = ConvSpec::new([2, 5, 5], (3, 3), (2, 2), Padding::ZeroSame).unwrap();
        let m = materialize(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
        let p = power_iteration(&k, &spec, 1e-10, 10_000, 1).unwrap();
        assert!((p.value - dense_spectral_norm(&m)).abs() < 1e-4 * p.value);
    }

    #[test]
    fn dense_norms() {
        assert!((dense_spectral_norm(&DenseMatrix::identity(4)) - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((dense_spectral_norm(&d) - 3.0).abs() < 1e-12);
        let a = DenseMatrix::random(5, 7, 2);
        let p = power_iteration_matrix(&a, PowerOptions { tol: 1e-14, max_iters: 100_000, seed: 0 })
            .unwrap();
        assert!((p.value - dense_spectral_norm(&a)).abs() < 1e-8);
    }

    #[test]
    fn homogeneity_and_submultiplicativity() {
        let spec = ConvSpec::circular([2, 5, 5], 3, 3).unwrap();
        let k1 = KernelTensor::random([2, 2, 3, 3], 1.0, 1);
        let k2 = KernelTensor::random([2, 2, 3, 3], 1.0, 2);
        let s1 = fft_exact_spectrum(&k1, &spec).unwrap();
        let s1s = fft_exact_spectrum(&k1.scaled(-3.0), &spec).unwrap();
        for (a, b) in s1.values.iter().zip(&s1s.values) {
            assert!((3.0 * a - b).abs() < 1e-10);
        }
        let s2 = fft_exact_spectrum(&k2, &spec).unwrap().max;
        for seed in 0..10 {
            let x = Sample::random([2, 5, 5], seed);
            let y = conv_forward(&k2, &spec, &conv_forward(&k1, &spec, &x).unwrap()).unwrap();
            assert!(y.norm() <= s1.max * s2 * x.norm() * (1.0 + 1e-12));
        }
    }
}
