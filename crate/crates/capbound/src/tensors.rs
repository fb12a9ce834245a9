//! Array types and the weight/data norms used by the bounds.
//!
//! Every reduction accumulates in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Boundary handling for convolutions and patch enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zeros outside the input, output size `ceil(h/s)`.
    ZeroSame,
    /// Wrap-around indexing.
    Circular,
}

impl std::str::FromStr for Padding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_same" | "zero" => Ok(Padding::ZeroSame),
            "circular" => Ok(Padding::Circular),
            _ => usage(format!("unknown padding '{s}'")),
        }
    }
}

/// Offset of kernel index 0 relative to the output anchor: `floor(-(k-1)/2)`.
pub fn kernel_offset(k: usize) -> isize {
    -((k / 2) as isize)
}

/// Convolution weights with shape `(c_out, c_in, k_h, k_w)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl KernelTensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return usage(format!("kernel extents must be >= 1, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return usage(format!(
                "kernel of shape {shape:?} needs {len} entries, got {}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("kernel has non-finite entries".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        assert!(shape.iter().all(|&e| e > 0), "kernel extents must be >= 1");
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut k = Self::zeros(shape);
        for o in 0..shape[0] {
            for i in 0..shape[1] {
                for a in 0..shape[2] {
                    for b in 0..shape[3] {
                        let idx = k.index(o, i, a, b);
                        k.data[idx] = f(o, i, a, b);
                    }
                }
            }
        }
        k
    }

    /// Standard normal entries scaled by `scale`, deterministic in `seed`.
    pub fn random(shape: [usize; 4], scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(shape, scale, &mut rng)
    }

    pub fn random_with<R: rand::Rng>(shape: [usize; 4], scale: f64, rng: &mut R) -> Self {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| scale * gauss(rng))
            .collect();
        Self { shape, data }
    }

    /// Kernel whose only nonzero entry is 1 at the anchor tap of every diagonal channel pair.
    pub fn delta(channels: usize, k_h: usize, k_w: usize) -> Self {
        let (ca, cb) = (
            (-kernel_offset(k_h)) as usize,
            (-kernel_offset(k_w)) as usize,
        );
        Self::from_fn([channels, channels, k_h, k_w], |o, i, a, b| {
            if o == i && a == ca && b == cb {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn c_out(&self) -> usize {
        self.shape[0]
    }
    pub fn c_in(&self) -> usize {
        self.shape[1]
    }
    pub fn k_h(&self) -> usize {
        self.shape[2]
    }
    pub fn k_w(&self) -> usize {
        self.shape[3]
    }
    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, a: usize, b: usize) -> usize {
        ((o * self.shape[1] + i) * self.shape[2] + a) * self.shape[3] + b
    }
    #[inline]
    pub fn get(&self, o: usize, i: usize, a: usize, b: usize) -> f64 {
        self.data[self.index(o, i, a, b)]
    }
    #[inline]
    pub fn set(&mut self, o: usize, i: usize, a: usize, b: usize, v: f64) {
        let idx = self.index(o, i, a, b);
        self.data[idx] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(self.shape, other.shape, "kernel shapes differ");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same(other);
        Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same(other);
        Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.check_same(other);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.check_same(other);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.check_same(other);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Input-channel fiber norms indexed `[(o * k_h + a) * k_w + b]`.
    pub fn fiber_norms(&self) -> Vec<f64> {
        let [co, ci, kh, kw] = self.shape;
        let mut out = vec![0.0; co * kh * kw];
        for o in 0..co {
            for a in 0..kh {
                for b in 0..kw {
                    let mut s = 0.0;
                    for i in 0..ci {
                        let v = self.get(o, i, a, b);
                        s += v * v;
                    }
                    out[(o * kh + a) * kw + b] = s.sqrt();
                }
            }
        }
        out
    }

    /// Reinterprets a `1×1` kernel as its `c_out × c_in` matrix.
    pub fn as_matrix(&self) -> Result<DenseMatrix> {
        if self.k_h() != 1 || self.k_w() != 1 {
            return usage("as_matrix needs a 1x1 kernel");
        }
        DenseMatrix::new(self.c_out(), self.c_in(), self.data.clone())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return usage(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return usage("ragged rows");
        }
        Self::new(r, c, rows.concat())
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| gauss(&mut rng)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// One input sample with shape `(c, h, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl Sample {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return usage(format!("sample of shape {shape:?} has {} entries", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn random(shape: [usize; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.iter().product::<usize>())
            .map(|_| gauss(&mut rng))
            .collect();
        Self { shape, data }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape[1] + y) * self.shape[2] + x
    }
    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Sample) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// `n` samples of identical shape with the cached global norm `‖X‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    samples: Vec<Sample>,
    cached_norm: f64,
}

impl DataBatch {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = match samples.first() {
            Some(s) => s.shape,
            None => return usage("a data batch needs at least one sample"),
        };
        if samples.iter().any(|s| s.shape != first) {
            return usage("all samples must share one shape");
        }
        let sq: f64 = samples
            .iter()
            .map(|s| s.data.iter().map(|v| v * v).sum::<f64>())
            .sum();
        if !sq.is_finite() {
            return Err(Error::Numerical("data batch has non-finite entries".into()));
        }
        Ok(Self {
            samples,
            cached_norm: sq.sqrt(),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn shape(&self) -> [usize; 3] {
        self.samples[0].shape
    }
    pub fn norm(&self) -> f64 {
        self.cached_norm
    }

    /// `max_k ‖x_k‖_∞`
    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.data.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `max_{c,y,x} Σ_k x_k[c,y,x]²`
    pub fn max_pixel_energy(&self) -> f64 {
        let len = self.samples[0].data.len();
        (0..len)
            .map(|j| self.samples.iter().map(|s| s.data[j] * s.data[j]).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Input-channel (2,1) group norm: sum over `(o, a, b)` of the fiber ℓ2 norm over `i`.
pub fn group_norm_21(k: &KernelTensor) -> f64 {
    k.fiber_norms().iter().sum()
}

/// Group norm `‖Aᵀ‖_{2,1}`, i.e. the sum of the ℓ2 norms of the rows of `A`.
pub fn group_norm_matrix_21(a: &DenseMatrix) -> f64 {
    (0..a.rows())
        .map(|r| a.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}

/// Reductions over output-channel slices `K[o, :, :, :]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    L1OutSlice,
    L2OutSlice,
    Frobenius,
    MaxL1OutSlice,
}

impl std::str::FromStr for SliceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1_outslice" => Ok(SliceKind::L1OutSlice),
            "l2_outslice" => Ok(SliceKind::L2OutSlice),
            "frobenius" => Ok(SliceKind::Frobenius),
            "max_l1_outslice" => Ok(SliceKind::MaxL1OutSlice),
            _ => usage(format!("unknown slice norm kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SliceNorm {
    PerChannel(Vec<f64>),
    Scalar(f64),
}

impl SliceNorm {
    /// Scalar value, or the sum of the per-channel entries.
    pub fn total(&self) -> f64 {
        match self {
            SliceNorm::PerChannel(v) => v.iter().sum(),
            SliceNorm::Scalar(s) => *s,
        }
    }
}

pub fn slice_norms(k: &KernelTensor, kind: SliceKind) -> SliceNorm {
    let per = k.c_in() * k.k_h() * k.k_w();
    let slices = k.data().chunks(per);
    match kind {
        SliceKind::L1OutSlice => SliceNorm::PerChannel(
            slices.map(|s| s.iter().map(|v| v.abs()).sum()).collect(),
        ),
        SliceKind::L2OutSlice => SliceNorm::PerChannel(
            slices.map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect(),
        ),
        SliceKind::Frobenius => SliceNorm::Scalar(k.frobenius()),
        SliceKind::MaxL1OutSlice => SliceNorm::Scalar(
            slices
                .map(|s| s.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        ),
    }
}

pub fn data_norm(x: &DataBatch) -> f64 {
    x.norm()
}

/// Largest ℓ2 norm of a `(c, k_h, k_w)` patch read by a convolution with the given geometry.
pub fn patch_norms(
    x: &DataBatch,
    k_h: usize,
    k_w: usize,
    s_h: usize,
    s_w: usize,
    padding: Padding,
) -> Result<f64> {
    let [c, h, w] = x.shape();
    if k_h == 0 || k_w == 0 || s_h == 0 || s_w == 0 {
        return usage("patch extents and strides must be >= 1");
    }
    if padding == Padding::Circular && (k_h > h || k_w > w) {
        return usage(format!("circular patch {k_h}x{k_w} larger than input {h}x{w}"));
    }
    let (oh, ow) = (h.div_ceil(s_h), w.div_ceil(s_w));
    let (off_h, off_w) = (kernel_offset(k_h), kernel_offset(k_w));
    let mut best = 0.0_f64;
    for s in x.samples() {
        for mu in 0..oh {
            for nu in 0..ow {
                let mut acc = 0.0;
                for a in 0..k_h {
                    let row = (s_h * mu) as isize + a as isize + off_h;
                    let row = match wrap(row, h, padding) {
                        Some(r) => r,
                        None => continue,
                    };
                    for b in 0..k_w {
                        let col = (s_w * nu) as isize + b as isize + off_w;
                        let col = match wrap(col, w, padding) {
                            Some(v) => v,
                            None => continue,
                        };
                        for r in 0..c {
                            let v = s.get(r, row, col);
                            acc += v * v;
                        }
                    }
                }
                best = best.max(acc);
            }
        }
    }
    Ok(best.sqrt())
}

/// One standard normal draw.
pub fn gauss<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let v: f64 = StandardNormal.sample(rng);
    v
}

#[inline]
pub(crate) fn wrap(pos: isize, n: usize, padding: Padding) -> Option<usize> {
    match padding {
        Padding::Circular => Some(pos.rem_euclid(n as isize) as usize),
        Padding::ZeroSame => {
            if pos >= 0 && (pos as usize) < n {
                Some(pos as usize)
            } else {
                None
            }
        }
    }
}
