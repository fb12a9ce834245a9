//! Strided multi-channel convolution as a linear operator.
//!
//! Output coordinate `(σ, μ, ν)` reads input rows `s_h·μ + a + off(k_h)` for kernel
//! rows `a`, where `off(k) = floor(-(k-1)/2)`; columns likewise.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::tensors::{
    group_norm_21, kernel_offset, slice_norms, wrap, DenseMatrix, KernelTensor, Padding, Sample,
    SliceKind,
};

/// Default cap on materialized matrix entries.
pub const DEFAULT_MATERIALIZE_CAP: usize = 10_000_000;

/// Geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub strides: (usize, usize),
    pub padding: Padding,
    /// `(c_in, h, w)`
    pub input_shape: [usize; 3],
    pub kernel_shape: (usize, usize),
}

impl ConvSpec {
    pub fn new(
        input_shape: [usize; 3],
        kernel_shape: (usize, usize),
        strides: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let spec = Self {
            strides,
            padding,
            input_shape,
            kernel_shape,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Circular, stride 1.
    pub fn circular(input_shape: [usize; 3], k_h: usize, k_w: usize) -> Result<Self> {
        Self::new(input_shape, (k_h, k_w), (1, 1), Padding::Circular)
    }

    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.input_shape;
        let (kh, kw) = self.kernel_shape;
        if c == 0 || h == 0 || w == 0 || kh == 0 || kw == 0 {
            return usage("convolution extents must be >= 1");
        }
        if self.strides.0 == 0 || self.strides.1 == 0 {
            return usage("strides must be >= 1");
        }
        if self.padding == Padding::Circular && (kh > h || kw > w) {
            return usage(format!(
                "circular padding needs kernel {kh}x{kw} within input {h}x{w}"
            ));
        }
        Ok(())
    }

    pub fn output_hw(&self) -> (usize, usize) {
        (
            self.input_shape[1].div_ceil(self.strides.0),
            self.input_shape[2].div_ceil(self.strides.1),
        )
    }

    pub fn output_shape(&self, c_out: usize) -> [usize; 3] {
        let (oh, ow) = self.output_hw();
        [c_out, oh, ow]
    }

    /// True when the exact FFT spectrum applies.
    pub fn fft_eligible(&self) -> bool {
        self.padding == Padding::Circular && self.strides == (1, 1)
    }

    pub fn check_kernel(&self, k: &KernelTensor) -> Result<()> {
        self.validate()?;
        if k.c_in() != self.input_shape[0] || (k.k_h(), k.k_w()) != self.kernel_shape {
            return usage(format!(
                "kernel {:?} does not fit spec (c_in {}, kernel {:?})",
                k.shape(),
                self.input_shape[0],
                self.kernel_shape
            ));
        }
        Ok(())
    }
}

/// Calls `f(out_index, in_index, kernel_index)` for every tap that touches the input.
#[inline]
fn for_each_tap(k: &KernelTensor, spec: &ConvSpec, mut f: impl FnMut(usize, usize, usize)) {
    let [c_in, h, w] = spec.input_shape;
    let (kh, kw) = spec.kernel_shape;
    let (sh, sw) = spec.strides;
    let (oh, ow) = spec.output_hw();
    let (off_h, off_w) = (kernel_offset(kh), kernel_offset(kw));
    for o in 0..k.c_out() {
        for mu in 0..oh {
            for nu in 0..ow {
                let out_idx = (o * oh + mu) * ow + nu;
                for a in 0..kh {
                    let Some(row) = wrap((sh * mu) as isize + a as isize + off_h, h, spec.padding)
                    else {
                        continue;
                    };
                    for b in 0..kw {
                        let Some(col) =
                            wrap((sw * nu) as isize + b as isize + off_w, w, spec.padding)
                        else {
                            continue;
                        };
                        for r in 0..c_in {
                            f(out_idx, (r * h + row) * w + col, k.index(o, r, a, b));
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(k: &KernelTensor, spec: &ConvSpec, x: &Sample) -> Result<Sample> {
    spec.check_kernel(k)?;
    if x.shape != spec.input_shape {
        return usage(format!(
            "input shape {:?} does not match spec {:?}",
            x.shape, spec.input_shape
        ));
    }
    let mut y = Sample::zeros(spec.output_shape(k.c_out()));
    let kd = k.data();
    for_each_tap(k, spec, |oi, ii, ki| y.data[oi] += kd[ki] * x.data[ii]);
    Ok(y)
}

pub fn conv_adjoint(k: &KernelTensor, spec: &ConvSpec, y: &Sample) -> Result<Sample> {
    spec.check_kernel(k)?;
    if y.shape != spec.output_shape(k.c_out()) {
        return usage(format!(
            "adjoint input shape {:?} does not match output shape {:?}",
            y.shape,
            spec.output_shape(k.c_out())
        ));
    }
    let mut x = Sample::zeros(spec.input_shape);
    let kd = k.data();
    for_each_tap(k, spec, |oi, ii, ki| x.data[ii] += kd[ki] * y.data[oi]);
    Ok(x)
}

/// Gradient of `⟨y_grad, conv_forward(K, x)⟩` with respect to `K`.
pub fn conv_kernel_grad(
    k: &KernelTensor,
    spec: &ConvSpec,
    x: &Sample,
    y_grad: &Sample,
) -> Result<KernelTensor> {
    spec.check_kernel(k)?;
    let mut g = KernelTensor::zeros(k.shape());
    let gd = g.data_mut();
    for_each_tap(k, spec, |oi, ii, ki| gd[ki] += y_grad.data[oi] * x.data[ii]);
    Ok(g)
}

/// Dense matrix of the convolution, rows `(σ, μ, ν)` and columns `(r, y, x)`, both row-major.
pub fn materialize(k: &KernelTensor, spec: &ConvSpec, cap: usize) -> Result<DenseMatrix> {
    spec.check_kernel(k)?;
    let [c_in, h, w] = spec.input_shape;
    let (oh, ow) = spec.output_hw();
    let rows = k.c_out() * oh * ow;
    let cols = c_in * h * w;
    let entries = rows.saturating_mul(cols);
    if entries > cap {
        return Err(Error::Resource(format!(
            "materializing {rows}x{cols} = {entries} entries exceeds cap {cap}"
        )));
    }
    let mut m = DenseMatrix::zeros(rows, cols);
    let kd = k.data();
    for_each_tap(k, spec, |oi, ii, ki| {
        let v = m.get(oi, ii) + kd[ki];
        m.set(oi, ii, v);
    });
    Ok(m)
}

/// Measured and closed-form values of the three operator norms of `M_K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormIdentityReport {
    pub measured_group_21: f64,
    pub predicted_group_21: f64,
    pub measured_frobenius: f64,
    pub predicted_frobenius: f64,
    pub measured_max_row_l1: f64,
    pub predicted_max_row_l1: f64,
    /// `(d/(tk))²·k·‖K‖_{2,1}`, a lower bound on `‖M_Kᵀ‖_{2,1}`.
    pub group_21_lower_bound: f64,
    pub agrees: bool,
}

/// Checks the norm identities for circular convolutions on square inputs with `d` a multiple of `t`.
pub fn mk_norm_identities(k: &KernelTensor, spec: &ConvSpec, cap: usize) -> Result<NormIdentityReport> {
    let [_, h, w] = spec.input_shape;
    let (kh, kw) = spec.kernel_shape;
    let (sh, sw) = spec.strides;
    if spec.padding != Padding::Circular || h != w || kh != kw || sh != sw || h % sh != 0 || kh > h
    {
        return usage(
            "norm identities need circular padding, square input and kernel, equal strides dividing d, k <= d",
        );
    }
    let m = materialize(k, spec, cap)?;
    let ratio = (h / sh) as f64;
    let mut measured_21 = 0.0;
    let mut measured_l1 = 0.0_f64;
    for r in 0..m.rows() {
        let row = m.row(r);
        measured_21 += row.iter().map(|v| v * v).sum::<f64>().sqrt();
        measured_l1 = measured_l1.max(row.iter().map(|v| v.abs()).sum());
    }
    let predicted_21 = ratio * ratio * slice_norms(k, SliceKind::L2OutSlice).total();
    let predicted_fro = ratio * k.frobenius();
    let predicted_l1 = slice_norms(k, SliceKind::MaxL1OutSlice).total();
    let measured_fro = m.frobenius();
    let kk = kh as f64;
    let lower = (ratio / kk).powi(2) * kk * group_norm_21(k);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-300);
    let agrees = close(measured_21, predicted_21)
        && close(measured_fro, predicted_fro)
        && close(measured_l1, predicted_l1);
    Ok(NormIdentityReport {
        measured_group_21: measured_21,
        predicted_group_21: predicted_21,
        measured_frobenius: measured_fro,
        predicted_frobenius: predicted_fro,
        measured_max_row_l1: measured_l1,
        predicted_max_row_l1: predicted_l1,
        group_21_lower_bound: lower,
        agrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(shape: [usize; 3], j: usize) -> Sample {
        let mut s = Sample::zeros(shape);
        s.data[j] = 1.0;
        s
    }

    #[test]
    fn identity_kernels() {
        let x = Sample::random([1, 4, 5], 1);
        let one = KernelTensor::new([1, 1, 1, 1], vec![1.0]).unwrap();
        let spec = ConvSpec::new([1, 4, 5], (1, 1), (1, 1), Padding::ZeroSame).unwrap();
        assert_eq!(conv_forward(&one, &spec, &x).unwrap(), x);
        for k in [2, 3] {
            let d = KernelTensor::delta(1, k, k);
            let spec = ConvSpec::circular([1, 4, 5], k, k).unwrap();
            assert_eq!(conv_forward(&d, &spec, &x).unwrap(), x);
            assert_eq!(conv_adjoint(&d, &spec, &x).unwrap(), x);
        }
        let spec = ConvSpec::circular([2, 3, 3], 3, 3).unwrap();
        let m = materialize(&KernelTensor::delta(2, 3, 3), &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
        assert_eq!(m, DenseMatrix::identity(18));
    }

    #[test]
    fn banded_one_dimensional_example() {
        // kernel taps (K_-1, K_0, K_1) = (1, 2, 3) along a length-5 axis
        let k = KernelTensor::new([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let spec = ConvSpec::new([1, 1, 5], (1, 3), (1, 1), Padding::ZeroSame).unwrap();
        let m = materialize(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
        let want = DenseMatrix::from_rows(&[
            vec![2.0, 3.0, 0.0, 0.0, 0.0],
            vec![1.0, 2.0, 3.0, 0.0, 0.0],
            vec![0.0, 1.0, 2.0, 3.0, 0.0],
            vec![0.0, 0.0, 1.0, 2.0, 3.0],
            vec![0.0, 0.0, 0.0, 1.0, 2.0],
        ])
        .unwrap();
        assert_eq!(m, want);
    }

    #[test]
    fn materialization_matches_forward_and_adjoint() {
        let cases = [
            ([2, 5, 4], (3, 2), (1, 1), Padding::ZeroSame),
            ([2, 5, 5], (3, 3), (2, 2), Padding::ZeroSame),
            ([3, 4, 6], (2, 3), (2, 3), Padding::Circular),
            ([1, 6, 6], (3, 3), (1, 1), Padding::Circular),
        ];
        for (seed, (shape, ks, st, pad)) in cases.into_iter().enumerate() {
            let spec = ConvSpec::new(shape, ks, st, pad).unwrap();
            let k = KernelTensor::random([3, shape[0], ks.0, ks.1], 1.0, seed as u64);
            let m = materialize(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
            for j in 0..m.cols() {
                let col = conv_forward(&k, &spec, &basis(shape, j)).unwrap();
                for r in 0..m.rows() {
                    assert_eq!(col.data[r], m.get(r, j));
                }
            }
            let out_shape = spec.output_shape(3);
            let mt = m.transpose();
            for j in 0..mt.cols() {
                let col = conv_adjoint(&k, &spec, &basis(out_shape, j)).unwrap();
                for r in 0..mt.rows() {
                    assert_eq!(col.data[r], mt.get(r, j));
                }
            }
            let x = Sample::random(shape, 100 + seed as u64);
            let y = Sample::random(out_shape, 200 + seed as u64);
            let lhs = conv_forward(&k, &spec, &x).unwrap().dot(&y);
            let rhs = x.dot(&conv_adjoint(&k, &spec, &y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            let direct = conv_forward(&k, &spec, &x).unwrap();
            let via_m = m.matvec(&x.data);
            for (a, b) in direct.data.iter().zip(&via_m) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_and_zero() {
        let spec = ConvSpec::new([2, 5, 5], (3, 3), (2, 1), Padding::ZeroSame).unwrap();
        let k1 = KernelTensor::random([2, 2, 3, 3], 1.0, 1);
        let k2 = KernelTensor::random([2, 2, 3, 3], 1.0, 2);
        let x = Sample::random([2, 5, 5], 3);
        let combo = k1.scaled(2.0).add(&k2.scaled(-0.5));
        let lhs = conv_forward(&combo, &spec, &x).unwrap();
        let a = conv_forward(&k1, &spec, &x).unwrap();
        let b = conv_forward(&k2, &spec, &x).unwrap();
        for j in 0..lhs.data.len() {
            assert!((lhs.data[j] - (2.0 * a.data[j] - 0.5 * b.data[j])).abs() < 1e-12);
        }
        let zero = conv_forward(&k1, &spec, &Sample::zeros([2, 5, 5])).unwrap();
        assert!(zero.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_grad_matches_inner_product() {
        let spec = ConvSpec::new([2, 4, 4], (3, 3), (2, 2), Padding::ZeroSame).unwrap();
        let k = KernelTensor::random([3, 2, 3, 3], 1.0, 4);
        let x = Sample::random([2, 4, 4], 5);
        let y = Sample::random(spec.output_shape(3), 6);
        let g = conv_kernel_grad(&k, &spec, &x, &y).unwrap();
        // the map K -> <y, conv(K, x)> is linear, so its value equals <g, K>
        let v = conv_forward(&k, &spec, &x).unwrap().dot(&y);
        assert!((v - g.dot(&k)).abs() < 1e-10 * v.abs().max(1.0));
    }

    #[test]
    fn shape_errors() {
        let spec = ConvSpec::circular([1, 4, 4], 3, 3).unwrap();
        let k = KernelTensor::zeros([1, 2, 3, 3]);
        assert!(conv_forward(&k, &spec, &Sample::zeros([1, 4, 4])).is_err());
        let k = KernelTensor::zeros([1, 1, 3, 3]);
        assert!(conv_forward(&k, &spec, &Sample::zeros([1, 4, 5])).is_err());
        assert!(ConvSpec::circular([1, 2, 2], 3, 3).is_err());
        assert!(matches!(
            materialize(&k, &spec, 10),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn norm_identities() {
        let k = KernelTensor::new([1, 1, 1, 1], vec![-1.5]).unwrap();
        let spec = ConvSpec::circular([1, 4, 4], 1, 1).unwrap();
        let r = mk_norm_identities(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
        assert!((r.measured_frobenius - 6.0).abs() < 1e-12);
        assert!(r.agrees);

        let spec = ConvSpec::new([2, 6, 6], (2, 2), (2, 2), Padding::Circular).unwrap();
        let k = KernelTensor::random([3, 2, 2, 2], 1.0, 9);
        let r = mk_norm_identities(&k, &spec, DEFAULT_MATERIALIZE_CAP).unwrap();
        assert!(r.agrees, "{r:?}");
        assert!(r.measured_group_21 >= r.group_21_lower_bound * (1.0 - 1e-12));

        let bad = ConvSpec::new([2, 6, 6], (2, 2), (4, 4), Padding::Circular).unwrap();
        assert!(mk_norm_identities(&k, &bad, DEFAULT_MATERIALIZE_CAP).is_err());
    }
}
