//! Side-by-side evaluation of published Rademacher complexity bounds for plain conv nets.
//!
//! Every row is evaluated as a natural logarithm and exponentiated at the end, so
//! values far beyond `f64` range still get a finite `log10`.

use serde::{Deserialize, Serialize};

use super::harmonic_number;
use super::special::psi;
use crate::convop::ConvSpec;
use crate::error::{usage, Result};
use crate::lipschitz::{layer_lipschitz, PowerOptions};
use crate::tensors::{group_norm_21, patch_norms, slice_norms, DataBatch, KernelTensor, Padding, SliceKind};

pub const ROW_NAMES: [&str; 12] = [
    "ours_clubs",
    "bartlett",
    "ledent_main",
    "ledent_fixed",
    "ours_spades",
    "lin",
    "neyshabur_l1inf",
    "golowich_l1inf",
    "gouk_l1inf",
    "neyshabur_l2",
    "golowich_l2",
    "gouk_l2",
];

/// Per-layer weight statistics and geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub name: String,
    pub lipschitz: f64,
    /// `‖K-K⁰‖_{2,1}`
    pub distance_21: f64,
    /// `Σ_o ‖K_o‖_2` over output slices
    pub l2_out_sum: f64,
    pub l2_out_sum_diff: f64,
    pub l2_out_max: f64,
    /// `max_o ‖K_o‖_1`
    pub l1_out_max: f64,
    pub l1_out_max_diff: f64,
    pub frobenius: f64,
    pub frobenius_diff: f64,
    /// Spatial width of the input.
    pub width: usize,
    pub out_width: usize,
    pub stride: usize,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub params: usize,
    /// Largest patch norm of this layer's input over the sample, when a forward pass was run.
    pub input_patch_norm: Option<f64>,
}

impl LayerStats {
    pub fn measure(
        name: &str,
        weight: &KernelTensor,
        reference: &KernelTensor,
        spec: &ConvSpec,
        opts: PowerOptions,
    ) -> Result<Self> {
        spec.check_kernel(weight)?;
        if weight.shape() != reference.shape() {
            return usage(format!("{name}: weight and reference shapes differ"));
        }
        let diff = weight.sub(reference);
        let per = |k: &KernelTensor, kind| match slice_norms(k, kind) {
            crate::tensors::SliceNorm::PerChannel(v) => v,
            crate::tensors::SliceNorm::Scalar(s) => vec![s],
        };
        let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
        let [c_in, h, w] = spec.input_shape;
        let (oh, ow) = spec.output_hw();
        Ok(Self {
            name: name.to_string(),
            lipschitz: layer_lipschitz(weight, spec, opts)?.value,
            distance_21: group_norm_21(&diff),
            l2_out_sum: per(weight, SliceKind::L2OutSlice).iter().sum(),
            l2_out_sum_diff: per(&diff, SliceKind::L2OutSlice).iter().sum(),
            l2_out_max: max(per(weight, SliceKind::L2OutSlice)),
            l1_out_max: max(per(weight, SliceKind::L1OutSlice)),
            l1_out_max_diff: max(per(&diff, SliceKind::L1OutSlice)),
            frobenius: weight.frobenius(),
            frobenius_diff: diff.frobenius(),
            width: h.max(w),
            out_width: oh.max(ow),
            stride: spec.strides.0,
            kernel: spec.kernel_shape.0,
            c_in,
            c_out: weight.c_out(),
            params: weight.param_count(),
            input_patch_norm: None,
        })
    }
}

/// Data statistics used by the comparison rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataStats {
    pub n: usize,
    /// `‖X‖`
    pub norm: f64,
    /// `max_k ‖x_k‖_∞`
    pub max_abs: f64,
    /// `max_{abc} Σ_k x_k[abc]²`
    pub max_pixel_energy: f64,
    /// Largest patch norm of the raw inputs under the first layer's geometry.
    pub patch_norm: Option<f64>,
}

impl DataStats {
    pub fn of(x: &DataBatch, first_layer: Option<&ConvSpec>) -> Result<Self> {
        let patch_norm = match first_layer {
            Some(s) => Some(patch_norms(x, s.kernel_shape.0, s.kernel_shape.1, s.strides.0, s.strides.1, s.padding)?),
            None => None,
        };
        Ok(Self {
            n: x.len(),
            norm: x.norm(),
            max_abs: x.max_abs(),
            max_pixel_energy: x.max_pixel_energy(),
            patch_norm,
        })
    }

    /// Patch norm under an explicit geometry.
    pub fn patch_norm_for(x: &DataBatch, k: usize, stride: usize, padding: Padding) -> Result<f64> {
        patch_norms(x, k, k, stride, stride, padding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonInput {
    pub layers: Vec<LayerStats>,
    pub data: DataStats,
    pub margin: f64,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    /// `None` when the row is absent or its value exceeds `f64`.
    pub value: Option<f64>,
    pub log10_value: Option<f64>,
    /// True when the value overflowed and only `log10_value` is meaningful.
    pub saturated: bool,
    pub absent_reason: Option<String>,
    /// Per-layer `log10` of the term each layer contributes.
    pub contributions: Vec<f64>,
}

impl BoundEntry {
    fn from_ln(name: &str, ln: f64, contributions: Vec<f64>) -> Self {
        if ln.is_nan() {
            return Self::absent(name, "undefined: zero norm in a denominator");
        }
        let v = ln.exp();
        let log10 = ln / std::f64::consts::LN_10;
        Self {
            name: name.to_string(),
            value: v.is_finite().then_some(v),
            log10_value: Some(log10),
            saturated: !v.is_finite(),
            absent_reason: None,
            contributions: contributions.into_iter().map(|c| c / std::f64::consts::LN_10).collect(),
        }
    }

    fn absent(name: &str, reason: &str) -> Self {
        Self {
            name: name.to_string(),
            value: None,
            log10_value: None,
            saturated: false,
            absent_reason: Some(reason.to_string()),
            contributions: Vec::new(),
        }
    }

    pub fn is_present(&self) -> bool {
        self.absent_reason.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn log10(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|e| e.log10_value)
    }
}

/// `ln Σ exp(l_i)`.
fn ln_sum(ls: &[f64]) -> f64 {
    let m = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_infinite() || m.is_nan() {
        return m;
    }
    m + ls.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// `ln ⌈exp(l)⌉`.
fn ln_ceil(l: f64) -> f64 {
    if l > 36.0 {
        l
    } else {
        l.exp().ceil().ln()
    }
}

/// `ln(1 + exp(l))`.
fn ln_1p_exp(l: f64) -> f64 {
    if l > 36.0 {
        l
    } else {
        l.exp().ln_1p()
    }
}

fn ln(x: f64) -> f64 {
    x.ln()
}

/// Shared context for the rows.
struct Ctx<'a> {
    layers: &'a [LayerStats],
    d: &'a DataStats,
    gamma: f64,
    kappa: f64,
    ln_n: f64,
    nl: usize,
}

impl Ctx<'_> {
    fn ln_scale(&self) -> f64 {
        ln(self.d.norm) - 0.5 * self.ln_n
    }

    fn ln_lip_product(&self) -> f64 {
        self.layers.iter().map(|l| ln(l.lipschitz)).sum()
    }

    /// `ln C̃_i` with `C̃_i = (4/γ)(‖X‖/√n)(Π s)·‖K_i-K_i⁰‖_{2,1}/s_i`.
    fn ln_scaled_capacity(&self) -> Vec<f64> {
        let base = ln(4.0) - ln(self.gamma) + self.ln_scale() + self.ln_lip_product();
        self.layers.iter().map(|l| base + ln(l.distance_21) - ln(l.lipschitz)).collect()
    }

    fn max_params(&self) -> usize {
        self.layers.iter().map(|l| l.params).max().unwrap_or(1)
    }

    fn ours_clubs(&self) -> BoundEntry {
        let n = self.d.n;
        if n < 2 {
            return BoundEntry::absent(ROW_NAMES[0], "needs at least two samples");
        }
        let terms: Vec<f64> = self.ln_scaled_capacity().iter().map(|c| ln_ceil(c * 2.0 / 3.0)).collect();
        if ln_sum(&terms) == f64::NEG_INFINITY {
            let v = 4.0 / n as f64;
            return BoundEntry { value: Some(v), log10_value: Some(v.log10()), ..BoundEntry::from_ln(ROW_NAMES[0], v.ln(), terms) };
        }
        let main = ln(12.0 * harmonic_number(n as u64 - 1)) - 0.5 * self.ln_n
            + 0.5 * ln((2.0 * self.max_params() as f64).ln())
            + 1.5 * ln_sum(&terms);
        BoundEntry::from_ln(ROW_NAMES[0], ln_sum(&[ln(4.0) - self.ln_n, main]), terms)
    }

    fn bartlett(&self) -> BoundEntry {
        let mut terms = Vec::with_capacity(self.nl);
        for l in self.layers {
            let (w, d, t, k) = (l.params as f64, l.width as f64, l.stride as f64, l.kernel as f64);
            let log_term = (2.0 * w * d * d / (t * t * k * k)).ln();
            if !(log_term > 0.0) {
                return BoundEntry::absent(ROW_NAMES[1], &format!("log term nonpositive for layer {:?}", l.name));
            }
            let inner = ln(log_term) + 4.0 * (ln(d) - ln(t)) + 2.0 * ln(l.l2_out_sum_diff) - 2.0 * ln(l.lipschitz);
            terms.push(inner / 3.0);
        }
        let main = ln(48.0) - ln(self.gamma) + self.ln_scale() + self.ln_lip_product()
            + 1.5 * ln_sum(&terms)
            + ln(self.ln_n)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[1], ln_sum(&[ln(4.0) - self.ln_n, main]), terms)
    }

    /// `768·R·sqrt(log2(32Γn² + 7W̄n))·log(n)/√n` from `ln r_i`.
    fn ledent_core(&self, ln_r: &[f64]) -> f64 {
        let terms: Vec<f64> = ln_r.iter().map(|r| r * 2.0 / 3.0).collect();
        let ln_big_r = 1.5 * ln_sum(&terms);
        let ln_gamma_max = self
            .layers
            .iter()
            .zip(ln_r)
            .map(|(l, r)| r + 2.0 * ln(l.out_width as f64) + ln(l.c_out as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let w_bar = self.layers.iter().map(|l| (l.width * l.width * l.c_in) as f64).fold(0.0, f64::max);
        let ln_arg = ln_sum(&[ln(32.0) + ln_gamma_max + 2.0 * self.ln_n, ln(7.0) + ln(w_bar) + self.ln_n]);
        let log2_arg = ln_arg / std::f64::consts::LN_2;
        ln(768.0) + ln_big_r + 0.5 * ln(log2_arg) + ln(self.ln_n) - 0.5 * self.ln_n
    }

    fn ledent_main(&self) -> BoundEntry {
        let Some(patch) = self.layers.iter().map(|l| l.input_patch_norm).collect::<Option<Vec<f64>>>() else {
            return BoundEntry::absent(ROW_NAMES[2], "per-layer input patch norms unavailable (no forward pass)");
        };
        let nl = self.nl;
        // B_U for U = 1..L (1-indexed): patch norm of the input to layer U+1, and γ for U = L
        let b = |u: usize| if u == nl { self.gamma } else { patch[u] };
        let s: Vec<f64> = self.layers.iter().map(|l| l.lipschitz).collect();
        let ln_r: Vec<f64> = (1..=nl)
            .map(|p| {
                let l = &self.layers[p - 1];
                let a = if p == nl { l.frobenius_diff } else { l.l2_out_sum_diff };
                let ln_rho = if p == nl {
                    -ln(self.gamma)
                } else {
                    let mut best = f64::NEG_INFINITY;
                    let mut prod = 0.0;
                    for u in p..=nl {
                        if u > p {
                            prod += ln(s[u - 1]);
                        }
                        best = best.max(prod - ln(b(u)));
                    }
                    ln(l.out_width as f64) + best
                };
                ln(a) + ln(patch[p - 1]) + ln_rho
            })
            .collect();
        BoundEntry::from_ln(ROW_NAMES[2], self.ledent_core(&ln_r), ln_r)
    }

    fn ledent_fixed(&self) -> BoundEntry {
        let Some(b0) = self.d.patch_norm else {
            return BoundEntry::absent(ROW_NAMES[3], "input patch norm unavailable");
        };
        let nl = self.nl;
        let last = &self.layers[nl - 1];
        let lip_head: f64 = self.layers[..nl - 1].iter().map(|l| ln(l.lipschitz)).sum();
        let base = ln(b0) - ln(self.gamma) + ln(last.l2_out_max) + lip_head;
        let ln_r: Vec<f64> = self
            .layers
            .iter()
            .map(|l| base + ln(l.out_width as f64) + ln(l.l2_out_sum_diff) - ln(l.lipschitz))
            .collect();
        let v = ln_sum(&[ln(4.0) - self.ln_n, self.ledent_core(&ln_r)]);
        BoundEntry::from_ln(ROW_NAMES[3], v, ln_r)
    }

    fn ours_spades(&self) -> BoundEntry {
        let lbar = self.nl as f64;
        let mut ln_terms = Vec::with_capacity(self.nl);
        for (l, c) in self.layers.iter().zip(self.ln_scaled_capacity()) {
            let ln_m = ln_ceil(2.0 * ln(lbar) + 2.0 * c);
            let m = ln_m.exp();
            let t = 2.0 * l.params as f64 * (ln_1p_exp(ln_m) + psi(m));
            ln_terms.push(ln(t));
        }
        let v = ln(12.0) - 0.5 * self.ln_n + 0.5 * ln_sum(&ln_terms);
        BoundEntry::from_ln(ROW_NAMES[4], v, ln_terms)
    }

    fn lin(&self) -> BoundEntry {
        let lbar = self.nl as f64;
        let terms: Vec<f64> = self
            .layers
            .iter()
            .map(|l| {
                2.0 * ln(l.params as f64) + ln(l.width as f64) - ln(l.stride as f64) + ln(l.frobenius)
                    - ln(l.lipschitz)
            })
            .collect();
        let inner = ln(2.0) - ln(self.gamma) + self.ln_scale() + 2.0 * ln(lbar) + self.ln_lip_product() + ln_sum(&terms);
        let v = ln(16.0) + 0.25 * inner - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[5], v, terms)
    }

    fn l1_factors(&self) -> Vec<f64> {
        self.layers.iter().map(|l| ln(l.l1_out_max)).collect()
    }

    fn first(&self) -> (f64, f64) {
        let l = &self.layers[0];
        (l.c_in as f64, l.width as f64)
    }

    fn neyshabur_l1(&self) -> BoundEntry {
        let f = self.l1_factors();
        let (c1, d1) = self.first();
        let v = self.nl as f64 * ln(2.0) + ln(self.kappa) + f.iter().sum::<f64>()
            + ln((2.0 * c1 * d1 * d1).ln())
            + ln(self.d.max_abs)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[6], v, f)
    }

    fn golowich_l1(&self) -> BoundEntry {
        let f = self.l1_factors();
        let (c1, d1) = self.first();
        let v = ln(2.0) + ln(self.kappa) + 0.5 * ln(self.nl as f64 + 1.0 + (c1 * d1 * d1).ln())
            + f.iter().sum::<f64>()
            + 0.5 * (ln(self.d.max_pixel_energy) - self.ln_n)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[7], v, f)
    }

    fn gouk_l1(&self) -> BoundEntry {
        let f = self.l1_factors();
        let (c1, d1) = self.first();
        let ratios: Vec<f64> = self.layers.iter().map(|l| ln(l.l1_out_max_diff) - ln(l.l1_out_max)).collect();
        let v = (self.nl as f64 + 1.0) * ln(2.0) + ln(self.kappa) + 0.5 * ln((2.0 * c1 * d1 * d1).ln())
            + f.iter().sum::<f64>()
            + ln_sum(&ratios)
            + ln(self.d.max_abs)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[8], v, ratios)
    }

    fn l2_factors(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| ln(l.width as f64) - ln(l.stride as f64) + ln(l.frobenius))
            .collect()
    }

    fn neyshabur_l2(&self) -> BoundEntry {
        let f = self.l2_factors();
        let v = (self.nl as f64 - 1.0) * ln(2.0) + ln(self.kappa) + self.ln_scale() + f.iter().sum::<f64>()
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[9], v, f)
    }

    fn golowich_l2(&self) -> BoundEntry {
        let f = self.l2_factors();
        let v = ln(self.kappa) + self.ln_scale() + f.iter().sum::<f64>()
            + ln((2.0 * 2f64.ln() * self.nl as f64).sqrt() + 1.0)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[10], v, f)
    }

    fn gouk_l2(&self) -> BoundEntry {
        let f: Vec<f64> = self
            .layers
            .iter()
            .map(|l| 2.0 * ln(l.width as f64) - ln(l.stride as f64) + 0.5 * ln(l.c_in as f64) + ln(l.frobenius))
            .collect();
        let mut acc = 0.0;
        let ratios: Vec<f64> = self
            .layers
            .iter()
            .map(|l| {
                acc += ln(l.width as f64) + 0.5 * ln(l.c_in as f64);
                ln(l.frobenius_diff) - ln(l.frobenius) - acc
            })
            .collect();
        let v = self.nl as f64 * ln(2.0) + 0.5 * ln(2.0) + ln(self.kappa) + self.ln_scale() + f.iter().sum::<f64>()
            + ln_sum(&ratios)
            - 0.5 * self.ln_n;
        BoundEntry::from_ln(ROW_NAMES[11], v, ratios)
    }
}

/// Evaluates every comparison row.
pub fn comparison_suite(input: &ComparisonInput) -> Result<BoundReport> {
    if input.layers.is_empty() {
        return usage("comparison needs at least one layer");
    }
    if !(input.margin > 0.0) {
        return usage("margin must be > 0");
    }
    if input.data.n == 0 || input.classes < 2 {
        return usage("comparison needs n >= 1 and at least two classes");
    }
    let ctx = Ctx {
        layers: &input.layers,
        d: &input.data,
        gamma: input.margin,
        kappa: input.classes as f64,
        ln_n: (input.data.n as f64).ln(),
        nl: input.layers.len(),
    };
    Ok(BoundReport {
        entries: vec![
            ctx.ours_clubs(),
            ctx.bartlett(),
            ctx.ledent_main(),
            ctx.ledent_fixed(),
            ctx.ours_spades(),
            ctx.lin(),
            ctx.neyshabur_l1(),
            ctx.golowich_l1(),
            ctx.gouk_l1(),
            ctx.neyshabur_l2(),
            ctx.golowich_l2(),
            ctx.gouk_l2(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ComparisonInput {
        let l1 = LayerStats {
            name: "conv".into(),
            lipschitz: 2.0,
            distance_21: 1.5,
            l2_out_sum: 3.0,
            l2_out_sum_diff: 1.2,
            l2_out_max: 1.8,
            l1_out_max: 4.0,
            l1_out_max_diff: 1.0,
            frobenius: 2.5,
            frobenius_diff: 0.9,
            width: 4,
            out_width: 2,
            stride: 2,
            kernel: 3,
            c_in: 1,
            c_out: 2,
            params: 18,
            input_patch_norm: Some(3.0),
        };
        let l2 = LayerStats {
            name: "head".into(),
            lipschitz: 1.5,
            distance_21: 0.5,
            l2_out_sum: 2.0,
            l2_out_sum_diff: 0.6,
            l2_out_max: 1.1,
            l1_out_max: 2.0,
            l1_out_max_diff: 0.4,
            frobenius: 1.6,
            frobenius_diff: 0.45,
            width: 2,
            out_width: 1,
            stride: 1,
            kernel: 2,
            c_in: 2,
            c_out: 2,
            params: 16,
            input_patch_norm: Some(5.0),
        };
        ComparisonInput {
            layers: vec![l1, l2],
            data: DataStats { n: 100, norm: 20.0, max_abs: 1.0, max_pixel_energy: 30.0, patch_norm: Some(2.5) },
            margin: 0.5,
            classes: 2,
        }
    }

    /// Direct evaluation of every row in plain arithmetic.
    fn hand(c: &ComparisonInput) -> Vec<f64> {
        let (a, b) = (&c.layers[0], &c.layers[1]);
        let n = c.data.n as f64;
        let sq = n.sqrt();
        let g = c.margin;
        let kappa = c.classes as f64;
        let scale = c.data.norm / sq;
        let ps = a.lipschitz * b.lipschitz;
        let ct = |l: &LayerStats| 4.0 / g * scale * ps * l.distance_21 / l.lipschitz;
        let w = 18.0f64;
        let h99: f64 = (1..100).map(|k| 1.0 / k as f64).sum();
        let clubs = 4.0 / n
            + 12.0 * h99 / sq * (2.0 * w).ln().sqrt() * (ct(a).powf(2.0 / 3.0).ceil() + ct(b).powf(2.0 / 3.0).ceil()).powf(1.5);
        let bt = |l: &LayerStats| {
            let (w, d, t, k) = (l.params as f64, l.width as f64, l.stride as f64, l.kernel as f64);
            ((2.0 * w * d * d / (t * t * k * k)).ln() * (d / t).powi(4) * l.l2_out_sum_diff.powi(2) / l.lipschitz.powi(2)).cbrt()
        };
        let bartlett = 4.0 / n + 48.0 / g * scale * ps * (bt(a) + bt(b)).powf(1.5) * n.ln() / sq;
        let ledent = |r: [f64; 2]| {
            let big_r = (r[0].powf(2.0 / 3.0) + r[1].powf(2.0 / 3.0)).powf(1.5);
            let gam = (r[0] * 4.0 * 2.0).max(r[1] * 1.0 * 2.0);
            let wbar = (16.0f64 * 1.0).max(4.0 * 2.0);
            768.0 * big_r * (32.0 * gam * n * n + 7.0 * wbar * n).log2().sqrt() * n.ln() / sq
        };
        // ρ_{1+} = d_2·max(1/B_1, s_2/γ)
        let rho1 = 2.0 * (1.0 / 5.0f64).max(1.5 / g);
        let r_main = [a.l2_out_sum_diff * 3.0 * rho1, b.frobenius_diff * 5.0 / g];
        let base = 2.5 / g * b.l2_out_max * a.lipschitz;
        let r_fixed = [base * 2.0 * a.l2_out_sum_diff / a.lipschitz, base * 1.0 * b.l2_out_sum_diff / b.lipschitz];
        let sp = |l: &LayerStats| {
            let m = (4.0 * ct(l).powi(2)).ceil();
            2.0 * l.params as f64 * ((1.0 + m).ln() + psi(m))
        };
        let spades = 12.0 * (sp(a) + sp(b)).sqrt() / sq;
        let lt = |l: &LayerStats| (l.params as f64).powi(2) * l.width as f64 / l.stride as f64 * l.frobenius / l.lipschitz;
        let lin = 16.0 * (2.0 / g * scale * 4.0 * ps * (lt(a) + lt(b))).powf(0.25) / sq;
        let p1 = a.l1_out_max * b.l1_out_max;
        let neys1 = 4.0 * kappa * p1 * (2.0 * 1.0 * 16.0f64).ln() * c.data.max_abs / sq;
        let golo1 = 2.0 * kappa * (3.0 + 16.0f64.ln()).sqrt() * p1 * (c.data.max_pixel_energy / n).sqrt() / sq;
        let gouk1 = 8.0 * kappa * 32f64.ln().sqrt() * p1
            * (a.l1_out_max_diff / a.l1_out_max + b.l1_out_max_diff / b.l1_out_max)
            * c.data.max_abs
            / sq;
        let p2 = (4.0 / 2.0 * a.frobenius) * (2.0 / 1.0 * b.frobenius);
        let neys2 = 2.0 * kappa * scale * p2 / sq;
        let golo2 = kappa * scale * p2 * ((2.0 * 2f64.ln() * 2.0).sqrt() + 1.0) / sq;
        let pg = (16.0 / 2.0 * 1.0 * a.frobenius) * (4.0 / 1.0 * 2f64.sqrt() * b.frobenius);
        let gouk2 = 4.0 * 2f64.sqrt() * kappa * scale * pg
            * (a.frobenius_diff / (a.frobenius * 4.0) + b.frobenius_diff / (b.frobenius * 4.0 * 2.0 * 2f64.sqrt()))
            / sq;
        vec![
            clubs,
            bartlett,
            ledent(r_main),
            4.0 / n + ledent(r_fixed),
            spades,
            lin,
            neys1,
            golo1,
            gouk1,
            neys2,
            golo2,
            gouk2,
        ]
    }

    #[test]
    fn matches_direct_evaluation() {
        let c = toy();
        let report = comparison_suite(&c).unwrap();
        let expected = hand(&c);
        for (e, x) in report.entries.iter().zip(expected) {
            let v = e.value.unwrap();
            assert!((v - x).abs() <= 1e-10 * x.abs(), "{}: {v} vs {x}", e.name);
            assert!((e.log10_value.unwrap() - x.log10()).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_statistics_mark_rows_absent() {
        let mut c = toy();
        c.layers[1].input_patch_norm = None;
        c.data.patch_norm = None;
        let r = comparison_suite(&c).unwrap();
        assert!(r.get("ledent_main").unwrap().absent_reason.is_some());
        assert!(r.get("ledent_fixed").unwrap().absent_reason.is_some());
        assert!(r.get("ours_clubs").unwrap().is_present());
    }

    #[test]
    fn zero_distances() {
        let mut c = toy();
        for l in &mut c.layers {
            l.distance_21 = 0.0;
            l.l1_out_max_diff = 0.0;
            l.frobenius_diff = 0.0;
        }
        let r = comparison_suite(&c).unwrap();
        assert_eq!(r.get("ours_clubs").unwrap().value, Some(4.0 / 100.0));
        assert_eq!(r.get("gouk_l1inf").unwrap().value, Some(0.0));
        assert_eq!(r.get("gouk_l2").unwrap().value, Some(0.0));
    }

    #[test]
    fn huge_values_keep_log10() {
        let mut c = toy();
        for l in &mut c.layers {
            l.l1_out_max = 1e200;
        }
        let r = comparison_suite(&c).unwrap();
        let e = r.get("neyshabur_l1inf").unwrap();
        assert!(e.saturated && e.value.is_none());
        assert!(e.log10_value.unwrap() > 400.0);
    }
}
