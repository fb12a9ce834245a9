//! Closed-form covering-number and Rademacher-complexity bounds.
//!
//! A network is a chain of residual blocks. Block `i` computes
//! `g_i(x) + σ_{i,L_i}(f_{i,L_i}(... σ_{i1}(f_{i1}(x))))` followed by a fixed
//! `ρ_i`-Lipschitz map. Every layer `f_ij` carries a Lipschitz bound `s_ij` and a
//! (2,1) distance bound `b_ij` to its reference weight.

mod comparison;
mod special;

pub use comparison::{
    comparison_suite, BoundEntry, BoundReport, ComparisonInput, DataStats, LayerStats, ROW_NAMES,
};
pub use special::{
    binomial, binomial_bound_check, harmonic_number, hurwitz_zeta, psi, zeta_three_halves,
    BinomialCheck, EULER_GAMMA,
};

use serde::{Deserialize, Serialize};

use crate::convop::ConvSpec;
use crate::error::{usage, Result};
use crate::lipschitz::{layer_lipschitz, PowerOptions};
use crate::tensors::{group_norm_21, DataBatch, KernelTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Dense,
}

/// Spatial width `d`, stride `t`, kernel size `k`, input channels `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub stride: usize,
    pub kernel: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    pub lipschitz_bound: f64,
    pub distance_bound: f64,
    /// Lipschitz constant of the nonlinearity applied after the layer.
    pub activation_lip: f64,
    pub param_count: usize,
    pub geometry: Option<Geometry>,
}

impl LayerRecord {
    pub fn new(lipschitz_bound: f64, distance_bound: f64, activation_lip: f64, param_count: usize) -> Self {
        Self {
            name: String::new(),
            kind: LayerKind::Conv,
            lipschitz_bound,
            distance_bound,
            activation_lip,
            param_count,
            geometry: None,
        }
    }

    /// Record whose bounds are the measured Lipschitz constant and (2,1) distance.
    pub fn measured(
        name: &str,
        weight: &KernelTensor,
        reference: &KernelTensor,
        spec: &ConvSpec,
        activation_lip: f64,
        opts: PowerOptions,
    ) -> Result<Self> {
        if weight.shape() != reference.shape() {
            return usage(format!("{name}: weight and reference shapes differ"));
        }
        let lip = layer_lipschitz(weight, spec, opts)?.value;
        let (kh, _) = spec.kernel_shape;
        let [c, h, w] = spec.input_shape;
        let kind = if kh == 1 && h == 1 && w == 1 { LayerKind::Dense } else { LayerKind::Conv };
        Ok(Self {
            name: name.to_string(),
            kind,
            lipschitz_bound: lip,
            distance_bound: group_norm_21(&weight.sub(reference)),
            activation_lip,
            param_count: weight.param_count(),
            geometry: Some(Geometry {
                width: h.max(w),
                stride: spec.strides.0,
                kernel: kh,
                channels: c,
            }),
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.lipschitz_bound > 0.0) {
            return usage(format!("layer {:?}: Lipschitz bound must be > 0", self.name));
        }
        if !(self.distance_bound >= 0.0) {
            return usage(format!("layer {:?}: distance bound must be >= 0", self.name));
        }
        if !(self.activation_lip > 0.0) {
            return usage(format!("layer {:?}: activation Lipschitz constant must be > 0", self.name));
        }
        if self.param_count == 0 {
            return usage(format!("layer {:?}: parameter count must be >= 1", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lip")]
pub enum Shortcut {
    Zero,
    Identity,
    Fixed(f64),
}

impl Shortcut {
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Shortcut::Zero => 0.0,
            Shortcut::Identity => 1.0,
            Shortcut::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub layers: Vec<LayerRecord>,
    pub shortcut: Shortcut,
    /// Lipschitz constant of the map applied after the block.
    pub output_lip: f64,
}

impl BlockRecord {
    pub fn new(layers: Vec<LayerRecord>, shortcut: Shortcut, output_lip: f64) -> Self {
        Self { layers, shortcut, output_lip }
    }

    /// `Lip(g) + Π ρ_ij s_ij`.
    pub fn lipschitz_bound(&self) -> f64 {
        let branch = self
            .layers
            .iter()
            .fold(1.0, |acc, l| acc * l.lipschitz_bound * l.activation_lip);
        self.shortcut.lipschitz() + branch
    }
}

/// Sample count and `‖X‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub norm: f64,
}

impl DataSummary {
    pub fn of(x: &DataBatch) -> Self {
        Self { n: x.len(), norm: x.norm() }
    }

    /// `‖X‖/√n`
    pub fn scale(&self) -> f64 {
        self.norm / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityInput {
    pub blocks: Vec<BlockRecord>,
    pub data: DataSummary,
    pub margin: f64,
}

impl CapacityInput {
    pub fn new(blocks: Vec<BlockRecord>, data: DataSummary, margin: f64) -> Result<Self> {
        let input = Self { blocks, data, margin };
        input.validate()?;
        Ok(input)
    }

    /// Plain chain of layers: one block, zero shortcut, identity after the block.
    pub fn chain(layers: Vec<LayerRecord>, data: DataSummary, margin: f64) -> Result<Self> {
        Self::new(vec![BlockRecord::new(layers, Shortcut::Zero, 1.0)], data, margin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return usage("margin must be > 0");
        }
        if self.data.n == 0 {
            return usage("sample count must be >= 1");
        }
        if !(self.data.norm >= 0.0) {
            return usage("data norm must be >= 0");
        }
        if self.blocks.is_empty() {
            return usage("network needs at least one block");
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.layers.is_empty() {
                return usage(format!("block {i} has no layers"));
            }
            if !(b.shortcut.lipschitz() >= 0.0) {
                return usage(format!("block {i}: shortcut Lipschitz constant must be >= 0"));
            }
            if !(b.output_lip > 0.0) {
                return usage(format!("block {i}: output Lipschitz constant must be > 0"));
            }
            for l in &b.layers {
                l.validate()?;
            }
        }
        Ok(())
    }

    /// Total number of layers.
    pub fn total_layers(&self) -> usize {
        self.blocks.iter().map(|b| b.layers.len()).sum()
    }

    /// Largest per-layer parameter count.
    pub fn max_params(&self) -> usize {
        self.layers().map(|l| l.param_count).max().unwrap_or(0)
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerRecord> {
        self.blocks.iter().flat_map(|b| b.layers.iter())
    }
}

/// Product of `factors` with unit factors dropped and the rest multiplied in ascending order.
///
/// Any two callers holding the same multiset of factors get bit-identical results.
pub fn canonical_product(mut factors: Vec<f64>) -> f64 {
    factors.retain(|&f| f != 1.0);
    factors.sort_by(f64::total_cmp);
    factors.into_iter().fold(1.0, |acc, f| acc * f)
}

/// `2·(‖X‖/√n)·Π factors`.
pub fn capacity_from_factors(data: DataSummary, factors: Vec<f64>) -> f64 {
    2.0 * data.scale() * canonical_product(factors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityTerm {
    pub block: usize,
    pub layer: usize,
    pub capacity: f64,
    /// `2·capacity/γ`
    pub scaled: f64,
    pub param_count: usize,
}

/// Factor multiset of the capacity of layer `(i, j)`.
///
/// After cancelling `s_i` and `s_ij` the capacity is `2‖X‖/√n` times
/// `Π_{l≠i} s_l ρ_l · ρ_i · Π_{k≠j} s_ik ρ_ik · ρ_ij · b_ij`.
fn layer_factors(input: &CapacityInput, i: usize, j: usize) -> Vec<f64> {
    let mut f = Vec::new();
    for (l, block) in input.blocks.iter().enumerate() {
        if l != i {
            f.push(block.lipschitz_bound());
            f.push(block.output_lip);
        }
    }
    let block = &input.blocks[i];
    f.push(block.output_lip);
    for (k, layer) in block.layers.iter().enumerate() {
        if k != j {
            f.push(layer.lipschitz_bound);
            f.push(layer.activation_lip);
        }
    }
    f.push(block.layers[j].activation_lip);
    f.push(block.layers[j].distance_bound);
    f
}

/// Per-layer capacities in block-major order.
pub fn capacity_terms(input: &CapacityInput) -> Result<Vec<CapacityTerm>> {
    input.validate()?;
    let mut out = Vec::with_capacity(input.total_layers());
    for (i, block) in input.blocks.iter().enumerate() {
        for (j, layer) in block.layers.iter().enumerate() {
            let capacity = capacity_from_factors(input.data, layer_factors(input, i, j));
            out.push(CapacityTerm {
                block: i,
                layer: j,
                capacity,
                scaled: 2.0 * capacity / input.margin,
                param_count: layer.param_count,
            });
        }
    }
    Ok(out)
}

/// Layer bounds of a plain chain `σ_L ∘ f_L ∘ ... ∘ σ_1 ∘ f_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainLayer {
    pub lipschitz_bound: f64,
    pub distance_bound: f64,
    pub activation_lip: f64,
    pub param_count: usize,
}

/// Capacities of a plain chain: `2(‖X‖/√n)·Π_l ρ_l s_l · b_i/s_i`.
pub fn chain_capacities(layers: &[ChainLayer], data: DataSummary) -> Vec<f64> {
    (0..layers.len())
        .map(|i| {
            let mut f = Vec::new();
            for (l, layer) in layers.iter().enumerate() {
                if l != i {
                    f.push(layer.lipschitz_bound);
                }
                f.push(layer.activation_lip);
            }
            f.push(layers[i].distance_bound);
            capacity_from_factors(data, f)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverVariant {
    Norms,
    Params,
    /// Parameter count branch with the tighter `2W-1` multiplier.
    ParamsAppendix,
}

impl std::str::FromStr for CoverVariant {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norms" => Ok(Self::Norms),
            "params" => Ok(Self::Params),
            "params_appendix" | "params-appendix" => Ok(Self::ParamsAppendix),
            other => usage(format!("unknown cover variant {other:?}")),
        }
    }
}

fn check_radius(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return usage(format!("covering radius must be > 0, got {eps}"));
    }
    Ok(())
}

/// Log covering number of one layer class with `W` parameters, data norm `‖X‖`
/// and (2,1) distance bound `b`.
pub fn single_layer_cover_bound(
    params: usize,
    data_norm: f64,
    distance: f64,
    eps: f64,
    variant: CoverVariant,
) -> Result<f64> {
    check_radius(eps)?;
    if params == 0 {
        return usage("parameter count must be >= 1");
    }
    let m = (data_norm * data_norm * distance * distance / (eps * eps)).ceil();
    let w = params as f64;
    Ok(match variant {
        CoverVariant::Norms => m * (2.0 * w).ln(),
        CoverVariant::Params => 2.0 * w * m.ln_1p(),
        CoverVariant::ParamsAppendix => (2.0 * w - 1.0) * m.ln_1p(),
    })
}

/// `log(2W)·(Σ⌈C^{2/3}⌉)³·⌈n/ε²⌉`.
pub fn norms_cover_from_capacities(capacities: &[f64], max_params: usize, n: usize, eps: f64) -> f64 {
    let s: f64 = capacities.iter().map(|c| c.powf(2.0 / 3.0).ceil()).sum();
    (2.0 * max_params as f64).ln() * s.powi(3) * (n as f64 / (eps * eps)).ceil()
}

/// `Σ 2W_ij·log(1 + ⌈L̄²C²⌉·⌈n/ε²⌉)`.
pub fn params_cover_from_capacities(capacities: &[(f64, usize)], total_layers: usize, n: usize, eps: f64) -> f64 {
    let lbar = total_layers as f64;
    let nn = (n as f64 / (eps * eps)).ceil();
    capacities
        .iter()
        .map(|&(c, w)| 2.0 * w as f64 * ((lbar * lbar * c * c).ceil() * nn).ln_1p())
        .sum()
}

/// Log covering number of the whole residual network class.
pub fn whole_network_cover_bound(input: &CapacityInput, eps: f64, variant: CoverVariant) -> Result<f64> {
    check_radius(eps)?;
    let terms = capacity_terms(input)?;
    let n = input.data.n;
    Ok(match variant {
        CoverVariant::Norms => {
            let caps: Vec<f64> = terms.iter().map(|t| t.capacity).collect();
            norms_cover_from_capacities(&caps, input.max_params(), n, eps)
        }
        CoverVariant::Params | CoverVariant::ParamsAppendix => {
            let caps: Vec<(f64, usize)> = terms.iter().map(|t| (t.capacity, t.param_count)).collect();
            params_cover_from_capacities(&caps, input.total_layers(), n, eps)
        }
    })
}

/// Log covering number of a plain chain, evaluated directly from per-layer bounds.
pub fn chain_cover_bound(layers: &[ChainLayer], data: DataSummary, eps: f64, variant: CoverVariant) -> Result<f64> {
    check_radius(eps)?;
    if layers.is_empty() {
        return usage("chain needs at least one layer");
    }
    let caps = chain_capacities(layers, data);
    Ok(match variant {
        CoverVariant::Norms => {
            let w = layers.iter().map(|l| l.param_count).max().unwrap_or(1);
            norms_cover_from_capacities(&caps, w, data.n, eps)
        }
        CoverVariant::Params | CoverVariant::ParamsAppendix => {
            let caps: Vec<(f64, usize)> = caps.into_iter().zip(layers.iter().map(|l| l.param_count)).collect();
            params_cover_from_capacities(&caps, layers.len(), data.n, eps)
        }
    })
}

/// Multiplier on `W_ij` inside the parameter-counting bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamConstant {
    #[default]
    TwoW,
    TwoWMinusOne,
}

/// `4/n + 12 H_{n-1}/√n · sqrt(log 2W) · (Σ⌈C̃^{2/3}⌉)^{3/2}`.
pub fn clubs_from_scaled(scaled: &[f64], max_params: usize, n: usize) -> f64 {
    let nf = n as f64;
    let s: f64 = scaled.iter().map(|c| c.powf(2.0 / 3.0).ceil()).sum();
    4.0 / nf + 12.0 * harmonic_number(n as u64 - 1) / nf.sqrt() * (2.0 * max_params as f64).ln().sqrt() * s.powf(1.5)
}

/// `12/√n · sqrt(Σ c_W·(log(1+⌈L̄²C̃²⌉) + ψ(⌈L̄²C̃²⌉)))`.
pub fn spades_from_scaled(scaled: &[(f64, usize)], total_layers: usize, n: usize, constant: ParamConstant) -> f64 {
    let lbar = total_layers as f64;
    let inner: f64 = scaled
        .iter()
        .map(|&(c, w)| {
            let m = (lbar * lbar * c * c).ceil();
            let mult = match constant {
                ParamConstant::TwoW => 2.0 * w as f64,
                ParamConstant::TwoWMinusOne => 2.0 * w as f64 - 1.0,
            };
            mult * (m.ln_1p() + psi(m))
        })
        .sum();
    12.0 / (n as f64).sqrt() * inner.sqrt()
}

/// Norm-based Rademacher bound (♣).
pub fn rademacher_clubs(input: &CapacityInput) -> Result<f64> {
    if input.data.n < 2 {
        return usage("the norm-based bound needs n >= 2");
    }
    let terms = capacity_terms(input)?;
    let scaled: Vec<f64> = terms.iter().map(|t| t.scaled).collect();
    Ok(clubs_from_scaled(&scaled, input.max_params(), input.data.n))
}

/// Parameter-counting Rademacher bound (♠).
pub fn rademacher_spades(input: &CapacityInput) -> Result<f64> {
    rademacher_spades_with(input, ParamConstant::TwoW)
}

pub fn rademacher_spades_with(input: &CapacityInput, constant: ParamConstant) -> Result<f64> {
    let terms = capacity_terms(input)?;
    let scaled: Vec<(f64, usize)> = terms.iter().map(|t| (t.scaled, t.param_count)).collect();
    Ok(spades_from_scaled(&scaled, input.total_layers(), input.data.n, constant))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RademacherChoice {
    Clubs,
    Spades,
    #[default]
    Smaller,
}

/// `ramp_risk + 2·R + 3·sqrt(log(2/δ)/(2n))`, holding with probability `1-δ`.
pub fn generalization_bound(rademacher: f64, ramp_risk: f64, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return usage(format!("confidence level must lie in (0, 1), got {delta}"));
    }
    if !(0.0..=1.0).contains(&ramp_risk) {
        return usage(format!("ramp risk must lie in [0, 1], got {ramp_risk}"));
    }
    if n == 0 {
        return usage("sample count must be >= 1");
    }
    Ok(ramp_risk + 2.0 * rademacher + 3.0 * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Generalization bound using the chosen Rademacher bound for `input`.
pub fn generalization_bound_for(
    input: &CapacityInput,
    ramp_risk: f64,
    delta: f64,
    choice: RademacherChoice,
) -> Result<f64> {
    let r = match choice {
        RademacherChoice::Clubs => rademacher_clubs(input)?,
        RademacherChoice::Spades => rademacher_spades(input)?,
        RademacherChoice::Smaller => rademacher_clubs(input)?.min(rademacher_spades(input)?),
    };
    generalization_bound(r, ramp_risk, input.data.n, delta)
}

/// Outcome of matching ramp losses across two models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "margin")]
pub enum MarginMatch {
    Found(f64),
    NoSolution,
}

/// Margin at which the new model's ramp risk equals the reference model's risk at `gamma_ref`.
///
/// Ramp risk is nondecreasing in the margin, so bisection on `(0, gamma_max]` applies.
pub fn margin_for_equal_ramp_loss(
    logits_ref: &[Vec<f64>],
    labels_ref: &[usize],
    gamma_ref: f64,
    logits_new: &[Vec<f64>],
    labels_new: &[usize],
    gamma_max: f64,
) -> Result<MarginMatch> {
    use crate::train::margin::ramp_risk;
    if !(gamma_ref > 0.0) || !(gamma_max > 0.0) {
        return usage("margins must be > 0");
    }
    let target = ramp_risk(logits_ref, labels_ref, gamma_ref)?;
    let risk = |g: f64| ramp_risk(logits_new, labels_new, g);
    const TOL: f64 = 1e-6;
    let hi_risk = risk(gamma_max)?;
    if hi_risk < target - TOL {
        return Ok(MarginMatch::NoSolution);
    }
    // infimum over γ → 0 is the misclassification rate
    let lo_risk = risk(f64::MIN_POSITIVE)?;
    if lo_risk > target + TOL {
        return Ok(MarginMatch::NoSolution);
    }
    let (mut lo, mut hi) = (0.0_f64, gamma_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = risk(mid)?;
        if (r - target).abs() <= TOL * 1e-3 {
            return Ok(MarginMatch::Found(mid));
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g = 0.5 * (lo + hi);
    if (risk(g.max(f64::MIN_POSITIVE))? - target).abs() <= TOL {
        Ok(MarginMatch::Found(g))
    } else {
        Ok(MarginMatch::NoSolution)
    }
}
