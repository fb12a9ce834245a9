//! Tiny conv nets: architecture, forward pass and reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{ComparisonInput, DataStats, LayerStats};
use crate::capacity::{BlockRecord, CapacityInput, DataSummary, LayerRecord, Shortcut};
use crate::convop::{conv_adjoint, conv_forward, conv_kernel_grad, ConvSpec};
use crate::error::{usage, Error, Result};
use crate::lipschitz::PowerOptions;
use crate::tensors::{kernel_offset, DataBatch, DenseMatrix, KernelTensor, Padding, Sample};

/// Square max-pool window; windows are anchored like kernels of the same size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub size: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub const STANDARD: PoolSpec = PoolSpec { size: 3, stride: 2 };

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    /// Square root of the largest number of windows sharing a pixel.
    pub fn lipschitz(&self) -> f64 {
        self.size.div_ceil(self.stride) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutKind {
    #[default]
    None,
    Identity,
    /// Two 2×2/2 max-pools, the second shifted by one pixel, stacked along channels.
    ShiftedPool,
}

impl ShortcutKind {
    pub fn lipschitz(&self) -> f64 {
        match self {
            ShortcutKind::None => 0.0,
            ShortcutKind::Identity => 1.0,
            ShortcutKind::ShiftedPool => std::f64::consts::SQRT_2,
        }
    }

    pub fn as_capacity(&self) -> Shortcut {
        match self {
            ShortcutKind::None => Shortcut::Zero,
            ShortcutKind::Identity => Shortcut::Identity,
            ShortcutKind::ShiftedPool => Shortcut::Fixed(std::f64::consts::SQRT_2),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_pair() -> (usize, usize) {
    (1, 1)
}
fn default_padding() -> Padding {
    Padding::Circular
}

/// One block: optional flatten, conv, optional ReLU and pool, plus a shortcut from the block input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockArch {
    pub name: String,
    pub c_out: usize,
    pub kernel: (usize, usize),
    #[serde(default = "default_pair")]
    pub stride: (usize, usize),
    #[serde(default = "default_padding")]
    pub padding: Padding,
    #[serde(default = "default_true")]
    pub relu: bool,
    #[serde(default)]
    pub pool: Option<PoolSpec>,
    #[serde(default)]
    pub shortcut: ShortcutKind,
    /// Reshape the input to `(c·h·w, 1, 1)` before the conv.
    #[serde(default)]
    pub flatten: bool,
    #[serde(default)]
    pub lipschitz_bound: Option<f64>,
    #[serde(default)]
    pub distance_bound: Option<f64>,
}

impl BlockArch {
    pub fn conv(name: &str, c_out: usize, k: usize) -> Self {
        Self {
            name: name.into(),
            c_out,
            kernel: (k, k),
            stride: (1, 1),
            padding: Padding::Circular,
            relu: true,
            pool: None,
            shortcut: ShortcutKind::None,
            flatten: false,
            lipschitz_bound: None,
            distance_bound: None,
        }
    }

    /// Flatten followed by a fully connected layer, without ReLU.
    pub fn dense(name: &str, c_out: usize) -> Self {
        Self {
            flatten: true,
            relu: false,
            ..Self::conv(name, c_out, 1)
        }
    }

    pub fn with_pool(mut self, pool: PoolSpec) -> Self {
        self.pool = Some(pool);
        self
    }
    pub fn with_shortcut(mut self, s: ShortcutKind) -> Self {
        self.shortcut = s;
        self
    }
    pub fn with_stride(mut self, s: usize, padding: Padding) -> Self {
        self.stride = (s, s);
        self.padding = padding;
        self
    }
    pub fn without_relu(mut self) -> Self {
        self.relu = false;
        self
    }

    /// Lipschitz constant of the fixed maps after the conv.
    pub fn activation_lip(&self) -> f64 {
        self.pool.map_or(1.0, |p| p.lipschitz())
    }
}

/// Resolved geometry of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPlan {
    pub input_shape: [usize; 3],
    pub spec: ConvSpec,
    pub conv_shape: [usize; 3],
    pub output_shape: [usize; 3],
}

/// Block list for inputs of a fixed shape, ending in a simplex classifier over `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_shape: [usize; 3],
    pub classes: usize,
    pub blocks: Vec<BlockArch>,
}

/// Per-layer constraint; infinite bounds switch a constraint off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerConstraint {
    pub lipschitz_bound: f64,
    pub distance_bound: f64,
}

impl LayerConstraint {
    pub const NONE: LayerConstraint = LayerConstraint {
        lipschitz_bound: f64::INFINITY,
        distance_bound: f64::INFINITY,
    };

    pub fn new(lipschitz_bound: f64, distance_bound: f64) -> Self {
        Self { lipschitz_bound, distance_bound }
    }

    pub fn is_active(&self) -> bool {
        self.lipschitz_bound.is_finite() || self.distance_bound.is_finite()
    }
}

impl NetArch {
    pub fn plan(&self) -> Result<Vec<BlockPlan>> {
        if self.classes < 2 {
            return usage("a classifier needs at least 2 classes");
        }
        if self.blocks.is_empty() {
            return usage("architecture has no blocks");
        }
        let mut shape = self.input_shape;
        let mut plans = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let name = &b.name;
            if b.c_out == 0 {
                return usage(format!("{name}: c_out must be >= 1"));
            }
            let input_shape = if b.flatten {
                [shape.iter().product(), 1, 1]
            } else {
                shape
            };
            let spec = ConvSpec::new(input_shape, b.kernel, b.stride, b.padding)
                .map_err(|e| Error::Usage(format!("{name}: {e}")))?;
            let conv_shape = spec.output_shape(b.c_out);
            let output_shape = match b.pool {
                Some(p) => {
                    if p.size == 0 || p.stride == 0 {
                        return usage(format!("{name}: pool extents must be >= 1"));
                    }
                    let (h, w) = p.output_hw(conv_shape[1], conv_shape[2]);
                    [conv_shape[0], h, w]
                }
                None => conv_shape,
            };
            let expected = match b.shortcut {
                ShortcutKind::None => None,
                ShortcutKind::Identity => Some(input_shape),
                ShortcutKind::ShiftedPool => Some([
                    2 * input_shape[0],
                    input_shape[1].div_ceil(2),
                    input_shape[2].div_ceil(2),
                ]),
            };
            if let Some(e) = expected {
                if b.flatten {
                    return usage(format!("{name}: shortcuts cannot cross a flatten"));
                }
                if e != output_shape {
                    return usage(format!(
                        "{name}: shortcut shape {e:?} differs from block output {output_shape:?}"
                    ));
                }
            }
            plans.push(BlockPlan {
                input_shape,
                spec,
                conv_shape,
                output_shape,
            });
            shape = output_shape;
        }
        let feat: usize = shape.iter().product();
        if feat != self.classes - 1 {
            return usage(format!(
                "final features {shape:?} must have {} entries for {} classes",
                self.classes - 1,
                self.classes
            ));
        }
        Ok(plans)
    }

    pub fn constraints(&self) -> Vec<LayerConstraint> {
        self.blocks
            .iter()
            .map(|b| LayerConstraint {
                lipschitz_bound: b.lipschitz_bound.unwrap_or(f64::INFINITY),
                distance_bound: b.distance_bound.unwrap_or(f64::INFINITY),
            })
            .collect()
    }

    pub fn set_constraints(&mut self, c: &[LayerConstraint]) -> Result<()> {
        if c.len() != self.blocks.len() {
            return usage("one constraint per block is required");
        }
        for (b, c) in self.blocks.iter_mut().zip(c) {
            b.lipschitz_bound = c.lipschitz_bound.is_finite().then_some(c.lipschitz_bound);
            b.distance_bound = c.distance_bound.is_finite().then_some(c.distance_bound);
        }
        Ok(())
    }

    /// Conv blocks on `1×side×side` inputs: circular 3×3 stem, identity residual,
    /// channel-doubling residual with pooling, two more pools and a dense readout.
    pub fn demo(side: usize, width: usize, classes: usize) -> Self {
        Self {
            input_shape: [1, side, side],
            classes,
            blocks: vec![
                BlockArch::conv("stem", width, 3),
                BlockArch::conv("res", width, 3).with_shortcut(ShortcutKind::Identity),
                BlockArch::conv("down", 2 * width, 3)
                    .with_pool(PoolSpec::STANDARD)
                    .with_shortcut(ShortcutKind::ShiftedPool),
                BlockArch::dense("head", classes - 1),
            ],
        }
    }

    /// Five stride-2 zero-padded 3×3 convs followed by a 1×1 classifier conv.
    pub fn six_layer(side: usize, width: usize, classes: usize) -> Self {
        let mut blocks: Vec<BlockArch> = (0..5)
            .map(|i| {
                BlockArch::conv(&format!("conv{}", i + 1), width, 3).with_stride(2, Padding::ZeroSame)
            })
            .collect();
        blocks.push(BlockArch::conv("classifier", classes - 1, 1).without_relu());
        Self {
            input_shape: [1, side, side],
            classes,
            blocks,
        }
    }
}

/// Rows are the `κ` vertices of a regular simplex in `R^{κ−1}` centered at the origin.
pub fn simplex_vertices(classes: usize) -> Result<DenseMatrix> {
    if classes < 2 {
        return usage("a simplex needs at least 2 vertices");
    }
    let k = classes as f64;
    let d = classes - 1;
    let scale = (k / (k - 1.0)).sqrt();
    let mut m = DenseMatrix::zeros(classes, d);
    for i in 0..classes {
        // Helmert basis of the sum-zero subspace
        for j in 1..=d {
            let u = |t: usize| -> f64 {
                let norm = ((j * (j + 1)) as f64).sqrt();
                if t < j {
                    1.0 / norm
                } else if t == j {
                    -(j as f64) / norm
                } else {
                    0.0
                }
            };
            let v: f64 = (0..classes)
                .map(|t| {
                    let e = if t == i { 1.0 } else { 0.0 };
                    scale * (e - 1.0 / k) * u(t)
                })
                .sum();
            m.set(i, j - 1, v);
        }
    }
    Ok(m)
}

/// Operator norm of the simplex classifier.
pub fn simplex_norm(classes: usize) -> f64 {
    let k = classes as f64;
    (k / (k - 1.0)).sqrt()
}

/// Trainable conv weights with their reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub weight: KernelTensor,
    pub reference: KernelTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    pub arch: NetArch,
    pub plan: Vec<BlockPlan>,
    pub layers: Vec<ConvLayer>,
    pub head: DenseMatrix,
}

const EMPTY: usize = usize::MAX;

struct BlockCache {
    input: Sample,
    conv_out: Sample,
    pool_arg: Vec<usize>,
    shortcut_arg: Vec<usize>,
}

fn max_pool(x: &Sample, pool: PoolSpec) -> (Sample, Vec<usize>) {
    let [c, h, w] = x.shape;
    let (oh, ow) = pool.output_hw(h, w);
    let off = kernel_offset(pool.size);
    let mut out = Sample::zeros([c, oh, ow]);
    let mut arg = vec![EMPTY; c * oh * ow];
    for ch in 0..c {
        for mu in 0..oh {
            for nu in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut at = EMPTY;
                for a in 0..pool.size {
                    let r = (pool.stride * mu) as isize + a as isize + off;
                    if r < 0 || r as usize >= h {
                        continue;
                    }
                    for b in 0..pool.size {
                        let q = (pool.stride * nu) as isize + b as isize + off;
                        if q < 0 || q as usize >= w {
                            continue;
                        }
                        let idx = x.index(ch, r as usize, q as usize);
                        if x.data[idx] > best {
                            best = x.data[idx];
                            at = idx;
                        }
                    }
                }
                let o = (ch * oh + mu) * ow + nu;
                if at != EMPTY {
                    out.data[o] = best;
                    arg[o] = at;
                }
            }
        }
    }
    (out, arg)
}

fn shifted_pool(x: &Sample) -> (Sample, Vec<usize>) {
    let [c, h, w] = x.shape;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Sample::zeros([2 * c, oh, ow]);
    let mut arg = vec![EMPTY; 2 * c * oh * ow];
    for half in 0..2 {
        for ch in 0..c {
            for mu in 0..oh {
                for nu in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = EMPTY;
                    for a in 0..2 {
                        let r = 2 * mu + half + a;
                        if r >= h {
                            continue;
                        }
                        for b in 0..2 {
                            let q = 2 * nu + half + b;
                            if q >= w {
                                continue;
                            }
                            let idx = x.index(ch, r, q);
                            if x.data[idx] > best {
                                best = x.data[idx];
                                at = idx;
                            }
                        }
                    }
                    let o = ((half * c + ch) * oh + mu) * ow + nu;
                    if at != EMPTY {
                        out.data[o] = best;
                        arg[o] = at;
                    }
                }
            }
        }
    }
    (out, arg)
}

fn scatter(g: &Sample, arg: &[usize], shape: [usize; 3]) -> Sample {
    let mut out = Sample::zeros(shape);
    for (v, &a) in g.data.iter().zip(arg) {
        if a != EMPTY {
            out.data[a] += v;
        }
    }
    out
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Mean cross-entropy and its logit gradients.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    p[label] -= 1.0;
    (loss, p)
}

impl TinyNet {
    /// He-normal initialization; references equal the initial weights.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        let plan = arch.plan()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .blocks
            .iter()
            .zip(&plan)
            .map(|(b, p)| {
                let shape = [b.c_out, p.input_shape[0], b.kernel.0, b.kernel.1];
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let w = KernelTensor::random_with(shape, (2.0 / fan_in).sqrt(), &mut rng);
                ConvLayer {
                    name: b.name.clone(),
                    reference: w.clone(),
                    weight: w,
                }
            })
            .collect();
        let head = simplex_vertices(arch.classes)?;
        Ok(Self { arch, plan, layers, head })
    }

    pub fn from_layers(arch: NetArch, layers: Vec<ConvLayer>) -> Result<Self> {
        let plan = arch.plan()?;
        if layers.len() != plan.len() {
            return usage(format!("{} blocks but {} layers", plan.len(), layers.len()));
        }
        for ((l, p), b) in layers.iter().zip(&plan).zip(&arch.blocks) {
            let want = [b.c_out, p.input_shape[0], b.kernel.0, b.kernel.1];
            if l.weight.shape() != want || l.reference.shape() != want {
                return usage(format!(
                    "{}: expected shape {want:?}, got weight {:?} and reference {:?}",
                    l.name,
                    l.weight.shape(),
                    l.reference.shape()
                ));
            }
        }
        let head = simplex_vertices(arch.classes)?;
        Ok(Self { arch, plan, layers, head })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.param_count()).sum()
    }

    pub fn specs(&self) -> Vec<ConvSpec> {
        self.plan.iter().map(|p| p.spec).collect()
    }

    fn check_input(&self, x: &Sample) -> Result<()> {
        if x.shape != self.arch.input_shape {
            return usage(format!(
                "input shape {:?} does not match network input {:?}",
                x.shape, self.arch.input_shape
            ));
        }
        Ok(())
    }

    fn forward_cached(&self, x: &Sample) -> Result<(Vec<f64>, Vec<BlockCache>)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for ((layer, p), b) in self.layers.iter().zip(&self.plan).zip(&self.arch.blocks) {
            let input = Sample {
                shape: p.input_shape,
                data: cur.data,
            };
            let conv_out = conv_forward(&layer.weight, &p.spec, &input)?;
            let mut body = conv_out.clone();
            if b.relu {
                body.data.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let mut pool_arg = Vec::new();
            if let Some(pool) = b.pool {
                let (o, a) = max_pool(&body, pool);
                body = o;
                pool_arg = a;
            }
            let mut shortcut_arg = Vec::new();
            match b.shortcut {
                ShortcutKind::None => {}
                ShortcutKind::Identity => {
                    body.data.iter_mut().zip(&input.data).for_each(|(o, i)| *o += i);
                }
                ShortcutKind::ShiftedPool => {
                    let (s, a) = shifted_pool(&input);
                    body.data.iter_mut().zip(&s.data).for_each(|(o, i)| *o += i);
                    shortcut_arg = a;
                }
            }
            caches.push(BlockCache {
                input,
                conv_out,
                pool_arg,
                shortcut_arg,
            });
            cur = body;
        }
        Ok((self.head.matvec(&cur.data), caches))
    }

    pub fn forward(&self, x: &Sample) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_batch(&self, x: &DataBatch) -> Result<Vec<Vec<f64>>> {
        x.samples().iter().map(|s| self.forward(s)).collect()
    }

    /// Inputs seen by every layer, after any flatten.
    pub fn layer_inputs(&self, x: &DataBatch) -> Result<Vec<DataBatch>> {
        let mut per_layer: Vec<Vec<Sample>> = vec![Vec::with_capacity(x.len()); self.layers.len()];
        for s in x.samples() {
            let (_, caches) = self.forward_cached(s)?;
            for (slot, c) in per_layer.iter_mut().zip(caches) {
                slot.push(c.input);
            }
        }
        per_layer.into_iter().map(DataBatch::new).collect()
    }

    /// Cross-entropy of one sample; adds its weight gradients into `grads`.
    fn accumulate(&self, x: &Sample, label: usize, grads: &mut [KernelTensor]) -> Result<f64> {
        if label >= self.arch.classes {
            return usage(format!("label {label} out of range"));
        }
        let (logits, caches) = self.forward_cached(x)?;
        let (loss, g_logits) = cross_entropy(&logits, label);
        let last = self.plan.last().expect("non-empty").output_shape;
        let mut g = Sample {
            shape: last,
            data: self.head.transpose().matvec(&g_logits),
        };
        for i in (0..self.layers.len()).rev() {
            let (b, p, c) = (&self.arch.blocks[i], &self.plan[i], &caches[i]);
            let mut gb = match b.pool {
                Some(_) => scatter(&g, &c.pool_arg, p.conv_shape),
                None => g.clone(),
            };
            if b.relu {
                gb.data
                    .iter_mut()
                    .zip(&c.conv_out.data)
                    .for_each(|(v, &z)| {
                        if z <= 0.0 {
                            *v = 0.0
                        }
                    });
            }
            let kg = conv_kernel_grad(&self.layers[i].weight, &p.spec, &c.input, &gb)?;
            grads[i].axpy(1.0, &kg);
            let mut gx = conv_adjoint(&self.layers[i].weight, &p.spec, &gb)?;
            match b.shortcut {
                ShortcutKind::None => {}
                ShortcutKind::Identity => {
                    gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v);
                }
                ShortcutKind::ShiftedPool => {
                    let s = scatter(&g, &c.shortcut_arg, p.input_shape);
                    gx.data.iter_mut().zip(&s.data).for_each(|(o, v)| *o += v);
                }
            }
            if i > 0 {
                gx.shape = self.plan[i - 1].output_shape;
            }
            g = gx;
        }
        Ok(loss)
    }

    /// Mean cross-entropy over the selected samples and its gradient per layer.
    pub fn loss_and_grad(&self, samples: &[&Sample], labels: &[usize]) -> Result<(f64, Vec<KernelTensor>)> {
        if samples.len() != labels.len() || samples.is_empty() {
            return usage("need one label per sample and at least one sample");
        }
        let mut grads: Vec<KernelTensor> = self
            .layers
            .iter()
            .map(|l| KernelTensor::zeros(l.weight.shape()))
            .collect();
        let mut total = 0.0;
        for (x, &y) in samples.iter().zip(labels) {
            total += self.accumulate(x, y, &mut grads)?;
        }
        let inv = 1.0 / samples.len() as f64;
        for g in &mut grads {
            *g = g.scaled(inv);
        }
        Ok((total * inv, grads))
    }

    pub fn loss(&self, samples: &[&Sample], labels: &[usize]) -> Result<f64> {
        if samples.len() != labels.len() || samples.is_empty() {
            return usage("need one label per sample and at least one sample");
        }
        let mut total = 0.0;
        for (x, &y) in samples.iter().zip(labels) {
            if y >= self.arch.classes {
                return usage(format!("label {y} out of range"));
            }
            total += cross_entropy(&self.forward(x)?, y).0;
        }
        Ok(total / samples.len() as f64)
    }

    /// Capacity description with measured Lipschitz constants and distances.
    pub fn capacity_input(&self, data: &DataBatch, margin: f64, opts: PowerOptions) -> Result<CapacityInput> {
        let last = self.layers.len() - 1;
        let blocks = self
            .layers
            .iter()
            .zip(&self.plan)
            .zip(&self.arch.blocks)
            .enumerate()
            .map(|(i, ((l, p), b))| {
                let rec = LayerRecord::measured(
                    &l.name,
                    &l.weight,
                    &l.reference,
                    &p.spec,
                    b.activation_lip(),
                    opts,
                )?;
                let out = if i == last { simplex_norm(self.arch.classes) } else { 1.0 };
                Ok(BlockRecord::new(vec![rec], b.shortcut.as_capacity(), out))
            })
            .collect::<Result<Vec<_>>>()?;
        CapacityInput::new(blocks, DataSummary::of(data), margin)
    }

    /// Statistics for the comparison rows; the fixed classifier is absorbed into the margin.
    pub fn comparison_input(&self, data: &DataBatch, margin: f64, opts: PowerOptions) -> Result<ComparisonInput> {
        let inputs = self.layer_inputs(data)?;
        let layers = self
            .layers
            .iter()
            .zip(&self.plan)
            .zip(&inputs)
            .map(|((l, p), x)| {
                let mut st = LayerStats::measure(&l.name, &l.weight, &l.reference, &p.spec, opts)?;
                let (kh, kw) = p.spec.kernel_shape;
                st.input_patch_norm = Some(crate::tensors::patch_norms(
                    x,
                    kh,
                    kw,
                    p.spec.strides.0,
                    p.spec.strides.1,
                    p.spec.padding,
                )?);
                Ok(st)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComparisonInput {
            layers,
            data: DataStats::of(data, Some(&self.plan[0].spec))?,
            margin: margin / simplex_norm(self.arch.classes),
            classes: self.arch.classes,
        })
    }
}
