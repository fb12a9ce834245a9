//! Covering-number calculus over architecture trees, plus exhaustive oracles.
//!
//! Trees are built from parametrized layer classes, fixed maps, composition,
//! addition and concatenation. A tree is evaluated by assigning each layer leaf a
//! covering radius, bounding its log covering number with the single-layer bound
//! and combining radii with the composition/sum/concatenation rules.

mod oracles;

pub use oracles::{
    brute_force_cover, exact_rademacher, maurey_cover_oracle, sampled_rademacher, BruteForceCover, random_batch,
    MaureyInstance, MaureyReport, RademacherEstimate, MAX_COVER_POINTS,
};

use serde::{Deserialize, Serialize};

use crate::capacity::{
    canonical_product, capacity_from_factors, norms_cover_from_capacities, params_cover_from_capacities,
    single_layer_cover_bound, BlockRecord, CapacityInput, CoverVariant, DataSummary, Shortcut,
};
use crate::error::{usage, Result};

/// A class of layers `{K : Lip ≤ s, ‖K - M‖_{2,1} ≤ b}` with `W` parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFamily {
    pub name: String,
    pub params: usize,
    pub lipschitz_bound: f64,
    pub distance_bound: f64,
}

impl LayerFamily {
    pub fn new(name: impl Into<String>, params: usize, lipschitz_bound: f64, distance_bound: f64) -> Self {
        Self { name: name.into(), params, lipschitz_bound, distance_bound }
    }

    /// A zero distance bound leaves exactly one element.
    pub fn is_singleton(&self) -> bool {
        self.distance_bound == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum ArchNode {
    Layer(LayerFamily),
    /// A fixed map with `f(0) = 0`.
    Fixed { name: String, lipschitz: f64 },
    /// Children ordered input to output.
    Compose { children: Vec<ArchNode> },
    Sum { children: Vec<ArchNode> },
    Concat { children: Vec<ArchNode> },
}

impl ArchNode {
    pub fn layer(name: impl Into<String>, params: usize, lipschitz_bound: f64, distance_bound: f64) -> Self {
        ArchNode::Layer(LayerFamily::new(name, params, lipschitz_bound, distance_bound))
    }

    pub fn fixed(name: impl Into<String>, lipschitz: f64) -> Self {
        ArchNode::Fixed { name: name.into(), lipschitz }
    }

    pub fn identity() -> Self {
        Self::fixed("identity", 1.0)
    }

    pub fn compose(children: Vec<ArchNode>) -> Self {
        ArchNode::Compose { children }
    }

    pub fn sum(children: Vec<ArchNode>) -> Self {
        ArchNode::Sum { children }
    }

    pub fn concat(children: Vec<ArchNode>) -> Self {
        ArchNode::Concat { children }
    }

    /// Lipschitz bound of the node.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ArchNode::Layer(f) => f.lipschitz_bound,
            ArchNode::Fixed { lipschitz, .. } => *lipschitz,
            ArchNode::Compose { children } => children.iter().fold(1.0, |acc, c| acc * c.lipschitz()),
            ArchNode::Sum { children } => children.iter().fold(0.0, |acc, c| acc + c.lipschitz()),
            ArchNode::Concat { children } => children.iter().map(|c| c.lipschitz().powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// True when the node's class has a single element.
    pub fn is_singleton(&self) -> bool {
        match self {
            ArchNode::Layer(f) => f.is_singleton(),
            ArchNode::Fixed { .. } => true,
            ArchNode::Compose { children } | ArchNode::Sum { children } | ArchNode::Concat { children } => {
                children.iter().all(|c| c.is_singleton())
            }
        }
    }

    fn has_concat(&self) -> bool {
        match self {
            ArchNode::Layer(_) | ArchNode::Fixed { .. } => false,
            ArchNode::Concat { .. } => true,
            ArchNode::Compose { children } | ArchNode::Sum { children } => children.iter().any(|c| c.has_concat()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArchNode::Layer(f) => {
                if f.params == 0 {
                    return usage(format!("layer {:?} has no parameters", f.name));
                }
                if !(f.lipschitz_bound >= 0.0 && f.lipschitz_bound.is_finite()) || !(f.distance_bound >= 0.0) {
                    return usage(format!("layer {:?} has invalid bounds", f.name));
                }
                Ok(())
            }
            ArchNode::Fixed { name, lipschitz } => {
                if !(*lipschitz >= 0.0 && lipschitz.is_finite()) {
                    return usage(format!("fixed map {name:?} needs a finite Lipschitz constant"));
                }
                Ok(())
            }
            ArchNode::Compose { children } => {
                if children.is_empty() {
                    return usage("composition without children");
                }
                children.iter().try_for_each(|c| c.validate())
            }
            ArchNode::Sum { children } | ArchNode::Concat { children } => {
                if children.len() < 2 {
                    return usage("sum and concatenation need at least two children");
                }
                children.iter().try_for_each(|c| c.validate())
            }
        }
    }

    /// Tree of a chain of residual blocks as described by `input`.
    pub fn residual_network(input: &CapacityInput) -> Self {
        let blocks = input.blocks.iter().enumerate().flat_map(|(i, b)| {
            [block_node(i, b), ArchNode::fixed(format!("block{i}.out"), b.output_lip)]
        });
        ArchNode::compose(blocks.collect())
    }

    /// Layer leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&LayerFamily> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LayerFamily>) {
        match self {
            ArchNode::Layer(f) => out.push(f),
            ArchNode::Fixed { .. } => {}
            ArchNode::Compose { children } | ArchNode::Sum { children } | ArchNode::Concat { children } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    /// Copy with every distance bound multiplied by `factor`.
    pub fn scale_distances(&self, factor: f64) -> Self {
        match self {
            ArchNode::Layer(f) => ArchNode::Layer(LayerFamily { distance_bound: f.distance_bound * factor, ..f.clone() }),
            ArchNode::Fixed { .. } => self.clone(),
            ArchNode::Compose { children } => ArchNode::compose(children.iter().map(|c| c.scale_distances(factor)).collect()),
            ArchNode::Sum { children } => ArchNode::sum(children.iter().map(|c| c.scale_distances(factor)).collect()),
            ArchNode::Concat { children } => ArchNode::concat(children.iter().map(|c| c.scale_distances(factor)).collect()),
        }
    }
}

fn block_node(i: usize, b: &BlockRecord) -> ArchNode {
    let branch = b
        .layers
        .iter()
        .enumerate()
        .flat_map(|(j, l)| {
            [
                ArchNode::layer(format!("block{i}.layer{j}"), l.param_count, l.lipschitz_bound, l.distance_bound),
                ArchNode::fixed(format!("block{i}.act{j}"), l.activation_lip),
            ]
        })
        .collect();
    let shortcut = match b.shortcut {
        Shortcut::Zero => ArchNode::fixed(format!("block{i}.zero"), 0.0),
        Shortcut::Identity => ArchNode::identity(),
        Shortcut::Fixed(l) => ArchNode::fixed(format!("block{i}.shortcut"), l),
    };
    ArchNode::sum(vec![shortcut, ArchNode::compose(branch)])
}

/// Radius, log covering number and Lipschitz bound of a subtree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverPart {
    pub radius: f64,
    pub log_cover: f64,
    pub lipschitz: f64,
    pub singleton: bool,
}

/// Composition: `Σ_i (Π_{l>i} Lip_l)·ε_i` over non-singleton children; log covers add.
pub fn compose_rule(children: &[CoverPart]) -> CoverPart {
    let mut radius = 0.0;
    let mut log_cover = 0.0;
    let mut trailing = 1.0;
    for c in children.iter().rev() {
        if !c.singleton {
            radius += trailing * c.radius;
            log_cover += c.log_cover;
        }
        trailing *= c.lipschitz;
    }
    CoverPart {
        radius,
        log_cover,
        lipschitz: children.iter().fold(1.0, |acc, c| acc * c.lipschitz),
        singleton: children.iter().all(|c| c.singleton),
    }
}

/// Sum: radii and log covers add over non-singleton children.
pub fn sum_rule(children: &[CoverPart]) -> CoverPart {
    let live = children.iter().filter(|c| !c.singleton);
    CoverPart {
        radius: live.clone().map(|c| c.radius).sum(),
        log_cover: live.map(|c| c.log_cover).sum(),
        lipschitz: children.iter().fold(0.0, |acc, c| acc + c.lipschitz),
        singleton: children.iter().all(|c| c.singleton),
    }
}

/// Concatenation: radius `sqrt(Σ ε_i²)`, log covers add.
pub fn concat_rule(children: &[CoverPart]) -> CoverPart {
    let live = children.iter().filter(|c| !c.singleton);
    CoverPart {
        radius: live.clone().map(|c| c.radius * c.radius).sum::<f64>().sqrt(),
        log_cover: live.map(|c| c.log_cover).sum(),
        lipschitz: children.iter().map(|c| c.lipschitz * c.lipschitz).sum::<f64>().sqrt(),
        singleton: children.iter().all(|c| c.singleton),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationScheme {
    /// Shares proportional to `c^{2/3}` with `c` the leaf's capacity.
    NormWeighted,
    Uniform,
}

impl AllocationScheme {
    pub fn for_variant(v: CoverVariant) -> Self {
        match v {
            CoverVariant::Norms => AllocationScheme::NormWeighted,
            _ => AllocationScheme::Uniform,
        }
    }
}

/// Position of one leaf inside the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafContext {
    pub name: String,
    pub params: usize,
    pub distance_bound: f64,
    /// Lipschitz bounds of the maps applied before the leaf.
    pub prefix: Vec<f64>,
    /// Lipschitz bounds of the maps applied after the leaf.
    pub suffix: Vec<f64>,
}

impl LeafContext {
    /// Bound on the norm of the leaf's input over the sample.
    pub fn data_norm(&self, data: DataSummary) -> f64 {
        data.norm * canonical_product(self.prefix.clone())
    }

    pub fn trailing_lipschitz(&self) -> f64 {
        canonical_product(self.suffix.clone())
    }

    /// `2(‖X‖/√n)·Π prefix·Π suffix·b`.
    pub fn capacity(&self, data: DataSummary) -> f64 {
        let mut f = self.prefix.clone();
        f.extend_from_slice(&self.suffix);
        f.push(self.distance_bound);
        capacity_from_factors(data, f)
    }
}

/// Leaf contexts in depth-first order.
pub fn leaf_contexts(tree: &ArchNode) -> Vec<LeafContext> {
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn walk(node: &ArchNode, prefix: &mut Vec<f64>, suffix: &mut Vec<f64>, out: &mut Vec<LeafContext>) {
    match node {
        ArchNode::Layer(f) => out.push(LeafContext {
            name: f.name.clone(),
            params: f.params,
            distance_bound: f.distance_bound,
            prefix: prefix.clone(),
            suffix: suffix.clone(),
        }),
        ArchNode::Fixed { .. } => {}
        ArchNode::Compose { children } => {
            let lips: Vec<f64> = children.iter().map(|c| c.lipschitz()).collect();
            for (i, c) in children.iter().enumerate() {
                let (p, s) = (prefix.len(), suffix.len());
                prefix.extend_from_slice(&lips[..i]);
                suffix.extend_from_slice(&lips[i + 1..]);
                walk(c, prefix, suffix, out);
                prefix.truncate(p);
                suffix.truncate(s);
            }
        }
        ArchNode::Sum { children } | ArchNode::Concat { children } => {
            children.iter().for_each(|c| walk(c, prefix, suffix, out))
        }
    }
}

/// Per-leaf covering radii and the radius they induce on the whole tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBudget {
    pub leaf_radii: Vec<f64>,
    pub total_radius: f64,
}

/// Whole-tree radius induced by `radii` (one per leaf, depth-first).
pub fn tree_radius(tree: &ArchNode, radii: &[f64]) -> Result<f64> {
    let logs = vec![0.0; radii.len()];
    Ok(combine(tree, radii, &logs)?.radius)
}

fn combine(tree: &ArchNode, radii: &[f64], logs: &[f64]) -> Result<CoverPart> {
    let mut k = 0;
    let part = combine_at(tree, radii, logs, &mut k);
    if k != radii.len() {
        return usage(format!("{} radii supplied for {k} leaves", radii.len()));
    }
    Ok(part)
}

fn combine_at(node: &ArchNode, radii: &[f64], logs: &[f64], k: &mut usize) -> CoverPart {
    match node {
        ArchNode::Layer(f) => {
            let i = *k;
            *k += 1;
            CoverPart {
                radius: radii.get(i).copied().unwrap_or(f64::NAN),
                log_cover: logs.get(i).copied().unwrap_or(f64::NAN),
                lipschitz: f.lipschitz_bound,
                singleton: f.is_singleton(),
            }
        }
        ArchNode::Fixed { lipschitz, .. } => CoverPart { radius: 0.0, log_cover: 0.0, lipschitz: *lipschitz, singleton: true },
        ArchNode::Compose { children } => {
            compose_rule(&children.iter().map(|c| combine_at(c, radii, logs, k)).collect::<Vec<_>>())
        }
        ArchNode::Sum { children } => sum_rule(&children.iter().map(|c| combine_at(c, radii, logs, k)).collect::<Vec<_>>()),
        ArchNode::Concat { children } => {
            concat_rule(&children.iter().map(|c| combine_at(c, radii, logs, k)).collect::<Vec<_>>())
        }
    }
}

/// Splits `eps` across the leaves so that the tree radius equals `eps`.
pub fn allocate_radii(tree: &ArchNode, eps: f64, data: DataSummary, scheme: AllocationScheme) -> Result<CoverBudget> {
    if !(eps > 0.0) {
        return usage(format!("covering radius must be > 0, got {eps}"));
    }
    tree.validate()?;
    let leaves = leaf_contexts(tree);
    let weights: Vec<f64> = leaves
        .iter()
        .map(|l| {
            if l.distance_bound == 0.0 {
                0.0
            } else {
                match scheme {
                    AllocationScheme::NormWeighted => l.capacity(data).powf(2.0 / 3.0),
                    AllocationScheme::Uniform => 1.0,
                }
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut radii: Vec<f64> = leaves
        .iter()
        .zip(&weights)
        .map(|(l, &w)| {
            let t = l.trailing_lipschitz();
            if w == 0.0 || total == 0.0 {
                0.0
            } else if t == 0.0 {
                f64::INFINITY
            } else {
                eps * w / (total * t)
            }
        })
        .collect();
    let r = tree_radius(tree, &radii)?;
    if r > 0.0 && r.is_finite() && tree.has_concat() {
        // concatenation shrinks the combined radius; the rules are homogeneous in the leaf radii
        let f = eps / r;
        radii.iter_mut().for_each(|x| *x *= f);
    }
    let total_radius = tree_radius(tree, &radii)?;
    Ok(CoverBudget { leaf_radii: radii, total_radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub name: String,
    pub data_norm: f64,
    pub radius: f64,
    pub log_cover: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEvaluation {
    /// Sum of per-leaf single-layer bounds at the allocated radii.
    pub direct: f64,
    /// Closed form in terms of leaf capacities; absent for trees with concatenation.
    pub closed_form: Option<f64>,
    pub budget: CoverBudget,
    pub leaves: Vec<LeafReport>,
}

/// Log covering number bound of the class described by `tree` at radius `eps`.
pub fn evaluate_tree(tree: &ArchNode, eps: f64, data: DataSummary, variant: CoverVariant) -> Result<TreeEvaluation> {
    evaluate_tree_with(tree, eps, data, variant, AllocationScheme::for_variant(variant))
}

pub fn evaluate_tree_with(
    tree: &ArchNode,
    eps: f64,
    data: DataSummary,
    variant: CoverVariant,
    scheme: AllocationScheme,
) -> Result<TreeEvaluation> {
    if data.n == 0 {
        return usage("sample count must be >= 1");
    }
    let budget = allocate_radii(tree, eps, data, scheme)?;
    let contexts = leaf_contexts(tree);
    let mut leaves = Vec::with_capacity(contexts.len());
    for (ctx, &r) in contexts.iter().zip(&budget.leaf_radii) {
        let data_norm = ctx.data_norm(data);
        // internal cover at radius r from an external cover at r/2
        let log_cover = if ctx.distance_bound == 0.0 || r.is_infinite() {
            0.0
        } else {
            single_layer_cover_bound(ctx.params, data_norm, ctx.distance_bound, r / 2.0, variant)?
        };
        leaves.push(LeafReport {
            name: ctx.name.clone(),
            data_norm,
            radius: r,
            log_cover,
            capacity: ctx.capacity(data),
        });
    }
    let direct = leaves.iter().map(|l| l.log_cover).sum();
    let closed_form = if tree.has_concat() || leaves.is_empty() {
        if leaves.is_empty() {
            Some(0.0)
        } else {
            None
        }
    } else {
        let w = contexts.iter().map(|c| c.params).max().unwrap_or(1);
        Some(match variant {
            CoverVariant::Norms => {
                let caps: Vec<f64> = leaves.iter().map(|l| l.capacity).collect();
                norms_cover_from_capacities(&caps, w, data.n, eps)
            }
            CoverVariant::Params | CoverVariant::ParamsAppendix => {
                let caps: Vec<(f64, usize)> = leaves.iter().zip(&contexts).map(|(l, c)| (l.capacity, c.params)).collect();
                params_cover_from_capacities(&caps, leaves.len(), data.n, eps)
            }
        })
    };
    Ok(TreeEvaluation { direct, closed_form, budget, leaves })
}

/// ResNet18 without normalization on `channels`-channel `size × size` inputs and `classes` outputs.
///
/// Every layer gets the same Lipschitz bound `s` and distance bound `b`; the
/// downsampling shortcuts are learned 1×1 convolutions followed by a ReLU.
pub fn resnet18_tree(channels: usize, classes: usize, s: f64, b: f64) -> ArchNode {
    let relu = |name: &str| ArchNode::fixed(name, 1.0);
    let conv = |name: String, cin: usize, cout: usize, k: usize| ArchNode::layer(name, cin * cout * k * k, s, b);
    let mut blocks = vec![
        ArchNode::compose(vec![conv("stem".into(), channels, 64, 3), relu("stem.relu")]),
    ];
    let mut c = 64;
    let plan = [(64, false), (64, false), (128, true), (128, false), (256, true), (256, false), (512, true), (512, false)];
    for (i, &(out, down)) in plan.iter().enumerate() {
        let branch = ArchNode::compose(vec![
            conv(format!("block{i}.conv0"), c, out, 3),
            relu("relu"),
            conv(format!("block{i}.conv1"), out, out, 3),
            relu("relu"),
        ]);
        let shortcut = if down {
            ArchNode::compose(vec![conv(format!("block{i}.proj"), c, out, 1), relu("relu")])
        } else {
            ArchNode::identity()
        };
        blocks.push(ArchNode::sum(vec![shortcut, branch]));
        c = out;
    }
    blocks.push(ArchNode::fixed("pool", 1.0));
    blocks.push(ArchNode::layer("fc", c * classes, s, b));
    ArchNode::compose(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{whole_network_cover_bound, LayerRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn part(radius: f64, log_cover: f64, lipschitz: f64) -> CoverPart {
        CoverPart { radius, log_cover, lipschitz, singleton: false }
    }

    fn data() -> DataSummary {
        DataSummary { n: 10, norm: 5.0 }
    }

    #[test]
    fn rule_examples() {
        let c = 2.5;
        let r = compose_rule(&[part(0.3, 1.0, 7.0), part(0.2, 2.0, c)]);
        assert!((r.radius - (c * 0.3 + 0.2)).abs() < 1e-15);
        assert_eq!(r.log_cover, 3.0);
        let r = compose_rule(&[part(1.0, 0.0, 1.0), part(2.0, 0.0, 1.0), part(3.0, 0.0, 1.0)]);
        assert_eq!(r.radius, 6.0);
        let single = CoverPart { radius: 9.0, log_cover: 4.0, lipschitz: 3.0, singleton: true };
        let r = compose_rule(&[single, single]);
        assert_eq!((r.radius, r.log_cover), (0.0, 0.0));
        assert_eq!(concat_rule(&[part(3.0, 1.0, 1.0), part(4.0, 1.0, 1.0)]).radius, 5.0);
        assert_eq!(sum_rule(&[part(3.0, 1.0, 1.0), part(4.0, 1.0, 1.0)]).radius, 7.0);
        let r = sum_rule(&[single, part(4.0, 1.5, 1.0)]);
        assert_eq!((r.radius, r.log_cover), (4.0, 1.5));
    }

    #[test]
    fn single_leaf_allocation() {
        let tree = ArchNode::compose(vec![ArchNode::layer("a", 4, 2.0, 1.0), ArchNode::fixed("f", 3.0)]);
        let b = allocate_radii(&tree, 0.6, data(), AllocationScheme::NormWeighted).unwrap();
        assert!((b.leaf_radii[0] - 0.2).abs() < 1e-15);
        assert!((b.total_radius - 0.6).abs() < 1e-15);
    }

    #[test]
    fn two_leaf_allocation() {
        // a then b, Lip(b) = 2: trailing factors 2 and 1
        let tree = ArchNode::compose(vec![ArchNode::layer("a", 4, 3.0, 1.0), ArchNode::layer("b", 4, 2.0, 1.0)]);
        let u = allocate_radii(&tree, 1.0, data(), AllocationScheme::Uniform).unwrap();
        assert!((2.0 * u.leaf_radii[0] - u.leaf_radii[1]).abs() < 1e-15);
        assert!((u.total_radius - 1.0).abs() < 1e-15);
        // capacities ∝ b·prefix·suffix: a → 1·2, b → 3·1; shares ∝ c^{2/3}
        let w = allocate_radii(&tree, 1.0, data(), AllocationScheme::NormWeighted).unwrap();
        let (wa, wb) = (2f64.powf(2.0 / 3.0), 3f64.powf(2.0 / 3.0));
        assert!((w.leaf_radii[0] - wa / (wa + wb) / 2.0).abs() < 1e-14);
        assert!((w.leaf_radii[1] - wb / (wa + wb)).abs() < 1e-14);
    }

    #[test]
    fn concat_allocation_hits_target() {
        let tree = ArchNode::compose(vec![
            ArchNode::concat(vec![ArchNode::layer("a", 4, 1.0, 1.0), ArchNode::layer("b", 9, 2.0, 0.5)]),
            ArchNode::layer("c", 6, 1.5, 2.0),
        ]);
        for s in [AllocationScheme::Uniform, AllocationScheme::NormWeighted] {
            let b = allocate_radii(&tree, 0.7, data(), s).unwrap();
            assert!((b.total_radius - 0.7).abs() < 1e-14);
        }
        let e = evaluate_tree(&tree, 0.7, data(), CoverVariant::Norms).unwrap();
        assert!(e.closed_form.is_none() && e.direct.is_finite());
    }

    #[test]
    fn fixed_only_tree_is_zero() {
        let tree = ArchNode::compose(vec![ArchNode::fixed("a", 2.0), ArchNode::fixed("b", 0.5)]);
        let e = evaluate_tree(&tree, 1.0, data(), CoverVariant::Params).unwrap();
        assert_eq!(e.direct, 0.0);
        assert_eq!(e.closed_form, Some(0.0));
        assert!(ArchNode::compose(vec![]).validate().is_err());
    }

    fn random_input(rng: &mut ChaCha8Rng) -> CapacityInput {
        let blocks = (0..rng.random_range(1..=4))
            .map(|_| {
                let layers = (0..rng.random_range(1..=3))
                    .map(|_| {
                        LayerRecord::new(
                            rng.random_range(0.3..3.0),
                            rng.random_range(0.01..5.0),
                            rng.random_range(0.5..1.5),
                            rng.random_range(1..300),
                        )
                    })
                    .collect();
                let shortcut = match rng.random_range(0..3) {
                    0 => Shortcut::Zero,
                    1 => Shortcut::Identity,
                    _ => Shortcut::Fixed(rng.random_range(0.1..2.0)),
                };
                BlockRecord::new(layers, shortcut, rng.random_range(0.5..1.5))
            })
            .collect();
        let data = DataSummary { n: rng.random_range(2..500), norm: rng.random_range(0.5..50.0) };
        CapacityInput::new(blocks, data, 1.0).unwrap()
    }

    #[test]
    fn residual_tree_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let input = random_input(&mut rng);
            let tree = ArchNode::residual_network(&input);
            let eps = rng.random_range(0.05..5.0);
            for v in [CoverVariant::Norms, CoverVariant::Params] {
                let e = evaluate_tree(&tree, eps, input.data, v).unwrap();
                let expected = whole_network_cover_bound(&input, eps, v).unwrap();
                assert_eq!(e.closed_form, Some(expected));
                assert!(e.direct <= expected * (1.0 + 1e-12), "{v:?}: {} > {expected}", e.direct);
                assert!((e.budget.total_radius - eps).abs() <= 1e-12 * eps);
            }
        }
    }

    #[test]
    fn identity_insertion_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let input = random_input(&mut rng);
        let tree = ArchNode::residual_network(&input);
        let ArchNode::Compose { children } = &tree else { unreachable!() };
        let mut padded = vec![ArchNode::identity()];
        for c in children {
            padded.push(ArchNode::compose(vec![c.clone(), ArchNode::identity()]));
        }
        let padded = ArchNode::compose(padded);
        for v in [CoverVariant::Norms, CoverVariant::Params] {
            let a = evaluate_tree(&tree, 0.5, input.data, v).unwrap();
            let b = evaluate_tree(&padded, 0.5, input.data, v).unwrap();
            assert_eq!(a.closed_form, b.closed_form);
            assert_eq!(a.direct, b.direct);
        }
    }

    #[test]
    fn resnet18_finite_and_monotone() {
        let tree = resnet18_tree(3, 10, 1.2, 0.5);
        assert_eq!(tree.leaves().len(), 1 + 16 + 3 + 1);
        let d = DataSummary { n: 1000, norm: 500.0 };
        for v in [CoverVariant::Norms, CoverVariant::Params] {
            let a = evaluate_tree(&tree, 1.0, d, v).unwrap();
            let b = evaluate_tree(&tree.scale_distances(2.0), 1.0, d, v).unwrap();
            assert!(a.direct.is_finite() && a.closed_form.unwrap().is_finite());
            assert!(b.direct > a.direct);
            assert!(b.closed_form.unwrap() > a.closed_form.unwrap());
        }
    }
}
