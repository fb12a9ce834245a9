//! Projections onto the layer constraint sets and the schemes that combine them.
//!
//! Three sets act on a kernel embedded in the full `h × w` input grid:
//! - distance ball `{K : ‖K − K⁰‖_{2,1} ≤ b}`
//! - spectral ball `{K : Lip(φ_K) ≤ s}` (circular, stride 1)
//! - support plane `{K : K = 0 outside the k_h × k_w window}`

use serde::{Deserialize, Serialize};

use crate::convop::ConvSpec;
use crate::error::{usage, Result};
use crate::lipschitz::{
    embed_in_grid, extract_from_grid, fft_exact_spectrum, grid_from_spectrum, grid_spectrum,
    grid_window, jacobi_svd, FrequencyMatrices,
};
use crate::tensors::{group_norm_21, KernelTensor};

/// Euclidean projection of a nonnegative vector onto the ℓ1 ball of `radius`.
///
/// Returns the projection and the soft threshold `λ`.
pub fn project_l1_ball_nonneg(v: &[f64], radius: f64) -> (Vec<f64>, f64) {
    let total: f64 = v.iter().sum();
    if radius <= 0.0 {
        return (vec![0.0; v.len()], v.iter().cloned().fold(0.0, f64::max));
    }
    if total <= radius {
        return (v.to_vec(), 0.0);
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut lambda = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            lambda = t;
        } else {
            break;
        }
    }
    (v.iter().map(|&x| (x - lambda).max(0.0)).collect(), lambda)
}

/// Orthogonal projection onto `{K' : ‖K' − center‖_{2,1} ≤ b}`.
pub fn project_l21_ball(k: &KernelTensor, center: &KernelTensor, b: f64) -> KernelTensor {
    let diff = k.sub(center);
    let norms = diff.fiber_norms();
    let (_, lambda) = project_l1_ball_nonneg(&norms, b.max(0.0));
    if lambda == 0.0 {
        return k.clone();
    }
    let [co, ci, kh, kw] = k.shape();
    let mut out = center.clone();
    for o in 0..co {
        for a in 0..kh {
            for bb in 0..kw {
                let n = norms[(o * kh + a) * kw + bb];
                let scale = if n > 0.0 { (1.0 - lambda / n).max(0.0) } else { 0.0 };
                if scale == 0.0 {
                    continue;
                }
                for i in 0..ci {
                    let v = out.get(o, i, a, bb) + scale * diff.get(o, i, a, bb);
                    out.set(o, i, a, bb, v);
                }
            }
        }
    }
    out
}

fn clip_spectrum(fm: &mut FrequencyMatrices, s: f64) {
    for m in fm.mats.iter_mut() {
        let (mut w, v) = jacobi_svd(m);
        let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
        if norms.iter().all(|&x| x <= s) {
            continue;
        }
        for (c, &x) in norms.iter().enumerate() {
            if x > s {
                w.column_mut(c).scale_mut(s / x);
            }
        }
        *m = w * v.adjoint();
    }
}

/// Orthogonal projection onto the spectral ball, returned on the full input grid.
pub fn project_spectral(k: &KernelTensor, spec: &ConvSpec, s: f64) -> Result<KernelTensor> {
    if !spec.fft_eligible() {
        return usage("spectral projection needs circular padding and stride 1");
    }
    if s < 0.0 {
        return usage("spectral radius must be >= 0");
    }
    let [c_in, h, w] = spec.input_shape;
    if k.c_in() != c_in {
        return usage("kernel input channels do not match spec");
    }
    let grid = if (k.k_h(), k.k_w()) == (h, w) {
        k.clone()
    } else {
        embed_in_grid(k, h, w)?
    };
    let mut fm = grid_spectrum(&grid);
    clip_spectrum(&mut fm, s);
    Ok(grid_from_spectrum(&fm))
}

/// Zeroes a grid kernel outside the `k_h × k_w` support window.
pub fn project_support(grid: &KernelTensor, k_h: usize, k_w: usize) -> Result<KernelTensor> {
    let (h, w) = (grid.k_h(), grid.k_w());
    if k_h > h || k_w > w {
        return usage("support window larger than grid");
    }
    let (ra, rb) = grid_window(k_h, k_w, h, w);
    let mut out = grid.clone();
    for o in 0..grid.c_out() {
        for i in 0..grid.c_in() {
            for a in 0..h {
                for b in 0..w {
                    let inside = a >= ra && a < ra + k_h && b >= rb && b < rb + k_w;
                    if !inside {
                        out.set(o, i, a, b, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Which constraint set a projection step targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Distance,
    Spectral,
    Support,
}

pub const DEFAULT_ORDER: [SetKind; 3] = [SetKind::Distance, SetKind::Spectral, SetKind::Support];

/// Joint constraints on one circular stride-1 layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// Reference kernel `K⁰` with the layer's kernel shape.
    pub reference: KernelTensor,
    pub distance_bound: f64,
    pub lipschitz_bound: f64,
    pub spec: ConvSpec,
    /// Set order within one cycle.
    pub order: Vec<SetKind>,
}

impl ConstraintSet {
    pub fn new(reference: KernelTensor, distance_bound: f64, lipschitz_bound: f64, spec: ConvSpec) -> Result<Self> {
        if !(distance_bound >= 0.0) || !(lipschitz_bound >= 0.0) {
            return usage("constraint bounds must be >= 0");
        }
        spec.check_kernel(&reference)?;
        if !spec.fft_eligible() {
            return usage("constraint sets need circular padding and stride 1");
        }
        Ok(Self {
            reference,
            distance_bound,
            lipschitz_bound,
            spec,
            order: DEFAULT_ORDER.to_vec(),
        })
    }

    pub fn support(&self) -> (usize, usize) {
        self.spec.kernel_shape
    }

    fn grid_hw(&self) -> (usize, usize) {
        (self.spec.input_shape[1], self.spec.input_shape[2])
    }

    fn reference_grid(&self) -> KernelTensor {
        let (h, w) = self.grid_hw();
        embed_in_grid(&self.reference, h, w).expect("spec validated")
    }

    fn grid_spec(&self) -> ConvSpec {
        let (h, w) = self.grid_hw();
        ConvSpec::circular(self.spec.input_shape, h, w).expect("spec validated")
    }

    fn project_grid(&self, kind: SetKind, g: &KernelTensor, ref_grid: &KernelTensor) -> KernelTensor {
        match kind {
            SetKind::Distance => project_l21_ball(g, ref_grid, self.distance_bound),
            SetKind::Spectral => project_spectral(g, &self.grid_spec(), self.lipschitz_bound)
                .expect("spec validated"),
            SetKind::Support => {
                let (kh, kw) = self.support();
                project_support(g, kh, kw).expect("spec validated")
            }
        }
    }

    /// Violations of a grid kernel.
    pub fn violations_grid(&self, g: &KernelTensor) -> Violations {
        let (kh, kw) = self.support();
        let distance = group_norm_21(&g.sub(&self.reference_grid()));
        let lip = fft_exact_spectrum(g, &self.grid_spec()).expect("spec validated").max;
        let outside = g.frobenius_distance(&project_support(g, kh, kw).expect("spec validated"));
        Violations::new(distance, lip, outside, self.distance_bound, self.lipschitz_bound)
    }

    /// Violations of a kernel with the layer's own shape.
    pub fn violations(&self, k: &KernelTensor) -> Violations {
        let distance = group_norm_21(&k.sub(&self.reference));
        let lip = fft_exact_spectrum(k, &self.spec).expect("spec validated").max;
        Violations::new(distance, lip, 0.0, self.distance_bound, self.lipschitz_bound)
    }

    pub fn contains(&self, k: &KernelTensor, rel_tol: f64) -> bool {
        self.violations(k).max_relative() <= rel_tol
    }
}

/// Constraint measurements and their excesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub distance: f64,
    pub lipschitz: f64,
    pub distance_excess: f64,
    pub lipschitz_excess: f64,
    /// Frobenius mass outside the support window.
    pub support_excess: f64,
    pub distance_bound: f64,
    pub lipschitz_bound: f64,
}

impl Violations {
    fn new(distance: f64, lipschitz: f64, support_excess: f64, b: f64, s: f64) -> Self {
        Self {
            distance,
            lipschitz,
            distance_excess: (distance - b).max(0.0),
            lipschitz_excess: (lipschitz - s).max(0.0),
            support_excess,
            distance_bound: b,
            lipschitz_bound: s,
        }
    }

    fn rel(excess: f64, bound: f64) -> f64 {
        if bound > 0.0 {
            excess / bound
        } else {
            excess
        }
    }

    pub fn relative_distance(&self) -> f64 {
        Self::rel(self.distance_excess, self.distance_bound)
    }

    pub fn relative_lipschitz(&self) -> f64 {
        Self::rel(self.lipschitz_excess, self.lipschitz_bound)
    }

    pub fn max_relative(&self) -> f64 {
        self.relative_distance()
            .max(self.relative_lipschitz())
            .max(self.support_excess)
    }
}

/// Result of a composite projection scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub scheme: String,
    pub rounds: usize,
    pub initial: Violations,
    pub final_violations: Violations,
    /// Maximum relative violation after each round.
    pub trajectory: Vec<f64>,
    /// Frobenius distance between input and output.
    pub moved: f64,
}

/// Cycles through the constraint sets `rounds` times; the output has the layer's kernel shape.
pub fn alternating_projections(
    k: &KernelTensor,
    constraints: &ConstraintSet,
    rounds: usize,
) -> Result<(KernelTensor, FeasibilityReport)> {
    constraints.spec.check_kernel(k)?;
    let (h, w) = constraints.grid_hw();
    let (kh, kw) = constraints.support();
    let ref_grid = constraints.reference_grid();
    let mut g = embed_in_grid(k, h, w)?;
    let initial = constraints.violations(k);
    let mut trajectory = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        for &kind in &constraints.order {
            g = constraints.project_grid(kind, &g, &ref_grid);
        }
        trajectory.push(constraints.violations_grid(&g).max_relative());
    }
    let out = extract_from_grid(&project_support(&g, kh, kw)?, kh, kw)?;
    let final_violations = constraints.violations(&out);
    let moved = out.frobenius_distance(k);
    Ok((
        out,
        FeasibilityReport {
            scheme: "alternating".into(),
            rounds,
            initial,
            final_violations,
            trajectory,
            moved,
        },
    ))
}

/// Dykstra's algorithm over flat vectors for any list of projectors.
pub fn dykstra_generic(
    x0: &[f64],
    projectors: &[&dyn Fn(&[f64]) -> Vec<f64>],
    iterations: usize,
) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut incr = vec![vec![0.0; x0.len()]; projectors.len()];
    for _ in 0..iterations {
        for (p, inc) in projectors.iter().zip(incr.iter_mut()) {
            let shifted: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let y = p(&shifted);
            for j in 0..x.len() {
                inc[j] = shifted[j] - y[j];
            }
            x = y;
        }
    }
    x
}

/// Dykstra's correction scheme over the three sets; converges to the projection onto the intersection.
pub fn dykstra(
    k: &KernelTensor,
    constraints: &ConstraintSet,
    iterations: usize,
) -> Result<(KernelTensor, FeasibilityReport)> {
    constraints.spec.check_kernel(k)?;
    let (h, w) = constraints.grid_hw();
    let (kh, kw) = constraints.support();
    let ref_grid = constraints.reference_grid();
    let g0 = embed_in_grid(k, h, w)?;
    let shape = g0.shape();
    let initial = constraints.violations(k);
    let mut x = g0.data().to_vec();
    let mut incr = vec![vec![0.0; x.len()]; constraints.order.len()];
    let mut trajectory = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        for (kind, inc) in constraints.order.iter().zip(incr.iter_mut()) {
            let shifted: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let g = KernelTensor::new(shape, shifted.clone())?;
            let y = constraints.project_grid(*kind, &g, &ref_grid).into_data();
            for j in 0..x.len() {
                inc[j] = shifted[j] - y[j];
            }
            x = y;
        }
        trajectory.push(constraints.violations_grid(&KernelTensor::new(shape, x.clone())?).max_relative());
    }
    let g = KernelTensor::new(shape, x)?;
    let out = extract_from_grid(&project_support(&g, kh, kw)?, kh, kw)?;
    let final_violations = constraints.violations(&out);
    let moved = out.frobenius_distance(k);
    Ok((
        out,
        FeasibilityReport {
            scheme: "dykstra".into(),
            rounds: iterations,
            initial,
            final_violations,
            trajectory,
            moved,
        },
    ))
}

/// Norm used by [`radial_project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialNorm {
    L21,
    /// Lipschitz constant of the convolution with this geometry.
    Spectral(ConvSpec),
}

/// Moves `k` toward `center` along the connecting segment until it is within `radius`.
pub fn radial_project(
    k: &KernelTensor,
    center: &KernelTensor,
    radius: f64,
    norm: RadialNorm,
) -> Result<KernelTensor> {
    if radius < 0.0 {
        return usage("radius must be >= 0");
    }
    let diff = k.sub(center);
    let dist = match norm {
        RadialNorm::L21 => group_norm_21(&diff),
        RadialNorm::Spectral(spec) => fft_exact_spectrum(&diff, &spec)?.max,
    };
    if dist <= radius {
        return Ok(k.clone());
    }
    let t = 1.0 - radius / dist;
    let mut out = k.clone();
    out.axpy(-t, &diff);
    Ok(out)
}

/// Alternating radial steps onto the distance and spectral balls.
pub fn radial_scheme(
    k: &KernelTensor,
    constraints: &ConstraintSet,
    rounds: usize,
) -> Result<(KernelTensor, FeasibilityReport)> {
    constraints.spec.check_kernel(k)?;
    let initial = constraints.violations(k);
    let zero = KernelTensor::zeros(k.shape());
    let mut cur = k.clone();
    let mut trajectory = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        cur = radial_project(&cur, &constraints.reference, constraints.distance_bound, RadialNorm::L21)?;
        cur = radial_project(
            &cur,
            &zero,
            constraints.lipschitz_bound,
            RadialNorm::Spectral(constraints.spec),
        )?;
        trajectory.push(constraints.violations(&cur).max_relative());
    }
    let final_violations = constraints.violations(&cur);
    let moved = cur.frobenius_distance(k);
    Ok((
        cur,
        FeasibilityReport {
            scheme: "radial".into(),
            rounds,
            initial,
            final_violations,
            trajectory,
            moved,
        },
    ))
}

/// Rescales `K⁰` so that its Lipschitz constant equals `s`.
pub fn init_scale_to_feasible(k0: &KernelTensor, spec: &ConvSpec, s: f64) -> Result<KernelTensor> {
    let lip = crate::lipschitz::layer_lipschitz(k0, spec, Default::default())?.value;
    if lip == 0.0 {
        return usage("cannot rescale a kernel with zero Lipschitz constant");
    }
    Ok(k0.scaled(s / lip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::Padding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// λ by bisection on `Σ max(0, v − λ) = r`.
    fn bisect_lambda(v: &[f64], r: f64) -> f64 {
        let f = |l: f64| v.iter().map(|x| (x - l).max(0.0)).sum::<f64>() - r;
        let (mut lo, mut hi) = (0.0, v.iter().cloned().fold(0.0, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn l1_threshold_matches_bisection_with_ties() {
        let v = vec![3.0, 3.0, 1.0, 0.5, 3.0];
        let (p, l) = project_l1_ball_nonneg(&v, 2.0);
        assert!((l - bisect_lambda(&v, 2.0)).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        let (_, l0) = project_l1_ball_nonneg(&v, 100.0);
        assert_eq!(l0, 0.0);
    }

    #[test]
    fn l21_examples() {
        let c = KernelTensor::zeros([2, 2, 2, 2]);
        let k = KernelTensor::random([2, 2, 2, 2], 0.1, 1);
        assert_eq!(project_l21_ball(&k, &c, 100.0), k);
        let single = KernelTensor::new([1, 2, 1, 1], vec![6.0, 8.0]).unwrap();
        let p = project_l21_ball(&single, &KernelTensor::zeros([1, 2, 1, 1]), 4.0);
        assert!(p.frobenius_distance(&single.scaled(0.4)) < 1e-12);
        let r = radial_project(&single, &KernelTensor::zeros([1, 2, 1, 1]), 4.0, RadialNorm::L21).unwrap();
        assert!(p.frobenius_distance(&r) < 1e-12);
        assert_eq!(project_l21_ball(&k, &c, 0.0), c);
    }

    #[test]
    fn l21_variational_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = [2, 3, 2, 2];
        let center = KernelTensor::random(shape, 1.0, 10);
        let k = center.add(&KernelTensor::random(shape, 2.0, 11));
        let b = 3.0;
        let p = project_l21_ball(&k, &center, b);
        assert!(group_norm_21(&p.sub(&center)) <= b * (1.0 + 1e-9));
        let best = p.frobenius_distance(&k);
        for _ in 0..2000 {
            let dir = KernelTensor::random_with(shape, 1.0, &mut rng);
            let n = group_norm_21(&dir);
            let y = center.add(&dir.scaled(b * rng.random::<f64>() / n));
            assert!(best <= y.frobenius_distance(&k) + 1e-12);
        }
    }

    #[test]
    fn spectral_examples() {
        let spec = ConvSpec::circular([2, 3, 3], 1, 1).unwrap();
        let k = KernelTensor::new([2, 2, 1, 1], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let g = project_spectral(&k, &spec, 2.0).unwrap();
        let back = extract_from_grid(&project_support(&g, 1, 1).unwrap(), 1, 1).unwrap();
        let want = KernelTensor::new([2, 2, 1, 1], vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(back.frobenius_distance(&want) < 1e-12);
        assert!(g.frobenius_distance(&embed_in_grid(&want, 3, 3).unwrap()) < 1e-12);

        let spec = ConvSpec::circular([2, 5, 5], 3, 3).unwrap();
        let k = KernelTensor::random([3, 2, 3, 3], 1.0, 4);
        let pre = fft_exact_spectrum(&k, &spec).unwrap().max;
        let g = project_spectral(&k, &spec, 0.5 * pre).unwrap();
        let gspec = ConvSpec::circular([2, 5, 5], 5, 5).unwrap();
        let post = fft_exact_spectrum(&g, &gspec).unwrap().max;
        assert!((post - 0.5 * pre).abs() < 1e-8);
        let same = project_spectral(&k, &spec, 2.0 * pre).unwrap();
        assert!(same.frobenius_distance(&embed_in_grid(&k, 5, 5).unwrap()) < 1e-10);
        let bad = ConvSpec::new([2, 5, 5], (3, 3), (2, 2), Padding::Circular).unwrap();
        assert!(project_spectral(&k, &bad, 1.0).is_err());
    }

    #[test]
    fn support_examples() {
        let g = KernelTensor::from_fn([1, 1, 3, 3], |_, _, _, _| 1.0);
        let p = project_support(&g, 2, 2).unwrap();
        assert_eq!(p.data().iter().sum::<f64>(), 4.0);
        assert_eq!(project_support(&p, 2, 2).unwrap(), p);
    }

    fn toy_constraints(seed: u64) -> (KernelTensor, ConstraintSet) {
        let spec = ConvSpec::circular([2, 5, 5], 3, 3).unwrap();
        let k0 = init_scale_to_feasible(&KernelTensor::random([2, 2, 3, 3], 1.0, seed), &spec, 0.5).unwrap();
        let c = ConstraintSet::new(k0.clone(), 0.5 * group_norm_21(&k0), 1.0, spec).unwrap();
        let p = KernelTensor::random([2, 2, 3, 3], 1.0, seed + 50);
        let k = k0.add(&p.scaled(k0.frobenius() / p.frobenius()));
        (k, c)
    }

    #[test]
    fn schemes_reach_feasibility() {
        for seed in 0..5 {
            let (k, c) = toy_constraints(seed);
            let (a, ra) = alternating_projections(&k, &c, 15).unwrap();
            assert!(ra.final_violations.max_relative() <= 1e-3, "{ra:?}");
            let (d, rd) = dykstra(&k, &c, 100).unwrap();
            assert!(rd.final_violations.max_relative() <= 1e-3, "{rd:?}");
            assert!(d.frobenius_distance(&k) <= a.frobenius_distance(&k) + 1e-6);
            assert!(ra.trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            let (_, rr) = radial_scheme(&k, &c, 15).unwrap();
            assert!(rr.final_violations.max_relative() <= 1e-3, "{rr:?}");
        }
    }

    #[test]
    fn feasible_is_fixed() {
        let (_, c) = toy_constraints(9);
        let k = c.reference.scaled(0.9);
        let (a, _) = alternating_projections(&k, &c, 3).unwrap();
        assert!(a.frobenius_distance(&k) < 1e-10);
        let (d, _) = dykstra(&k, &c, 5).unwrap();
        assert!(d.frobenius_distance(&k) < 1e-10);
    }

    #[test]
    fn dykstra_lens() {
        // two unit discs centred at (0,0) and (1,0); the point (0.5, 2) projects to the upper corner
        let disc = |cx: f64| {
            move |x: &[f64]| {
                let (dx, dy) = (x[0] - cx, x[1]);
                let n = (dx * dx + dy * dy).sqrt();
                if n <= 1.0 {
                    x.to_vec()
                } else {
                    vec![cx + dx / n, dy / n]
                }
            }
        };
        let (p1, p2) = (disc(0.0), disc(1.0));
        let got = dykstra_generic(&[0.5, 2.0], &[&p1, &p2], 5000);
        let want = [0.5, (0.75f64).sqrt()];
        assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6, "{got:?}");
        // (-0.5, 0.3) projects onto the arc of the second disc
        let got = dykstra_generic(&[-0.5, 0.3], &[&p1, &p2], 5000);
        let want = disc(1.0)(&[-0.5, 0.3]);
        assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6, "{got:?}");
    }

    #[test]
    fn init_scaling() {
        let spec = ConvSpec::circular([2, 4, 4], 3, 3).unwrap();
        let k = KernelTensor::random([2, 2, 3, 3], 1.0, 2);
        let s = fft_exact_spectrum(&k, &spec).unwrap().max;
        let h = init_scale_to_feasible(&k, &spec, s / 2.0).unwrap();
        assert!(h.frobenius_distance(&k.scaled(0.5)) < 1e-12);
        let out = init_scale_to_feasible(&k, &spec, 0.3).unwrap();
        assert!((fft_exact_spectrum(&out, &spec).unwrap().max - 0.3).abs() < 1e-8);
        assert!(init_scale_to_feasible(&KernelTensor::zeros([2, 2, 3, 3]), &spec, 1.0).is_err());
    }
}
