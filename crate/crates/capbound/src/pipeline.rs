//! End-to-end analyses of a network given its weights, references and data.

use serde::{Deserialize, Serialize};

use crate::capacity::{
    capacity_terms, comparison_suite, generalization_bound, margin_for_equal_ramp_loss, rademacher_clubs,
    rademacher_spades, whole_network_cover_bound, BoundReport, CapacityTerm, CoverVariant, LayerStats, MarginMatch,
};
use crate::convop::{materialize, ConvSpec};
use crate::error::{usage, Error, Result};
use crate::lipschitz::{dense_singular_values, fft_exact_spectrum, layer_lipschitz, PowerOptions, SpectralMethod};
use crate::project::{alternating_projections, dykstra, radial_scheme, ConstraintSet, Violations};
use crate::train::data::LabeledData;
use crate::train::margin::{error_rate, ramp_risk};
use crate::train::net::{LayerConstraint, TinyNet};
use crate::train::sgd::median;

/// Reference model outputs used to pick a margin with equal ramp loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLogits {
    pub logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Margin at which the reference ramp risk is taken.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarginChoice {
    Fixed(f64),
    EqualRamp(ReferenceLogits),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub margin: MarginChoice,
    pub delta: f64,
    pub epsilon: f64,
    pub power: PowerOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub method: SpectralMethod,
    #[serde(flatten)]
    pub stats: LayerStats,
}

/// Table-1 style summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lipschitz_median: f64,
    pub distance_median: f64,
    pub margin: f64,
    pub error: f64,
    pub clubs: f64,
    pub spades: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSummary {
    pub epsilon: f64,
    pub log_norms: f64,
    pub log_params: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generalization {
    pub delta: f64,
    pub ramp_risk: f64,
    pub with_clubs: f64,
    pub with_spades: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub classes: usize,
    pub margin_source: String,
    pub summary: SummaryRow,
    pub layers: Vec<LayerRow>,
    pub capacity_terms: Vec<CapacityTerm>,
    pub cover: CoverSummary,
    pub generalization: Generalization,
    pub comparison: BoundReport,
}

impl AnalysisReport {
    /// Plain-text rendering.
    pub fn render(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        out.push_str(&format!("samples {}  classes {}  margin {:.6} ({})\n\n", self.n, self.classes, s.margin, self.margin_source));
        out.push_str(&format!(
            "{:<14}{:>12}{:>12}{:>10}{:>10}{:>14}{:>14}\n",
            "", "Lip median", "Dist median", "Mar.", "Err.", "clubs", "spades"
        ));
        out.push_str(&format!(
            "{:<14}{:>12.4}{:>12.4}{:>10.4}{:>10.4}{:>14.4e}{:>14.4e}\n\n",
            "summary", s.lipschitz_median, s.distance_median, s.margin, s.error, s.clubs, s.spades
        ));
        out.push_str(&format!(
            "{:<14}{:>8}{:>12}{:>12}{:>12}{:>14}\n",
            "layer", "params", "Lip", "dist(2,1)", "Frobenius", "method"
        ));
        for l in &self.layers {
            out.push_str(&format!(
                "{:<14}{:>8}{:>12.5}{:>12.5}{:>12.5}{:>14}\n",
                l.stats.name,
                l.stats.params,
                l.stats.lipschitz,
                l.stats.distance_21,
                l.stats.frobenius,
                format!("{:?}", l.method)
            ));
        }
        out.push_str("\ncapacity terms (block, layer, C, scaled C)\n");
        for t in &self.capacity_terms {
            out.push_str(&format!("  {:>3} {:>3} {:>14.6e} {:>14.6e}\n", t.block, t.layer, t.capacity, t.scaled));
        }
        out.push_str(&format!(
            "\nlog covering number at eps {}: norms {:.4}, params {:.4}\n",
            self.cover.epsilon, self.cover.log_norms, self.cover.log_params
        ));
        let g = &self.generalization;
        out.push_str(&format!(
            "generalization (delta {}): ramp risk {:.4}, bound {:.4} (clubs {:.4}, spades {:.4})\n\n",
            g.delta, g.ramp_risk, g.best, g.with_clubs, g.with_spades
        ));
        out.push_str("comparison (log10)\n");
        for e in &self.comparison.entries {
            match (e.log10_value, &e.absent_reason) {
                (Some(v), _) => out.push_str(&format!("  {:<18}{:>10.3}\n", e.name, v)),
                (None, Some(r)) => out.push_str(&format!("  {:<18}{:>10}  ({r})\n", e.name, "absent")),
                (None, None) => out.push_str(&format!("  {:<18}{:>10}\n", e.name, "n/a")),
            }
        }
        out
    }
}

/// Full capacity analysis of `net` on `data`.
pub fn analyze(net: &TinyNet, data: &LabeledData, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let logits = net.forward_batch(&data.batch)?;
    let (margin, source) = match &opts.margin {
        MarginChoice::Fixed(g) => {
            if !(*g > 0.0) {
                return usage("margin must be > 0");
            }
            (*g, "fixed".to_string())
        }
        MarginChoice::EqualRamp(r) => {
            match margin_for_equal_ramp_loss(&r.logits, &r.labels, r.gamma, &logits, &data.labels, 1e6 * r.gamma)? {
                MarginMatch::Found(g) => (g, format!("equal ramp loss to reference at {}", r.gamma)),
                MarginMatch::NoSolution => {
                    return Err(Error::Numerical("no margin reproduces the reference ramp loss".into()))
                }
            }
        }
    };
    let input = net.capacity_input(&data.batch, margin, opts.power)?;
    let comp_in = net.comparison_input(&data.batch, margin, opts.power)?;
    let layers = net
        .layers
        .iter()
        .zip(&net.plan)
        .zip(comp_in.layers.iter())
        .map(|((l, p), st)| {
            Ok(LayerRow {
                method: layer_lipschitz(&l.weight, &p.spec, opts.power)?.method,
                stats: st.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let clubs = rademacher_clubs(&input)?;
    let spades = rademacher_spades(&input)?;
    let risk = ramp_risk(&logits, &data.labels, margin)?;
    let n = data.len();
    let with_clubs = generalization_bound(clubs, risk, n, opts.delta)?;
    let with_spades = generalization_bound(spades, risk, n, opts.delta)?;
    let lips: Vec<f64> = layers.iter().map(|l| l.stats.lipschitz).collect();
    let dists: Vec<f64> = layers.iter().map(|l| l.stats.distance_21).collect();
    Ok(AnalysisReport {
        n,
        classes: net.arch.classes,
        margin_source: source,
        summary: SummaryRow {
            lipschitz_median: median(&lips),
            distance_median: median(&dists),
            margin,
            error: error_rate(&logits, &data.labels)?,
            clubs,
            spades,
        },
        layers,
        capacity_terms: capacity_terms(&input)?,
        cover: CoverSummary {
            epsilon: opts.epsilon,
            log_norms: whole_network_cover_bound(&input, opts.epsilon, CoverVariant::Norms)?,
            log_params: whole_network_cover_bound(&input, opts.epsilon, CoverVariant::Params)?,
        },
        generalization: Generalization {
            delta: opts.delta,
            ramp_risk: risk,
            with_clubs,
            with_spades,
            best: with_clubs.min(with_spades),
        },
        comparison: comparison_suite(&comp_in)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Alternating,
    Dykstra,
    Radial,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternating" => Ok(Scheme::Alternating),
            "dykstra" => Ok(Scheme::Dykstra),
            "radial" => Ok(Scheme::Radial),
            _ => usage(format!("unknown scheme '{s}' (expected alternating, dykstra or radial)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum LayerProjection {
    Unconstrained,
    AlreadyFeasible { violations: Violations },
    Projected { initial: Violations, final_violations: Violations, moved: f64 },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionEntry {
    pub name: String,
    #[serde(flatten)]
    pub outcome: LayerProjection,
}

/// Projects every constrained layer in place; ineligible layers are reported and left unchanged.
pub fn project_net(
    net: &mut TinyNet,
    constraints: &[LayerConstraint],
    scheme: Scheme,
    rounds: usize,
) -> Result<Vec<ProjectionEntry>> {
    if constraints.len() != net.layers.len() {
        return usage(format!("{} constraints for {} layers", constraints.len(), net.layers.len()));
    }
    let specs: Vec<ConvSpec> = net.specs();
    let mut out = Vec::with_capacity(specs.len());
    for ((l, spec), c) in net.layers.iter_mut().zip(&specs).zip(constraints) {
        let outcome = if !c.is_active() {
            LayerProjection::Unconstrained
        } else if !spec.fft_eligible() {
            LayerProjection::Error {
                message: format!(
                    "spectral projection needs circular padding and stride 1 (layer has {:?} padding, stride {:?})",
                    spec.padding, spec.strides
                ),
            }
        } else {
            let set = ConstraintSet::new(l.reference.clone(), c.distance_bound, c.lipschitz_bound, *spec)?;
            let v = set.violations(&l.weight);
            if v.max_relative() == 0.0 {
                LayerProjection::AlreadyFeasible { violations: v }
            } else {
                let (k, rep) = match scheme {
                    Scheme::Alternating => alternating_projections(&l.weight, &set, rounds)?,
                    Scheme::Dykstra => dykstra(&l.weight, &set, rounds)?,
                    Scheme::Radial => radial_scheme(&l.weight, &set, rounds)?,
                };
                l.weight = k;
                LayerProjection::Projected {
                    initial: rep.initial,
                    final_violations: rep.final_violations,
                    moved: rep.moved,
                }
            }
        };
        out.push(ProjectionEntry {
            name: l.name.clone(),
            outcome,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub count: usize,
    pub method: SpectralMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraEntry {
    pub name: String,
    pub summary: Option<SpectrumSummary>,
    pub skipped: Option<String>,
}

/// Singular-value summaries per layer. Ineligible layers use a dense SVD when `dense_cap`
/// allows, and are skipped otherwise.
pub fn spectra(net: &TinyNet, dense_cap: Option<usize>) -> Result<Vec<SpectraEntry>> {
    net.layers
        .iter()
        .zip(&net.plan)
        .map(|(l, p)| {
            let values = if p.spec.fft_eligible() {
                Some((fft_exact_spectrum(&l.weight, &p.spec)?.values, SpectralMethod::FftExact))
            } else if let Some(cap) = dense_cap {
                match materialize(&l.weight, &p.spec, cap) {
                    Ok(m) => Some((dense_singular_values(&m), SpectralMethod::DenseSvd)),
                    Err(Error::Resource(msg)) => {
                        return Ok(SpectraEntry { name: l.name.clone(), summary: None, skipped: Some(msg) })
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            Ok(match values {
                Some((v, method)) => {
                    let s = crate::lipschitz::Spectrum::from_values(v);
                    SpectraEntry {
                        name: l.name.clone(),
                        summary: Some(SpectrumSummary {
                            min: s.min(),
                            q25: s.quantile(0.25),
                            median: s.quantile(0.5),
                            q75: s.quantile(0.75),
                            max: s.max,
                            count: s.values.len(),
                            method,
                        }),
                        skipped: None,
                    }
                }
                None => SpectraEntry {
                    name: l.name.clone(),
                    summary: None,
                    skipped: Some(format!(
                        "exact spectrum needs circular padding and stride 1 (layer has {:?} padding, stride {:?})",
                        p.spec.padding, p.spec.strides
                    )),
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::data::{synth_data, Task};
    use crate::train::net::NetArch;

    fn opts() -> AnalyzeOptions {
        AnalyzeOptions {
            margin: MarginChoice::Fixed(1.0),
            delta: 0.01,
            epsilon: 0.1,
            power: PowerOptions::default(),
        }
    }

    #[test]
    fn untrained_net_has_trivial_capacity() {
        let net = TinyNet::init(NetArch::demo(8, 2, 2), 0).unwrap();
        let d = synth_data(Task::Blobs, 20, 0).unwrap();
        let r = analyze(&net, &d, &opts()).unwrap();
        assert_eq!(r.summary.clubs, 4.0 / 20.0);
        assert_eq!(r.summary.spades, 0.0);
        assert!(r.render().contains("summary"));
    }

    #[test]
    fn equal_ramp_with_itself_returns_reference_margin() {
        let net = TinyNet::init(NetArch::demo(8, 2, 2), 0).unwrap();
        let d = synth_data(Task::Blobs, 20, 0).unwrap();
        let logits = net.forward_batch(&d.batch).unwrap();
        let mut m = crate::train::margin::margins(&logits, &d.labels).unwrap();
        m.sort_by(f64::total_cmp);
        let gamma = m.iter().cloned().fold(0.0, f64::max) * 0.9;
        let o = AnalyzeOptions {
            margin: MarginChoice::EqualRamp(ReferenceLogits { logits, labels: d.labels.clone(), gamma }),
            ..opts()
        };
        let r = analyze(&net, &d, &o).unwrap();
        assert!((r.summary.margin - gamma).abs() < 1e-6 * gamma);
    }

    #[test]
    fn projection_reports_ineligible_layers() {
        let mut net = TinyNet::init(NetArch::six_layer(8, 2, 2), 0).unwrap();
        let c = vec![LayerConstraint::new(0.5, 0.1); 6];
        let rep = project_net(&mut net, &c, Scheme::Alternating, 15).unwrap();
        assert!(matches!(rep[0].outcome, LayerProjection::Error { .. }));
        let mut demo = TinyNet::init(NetArch::demo(8, 2, 2), 0).unwrap();
        let mut c = Vec::new();
        for (l, p) in demo.layers.iter_mut().zip(&demo.plan) {
            l.reference = crate::project::init_scale_to_feasible(&l.reference, &p.spec, 0.25).unwrap();
            l.weight = l.reference.scaled(3.0);
            c.push(LayerConstraint::new(0.5, 0.5 * crate::tensors::group_norm_21(&l.reference)));
        }
        let rep = project_net(&mut demo, &c, Scheme::Alternating, 15).unwrap();
        for e in &rep {
            match &e.outcome {
                LayerProjection::Projected { final_violations, .. } => assert!(final_violations.max_relative() <= 1e-3),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn spectra_skip_or_densify() {
        let net = TinyNet::init(NetArch::six_layer(8, 2, 2), 0).unwrap();
        let s = spectra(&net, None).unwrap();
        assert!(s[0].skipped.is_some());
        let s = spectra(&net, Some(1_000_000)).unwrap();
        let est = layer_lipschitz(&net.layers[0].weight, &net.plan[0].spec, PowerOptions::default()).unwrap().value;
        assert!((s[0].summary.as_ref().unwrap().max - est).abs() <= 1e-4 * est);
        assert!(spectra(&net, Some(10)).unwrap()[0].skipped.is_some());
    }
}
