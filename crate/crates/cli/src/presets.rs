//! Named experiments. Each preset owns its variants and its expectations; the
//! tolerances below are the single source of truth for pass/fail.

use ucfem::analysis::ConvergenceTable;
use ucfem::solver::Method;

use crate::config::{RunConfig, SolutionId};

/// One study inside a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    /// Unique within the preset; also the CSV file stem.
    pub label: String,
    pub config: RunConfig,
}

/// A checkable statement about the tables of a preset.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Fitted H¹ slope in `[lo, hi]`.
    Slope { variant: String, lo: f64, hi: f64 },
    /// Fitted slope of the flux dual-norm error in `[lo, hi]`.
    FluxSlope { variant: String, lo: f64, hi: f64 },
    /// Pairwise H¹ rate over the last two levels below `max`.
    LastRateBelow { variant: String, max: f64 },
    /// At every level, `err(better) ≤ (1 + slack)·err(reference)`.
    ErrorsBelow {
        better: String,
        reference: String,
        slack: f64,
    },
    /// Finest-level errors satisfy `max / min ≤ 1 + rel`.
    FinalSpread { variants: Vec<String>, rel: f64 },
    /// Finest-level `err(larger) > err(smaller)`.
    FinalGreater { larger: String, smaller: String },
    /// Finest-level `err(num) ≥ factor · err(den)`.
    FinalRatioAtLeast {
        num: String,
        den: String,
        factor: f64,
    },
    /// `max / min` of `est_total / (h·err_H1)` over levels below `max_factor`.
    EffectivitySpread { variant: String, max_factor: f64 },
    /// Finest-level `C(u)` strictly increasing along `variants`.
    RatioIncreasing { variants: Vec<String> },
}

impl Rule {
    /// Variants the rule reads.
    pub fn variants(&self) -> Vec<&str> {
        match self {
            Rule::Slope { variant, .. }
            | Rule::FluxSlope { variant, .. }
            | Rule::LastRateBelow { variant, .. }
            | Rule::EffectivitySpread { variant, .. } => vec![variant],
            Rule::ErrorsBelow {
                better, reference, ..
            } => vec![better, reference],
            Rule::FinalGreater { larger, smaller } => vec![larger, smaller],
            Rule::FinalRatioAtLeast { num, den, .. } => vec![num, den],
            Rule::FinalSpread { variants, .. } | Rule::RatioIncreasing { variants } => {
                variants.iter().map(String::as_str).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    /// Short criterion name printed in summaries.
    pub criterion: &'static str,
    /// Recorded-only expectations never change the exit status.
    pub gating: bool,
    pub rule: Rule,
}

/// Outcome of one expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: String,
    pub gating: bool,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = match (self.passed, self.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "NOTE",
        };
        write!(f, "{status} {}: {}", self.criterion, self.detail)
    }
}

fn table<'a>(
    tables: &'a [(String, ConvergenceTable)],
    label: &str,
) -> Option<&'a ConvergenceTable> {
    tables
        .iter()
        .find(|(l, _)| l == label)
        .map(|(_, t)| t)
        .filter(|t| !t.rows.is_empty())
}

fn final_err(t: &ConvergenceTable) -> f64 {
    t.last().map_or(f64::NAN, |r| r.err_h1)
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.4e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Expectation {
    pub fn evaluate(&self, tables: &[(String, ConvergenceTable)]) -> Check {
        let (passed, detail) = match self.eval_inner(tables) {
            Some(r) => r,
            None => (
                false,
                format!("missing tables for {:?}", self.rule.variants()),
            ),
        };
        Check {
            criterion: self.criterion.to_string(),
            gating: self.gating,
            passed,
            detail,
        }
    }

    fn eval_inner(&self, tables: &[(String, ConvergenceTable)]) -> Option<(bool, String)> {
        let t = |l: &str| table(tables, l);
        Some(match &self.rule {
            Rule::Slope { variant, lo, hi } => {
                let s = t(variant)?.slope_h1();
                (
                    s >= *lo && s <= *hi,
                    format!("{variant} H1 slope {s:.4} (want [{lo}, {hi}])"),
                )
            }
            Rule::FluxSlope { variant, lo, hi } => {
                let s = t(variant)?.slope_flux()?;
                (
                    s >= *lo && s <= *hi,
                    format!("{variant} flux slope {s:.4} (want [{lo}, {hi}])"),
                )
            }
            Rule::LastRateBelow { variant, max } => {
                let r = *t(variant)?.rates_h1().last()?;
                (
                    r < *max,
                    format!("{variant} last pairwise rate {r:.4} (want < {max})"),
                )
            }
            Rule::ErrorsBelow {
                better,
                reference,
                slack,
            } => {
                let (b, r) = (t(better)?.h1_errors(), t(reference)?.h1_errors());
                if b.len() != r.len() {
                    return None;
                }
                let ok = b.iter().zip(&r).all(|(x, y)| *x <= (1.0 + slack) * y);
                (
                    ok,
                    format!(
                        "{better} [{}] vs {reference} [{}] (slack {slack})",
                        fmt_list(&b),
                        fmt_list(&r)
                    ),
                )
            }
            Rule::FinalSpread { variants, rel } => {
                let es: Option<Vec<f64>> = variants.iter().map(|v| t(v).map(final_err)).collect();
                let es = es?;
                let (lo, hi) = es
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(*e), b.max(*e)));
                let spread = hi / lo;
                (
                    spread <= 1.0 + rel,
                    format!(
                        "finest errors [{}] max/min {spread:.4} (want <= {})",
                        fmt_list(&es),
                        1.0 + rel
                    ),
                )
            }
            Rule::FinalGreater { larger, smaller } => {
                let (a, b) = (final_err(t(larger)?), final_err(t(smaller)?));
                (
                    a > b,
                    format!("{larger} {a:.4e} vs {smaller} {b:.4e} (want greater)"),
                )
            }
            Rule::FinalRatioAtLeast { num, den, factor } => {
                let (a, b) = (final_err(t(num)?), final_err(t(den)?));
                (
                    a >= factor * b,
                    format!(
                        "{num} {a:.4e} / {den} {b:.4e} = {:.3} (want >= {factor})",
                        a / b
                    ),
                )
            }
            Rule::EffectivitySpread {
                variant,
                max_factor,
            } => {
                let eff: Vec<f64> = t(variant)?.rows.iter().map(|r| r.effectivity()).collect();
                let (lo, hi) = eff
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(*e), b.max(*e)));
                let f = hi / lo;
                (
                    f < *max_factor,
                    format!(
                        "{variant} effectivity [{}] max/min {f:.3} (want < {max_factor})",
                        fmt_list(&eff)
                    ),
                )
            }
            Rule::RatioIncreasing { variants } => {
                let cs: Option<Vec<f64>> = variants
                    .iter()
                    .map(|v| t(v).and_then(|t| t.last()).map(|r| r.c_ratio))
                    .collect();
                let cs = cs?;
                let ok = cs.windows(2).all(|w| w[1] > w[0]);
                (
                    ok,
                    format!(
                        "C(u) along {variants:?}: [{}] (want strictly increasing)",
                        fmt_list(&cs)
                    ),
                )
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PresetKind {
    Study {
        variants: Vec<Variant>,
        expectations: Vec<Expectation>,
    },
    /// The ghost-function construction on `n × n` meshes.
    Necessity { sizes: Vec<usize>, tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// The figure or proposition the preset reproduces.
    pub figure: &'static str,
    pub description: &'static str,
    pub kind: PresetKind,
}

impl Preset {
    pub fn variants(&self) -> &[Variant] {
        match &self.kind {
            PresetKind::Study { variants, .. } => variants,
            PresetKind::Necessity { .. } => &[],
        }
    }

    pub fn expectations(&self) -> &[Expectation] {
        match &self.kind {
            PresetKind::Study { expectations, .. } => expectations,
            PresetKind::Necessity { .. } => &[],
        }
    }

    pub fn variant(&self, label: &str) -> Option<&Variant> {
        self.variants().iter().find(|v| v.label == label)
    }

    /// Labels read by the expectations (only the gating ones if asked), in
    /// variant order.
    pub fn required_variants(&self, gating_only: bool) -> Vec<String> {
        let needed: Vec<&str> = self
            .expectations()
            .iter()
            .filter(|e| e.gating || !gating_only)
            .flat_map(|e| e.rule.variants())
            .collect();
        self.variants()
            .iter()
            .filter(|v| needed.contains(&v.label.as_str()))
            .map(|v| v.label.clone())
            .collect()
    }
}

fn variant(label: impl Into<String>, f: impl FnOnce(&mut RunConfig)) -> Variant {
    let mut config = RunConfig::default();
    f(&mut config);
    Variant {
        label: label.into(),
        config,
    }
}

fn slope(criterion: &'static str, gating: bool, v: &str, lo: f64, hi: f64) -> Expectation {
    Expectation {
        criterion,
        gating,
        rule: Rule::Slope {
            variant: v.into(),
            lo,
            hi,
        },
    }
}

/// All presets, in their stable listing order.
pub fn presets() -> Vec<Preset> {
    let gammas = [
        ("gamma_1", 1.0),
        ("gamma_0.1", 0.1),
        ("gamma_0.01", 0.01),
        ("gamma_0", 0.0),
    ];
    let fig_gamma = Preset {
        name: "fig-gamma",
        figure: "figure:gamma",
        description: "H1 error of example_1 for gamma in {1, 0.1, 0.01, 0}, N = 8, P1",
        kind: PresetKind::Study {
            variants: gammas
                .iter()
                .map(|&(l, g)| variant(l, |c| c.gamma = g))
                .collect(),
            expectations: vec![
                slope("P1 optimal rate", true, "gamma_1", 0.85, 1.15),
                slope("gamma robustness", true, "gamma_0.1", 0.85, 1.2),
                slope("gamma robustness", true, "gamma_0.01", 0.85, 1.2),
                slope("gamma robustness", true, "gamma_0", 0.85, 1.2),
                Expectation {
                    criterion: "gamma robustness",
                    gating: true,
                    rule: Rule::ErrorsBelow {
                        better: "gamma_0".into(),
                        reference: "gamma_1".into(),
                        slack: 0.1,
                    },
                },
                Expectation {
                    criterion: "estimator tracking",
                    gating: true,
                    rule: Rule::EffectivitySpread {
                        variant: "gamma_1".into(),
                        max_factor: 2.0,
                    },
                },
            ],
        },
    };

    let dims = [1usize, 8, 16, 64];
    let fig_dimension = Preset {
        name: "fig-dimension",
        figure: "figure:dimension",
        description: "H1 error of example_1 for trace dimension N in {1, 8, 16, 64}, gamma = 1, P1",
        kind: PresetKind::Study {
            variants: dims
                .iter()
                .map(|&n| variant(format!("N_{n}"), |c| c.trace_n = n))
                .collect(),
            expectations: vec![
                Expectation {
                    criterion: "N saturation",
                    gating: true,
                    rule: Rule::FinalSpread {
                        variants: vec!["N_8".into(), "N_16".into(), "N_64".into()],
                        rel: 0.25,
                    },
                },
                Expectation {
                    criterion: "N saturation (N=1 vs N=8, recorded)",
                    gating: false,
                    rule: Rule::FinalGreater {
                        larger: "N_1".into(),
                        smaller: "N_8".into(),
                    },
                },
            ],
        },
    };

    let fig_perturbation = Preset {
        name: "fig-perturbation",
        figure: "figure:perturbation",
        description: "perturbed solution whose flux lies in V_2 but not V_1, N in {1, 2}, P1",
        kind: PresetKind::Study {
            variants: [1usize, 2]
                .iter()
                .map(|&n| {
                    variant(format!("N_{n}"), |c| {
                        c.solution = SolutionId::Perturbed;
                        c.trace_n = n;
                    })
                })
                .collect(),
            expectations: vec![
                slope("perturbation dichotomy", true, "N_2", 0.85, 1.15),
                Expectation {
                    criterion: "perturbation dichotomy",
                    gating: true,
                    rule: Rule::LastRateBelow {
                        variant: "N_1".into(),
                        max: 0.3,
                    },
                },
            ],
        },
    };

    let eps = [("eps_0.12", 0.12), ("eps_0.06", 0.06), ("eps_0", 0.0)];
    let fig_noise = Preset {
        name: "fig-noise",
        figure: "figure:noise",
        description: "relative load noise eps in {0.12, 0.06, 0}, seed 1, N = 8, P1",
        kind: PresetKind::Study {
            variants: eps
                .iter()
                .map(|&(l, e)| {
                    variant(l, |c| {
                        c.noise_eps = e;
                        c.noise_seed = 1;
                    })
                })
                .collect(),
            expectations: vec![
                slope("noise stagnation", true, "eps_0", 0.85, 1.15),
                Expectation {
                    criterion: "noise stagnation",
                    gating: true,
                    rule: Rule::FinalRatioAtLeast {
                        num: "eps_0.12".into(),
                        den: "eps_0".into(),
                        factor: 3.0,
                    },
                },
            ],
        },
    };

    let u_n = |degree: usize| -> Vec<Variant> {
        let mut vs: Vec<Variant> = (1..=4)
            .map(|k| {
                variant(format!("u_{k}"), |c| {
                    c.solution = SolutionId::UN(k);
                    c.degree = degree;
                })
            })
            .collect();
        vs.push(variant("u_1_three_field", |c| {
            c.solution = SolutionId::UN(1);
            c.degree = degree;
            c.method = Method::ThreeField;
        }));
        vs
    };
    let fig_first_order = Preset {
        name: "fig-first-order",
        figure: "figure:function_difference",
        description:
            "u_N = (e^y - y)cos(N pi x), N = 1..4, P1, trace N = 8; plus three-field flux recovery",
        kind: PresetKind::Study {
            variants: u_n(1),
            expectations: vec![
                slope("first-order u_N rate (recorded)", false, "u_1", 0.85, 1.15),
                slope("first-order u_N rate (recorded)", false, "u_2", 0.85, 1.15),
                slope("first-order u_N rate (recorded)", false, "u_3", 0.85, 1.15),
                slope("first-order u_N rate (recorded)", false, "u_4", 0.85, 1.15),
                Expectation {
                    criterion: "flux recovery",
                    gating: true,
                    rule: Rule::FluxSlope {
                        variant: "u_1_three_field".into(),
                        lo: 0.8,
                        hi: 1.2,
                    },
                },
            ],
        },
    };
    let fig_second_order = Preset {
        name: "fig-second-order",
        figure: "figure:second_order",
        description:
            "u_N = (e^y - y)cos(N pi x), N = 1..4, P2, trace N = 8; plus three-field flux recovery",
        kind: PresetKind::Study {
            variants: u_n(2),
            expectations: vec![
                slope("P2 rate", true, "u_1", 1.8, 2.2),
                slope("P2 rate", true, "u_2", 1.8, 2.2),
                slope("P2 rate (recorded)", false, "u_3", 1.8, 2.2),
                slope("P2 rate (recorded)", false, "u_4", 1.8, 2.2),
                Expectation {
                    criterion: "flux recovery",
                    gating: true,
                    rule: Rule::FluxSlope {
                        variant: "u_1_three_field".into(),
                        lo: 1.7,
                        hi: 2.3,
                    },
                },
            ],
        },
    };

    let mut ratio_variants: Vec<Variant> = (1..=4)
        .map(|k| {
            variant(format!("u_{k}"), |c| {
                c.solution = SolutionId::UN(k);
                c.trace_n = k;
                c.n_start = 81;
                c.n_levels = 1;
            })
        })
        .collect();
    ratio_variants.extend((1..=4).map(|k| {
        variant(format!("example_1_N_{k}"), |c| {
            c.trace_n = k;
            c.n_start = 81;
            c.n_levels = 1;
        })
    }));
    let fig_ratio = Preset {
        name: "fig-ratio",
        figure: "figure:ratio",
        description: "C(u) = err_H1 / (h |u|_H2) at n = 81 for u_N with V_N, and for example_1 with V_N, N = 1..4",
        kind: PresetKind::Study {
            variants: ratio_variants,
            expectations: vec![
                Expectation {
                    criterion: "ratio growth",
                    gating: true,
                    rule: Rule::RatioIncreasing { variants: (1..=4).map(|k| format!("u_{k}")).collect() },
                },
                Expectation {
                    criterion: "ratio growth for example_1 (recorded)",
                    gating: false,
                    rule: Rule::RatioIncreasing { variants: (1..=4).map(|k| format!("example_1_N_{k}")).collect() },
                },
            ],
        },
    };

    let necessity = Preset {
        name: "necessity",
        figure: "proposition:necessity",
        description: "ghost function vanishing on the interior nodes for n in {8, 16}",
        kind: PresetKind::Necessity {
            sizes: vec![8, 16],
            tol: 1e-10,
        },
    };

    vec![
        fig_gamma,
        fig_dimension,
        fig_perturbation,
        fig_noise,
        fig_first_order,
        fig_second_order,
        fig_ratio,
        necessity,
    ]
}

pub fn find(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ucfem::analysis::{ErrorReport, Estimator};

    fn synthetic(hs: &[f64], es: &[f64]) -> ConvergenceTable {
        ConvergenceTable {
            rows: hs
                .iter()
                .zip(es)
                .enumerate()
                .map(|(i, (&h, &e))| ErrorReport {
                    level: i,
                    n: 0,
                    h,
                    ndof: 0,
                    err_h1: e,
                    err_l2_omega: 0.0,
                    err_flux_dual: Some(e * h),
                    estimator: Estimator {
                        data: h * e,
                        jump: 0.0,
                        neumann: 0.0,
                        gls: 0.0,
                        dual: 0.0,
                    },
                    c_ratio: e,
                    residual: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn eight_presets_in_stable_order() {
        let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
        assert_eq!(
            names,
            [
                "fig-gamma",
                "fig-dimension",
                "fig-perturbation",
                "fig-noise",
                "fig-first-order",
                "fig-second-order",
                "fig-ratio",
                "necessity"
            ]
        );
        let figures: std::collections::HashSet<&str> = presets().iter().map(|p| p.figure).collect();
        assert_eq!(figures.len(), 8);
    }

    #[test]
    fn labels_are_unique_and_rules_reference_existing_variants() {
        for p in presets() {
            let labels: Vec<&str> = p.variants().iter().map(|v| v.label.as_str()).collect();
            let mut dedup = labels.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), labels.len(), "{}", p.name);
            for e in p.expectations() {
                for v in e.rule.variants() {
                    assert!(labels.contains(&v), "{}: {v}", p.name);
                }
            }
            for v in p.variants() {
                v.config.validate().unwrap();
            }
        }
    }

    #[test]
    fn sweeps_match_their_captions() {
        let g: Vec<f64> = find("fig-gamma")
            .unwrap()
            .variants()
            .iter()
            .map(|v| v.config.gamma)
            .collect();
        assert_eq!(g, [1.0, 0.1, 0.01, 0.0]);
        let n: Vec<usize> = find("fig-dimension")
            .unwrap()
            .variants()
            .iter()
            .map(|v| v.config.trace_n)
            .collect();
        assert_eq!(n, [1, 8, 16, 64]);
        let e: Vec<f64> = find("fig-noise")
            .unwrap()
            .variants()
            .iter()
            .map(|v| v.config.noise_eps)
            .collect();
        assert_eq!(e, [0.12, 0.06, 0.0]);
        let second = find("fig-second-order").unwrap();
        assert!(second.variants().iter().all(|v| v.config.degree == 2));
        assert!(second
            .expectations()
            .iter()
            .any(|e| matches!(e.rule, Rule::Slope { lo, hi, .. } if lo < 2.0 && hi > 2.0)));
    }

    #[test]
    fn required_variants_follow_gating() {
        let p = find("fig-second-order").unwrap();
        assert_eq!(p.required_variants(true), ["u_1", "u_2", "u_1_three_field"]);
        assert_eq!(p.required_variants(false).len(), 5);
    }

    #[test]
    fn rules_on_synthetic_tables() {
        let hs = [0.4, 0.2, 0.1, 0.05];
        let lin = synthetic(&hs, &hs);
        let flat = synthetic(&hs, &[0.4, 0.2, 0.15, 0.149]);
        let tables = vec![("a".to_string(), lin), ("b".to_string(), flat)];
        let check = |rule| {
            Expectation {
                criterion: "t",
                gating: true,
                rule,
            }
            .evaluate(&tables)
            .passed
        };
        assert!(check(Rule::Slope {
            variant: "a".into(),
            lo: 0.99,
            hi: 1.01
        }));
        assert!(check(Rule::FluxSlope {
            variant: "a".into(),
            lo: 1.99,
            hi: 2.01
        }));
        assert!(check(Rule::LastRateBelow {
            variant: "b".into(),
            max: 0.3
        }));
        assert!(!check(Rule::LastRateBelow {
            variant: "a".into(),
            max: 0.3
        }));
        assert!(check(Rule::ErrorsBelow {
            better: "a".into(),
            reference: "b".into(),
            slack: 0.0
        }));
        assert!(!check(Rule::FinalSpread {
            variants: vec!["a".into(), "b".into()],
            rel: 0.25
        }));
        assert!(check(Rule::FinalGreater {
            larger: "b".into(),
            smaller: "a".into()
        }));
        assert!(check(Rule::FinalRatioAtLeast {
            num: "b".into(),
            den: "a".into(),
            factor: 2.9
        }));
        assert!(check(Rule::EffectivitySpread {
            variant: "a".into(),
            max_factor: 1.0 + 1e-12
        }));
        assert!(check(Rule::RatioIncreasing {
            variants: vec!["a".into(), "b".into()]
        }));
        assert!(!check(Rule::Slope {
            variant: "missing".into(),
            lo: 0.0,
            hi: 9.0
        }));
    }
}
