//! Named experiment presets: a grid of [`ExperimentSpec`]s per figure panel,
//! reproducing the simulation designs at either desk scale (minutes) or
//! paper scale (hours to days).
//!
//! Desk scale shrinks replication counts, bootstrap sizes, and cluster sizes
//! while keeping the design proportions; the accompanying metadata echoes the
//! exact specification actually run.

use super::{
    DisturbanceSpec, EngineSpec, ExperimentSpec, FeLevel, LevelChoice, SizeSpec, TaskSpec,
};
use crate::boot::WeightDist;
use crate::error::{Error, Result};
use crate::sv::{StatKind, Tail};

/// Run-size scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Thousands of replications, B around 200, shrunken cluster sizes.
    Desk,
    /// Full-size experiments (400,000 replications).
    Paper,
}

impl Scale {
    fn reps(self, desk: usize) -> usize {
        match self {
            Scale::Desk => desk,
            Scale::Paper => 400_000,
        }
    }

    fn boot(self, desk: usize, paper: usize) -> usize {
        match self {
            Scale::Desk => desk,
            Scale::Paper => paper,
        }
    }

    fn obs(self, desk: usize, paper: usize) -> usize {
        match self {
            Scale::Desk => desk,
            Scale::Paper => paper,
        }
    }
}

/// One grid point of a preset: labels for the summary CSV plus the spec.
#[derive(Debug, Clone)]
pub struct PresetRun {
    pub labels: Vec<(String, String)>,
    pub spec: ExperimentSpec,
}

pub const PRESET_NAMES: &[&str] = &[
    "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b",
    "fig3c", "fig3d", "fig4a", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b",
    "fig7c", "fig7d", "fig8a", "fig8b", "fig8c", "fig8d",
];

pub fn preset_names() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

fn boot_engine(b: usize) -> EngineSpec {
    EngineSpec::Bootstrap {
        b,
        weights: WeightDist::Rademacher,
    }
}

fn labels(items: &[(&str, String)]) -> Vec<(String, String)> {
    items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Build the grid of experiment specs for a named preset.
pub fn preset(name: &str, scale: Scale, seed: u64) -> Result<Vec<PresetRun>> {
    let mut runs = Vec::new();
    match name {
        // Null-hypothesis rejection frequencies of the matrix statistic as
        // the number of coarse clusters varies. Panels: (a) fine vs coarse,
        // asymptotic; (b) independence vs coarse, asymptotic; (c) and (d)
        // their bootstrap versions.
        "fig1a" | "fig1b" | "fig1c" | "fig1d" => {
            let fine_null = matches!(name, "fig1a" | "fig1c");
            let boot = matches!(name, "fig1c" | "fig1d");
            let g_grid: &[usize] = match scale {
                Scale::Desk => &[6, 10, 18],
                Scale::Paper => &[6, 12, 18, 24, 30, 36],
            };
            let k_grid: &[usize] = match scale {
                Scale::Desk => &[1, 2],
                Scale::Paper => &[1, 2, 3, 4, 5],
            };
            for &g in g_grid {
                for &k1 in k_grid {
                    let spec = ExperimentSpec {
                        name: format!("{name}__Gc{g}_k{k1}"),
                        sizes: SizeSpec::Balanced {
                            coarse: g,
                            fine_per_coarse: 4,
                            obs_per_fine: scale.obs(25, 100),
                        },
                        k1,
                        x_rho: 0.5,
                        disturbances: if fine_null {
                            DisturbanceSpec::FineClustered { rho: 0.1 }
                        } else {
                            DisturbanceSpec::Independent
                        },
                        fixed_effects: if fine_null { FeLevel::Fine } else { FeLevel::Coarse },
                        replications: scale.reps(2000),
                        engine: if boot {
                            boot_engine(scale.boot(199, 399))
                        } else {
                            EngineSpec::Asymptotic
                        },
                        alpha: 0.05,
                        task: TaskSpec::Rejection {
                            null: if fine_null { LevelChoice::Fine } else { LevelChoice::None },
                            alt: LevelChoice::Coarse,
                            stat: StatKind::MatrixSigma,
                            tails: vec![Tail::TwoSided],
                        },
                        seed,
                    };
                    runs.push(PresetRun {
                        labels: labels(&[("G_c", g.to_string()), ("k1", k1.to_string())]),
                        spec,
                    });
                }
            }
        }

        // Matrix-statistic nulls with the number of fine clusters per coarse
        // cluster (a, c) or the coarse-cluster size (b, d) varying, for both
        // a fixed-effects model and a constant-only model.
        "fig2a" | "fig2b" | "fig2c" | "fig2d" => {
            let fine_null = matches!(name, "fig2a" | "fig2c");
            let boot = matches!(name, "fig2c" | "fig2d");
            let k_grid: &[usize] = match scale {
                Scale::Desk => &[1, 3],
                Scale::Paper => &[1, 3, 5],
            };
            let x_grid: &[usize] = if fine_null {
                &[3, 6, 12]
            } else {
                &[25, 100, 400]
            };
            for &x in x_grid {
                for &k1 in k_grid {
                    for fe_on in [true, false] {
                        let (sizes, fe) = if fine_null {
                            (
                                SizeSpec::Balanced {
                                    coarse: 8,
                                    fine_per_coarse: x,
                                    obs_per_fine: scale.obs(25, 100),
                                },
                                if fe_on { FeLevel::Fine } else { FeLevel::None },
                            )
                        } else {
                            (
                                SizeSpec::Balanced {
                                    coarse: 8,
                                    fine_per_coarse: 1,
                                    obs_per_fine: x,
                                },
                                if fe_on { FeLevel::Coarse } else { FeLevel::None },
                            )
                        };
                        let spec = ExperimentSpec {
                            name: format!("{name}__x{x}_k{k1}_fe{fe_on}"),
                            sizes,
                            k1,
                            x_rho: 0.5,
                            disturbances: if fine_null {
                                DisturbanceSpec::FineClustered { rho: 0.1 }
                            } else {
                                DisturbanceSpec::Independent
                            },
                            fixed_effects: fe,
                            replications: scale.reps(2000),
                            engine: if boot {
                                boot_engine(scale.boot(199, 399))
                            } else {
                                EngineSpec::Asymptotic
                            },
                            alpha: 0.05,
                            task: TaskSpec::Rejection {
                                null: if fine_null { LevelChoice::Fine } else { LevelChoice::None },
                                alt: LevelChoice::Coarse,
                                stat: StatKind::MatrixSigma,
                                tails: vec![Tail::TwoSided],
                            },
                            seed,
                        };
                        let xlab = if fine_null { "fine_per_coarse" } else { "N_g" };
                        runs.push(PresetRun {
                            labels: labels(&[
                                (xlab, x.to_string()),
                                ("k1", k1.to_string()),
                                ("fixed_effects", fe_on.to_string()),
                            ]),
                            spec,
                        });
                    }
                }
            }
        }

        // Scalar-statistic nulls, upper-tail and two-sided.
        "fig3a" | "fig3b" | "fig3c" | "fig3d" => {
            let fine_null = matches!(name, "fig3a" | "fig3c");
            let boot = matches!(name, "fig3c" | "fig3d");
            let g_grid: &[usize] = match scale {
                Scale::Desk => &[3, 6, 12],
                Scale::Paper => &[3, 4, 6, 12, 24, 36],
            };
            for &g in g_grid {
                let spec = ExperimentSpec {
                    name: format!("{name}__Gc{g}"),
                    sizes: SizeSpec::Balanced {
                        coarse: g,
                        fine_per_coarse: 4,
                        obs_per_fine: scale.obs(25, 100),
                    },
                    k1: 1,
                    x_rho: 0.5,
                    disturbances: if fine_null {
                        DisturbanceSpec::FineClustered { rho: 0.1 }
                    } else {
                        DisturbanceSpec::Independent
                    },
                    fixed_effects: if fine_null { FeLevel::Fine } else { FeLevel::Coarse },
                    replications: scale.reps(2000),
                    engine: if boot {
                        boot_engine(scale.boot(199, 399))
                    } else {
                        EngineSpec::Asymptotic
                    },
                    alpha: 0.05,
                    task: TaskSpec::Rejection {
                        null: if fine_null { LevelChoice::Fine } else { LevelChoice::None },
                        alt: LevelChoice::Coarse,
                        stat: StatKind::ScalarSigma,
                        tails: vec![Tail::Upper, Tail::TwoSided],
                    },
                    seed,
                };
                runs.push(PresetRun {
                    labels: labels(&[("G_c", g.to_string())]),
                    spec,
                });
            }
        }

        // Power of bootstrap scalar tests against coarse clustering.
        "fig4a" | "fig4b" => {
            let fine_null = name == "fig4a";
            let rho_grid = [0.0, 0.025, 0.05, 0.1];
            let n = scale.obs(2500, 5000);
            if fine_null {
                let gf_grid: &[usize] = match scale {
                    Scale::Desk => &[20, 40],
                    Scale::Paper => &[20, 40, 100],
                };
                for &gf in gf_grid {
                    for &rho in &rho_grid {
                        let spec = ExperimentSpec {
                            name: format!("{name}__Gf{gf}_rho{rho}"),
                            sizes: SizeSpec::Balanced {
                                coarse: 10,
                                fine_per_coarse: gf / 10,
                                obs_per_fine: n / gf,
                            },
                            k1: 1,
                            x_rho: 0.5,
                            disturbances: if rho == 0.0 {
                                DisturbanceSpec::Independent
                            } else {
                                DisturbanceSpec::CoarseClustered { rho }
                            },
                            fixed_effects: FeLevel::Coarse,
                            replications: scale.reps(1000),
                            engine: boot_engine(scale.boot(199, 999)),
                            alpha: 0.05,
                            task: TaskSpec::Rejection {
                                null: LevelChoice::Fine,
                                alt: LevelChoice::Coarse,
                                stat: StatKind::ScalarSigma,
                                tails: vec![Tail::Upper, Tail::TwoSided, Tail::EqualTail],
                            },
                            seed,
                        };
                        runs.push(PresetRun {
                            labels: labels(&[("G_f", gf.to_string()), ("rho", rho.to_string())]),
                            spec,
                        });
                    }
                }
            } else {
                for fe_on in [true, false] {
                    for &rho in &rho_grid {
                        let spec = ExperimentSpec {
                            name: format!("{name}__fe{fe_on}_rho{rho}"),
                            sizes: SizeSpec::Balanced {
                                coarse: 10,
                                fine_per_coarse: 1,
                                obs_per_fine: n / 10,
                            },
                            k1: 1,
                            x_rho: 0.5,
                            disturbances: if rho == 0.0 {
                                DisturbanceSpec::Independent
                            } else {
                                DisturbanceSpec::CoarseClustered { rho }
                            },
                            fixed_effects: if fe_on { FeLevel::Coarse } else { FeLevel::None },
                            replications: scale.reps(1000),
                            engine: boot_engine(scale.boot(199, 999)),
                            alpha: 0.05,
                            task: TaskSpec::Rejection {
                                null: LevelChoice::None,
                                alt: LevelChoice::Coarse,
                                stat: StatKind::ScalarSigma,
                                tails: vec![Tail::Upper, Tail::TwoSided, Tail::EqualTail],
                            },
                            seed,
                        };
                        runs.push(PresetRun {
                            labels: labels(&[
                                ("fixed_effects", fe_on.to_string()),
                                ("rho", rho.to_string()),
                            ]),
                            spec,
                        });
                    }
                }
            }
        }

        // Cluster-size heterogeneity and upper-tail scalar tests of no
        // clustering: (a) null true, (b) coarse clustering with rho = 0.1.
        "fig5a" | "fig5b" => {
            let null_true = name == "fig5a";
            for &delta in &[0.0, 1.0, 2.0, 4.0] {
                for asym in [true, false] {
                    let spec = ExperimentSpec {
                        name: format!("{name}__delta{delta}_{}", if asym { "asym" } else { "boot" }),
                        sizes: SizeSpec::ExponentialCoarse {
                            n: 1000,
                            coarse: 10,
                            delta,
                        },
                        k1: 1,
                        x_rho: 0.5,
                        disturbances: if null_true {
                            DisturbanceSpec::Independent
                        } else {
                            DisturbanceSpec::CoarseClustered { rho: 0.1 }
                        },
                        fixed_effects: FeLevel::Coarse,
                        replications: scale.reps(2000),
                        engine: if asym {
                            EngineSpec::Asymptotic
                        } else {
                            boot_engine(scale.boot(199, 399))
                        },
                        alpha: 0.05,
                        task: TaskSpec::Rejection {
                            null: LevelChoice::None,
                            alt: LevelChoice::Coarse,
                            stat: StatKind::ScalarSigma,
                            tails: vec![Tail::Upper],
                        },
                        seed,
                    };
                    runs.push(PresetRun {
                        labels: labels(&[
                            ("delta", delta.to_string()),
                            ("engine", if asym { "asym".into() } else { "boot".into() }),
                        ]),
                        spec,
                    });
                }
            }
        }

        // Sequential upper-tail bootstrap tests with clustered disturbances
        // at the coarse (a) or fine (b) level.
        "fig6a" | "fig6b" => {
            let coarse_dgp = name == "fig6a";
            let rho_grid = [0.0, 0.08, 0.32];
            for &rho in &rho_grid {
                let spec = ExperimentSpec {
                    name: format!("{name}__rho{rho}"),
                    sizes: SizeSpec::Balanced {
                        coarse: 8,
                        fine_per_coarse: 6,
                        obs_per_fine: scale.obs(20, 50),
                    },
                    k1: 1,
                    x_rho: 0.5,
                    disturbances: if rho == 0.0 {
                        DisturbanceSpec::Independent
                    } else if coarse_dgp {
                        DisturbanceSpec::CoarseClustered { rho }
                    } else {
                        DisturbanceSpec::FineClustered { rho }
                    },
                    fixed_effects: FeLevel::Coarse,
                    replications: scale.reps(1000),
                    engine: boot_engine(scale.boot(199, 999)),
                    alpha: 0.05,
                    task: TaskSpec::Sequential {
                        stat: StatKind::ScalarSigma,
                        tail: Tail::Upper,
                    },
                    seed,
                };
                runs.push(PresetRun {
                    labels: labels(&[("rho", rho.to_string())]),
                    spec,
                });
            }
        }

        // Pre-test standard errors: RMSE (fig7) and interval coverage (fig8)
        // for the same experiments. Panels (a, b) pre-test no clustering;
        // (c, d) pre-test fine clustering with 96 fine clusters; (b, d) have
        // five times the observations of (a, c). Pre-tests are asymptotic
        // upper-tail scalar tests at the 0.05 and 0.20 levels.
        "fig7a" | "fig7b" | "fig7c" | "fig7d" | "fig8a" | "fig8b" | "fig8c" | "fig8d" => {
            let panel = &name[4..];
            let fine_null = matches!(panel, "c" | "d");
            let big = matches!(panel, "b" | "d");
            let per_coarse = scale.obs(200, 400) * if big { 5 } else { 1 };
            let sizes = if fine_null {
                SizeSpec::Balanced {
                    coarse: 12,
                    fine_per_coarse: 8,
                    obs_per_fine: per_coarse / 8,
                }
            } else {
                SizeSpec::Balanced {
                    coarse: 12,
                    fine_per_coarse: 1,
                    obs_per_fine: per_coarse,
                }
            };
            for &eta in &[0.0, 0.25, 0.5, 1.0] {
                let spec = ExperimentSpec {
                    name: format!("{name}__eta{eta}"),
                    sizes: sizes.clone(),
                    k1: 8,
                    x_rho: 0.5,
                    disturbances: DisturbanceSpec::Convex {
                        eta,
                        coarse_rho: 0.25,
                        fine_rho: if fine_null { Some(0.25) } else { None },
                    },
                    fixed_effects: FeLevel::Coarse,
                    replications: scale.reps(500),
                    engine: EngineSpec::Asymptotic,
                    alpha: 0.05,
                    task: TaskSpec::Pretest {
                        null: if fine_null { LevelChoice::Fine } else { LevelChoice::None },
                        pretest_alphas: vec![0.05, 0.20],
                    },
                    seed,
                };
                runs.push(PresetRun {
                    labels: labels(&[("eta", eta.to_string())]),
                    spec,
                });
            }
        }

        other => return Err(Error::UnknownPreset(other.to_string())),
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_and_validates() {
        for name in preset_names() {
            let runs = preset(name, Scale::Desk, 1).unwrap();
            assert!(!runs.is_empty(), "{name} produced no runs");
            for run in &runs {
                // Generating replication 0 exercises the spec validation.
                super::super::gen_sample::<f64>(&run.spec, 0)
                    .unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
    }

    #[test]
    fn unknown_preset_errors() {
        assert!(preset("fig9z", Scale::Desk, 1).is_err());
    }
}
