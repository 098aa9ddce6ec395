//! Wild and wild cluster bootstrap for score-variance statistics.
//!
//! Bootstrap samples are built from the unrestricted residuals with the
//! coefficient vector set to zero: y*ᵇ = v*ᵇ ⊙ û, with one auxiliary weight
//! per cluster of the null (fine) level, or per observation when the null is
//! no clustering. Each replication regresses y*ᵇ on the full design,
//! rebuilds the scores, and recomputes the statistic through the identical
//! code path. Replications are embarrassingly parallel; weights come from
//! counter-based streams keyed by (seed, b), so results do not depend on the
//! worker count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::lstsq::LeastSquares;
use crate::num::Real;
use crate::regress::{Model, ScoreLayout, ScoreView};
use crate::rng::stream_rng;
use crate::sv::{tau_matrix, tau_sigma, StatKind, Tail};

/// Auxiliary weight distribution; all have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDist {
    /// ±1 with equal probability.
    Rademacher,
    /// Two-point distribution of Mammen.
    Mammen,
    /// Six-point distribution of Webb: ±√(3/2), ±1, ±√(1/2), each 1/6.
    Webb6,
}

impl WeightDist {
    pub fn draw<T: Real, R: Rng + ?Sized>(self, rng: &mut R) -> T {
        match self {
            WeightDist::Rademacher => {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            WeightDist::Mammen => {
                // -(√5−1)/2 with probability (√5+1)/(2√5), (√5+1)/2 otherwise.
                let sqrt5 = 5.0f64.sqrt();
                if rng.random::<f64>() < (sqrt5 + 1.0) / (2.0 * sqrt5) {
                    T::of(-(sqrt5 - 1.0) / 2.0)
                } else {
                    T::of((sqrt5 + 1.0) / 2.0)
                }
            }
            WeightDist::Webb6 => {
                const LEVELS: [f64; 6] = [
                    -1.224_744_871_391_589,  // -√(3/2)
                    -1.0,
                    -0.707_106_781_186_547_6, // -√(1/2)
                    0.707_106_781_186_547_6,
                    1.0,
                    1.224_744_871_391_589,
                ];
                T::of(LEVELS[rng.random_range(0..6) as usize])
            }
        }
    }
}

/// Where the auxiliary weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawLevel {
    /// One weight per cluster of the null (fine) level; singletons reduce to
    /// the ordinary wild bootstrap.
    Null,
    /// Force one weight per observation even when the null involves
    /// clustering (ordinary wild bootstrap).
    Observations,
}

/// Bootstrap configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BootstrapPlan {
    /// Number of replications B.
    pub b: usize,
    pub weights: WeightDist,
    pub draw_level: DrawLevel,
    /// Master seed; replication b uses stream b of this seed.
    pub seed: u64,
    /// Default tail for [`bootstrap_test`].
    pub tail: Tail,
}

impl BootstrapPlan {
    pub fn new(b: usize, seed: u64) -> Self {
        Self {
            b,
            weights: WeightDist::Rademacher,
            draw_level: DrawLevel::Null,
            seed,
            tail: Tail::Upper,
        }
    }
}

/// True when (1−α)(B+1) is an integer, the recommended choice of B.
pub fn b_is_recommended(b: usize, alpha: f64) -> bool {
    let v = (1.0 - alpha) * (b as f64 + 1.0);
    (v - v.round()).abs() < 1e-9
}

/// One statistic to evaluate per replication. Several tasks share one set of
/// bootstrap samples.
pub struct BootTask<'a, T: Real> {
    pub z: &'a DMatrix<T>,
    pub layout: &'a ScoreLayout,
    pub k_total: usize,
    pub kind: StatKind,
    pub tail: Tail,
    pub df_factors: bool,
}

/// A bootstrap critical value.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CriticalValue<T> {
    pub alpha: f64,
    pub value: T,
    /// False when (1−α)(B+1) was not an integer and the next-lower order
    /// statistic was used.
    pub exact: bool,
}

/// Result of one bootstrap test.
#[derive(Debug, Clone)]
pub struct BootstrapResult<T: Real> {
    pub kind: StatKind,
    pub tail: Tail,
    /// Observed statistic.
    pub tau: T,
    pub p_value: T,
    /// Exceedance count behind the upper/two-sided p-value.
    pub n_exceed: usize,
    /// Requested number of replications.
    pub b: usize,
    /// Failed (degenerate) replications, dropped from both numerator and
    /// denominator.
    pub n_failed: usize,
    /// Successful replications' statistics, in replication order.
    pub tau_star: Vec<T>,
    /// Critical values at conventional levels, where B permits.
    pub critical_values: Vec<CriticalValue<T>>,
    pub warnings: Vec<String>,
}

/// Weights for replication `b`: one per cluster of `draw`, a deterministic
/// function of (seed, b, cluster index).
pub fn draw_weights<T: Real>(plan: &BootstrapPlan, n_clusters: usize, replication: usize) -> Vec<T> {
    let mut rng = stream_rng(plan.seed, replication as u64);
    (0..n_clusters).map(|_| plan.weights.draw(&mut rng)).collect()
}

/// Exceedance p-value over given draws. Upper tail counts strict
/// exceedances; the two-sided rule applies the same count to |τσ| (the
/// matrix statistic is already two-sided); equal-tail doubles the smaller
/// tail mass, capped at one.
pub fn p_value_from_draws<T: Real>(tau: T, tau_star: &[T], tail: Tail, kind: StatKind) -> T {
    let b = T::of(tau_star.len() as f64);
    match (tail, kind) {
        (Tail::Upper, _) | (Tail::TwoSided, StatKind::MatrixSigma) => {
            let n = tau_star.iter().filter(|&&t| t > tau).count();
            T::of(n as f64) / b
        }
        (Tail::TwoSided, StatKind::ScalarSigma) => {
            let a = tau.abs();
            let n = tau_star.iter().filter(|&&t| t.abs() > a).count();
            T::of(n as f64) / b
        }
        (Tail::EqualTail, _) => {
            let le = tau_star.iter().filter(|&&t| t <= tau).count();
            let ge = tau_star.iter().filter(|&&t| t >= tau).count();
            (T::of(2.0 * le.min(ge) as f64) / b).min(T::one())
        }
    }
}

fn exceed_count<T: Real>(tau: T, tau_star: &[T], tail: Tail, kind: StatKind) -> usize {
    match (tail, kind) {
        (Tail::TwoSided, StatKind::ScalarSigma) => {
            let a = tau.abs();
            tau_star.iter().filter(|&&t| t.abs() > a).count()
        }
        _ => tau_star.iter().filter(|&&t| t > tau).count(),
    }
}

/// Critical value from sorted bootstrap draws: the order statistic at
/// b' = (1−α)(B+1), 1-based, falling back to the next-lower integer when b'
/// is fractional.
pub fn bootstrap_critical_value<T: Real>(tau_star: &[T], alpha: f64) -> Result<CriticalValue<T>> {
    let b = tau_star.len();
    if !(0.0 < alpha && alpha < 1.0) || (b as f64) < 1.0 / alpha - 1.0 {
        return Err(Error::BootstrapTooSmall { b, alpha });
    }
    let target = (1.0 - alpha) * (b as f64 + 1.0);
    let exact = (target - target.round()).abs() < 1e-9;
    let idx = if exact {
        target.round() as usize
    } else {
        target.floor() as usize
    };
    let idx = idx.clamp(1, b);
    let mut sorted = tau_star.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(CriticalValue {
        alpha,
        value: sorted[idx - 1],
        exact,
    })
}

fn stat_value<T: Real>(view: ScoreView<'_, T>, kind: StatKind, df_factors: bool) -> Result<T> {
    match kind {
        StatKind::ScalarSigma => tau_sigma(view, df_factors).map(|s| s.value),
        StatKind::MatrixSigma => tau_matrix(view, df_factors).map(|s| s.value),
    }
}

/// Run the wild (cluster) bootstrap for one or more statistics sharing the
/// same draws.
///
/// `factor` is the factored full design and `residuals` the unrestricted OLS
/// residuals; `draw` is the partition the weights are drawn at.
pub fn run_wild_bootstrap<T: Real>(
    factor: &LeastSquares<T>,
    residuals: &DVector<T>,
    draw: &Partition,
    tasks: &[BootTask<'_, T>],
    plan: &BootstrapPlan,
) -> Result<Vec<BootstrapResult<T>>> {
    let n = residuals.len();
    if draw.n_obs() != n {
        return Err(Error::PartitionLength(draw.n_obs(), n));
    }
    if plan.b == 0 || tasks.is_empty() {
        return Err(Error::InvalidSpec(
            "bootstrap needs B >= 1 and at least one statistic".into(),
        ));
    }
    for t in tasks {
        if t.kind == StatKind::MatrixSigma && t.tail == Tail::EqualTail {
            return Err(Error::InvalidTail(
                "equal-tail p-values are only defined for the scalar statistic".into(),
            ));
        }
    }

    // Observed statistics through the very code path the replications use.
    let observed: Vec<T> = tasks
        .iter()
        .map(|t| {
            let mut scores = DMatrix::zeros(t.layout.n_fine(), t.z.ncols());
            t.layout.fill_scores(t.z, residuals, &mut scores);
            let view = ScoreView {
                scores: &scores,
                offsets: t.layout.offsets(),
                k_total: t.k_total,
                n_obs: n,
            };
            stat_value(view, t.kind, t.df_factors)
        })
        .collect::<Result<_>>()?;

    let k = factor.k();
    let n_tasks = tasks.len();

    struct Scratch<T: Real> {
        y_star: DVector<T>,
        u_star: DVector<T>,
        coeff: DVector<T>,
        scores: Vec<DMatrix<T>>,
    }

    let draws: Vec<Vec<Option<T>>> = (0..plan.b)
        .into_par_iter()
        .map_init(
            || Scratch {
                y_star: DVector::zeros(n),
                u_star: DVector::zeros(n),
                coeff: DVector::zeros(k),
                scores: tasks
                    .iter()
                    .map(|t| DMatrix::zeros(t.layout.n_fine(), t.z.ncols()))
                    .collect(),
            },
            |s, b| {
                let w: Vec<T> = draw_weights(plan, draw.n_clusters(), b);
                for i in 0..n {
                    s.y_star[i] = w[draw.assignment()[i]] * residuals[i];
                }
                factor.residualize_into(&s.y_star, &mut s.coeff, &mut s.u_star);
                (0..n_tasks)
                    .map(|ti| {
                        let t = &tasks[ti];
                        t.layout.fill_scores(t.z, &s.u_star, &mut s.scores[ti]);
                        let view = ScoreView {
                            scores: &s.scores[ti],
                            offsets: t.layout.offsets(),
                            k_total: t.k_total,
                            n_obs: n,
                        };
                        stat_value(view, t.kind, t.df_factors).ok()
                    })
                    .collect()
            },
        )
        .collect();

    let mut results = Vec::with_capacity(n_tasks);
    for (ti, task) in tasks.iter().enumerate() {
        let tau = observed[ti];
        let tau_star: Vec<T> = draws.iter().filter_map(|row| row[ti]).collect();
        let n_failed = plan.b - tau_star.len();
        if n_failed * 100 > plan.b {
            return Err(Error::BootstrapFailures {
                failed: n_failed,
                total: plan.b,
            });
        }
        let mut warnings = Vec::new();
        if plan.weights == WeightDist::Rademacher && draw.n_clusters() <= 12 {
            warnings.push(format!(
                "only 2^{} distinct Rademacher draw vectors exist at this level; \
                 consider webb6 weights",
                draw.n_clusters()
            ));
        }
        if n_failed > 0 {
            warnings.push(format!(
                "{n_failed} of {} bootstrap replications were degenerate and were dropped",
                plan.b
            ));
        }
        let transformed: Vec<T> = match (task.tail, task.kind) {
            (Tail::TwoSided, StatKind::ScalarSigma) => {
                tau_star.iter().map(|t| t.abs()).collect()
            }
            _ => tau_star.clone(),
        };
        let critical_values = if task.tail == Tail::EqualTail {
            Vec::new()
        } else {
            [0.10, 0.05, 0.01]
                .iter()
                .filter_map(|&a| bootstrap_critical_value(&transformed, a).ok())
                .collect()
        };
        results.push(BootstrapResult {
            kind: task.kind,
            tail: task.tail,
            tau,
            p_value: p_value_from_draws(tau, &tau_star, task.tail, task.kind),
            n_exceed: exceed_count(tau, &tau_star, task.tail, task.kind),
            b: plan.b,
            n_failed,
            tau_star,
            critical_values,
            warnings,
        });
    }
    Ok(results)
}

/// Bootstrap test of fine against coarse clustering for one statistic.
pub fn bootstrap_test<T: Real>(
    model: &Model<T>,
    fine: &Partition,
    coarse: &Partition,
    kind: StatKind,
    plan: &BootstrapPlan,
    df_factors: bool,
) -> Result<BootstrapResult<T>> {
    let layout = ScoreLayout::new(fine, coarse)?;
    let singles;
    let draw = match plan.draw_level {
        DrawLevel::Null => fine,
        DrawLevel::Observations => {
            singles = Partition::singletons("obs", fine.n_obs());
            &singles
        }
    };
    let task = BootTask {
        z: &model.design.z,
        layout: &layout,
        k_total: model.design.k_total,
        kind,
        tail: plan.tail,
        df_factors,
    };
    let mut out = run_wild_bootstrap(model.factor(), &model.fit.residuals, draw, &[task], plan)?;
    Ok(out.pop().expect("one task in, one result out"))
}
