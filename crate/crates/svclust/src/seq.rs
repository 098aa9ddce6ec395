//! Sequential selection of the clustering level.
//!
//! Tests level m against level m+1 from the finest level upward and selects
//! the first level that is not rejected. Intersection-union logic means the
//! procedure needs no multiplicity correction.

use crate::boot::{bootstrap_test, BootstrapPlan};
use crate::data::{ClusterNesting, Partition};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::regress::{build_scores, Model};
use crate::rng::{derive_seed, tag};
use crate::sv::{asym_pvalue, tau_matrix, tau_sigma, StatKind, SvStatistic, Tail};

/// How p-values are computed.
#[derive(Debug, Clone)]
pub enum Engine {
    Asymptotic,
    /// The plan acts as a template; consumers re-derive its seed per step or
    /// per replication as documented on each function.
    Bootstrap(BootstrapPlan),
}

impl Engine {
    pub fn describe(&self) -> String {
        match self {
            Engine::Asymptotic => "asymptotic".to_string(),
            Engine::Bootstrap(p) => format!("bootstrap(B={}, {:?})", p.b, p.weights),
        }
    }
}

/// Statistic and p-value for one fine-vs-coarse test.
#[derive(Debug, Clone)]
pub struct TestOutcome<T: Real> {
    pub statistic: SvStatistic<T>,
    pub p_value: T,
    pub bootstrap: Option<crate::boot::BootstrapResult<T>>,
}

/// Run a single test of `fine` against `coarse` with the given engine.
pub fn single_test<T: Real>(
    model: &Model<T>,
    fine: &Partition,
    coarse: &Partition,
    kind: StatKind,
    tail: Tail,
    engine: &Engine,
    df_factors: bool,
) -> Result<TestOutcome<T>> {
    match engine {
        Engine::Asymptotic => {
            let scores = build_scores(&model.design, &model.fit.residuals, fine, coarse)?;
            let stat = match kind {
                StatKind::ScalarSigma => tau_sigma(scores.view(), df_factors)?,
                StatKind::MatrixSigma => tau_matrix(scores.view(), df_factors)?,
            };
            let p = asym_pvalue(&stat, tail)?;
            Ok(TestOutcome {
                statistic: stat,
                p_value: p,
                bootstrap: None,
            })
        }
        Engine::Bootstrap(plan) => {
            let mut plan = plan.clone();
            plan.tail = tail;
            let boot = bootstrap_test(model, fine, coarse, kind, &plan, df_factors)?;
            let scores = build_scores(&model.design, &model.fit.residuals, fine, coarse)?;
            let stat = match kind {
                StatKind::ScalarSigma => tau_sigma(scores.view(), df_factors)?,
                StatKind::MatrixSigma => tau_matrix(scores.view(), df_factors)?,
            };
            Ok(TestOutcome {
                statistic: stat,
                p_value: boot.p_value,
                bootstrap: Some(boot),
            })
        }
    }
}

/// One step of the sequential trail.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord<T> {
    /// Step index m: level m tested against level m+1.
    pub m: usize,
    pub fine: String,
    pub coarse: String,
    pub statistic: T,
    pub p_value: T,
    pub rejected: bool,
}

/// Outcome of the sequential procedure.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SequentialResult<T> {
    /// Selected level index into the nesting chain.
    pub m_hat: usize,
    pub chosen_level: String,
    pub alpha: f64,
    pub kind: StatKind,
    pub tail: Tail,
    pub engine: String,
    pub per_step: Vec<StepRecord<T>>,
}

/// The min-non-rejected characterization of the selected level: the smallest
/// step whose p-value does not reject, or `n_steps` when every step rejects.
pub fn m_hat_from_trail(p_values: &[f64], alpha: f64, n_steps: usize) -> usize {
    for (m, &p) in p_values.iter().enumerate() {
        if !(p < alpha) {
            return m;
        }
    }
    n_steps
}

fn sequential_core<T: Real, F>(
    nesting: &ClusterNesting,
    alpha: f64,
    mut test_step: F,
) -> Result<(usize, Vec<StepRecord<T>>)>
where
    F: FnMut(usize, &Partition, &Partition) -> Result<(T, T)>,
{
    let p = nesting.n_steps();
    if p < 1 {
        return Err(Error::InvalidSpec(
            "sequential selection needs at least two candidate levels".into(),
        ));
    }
    let mut trail: Vec<StepRecord<T>> = Vec::new();
    let mut m_hat = p;
    for m in 0..p {
        let fine = nesting.level(m);
        let coarse = nesting.level(m + 1);
        let (stat, pv) = test_step(m, fine, coarse).map_err(|e| Error::SequentialAborted {
            step: m,
            fine: fine.name().to_string(),
            coarse: coarse.name().to_string(),
            completed: trail.len(),
            source: Box::new(e),
        })?;
        let rejected = pv.to64() < alpha;
        trail.push(StepRecord {
            m,
            fine: fine.name().to_string(),
            coarse: coarse.name().to_string(),
            statistic: stat,
            p_value: pv,
            rejected,
        });
        if !rejected {
            m_hat = m;
            break;
        }
    }
    // The loop must agree with the min-non-rejected characterization.
    let ps: Vec<f64> = trail.iter().map(|s| s.p_value.to64()).collect();
    assert_eq!(m_hat, m_hat_from_trail(&ps, alpha, p));
    Ok((m_hat, trail))
}

/// Select the clustering level by sequential testing over a nested chain.
///
/// With a bootstrap engine, step m uses a seed derived from (plan seed, m):
/// each step has a different null level, hence its own bootstrap DGP, and
/// draws are not shared across steps.
pub fn sequential_select<T: Real>(
    model: &Model<T>,
    nesting: &ClusterNesting,
    kind: StatKind,
    tail: Tail,
    alpha: f64,
    engine: &Engine,
    df_factors: bool,
) -> Result<SequentialResult<T>> {
    let (m_hat, per_step) = sequential_core(nesting, alpha, |m, fine, coarse| {
        let step_engine = match engine {
            Engine::Asymptotic => Engine::Asymptotic,
            Engine::Bootstrap(plan) => {
                let mut plan = plan.clone();
                plan.seed = derive_seed(derive_seed(plan.seed, tag::SEQ_STEP), m as u64);
                Engine::Bootstrap(plan)
            }
        };
        let out = single_test(model, fine, coarse, kind, tail, &step_engine, df_factors)?;
        Ok((out.statistic.value, out.p_value))
    })?;
    Ok(SequentialResult {
        m_hat,
        chosen_level: nesting.level(m_hat).name().to_string(),
        alpha,
        kind,
        tail,
        engine: engine.describe(),
        per_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p: usize) -> ClusterNesting {
        // 8 observations; levels: singletons, pairs, quads, all — take p+1.
        let n = 8;
        let mut levels = vec![Partition::singletons("none", n)];
        let sizes = [2usize, 4, 8];
        let names = ["pairs", "quads", "all"];
        for i in 0..p {
            let labels: Vec<String> = (0..n).map(|o| format!("{}", o / sizes[i])).collect();
            levels.push(Partition::from_labels(names[i], &labels));
        }
        ClusterNesting::new(levels).unwrap()
    }

    fn scripted(
        nesting: &ClusterNesting,
        ps: Vec<f64>,
        alpha: f64,
    ) -> (usize, Vec<StepRecord<f64>>) {
        sequential_core(nesting, alpha, |m, _, _| Ok((0.0f64, ps[m]))).unwrap()
    }

    #[test]
    fn stops_at_first_non_rejection() {
        let nesting = chain(2);
        let (m_hat, trail) = scripted(&nesting, vec![0.001, 0.30], 0.05);
        assert_eq!(m_hat, 1);
        assert_eq!(trail.len(), 2);
        assert!(trail[0].rejected);
        assert!(!trail[1].rejected);
    }

    #[test]
    fn exhaustion_selects_coarsest() {
        let nesting = chain(2);
        let (m_hat, trail) = scripted(&nesting, vec![0.01, 0.02], 0.05);
        assert_eq!(m_hat, 2);
        assert_eq!(trail.len(), 2);
        assert!(trail.iter().all(|s| s.rejected));
    }

    #[test]
    fn immediate_non_rejection_keeps_finest() {
        let nesting = chain(2);
        let (m_hat, trail) = scripted(&nesting, vec![0.8, 0.0], 0.05);
        assert_eq!(m_hat, 0);
        assert_eq!(trail.len(), 1);
    }

    #[test]
    fn alpha_changes_the_selection() {
        let nesting = chain(2);
        // p-value between 0.05 and 0.20 at step 0.
        let (m_low, _) = scripted(&nesting, vec![0.12, 0.7], 0.05);
        let (m_high, _) = scripted(&nesting, vec![0.12, 0.7], 0.20);
        assert_eq!(m_low, 0);
        assert_eq!(m_high, 1);
    }

    #[test]
    fn characterization_matches_loop_by_construction() {
        assert_eq!(m_hat_from_trail(&[0.001, 0.3], 0.05, 2), 1);
        assert_eq!(m_hat_from_trail(&[0.01, 0.02], 0.05, 2), 2);
        assert_eq!(m_hat_from_trail(&[0.5], 0.05, 3), 0);
        // Boundary: p exactly alpha does not reject.
        assert_eq!(m_hat_from_trail(&[0.05, 0.9], 0.05, 2), 0);
    }

    #[test]
    fn errors_carry_the_partial_trail_context() {
        let nesting = chain(2);
        let err = sequential_core::<f64, _>(&nesting, 0.05, |m, _, _| {
            if m == 1 {
                Err(Error::DegenerateVariance)
            } else {
                Ok((1.0, 0.001))
            }
        })
        .unwrap_err();
        match err {
            Error::SequentialAborted {
                step, completed, ..
            } => {
                assert_eq!(step, 1);
                assert_eq!(completed, 1);
            }
            other => panic!("expected SequentialAborted, got {other:?}"),
        }
    }
}
