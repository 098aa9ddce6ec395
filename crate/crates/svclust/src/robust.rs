//! Robust variance estimators for the coefficients of interest and the
//! pre-test confidence interval.
//!
//! CV1 is the degrees-of-freedom-corrected sandwich on cluster score sums;
//! CV3 is the delete-one-cluster jackknife centered at the full-sample
//! estimate; HC1/HC3 are their singleton-cluster counterparts. All variance
//! matrices are for the k1 coefficients of interest, using the partialed
//! sandwich (Z'Z)⁻¹ · filling · (Z'Z)⁻¹, which equals the corresponding
//! block of the full-model sandwich.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::prob::normal_quantile;
use crate::regress::{delete_cluster_fit, Model, ScoreLayout};
use crate::seq::{single_test, Engine};
use crate::sv::{StatKind, Tail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SeEstimator {
    Hc1,
    Hc3,
    Cv1,
    Cv3,
}

/// A robust variance estimate for the coefficients of interest.
#[derive(Debug, Clone)]
pub struct RobustVariance<T: Real> {
    pub estimator: SeEstimator,
    /// Clustering level, `None` for the heteroskedasticity-robust variants.
    pub level: Option<String>,
    pub vcov: DMatrix<T>,
    pub se: DVector<T>,
}

fn finish<T: Real>(
    estimator: SeEstimator,
    level: Option<String>,
    vcov: DMatrix<T>,
) -> RobustVariance<T> {
    let se = DVector::from_fn(vcov.nrows(), |i, _| vcov[(i, i)].max(T::zero()).sqrt());
    RobustVariance {
        estimator,
        level,
        vcov,
        se,
    }
}

/// CV1: (Z'Z)⁻¹ [m_c Σ_g ŝ_g ŝ_g'] (Z'Z)⁻¹ with scores summed per cluster of
/// `level` and m_c = G/(G−1) · (N−1)/(N−k).
pub fn cv1<T: Real>(model: &Model<T>, level: &Partition) -> Result<RobustVariance<T>> {
    let g = level.n_clusters();
    if g < 2 {
        return Err(Error::TooFewClusters(level.name().to_string(), g, 2));
    }
    let n = model.data.n();
    let k = model.design.k_total;
    let k1 = model.k1();
    let layout = ScoreLayout::new(level, level)?;
    let mut scores = DMatrix::zeros(layout.n_fine(), k1);
    layout.fill_scores(&model.design.z, &model.fit.residuals, &mut scores);
    let mut meat = DMatrix::zeros(k1, k1);
    for h in 0..scores.nrows() {
        let row = scores.row(h);
        for i in 0..k1 {
            for j in 0..k1 {
                meat[(i, j)] += row[i] * row[j];
            }
        }
    }
    let mc = T::of(g as f64 / (g as f64 - 1.0)) * T::of((n as f64 - 1.0) / (n as f64 - k as f64));
    meat *= mc;
    let vcov = model.z_xtx_inv() * meat * model.z_xtx_inv();
    let estimator = if level.is_singletons() {
        SeEstimator::Hc1
    } else {
        SeEstimator::Cv1
    };
    let level_name = (!level.is_singletons()).then(|| level.name().to_string());
    Ok(finish(estimator, level_name, vcov))
}

/// HC1: CV1 with singleton clusters.
pub fn hc1<T: Real>(model: &Model<T>) -> Result<RobustVariance<T>> {
    let singles = Partition::singletons("none", model.data.n());
    cv1(model, &singles)
}

/// HC3: (Z'Z)⁻¹ [Σ_i (û_i/(1−h_i))² z_i z_i'] (Z'Z)⁻¹ with h_i the leverage
/// of the full design. Equals the delete-one-observation jackknife around
/// the full-sample estimate.
pub fn hc3<T: Real>(model: &Model<T>) -> Result<RobustVariance<T>> {
    let n = model.data.n();
    let k1 = model.k1();
    let z = &model.design.z;
    let mut meat = DMatrix::zeros(k1, k1);
    for i in 0..n {
        let h = model.fit.leverage[i];
        let denom = T::one() - h;
        if denom <= T::zero() {
            return Err(Error::LeverageOne { obs: i });
        }
        let w = model.fit.residuals[i] / denom;
        let w2 = w * w;
        for a in 0..k1 {
            for b in 0..k1 {
                meat[(a, b)] += w2 * z[(i, a)] * z[(i, b)];
            }
        }
    }
    let vcov = model.z_xtx_inv() * meat * model.z_xtx_inv();
    Ok(finish(SeEstimator::Hc3, None, vcov))
}

/// CV3: ((G−1)/G) Σ_g (β̂⁽ᵍ⁾ − β̂)(β̂⁽ᵍ⁾ − β̂)' on the k1 block, where β̂⁽ᵍ⁾
/// refits OLS without cluster g. Any infeasible refit is a hard error.
pub fn cv3<T: Real>(model: &Model<T>, level: &Partition) -> Result<RobustVariance<T>> {
    let g = level.n_clusters();
    if g < 2 {
        return Err(Error::TooFewClusters(level.name().to_string(), g, 2));
    }
    let k1 = model.k1();
    let betas: Vec<DVector<T>> = (0..g)
        .into_par_iter()
        .map(|omit| delete_cluster_fit(&model.data, level, omit))
        .collect::<Result<_>>()?;
    let mut vcov = DMatrix::zeros(k1, k1);
    for beta_g in &betas {
        let d = beta_g.rows(0, k1) - model.fit.beta.rows(0, k1);
        for a in 0..k1 {
            for b in 0..k1 {
                vcov[(a, b)] += d[a] * d[b];
            }
        }
    }
    vcov *= T::of((g as f64 - 1.0) / g as f64);
    Ok(finish(SeEstimator::Cv3, Some(level.name().to_string()), vcov))
}

/// Pre-test confidence interval for a single coefficient of interest.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PretestInterval<T> {
    /// Name of the level whose standard error was used.
    pub chosen_level: String,
    pub chose_coarse: bool,
    pub pretest_p: T,
    pub alpha_pretest: f64,
    pub estimate: T,
    pub se: T,
    pub lower: T,
    pub upper: T,
    /// Interval level (default 0.05 for a 95% interval); standard-normal
    /// critical value.
    pub interval_alpha: f64,
}

/// Choose the clustering level for the standard error of β₁ by a scalar SV
/// pre-test of `fine` against `coarse`, then form the interval at the chosen
/// level: CV3 at the coarse level on rejection, CV3 at the fine level (HC3
/// when fine is the singleton level) otherwise.
pub fn pretest_se<T: Real>(
    model: &Model<T>,
    fine: &Partition,
    coarse: &Partition,
    alpha_pretest: f64,
    tail: Tail,
    engine: &Engine,
    interval_alpha: f64,
) -> Result<PretestInterval<T>> {
    if model.k1() != 1 {
        return Err(Error::ScalarNeedsSingleRegressor(model.k1()));
    }
    let out = single_test(model, fine, coarse, StatKind::ScalarSigma, tail, engine, false)?;
    let reject = out.p_value.to64() < alpha_pretest;
    let rv = if reject {
        cv3(model, coarse)?
    } else if fine.is_singletons() {
        hc3(model)?
    } else {
        cv3(model, fine)?
    };
    let beta1 = model.fit.beta[0];
    let se = rv.se[0];
    let zcrit = normal_quantile(T::of(1.0 - interval_alpha / 2.0));
    Ok(PretestInterval {
        chosen_level: if reject {
            coarse.name().to_string()
        } else {
            fine.name().to_string()
        },
        chose_coarse: reject,
        pretest_p: out.p_value,
        alpha_pretest,
        estimate: beta1,
        se,
        lower: beta1 - zcrit * se,
        upper: beta1 + zcrit * se,
        interval_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RegressionData;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn model_with(n: usize, k1: usize, seed: u64) -> Model<f64> {
        let mut r = crate::rng::stream_rng(seed, 0);
        let x1 = DMatrix::from_fn(n, k1, |_, _| f64::standard_normal(&mut r));
        let x2 = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_fn(n, |_, _| f64::standard_normal(&mut r));
        Model::fit(RegressionData::new(y, x1, x2).unwrap()).unwrap()
    }

    fn labels(n: usize, g: usize) -> Vec<String> {
        (0..n).map(|i| format!("{}", i % g)).collect()
    }

    #[test]
    fn cv1_with_singletons_equals_hc1() {
        let model = model_with(30, 2, 5);
        let singles = Partition::singletons("none", 30);
        let a = cv1(&model, &singles).unwrap();
        let b = hc1(&model).unwrap();
        assert_eq!(a.vcov, b.vcov);
        assert_eq!(a.estimator, SeEstimator::Hc1);
    }

    #[test]
    fn cv1_matches_direct_formula() {
        let model = model_with(24, 1, 6);
        let level = Partition::from_labels("g", &labels(24, 3));
        let rv = cv1(&model, &level).unwrap();

        let z = &model.design.z;
        let u = &model.fit.residuals;
        let mut meat = 0.0;
        for g in 0..3 {
            let mut s = 0.0;
            for &i in level.members(g) {
                s += z[(i, 0)] * u[i];
            }
            meat += s * s;
        }
        let (n, k) = (24.0, 2.0);
        let mc = 3.0 / 2.0 * (n - 1.0) / (n - k);
        let ztz: f64 = z.column(0).norm_squared();
        let want = mc * meat / (ztz * ztz);
        assert_relative_eq!(rv.vcov[(0, 0)], want, epsilon = 1e-12);
    }

    #[test]
    fn zero_residuals_give_zero_variance() {
        // y exactly in the column span: residuals are zero.
        let x1 = DMatrix::from_column_slice(6, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x2 = DMatrix::from_element(6, 1, 1.0);
        let y = &x1 * 2.0;
        let y = DVector::from_column_slice(y.as_slice());
        let model = Model::fit(RegressionData::new(y, x1, x2).unwrap()).unwrap();
        let level = Partition::from_labels("g", &labels(6, 2));
        assert!(cv1(&model, &level).unwrap().vcov[(0, 0)].abs() < 1e-25);
        assert!(hc3(&model).unwrap().vcov[(0, 0)].abs() < 1e-25);
    }

    #[test]
    fn hc3_matches_delete_one_observation_jackknife() {
        let model = model_with(40, 2, 7);
        let rv = hc3(&model).unwrap();
        let singles = Partition::singletons("none", 40);
        let mut want = DMatrix::zeros(2, 2);
        for i in 0..40 {
            let beta_i = delete_cluster_fit(&model.data, &singles, i).unwrap();
            let d = beta_i.rows(0, 2) - model.fit.beta.rows(0, 2);
            for a in 0..2 {
                for b in 0..2 {
                    want[(a, b)] += d[a] * d[b];
                }
            }
        }
        assert_relative_eq!(rv.vcov, want, epsilon = 1e-10);
    }

    #[test]
    fn hc3_equal_leverage_relation() {
        // Pure intercept design: every observation has leverage k/N = 1/N.
        let n = 12;
        let x1 = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_fn(n, |i, _| (i as f64) - 5.5);
        let model = Model::fit(RegressionData::new(y, x1, DMatrix::zeros(n, 0)).unwrap()).unwrap();
        let h = 1.0 / n as f64;
        let hc3v = hc3(&model).unwrap().vcov[(0, 0)];
        let hc1v = hc1(&model).unwrap().vcov[(0, 0)];
        let want = hc1v * (n as f64 - 1.0) / n as f64 / ((1.0 - h) * (1.0 - h));
        assert_relative_eq!(hc3v, want, epsilon = 1e-12);
    }

    #[test]
    fn cv3_identical_clusters_zero_variance() {
        let x1 = DMatrix::from_column_slice(8, 1, &[0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
        let x2 = DMatrix::from_element(8, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.5, 2.0, 4.0, 1.0, 2.5, 2.0, 4.0]);
        let model = Model::fit(RegressionData::new(y, x1, x2).unwrap()).unwrap();
        let level = Partition::from_labels("g", &["a", "a", "a", "a", "b", "b", "b", "b"]);
        let rv = cv3(&model, &level).unwrap();
        assert!(rv.vcov[(0, 0)].abs() < 1e-20);
    }

    #[test]
    fn cv3_with_singletons_is_observation_jackknife() {
        let model = model_with(25, 1, 9);
        let singles = Partition::singletons("none", 25);
        let rv = cv3(&model, &singles).unwrap();
        // Observation jackknife equals ((N-1)/N) * HC3 filling identity.
        let hc3v = hc3(&model).unwrap();
        let want = hc3v.vcov[(0, 0)] * 24.0 / 25.0;
        assert_relative_eq!(rv.vcov[(0, 0)], want, epsilon = 1e-10);
    }

    #[test]
    fn cv3_matches_refit_oracle() {
        let model = model_with(30, 2, 11);
        let level = Partition::from_labels("g", &labels(30, 5));
        let rv = cv3(&model, &level).unwrap();
        let mut want = DMatrix::zeros(2, 2);
        for g in 0..5 {
            let keep: Vec<usize> = (0..30).filter(|i| i % 5 != g).collect();
            let xs = model.data.design().select_rows(keep.iter());
            let ys = model.data.y.select_rows(keep.iter());
            let beta = xs.tr_mul(&xs).cholesky().unwrap().solve(&xs.tr_mul(&ys));
            let d = beta.rows(0, 2) - model.fit.beta.rows(0, 2);
            for a in 0..2 {
                for b in 0..2 {
                    want[(a, b)] += d[a] * d[b];
                }
            }
        }
        want *= 4.0 / 5.0;
        assert_relative_eq!(rv.vcov, want, epsilon = 1e-10);
    }

    #[test]
    fn vcov_outputs_symmetric_psd() {
        let model = model_with(36, 3, 13);
        let level = Partition::from_labels("g", &labels(36, 4));
        for rv in [
            cv1(&model, &level).unwrap(),
            hc3(&model).unwrap(),
            cv3(&model, &level).unwrap(),
        ] {
            let v = &rv.vcov;
            let asym = (v - v.transpose()).amax();
            assert!(asym <= 1e-14 * v.amax().max(1.0));
            let eig = v.clone().symmetric_eigen();
            let min = eig.eigenvalues.min();
            assert!(min >= -1e-10 * v.trace());
        }
    }

    #[test]
    fn pretest_decision_rule() {
        let model = model_with(40, 1, 15);
        let fine = Partition::singletons("none", 40);
        let coarse = Partition::from_labels("g", &labels(40, 4));

        // Rigged engines via extreme alpha choices exercise both branches.
        let out = pretest_se(
            &model,
            &fine,
            &coarse,
            1.0 - 1e-12,
            Tail::Upper,
            &Engine::Asymptotic,
            0.05,
        )
        .unwrap();
        assert!(out.chose_coarse);
        assert_eq!(out.chosen_level, "g");

        let out = pretest_se(
            &model,
            &fine,
            &coarse,
            0.0,
            Tail::Upper,
            &Engine::Asymptotic,
            0.05,
        )
        .unwrap();
        assert!(!out.chose_coarse);
        assert_eq!(out.chosen_level, "none");
        assert!(out.lower < out.upper);

        // The interval equals exactly one of the two candidates.
        let se_fine = hc3(&model).unwrap().se[0];
        assert_relative_eq!(out.se, se_fine, epsilon = 1e-14);
    }
}
