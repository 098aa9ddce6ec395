//! Score-variance statistics: the contrast between coarse- and fine-level
//! score variance estimates, its variance estimator, the scalar and matrix
//! studentized statistics, and asymptotic p-values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::{CompensatedSum, Real};
use crate::prob::{chi2_sf, normal_sf};
use crate::regress::ScoreView;

/// Which statistic a test is based on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StatKind {
    /// Scalar statistic for a single coefficient; standard normal reference.
    #[serde(rename = "sigma")]
    ScalarSigma,
    /// Wald statistic on all unique contrast elements; chi-square reference
    /// with k1(k1+1)/2 degrees of freedom.
    #[serde(rename = "Sigma")]
    MatrixSigma,
}

/// Tail convention for p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Upper,
    TwoSided,
    /// Bootstrap-only: twice the smaller tail mass, capped at one.
    EqualTail,
}

/// Which clustering level a variance estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceLevel {
    Fine,
    Coarse,
}

/// A computed score-variance statistic.
#[derive(Debug, Clone)]
pub struct SvStatistic<T: Real> {
    pub kind: StatKind,
    pub value: T,
    /// The contrast: length 1 (scalar) or q = k1(k1+1)/2 (vech).
    pub theta: DVector<T>,
    pub var_theta: DMatrix<T>,
    /// Degrees of freedom of the matrix statistic.
    pub dof: usize,
    /// Whether the small-sample factors were applied to the contrast.
    pub df_factors: bool,
}

/// Small-sample factor G/(G−1) · (N−1)/(N−k).
fn df_factor<T: Real>(groups: usize, n: usize, k: usize) -> T {
    let g = T::of(groups as f64);
    let n = T::of(n as f64);
    let k = T::of(k as f64);
    g / (g - T::one()) * (n - T::one()) / (n - k)
}

fn raw_sigma<T: Real>(s: ScoreView<'_, T>, level: VarianceLevel) -> DMatrix<T> {
    let k = s.k1();
    let mut out = DMatrix::zeros(k, k);
    match level {
        VarianceLevel::Fine => {
            for h in 0..s.n_fine() {
                let row = s.scores.row(h);
                for i in 0..k {
                    for j in 0..=i {
                        out[(i, j)] += row[i] * row[j];
                    }
                }
            }
        }
        VarianceLevel::Coarse => {
            let mut sum = DVector::zeros(k);
            for g in 0..s.n_coarse() {
                sum.fill(T::zero());
                for h in s.coarse_rows(g) {
                    for i in 0..k {
                        sum[i] += s.scores[(h, i)];
                    }
                }
                for i in 0..k {
                    for j in 0..=i {
                        out[(i, j)] += sum[i] * sum[j];
                    }
                }
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            out[(j, i)] = out[(i, j)];
        }
    }
    out
}

/// Estimated score-variance matrix at the given level.
///
/// Coarse: m_c Σ_g ŝ_g ŝ_g'. Fine: m_f Σ_g Σ_h ŝ_gh ŝ_gh'. The factors are 1
/// when `apply_df` is off. With singleton fine clusters the fine form is the
/// heteroskedasticity-consistent estimator.
pub fn sigma_hat<T: Real>(
    s: ScoreView<'_, T>,
    level: VarianceLevel,
    apply_df: bool,
) -> Result<DMatrix<T>> {
    let mut out = raw_sigma(s, level);
    if apply_df {
        let groups = match level {
            VarianceLevel::Fine => s.n_fine(),
            VarianceLevel::Coarse => s.n_coarse(),
        };
        if groups < 2 {
            return Err(Error::TooFewClusters(
                format!("{level:?}"),
                groups,
                2,
            ));
        }
        out *= df_factor::<T>(groups, s.n_obs, s.k_total);
    }
    Ok(out)
}

/// Index pairs (i, j), i >= j, of the lower triangle stacked by columns.
pub fn vech_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        for i in j..k {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Half-vectorization of a symmetric matrix.
pub fn vech<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let pairs = vech_pairs(m.nrows());
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| m[(i, j)]))
}

/// The elimination matrix H_k with H_k · vec(S) = vech(S) for symmetric S,
/// with vec stacking columns.
pub fn elimination_matrix<T: Real>(k: usize) -> DMatrix<T> {
    let pairs = vech_pairs(k);
    let mut h = DMatrix::zeros(pairs.len(), k * k);
    for (r, &(i, j)) in pairs.iter().enumerate() {
        h[(r, j * k + i)] = T::one();
    }
    h
}

/// The contrast θ̂: σ̂²c − σ̂²f for k1 = 1, vech(Σ̂c − Σ̂f) otherwise.
///
/// With `apply_df` off, the scalar case equals the sum of cross-products of
/// fine-cluster scores within coarse clusters.
pub fn theta_contrast<T: Real>(s: ScoreView<'_, T>, apply_df: bool) -> Result<DVector<T>> {
    let coarse = sigma_hat(s, VarianceLevel::Coarse, apply_df)?;
    let fine = sigma_hat(s, VarianceLevel::Fine, apply_df)?;
    Ok(vech(&(coarse - fine)))
}

/// Variance estimator of the (unscaled) contrast.
///
/// Entry (r, c), with vech pairs (i_r, j_r) and (i_c, j_c), accumulates
/// 2 Σ_g [A_g(i_r,i_c) A_g(j_r,j_c) − Σ_h ŝ(i_r)ŝ(i_c) ŝ(j_r)ŝ(j_c)] where
/// A_g = Σ_h ŝ_gh ŝ_gh'. For k1 = 1 this is the familiar
/// 2 Σ_g [(Σ_h ŝ²_gh)² − Σ_h ŝ⁴_gh]. Small-sample factors are never applied
/// here. Fourth-power sums use compensated accumulation.
///
/// Errors with [`Error::DegenerateVariance`] when the result is exactly zero,
/// which happens iff every coarse cluster has at most one nonzero fine score.
pub fn var_theta<T: Real>(s: ScoreView<'_, T>) -> Result<DMatrix<T>> {
    let k = s.k1();
    let pairs = vech_pairs(k);
    let q = pairs.len();
    let cols: Vec<&[T]> = (0..k).map(|j| s.scores.column(j).as_slice()).collect();

    let mut acc = vec![CompensatedSum::<T>::new(); q * q];
    let mut a = DMatrix::<T>::zeros(k, k);
    for g in 0..s.n_coarse() {
        let rows = s.coarse_rows(g);
        a.fill(T::zero());
        for h in rows.clone() {
            for i in 0..k {
                for j in 0..=i {
                    a[(i, j)] += cols[i][h] * cols[j][h];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                a[(j, i)] = a[(i, j)];
            }
        }
        for (r, &(ir, jr)) in pairs.iter().enumerate() {
            for (c, &(ic, jc)) in pairs.iter().enumerate().take(r + 1).map(|(c, p)| (c, p)) {
                let mut quart = CompensatedSum::<T>::new();
                for h in rows.clone() {
                    // Grouped to cancel the single-score case exactly against
                    // the A_g product below.
                    quart.add((cols[ir][h] * cols[ic][h]) * (cols[jr][h] * cols[jc][h]));
                }
                acc[r * q + c].add(a[(ir, ic)] * a[(jr, jc)] - quart.total());
            }
        }
    }

    let mut v = DMatrix::zeros(q, q);
    for r in 0..q {
        for c in 0..=r {
            let val = T::of(2.0) * acc[r * q + c].total();
            v[(r, c)] = val;
            v[(c, r)] = val;
        }
    }
    if v.amax() == T::zero() {
        return Err(Error::DegenerateVariance);
    }
    Ok(v)
}

/// Studentized scalar statistic θ̂ / sqrt(Var̂(θ̂)); requires k1 = 1.
pub fn tau_sigma<T: Real>(s: ScoreView<'_, T>, apply_df: bool) -> Result<SvStatistic<T>> {
    if s.k1() != 1 {
        return Err(Error::ScalarNeedsSingleRegressor(s.k1()));
    }
    let theta = theta_contrast(s, apply_df)?;
    let var = var_theta(s)?;
    let v = var[(0, 0)];
    if v <= T::zero() {
        return Err(Error::DegenerateVariance);
    }
    Ok(SvStatistic {
        kind: StatKind::ScalarSigma,
        value: theta[0] / v.sqrt(),
        theta,
        var_theta: var,
        dof: 1,
        df_factors: apply_df,
    })
}

/// Reciprocal condition number below which the quadratic form is refused.
const RCOND_MIN: f64 = 1e-12;

/// Studentized Wald statistic θ̂' Var̂(θ̂)⁻¹ θ̂ on the vech contrast.
///
/// Solved through a symmetric eigenfactorization, never an explicit inverse;
/// a reciprocal condition number at or below 1e-12 is an error rather than a
/// silent pseudo-inverse.
pub fn tau_matrix<T: Real>(s: ScoreView<'_, T>, apply_df: bool) -> Result<SvStatistic<T>> {
    let theta = theta_contrast(s, apply_df)?;
    let var = var_theta(s)?;
    let q = theta.len();
    let eig = var.clone().symmetric_eigen();
    let mut lmax = T::zero();
    let mut lmin = T::of(f64::INFINITY);
    for &l in eig.eigenvalues.iter() {
        lmax = lmax.max(l);
        lmin = lmin.min(l);
    }
    if lmax <= T::zero() {
        return Err(Error::DegenerateVariance);
    }
    let rcond = lmin / lmax;
    if !(rcond > T::of(RCOND_MIN)) {
        return Err(Error::SingularVariance {
            rcond: rcond.to64(),
        });
    }
    let mut value = T::zero();
    for i in 0..q {
        let proj = eig.eigenvectors.column(i).dot(&theta);
        value += proj * proj / eig.eigenvalues[i];
    }
    Ok(SvStatistic {
        kind: StatKind::MatrixSigma,
        value,
        theta,
        var_theta: var,
        dof: q,
        df_factors: apply_df,
    })
}

/// Asymptotic p-value: N(0,1) tails for the scalar statistic, the chi-square
/// upper tail for the matrix statistic (which is inherently two-sided).
pub fn asym_pvalue<T: Real>(stat: &SvStatistic<T>, tail: Tail) -> Result<T> {
    match (stat.kind, tail) {
        (StatKind::ScalarSigma, Tail::Upper) => Ok(normal_sf(stat.value)),
        (StatKind::ScalarSigma, Tail::TwoSided) => {
            Ok((T::of(2.0) * normal_sf(stat.value.abs())).min(T::one()))
        }
        (StatKind::MatrixSigma, Tail::TwoSided) => Ok(chi2_sf(stat.value, stat.dof)),
        (StatKind::MatrixSigma, Tail::Upper) => Err(Error::InvalidTail(
            "upper-tail p-values are only defined for the scalar statistic".into(),
        )),
        (_, Tail::EqualTail) => Err(Error::InvalidTail(
            "equal-tail p-values are bootstrap-only".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DMatrix;

    /// Score view wrapper for hand-constructed fine-cluster scores.
    struct Scores {
        m: DMatrix<f64>,
        offsets: Vec<usize>,
        n_obs: usize,
    }

    impl Scores {
        /// `groups[g]` holds the fine-cluster scores of coarse cluster g.
        fn scalar(groups: &[&[f64]]) -> Self {
            let rows: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
            let mut offsets = vec![0usize];
            for g in groups {
                offsets.push(offsets.last().unwrap() + g.len());
            }
            let n = rows.len();
            Self {
                m: DMatrix::from_column_slice(n, 1, &rows),
                offsets,
                n_obs: n,
            }
        }

        fn view(&self) -> ScoreView<'_, f64> {
            ScoreView {
                scores: &self.m,
                offsets: &self.offsets,
                k_total: 1,
                n_obs: self.n_obs,
            }
        }
    }

    #[test]
    fn sigma_hat_hand_examples() {
        // Singleton fine clusters with scores (1, -2, 3): fine variance 14.
        let s = Scores::scalar(&[&[1.0], &[-2.0], &[3.0]]);
        let fine = sigma_hat(s.view(), VarianceLevel::Fine, false).unwrap();
        assert_eq!(fine[(0, 0)], 14.0);

        // One coarse cluster with fine scores (1, 2).
        let s = Scores::scalar(&[&[1.0, 2.0]]);
        let coarse = sigma_hat(s.view(), VarianceLevel::Coarse, false).unwrap();
        let fine = sigma_hat(s.view(), VarianceLevel::Fine, false).unwrap();
        assert_eq!(coarse[(0, 0)], 9.0);
        assert_eq!(fine[(0, 0)], 5.0);

        // All scores zero.
        let s = Scores::scalar(&[&[0.0, 0.0], &[0.0]]);
        let z = sigma_hat(s.view(), VarianceLevel::Coarse, false).unwrap();
        assert_eq!(z[(0, 0)], 0.0);
    }

    #[test]
    fn theta_is_cross_product_sum() {
        // g1: (1, 2), g2: (3, -1): theta = 2*(1*2) + 2*(3*(-1)) = -2.
        let s = Scores::scalar(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let theta = theta_contrast(s.view(), false).unwrap();
        assert_eq!(theta[0], -2.0);

        // Fine == coarse: no cross terms, exactly zero.
        let s = Scores::scalar(&[&[1.25], &[-0.5], &[3.75]]);
        let theta = theta_contrast(s.view(), false).unwrap();
        assert_eq!(theta[0], 0.0);
    }

    #[test]
    fn var_theta_hand_example() {
        // 2[(5² − 17) + (10² − 82)] = 52.
        let s = Scores::scalar(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let v = var_theta(s.view()).unwrap();
        assert_eq!(v[(0, 0)], 52.0);
    }

    #[test]
    fn var_theta_degenerate_when_all_groups_single() {
        let s = Scores::scalar(&[&[1.0], &[2.0], &[-3.0]]);
        assert!(matches!(
            var_theta(s.view()),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn tau_sigma_hand_example_and_scaling() {
        let s = Scores::scalar(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let t = tau_sigma(s.view(), false).unwrap();
        assert_relative_eq!(t.value, -2.0 / 52.0f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(t.value, -0.27735, epsilon = 1e-5);

        // Positive rescaling by a power of two leaves tau bit-identical.
        let s4 = Scores::scalar(&[&[4.0, 8.0], &[12.0, -4.0]]);
        let t4 = tau_sigma(s4.view(), false).unwrap();
        assert_eq!(t.value, t4.value);

        // Any positive rescaling leaves it unchanged to rounding.
        let s3 = Scores::scalar(&[&[3.0, 6.0], &[9.0, -3.0]]);
        let t3 = tau_sigma(s3.view(), false).unwrap();
        assert_relative_eq!(t.value, t3.value, epsilon = 1e-12);
    }

    #[test]
    fn tau_matrix_reduces_to_tau_sigma_squared() {
        let s = Scores::scalar(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.25, -1.5]]);
        let ts = tau_sigma(s.view(), false).unwrap();
        let tm = tau_matrix(s.view(), false).unwrap();
        assert_relative_eq!(tm.value, ts.value * ts.value, epsilon = 1e-10);
        assert_eq!(tm.dof, 1);
    }

    #[test]
    fn zero_contrast_gives_zero_statistics() {
        // Scores with zero cross-products but nonzero variance:
        // g: (a, 0) and (0, b) contribute no cross terms... use antisymmetric
        // pair instead: g1: (1, 2), g2: (1, -2) has theta = 4 + (-4) = 0.
        let s = Scores::scalar(&[&[1.0, 2.0], &[1.0, -2.0]]);
        let ts = tau_sigma(s.view(), false).unwrap();
        assert_eq!(ts.value, 0.0);
        let tm = tau_matrix(s.view(), false).unwrap();
        assert_eq!(tm.value, 0.0);
    }

    #[test]
    fn elimination_matrix_examples() {
        let h1 = elimination_matrix::<f64>(1);
        assert_eq!(h1, DMatrix::from_element(1, 1, 1.0));

        let h2 = elimination_matrix::<f64>(2);
        assert_eq!(h2.shape(), (3, 4));
        // vech keeps vec positions (1,1), (2,1), (2,2) = 0, 1, 3 column-major.
        let mut want = DMatrix::zeros(3, 4);
        want[(0, 0)] = 1.0;
        want[(1, 1)] = 1.0;
        want[(2, 3)] = 1.0;
        assert_eq!(h2, want);
    }

    #[test]
    fn elimination_matrix_defining_identity() {
        let mut r = crate::rng::stream_rng(11, 0);
        let k = 4;
        let mut s = DMatrix::from_fn(k, k, |_, _| f64::standard_normal(&mut r));
        s = &s + s.transpose();
        let h = elimination_matrix::<f64>(k);
        let vec_s = DVector::from_iterator(k * k, s.iter().copied()); // column-major
        let got = &h * vec_s;
        assert_eq!(got, vech(&s));
    }

    #[test]
    fn df_factors_affect_only_the_contrast() {
        let s = Scores::scalar(&[&[1.0, 2.0, -0.5], &[3.0, -1.0]]);
        // Pretend dimensions: N = 10 observations, k_total = 2.
        let view = ScoreView { n_obs: 10, k_total: 2, ..s.view() };
        let t_off = tau_sigma(view, false).unwrap();
        let t_on = tau_sigma(view, true).unwrap();
        assert_eq!(t_off.var_theta, t_on.var_theta);
        let mc = 2.0 / 1.0 * 9.0 / 8.0;
        let mf = 5.0 / 4.0 * 9.0 / 8.0;
        let sc = 2.5f64 * 2.5 + 2.0 * 2.0;
        let sf = 1.0 + 4.0 + 0.25 + 9.0 + 1.0;
        assert_relative_eq!(t_on.theta[0], mc * sc - mf * sf, epsilon = 1e-12);
        assert_relative_eq!(t_off.theta[0], sc - sf, epsilon = 1e-12);
    }

    #[test]
    fn asym_pvalues() {
        let s = Scores::scalar(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let mut t = tau_sigma(s.view(), false).unwrap();

        t.value = 0.0;
        assert_eq!(asym_pvalue(&t, Tail::Upper).unwrap(), 0.5);
        t.value = 1.645;
        assert_abs_diff_eq!(asym_pvalue(&t, Tail::Upper).unwrap(), 0.05, epsilon = 1e-4);
        t.value = -1.0;
        let two = asym_pvalue(&t, Tail::TwoSided).unwrap();
        t.value = 1.0;
        assert_eq!(asym_pvalue(&t, Tail::TwoSided).unwrap(), two);
        assert!(asym_pvalue(&t, Tail::EqualTail).is_err());

        let mut m = tau_matrix(s.view(), false).unwrap();
        m.value = 7.8147;
        m.dof = 3;
        assert_abs_diff_eq!(
            asym_pvalue(&m, Tail::TwoSided).unwrap(),
            0.05,
            epsilon = 1e-4
        );
        assert!(asym_pvalue(&m, Tail::Upper).is_err());
    }
}
