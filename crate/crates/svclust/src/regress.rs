//! OLS estimation, partialing out, empirical scores, and delete-one-cluster
//! refits.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::{validate_nesting, Partition, RegressionData};
use crate::error::{Error, Result};
use crate::lstsq::LeastSquares;
use crate::num::Real;

/// An OLS fit of y on X.
#[derive(Debug, Clone)]
pub struct OlsFit<T: Real> {
    pub beta: DVector<T>,
    pub residuals: DVector<T>,
    pub xtx_inv: DMatrix<T>,
    /// Diagonal of the hat matrix.
    pub leverage: DVector<T>,
}

/// OLS with a rank-revealing solve.
pub fn ols<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Result<OlsFit<T>> {
    if x.nrows() <= x.ncols() {
        return Err(Error::InvalidData(format!(
            "need N > k, got N = {}, k = {}",
            x.nrows(),
            x.ncols()
        )));
    }
    let lsq = LeastSquares::new(x)?;
    let beta = lsq.solve(y);
    let residuals = lsq.residualize(y);
    Ok(OlsFit {
        beta,
        residuals,
        xtx_inv: lsq.xtx_inv(),
        leverage: lsq.leverage(),
    })
}

/// The regressors of interest with the nuisance block projected off.
#[derive(Debug, Clone)]
pub struct PartialedDesign<T: Real> {
    /// Z = M_{X2} X1, N × k1.
    pub z: DMatrix<T>,
    /// Total number of estimated coefficients k1 + k2, used by
    /// degrees-of-freedom corrections.
    pub k_total: usize,
}

/// Partial the nuisance block out of the regressors of interest and fit the
/// full model.
///
/// Regressing y on (Z, X2) reproduces the full-model coefficient block and
/// residuals, so downstream score computations can work with the k1-column Z
/// instead of the whole design.
pub fn partial_out<T: Real>(data: &RegressionData<T>) -> Result<(PartialedDesign<T>, OlsFit<T>)> {
    let z = if data.k2() == 0 {
        data.x1.clone()
    } else {
        let x2f = LeastSquares::new(&data.x2)?;
        let mut z = DMatrix::zeros(data.n(), data.k1());
        let mut coeff = DVector::zeros(data.k2());
        let mut out = DVector::zeros(data.n());
        for j in 0..data.k1() {
            let col = DVector::from_column_slice(data.x1.column(j).as_slice());
            x2f.residualize_into(&col, &mut coeff, &mut out);
            z.column_mut(j).copy_from(&out);
        }
        z
    };
    if LeastSquares::new(&z).is_err() {
        return Err(Error::CollinearInterest);
    }
    let fit = ols(&data.design(), &data.y)?;
    Ok((
        PartialedDesign {
            z,
            k_total: data.k1() + data.k2(),
        },
        fit,
    ))
}

/// Fixed bookkeeping for accumulating scores over a nested (fine, coarse)
/// pair: fine clusters are rows, grouped contiguously by coarse cluster.
#[derive(Debug)]
pub struct ScoreLayout {
    /// Score row of each observation.
    row_of_obs: Vec<usize>,
    /// Row ranges per coarse cluster; length G + 1.
    offsets: Vec<usize>,
    n_fine: usize,
}

impl ScoreLayout {
    pub fn new(fine: &Partition, coarse: &Partition) -> Result<Self> {
        validate_nesting(fine, coarse)?;
        let g = coarse.n_clusters();
        // Fine clusters per coarse cluster, in fine-id order within coarse-id
        // order so results are invariant to relabeling.
        let coarse_of_fine: Vec<usize> = (0..fine.n_clusters())
            .map(|h| coarse.assignment()[fine.members(h)[0]])
            .collect();
        let mut counts = vec![0usize; g];
        for &c in &coarse_of_fine {
            counts[c] += 1;
        }
        let mut offsets = vec![0usize; g + 1];
        for i in 0..g {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut next = offsets.clone();
        let mut row_of_fine = vec![0usize; fine.n_clusters()];
        for (h, &c) in coarse_of_fine.iter().enumerate() {
            row_of_fine[h] = next[c];
            next[c] += 1;
        }
        let row_of_obs = fine.assignment().iter().map(|&h| row_of_fine[h]).collect();
        Ok(Self {
            row_of_obs,
            offsets,
            n_fine: fine.n_clusters(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.row_of_obs.len()
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Accumulate per-fine-cluster scores ŝ_gh = Σ_{i∈(g,h)} z_i û_i into
    /// `scores` (n_fine × k1), reusing the caller's buffer.
    pub fn fill_scores<T: Real>(&self, z: &DMatrix<T>, residuals: &DVector<T>, scores: &mut DMatrix<T>) {
        debug_assert_eq!(scores.nrows(), self.n_fine);
        debug_assert_eq!(scores.ncols(), z.ncols());
        scores.fill(T::zero());
        for j in 0..z.ncols() {
            let zc = z.column(j);
            let sc = scores.column_mut(j);
            let sc = sc.data.into_slice_mut();
            for (i, &row) in self.row_of_obs.iter().enumerate() {
                sc[row] += zc[i] * residuals[i];
            }
        }
    }
}

/// Empirical scores aggregated per fine cluster, grouped by coarse cluster.
#[derive(Debug, Clone)]
pub struct ScoreSet<T: Real> {
    scores: DMatrix<T>,
    layout: Arc<ScoreLayout>,
    k_total: usize,
}

impl<T: Real> ScoreSet<T> {
    pub fn view(&self) -> ScoreView<'_, T> {
        ScoreView {
            scores: &self.scores,
            offsets: self.layout.offsets(),
            k_total: self.k_total,
            n_obs: self.layout.n_obs(),
        }
    }

    pub fn layout(&self) -> &Arc<ScoreLayout> {
        &self.layout
    }

    /// Score matrix, one fine cluster per row.
    pub fn scores(&self) -> &DMatrix<T> {
        &self.scores
    }
}

/// Borrowed view of a score matrix plus its grouping, the common currency of
/// the statistic functions.
#[derive(Clone, Copy)]
pub struct ScoreView<'a, T: Real> {
    pub scores: &'a DMatrix<T>,
    /// Row ranges per coarse cluster; length G + 1.
    pub offsets: &'a [usize],
    pub k_total: usize,
    pub n_obs: usize,
}

impl<'a, T: Real> ScoreView<'a, T> {
    pub fn k1(&self) -> usize {
        self.scores.ncols()
    }

    pub fn n_coarse(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_fine(&self) -> usize {
        self.scores.nrows()
    }

    pub fn coarse_rows(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

/// Build the score set for a partialed design and residual vector.
pub fn build_scores<T: Real>(
    design: &PartialedDesign<T>,
    residuals: &DVector<T>,
    fine: &Partition,
    coarse: &Partition,
) -> Result<ScoreSet<T>> {
    if residuals.len() != fine.n_obs() {
        return Err(Error::PartitionLength(residuals.len(), fine.n_obs()));
    }
    let layout = Arc::new(ScoreLayout::new(fine, coarse)?);
    let mut scores = DMatrix::zeros(layout.n_fine(), design.z.ncols());
    layout.fill_scores(&design.z, residuals, &mut scores);
    Ok(ScoreSet {
        scores,
        layout,
        k_total: design.k_total,
    })
}

/// OLS coefficients after deleting one cluster of `level`.
pub fn delete_cluster_fit<T: Real>(
    data: &RegressionData<T>,
    level: &Partition,
    omit: usize,
) -> Result<DVector<T>> {
    let x = data.design();
    let n = data.n();
    let keep: Vec<usize> = (0..n).filter(|i| level.assignment()[*i] != omit).collect();
    let k = x.ncols();
    if keep.len() <= k {
        return Err(Error::InfeasibleDeletion {
            level: level.name().to_string(),
            label: level.label(omit).to_string(),
        });
    }
    let xs = x.select_rows(keep.iter());
    let ys = data.y.select_rows(keep.iter());
    match ols(&xs, &ys) {
        Ok(fit) => Ok(fit.beta),
        Err(Error::RankDeficient { .. }) => Err(Error::InfeasibleDeletion {
            level: level.name().to_string(),
            label: level.label(omit).to_string(),
        }),
        Err(e) => Err(e),
    }
}

/// A fitted regression bundled with everything the tests reuse: the factored
/// full design, its residuals, and the partialed regressors of interest.
pub struct Model<T: Real> {
    pub data: RegressionData<T>,
    pub design: PartialedDesign<T>,
    pub fit: OlsFit<T>,
    factor: LeastSquares<T>,
    z_xtx_inv: DMatrix<T>,
}

impl<T: Real> Model<T> {
    pub fn fit(data: RegressionData<T>) -> Result<Self> {
        let (design, fit) = partial_out(&data)?;
        let factor = LeastSquares::new(&data.design())?;
        let z_xtx_inv = LeastSquares::new(&design.z)?.xtx_inv();
        Ok(Self {
            data,
            design,
            fit,
            factor,
            z_xtx_inv,
        })
    }

    /// Factor of the full design, used for bootstrap residual projections and
    /// sandwich pieces.
    pub fn factor(&self) -> &LeastSquares<T> {
        &self.factor
    }

    /// (Z'Z)⁻¹ for the partialed regressors of interest.
    pub fn z_xtx_inv(&self) -> &DMatrix<T> {
        &self.z_xtx_inv
    }

    pub fn k1(&self) -> usize {
        self.data.k1()
    }

    /// Partialed column for a single regressor of interest: the residual of
    /// x1 column `j` on the other x1 columns and X2. Used for per-coefficient
    /// scalar tests when k1 > 1.
    pub fn single_column_design(&self, j: usize) -> Result<PartialedDesign<T>> {
        let k1 = self.data.k1();
        assert!(j < k1);
        if k1 == 1 {
            return Ok(self.design.clone());
        }
        let n = self.data.n();
        let mut rest = DMatrix::zeros(n, k1 - 1 + self.data.k2());
        let mut c = 0;
        for l in 0..k1 {
            if l != j {
                rest.column_mut(c).copy_from(&self.data.x1.column(l));
                c += 1;
            }
        }
        rest.view_mut((0, c), (n, self.data.k2())).copy_from(&self.data.x2);
        let restf = LeastSquares::new(&rest)?;
        let col = DVector::from_column_slice(self.data.x1.column(j).as_slice());
        let z = restf.residualize(&col);
        if z.norm() <= T::default_epsilon() * T::of(n as f64) * col.norm() {
            return Err(Error::CollinearInterest);
        }
        Ok(PartialedDesign {
            z: DMatrix::from_column_slice(n, 1, z.as_slice()),
            k_total: self.data.k1() + self.data.k2(),
        })
    }
}
