//! Dataset model: cluster partitions, nesting validation, and CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::Real;

/// A partition of the observations into clusters.
///
/// Cluster ids are dense integers assigned in order of first appearance, so
/// renaming labels never changes the internal representation. Original labels
/// are retained for reporting.
#[derive(Debug, Clone)]
pub struct Partition {
    name: String,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl Partition {
    /// Build a partition from raw labels, encoding ids by first appearance.
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for (i, lab) in labels.iter().enumerate() {
            let lab = lab.as_ref();
            let id = *ids.entry(lab).or_insert_with(|| {
                members.push(Vec::new());
                names.push(lab.to_string());
                members.len() - 1
            });
            assignment.push(id);
            members[id].push(i);
        }
        Self {
            name: name.to_string(),
            assignment,
            members,
            labels: names,
        }
    }

    /// The trivial partition of singletons ("no clustering").
    pub fn singletons(name: &str, n: usize) -> Self {
        Self {
            name: name.to_string(),
            assignment: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_obs(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    /// Dense cluster id per observation.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Observation indices of cluster `id`, in ascending order.
    pub fn members(&self, id: usize) -> &[usize] {
        &self.members[id]
    }

    /// Original label of cluster `id`.
    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn is_singletons(&self) -> bool {
        self.members.iter().all(|m| m.len() == 1)
    }
}

/// Check that every cluster of `fine` lies inside a single cluster of
/// `coarse`; reports the first violating observation pair otherwise.
pub fn validate_nesting(fine: &Partition, coarse: &Partition) -> Result<()> {
    if fine.n_obs() != coarse.n_obs() {
        return Err(Error::PartitionLength(fine.n_obs(), coarse.n_obs()));
    }
    for id in 0..fine.n_clusters() {
        let members = fine.members(id);
        let first = members[0];
        let want = coarse.assignment()[first];
        for &obs in &members[1..] {
            let got = coarse.assignment()[obs];
            if got != want {
                return Err(Error::NotNested {
                    fine: fine.name().to_string(),
                    coarse: coarse.name().to_string(),
                    fine_label: fine.label(id).to_string(),
                    obs_a: first,
                    obs_b: obs,
                    coarse_a: coarse.label(want).to_string(),
                    coarse_b: coarse.label(got).to_string(),
                });
            }
        }
    }
    Ok(())
}

/// An ordered chain of partitions, finest first, validated as nested
/// refinements. Index 0 may be the singleton partition ("none").
#[derive(Debug, Clone)]
pub struct ClusterNesting {
    levels: Vec<Partition>,
}

impl ClusterNesting {
    pub fn new(levels: Vec<Partition>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidData("a nesting needs at least one level".into()));
        }
        for w in levels.windows(2) {
            validate_nesting(&w[0], &w[1])?;
        }
        for (i, a) in levels.iter().enumerate() {
            for b in &levels[i + 1..] {
                if a.name() == b.name() {
                    return Err(Error::InvalidData(format!(
                        "duplicate level name `{}`",
                        a.name()
                    )));
                }
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn level(&self, m: usize) -> &Partition {
        &self.levels[m]
    }

    /// Number of testable steps (consecutive level pairs).
    pub fn n_steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn by_name(&self, name: &str) -> Result<&Partition> {
        self.levels
            .iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownLevel(name.to_string()))
    }
}

/// Outcome, regressors of interest, and nuisance regressors.
#[derive(Debug, Clone)]
pub struct RegressionData<T: Real> {
    pub y: DVector<T>,
    /// Regressors of interest, N × k1.
    pub x1: DMatrix<T>,
    /// Nuisance regressors, N × k2 (k2 may be 0). Includes the intercept and
    /// any fixed-effect dummies.
    pub x2: DMatrix<T>,
}

impl<T: Real> RegressionData<T> {
    pub fn new(y: DVector<T>, x1: DMatrix<T>, x2: DMatrix<T>) -> Result<Self> {
        let n = y.len();
        if n == 0 || x1.ncols() == 0 {
            return Err(Error::InvalidData(
                "need at least one observation and one regressor of interest".into(),
            ));
        }
        if x1.nrows() != n || x2.nrows() != n {
            return Err(Error::InvalidData(format!(
                "column lengths differ: y has {n}, x1 has {}, x2 has {}",
                x1.nrows(),
                x2.nrows()
            )));
        }
        let check = |what: &str, it: &mut dyn Iterator<Item = T>| -> Result<()> {
            for (i, v) in it.enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: what.to_string(),
                        index: i,
                    });
                }
            }
            Ok(())
        };
        check("y", &mut y.iter().copied())?;
        check("x1", &mut x1.iter().copied())?;
        check("x2", &mut x2.iter().copied())?;
        if n <= x1.ncols() + x2.ncols() {
            return Err(Error::InvalidData(format!(
                "no residual degrees of freedom: N = {n}, k = {}",
                x1.ncols() + x2.ncols()
            )));
        }
        Ok(Self { y, x1, x2 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k1(&self) -> usize {
        self.x1.ncols()
    }

    pub fn k2(&self) -> usize {
        self.x2.ncols()
    }

    /// The full design matrix [X1, X2].
    pub fn design(&self) -> DMatrix<T> {
        let n = self.n();
        let mut x = DMatrix::zeros(n, self.k1() + self.k2());
        x.view_mut((0, 0), (n, self.k1())).copy_from(&self.x1);
        x.view_mut((0, self.k1()), (n, self.k2())).copy_from(&self.x2);
        x
    }
}

/// Column selections for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvSpec {
    pub y: String,
    pub x1: Vec<String>,
    pub x2: Vec<String>,
    /// Cluster label columns, finest to coarsest.
    pub clusters: Vec<String>,
    pub add_intercept: bool,
    /// Name of a cluster column whose dummies are appended to X2. One
    /// category is dropped when an intercept is present.
    pub fixed_effects_level: Option<String>,
}

/// Load a dataset from an RFC-4180 CSV file with a header row.
///
/// Cluster columns may hold arbitrary strings; they are re-encoded to dense
/// integer ids. The singleton partition is prepended as level "none", and the
/// resulting chain is validated as nested.
pub fn load_csv<T: Real>(path: &Path, spec: &CsvSpec) -> Result<(RegressionData<T>, ClusterNesting)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let y_idx = col(&spec.y)?;
    let x1_idx: Vec<usize> = spec.x1.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let x2_idx: Vec<usize> = spec.x2.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let cl_idx: Vec<usize> = spec.clusters.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut y: Vec<T> = Vec::new();
    let mut x1_cols: Vec<Vec<T>> = vec![Vec::new(); x1_idx.len()];
    let mut x2_cols: Vec<Vec<T>> = vec![Vec::new(); x2_idx.len()];
    let mut cl_cols: Vec<Vec<String>> = vec![Vec::new(); cl_idx.len()];

    let parse = |field: &str, column: &str, row: usize| -> Result<T> {
        let field = field.trim();
        if field.is_empty() {
            return Err(Error::MissingValue {
                column: column.to_string(),
                row,
            });
        }
        let v: f64 = field.parse().map_err(|_| Error::NonNumeric {
            column: column.to_string(),
            row,
            value: field.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::NonNumeric {
                column: column.to_string(),
                row,
                value: field.to_string(),
            });
        }
        Ok(T::of(v))
    };

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |idx: usize, column: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MissingValue {
                column: column.to_string(),
                row,
            })
        };
        y.push(parse(get(y_idx, &spec.y)?, &spec.y, row)?);
        for (j, &idx) in x1_idx.iter().enumerate() {
            x1_cols[j].push(parse(get(idx, &spec.x1[j])?, &spec.x1[j], row)?);
        }
        for (j, &idx) in x2_idx.iter().enumerate() {
            x2_cols[j].push(parse(get(idx, &spec.x2[j])?, &spec.x2[j], row)?);
        }
        for (j, &idx) in cl_idx.iter().enumerate() {
            let field = get(idx, &spec.clusters[j])?.trim();
            if field.is_empty() {
                return Err(Error::MissingValue {
                    column: spec.clusters[j].clone(),
                    row,
                });
            }
            cl_cols[j].push(field.to_string());
        }
    }

    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidData("CSV contains no data rows".into()));
    }

    let mut levels = vec![Partition::singletons("none", n)];
    for (j, labels) in cl_cols.iter().enumerate() {
        levels.push(Partition::from_labels(&spec.clusters[j], labels));
    }
    let nesting = ClusterNesting::new(levels)?;

    // Materialize X2: optional intercept, named columns, then FE dummies.
    let mut x2_built: Vec<Vec<T>> = Vec::new();
    if spec.add_intercept {
        x2_built.push(vec![T::one(); n]);
    }
    x2_built.extend(x2_cols);
    if let Some(fe) = &spec.fixed_effects_level {
        let part = nesting.by_name(fe)?;
        let skip_first = spec.add_intercept;
        for c in 0..part.n_clusters() {
            if skip_first && c == 0 {
                continue;
            }
            let mut dummy = vec![T::zero(); n];
            for &i in part.members(c) {
                dummy[i] = T::one();
            }
            x2_built.push(dummy);
        }
    }

    let x1 = DMatrix::from_fn(n, x1_cols.len(), |i, j| x1_cols[j][i]);
    let x2 = DMatrix::from_fn(n, x2_built.len(), |i, j| x2_built[j][i]);
    let data = RegressionData::new(DVector::from_vec(y), x1, x2)?;
    Ok((data, nesting))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const SIX_ROWS: &str = "\
y,x,room,school
1.0,0.5,1,A
2.0,1.5,1,A
3.0,2.5,2,A
4.0,3.5,2,A
5.0,4.5,3,B
6.0,5.5,3,B
";

    fn spec(clusters: &[&str]) -> CsvSpec {
        CsvSpec {
            y: "y".into(),
            x1: vec!["x".into()],
            x2: vec![],
            clusters: clusters.iter().map(|s| s.to_string()).collect(),
            add_intercept: true,
            fixed_effects_level: None,
        }
    }

    #[test]
    fn loads_nested_levels() {
        let f = write_csv(SIX_ROWS);
        let (data, nesting) = load_csv::<f64>(f.path(), &spec(&["room", "school"])).unwrap();
        assert_eq!(data.n(), 6);
        assert_eq!(data.k1(), 1);
        assert_eq!(data.k2(), 1); // intercept
        let names: Vec<_> = nesting.levels().iter().map(|p| p.name()).collect();
        assert_eq!(names, vec!["none", "room", "school"]);
        assert_eq!(nesting.level(0).n_clusters(), 6);
        assert_eq!(nesting.level(1).n_clusters(), 3);
        assert_eq!(nesting.level(2).n_clusters(), 2);
    }

    #[test]
    fn reversed_order_reports_violation() {
        let f = write_csv(SIX_ROWS);
        let err = load_csv::<f64>(f.path(), &spec(&["school", "room"])).unwrap_err();
        match err {
            Error::NotNested { fine, fine_label, .. } => {
                assert_eq!(fine, "school");
                assert_eq!(fine_label, "A"); // school A spans rooms 1 and 2
            }
            other => panic!("expected NotNested, got {other:?}"),
        }
    }

    #[test]
    fn fixed_effects_drop_one_category_with_intercept() {
        let f = write_csv(SIX_ROWS);
        let mut s = spec(&["room", "school"]);
        s.fixed_effects_level = Some("school".into());
        let (data, _) = load_csv::<f64>(f.path(), &s).unwrap();
        // intercept + one dummy (two schools, one dropped)
        assert_eq!(data.k2(), 2);
        // Without the intercept both dummies are kept.
        s.add_intercept = false;
        let (data, _) = load_csv::<f64>(f.path(), &s).unwrap();
        assert_eq!(data.k2(), 2);
        let col_sums: Vec<f64> = (0..2).map(|j| data.x2.column(j).sum()).collect();
        assert_eq!(col_sums, vec![4.0, 2.0]);
    }

    #[test]
    fn missing_and_nonnumeric_cells_error() {
        let f = write_csv("y,x,g\n1.0,,a\n");
        let err = load_csv::<f64>(f.path(), &spec(&["g"])).unwrap_err();
        assert!(matches!(err, Error::MissingValue { .. }));

        let f = write_csv("y,x,g\n1.0,abc,a\n");
        let err = load_csv::<f64>(f.path(), &spec(&["g"])).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { .. }));

        let f = write_csv("y,x\n1.0,2.0\n");
        let err = load_csv::<f64>(f.path(), &spec(&["g"])).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "g"));
    }

    #[test]
    fn singletons_refine_everything() {
        let fine = Partition::singletons("none", 4);
        let coarse = Partition::from_labels("g", &["a", "a", "b", "b"]);
        assert!(validate_nesting(&fine, &coarse).is_ok());
        assert!(validate_nesting(&coarse, &coarse).is_ok());
    }

    #[test]
    fn crossing_partitions_rejected() {
        // fine {a:{0,1}, b:{2}} vs coarse {X:{0,2}, Y:{1}}
        let fine = Partition::from_labels("fine", &["a", "a", "b"]);
        let coarse = Partition::from_labels("coarse", &["X", "Y", "X"]);
        let err = validate_nesting(&fine, &coarse).unwrap_err();
        match err {
            Error::NotNested {
                fine_label,
                obs_a,
                obs_b,
                ..
            } => {
                assert_eq!(fine_label, "a");
                assert_eq!((obs_a, obs_b), (0, 1));
            }
            other => panic!("expected NotNested, got {other:?}"),
        }
    }

    #[test]
    fn sizes_are_consistent_across_levels() {
        let f = write_csv(SIX_ROWS);
        let (_, nesting) = load_csv::<f64>(f.path(), &spec(&["room", "school"])).unwrap();
        for level in nesting.levels() {
            let total: usize = (0..level.n_clusters()).map(|c| level.members(c).len()).sum();
            assert_eq!(total, 6);
        }
        // Fine clusters per coarse cluster sum to the fine-level count.
        let fine = nesting.level(1);
        let coarse = nesting.level(2);
        let mut seen = vec![std::collections::HashSet::new(); coarse.n_clusters()];
        for (obs, &g) in coarse.assignment().iter().enumerate() {
            seen[g].insert(fine.assignment()[obs]);
        }
        let total: usize = seen.iter().map(|s| s.len()).sum();
        assert_eq!(total, fine.n_clusters());
    }
}
