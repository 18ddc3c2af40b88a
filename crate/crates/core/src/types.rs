//! Domain types shared across models, solvers and the Monte Carlo engine.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named parameter vector with box constraints.
///
/// Values are required to lie strictly inside their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let p = values.len();
        if p == 0 {
            return Err(Error::InvalidParameter("parameter vector is empty".into()));
        }
        if names.len() != p || lower.len() != p || upper.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "values {p}, names {}, lower {}, upper {}",
                names.len(),
                lower.len(),
                upper.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate name `{name}`")));
            }
        }
        for j in 0..p {
            let v = values[j];
            if !v.is_finite() || v <= lower[j] || v >= upper[j] {
                return Err(Error::InvalidParameter(format!(
                    "`{}` = {v} is not strictly inside ({}, {})",
                    names[j], lower[j], upper[j]
                )));
            }
        }
        Ok(Self { values, names, lower, upper })
    }

    /// Unbounded parameter vector.
    pub fn unbounded(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let p = values.len();
        Self::new(values, names, vec![f64::NEG_INFINITY; p], vec![f64::INFINITY; p])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Same names and bounds, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.names.clone(), self.lower.clone(), self.upper.clone())
    }
}

/// An ordered collection of `n` observations of dimension `q`, one per row.
///
/// `meta[i]` is an opaque per-observation tag; the signal-plus-noise model
/// uses it as the index into its noise-covariance schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: DMatrix<f64>,
    meta: Vec<usize>,
}

impl Dataset {
    pub fn new(observations: DMatrix<f64>, meta: Vec<usize>) -> Result<Self> {
        if observations.nrows() == 0 || observations.ncols() == 0 {
            return Err(Error::DimensionMismatch("dataset must have n >= 1 and q >= 1".into()));
        }
        if meta.len() != observations.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "meta length {} != n = {}",
                meta.len(),
                observations.nrows()
            )));
        }
        Ok(Self { observations, meta })
    }

    /// Dataset whose meta tags are the row indices `0..n`.
    pub fn indexed(observations: DMatrix<f64>) -> Result<Self> {
        let n = observations.nrows();
        Self::new(observations, (0..n).collect())
    }

    /// Scalar observations.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::indexed(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn q(&self) -> usize {
        self.observations.ncols()
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn meta(&self) -> &[usize] {
        &self.meta
    }

    /// First column as a vector; convenient for scalar data.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.observations.column(j).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FimKind {
    Observed,
    Expected,
}

/// A per-sample Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FimMatrix {
    entries: DMatrix<f64>,
    kind: FimKind,
    at: Vec<f64>,
    sample_size: usize,
}

const SYMMETRY_TOLERANCE: f64 = 1e-10;

impl FimMatrix {
    /// Wraps already per-sample normalized entries.
    ///
    /// Entries must be symmetric to within a relative tolerance of 1e-10;
    /// the stored matrix is the exact symmetric part.
    pub fn new(entries: DMatrix<f64>, kind: FimKind, at: Vec<f64>, sample_size: usize) -> Result<Self> {
        if !entries.is_square() || entries.nrows() != at.len() {
            return Err(Error::DimensionMismatch(format!(
                "FIM is {}x{} for {} parameters",
                entries.nrows(),
                entries.ncols(),
                at.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("FIM has non-finite entries".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::Domain(format!("FIM asymmetry {asym:e} exceeds tolerance")));
        }
        let entries = symmetrize(&entries);
        Ok(Self { entries, kind, at, sample_size })
    }

    /// Builds an observed FIM from a total negative log-likelihood Hessian.
    pub fn from_total_hessian(hessian: &DMatrix<f64>, kind: FimKind, at: Vec<f64>, n: usize) -> Result<Self> {
        Self::new(hessian / n as f64, kind, at, n)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> FimKind {
        self.kind
    }

    pub fn at(&self) -> &[f64] {
        &self.at
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// `(M + Mᵀ)/2`, exactly symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    let mut out = m.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn parameter_vector_rejects_boundary_values() {
        let err = ParameterVector::new(vec![0.0], names(1), vec![0.0], vec![1.0]);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        assert!(ParameterVector::new(vec![0.5], names(1), vec![0.0], vec![1.0]).is_ok());
    }

    #[test]
    fn parameter_vector_rejects_duplicate_names() {
        let err = ParameterVector::unbounded(vec![1.0, 2.0], vec!["a".into(), "a".into()]);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn parameter_vector_rejects_empty() {
        assert!(ParameterVector::unbounded(vec![], vec![]).is_err());
    }

    #[test]
    fn dataset_meta_length_checked() {
        let obs = DMatrix::from_element(3, 1, 0.0);
        assert!(Dataset::new(obs.clone(), vec![0, 1]).is_err());
        let d = Dataset::indexed(obs).unwrap();
        assert_eq!(d.meta(), &[0, 1, 2]);
        assert_eq!((d.n(), d.q()), (3, 1));
    }

    #[test]
    fn fim_symmetry_enforced() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-13, 2.0]);
        let f = FimMatrix::new(m, FimKind::Observed, vec![0.0, 0.0], 10).unwrap();
        assert_eq!(f.entries()[(0, 1)], f.entries()[(1, 0)]);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.6, 2.0]);
        assert!(FimMatrix::new(bad, FimKind::Observed, vec![0.0, 0.0], 10).is_err());
    }
}
