//! Likelihood models used in the experiments.
//!
//! Every model works with the negative log-likelihood summed over the
//! observations; the observed information is its Hessian divided by `n`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::rng::SimRng;
use crate::types::{Dataset, FimMatrix, ParameterVector};

pub mod gaussmix;
pub mod spn;
pub mod ssm;

pub use gaussmix::GaussMix;
pub use spn::SignalPlusNoise;
pub use ssm::StateSpace;

/// Which MLE solver suits a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Damped Newton on the analytic Hessian.
    Newton,
    /// Quasi-Newton in the unconstrained reparameterization.
    Search,
}

pub trait LikelihoodModel: Sync {
    fn dim(&self) -> usize;

    fn names(&self) -> Vec<String>;

    fn lower_bounds(&self) -> Vec<f64>;

    fn upper_bounds(&self) -> Vec<f64>;

    fn nll(&self, data: &Dataset, theta: &[f64]) -> Result<f64>;

    fn grad(&self, data: &Dataset, theta: &[f64]) -> Result<DVector<f64>>;

    fn hessian(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>>;

    /// Value, gradient and Hessian together; models override this when the
    /// three share expensive intermediate work.
    fn derivatives(&self, data: &Dataset, theta: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        Ok((self.nll(data, theta)?, self.grad(data, theta)?, self.hessian(data, theta)?))
    }

    /// Per-sample expected information at `theta` for sample size `n`.
    fn expected_fim(&self, theta: &[f64], n: usize) -> Result<FimMatrix>;

    fn sample(&self, n: usize, theta: &[f64], rng: &mut SimRng) -> Result<Dataset>;

    /// Pulls `theta` back into the region the solver may visit.
    fn project(&self, _theta: &mut [f64]) {}

    /// True when some component sits on its projection limit.
    fn at_boundary(&self, _theta: &[f64]) -> bool {
        false
    }

    /// Maps `theta` to the canonical member of its label-switching orbit;
    /// returns whether anything changed.
    fn canonicalize(&self, _theta: &mut [f64]) -> bool {
        false
    }

    /// Components that are optimized on the log scale by the search solver.
    fn log_scale(&self) -> Vec<bool> {
        vec![false; self.dim()]
    }

    /// Data-driven starting point.
    fn moment_start(&self, data: &Dataset) -> Result<Vec<f64>>;

    fn solver_kind(&self) -> SolverKind {
        SolverKind::Newton
    }

    fn parameter_vector(&self, values: Vec<f64>) -> Result<ParameterVector> {
        ParameterVector::new(values, self.names(), self.lower_bounds(), self.upper_bounds())
    }
}
