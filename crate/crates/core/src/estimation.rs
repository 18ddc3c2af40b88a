//! Maximum-likelihood solvers and the observed information at the estimate.
//!
//! Iterations stop on the projected gradient `θ − P(θ − g)`, where `P` is
//! the model's projection, so a solver pinned on a projection limit halts.
//! The reported `final_grad_norm` and `converged` use the plain gradient, so
//! such an estimate comes back flagged [`Flag::Boundary`] and unconverged.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::is_positive_definite;
use crate::models::{LikelihoodModel, SolverKind};
use crate::rng::SimRng;
use crate::types::{Dataset, FimKind, FimMatrix, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// `θ* · (1 + u)` with `u` uniform on `[-s, s]` per component.
    TruePerturbed,
    Moment,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_halving_limit: usize,
    pub initializer: Initializer,
    pub perturbation_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_start: Option<Vec<f64>>,
}

impl SolverOptions {
    /// Defaults for a solver family: tolerance 1e-8 for Newton models and
    /// 1e-6 for models fitted by search.
    pub fn for_kind(kind: SolverKind) -> Self {
        let (max_iterations, gradient_tolerance) = match kind {
            SolverKind::Newton => (100, 1e-8),
            SolverKind::Search => (500, 1e-6),
        };
        Self {
            max_iterations,
            gradient_tolerance,
            step_halving_limit: 40,
            initializer: Initializer::TruePerturbed,
            perturbation_scale: 0.1,
            user_start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !self.gradient_tolerance.is_finite() {
            return Err(Error::Domain("gradient_tolerance must be positive".into()));
        }
        if !(self.perturbation_scale >= 0.0) || self.perturbation_scale >= 1.0 {
            return Err(Error::Domain("perturbation_scale must lie in [0, 1)".into()));
        }
        if self.initializer == Initializer::User && self.user_start.is_none() {
            return Err(Error::Domain("user initializer needs user_start".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Boundary,
    NonPdHessian,
    Relabeled,
    /// Some iteration replaced the Newton direction by a gradient step.
    GradientFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub theta_hat: ParameterVector,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub nll: f64,
    /// Hessian of the summed negative log-likelihood at `theta_hat`.
    pub hessian_at_mle: DMatrix<f64>,
    pub flags: BTreeSet<Flag>,
}

impl EstimationResult {
    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Starting point chosen by `options.initializer`.
pub fn initial_point(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    theta_star: &[f64],
    options: &SolverOptions,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let mut start = match options.initializer {
        Initializer::TruePerturbed => {
            let s = options.perturbation_scale;
            theta_star.iter().map(|&t| t * (1.0 + rng.random_range(-s..=s))).collect()
        }
        Initializer::Moment => model.moment_start(data)?,
        Initializer::User => options
            .user_start
            .clone()
            .ok_or_else(|| Error::Domain("user initializer needs user_start".into()))?,
    };
    if start.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!("start has {} entries, model has {}", start.len(), model.dim())));
    }
    model.project(&mut start);
    Ok(start)
}

fn projected_gradient_norm(model: &dyn LikelihoodModel, theta: &[f64], g: &DVector<f64>) -> f64 {
    let mut stepped: Vec<f64> = theta.iter().zip(g.iter()).map(|(t, gi)| t - gi).collect();
    model.project(&mut stepped);
    theta.iter().zip(&stepped).map(|(t, s)| (t - s) * (t - s)).sum::<f64>().sqrt()
}

fn finish(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    mut theta: Vec<f64>,
    converged: bool,
    iterations: usize,
    mut flags: BTreeSet<Flag>,
    tolerance: f64,
) -> Result<EstimationResult> {
    if model.canonicalize(&mut theta) {
        flags.insert(Flag::Relabeled);
    }
    let (nll, g, h) = model.derivatives(data, &theta)?;
    let final_grad_norm = g.norm();
    // Pinned against a limit, or creeping toward one on the log scale.
    let pinned = projected_gradient_norm(model, &theta, &g) <= tolerance && final_grad_norm > tolerance;
    if pinned || model.at_boundary(&theta) {
        flags.insert(Flag::Boundary);
    }
    if !is_positive_definite(&h) {
        flags.insert(Flag::NonPdHessian);
    }
    let converged = converged && final_grad_norm <= tolerance;
    Ok(EstimationResult {
        theta_hat: model.parameter_vector(theta)?,
        converged,
        iterations,
        final_grad_norm,
        nll,
        hessian_at_mle: h,
        flags,
    })
}

/// Damped Newton iteration with step halving.
///
/// A Hessian that is not positive definite is replaced by a gradient step
/// of length at most one.
pub fn newton_mle(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    theta0: &[f64],
    options: &SolverOptions,
) -> Result<EstimationResult> {
    options.validate()?;
    let mut theta = theta0.to_vec();
    model.project(&mut theta);
    let mut flags = BTreeSet::new();
    let (mut f, mut g, mut h) = model.derivatives(data, &theta)?;
    let mut gnorm = projected_gradient_norm(model, &theta, &g);

    for iter in 0..options.max_iterations {
        if gnorm <= options.gradient_tolerance {
            return finish(model, data, theta, true, iter, flags, options.gradient_tolerance);
        }
        let direction = match h.clone().cholesky() {
            Some(chol) => -chol.solve(&g),
            None => {
                flags.insert(Flag::GradientFallback);
                let norm = g.norm();
                -&g / norm.max(1.0)
            }
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=options.step_halving_limit {
            let mut trial: Vec<f64> = theta.iter().zip(direction.iter()).map(|(t, d)| t + step * d).collect();
            model.project(&mut trial);
            if let Ok(ft) = model.nll(data, &trial) {
                if ft.is_finite() {
                    if ft <= f {
                        accepted = Some((trial, None));
                        break;
                    }
                    // Within rounding of f: accept only if stationarity improves.
                    if ft <= f + 4.0 * f64::EPSILON * f.abs() {
                        let trio = model.derivatives(data, &trial)?;
                        if projected_gradient_norm(model, &trial, &trio.1) < gnorm {
                            accepted = Some((trial, Some(trio)));
                            break;
                        }
                    }
                }
            }
            step *= 0.5;
        }
        let Some((next, evaluated)) = accepted else {
            return finish(model, data, theta, false, iter, flags, options.gradient_tolerance);
        };
        theta = next;
        (f, g, h) = match evaluated {
            Some(trio) => trio,
            None => model.derivatives(data, &theta)?,
        };
        gnorm = projected_gradient_norm(model, &theta, &g);
    }
    let converged = gnorm <= options.gradient_tolerance;
    finish(model, data, theta, converged, options.max_iterations, flags, options.gradient_tolerance)
}

// Maps between the natural parameters and the search coordinates.
struct Coords {
    log: Vec<bool>,
}

impl Coords {
    fn to_search(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(theta.len(), theta.iter().zip(&self.log).map(|(t, &l)| if l { t.ln() } else { *t }))
    }

    fn to_natural(&self, phi: &DVector<f64>) -> Vec<f64> {
        phi.iter().zip(&self.log).map(|(p, &l)| if l { p.exp() } else { *p }).collect()
    }

    fn gradient(&self, theta: &[f64], g: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(g.len(), |j, _| if self.log[j] { g[j] * theta[j] } else { g[j] })
    }

    fn hessian(&self, theta: &[f64], g: &DVector<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        let p = g.len();
        let jac: Vec<f64> = (0..p).map(|j| if self.log[j] { theta[j] } else { 1.0 }).collect();
        let mut hp = DMatrix::from_fn(p, p, |i, j| h[(i, j)] * jac[i] * jac[j]);
        for j in 0..p {
            if self.log[j] {
                hp[(j, j)] += g[j] * theta[j];
            }
        }
        hp
    }
}

// Inverse of the search-space Hessian if it is positive definite, otherwise
// a scaled identity.
fn initial_inverse(hp: &DMatrix<f64>, gp: &DVector<f64>) -> DMatrix<f64> {
    let p = gp.len();
    match hp.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => DMatrix::identity(p, p) / gp.norm().max(1.0),
    }
}

/// Quasi-Newton (BFGS) search with an Armijo line search, run on the log
/// scale for the components the model marks as positive.
pub fn search_mle(
    model: &dyn LikelihoodModel,
    data: &Dataset,
    theta0: &[f64],
    options: &SolverOptions,
) -> Result<EstimationResult> {
    options.validate()?;
    const ARMIJO: f64 = 1e-4;
    let coords = Coords { log: model.log_scale() };
    let mut theta = theta0.to_vec();
    model.project(&mut theta);
    let flags = BTreeSet::new();

    let (mut f, mut g, h) = model.derivatives(data, &theta)?;
    let mut phi = coords.to_search(&theta);
    let mut gp = coords.gradient(&theta, &g);
    let mut inv = initial_inverse(&coords.hessian(&theta, &g, &h), &gp);
    let mut gnorm = projected_gradient_norm(model, &theta, &g);
    let mut fresh = true;

    for iter in 0..options.max_iterations {
        if gnorm <= options.gradient_tolerance {
            return finish(model, data, theta, true, iter, flags, options.gradient_tolerance);
        }
        let mut direction = -(&inv * &gp);
        let mut slope = gp.dot(&direction);
        if !(slope < 0.0) {
            direction = -&gp;
            slope = -gp.norm_squared();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=options.step_halving_limit {
            let phi_t = &phi + &direction * step;
            let mut trial = coords.to_natural(&phi_t);
            model.project(&mut trial);
            if trial.iter().all(|v| v.is_finite()) && trial != theta {
                if let Ok(ft) = model.nll(data, &trial) {
                    if ft.is_finite() && ft < f && ft <= f + ARMIJO * step * slope {
                        accepted = Some((trial, ft, None));
                        break;
                    }
                    // Decrease lost in rounding: accept only if stationarity improves.
                    if ft.is_finite() && (ft - f).abs() <= 4.0 * f64::EPSILON * f.abs() {
                        let gt = model.grad(data, &trial)?;
                        if projected_gradient_norm(model, &trial, &gt) < gnorm {
                            accepted = Some((trial, ft.min(f), Some(gt)));
                            break;
                        }
                    }
                }
            }
            step *= 0.5;
        }
        let Some((next, fn_, g_trial)) = accepted else {
            if fresh {
                return finish(model, data, theta, false, iter, flags, options.gradient_tolerance);
            }
            // Restart from the analytic curvature before giving up.
            let h = model.hessian(data, &theta)?;
            inv = initial_inverse(&coords.hessian(&theta, &g, &h), &gp);
            fresh = true;
            continue;
        };
        let g_next = match g_trial {
            Some(gt) => gt,
            None => model.grad(data, &next)?,
        };
        let phi_next = coords.to_search(&next);
        let gp_next = coords.gradient(&next, &g_next);
        let s = &phi_next - &phi;
        let y = &gp_next - &gp;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let p = s.len();
            let left = DMatrix::identity(p, p) - &s * y.transpose() * rho;
            inv = &left * &inv * left.transpose() + &s * s.transpose() * rho;
        }
        fresh = false;
        theta = next;
        phi = phi_next;
        f = fn_;
        g = g_next;
        gp = gp_next;
        gnorm = projected_gradient_norm(model, &theta, &g);
    }
    let converged = gnorm <= options.gradient_tolerance;
    finish(model, data, theta, converged, options.max_iterations, flags, options.gradient_tolerance)
}

/// Runs the solver the model asks for.
pub fn fit(model: &dyn LikelihoodModel, data: &Dataset, theta0: &[f64], options: &SolverOptions) -> Result<EstimationResult> {
    match model.solver_kind() {
        SolverKind::Newton => newton_mle(model, data, theta0, options),
        SolverKind::Search => search_mle(model, data, theta0, options),
    }
}

/// `H̄ = n⁻¹ ∂²l/∂θ∂θᵀ` at `theta_hat`.
pub fn observed_fim(model: &dyn LikelihoodModel, data: &Dataset, theta_hat: &[f64]) -> Result<FimMatrix> {
    let h = model.hessian(data, theta_hat)?;
    FimMatrix::from_total_hessian(&h, FimKind::Observed, theta_hat.to_vec(), data.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussMix, SignalPlusNoise};
    use crate::rng::rng_from_seed;

    #[test]
    fn options_validation() {
        let mut o = SolverOptions::for_kind(SolverKind::Newton);
        assert!(o.validate().is_ok());
        o.gradient_tolerance = 0.0;
        assert!(o.validate().is_err());
        let mut o = SolverOptions::for_kind(SolverKind::Search);
        assert_eq!(o.gradient_tolerance, 1e-6);
        o.initializer = Initializer::User;
        assert!(o.validate().is_err());
    }

    #[test]
    fn perturbed_start_within_band() {
        let m = GaussMix::new(1.0).unwrap();
        let d = m.sample_seeded(10, &[0.5, 0.0, 4.0], 1).unwrap();
        let o = SolverOptions::for_kind(SolverKind::Newton);
        let s = initial_point(&m, &d, &[0.5, 1.0, 4.0], &o, &mut rng_from_seed(3)).unwrap();
        assert!((0.45..=0.55).contains(&s[0]));
        assert!((0.9..=1.1).contains(&s[1]));
        assert!((3.6..=4.4).contains(&s[2]));
    }

    #[test]
    fn quadratic_mean_in_one_step() {
        // With the noise variance pinned by projection bounds far away, the
        // mean direction is exactly quadratic.
        let m = SignalPlusNoise::one_d(50);
        let d = m.sample_seeded(50, &[10.0, 10.0], 2).unwrap();
        let h = m.hessian(&d, &[0.0, 10.0]).unwrap();
        let g = m.grad(&d, &[0.0, 10.0]).unwrap();
        let mu = -g[0] / h[(0, 0)];
        let g2 = m.grad(&d, &[mu, 10.0]).unwrap();
        assert!(g2[0].abs() < 1e-9);
    }

    #[test]
    fn observed_fim_is_symmetric() {
        let m = GaussMix::new(1.0).unwrap();
        let d = m.sample_seeded(40, &[0.5, 0.0, 4.0], 8).unwrap();
        let f = observed_fim(&m, &d, &[0.5, 0.1, 3.9]).unwrap();
        assert_eq!(f.entries(), &f.entries().transpose());
        assert_eq!(f.kind(), FimKind::Observed);
    }
}
