//! Two-component Gaussian mixture with a known common standard deviation.
//!
//! Parameters are ordered `[λ, μ1, μ2]`, with density
//! `f(x) = λ N(x; μ1, σ²) + (1 − λ) N(x; μ2, σ²)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LikelihoodModel;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{rng_from_seed, SimRng};
use crate::types::{Dataset, FimKind, FimMatrix};

/// Newton iterates keep λ inside `[LAMBDA_FLOOR, 1 − LAMBDA_FLOOR]`.
pub const LAMBDA_FLOOR: f64 = 1e-6;
/// Half-width of the expected-information integration range, in σ.
pub const QUADRATURE_SIGMAS: f64 = 8.0;
/// Absolute tolerance per entry of the expected information.
pub const QUADRATURE_TOL: f64 = 1e-9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMix {
    sigma: f64,
}

/// Log-density, score and Hessian of the log-density at a single point.
#[derive(Debug, Clone, Copy)]
pub struct PointTerms {
    pub log_density: f64,
    pub score: [f64; 3],
    pub hessian: [[f64; 3]; 3],
}

impl GaussMix {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn check(theta: &[f64]) -> Result<(f64, f64, f64)> {
        if theta.len() != 3 {
            return Err(Error::DimensionMismatch(format!("mixture expects 3 parameters, got {}", theta.len())));
        }
        let lambda = theta[0];
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain(format!("mixing weight {lambda} is not in (0, 1)")));
        }
        Ok((lambda, theta[1], theta[2]))
    }

    pub fn density(&self, x: f64, theta: &[f64]) -> Result<f64> {
        Ok(self.log_density(x, theta)?.exp())
    }

    pub fn log_density(&self, x: f64, theta: &[f64]) -> Result<f64> {
        Self::check(theta)?;
        Ok(self.point_terms(x, theta).log_density)
    }

    /// Per-observation derivatives of `log f`, computed from component
    /// responsibilities so that far-out points do not underflow.
    pub fn point_terms(&self, x: f64, theta: &[f64]) -> PointTerms {
        let (lambda, mu1, mu2) = (theta[0], theta[1], theta[2]);
        let s2 = self.sigma * self.sigma;
        let z1 = (x - mu1) / self.sigma;
        let z2 = (x - mu2) / self.sigma;
        let base = -LN_SQRT_2PI - self.sigma.ln();
        let la = lambda.ln() + base - 0.5 * z1 * z1;
        let lb = (1.0 - lambda).ln() + base - 0.5 * z2 * z2;
        let m = la.max(lb);
        let log_density = m + ((la - m).exp() + (lb - m).exp()).ln();
        let w1 = (la - log_density).exp();
        let w2 = (lb - log_density).exp();
        let d1 = (x - mu1) / s2;
        let d2 = (x - mu2) / s2;

        let score = [w1 / lambda - w2 / (1.0 - lambda), w1 * d1, w2 * d2];
        // Second derivatives of f divided by f.
        let f2 = [
            [0.0, w1 * d1 / lambda, -w2 * d2 / (1.0 - lambda)],
            [w1 * d1 / lambda, w1 * (d1 * d1 - 1.0 / s2), 0.0],
            [-w2 * d2 / (1.0 - lambda), 0.0, w2 * (d2 * d2 - 1.0 / s2)],
        ];
        let mut hessian = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                hessian[i][j] = f2[i][j] - score[i] * score[j];
            }
        }
        PointTerms { log_density, score, hessian }
    }

    pub fn sample_seeded(&self, n: usize, theta: &[f64], seed: u64) -> Result<Dataset> {
        self.sample(n, theta, &mut rng_from_seed(seed))
    }

    /// Expected information from the score outer product,
    /// `∫ s sᵀ f dx`; equals [`LikelihoodModel::expected_fim`] under the
    /// information equality and serves as a cross-check.
    pub fn score_outer_fim(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Self::check(theta)?;
        self.integrate_fim(theta, |t| {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = t.score[i] * t.score[j];
                }
            }
            m
        })
    }

    fn integrate_fim<G>(&self, theta: &[f64], per_point: G) -> Result<DMatrix<f64>>
    where
        G: Fn(&PointTerms) -> [[f64; 3]; 3],
    {
        let lo = theta[1].min(theta[2]) - QUADRATURE_SIGMAS * self.sigma;
        let hi = theta[1].max(theta[2]) + QUADRATURE_SIGMAS * self.sigma;
        const IDX: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        let r = quadrature::integrate(
            |x, out| {
                let t = self.point_terms(x, theta);
                let m = per_point(&t);
                let f = t.log_density.exp();
                for (k, &(i, j)) in IDX.iter().enumerate() {
                    out[k] = m[i][j] * f;
                }
            },
            lo,
            hi,
            IDX.len(),
            QUADRATURE_TOL,
        )?;
        let mut fim = DMatrix::zeros(3, 3);
        for (k, &(i, j)) in IDX.iter().enumerate() {
            fim[(i, j)] = r.value[k];
            fim[(j, i)] = r.value[k];
        }
        Ok(fim)
    }
}

impl LikelihoodModel for GaussMix {
    fn dim(&self) -> usize {
        3
    }

    fn names(&self) -> Vec<String> {
        vec!["lambda".into(), "mu1".into(), "mu2".into()]
    }

    fn lower_bounds(&self) -> Vec<f64> {
        vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]
    }

    fn upper_bounds(&self) -> Vec<f64> {
        vec![1.0, f64::INFINITY, f64::INFINITY]
    }

    fn nll(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        Self::check(theta)?;
        Ok(-data.observations().column(0).iter().map(|&x| self.point_terms(x, theta).log_density).sum::<f64>())
    }

    fn grad(&self, data: &Dataset, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.derivatives(data, theta)?.1)
    }

    fn hessian(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.derivatives(data, theta)?.2)
    }

    fn derivatives(&self, data: &Dataset, theta: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        Self::check(theta)?;
        let mut value = 0.0;
        let mut g = DVector::zeros(3);
        let mut h = DMatrix::zeros(3, 3);
        for &x in data.observations().column(0).iter() {
            let t = self.point_terms(x, theta);
            value -= t.log_density;
            for i in 0..3 {
                g[i] -= t.score[i];
                for j in 0..3 {
                    h[(i, j)] -= t.hessian[i][j];
                }
            }
        }
        Ok((value, g, h))
    }

    fn expected_fim(&self, theta: &[f64], n: usize) -> Result<FimMatrix> {
        Self::check(theta)?;
        let fim = self.integrate_fim(theta, |t| {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = -t.hessian[i][j];
                }
            }
            m
        })?;
        FimMatrix::new(fim, FimKind::Expected, theta.to_vec(), n)
    }

    fn sample(&self, n: usize, theta: &[f64], rng: &mut SimRng) -> Result<Dataset> {
        let (lambda, mu1, mu2) = Self::check_sampling(theta)?;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let first = rng.random::<f64>() < lambda;
                let z: f64 = rng.sample(StandardNormal);
                (if first { mu1 } else { mu2 }) + self.sigma * z
            })
            .collect();
        Dataset::from_scalars(&values)
    }

    fn project(&self, theta: &mut [f64]) {
        theta[0] = theta[0].clamp(LAMBDA_FLOOR, 1.0 - LAMBDA_FLOOR);
    }

    fn at_boundary(&self, theta: &[f64]) -> bool {
        theta[0] <= LAMBDA_FLOOR || theta[0] >= 1.0 - LAMBDA_FLOOR
    }

    fn canonicalize(&self, theta: &mut [f64]) -> bool {
        if theta[1] > theta[2] {
            theta.swap(1, 2);
            theta[0] = 1.0 - theta[0];
            true
        } else {
            false
        }
    }

    /// Equal weights, component means from the lower and upper halves of the
    /// sorted data.
    fn moment_start(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut xs = data.column(0);
        if xs.len() < 2 {
            return Err(Error::Domain("moment start needs at least two observations".into()));
        }
        xs.sort_by(f64::total_cmp);
        let half = xs.len() / 2;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Ok(vec![0.5, mean(&xs[..half]), mean(&xs[half..])])
    }
}

impl GaussMix {
    // Sampling also accepts the degenerate weights 0 and 1.
    fn check_sampling(theta: &[f64]) -> Result<(f64, f64, f64)> {
        if theta.len() != 3 {
            return Err(Error::DimensionMismatch(format!("mixture expects 3 parameters, got {}", theta.len())));
        }
        if !(0.0..=1.0).contains(&theta[0]) {
            return Err(Error::Domain(format!("mixing weight {} is not in [0, 1]", theta[0])));
        }
        Ok((theta[0], theta[1], theta[2]))
    }
}
