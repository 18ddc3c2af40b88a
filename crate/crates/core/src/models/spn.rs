//! Signal plus non-identically distributed noise.
//!
//! Observation `i` is `X_i ~ N(μ, Σ + Q_i)` with known noise covariances
//! `Q_i` and a diagonal `Σ`. Parameters are laid out as `[μ_1..μ_q,
//! Σ_11..Σ_qq]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LikelihoodModel, SolverKind};
use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::rng::{rng_from_seed, SimRng};
use crate::types::{symmetrize, Dataset, FimKind, FimMatrix};

/// Lower limit applied to the diagonal of Σ during optimization.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Scalar noise variances `q_i = 0.1 · (i mod 10)` for `i = 1..=n`.
pub fn noise_schedule_1d(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 0.1 * (i % 10) as f64).collect()
}

/// Draws a 4×4 matrix `U` with iid Uniform(0, 0.1) entries and returns it
/// together with `Q_i = sqrt(i) · U Uᵀ` for `i = 1..=n`.
pub fn noise_schedule_4d(n: usize, rng: &mut SimRng) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let u = DMatrix::from_fn(4, 4, |_, _| 0.1 * rng.random::<f64>());
    let gram = &u * u.transpose();
    let schedule = (1..=n).map(|i| &gram * (i as f64).sqrt()).collect();
    (u, schedule)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlusNoise {
    q: usize,
    noise: Vec<DMatrix<f64>>,
    u: Option<DMatrix<f64>>,
}

/// Per-observation inverse covariance and log-determinant at one θ.
struct Factor {
    precision: DMatrix<f64>,
    log_det: f64,
}

impl SignalPlusNoise {
    /// Model with an explicit noise covariance per observation index.
    pub fn with_noise(q: usize, noise: Vec<DMatrix<f64>>) -> Result<Self> {
        if q == 0 || noise.is_empty() {
            return Err(Error::DimensionMismatch("need q >= 1 and a non-empty noise schedule".into()));
        }
        for (i, m) in noise.iter().enumerate() {
            if m.shape() != (q, q) {
                return Err(Error::DimensionMismatch(format!("Q_{} is {:?}, expected {q}x{q}", i + 1, m.shape())));
            }
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::Domain(format!("Q_{} is not symmetric", i + 1)));
            }
        }
        Ok(Self { q, noise, u: None })
    }

    /// Scalar model with the `0.1 · (i mod 10)` schedule.
    pub fn one_d(n: usize) -> Self {
        let noise = noise_schedule_1d(n).into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect();
        Self { q: 1, noise, u: None }
    }

    /// Four-dimensional model with a frozen draw of `U` from `rng`.
    pub fn four_d(n: usize, rng: &mut SimRng) -> Self {
        let (u, noise) = noise_schedule_4d(n, rng);
        Self { q: 4, noise, u: Some(u) }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn noise(&self) -> &[DMatrix<f64>] {
        &self.noise
    }

    /// The frozen `U` of the four-dimensional schedule, if any.
    pub fn frozen_u(&self) -> Option<&DMatrix<f64>> {
        self.u.as_ref()
    }

    /// Indices of the mean components in the parameter vector.
    pub fn mean_indices(&self) -> std::ops::Range<usize> {
        0..self.q
    }

    pub fn sample_seeded(&self, n: usize, theta: &[f64], seed: u64) -> Result<Dataset> {
        self.sample(n, theta, &mut rng_from_seed(seed))
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 2 * self.q {
            return Err(Error::DimensionMismatch(format!(
                "signal-plus-noise expects {} parameters, got {}",
                2 * self.q,
                theta.len()
            )));
        }
        Ok(())
    }

    fn noise_at(&self, index: usize) -> Result<&DMatrix<f64>> {
        self.noise.get(index).ok_or_else(|| {
            Error::DimensionMismatch(format!("observation index {index} exceeds schedule length {}", self.noise.len()))
        })
    }

    fn covariance(&self, theta: &[f64], index: usize) -> Result<DMatrix<f64>> {
        let mut s = self.noise_at(index)?.clone();
        for j in 0..self.q {
            s[(j, j)] += theta[self.q + j];
        }
        Ok(s)
    }

    fn factor(&self, theta: &[f64], index: usize) -> Result<Factor> {
        let s = self.covariance(theta, index)?;
        let chol = s.cholesky().ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Factor { precision: symmetrize(&chol.inverse()), log_det })
    }

    // Factor every observation's covariance once per θ.
    fn factors(&self, data: &Dataset, theta: &[f64]) -> Result<Vec<Factor>> {
        if data.q() != self.q {
            return Err(Error::DimensionMismatch(format!("data has q = {}, model q = {}", data.q(), self.q)));
        }
        data.meta().iter().map(|&i| self.factor(theta, i)).collect()
    }
}

impl LikelihoodModel for SignalPlusNoise {
    fn dim(&self) -> usize {
        2 * self.q
    }

    fn names(&self) -> Vec<String> {
        if self.q == 1 {
            return vec!["mu".into(), "sigma2".into()];
        }
        let means = (1..=self.q).map(|j| format!("mu{j}"));
        let vars = (1..=self.q).map(|j| format!("sigma{j}{j}"));
        means.chain(vars).collect()
    }

    fn lower_bounds(&self) -> Vec<f64> {
        let mut b = vec![f64::NEG_INFINITY; self.q];
        b.extend(std::iter::repeat_n(0.0, self.q));
        b
    }

    fn upper_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; 2 * self.q]
    }

    fn nll(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        let factors = self.factors(data, theta)?;
        let mu = DVector::from_column_slice(&theta[..self.q]);
        let mut value = 0.5 * (data.n() * self.q) as f64 * LN_2PI;
        for (row, f) in data.observations().row_iter().zip(&factors) {
            let r = row.transpose() - &mu;
            value += 0.5 * (f.log_det + r.dot(&(&f.precision * &r)));
        }
        Ok(value)
    }

    fn grad(&self, data: &Dataset, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.derivatives(data, theta)?.1)
    }

    fn hessian(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.derivatives(data, theta)?.2)
    }

    fn derivatives(&self, data: &Dataset, theta: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.check(theta)?;
        let q = self.q;
        let factors = self.factors(data, theta)?;
        let mu = DVector::from_column_slice(&theta[..q]);
        let mut value = 0.5 * (data.n() * q) as f64 * LN_2PI;
        let mut g = DVector::zeros(2 * q);
        let mut h = DMatrix::zeros(2 * q, 2 * q);
        for (row, f) in data.observations().row_iter().zip(&factors) {
            let p = &f.precision;
            let r = row.transpose() - &mu;
            let u = p * &r;
            value += 0.5 * (f.log_det + r.dot(&u));
            for k in 0..q {
                g[k] -= u[k];
                g[q + k] += 0.5 * (p[(k, k)] - u[k] * u[k]);
                for j in 0..q {
                    h[(k, q + j)] += p[(k, j)] * u[j];
                }
                for j in k..q {
                    h[(k, j)] += p[(k, j)];
                    h[(q + k, q + j)] += -0.5 * p[(k, j)] * p[(k, j)] + u[k] * p[(k, j)] * u[j];
                }
            }
        }
        for a in 0..2 * q {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        Ok((value, g, h))
    }

    /// Closed-form information: mean block `n⁻¹ Σ P_i`, variance block
    /// `n⁻¹ Σ ½ (P_i)_{jk}²`, zero cross block, with `P_i = (Σ + Q_i)⁻¹`.
    fn expected_fim(&self, theta: &[f64], n: usize) -> Result<FimMatrix> {
        self.check(theta)?;
        if n == 0 || n > self.noise.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample size {n} outside the noise schedule of length {}",
                self.noise.len()
            )));
        }
        let q = self.q;
        let mut fim = DMatrix::zeros(2 * q, 2 * q);
        for i in 0..n {
            let p = self.factor(theta, i)?.precision;
            for k in 0..q {
                for j in k..q {
                    fim[(k, j)] += p[(k, j)];
                    fim[(q + k, q + j)] += 0.5 * p[(k, j)] * p[(k, j)];
                }
            }
        }
        for a in 0..2 * q {
            for b in 0..a {
                fim[(a, b)] = fim[(b, a)];
            }
        }
        fim /= n as f64;
        FimMatrix::new(fim, FimKind::Expected, theta.to_vec(), n)
    }

    fn sample(&self, n: usize, theta: &[f64], rng: &mut SimRng) -> Result<Dataset> {
        self.check(theta)?;
        if theta[self.q..].iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("diagonal of Σ must be positive".into()));
        }
        let q = self.q;
        let mut obs = DMatrix::zeros(n, q);
        for i in 0..n {
            let l = psd_factor(&self.covariance(theta, i)?);
            let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * z;
            for j in 0..q {
                obs[(i, j)] = theta[j] + x[j];
            }
        }
        Dataset::indexed(obs)
    }

    fn project(&self, theta: &mut [f64]) {
        for v in &mut theta[self.q..] {
            *v = v.max(VARIANCE_FLOOR);
        }
    }

    fn at_boundary(&self, theta: &[f64]) -> bool {
        theta[self.q..].iter().any(|&v| v <= VARIANCE_FLOOR)
    }

    fn log_scale(&self) -> Vec<bool> {
        let mut s = vec![false; self.q];
        s.extend(std::iter::repeat_n(true, self.q));
        s
    }

    /// Sample mean, and sample variance less the average noise variance.
    fn moment_start(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.n();
        if n < 2 {
            return Err(Error::Domain("moment start needs at least two observations".into()));
        }
        let q = self.q;
        let mut start = vec![0.0; 2 * q];
        for j in 0..q {
            let col = data.observations().column(j);
            let mean = col.mean();
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let mut noise = 0.0;
            for &i in data.meta() {
                noise += self.noise_at(i)?[(j, j)];
            }
            noise /= n as f64;
            start[j] = mean;
            start[q + j] = (var - noise).max(0.1 * var).max(VARIANCE_FLOOR);
        }
        Ok(start)
    }

    fn solver_kind(&self) -> SolverKind {
        SolverKind::Newton
    }
}
