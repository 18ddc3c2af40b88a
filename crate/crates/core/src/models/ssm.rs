//! Linear-Gaussian state-space model with scalar observations.
//!
//! `x_t = A x_{t-1} + w_t`, `y_t = c·x_t + v_t`, `w_t ~ N(0, Q)` with
//! `Q = diag(θ)`, `v_t ~ N(0, R)`, `x_0 ~ N(μ0, P0)`. The likelihood is
//! evaluated through the Kalman filter innovations; derivatives with
//! respect to the diagonal of `Q` are propagated alongside the filter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LikelihoodModel, SolverKind};
use crate::error::{Error, Result};
use crate::linalg::{discrete_lyapunov, psd_factor};
use crate::rng::{rng_from_seed, SimRng};
use crate::types::{symmetrize, Dataset, FimKind, FimMatrix};

/// Lower limit applied to the process-noise variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    c: DVector<f64>,
    r: f64,
    mu0: DVector<f64>,
    p0: DMatrix<f64>,
    joseph: bool,
}

/// Everything the filter produced for one series.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub innovations: Vec<f64>,
    pub innovation_covs: Vec<f64>,
    pub gains: Vec<DVector<f64>>,
    pub predicted_states: Vec<DVector<f64>>,
    pub filtered_states: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

// One predict/update step.
struct Step {
    xp: DVector<f64>,
    pp: DMatrix<f64>,
    // P_{t|t-1} c, which is also (c P_{t|t-1})ᵀ.
    ppc: DVector<f64>,
    s: f64,
    k: DVector<f64>,
}

// First-order sensitivities of one step.
struct Sens {
    dppc: Vec<DVector<f64>>,
    ds: Vec<f64>,
    dk: Vec<DVector<f64>>,
}

impl StateSpace {
    /// `c` is given as an `m × l` matrix; only `m = 1` is supported.
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, r: DMatrix<f64>, mu0: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        let l = a.nrows();
        if !a.is_square() || l == 0 {
            return Err(Error::DimensionMismatch("A must be square and non-empty".into()));
        }
        if c.nrows() != 1 {
            return Err(Error::Unsupported(format!("observation dimension {} (only scalar observations)", c.nrows())));
        }
        if c.ncols() != l || r.shape() != (1, 1) || mu0.len() != l || p0.shape() != (l, l) {
            return Err(Error::DimensionMismatch("C, R, mu0, P0 do not conform to A".into()));
        }
        let r = r[(0, 0)];
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain("R must be positive".into()));
        }
        if (&p0 - p0.transpose()).amax() > 1e-12 * p0.amax().max(1.0) {
            return Err(Error::Domain("P0 must be symmetric".into()));
        }
        if nalgebra::SymmetricEigen::new(p0.clone()).eigenvalues.min() < -1e-12 * p0.amax().max(1.0) {
            return Err(Error::Domain("P0 must be positive semidefinite".into()));
        }
        Ok(Self { a, c: c.row(0).transpose(), r, mu0, p0, joseph: false })
    }

    /// The three-state system used in the experiments, with `μ0 = 0`,
    /// `P0 = 0`, `c = [1, 0, 0]` and `R = 1`.
    pub fn ar3() -> Self {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.8, 0.8, -0.8]);
        Self {
            a,
            c: DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            r: 1.0,
            mu0: DVector::zeros(3),
            p0: DMatrix::zeros(3, 3),
            joseph: false,
        }
    }

    /// Switches the covariance update to the Joseph form.
    pub fn with_joseph(mut self, joseph: bool) -> Self {
        self.joseph = joseph;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn design(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn obs_variance(&self) -> f64 {
        self.r
    }

    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn initial_cov(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn sample_seeded(&self, n: usize, theta: &[f64], seed: u64) -> Result<Dataset> {
        self.sample(n, theta, &mut rng_from_seed(seed))
    }

    /// Variance of `y_t` once the state has reached stationarity.
    pub fn stationary_output_variance(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        let sigma = discrete_lyapunov(&self.a, &DMatrix::from_diagonal(&DVector::from_column_slice(theta)))?;
        Ok(self.c.dot(&(&sigma * &self.c)) + self.r)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state-space model expects {} parameters, got {}",
                self.state_dim(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite process-noise variance".into()));
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.q() != 1 {
            return Err(Error::DimensionMismatch(format!("expected scalar observations, got q = {}", data.q())));
        }
        Ok(())
    }

    // Prediction and gain for step `t` (1-based), from the filtered
    // covariance of step t-1. The state prediction is left to the caller.
    fn predict(&self, pf: &DMatrix<f64>, theta: &[f64], t: usize) -> Result<(DMatrix<f64>, DVector<f64>, f64, DVector<f64>)> {
        let mut pp = &self.a * pf * self.a.transpose();
        for (j, q) in theta.iter().enumerate() {
            pp[(j, j)] += q;
        }
        let pp = symmetrize(&pp);
        let ppc = &pp * &self.c;
        let s = self.c.dot(&ppc) + self.r;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::FilterDivergence { step: t, variance: s });
        }
        let k = &ppc / s;
        Ok((pp, ppc, s, k))
    }

    fn update_cov(&self, step: &Step) -> DMatrix<f64> {
        let pf = if self.joseph {
            let l = self.state_dim();
            let ikc = DMatrix::identity(l, l) - &step.k * self.c.transpose();
            &ikc * &step.pp * ikc.transpose() + &step.k * step.k.transpose() * self.r
        } else {
            &step.pp - &step.k * step.ppc.transpose()
        };
        symmetrize(&pf)
    }

    fn advance(&self, xf: &mut DVector<f64>, pf: &mut DMatrix<f64>, theta: &[f64], y: f64, t: usize) -> Result<(Step, f64)> {
        let (pp, ppc, s, k) = self.predict(pf, theta, t)?;
        let xp = &self.a * &*xf;
        let eps = y - self.c.dot(&xp);
        let step = Step { xp, pp, ppc, s, k };
        *xf = &step.xp + &step.k * eps;
        *pf = self.update_cov(&step);
        Ok((step, eps))
    }

    // Sensitivities of S_t, K_t and P_{t|t-1} c; advances dP_{t|t} in place.
    fn sens(&self, step: &Step, dpf: &mut [DMatrix<f64>]) -> (Sens, Vec<DMatrix<f64>>) {
        let p = dpf.len();
        let mut out = Sens { dppc: Vec::with_capacity(p), ds: Vec::with_capacity(p), dk: Vec::with_capacity(p) };
        let mut dpp_all = Vec::with_capacity(p);
        for (i, d) in dpf.iter_mut().enumerate() {
            let mut dpp = &self.a * &*d * self.a.transpose();
            dpp[(i, i)] += 1.0;
            let dppc = &dpp * &self.c;
            let ds = self.c.dot(&dppc);
            let dk = (&dppc - &step.k * ds) / step.s;
            *d = symmetrize(&(&dpp - &dk * step.ppc.transpose() - &step.k * dppc.transpose()));
            out.dppc.push(dppc);
            out.ds.push(ds);
            out.dk.push(dk);
            dpp_all.push(dpp);
        }
        (out, dpp_all)
    }

    /// Runs the filter and records every intermediate quantity.
    pub fn kalman_filter(&self, data: &Dataset, theta: &[f64]) -> Result<FilterTrace> {
        self.check(theta)?;
        self.check_data(data)?;
        let n = data.n();
        let mut trace = FilterTrace {
            innovations: Vec::with_capacity(n),
            innovation_covs: Vec::with_capacity(n),
            gains: Vec::with_capacity(n),
            predicted_states: Vec::with_capacity(n),
            filtered_states: Vec::with_capacity(n),
            predicted_covs: Vec::with_capacity(n),
            filtered_covs: Vec::with_capacity(n),
            loglik: -0.5 * n as f64 * LN_2PI,
        };
        let mut xf = self.mu0.clone();
        let mut pf = self.p0.clone();
        for (t, &y) in data.observations().column(0).iter().enumerate() {
            let (step, eps) = self.advance(&mut xf, &mut pf, theta, y, t + 1)?;
            trace.loglik -= 0.5 * (step.s.ln() + eps * eps / step.s);
            trace.innovations.push(eps);
            trace.innovation_covs.push(step.s);
            trace.gains.push(step.k);
            trace.predicted_states.push(step.xp);
            trace.filtered_states.push(xf.clone());
            trace.predicted_covs.push(step.pp);
            trace.filtered_covs.push(pf.clone());
        }
        Ok(trace)
    }

    // Value and, depending on `order`, gradient and Hessian of the nll.
    fn pass(&self, data: &Dataset, theta: &[f64], order: u8) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.check(theta)?;
        self.check_data(data)?;
        let l = self.state_dim();
        let p = l;
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();

        let mut xf = self.mu0.clone();
        let mut pf = self.p0.clone();
        let mut dxf = vec![DVector::zeros(l); p];
        let mut dpf = vec![DMatrix::zeros(l, l); p];
        let mut d2xf = vec![DVector::zeros(l); pairs.len()];
        let mut d2pf = vec![DMatrix::zeros(l, l); pairs.len()];

        let mut value = 0.5 * data.n() as f64 * LN_2PI;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);

        for (t, &y) in data.observations().column(0).iter().enumerate() {
            let (step, eps) = self.advance(&mut xf, &mut pf, theta, y, t + 1)?;
            let s = step.s;
            value += 0.5 * (s.ln() + eps * eps / s);
            if order == 0 {
                continue;
            }

            let dxp: Vec<DVector<f64>> = dxf.iter().map(|d| &self.a * d).collect();
            let deps: Vec<f64> = dxp.iter().map(|d| -self.c.dot(d)).collect();
            let (sn, _) = self.sens(&step, &mut dpf);
            for i in 0..p {
                g[i] += 0.5 * (sn.ds[i] / s + 2.0 * eps * deps[i] / s - eps * eps * sn.ds[i] / (s * s));
            }

            if order >= 2 {
                for (idx, &(i, j)) in pairs.iter().enumerate() {
                    let d2pp = &self.a * &d2pf[idx] * self.a.transpose();
                    let d2ppc = &d2pp * &self.c;
                    let d2s = self.c.dot(&d2ppc);
                    let d2k = (&d2ppc - &sn.dk[i] * sn.ds[j] - &sn.dk[j] * sn.ds[i] - &step.k * d2s) / s;
                    d2pf[idx] = symmetrize(
                        &(&d2pp
                            - &d2k * step.ppc.transpose()
                            - &sn.dk[i] * sn.dppc[j].transpose()
                            - &sn.dk[j] * sn.dppc[i].transpose()
                            - &step.k * d2ppc.transpose()),
                    );
                    let d2xp = &self.a * &d2xf[idx];
                    let d2eps = -self.c.dot(&d2xp);
                    d2xf[idx] = &d2xp + &d2k * eps + &sn.dk[i] * deps[j] + &sn.dk[j] * deps[i] + &step.k * d2eps;

                    let (dsi, dsj) = (sn.ds[i], sn.ds[j]);
                    let v = 0.5 * (d2s / s - dsi * dsj / (s * s))
                        + (deps[i] * deps[j] + eps * d2eps) / s
                        - eps * (deps[i] * dsj + deps[j] * dsi) / (s * s)
                        - 0.5 * eps * eps * d2s / (s * s)
                        + eps * eps * dsi * dsj / (s * s * s);
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }

            for i in 0..p {
                dxf[i] = &dxp[i] + &sn.dk[i] * eps + &step.k * deps[i];
            }
        }
        Ok((value, g, h))
    }
}

impl LikelihoodModel for StateSpace {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn names(&self) -> Vec<String> {
        (1..=self.state_dim()).map(|j| format!("q{j}{j}")).collect()
    }

    fn lower_bounds(&self) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn upper_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.state_dim()]
    }

    fn nll(&self, data: &Dataset, theta: &[f64]) -> Result<f64> {
        Ok(self.pass(data, theta, 0)?.0)
    }

    fn grad(&self, data: &Dataset, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.pass(data, theta, 1)?.1)
    }

    fn hessian(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.pass(data, theta, 2)?.2)
    }

    fn derivatives(&self, data: &Dataset, theta: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.pass(data, theta, 2)
    }

    /// Innovations-form expected information. The second moments of the
    /// innovation sensitivities come from the joint covariance of the state,
    /// its filtered estimate and the estimate's sensitivities.
    fn expected_fim(&self, theta: &[f64], n: usize) -> Result<FimMatrix> {
        self.check(theta)?;
        if n == 0 {
            return Err(Error::DimensionMismatch("sample size must be positive".into()));
        }
        let l = self.state_dim();
        let p = l;
        let blocks = 2 + p;
        let dim = l * blocks;
        let mut pf = self.p0.clone();
        let mut dpf = vec![DMatrix::zeros(l, l); p];

        let mut gamma = DMatrix::zeros(dim, dim);
        gamma.view_mut((0, 0), (l, l)).copy_from(&self.p0);
        let mut big_a = DMatrix::zeros(dim, dim);
        for b in 0..blocks {
            big_a.view_mut((b * l, b * l), (l, l)).copy_from(&self.a);
        }
        let eye = DMatrix::<f64>::identity(l, l);

        let mut fim = DMatrix::zeros(p, p);
        for t in 1..=n {
            let (pp, ppc, s, k) = self.predict(&pf, theta, t)?;
            let step = Step { xp: DVector::zeros(0), pp, ppc, s, k };
            pf = self.update_cov(&step);
            let (sn, _) = self.sens(&step, &mut dpf);

            let mut lambda = &big_a * &gamma * big_a.transpose();
            for (j, q) in theta.iter().enumerate() {
                lambda[(j, j)] += q;
            }
            for i in 0..p {
                for j in i..p {
                    let block = lambda.view(((2 + i) * l, (2 + j) * l), (l, l));
                    let e = self.c.dot(&(block * &self.c));
                    let v = 0.5 * sn.ds[i] * sn.ds[j] / (s * s) + e / s;
                    fim[(i, j)] += v;
                    if i != j {
                        fim[(j, i)] += v;
                    }
                }
            }

            let kc = &step.k * self.c.transpose();
            let ikc = &eye - &kc;
            let mut gmap = DMatrix::zeros(dim, dim);
            gmap.view_mut((0, 0), (l, l)).copy_from(&eye);
            gmap.view_mut((l, 0), (l, l)).copy_from(&kc);
            gmap.view_mut((l, l), (l, l)).copy_from(&ikc);
            let mut noise = DVector::zeros(dim);
            noise.rows_mut(l, l).copy_from(&step.k);
            for i in 0..p {
                let dkc = &sn.dk[i] * self.c.transpose();
                let row = (2 + i) * l;
                gmap.view_mut((row, 0), (l, l)).copy_from(&dkc);
                gmap.view_mut((row, l), (l, l)).copy_from(&(-&dkc));
                gmap.view_mut((row, row), (l, l)).copy_from(&ikc);
                noise.rows_mut(row, l).copy_from(&sn.dk[i]);
            }
            gamma = symmetrize(&(&gmap * &lambda * gmap.transpose() + &noise * noise.transpose() * self.r));
        }
        fim /= n as f64;
        FimMatrix::new(fim, FimKind::Expected, theta.to_vec(), n)
    }

    fn sample(&self, n: usize, theta: &[f64], rng: &mut SimRng) -> Result<Dataset> {
        self.check(theta)?;
        if theta.iter().any(|&q| q < 0.0) {
            return Err(Error::Domain("process-noise variances must be non-negative".into()));
        }
        let l = self.state_dim();
        let init = psd_factor(&self.p0);
        let z = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = &self.mu0 + init * z;
        let sd: Vec<f64> = theta.iter().map(|q| q.sqrt()).collect();
        let r_sd = self.r.sqrt();
        let mut obs = DMatrix::zeros(n, 1);
        for t in 0..n {
            let w = DVector::from_fn(l, |j, _| sd[j] * rng.sample::<f64, _>(StandardNormal));
            x = &self.a * x + w;
            obs[(t, 0)] = self.c.dot(&x) + r_sd * rng.sample::<f64, _>(StandardNormal);
        }
        Dataset::indexed(obs)
    }

    fn project(&self, theta: &mut [f64]) {
        for v in theta.iter_mut() {
            *v = v.max(VARIANCE_FLOOR);
        }
    }

    fn at_boundary(&self, theta: &[f64]) -> bool {
        theta.iter().any(|&v| v <= VARIANCE_FLOOR)
    }

    fn log_scale(&self) -> Vec<bool> {
        vec![true; self.state_dim()]
    }

    /// Common value `q·(1, …, 1)` whose stationary output variance matches
    /// the sample variance.
    fn moment_start(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let n = data.n();
        if n < 2 {
            return Err(Error::Domain("moment start needs at least two observations".into()));
        }
        let l = self.state_dim();
        let col = data.observations().column(0);
        let mean = col.mean();
        let var = col.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64;
        let unit = discrete_lyapunov(&self.a, &DMatrix::identity(l, l))
            .map(|s| self.c.dot(&(&s * &self.c)))
            .ok()
            .filter(|g| *g > 0.0 && g.is_finite());
        let q = match unit {
            Some(g) => ((var - self.r) / g).max(0.05 * var / g),
            None => 1.0,
        };
        Ok(vec![q.max(VARIANCE_FLOOR); l])
    }

    fn solver_kind(&self) -> SolverKind {
        SolverKind::Search
    }
}
