//! Solver contracts: stationarity, closed-form MLEs, cross-solver agreement.

use fimci::estimation::{fit, initial_point, newton_mle, observed_fim, search_mle, Flag, SolverOptions};
use fimci::models::{GaussMix, LikelihoodModel, SignalPlusNoise, SolverKind, StateSpace};
use fimci::numdiff::fd_hessian;
use fimci::rng::{rng_from_seed, SimRng};
use fimci::types::{Dataset, FimMatrix};
use fimci::Result;
use nalgebra::{DMatrix, DVector};

/// `½ (θ − c)ᵀ A (θ − c)` with fixed SPD `A`.
struct Quadratic {
    a: DMatrix<f64>,
    c: DVector<f64>,
}

impl LikelihoodModel for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("t{j}")).collect()
    }
    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY; self.dim()]
    }
    fn upper_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.dim()]
    }
    fn nll(&self, _: &Dataset, theta: &[f64]) -> Result<f64> {
        let d = DVector::from_column_slice(theta) - &self.c;
        Ok(0.5 * d.dot(&(&self.a * &d)))
    }
    fn grad(&self, _: &Dataset, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.a * (DVector::from_column_slice(theta) - &self.c))
    }
    fn hessian(&self, _: &Dataset, _: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
    fn expected_fim(&self, theta: &[f64], n: usize) -> Result<FimMatrix> {
        FimMatrix::new(self.a.clone(), fimci::types::FimKind::Expected, theta.to_vec(), n)
    }
    fn sample(&self, n: usize, _: &[f64], _: &mut SimRng) -> Result<Dataset> {
        Dataset::indexed(DMatrix::zeros(n, 1))
    }
    fn moment_start(&self, _: &Dataset) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.dim()])
    }
}

fn newton_opts() -> SolverOptions {
    SolverOptions::for_kind(SolverKind::Newton)
}

#[test]
fn quadratic_needs_one_newton_step() {
    let m = Quadratic {
        a: DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
        c: DVector::from_column_slice(&[1.0, -2.0]),
    };
    let d = Dataset::from_scalars(&[0.0]).unwrap();
    let r = newton_mle(&m, &d, &[10.0, 10.0], &newton_opts()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
}

#[test]
fn mixture_from_truth_is_stationary() {
    let m = GaussMix::new(1.0).unwrap();
    let theta = [0.5, 0.0, 4.0];
    for seed in 0..20 {
        let d = m.sample_seeded(50, &theta, seed).unwrap();
        let r = newton_mle(&m, &d, &theta, &newton_opts()).unwrap();
        assert!(r.converged, "seed {seed}");
        assert!(r.final_grad_norm < 1e-8);
        let g = m.grad(&d, r.theta_hat.values()).unwrap();
        assert!(g.norm() < 1e-8);
    }
}

#[test]
fn iid_normal_closed_form() {
    let n = 200;
    let m = SignalPlusNoise::with_noise(1, vec![DMatrix::zeros(1, 1); n]).unwrap();
    let d = m.sample_seeded(n, &[3.0, 2.0], 4).unwrap();
    let x = d.column(0);
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let r = newton_mle(&m, &d, &[2.7, 2.2], &newton_opts()).unwrap();
    assert!(r.converged);
    assert!((r.theta_hat.values()[0] - mean).abs() < 1e-10);
    assert!((r.theta_hat.values()[1] - var).abs() < 1e-10);
}

#[test]
fn search_agrees_with_newton_on_spn() {
    let m = SignalPlusNoise::one_d(300);
    let mut opts = newton_opts();
    for seed in 0..10 {
        let d = m.sample_seeded(300, &[10.0, 10.0], seed).unwrap();
        let a = newton_mle(&m, &d, &[9.5, 10.5], &opts).unwrap();
        opts.max_iterations = 500;
        let b = search_mle(&m, &d, &[9.5, 10.5], &opts).unwrap();
        assert!(a.converged && b.converged, "seed {seed}");
        for j in 0..2 {
            assert!((a.theta_hat.values()[j] - b.theta_hat.values()[j]).abs() < 1e-6);
        }
    }
}

#[test]
fn state_space_search_is_stationary() {
    let m = StateSpace::ar3();
    let opts = SolverOptions::for_kind(SolverKind::Search);
    for seed in 0..10 {
        let d = m.sample_seeded(100, &[1.0, 1.0, 1.0], seed).unwrap();
        let start = initial_point(&m, &d, &[1.0, 1.0, 1.0], &opts, &mut rng_from_seed(seed)).unwrap();
        let r = fit(&m, &d, &start, &opts).unwrap();
        if r.converged {
            assert!(r.final_grad_norm < 1e-6);
        } else {
            // Only an optimum on the variance floor may stop short.
            assert!(r.has(Flag::Boundary), "seed {seed}");
        }
    }
}

#[test]
fn search_decreases_nll_monotonically() {
    let m = StateSpace::ar3();
    let d = m.sample_seeded(100, &[1.0, 1.0, 1.0], 42).unwrap();
    let mut opts = SolverOptions::for_kind(SolverKind::Search);
    let mut prev = m.nll(&d, &[2.0, 0.5, 1.5]).unwrap();
    for k in 1..25 {
        opts.max_iterations = k;
        let r = search_mle(&m, &d, &[2.0, 0.5, 1.5], &opts).unwrap();
        assert!(r.nll <= prev, "iteration {k}");
        prev = r.nll;
    }
}

#[test]
fn solver_is_deterministic() {
    let m = GaussMix::new(1.0).unwrap();
    let d = m.sample_seeded(50, &[0.5, 0.0, 4.0], 6).unwrap();
    let a = newton_mle(&m, &d, &[0.45, 0.2, 3.7], &newton_opts()).unwrap();
    let b = newton_mle(&m, &d, &[0.45, 0.2, 3.7], &newton_opts()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mixture_relabeling_is_flagged() {
    let m = GaussMix::new(1.0).unwrap();
    let d = m.sample_seeded(50, &[0.5, 0.0, 4.0], 9).unwrap();
    let r = newton_mle(&m, &d, &[0.5, 4.0, 0.0], &newton_opts()).unwrap();
    assert!(r.has(Flag::Relabeled));
    let v = r.theta_hat.values();
    assert!(v[1] < v[2]);
}

#[test]
fn observed_fim_matches_finite_differences() {
    let m = GaussMix::new(1.0).unwrap();
    let d = m.sample_seeded(50, &[0.5, 0.0, 4.0], 10).unwrap();
    let theta = [0.48, 0.1, 3.9];
    let f = observed_fim(&m, &d, &theta).unwrap();
    let fd = fd_hessian(|t| m.nll(&d, t), &theta, 1e-4).unwrap() / 50.0;
    assert!((f.entries() - fd).amax() < 1e-5);

    let s = SignalPlusNoise::one_d(40);
    let ds = s.sample_seeded(40, &[10.0, 10.0], 1).unwrap();
    let fs = observed_fim(&s, &ds, &[9.0, 11.0]).unwrap();
    let direct: f64 = fimci::models::spn::noise_schedule_1d(40).iter().map(|q| 1.0 / (11.0 + q)).sum::<f64>() / 40.0;
    assert!((fs.entries()[(0, 0)] - direct).abs() < 1e-15);
}
