//! Central finite differences, used as an independent check on analytic
//! derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::symmetrize;

fn steps(theta: &[f64], rel_step: f64) -> Result<Vec<f64>> {
    theta
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let h = rel_step * (1.0 + t.abs());
            if !(h > 0.0) || t + h == t || t - h == t {
                Err(Error::StepUnderflow { component: j })
            } else {
                Ok(h)
            }
        })
        .collect()
}

/// Central-difference gradient with steps `h_j = rel_step · (1 + |θ_j|)`.
pub fn fd_gradient<F>(f: F, theta: &[f64], rel_step: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let h = steps(theta, rel_step)?;
    let mut x = theta.to_vec();
    let mut g = DVector::zeros(theta.len());
    for j in 0..theta.len() {
        x[j] = theta[j] + h[j];
        let fp = f(&x)?;
        x[j] = theta[j] - h[j];
        let fm = f(&x)?;
        x[j] = theta[j];
        g[j] = (fp - fm) / (2.0 * h[j]);
    }
    Ok(g)
}

/// Central-difference Hessian of a scalar function, symmetrized.
pub fn fd_hessian<F>(f: F, theta: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = theta.len();
    let h = steps(theta, rel_step)?;
    let mut x = theta.to_vec();
    let f0 = f(theta)?;
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..p {
        x[i] = theta[i] + h[i];
        let fp = f(&x)?;
        x[i] = theta[i] - h[i];
        let fm = f(&x)?;
        x[i] = theta[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..p {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                x[i] = theta[i] + si * h[i];
                x[j] = theta[j] + sj * h[j];
                let v = f(&x);
                x[i] = theta[i];
                x[j] = theta[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(symmetrize(&hess))
}

/// Jacobian of a vector function by central differences; rows index outputs.
///
/// Applied to an analytic gradient this gives a Hessian check that only
/// needs first-order differencing.
pub fn fd_jacobian<F>(f: F, theta: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let h = steps(theta, rel_step)?;
    let mut x = theta.to_vec();
    let mut cols = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        x[j] = theta[j] + h[j];
        let fp = f(&x)?;
        x[j] = theta[j] - h[j];
        let fm = f(&x)?;
        x[j] = theta[j];
        cols.push((fp - fm) / (2.0 * h[j]));
    }
    Ok(DMatrix::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(t: &[f64]) -> Result<f64> {
        Ok(t.iter().map(|v| v * v).sum())
    }

    #[test]
    fn quadratic_gradient_and_hessian() {
        let theta = [1.5, -2.0, 0.25];
        let g = fd_gradient(sq, &theta, 1e-5).unwrap();
        for j in 0..3 {
            assert!((g[j] - 2.0 * theta[j]).abs() < 1e-9);
        }
        let h = fd_hessian(sq, &theta, 1e-4).unwrap();
        assert!((h - DMatrix::<f64>::identity(3, 3) * 2.0).amax() < 1e-6);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = fd_gradient(|_| Ok(3.0), &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn step_underflow_detected() {
        let r = fd_gradient(sq, &[1.0], 1e-30);
        assert!(matches!(r, Err(Error::StepUnderflow { component: 0 })));
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = fd_jacobian(|t| Ok(DVector::from_vec(vec![2.0 * t[0] + t[1], -t[1]])), &[0.3, 0.7], 1e-5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -1.0]);
        assert!((j - expected).amax() < 1e-9);
    }
}
