//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_PANELS: usize = 2000;
const ROUNDOFF_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Integral estimate and the summed Kronrod error bounds, per component.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

impl Panel {
    fn worst(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];

    f(center, &mut buf);
    for k in 0..dim {
        kron[k] = WGK[7] * buf[k];
        gauss[k] = WG[3] * buf[k];
    }
    for i in 0..7 {
        let dx = half * XGK[i];
        for x in [center - dx, center + dx] {
            f(x, &mut buf);
            for k in 0..dim {
                kron[k] += WGK[i] * buf[k];
                if i % 2 == 1 {
                    gauss[k] += WG[i / 2] * buf[k];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * half).collect();
    let error = kron.iter().zip(&gauss).map(|(k, g)| ((k - g) * half).abs()).collect();
    Panel { a, b, value, error }
}

/// Integrates `f: R -> R^dim` over `[a, b]` until every component's summed
/// error estimate is at most `abs_tol`, or at the round-off level of that
/// component's value when the latter is larger.
///
/// `f(x, out)` writes the integrand at `x` into `out`. The panel with the
/// largest error is bisected at each step; deterministic for a given `f`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, dim: usize, abs_tol: f64) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let initial = 8;
    let width = (b - a) / initial as f64;
    let mut panels: Vec<Panel> = (0..initial)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == initial { b } else { lo + width };
            gk15(&mut f, lo, hi, dim)
        })
        .collect();

    loop {
        let mut err = vec![0.0; dim];
        for p in &panels {
            for k in 0..dim {
                err[k] += p.error[k];
            }
        }
        let mut value = vec![0.0; dim];
        for p in &panels {
            for k in 0..dim {
                value[k] += p.value[k];
            }
        }
        let worst_total = err.iter().copied().fold(0.0, f64::max);
        let done = err
            .iter()
            .zip(&value)
            .all(|(e, v)| *e <= abs_tol.max(ROUNDOFF_FLOOR * v.abs()));
        if done {
            return Ok(QuadResult { value, error: err, panels: panels.len() });
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::QuadratureNotConverged { tolerance: abs_tol, estimate: worst_total });
        }
        let idx = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.worst().total_cmp(&y.1.worst()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return Err(Error::QuadratureNotConverged { tolerance: abs_tol, estimate: worst_total });
        }
        panels.push(gk15(&mut f, p.a, mid, dim));
        panels.push(gk15(&mut f, mid, p.b, dim));
    }
}
