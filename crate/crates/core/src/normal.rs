//! Standard normal density, distribution function and quantile.
//!
//! The distribution function uses W. J. Cody's rational Chebyshev
//! approximations (ACM TOMS 715), split into three regions on `|x|`:
//! `[0, 0.67449]`, `(0.67449, sqrt(32)]` and beyond. Absolute error is at the
//! level of double rounding. The quantile starts from a coarse rational guess
//! and is polished by Newton iterations on the distribution function.

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_32: f64 = 5.656_854_249_492_381;
const SPLIT_SMALL: f64 = 0.674_489_75;

const A: [f64; 5] = [
    2.235_252_035_460_683_9,
    161.028_231_068_555_88,
    1_067.689_485_460_371,
    18_154.981_253_343_561,
    0.065_682_337_918_207_449,
];
const B: [f64; 4] = [
    47.202_581_904_688_242,
    976.098_551_737_776_69,
    10_260.932_208_618_978,
    45_507.789_335_026_73,
];
const C: [f64; 9] = [
    0.398_941_512_088_134_67,
    8.883_149_794_388_376,
    93.506_656_132_177_856,
    597.270_276_394_800_26,
    2_494.537_585_290_372_7,
    6_848.190_450_536_282_3,
    11_602.651_437_647_35,
    9_842.714_838_383_978,
    1.076_557_677_372_019_2e-8,
];
const D: [f64; 8] = [
    22.266_688_044_328_116,
    235.387_901_782_625,
    1_519.377_599_407_554_8,
    6_485.558_298_266_761,
    18_615.571_640_885_098,
    34_900.952_721_145_977,
    38_912.003_286_093_271,
    19_685.429_676_859_991,
];
const P: [f64; 6] = [
    0.215_898_534_057_956_99,
    0.127_401_161_160_247_36,
    0.022_235_277_870_649_807,
    0.001_421_619_193_227_893_5,
    2.911_287_495_116_879_2e-5,
    0.023_073_441_764_940_173,
];
const Q: [f64; 5] = [
    1.284_260_096_144_911_2,
    0.468_238_212_480_865_12,
    0.065_988_137_868_928_552,
    0.003_782_396_332_027_582_4,
    7.297_515_550_839_662e-5,
];

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Returns `(Φ(x), 1 − Φ(x))`, each computed without cancellation.
pub fn cdf_both(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let y = x.abs();
    if y <= SPLIT_SMALL {
        let xsq = if y > 1.1e-16 { x * x } else { 0.0 };
        let mut num = A[4] * xsq;
        let mut den = xsq;
        for i in 0..3 {
            num = (num + A[i]) * xsq;
            den = (den + B[i]) * xsq;
        }
        let t = x * (num + A[3]) / (den + B[3]);
        return (0.5 + t, 0.5 - t);
    }

    let tail = if y <= SQRT_32 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        let r = (num + C[7]) / (den + D[7]);
        r * split_exp(y)
    } else if y < 38.5 {
        let xsq = 1.0 / (x * x);
        let mut num = P[5] * xsq;
        let mut den = xsq;
        for i in 0..4 {
            num = (num + P[i]) * xsq;
            den = (den + Q[i]) * xsq;
        }
        let r = xsq * (num + P[4]) / (den + Q[4]);
        let r = (FRAC_1_SQRT_2PI - r) / y;
        r * split_exp(y)
    } else {
        0.0
    };

    if x > 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

// exp(-y^2/2) evaluated as exp(-a^2/2) * exp(-(y-a)(y+a)/2) with `a` having a
// short mantissa, which keeps the tail relative accuracy near full precision.
fn split_exp(y: f64) -> f64 {
    let a = (y * 16.0).trunc() / 16.0;
    let del = (y - a) * (y + a);
    (-a * a * 0.5).exp() * (-del * 0.5).exp()
}

/// Standard normal distribution function Φ(x).
pub fn cdf(x: f64) -> f64 {
    cdf_both(x).0
}

/// Upper tail 1 − Φ(x).
pub fn sf(x: f64) -> f64 {
    cdf_both(x).1
}

/// Standard normal quantile Φ⁻¹(p) for `p` in (0, 1).
///
/// Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p, p);
    }
    lower_quantile(p, 1.0 - p)
}

// Quantile for lower-tail probability `p <= 0.5`; `q = 1 - p` is passed in
// so the complementary probability is not recomputed with rounding.
fn lower_quantile(p: f64, q: f64) -> f64 {
    // Abramowitz & Stegun 26.2.23 starting point (|error| < 4.5e-4).
    let t = (-2.0 * p.ln()).sqrt();
    let mut x = -(t - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
        / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    for _ in 0..8 {
        let (lo, hi) = cdf_both(x);
        // Work with whichever tail is smaller to avoid cancellation.
        let resid = if p < 0.25 { lo - p } else { q - hi };
        let dens = pdf(x);
        if dens == 0.0 {
            break;
        }
        // Halley step: the normal density satisfies φ' = −xφ.
        let u = resid / dens;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Two-sided critical value `z_{1−α/2}`.
pub fn two_sided_critical(alpha: f64) -> f64 {
    -quantile(0.5 * alpha)
}
