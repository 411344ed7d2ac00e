//! Error function and its inverses, computed without the platform libm.
//!
//! `erf` uses the positive-term series
//! `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (1*3*...*(2n+1))`
//! below `|x| = 2.5` and the Laplace continued fraction for `erfc` above it,
//! both evaluated to machine precision. The inverses start from Winitzki's
//! closed-form approximation (or an asymptotic guess deep in the tail) and
//! finish with Halley iterations on `erfc`.

use std::f64::consts::PI;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SERIES_LIMIT: f64 = 2.5;

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// `erfc(x)` for `x >= SERIES_LIMIT` by modified Lentz evaluation of
/// `erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() < SERIES_LIMIT {
        erf_series(x)
    } else if x > 0.0 {
        1.0 - erfc_continued_fraction(x)
    } else {
        erfc_continued_fraction(-x) - 1.0
    }
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= SERIES_LIMIT {
        erfc_continued_fraction(x)
    } else if x > -SERIES_LIMIT {
        1.0 - erf_series(x)
    } else {
        2.0 - erfc_continued_fraction(-x)
    }
}

/// Winitzki's approximation of `erfc_inv(q)` for `0 < q <= 1`, written in
/// terms of `1 - x^2 = q (2 - q)` so small `q` keeps its precision.
fn erfc_inv_guess(q: f64) -> f64 {
    if q < 1e-12 {
        // erfc(y) ~ exp(-y^2) / (y sqrt(pi))
        let mut y = (-q.ln()).sqrt();
        for _ in 0..3 {
            y = (-(q * y * PI.sqrt()).ln()).sqrt();
        }
        return y;
    }
    const A: f64 = 0.147;
    let ln = (q * (2.0 - q)).ln();
    let b = 2.0 / (PI * A) + ln / 2.0;
    ((b * b - ln / A).sqrt() - b).sqrt()
}

/// Inverse of `erfc` on `(0, 2)`; returns `+inf` at 0 and `-inf` at 2.
pub fn erfc_inv(q: f64) -> f64 {
    if q.is_nan() || !(0.0..=2.0).contains(&q) {
        return f64::NAN;
    }
    if q == 0.0 {
        return f64::INFINITY;
    }
    if q == 2.0 {
        return f64::NEG_INFINITY;
    }
    if q == 1.0 {
        return 0.0;
    }
    if q > 1.0 {
        return -erfc_inv(2.0 - q);
    }
    let mut y = erfc_inv_guess(q);
    for _ in 0..50 {
        let f = erfc(y) - q;
        let fp = -FRAC_2_SQRT_PI * (-y * y).exp();
        let step = f / (fp + y * f);
        y -= step;
        if step.abs() <= 1e-15 * y.abs() {
            break;
        }
    }
    y
}

/// Inverse of `erf` on `(-1, 1)`.
pub fn erf_inv(x: f64) -> f64 {
    if x.is_nan() || !(-1.0..=1.0).contains(&x) {
        return f64::NAN;
    }
    if x.abs() >= 0.5 {
        // 1 - |x| is exact here
        return x.signum() * erfc_inv(1.0 - x.abs());
    }
    if x == 0.0 {
        return x;
    }
    let mut y = x.signum() * erfc_inv_guess(1.0 - x.abs());
    for _ in 0..50 {
        let f = erf(y) - x;
        let fp = FRAC_2_SQRT_PI * (-y * y).exp();
        let step = f / (fp + y * f);
        y -= step;
        if step.abs() <= 1e-16 * y.abs() {
            break;
        }
    }
    y
}
