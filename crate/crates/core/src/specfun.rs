//! Special functions used by the fBM kernel and the Harnack constants.
//!
//! Everything here is pure and allocation free. Gamma is a Lanczos
//! approximation (`g = 7`, nine coefficients) with the reflection formula
//! below `1/2`; `2F1` is only needed on `z ≤ 0`, where a Pfaff transform maps
//! the argument into `[0, 1)` and, close to `1`, the `1 - w` connection
//! formula takes over.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Largest argument for which Γ is finite in double precision.
const GAMMA_OVERFLOW: f64 = 171.6;

/// Series truncation: stop once the next term is this small relative to the sum.
const SERIES_RTOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 10_000;

/// Above this transformed argument the `1 - w` connection formula is used.
const CONNECTION_THRESHOLD: f64 = 0.75;

/// Hurst index of a fractional Brownian motion.
///
/// [`HurstExponent::new`] accepts the rough regime `(0, 1/2)` that the
/// coupling and Harnack machinery needs. [`HurstExponent::for_kernel`]
/// additionally admits `(1/2, 1)` for kernel and covariance evaluation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstExponent(f64);

impl HurstExponent {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 0.5 {
            Ok(Self(value))
        } else {
            Err(Error::domain("Hurst exponent", value, "0 < H < 1/2"))
        }
    }

    pub fn for_kernel(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 && value != 0.5 {
            Ok(Self(value))
        } else {
            Err(Error::domain(
                "Hurst exponent",
                value,
                "0 < H < 1 with H != 1/2",
            ))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// True for `H < 1/2`.
    #[inline]
    pub fn is_rough(self) -> bool {
        self.0 < 0.5
    }
}

/// Γ(x) for `x > 0`.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("gamma", x, "x > 0"));
    }
    Ok(gamma_real(x))
}

/// Γ on the whole real line, `NaN` at the poles.
pub(crate) fn gamma_real(x: f64) -> f64 {
    if x < 0.5 {
        if x == x.floor() {
            return f64::NAN;
        }
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx).
        return PI / ((PI * x).sin() * gamma_real(1.0 - x));
    }
    if x > GAMMA_OVERFLOW {
        return f64::INFINITY;
    }
    if x > 100.0 {
        return ln_gamma_lanczos(x).exp();
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// 1/Γ(x), zero at the poles.
pub(crate) fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        0.0
    } else {
        1.0 / gamma_real(x)
    }
}

fn lanczos_sum(z: f64) -> f64 {
    LANCZOS_COEFFS
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS_COEFFS[0], |acc, (i, c)| acc + c / (z + i as f64))
}

fn ln_gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

/// ln Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("ln_gamma", x, "x > 0"));
    }
    if x < 0.5 {
        // ln Γ(x) = ln π - ln sin(πx) - ln Γ(1-x)
        return Ok(PI.ln() - (PI * x).sin().ln() - ln_gamma_lanczos(1.0 - x));
    }
    Ok(ln_gamma_lanczos(x))
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain("beta", a, "a > 0"));
    }
    if !(b > 0.0) {
        return Err(Error::domain("beta", b, "b > 0"));
    }
    if a + b < 100.0 {
        Ok(gamma_real(a) * gamma_real(b) / gamma_real(a + b))
    } else {
        Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?).exp())
    }
}

/// Regularized incomplete Beta function `I_x(a, b)`.
pub fn beta_inc_regularized(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain("incomplete beta", a.min(b), "a, b > 0"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("incomplete beta", x, "0 <= x <= 1"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Unregularized lower incomplete Beta `B_x(a, b) = ∫_0^x t^{a-1}(1-t)^{b-1} dt`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(beta_inc_regularized(a, b, x)? * beta(a, b)?)
}

/// `∫_{x1}^{x2} t^{a-1}(1-t)^{b-1} dt` for `0 ≤ x1 ≤ x2 ≤ 1`.
///
/// Near `t = 1` the difference is taken through the reflected function so
/// that short cells do not lose their digits to cancellation.
pub fn beta_inc_diff(a: f64, b: f64, x1: f64, x2: f64) -> Result<f64> {
    if x1 >= 0.5 {
        let full = beta(a, b)?;
        let upper1 = beta_inc_regularized(b, a, 1.0 - x1)?;
        let upper2 = beta_inc_regularized(b, a, 1.0 - x2)?;
        Ok((upper1 - upper2) * full)
    } else {
        Ok((beta_inc_regularized(a, b, x2)? - beta_inc_regularized(a, b, x1)?) * beta(a, b)?)
    }
}

/// Modified Lentz evaluation of the incomplete Beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        what: "incomplete beta continued fraction",
        iterations: MAX_ITER,
    })
}

fn check_c(c: f64) -> Result<()> {
    if c <= 0.0 && c == c.floor() {
        Err(Error::domain(
            "hyp2f1",
            c,
            "c not a nonpositive integer",
        ))
    } else {
        Ok(())
    }
}

/// Gauss `2F1(a, b; c; z)` by direct power series, `|z| < 1`.
pub fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    check_c(c)?;
    if !(z.abs() < 1.0) {
        return Err(Error::domain("hyp2f1 series", z, "|z| < 1"));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..SERIES_MAX_TERMS {
        let n = n as f64;
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if term == 0.0 || term.abs() <= SERIES_RTOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        what: "hypergeometric series",
        iterations: SERIES_MAX_TERMS,
    })
}

/// Gauss hypergeometric function `2F1(a, b; c; z)` for `z ≤ 0`.
///
/// Uses the Pfaff transformation `2F1(a,b;c;z) = (1-z)^{-a} 2F1(a, c-b; c; z/(z-1))`
/// and sums the transformed series. When `z/(z-1)` is close to one the
/// series is re-expanded around `1` (valid as long as `c - a - (c - b)` is
/// not an integer), otherwise the truncated series is used and reports
/// non-convergence if the term cap is hit.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    check_c(c)?;
    if !(z <= 0.0) {
        return Err(Error::domain("hyp2f1", z, "z <= 0"));
    }
    if z == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    let w = z / (z - 1.0);
    let b2 = c - b;
    let prefactor = (1.0 - z).powf(-a);
    if w <= CONNECTION_THRESHOLD {
        return Ok(prefactor * hyp2f1_series(a, b2, c, w)?);
    }
    let s = c - a - b2;
    if (s - s.round()).abs() > 1e-5 {
        Ok(prefactor * hyp2f1_near_one(a, b2, c, w)?)
    } else {
        Ok(prefactor * hyp2f1_series(a, b2, c, w)?)
    }
}

/// `2F1(a,b;c;w)` for `w` close to one via the `1 - w` connection formula.
fn hyp2f1_near_one(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    let s = c - a - b;
    let one_minus = 1.0 - w;
    let gc = gamma_real(c);
    let first = gc * gamma_real(s) * rgamma(c - a) * rgamma(c - b);
    let second = gc * gamma_real(-s) * rgamma(a) * rgamma(b);
    let mut value = 0.0;
    if first != 0.0 {
        value += first * hyp2f1_series(a, b, 1.0 - s, one_minus)?;
    }
    if second != 0.0 {
        value += second * one_minus.powf(s) * hyp2f1_series(c - a, c - b, 1.0 + s, one_minus)?;
    }
    Ok(value)
}

/// `B(3/2 - H, 1/2 - H) / Γ(1/2 - H)`, the constant in the pointwise bound of
/// the inverse kernel operator applied to a unit-length density.
pub fn kernel_constant(h: HurstExponent) -> Result<f64> {
    let h = require_rough(h)?;
    let a = 1.5 - h;
    let b = 0.5 - h;
    Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)? - ln_gamma(b)?).exp())
}

/// `Θ_H = (1/(4(1-H))) (B(3/2-H, 1/2-H)/Γ(1/2-H))²`.
pub fn theta_h(h: HurstExponent) -> Result<f64> {
    let hv = require_rough(h)?;
    let b = beta(1.5 - hv, 0.5 - hv)?;
    let g = gamma(0.5 - hv)?;
    let ratio = b / g;
    Ok(ratio * ratio / (4.0 * (1.0 - hv)))
}

fn require_rough(h: HurstExponent) -> Result<f64> {
    if h.is_rough() {
        Ok(h.get())
    } else {
        Err(Error::domain("Hurst exponent", h.get(), "0 < H < 1/2"))
    }
}
