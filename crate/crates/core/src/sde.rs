//! Drifts with regularity certificates, the `K`/`K*`/`G_u`/`Φ_{u,k}`
//! calculus, the pathwise solver `X = Y + U` with `Y' = b(t, Y + U)`, and
//! Monte Carlo estimators of `P_T f` and its gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{CholeskySampler, KernelScaling};
use crate::grid::{SamplePath, TimeGrid};
use crate::rng::{self, tag};
use crate::specfun::HurstExponent;
use crate::stats::Estimate;
use crate::timechange::{ClockSpec, TimeChangePath};

/// The rate `k(t)` in condition (H) or (A).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KFunction {
    Constant { value: f64 },
    /// `k(t) = intercept + slope·t`.
    Affine { intercept: f64, slope: f64 },
    /// Piecewise linear through the table, constant beyond its ends.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl KFunction {
    pub fn constant(value: f64) -> Self {
        KFunction::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KFunction::Constant { value } if !value.is_finite() => Err(Error::domain("k", *value, "finite")),
            KFunction::Affine { intercept, slope } if !(intercept.is_finite() && slope.is_finite()) => {
                Err(Error::domain("k", *intercept, "finite coefficients"))
            }
            KFunction::Table { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(Error::InvalidGrid("k table needs matching, nonempty columns".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] != 0.0 {
                    return Err(Error::InvalidGrid("k table times must start at 0 and increase".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain("k", f64::NAN, "finite table values"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            KFunction::Constant { value } => *value,
            KFunction::Affine { intercept, slope } => intercept + slope * t,
            KFunction::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let n = times.len();
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// `K(t) = ∫_0^t k`, exact for every variant.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            KFunction::Constant { value } => value * t,
            KFunction::Affine { intercept, slope } => intercept * t + 0.5 * slope * t * t,
            KFunction::Table { times, values } => {
                let mut acc = 0.0;
                for i in 0..times.len() - 1 {
                    if times[i] >= t {
                        return acc;
                    }
                    let b = times[i + 1].min(t);
                    acc += 0.5 * (values[i] + self.eval(b)) * (b - times[i]);
                    if b == t {
                        return acc;
                    }
                }
                acc + values[values.len() - 1] * (t - times[times.len() - 1])
            }
        }
    }

    /// Points in `(0, T)` where `k` changes sign or `K` may peak.
    fn critical_points(&self, horizon: f64) -> Vec<f64> {
        let mut pts = vec![0.0, horizon];
        match self {
            KFunction::Constant { .. } => {}
            KFunction::Affine { intercept, slope } => {
                if *slope != 0.0 {
                    pts.push(-intercept / slope);
                }
            }
            KFunction::Table { times, values } => {
                pts.extend(times.iter().copied());
                for i in 0..times.len() - 1 {
                    let (a, b) = (values[i], values[i + 1]);
                    if a * b < 0.0 {
                        pts.push(times[i] + a / (a - b) * (times[i + 1] - times[i]));
                    }
                }
            }
        }
        pts.retain(|&t| (0.0..=horizon).contains(&t));
        pts
    }

    /// `sup_{t ≤ T} K(t)`.
    pub fn sup_integral(&self, horizon: f64) -> f64 {
        self.critical_points(horizon)
            .into_iter()
            .map(|t| self.integral(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `K(t)`.
pub fn k_integral(k: &KFunction, t: f64) -> f64 {
    k.integral(t)
}

/// `K*(T) = exp[2 sup_{t ≤ T} K(t)]`.
pub fn k_star(k: &KFunction, horizon: f64) -> f64 {
    (2.0 * k.sup_integral(horizon)).exp()
}

/// A modulus `u` of class `𝒰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UFunction {
    /// `u(s) = c·s`.
    Linear { c: f64 },
    /// `u(s) = s·log(e ∨ 1/s)`.
    LogModulus,
    /// Piecewise linear through the table, through the origin below the
    /// first point and linearly extended above the last one.
    Table { points: Vec<f64>, values: Vec<f64> },
}

impl UFunction {
    pub fn identity() -> Self {
        UFunction::Linear { c: 1.0 }
    }

    /// `Some(c)` when `u(s) = c s`.
    pub fn linear_constant(&self) -> Option<f64> {
        match self {
            UFunction::Linear { c } => Some(*c),
            _ => None,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            UFunction::Linear { c } => c * s,
            UFunction::LogModulus => {
                if s > 0.0 && s < (-1.0f64).exp() {
                    -s * s.ln()
                } else {
                    s
                }
            }
            UFunction::Table { points, values } => {
                let n = points.len();
                if s <= points[0] {
                    return values[0] * s / points[0];
                }
                if s >= points[n - 1] {
                    let slope = if n > 1 {
                        (values[n - 1] - values[n - 2]) / (points[n - 1] - points[n - 2])
                    } else {
                        values[0] / points[0]
                    };
                    return values[n - 1] + slope * (s - points[n - 1]);
                }
                let i = points.partition_point(|&p| p <= s) - 1;
                let w = (s - points[i]) / (points[i + 1] - points[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// Continuity, monotonicity, positivity, at most linear growth, and a
    /// numerical divergence test of `∫_{0+} ds/u`: the increments
    /// `∫_{10^{-k-1}}^{10^{-k}} ds/u` for `k = 10, 11` must not decay
    /// geometrically (ratio ≥ 0.85).
    pub fn check_class(&self) -> Result<()> {
        match self {
            UFunction::Linear { c } if !(*c > 0.0 && c.is_finite()) => {
                return Err(Error::Hypothesis(format!("u(s) = c s needs c > 0, got {c}")));
            }
            UFunction::Table { points, values } => {
                if points.is_empty() || points.len() != values.len() {
                    return Err(Error::Hypothesis("u table needs matching, nonempty columns".into()));
                }
                if !(points[0] > 0.0) || points.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Hypothesis("u table points must be positive and increasing".into()));
                }
                if !(values[0] > 0.0) || values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Hypothesis("u must be positive and nondecreasing".into()));
                }
            }
            _ => {}
        }
        let inc = |k: i32| adaptive_simpson(&|s: f64| 1.0 / self.eval(s), 10f64.powi(-k - 1), 10f64.powi(-k), 1e-12, 40);
        let (a, b) = (inc(10), inc(11));
        if !(b >= 0.85 * a) {
            return Err(Error::Hypothesis(format!(
                "∫ds/u appears to converge at 0+ (increment ratio {:.3})",
                b / a
            )));
        }
        Ok(())
    }

    /// `G_u(r)`.
    pub fn g(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("G_u argument", r, "r > 0"));
        }
        Ok(match self {
            UFunction::Linear { c } => r.ln() / c,
            UFunction::LogModulus => {
                let e_inv = (-1.0f64).exp();
                if r >= e_inv {
                    r.ln()
                } else {
                    -1.0 - (-r.ln()).ln()
                }
            }
            UFunction::Table { .. } => {
                let f = |s: f64| 1.0 / self.eval(s);
                if r < 1.0 {
                    -log_simpson(&f, r, 1.0)
                } else {
                    log_simpson(&f, 1.0, r)
                }
            }
        })
    }

    /// `G_u^{-1}(y)` by bisection on `log r`.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(Error::domain("G_u^{-1} argument", y, "a number"));
        }
        let (mut lo, mut hi) = (-700.0f64, 700.0f64);
        if self.g(lo.exp())? >= y {
            return Ok(0.0);
        }
        if self.g(hi.exp())? < y {
            return Err(Error::OutOfRange {
                what: "G_u^{-1} argument",
                value: y,
                lo: f64::NEG_INFINITY,
                hi: self.g(hi.exp())?,
            });
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if self.g(m.exp())? < y {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// Bihari envelope `G_u^{-1}(G_u(r) + K(t))`.
    pub fn bihari(&self, k: &KFunction, t: f64, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        self.g_inverse(self.g(r)? + k.integral(t))
    }

    /// `Φ_{u,k}(t, r) = r + ∫_0^t k(s) u(G_u^{-1}(G_u(r) + K(s))) ds`.
    pub fn phi(&self, k: &KFunction, t: f64, r: f64) -> Result<f64> {
        if r == 0.0 || t == 0.0 {
            return Ok(r);
        }
        let g0 = self.g(r)?;
        let mut pts = k.critical_points(t);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let panels = 64;
            let h = (b - a) / panels as f64;
            for j in 0..panels {
                let (c, half) = (a + (j as f64 + 0.5) * h, 0.5 * h);
                for (x, wt) in GL5_X.iter().zip(&GL5_W) {
                    let s = c + half * x;
                    acc += half * wt * k.eval(s) * self.eval(self.g_inverse(g0 + k.integral(s))?);
                }
            }
        }
        Ok(r + acc)
    }
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// `∫_a^b f` after the substitution `s = e^x`, suited to `1/u` near 0.
fn log_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let g = |x: f64| {
        let s = x.exp();
        f(s) * s
    };
    adaptive_simpson(&g, a.ln(), b.ln(), 1e-13, 50)
}

/// The vector field `b(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftField {
    Zero,
    /// `b(x) = -rate·x`.
    Linear { rate: f64 },
    /// `b_i(x) = a x_i - x_i^3`, one-sided Lipschitz with `k = a`.
    Cubic { a: f64 },
    /// `b_i(x) = amplitude·sin(frequency·x_i)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl DriftField {
    pub fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            DriftField::Zero => out.fill(0.0),
            DriftField::Linear { rate } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -rate * v;
                }
            }
            DriftField::Cubic { a } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = a * v - v * v * v;
                }
            }
            DriftField::Sine { amplitude, frequency } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = amplitude * (frequency * v).sin();
                }
            }
        }
    }

    /// True if `b_i` depends on `x_i` only.
    pub fn is_diagonal(&self) -> bool {
        true
    }
}

/// Regularity certificate of a drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case", deny_unknown_fields)]
pub enum Certificate {
    /// `⟨b(x) - b(y), x - y⟩ ≤ k(t)|x - y|²`.
    OneSidedLipschitz { k: KFunction },
    /// `‖b(x) - b(y)‖₁ ≤ k(t) u(‖x - y‖₁)`, `k ≥ 0`.
    YamadaWatanabe { u: UFunction, k: KFunction },
}

impl Certificate {
    pub fn k(&self) -> &KFunction {
        match self {
            Certificate::OneSidedLipschitz { k } | Certificate::YamadaWatanabe { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub field: DriftField,
    pub certificate: Certificate,
}

impl DriftSpec {
    /// `b ≡ 0` with `k ≡ 0`.
    pub fn zero() -> Self {
        Self {
            field: DriftField::Zero,
            certificate: Certificate::OneSidedLipschitz { k: KFunction::constant(0.0) },
        }
    }

    /// `b(x) = -λx`, condition (H) with `k ≡ -λ`.
    pub fn linear(rate: f64) -> Self {
        Self {
            field: DriftField::Linear { rate },
            certificate: Certificate::OneSidedLipschitz { k: KFunction::constant(-rate) },
        }
    }

    /// `b(x) = -λx`, condition (A) with `u(s) = s`, `k ≡ |λ|`.
    pub fn linear_yw(rate: f64) -> Self {
        Self {
            field: DriftField::Linear { rate },
            certificate: Certificate::YamadaWatanabe {
                u: UFunction::identity(),
                k: KFunction::constant(rate.abs()),
            },
        }
    }

    /// `b ≡ 0` under condition (A) with the given modulus and `k ≡ 0`.
    pub fn zero_yw(u: UFunction) -> Self {
        Self {
            field: DriftField::Zero,
            certificate: Certificate::YamadaWatanabe { u, k: KFunction::constant(0.0) },
        }
    }

    pub fn k(&self) -> &KFunction {
        self.certificate.k()
    }

    pub fn validate(&self) -> Result<()> {
        self.certificate.k().validate()?;
        if let Certificate::YamadaWatanabe { u, k } = &self.certificate {
            u.check_class()?;
            let negative = match k {
                KFunction::Constant { value } => *value < 0.0,
                KFunction::Affine { intercept, slope } => *intercept < 0.0 || *slope < 0.0,
                KFunction::Table { values, .. } => values.iter().any(|v| *v < 0.0),
            };
            if negative {
                return Err(Error::Hypothesis("condition (A) needs k >= 0".into()));
            }
        }
        Ok(())
    }

    /// Randomised spot check of the certificate inequality on `n` pairs
    /// drawn from `[-scale, scale]^d × [0, horizon]`.
    pub fn spot_check(&self, dim: usize, horizon: f64, scale: f64, n: usize, seed: u64) -> Result<()> {
        let mut r = rng::stream(seed, tag::DRIFT_V, u64::MAX);
        let (mut bx, mut by) = (vec![0.0; dim], vec![0.0; dim]);
        for _ in 0..n {
            let t = horizon * r.random::<f64>();
            let x: Vec<f64> = (0..dim).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
            self.field.eval(t, &x, &mut bx);
            self.field.eval(t, &y, &mut by);
            let k = self.k().eval(t);
            let (lhs, rhs) = match &self.certificate {
                Certificate::OneSidedLipschitz { .. } => {
                    let ip: f64 = (0..dim).map(|i| (bx[i] - by[i]) * (x[i] - y[i])).sum();
                    let d2: f64 = (0..dim).map(|i| (x[i] - y[i]).powi(2)).sum();
                    (ip, k * d2)
                }
                Certificate::YamadaWatanabe { u, .. } => {
                    let l: f64 = (0..dim).map(|i| (bx[i] - by[i]).abs()).sum();
                    let d1: f64 = (0..dim).map(|i| (x[i] - y[i]).abs()).sum();
                    (l, k * u.eval(d1))
                }
            };
            if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
                return Err(Error::Hypothesis(format!(
                    "drift certificate fails at t = {t}: {lhs} > {rhs}"
                )));
            }
        }
        Ok(())
    }
}

/// Bounded test functions `f: ℝ^d → ℝ` as expression trees with interval
/// bounds, so that boundedness and range preconditions are checkable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    /// `z^{(index)}`, zero-based.
    Coordinate { index: usize },
    Clamp { inner: Box<TestFunction>, lo: f64, hi: f64 },
    Sum { terms: Vec<TestFunction> },
    Scale { factor: f64, inner: Box<TestFunction> },
    Exp { inner: Box<TestFunction> },
    Log { inner: Box<TestFunction> },
    Sin { inner: Box<TestFunction> },
    Tanh { inner: Box<TestFunction> },
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn coordinate(index: usize) -> Self {
        TestFunction::Coordinate { index }
    }

    /// `1 + clamp(z^{(index)}, 0, 1)`.
    pub fn one_plus_clamp(index: usize) -> Self {
        TestFunction::Sum {
            terms: vec![
                TestFunction::constant(1.0),
                TestFunction::Clamp {
                    inner: Box::new(TestFunction::coordinate(index)),
                    lo: 0.0,
                    hi: 1.0,
                },
            ],
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { index } => z[*index],
            TestFunction::Clamp { inner, lo, hi } => inner.eval(z).clamp(*lo, *hi),
            TestFunction::Sum { terms } => terms.iter().map(|t| t.eval(z)).sum(),
            TestFunction::Scale { factor, inner } => factor * inner.eval(z),
            TestFunction::Exp { inner } => inner.eval(z).exp(),
            TestFunction::Log { inner } => inner.eval(z).ln(),
            TestFunction::Sin { inner } => inner.eval(z).sin(),
            TestFunction::Tanh { inner } => inner.eval(z).tanh(),
        }
    }

    /// Interval `[lo, hi]` containing the range (possibly infinite).
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TestFunction::Constant { value } => (*value, *value),
            TestFunction::Coordinate { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TestFunction::Clamp { inner, lo, hi } => {
                let (a, b) = inner.bounds();
                (a.clamp(*lo, *hi), b.clamp(*lo, *hi))
            }
            TestFunction::Sum { terms } => terms.iter().map(|t| t.bounds()).fold((0.0, 0.0), |acc, b| (acc.0 + b.0, acc.1 + b.1)),
            TestFunction::Scale { factor, inner } => {
                let (a, b) = inner.bounds();
                if *factor == 0.0 {
                    (0.0, 0.0)
                } else if *factor > 0.0 {
                    (factor * a, factor * b)
                } else {
                    (factor * b, factor * a)
                }
            }
            TestFunction::Exp { inner } => {
                let (a, b) = inner.bounds();
                (a.exp(), b.exp())
            }
            TestFunction::Log { inner } => {
                let (a, b) = inner.bounds();
                (if a > 0.0 { a.ln() } else { f64::NEG_INFINITY }, b.ln())
            }
            TestFunction::Sin { .. } => (-1.0, 1.0),
            TestFunction::Tanh { .. } => (-1.0, 1.0),
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (a, b) = self.bounds();
        a.is_finite() && b.is_finite()
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            TestFunction::Constant { .. } => None,
            TestFunction::Coordinate { index } => Some(*index),
            TestFunction::Sum { terms } => terms.iter().filter_map(|t| t.max_index()).max(),
            TestFunction::Clamp { inner, .. }
            | TestFunction::Scale { inner, .. }
            | TestFunction::Exp { inner }
            | TestFunction::Log { inner }
            | TestFunction::Sin { inner }
            | TestFunction::Tanh { inner } => inner.max_index(),
        }
    }
}

/// The independent additive process `V` with `V_0 = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VSpec {
    #[default]
    Zero,
    /// Deterministic path, piecewise linear through `(times, values)`;
    /// each value is a `d`-vector.
    Path { times: Vec<f64>, values: Vec<Vec<f64>> },
    /// Piecewise constant with i.i.d. `N(0, scale²)` jumps at `k·T/pieces`.
    RandomWalk { pieces: usize, scale: f64 },
}

impl VSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            VSpec::Zero => Ok(()),
            VSpec::Path { times, values } => {
                TimeGrid::new(times.clone())?;
                if values.len() != times.len() || values.iter().any(|v| v.len() != dim) {
                    return Err(Error::InvalidGrid("V path needs one d-vector per time".into()));
                }
                if values[0].iter().any(|v| *v != 0.0) {
                    return Err(Error::Precondition("V must start at 0".into()));
                }
                Ok(())
            }
            VSpec::RandomWalk { pieces, scale } => {
                if *pieces == 0 || !(*scale >= 0.0) {
                    return Err(Error::domain("V random walk", *scale, "pieces >= 1 and scale >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, VSpec::RandomWalk { .. })
    }

    /// `V` at the grid points, point-major.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        let n = grid.len();
        let mut out = vec![0.0; n * dim];
        match self {
            VSpec::Zero => {}
            VSpec::Path { times, values } => {
                let last = times[times.len() - 1];
                for (j, &t) in grid.points().iter().enumerate() {
                    if t > last * (1.0 + 1e-12) {
                        return Err(Error::Horizon { needed: t, available: last });
                    }
                    let i = times.partition_point(|&s| s <= t).saturating_sub(1).min(times.len() - 2);
                    let w = ((t - times[i]) / (times[i + 1] - times[i])).clamp(0.0, 1.0);
                    for c in 0..dim {
                        out[j * dim + c] = values[i][c] + w * (values[i + 1][c] - values[i][c]);
                    }
                }
            }
            VSpec::RandomWalk { pieces, scale } => {
                let step = grid.end() / *pieces as f64;
                let jumps: Vec<f64> = (0..pieces * dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                for (j, &t) in grid.points().iter().enumerate() {
                    let m = ((t / step).floor() as usize).min(*pieces);
                    for k in 0..m.min(*pieces) {
                        for c in 0..dim {
                            out[j * dim + c] += jumps[k * dim + c];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Hurst indices, clocks and `V`. One entry in `hurst`/`clocks` means the
/// isotropic model (a single clock shared by all coordinates); `d` entries
/// give the anisotropic model with independent per-coordinate clocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub hurst: Vec<f64>,
    pub clocks: Vec<ClockSpec>,
    #[serde(default)]
    pub v: VSpec,
    #[serde(default)]
    pub scaling: KernelScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub dim: usize,
    pub drift: DriftSpec,
    pub noise: NoiseModel,
}

impl Model {
    pub fn isotropic(dim: usize, drift: DriftSpec, hurst: f64, clock: ClockSpec) -> Self {
        Self {
            dim,
            drift,
            noise: NoiseModel {
                hurst: vec![hurst],
                clocks: vec![clock],
                v: VSpec::Zero,
                scaling: KernelScaling::default(),
            },
        }
    }

    pub fn anisotropic(drift: DriftSpec, hurst: Vec<f64>, clocks: Vec<ClockSpec>) -> Self {
        Self {
            dim: hurst.len(),
            drift,
            noise: NoiseModel {
                hurst,
                clocks,
                v: VSpec::Zero,
                scaling: KernelScaling::default(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Precondition("dimension must be at least 1".into()));
        }
        for &h in &self.noise.hurst {
            HurstExponent::new(h)?;
        }
        let ok_len = |n: usize| n == 1 || n == self.dim;
        if !ok_len(self.noise.hurst.len()) || !ok_len(self.noise.clocks.len()) {
            return Err(Error::Precondition(format!(
                "hurst and clocks need 1 or {} entries",
                self.dim
            )));
        }
        for c in &self.noise.clocks {
            c.validate()?;
        }
        self.noise.v.validate(self.dim)?;
        self.drift.validate()
    }

    pub fn hurst(&self, i: usize) -> HurstExponent {
        let h = if self.noise.hurst.len() == 1 {
            self.noise.hurst[0]
        } else {
            self.noise.hurst[i]
        };
        HurstExponent::new(h).expect("validated")
    }

    pub fn clock(&self, i: usize) -> &ClockSpec {
        if self.noise.clocks.len() == 1 {
            &self.noise.clocks[0]
        } else {
            &self.noise.clocks[i]
        }
    }

    /// Number of independent clocks.
    pub fn clock_count(&self) -> usize {
        self.noise.clocks.len()
    }

    pub fn is_anisotropic(&self) -> bool {
        self.noise.hurst.len() > 1 || self.noise.clocks.len() > 1
    }
}

/// One draw of the noise: the clocks and `U_t = W^H_{Z(t)} + V_t`.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub clocks: Vec<TimeChangePath>,
    pub u: SamplePath,
}

/// A model bound to a solver grid, with the Cholesky factors of
/// deterministic clocks cached.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    model: Model,
    grid: TimeGrid,
    cached: Vec<Option<CholeskySampler>>,
}

impl PreparedModel {
    pub fn new(model: &Model, grid: &TimeGrid) -> Result<Self> {
        model.validate()?;
        let mut cached = Vec::with_capacity(model.dim);
        for i in 0..model.dim {
            let clock = model.clock(i);
            cached.push(if clock.is_random() {
                None
            } else {
                let z = clock.sample(grid, &mut rng::stream(0, tag::CLOCK, 0))?;
                Some(CholeskySampler::new(model.hurst(i), z.values(), model.noise.scaling)?)
            });
        }
        Ok(Self {
            model: model.clone(),
            grid: grid.clone(),
            cached,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Noise for path `index` of the batch keyed by `seed`.
    pub fn realize(&self, seed: u64, index: u64) -> Result<NoiseRealization> {
        let d = self.model.dim;
        let n = self.grid.len();
        let mut clocks = Vec::with_capacity(self.model.clock_count());
        for c in 0..self.model.clock_count() {
            let mut r = rng::stream(rng::derive(seed, tag::CLOCK, index), tag::CLOCK, c as u64);
            clocks.push(self.model.clock(c).sample(&self.grid, &mut r)?);
        }
        let mut u = self
            .model
            .noise
            .v
            .sample(&self.grid, d, &mut rng::stream(seed, tag::DRIFT_V, index))?;
        for i in 0..d {
            let mut r = rng::stream(rng::derive(seed, tag::FBM, index), tag::FBM, i as u64);
            let w = match &self.cached[i] {
                Some(s) => s.sample(&mut r),
                None => {
                    let z = &clocks[if clocks.len() == 1 { 0 } else { i }];
                    CholeskySampler::new(self.model.hurst(i), z.values(), self.model.noise.scaling)?.sample(&mut r)
                }
            };
            for j in 0..n {
                u[j * d + i] += w[j];
            }
        }
        Ok(NoiseRealization {
            clocks,
            u: SamplePath::new(self.grid.clone(), d, u)?,
        })
    }
}

/// Step control for the random ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Per-step Richardson tolerance, relative to `1 + |y|_∞`.
    pub tolerance: f64,
    /// Maximal number of bisections of one grid cell.
    pub max_depth: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_depth: 16,
        }
    }
}

/// Scratch space for [`advance`].
#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    k: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl Stepper {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            k: vec![0.0; dim],
            full: vec![0.0; dim],
            half: vec![0.0; dim],
        }
    }

    /// Advance `y' = f(t, y)` from `t0` to `t1`: explicit Euler against two
    /// half steps on dyadic subcells, refining until they agree and then
    /// Richardson-extrapolating.
    pub(crate) fn advance(
        &mut self,
        f: &mut dyn FnMut(f64, &[f64], &mut [f64]),
        t0: f64,
        t1: f64,
        y: &mut [f64],
        opts: &SolverOptions,
    ) -> Result<()> {
        let d = y.len();
        let width = t1 - t0;
        let total = 1u64 << opts.max_depth;
        // position and step in units of width / 2^max_depth
        let (mut pos, mut level) = (0u64, 0u32);
        while pos < total {
            let span = total >> level;
            let t = t0 + width * pos as f64 / total as f64;
            let h = width / (1u64 << level) as f64;
            f(t, y, &mut self.k);
            for i in 0..d {
                self.full[i] = y[i] + h * self.k[i];
                self.half[i] = y[i] + 0.5 * h * self.k[i];
            }
            f(t + 0.5 * h, &self.half, &mut self.k);
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for i in 0..d {
                self.half[i] += 0.5 * h * self.k[i];
                err = err.max((self.half[i] - self.full[i]).abs());
                scale = scale.max(y[i].abs());
            }
            if err.is_finite() && err <= opts.tolerance * (1.0 + scale) {
                for i in 0..d {
                    y[i] = 2.0 * self.half[i] - self.full[i];
                }
                pos += span;
                if level > 0 && pos % (span << 1) == 0 {
                    level -= 1;
                }
            } else if level >= opts.max_depth || !err.is_finite() {
                return Err(Error::StepRejection { time: t, discrepancy: err });
            } else {
                level += 1;
            }
        }
        Ok(())
    }
}

/// `X` on the grid together with the noise `U` it was driven by.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub x: SamplePath,
    pub u: SamplePath,
}

impl SolutionPath {
    pub fn terminal(&self) -> &[f64] {
        self.x.last()
    }
}

/// Solve `X_t = x + ∫b(X) ds + U_t` through `Y = X - U`,
/// `Y' = b(t, Y + U_t)` with `U` linear inside each cell.
pub fn solve_sde(x: &[f64], drift: &DriftField, u: &SamplePath, opts: &SolverOptions) -> Result<SolutionPath> {
    let d = x.len();
    if u.dim() != d {
        return Err(Error::Precondition(format!("noise has dimension {}, start has {d}", u.dim())));
    }
    if u.point(0).iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition("noise must start at 0".into()));
    }
    let grid = u.grid();
    let pts = grid.points();
    let mut out = SamplePath::zeros(grid.clone(), d);
    out.point_mut(0).copy_from_slice(x);
    let mut y = x.to_vec();
    let mut buf = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut stepper = Stepper::new(d);
    for j in 0..grid.cells() {
        let (t0, t1) = (pts[j], pts[j + 1]);
        let (u0, u1) = (u.point(j), u.point(j + 1));
        let mut f = |t: f64, yy: &[f64], k: &mut [f64]| {
            let w = (t - t0) / (t1 - t0);
            for i in 0..d {
                z[i] = yy[i] + u0[i] + w * (u1[i] - u0[i]);
            }
            drift.eval(t, &z, k);
        };
        stepper.advance(&mut f, t0, t1, &mut y, opts)?;
        for i in 0..d {
            buf[i] = y[i] + u1[i];
        }
        out.point_mut(j + 1).copy_from_slice(&buf);
    }
    Ok(SolutionPath { x: out, u: u.clone() })
}

/// Same solver for the anisotropic equation: the noise carries one
/// independently time-changed coordinate per column.
pub fn solve_anisotropic(x: &[f64], drift: &DriftField, u: &SamplePath, opts: &SolverOptions) -> Result<SolutionPath> {
    solve_sde(x, drift, u, opts)
}

/// Monte Carlo run parameters shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOptions {
    pub horizon: f64,
    /// Cells of the uniform solver grid on `[0, T]`.
    pub cells: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl McOptions {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.cells)
    }
}

/// `X_T(x)` for each start in `starts`, on every path of the batch; paths
/// share their noise across starts (common random numbers). Returns
/// `[path][start] -> X_T`.
pub fn simulate_terminals(model: &Model, starts: &[Vec<f64>], mc: &McOptions) -> Result<Vec<Vec<Vec<f64>>>> {
    let prepared = PreparedModel::new(model, &mc.grid()?)?;
    for s in starts {
        if s.len() != model.dim {
            return Err(Error::Precondition(format!("start has dimension {}, model {}", s.len(), model.dim)));
        }
    }
    (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let noise = prepared.realize(mc.seed, p)?;
            starts
                .iter()
                .map(|x| {
                    if matches!(model.drift.field, DriftField::Zero) {
                        Ok(x.iter().zip(noise.u.last()).map(|(a, b)| a + b).collect())
                    } else {
                        Ok(solve_sde(x, &model.drift.field, &noise.u, &mc.solver)?.terminal().to_vec())
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// `P_T f(x)` with its standard error.
pub fn estimate_pt(f: &TestFunction, x: &[f64], model: &Model, mc: &McOptions) -> Result<Estimate> {
    if mc.n_paths < 100 {
        return Err(Error::domain("n_paths", mc.n_paths as f64, "n_paths >= 100"));
    }
    check_index(f, model.dim)?;
    let xs = simulate_terminals(model, &[x.to_vec()], mc)?;
    let vals: Vec<f64> = xs.iter().map(|p| f.eval(&p[0])).collect();
    Ok(Estimate::from_samples(&vals))
}

pub(crate) fn check_index(f: &TestFunction, dim: usize) -> Result<()> {
    match f.max_index() {
        Some(i) if i >= dim => Err(Error::Precondition(format!(
            "test function reads coordinate {i} of a {dim}-dimensional state"
        ))),
        _ => Ok(()),
    }
}

/// Common-random-number finite difference along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub slope: Estimate,
    /// Set when the SE exceeds half of `|slope|`.
    pub noisy: bool,
}

pub fn estimate_gradient(
    f: &TestFunction,
    x: &[f64],
    direction: &[f64],
    h: f64,
    model: &Model,
    mc: &McOptions,
) -> Result<GradientEstimate> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::domain("direction norm", norm, "|e| = 1"));
    }
    if !(h > 0.0) {
        return Err(Error::domain("finite-difference step", h, "h > 0"));
    }
    check_index(f, model.dim)?;
    let shifted: Vec<f64> = x.iter().zip(direction).map(|(a, e)| a + h * e).collect();
    let xs = simulate_terminals(model, &[x.to_vec(), shifted], mc)?;
    let diffs: Vec<f64> = xs.iter().map(|p| (f.eval(&p[1]) - f.eval(&p[0])) / h).collect();
    let slope = Estimate::from_samples(&diffs);
    Ok(GradientEstimate {
        slope,
        noisy: slope.se > 0.5 * slope.mean.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_noise(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> SamplePath {
        SamplePath::new(grid.clone(), 1, grid.points().iter().map(|&t| f(t)).collect()).unwrap()
    }

    #[test]
    fn k_calculus() {
        let zero = KFunction::constant(0.0);
        assert_eq!(k_integral(&zero, 3.0), 0.0);
        assert_eq!(k_star(&zero, 3.0), 1.0);
        let neg = KFunction::constant(-1.0);
        assert_eq!(k_integral(&neg, 2.0), -2.0);
        assert_eq!(k_star(&neg, 2.0), 1.0);
        assert!((k_star(&KFunction::constant(2.0), 1.5) - 6f64.exp()).abs() < 1e-12);
        // k(t) = 1 - t peaks K at t = 1 with K = 1/2
        let aff = KFunction::Affine { intercept: 1.0, slope: -1.0 };
        assert!((k_star(&aff, 3.0) - 1f64.exp()).abs() < 1e-14);
        let tab = KFunction::Table {
            times: vec![0.0, 1.0, 2.0],
            values: vec![1.0, -1.0, -1.0],
        };
        assert!((tab.integral(1.0)).abs() < 1e-15);
        assert!((tab.integral(3.0) + 2.0).abs() < 1e-15);
        assert!((tab.sup_integral(3.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn g_u_closed_forms() {
        let id = UFunction::identity();
        for r in [1e-3, 0.5, 1.0, 7.0] {
            assert!((id.g(r).unwrap() - r.ln()).abs() < 1e-14);
        }
        for y in [-5.0, 0.0, 2.0] {
            assert!((id.g_inverse(y).unwrap() - f64::exp(y)).abs() < 1e-12 * f64::exp(y));
        }
        assert!(id.g(0.0).is_err());
        // table representation of u(s) = s log(e ∨ 1/s) against the closed form
        let pts: Vec<f64> = (1..=4000).map(|i| i as f64 * 1e-3).collect();
        let tab = UFunction::Table {
            values: pts.iter().map(|&s| UFunction::LogModulus.eval(s)).collect(),
            points: pts,
        };
        for r in [0.05, 0.2, 0.9, 2.0] {
            let a = UFunction::LogModulus.g(r).unwrap();
            let b = tab.g(r).unwrap();
            assert!((a - b).abs() < 1e-4, "r = {r}: {a} vs {b}");
        }
        for y in [-3.0, -1.5, 0.3] {
            let r = UFunction::LogModulus.g_inverse(y).unwrap();
            assert!((UFunction::LogModulus.g(r).unwrap() - y).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_closed_form_for_linear_u() {
        let k = KFunction::constant(0.7);
        for c in [1.0, 2.5] {
            let u = UFunction::Linear { c };
            let phi = u.phi(&k, 1.3, 0.4).unwrap();
            let exact = (c * 0.7 * 1.3f64).exp() * 0.4;
            assert!((phi - exact).abs() < 1e-9 * exact, "{phi} vs {exact}");
        }
        assert_eq!(UFunction::LogModulus.phi(&KFunction::constant(0.0), 2.0, 0.3).unwrap(), 0.3);
        assert_eq!(UFunction::LogModulus.phi(&KFunction::constant(1.0), 0.0, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn class_u_membership() {
        UFunction::identity().check_class().unwrap();
        UFunction::LogModulus.check_class().unwrap();
        // u(s) = sqrt(s) has an integrable reciprocal at 0
        let pts: Vec<f64> = (0..40).map(|i| 10f64.powf(-14.0 + 0.4 * i as f64)).collect();
        let sqrt = UFunction::Table {
            values: pts.iter().map(|s| s.sqrt()).collect(),
            points: pts,
        };
        assert!(matches!(sqrt.check_class(), Err(Error::Hypothesis(_))));
        assert!(UFunction::Linear { c: 0.0 }.check_class().is_err());
    }

    #[test]
    fn zero_drift_is_pure_noise() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let u = uniform_noise(&g, |t| (7.0 * t).sin());
        let sol = solve_sde(&[0.3], &DriftField::Zero, &u, &SolverOptions::default()).unwrap();
        for (j, &t) in g.points().iter().enumerate() {
            assert!((sol.x.point(j)[0] - 0.3 - (7.0 * t).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_ode_without_noise() {
        let g = TimeGrid::uniform(2.0, 200).unwrap();
        let u = uniform_noise(&g, |_| 0.0);
        let lam = 1.7;
        let sol = solve_sde(&[1.5], &DriftField::Linear { rate: lam }, &u, &SolverOptions::default()).unwrap();
        for (j, &t) in g.points().iter().enumerate() {
            assert!((sol.x.point(j)[0] - 1.5 * (-lam * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_ode_with_noise_variation_of_constants() {
        // U piecewise linear; Y_t = e^{-λt}x - λ∫_0^t e^{-λ(t-s)} U_s ds, integrated exactly.
        let n = 2000;
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let uf = |t: f64| (13.0 * t).sin() + 0.5 * (41.0 * t).cos() - 0.5;
        let u = uniform_noise(&g, uf);
        let lam = 2.0;
        let sol = solve_sde(&[0.8], &DriftField::Linear { rate: lam }, &u, &SolverOptions::default()).unwrap();
        let p = g.points();
        let mut conv = 0.0;
        let mut max_err: f64 = 0.0;
        for j in 0..n {
            // ∫_{t_j}^{t_{j+1}} e^{λ s} (a + b(s - t_j)) ds exactly
            let (a, b) = (u.point(j)[0], (u.point(j + 1)[0] - u.point(j)[0]) / (p[j + 1] - p[j]));
            let (s0, s1) = (p[j], p[j + 1]);
            let e0 = (lam * s0).exp();
            let e1 = (lam * s1).exp();
            conv += a * (e1 - e0) / lam + b * ((s1 - s0) * e1 / lam - (e1 - e0) / (lam * lam));
            let t = s1;
            let y = (-lam * t).exp() * (0.8 - lam * conv);
            max_err = max_err.max((sol.x.point(j + 1)[0] - (y + u.point(j + 1)[0])).abs());
        }
        assert!(max_err < 1e-4, "max_err = {max_err}");
    }

    #[test]
    fn stiff_drift_is_rejected_not_silent() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let u = uniform_noise(&g, |_| 0.0);
        let opts = SolverOptions {
            tolerance: 1e-12,
            max_depth: 2,
        };
        let r = solve_sde(&[3.0], &DriftField::Cubic { a: 0.0 }, &u, &opts);
        assert!(matches!(r, Err(Error::StepRejection { .. })));
    }

    #[test]
    fn mesh_halving_is_within_tolerance() {
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        let g2 = TimeGrid::uniform(1.0, 128).unwrap();
        let uf = |t: f64| 0.3 * (5.0 * t).sin();
        let opts = SolverOptions::default();
        let a = solve_sde(&[0.9], &DriftField::Cubic { a: 1.0 }, &uniform_noise(&g, uf), &opts).unwrap();
        let b = solve_sde(&[0.9], &DriftField::Cubic { a: 1.0 }, &uniform_noise(&g2, uf), &opts).unwrap();
        // The noise interpolant differs between the meshes, which dominates.
        assert!((a.terminal()[0] - b.terminal()[0]).abs() < 1e-3);
    }

    #[test]
    fn one_sided_contraction_with_shared_noise() {
        let model = Model::isotropic(1, DriftSpec::linear(0.5), 0.3, ClockSpec::identity());
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        let prep = PreparedModel::new(&model, &g).unwrap();
        for p in 0..20 {
            let noise = prep.realize(3, p).unwrap();
            let a = solve_sde(&[0.0], &model.drift.field, &noise.u, &SolverOptions::default()).unwrap();
            let b = solve_sde(&[1.0], &model.drift.field, &noise.u, &SolverOptions::default()).unwrap();
            for (j, &t) in g.points().iter().enumerate() {
                let d = (a.x.point(j)[0] - b.x.point(j)[0]).abs();
                assert!(d <= (-0.5 * t).exp() + 1e-7);
            }
        }
    }

    #[test]
    fn estimators_basic() {
        let mc = McOptions {
            horizon: 1.0,
            cells: 16,
            n_paths: 4000,
            seed: 5,
            solver: SolverOptions::default(),
        };
        let model = Model::isotropic(2, DriftSpec::zero(), 0.3, ClockSpec::identity());
        let one = estimate_pt(&TestFunction::constant(1.0), &[0.0, 0.0], &model, &mc).unwrap();
        assert_eq!((one.mean, one.se), (1.0, 0.0));
        let m = estimate_pt(&TestFunction::coordinate(0), &[0.4, 0.0], &model, &mc).unwrap();
        assert!(m.within(0.4, 4.0));
        let lin = Model::isotropic(1, DriftSpec::linear(1.0), 0.3, ClockSpec::identity());
        let m = estimate_pt(&TestFunction::coordinate(0), &[1.0], &lin, &mc).unwrap();
        assert!(m.within((-1.0f64).exp(), 4.0), "{m:?}");
        let g0 = estimate_gradient(&TestFunction::constant(2.0), &[0.0], &[1.0], 0.1, &lin, &mc).unwrap();
        assert_eq!((g0.slope.mean, g0.slope.se), (0.0, 0.0));
        let g1 = estimate_gradient(&TestFunction::coordinate(0), &[0.0, 0.0], &[1.0, 0.0], 0.1, &model, &mc).unwrap();
        assert!((g1.slope.mean - 1.0).abs() < 1e-12 && g1.slope.se < 1e-12);
        let g2 = estimate_gradient(&TestFunction::coordinate(0), &[0.0], &[1.0], 0.1, &lin, &mc).unwrap();
        assert!(g2.slope.within((-1.0f64).exp(), 4.0) || (g2.slope.mean - (-1.0f64).exp()).abs() < 1e-6);
        assert!(estimate_pt(&TestFunction::coordinate(3), &[0.0], &lin, &mc).is_err());
    }

    #[test]
    fn noise_is_reproducible_and_starts_at_zero() {
        let model = Model::isotropic(2, DriftSpec::zero(), 0.25, ClockSpec::stable(0.5));
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let prep = PreparedModel::new(&model, &g).unwrap();
        let a = prep.realize(1, 2).unwrap();
        let b = prep.realize(1, 2).unwrap();
        assert_eq!(a.u.values(), b.u.values());
        assert_eq!(a.u.point(0), &[0.0, 0.0]);
        assert_ne!(prep.realize(1, 3).unwrap().u.values(), a.u.values());
    }

    #[test]
    fn test_function_bounds() {
        let f = TestFunction::one_plus_clamp(0);
        assert_eq!(f.bounds(), (1.0, 2.0));
        assert!(f.is_bounded());
        assert!(!TestFunction::coordinate(0).is_bounded());
        let g: TestFunction = serde_json::from_str(r#"{"op":"log","inner":{"op":"exp","inner":{"op":"sin","inner":{"op":"coordinate","index":1}}}}"#).unwrap();
        assert_eq!(g.bounds(), (-1.0, 1.0));
        assert_eq!(g.max_index(), Some(1));
        assert!((g.eval(&[0.0, 0.3]) - 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn certificates_hold_for_built_in_drifts() {
        DriftSpec::linear(-0.5).spot_check(3, 1.0, 5.0, 2000, 1).unwrap();
        DriftSpec::linear_yw(2.0).spot_check(3, 1.0, 5.0, 2000, 1).unwrap();
        let cubic = DriftSpec {
            field: DriftField::Cubic { a: 1.0 },
            certificate: Certificate::OneSidedLipschitz { k: KFunction::constant(1.0) },
        };
        cubic.spot_check(2, 1.0, 5.0, 2000, 1).unwrap();
        let wrong = DriftSpec {
            field: DriftField::Cubic { a: 1.0 },
            certificate: Certificate::OneSidedLipschitz { k: KFunction::constant(0.5) },
        };
        assert!(wrong.spot_check(2, 1.0, 0.3, 2000, 1).is_err());
    }

    proptest! {
        #[test]
        fn phi_monotone(r1 in 0.01f64..3.0, dr in 0.0f64..2.0, t1 in 0.0f64..2.0, dt in 0.0f64..1.0) {
            let u = UFunction::LogModulus;
            let k = KFunction::constant(0.8);
            let a = u.phi(&k, t1, r1).unwrap();
            prop_assert!(u.phi(&k, t1, r1 + dr).unwrap() >= a - 1e-9);
            prop_assert!(u.phi(&k, t1 + dt, r1).unwrap() >= a - 1e-9);
        }

        #[test]
        fn estimate_pt_respects_bounds(seed in 0u64..1000) {
            let mc = McOptions { horizon: 0.5, cells: 8, n_paths: 100, seed, solver: SolverOptions::default() };
            let model = Model::isotropic(1, DriftSpec::linear(1.0), 0.2, ClockSpec::identity());
            let f = TestFunction::Tanh { inner: Box::new(TestFunction::coordinate(0)) };
            let e = estimate_pt(&f, &[0.5], &model, &mc).unwrap();
            prop_assert!(e.mean >= -1.0 && e.mean <= 1.0);
        }
    }
}
