//! Volterra kernel of fractional Brownian motion and the associated
//! fractional-calculus operators.
//!
//! The kernel is
//! `K_H(t,s) = (t-s)^{H-1/2} 2F1(H-1/2, 1/2-H; H+1/2; 1-t/s) / Γ(H+1/2)`.
//! With this normalisation `∫_0^t K_H(t,s)^2 ds = V_H t^{2H}` where
//! `V_H = Γ(2-2H) cos(πH) / (πH(1-2H))`; see [`variance_factor`].
//!
//! All operators work on arbitrary (nonuniform) grids. Weakly singular
//! factors are integrated exactly cell by cell against piecewise
//! constant or linear data (product integration).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{SampledFunction, TimeGrid};
use crate::specfun::{self, HurstExponent};

/// `K_H(t, s)` for `0 < s < t`.
pub fn volterra_kernel(h: HurstExponent, t: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain("kernel s", s, "0 < s < t"));
    }
    if !(s < t) {
        return Err(Error::domain("kernel s", s, "s < t"));
    }
    kernel_with_gap(h, t, s, t - s)
}

/// `K_H(t, s)` with the gap `t - s` supplied separately, so that points
/// closer to `t` than the rounding unit keep their singular weight.
pub(crate) fn kernel_with_gap(h: HurstExponent, t: f64, s: f64, gap: f64) -> Result<f64> {
    let hv = h.get();
    let f = specfun::hyp2f1(hv - 0.5, 0.5 - hv, hv + 0.5, 1.0 - t / s)?;
    Ok(gap.powf(hv - 0.5) * f / specfun::gamma(hv + 0.5)?)
}

/// Smooth part `ψ(t,s) = K_H(t,s) / (s^{H-1/2} (t-s)^{H-1/2})`.
fn kernel_regular_part(hv: f64, t: f64, s: f64, inv_gamma: f64) -> Result<f64> {
    let f = specfun::hyp2f1(hv - 0.5, 0.5 - hv, hv + 0.5, 1.0 - t / s)?;
    Ok(s.powf(0.5 - hv) * f * inv_gamma)
}

/// `V_H = ∫_0^1 K_H(1,s)^2 ds = Γ(2-2H) cos(πH) / (πH(1-2H))`.
///
/// The process `∫ K_H(t,s) dW_s` has covariance `V_H` times the standard
/// fBM covariance. `V_H → 1` as `H → 1/2`.
pub fn variance_factor(h: HurstExponent) -> f64 {
    let hv = h.get();
    specfun::gamma_real(2.0 - 2.0 * hv) * (PI * hv).cos() / (PI * hv * (1.0 - 2.0 * hv))
}

/// `∫_0^t K_H(t,s)^2 ds` by composite Simpson on a mesh graded towards both
/// endpoints, where `K_H^2` has integrable singularities of order `2H-1`.
pub fn kernel_square_integral(h: HurstExponent, t: f64, intervals: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("kernel square integral t", t, "t > 0"));
    }
    let hv = h.get();
    let n = (intervals.max(2) + 1) & !1;
    // After s = (t/2) u^q the integrand behaves like u^{2Hq-1} near u = 0.
    let q = if hv < 0.5 { (3.0 / hv).max(2.0) } else { 2.0 };
    let half = 0.5 * t;
    let du = 1.0 / n as f64;
    let mut total = 0.0;
    for side in [0, 1] {
        let mut acc = 0.0;
        for i in 1..=n {
            let u = i as f64 * du;
            let r = half * u.powf(q);
            let (s, gap) = if side == 0 { (r, t - r) } else { (t - r, r) };
            if !(s > 0.0 && gap > 0.0) {
                continue;
            }
            let k = kernel_with_gap(h, t, s, gap)?;
            let jac = half * q * u.powf(q - 1.0);
            let w = if i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * k * k * jac;
        }
        total += acc * du / 3.0;
    }
    Ok(total)
}

/// Regularized incomplete Beta for fixed `(a, b)` with the normalising
/// constant cached, returning lower and upper tails separately so that
/// differences near `x = 1` keep their digits.
#[derive(Clone, Copy)]
struct IncBeta {
    a: f64,
    b: f64,
    beta: f64,
}

#[derive(Clone, Copy)]
enum Tail {
    Lower(f64),
    Upper(f64),
}

impl IncBeta {
    fn new(a: f64, b: f64) -> Result<Self> {
        Ok(Self {
            a,
            b,
            beta: specfun::beta(a, b)?,
        })
    }

    fn tail(&self, x: f64) -> Result<Tail> {
        if x < 0.5 {
            Ok(Tail::Lower(specfun::beta_inc_regularized(self.a, self.b, x)?))
        } else {
            Ok(Tail::Upper(specfun::beta_inc_regularized(self.b, self.a, 1.0 - x)?))
        }
    }

    /// `∫_{x1}^{x2} t^{a-1}(1-t)^{b-1} dt` from two cached tails.
    fn diff(&self, lo: Tail, hi: Tail) -> f64 {
        let d = match (lo, hi) {
            (Tail::Lower(l), Tail::Lower(h)) => h - l,
            (Tail::Upper(l), Tail::Upper(h)) => l - h,
            (Tail::Lower(l), Tail::Upper(h)) => (1.0 - h) - l,
            (Tail::Upper(l), Tail::Lower(h)) => h - (1.0 - l),
        };
        d.max(0.0) * self.beta
    }
}

/// Left Riemann–Liouville integral `I_{0+}^α f` at every grid point, exact
/// for piecewise-linear `f`.
pub fn riemann_liouville(f: &SampledFunction, alpha: f64) -> Result<SampledFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("fractional order", alpha, "0 < alpha < 1"));
    }
    let p = f.grid().points();
    let v = f.values();
    let scale = 1.0 / specfun::gamma(alpha)?;
    let mut out = vec![0.0; p.len()];
    for j in 1..p.len() {
        let x = p[j];
        let mut acc = 0.0;
        for i in 0..j {
            let (y0, y1) = (p[i], p[i + 1]);
            let (d0, d1) = (x - y0, x - y1);
            let i0 = (d0.powf(alpha) - d1.powf(alpha)) / alpha;
            // ∫ (x-y)^{α-1} (y - y0) dy = d0·I0 - ∫ (x-y)^α dy
            let i1 = d0 * i0 - (d0.powf(alpha + 1.0) - d1.powf(alpha + 1.0)) / (alpha + 1.0);
            let slope = (v[i + 1] - v[i]) / (y1 - y0);
            acc += v[i] * i0 + slope * i1;
        }
        out[j] = acc * scale;
    }
    SampledFunction::new(f.grid().clone(), out)
}

/// Lower-triangular cell matrix `A[j][i] = ∫_{s_i}^{s_{i+1}} K_H(t_j, s) ds`
/// for `i < j`, row-packed.
///
/// Product integration: on each cell `K_H = s^{H-1/2}(t-s)^{H-1/2} ψ(s)`
/// with `ψ` fitted by a quadratic through three Gauss points (with an
/// `s^{1-2H}` term on the first cell), and the moments of the singular weight are incomplete Beta
/// functions.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    hurst: HurstExponent,
    grid: TimeGrid,
    rows: Vec<f64>,
}

#[inline]
fn row_offset(j: usize) -> usize {
    j * (j.saturating_sub(1)) / 2
}

impl KernelMatrix {
    pub fn new(hurst: HurstExponent, grid: &TimeGrid) -> Result<Self> {
        let hv = hurst.get();
        if !hurst.is_rough() {
            return Err(Error::domain("Hurst exponent", hv, "0 < H < 1/2"));
        }
        let p = grid.points();
        let n = p.len();
        let a = hv + 0.5;
        let m0 = IncBeta::new(a, a)?;
        let m1 = IncBeta::new(a + 1.0, a)?;
        let m_origin = IncBeta::new(a + 1.0 - 2.0 * hv, a)?;
        let inv_gamma = 1.0 / specfun::gamma(hv + 0.5)?;
        let m2 = IncBeta::new(a + 2.0, a)?;
        let e = 1.0 - 2.0 * hv;
        let nodes = [-(0.15f64.sqrt()), 0.0, 0.15f64.sqrt()];
        let mut rows = vec![0.0; row_offset(n)];
        let mut tails = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for j in 1..n {
            let t = p[j];
            for (tl, m) in tails.iter_mut().zip([&m0, &m1, &m2]) {
                tl.clear();
                for &s in &p[..=j] {
                    tl.push(m.tail((s / t).min(1.0))?);
                }
            }
            // ∫ s^{a-1}(t-s)^{a-1} s^k ds = t^{2a-1+k} B-diff(a+k, a)
            let c0 = t.powf(2.0 * a - 1.0);
            let off = row_offset(j);
            for i in 0..j {
                let (s0, s1) = (p[i], p[i + 1]);
                let mid = 0.5 * (s0 + s1);
                let w = s1 - s0;
                let xs = nodes.map(|u| mid + u * w);
                let mut psi = [0.0; 3];
                for (v, &x) in psi.iter_mut().zip(&xs) {
                    *v = kernel_regular_part(hv, t, x, inv_gamma)?;
                }
                let raw = [
                    c0 * m0.diff(tails[0][i], tails[0][i + 1]),
                    c0 * t * m1.diff(tails[1][i], tails[1][i + 1]),
                    c0 * t * t * m2.diff(tails[2][i], tails[2][i + 1]),
                ];
                let (basis, moments): ([[f64; 3]; 3], [f64; 3]) = if i == 0 {
                    // Near s = 0, ψ = A + B s^{1-2H} + C s + o(s).
                    let x1 = (s1 / t).min(1.0);
                    let me = c0 * t.powf(e) * m_origin.diff(m_origin.tail(0.0)?, m_origin.tail(x1)?);
                    (xs.map(|x| [1.0, x.powf(e), x]), [raw[0], me, raw[1]])
                } else {
                    let d1 = raw[1] - mid * raw[0];
                    let d2 = raw[2] - 2.0 * mid * raw[1] + mid * mid * raw[0];
                    (
                        xs.map(|x| [1.0, x - mid, (x - mid) * (x - mid)]),
                        [raw[0], d1, d2],
                    )
                };
                let coef = solve3(basis, psi);
                rows[off + i] = coef.iter().zip(&moments).map(|(c, m)| c * m).sum();
            }
        }
        Ok(Self {
            hurst,
            grid: grid.clone(),
            rows,
        })
    }

    #[inline]
    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Row `j` (length `j`).
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        let off = row_offset(j);
        &self.rows[off..off + j]
    }

    /// `Σ_i A[j][i] c_i` for every `j`, with `c` one value per cell.
    pub fn apply_cells(&self, cells: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        assert_eq!(cells.len(), n - 1);
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate().skip(1) {
            *o = self.row(j).iter().zip(cells).map(|(a, c)| a * c).sum();
        }
        out
    }

    /// The same matrix on the grid scaled by `c`: `A ↦ c^{H+1/2} A`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let f = c.powf(self.hurst.get() + 0.5);
        Ok(Self {
            hurst: self.hurst,
            grid: self.grid.scaled(c)?,
            rows: self.rows.iter().map(|a| a * f).collect(),
        })
    }
}

/// Solve `Σ_k m[r][k] c_k = y_r` by Cramer's rule.
fn solve3(m: [[f64; 3]; 3], y: [f64; 3]) -> [f64; 3] {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = y[r];
        }
        *o = det(mk) / d;
    }
    out
}

fn cell_averages(g: &SampledFunction) -> Vec<f64> {
    g.values().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// `(K_H g)(t_j) = ∫_0^{t_j} K_H(t_j, s) g(s) ds`, with `g` averaged over
/// each cell.
pub fn apply_kernel(hurst: HurstExponent, g: &SampledFunction) -> Result<SampledFunction> {
    let m = KernelMatrix::new(hurst, g.grid())?;
    SampledFunction::new(g.grid().clone(), m.apply_cells(&cell_averages(g)))
}

/// Weights of the inverse operator `K_H^{-1}` applied to a piecewise
/// constant density: `η(s_j) = Σ_{i<j} W[j][i] g_i` with
/// `W[j][i] = s_j^{1/2-H}/Γ(1/2-H) ∫_{x_i}^{x_{i+1}} x^{1/2-H}(1-x)^{-H-1/2} dx`,
/// `x = r / s_j`.
#[derive(Debug, Clone)]
pub struct InverseKernel {
    hurst: HurstExponent,
    grid: TimeGrid,
    rows: Vec<f64>,
}

impl InverseKernel {
    pub fn new(hurst: HurstExponent, grid: &TimeGrid) -> Result<Self> {
        let hv = hurst.get();
        if !hurst.is_rough() {
            return Err(Error::domain("Hurst exponent", hv, "0 < H < 1/2"));
        }
        let p = grid.points();
        let n = p.len();
        let ib = IncBeta::new(1.5 - hv, 0.5 - hv)?;
        let inv_gamma = 1.0 / specfun::gamma(0.5 - hv)?;
        let mut rows = vec![0.0; row_offset(n)];
        let mut tails = Vec::with_capacity(n);
        for j in 1..n {
            let s = p[j];
            tails.clear();
            for &r in &p[..=j] {
                tails.push(ib.tail((r / s).min(1.0))?);
            }
            let c = s.powf(0.5 - hv) * inv_gamma;
            let off = row_offset(j);
            for i in 0..j {
                rows[off + i] = c * ib.diff(tails[i], tails[i + 1]);
            }
        }
        Ok(Self {
            hurst,
            grid: grid.clone(),
            rows,
        })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        let off = row_offset(j);
        &self.rows[off..off + j]
    }

    /// `η` at every grid point from one density value per cell.
    pub fn apply_cells(&self, cells: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        assert_eq!(cells.len(), n - 1);
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate().skip(1) {
            *o = self.row(j).iter().zip(cells).map(|(a, c)| a * c).sum();
        }
        out
    }

    /// The same weights on the grid scaled by `c`: `W ↦ c^{1/2-H} W`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let f = c.powf(0.5 - self.hurst.get());
        Ok(Self {
            hurst: self.hurst,
            grid: self.grid.scaled(c)?,
            rows: self.rows.iter().map(|a| a * f).collect(),
        })
    }
}

/// `η = K_H^{-1}(∫_0^· g)` evaluated at the grid points, with `g` the
/// density (not its primitive) averaged over each cell.
pub fn invert_kernel(hurst: HurstExponent, g: &SampledFunction) -> Result<SampledFunction> {
    let w = InverseKernel::new(hurst, g.grid())?;
    SampledFunction::new(g.grid().clone(), w.apply_cells(&cell_averages(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(v: f64) -> HurstExponent {
        HurstExponent::for_kernel(v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn kernel_domain() {
        assert!(volterra_kernel(h(0.3), 1.0, 0.0).is_err());
        assert!(volterra_kernel(h(0.3), 1.0, 1.0).is_err());
        assert!(volterra_kernel(h(0.3), 1.0, 1.5).is_err());
    }

    #[test]
    fn kernel_against_frozen_values() {
        // mpmath, 30 digits.
        let cases = [
            (0.25, 1.0, 0.5, 1.036_262_345_959_476_1),
            (0.1, 1.0, 0.01, 3.365_208_057_971_456_4),
            (0.1, 1.0, 0.99, 4.248_292_383_204_284_6),
            (0.4999, 2.0, 1.0, 0.999_942_280_099_718_0),
            (0.7, 1.0, 0.5, 0.974_737_752_609_647_6),
            (0.3, 2.0, 1e-6, 7.678_270_085_948_038),
            (0.3, 1.0, 0.999_999, 13.613_235_025_804_088),
        ];
        for (hv, t, s, expected) in cases {
            let k = volterra_kernel(h(hv), t, s).unwrap();
            assert!(rel(k, expected) < 1e-10, "H={hv} t={t} s={s}: {k}");
        }
    }

    #[test]
    fn kernel_near_brownian() {
        assert!((volterra_kernel(h(0.4999), 2.0, 1.0).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_self_similar() {
        let hh = h(0.2);
        let c: f64 = 3.7;
        let a = volterra_kernel(hh, c * 1.3, c * 0.4).unwrap();
        let b = c.powf(-0.3) * volterra_kernel(hh, 1.3, 0.4).unwrap();
        assert!(rel(a, b) < 1e-12);
    }

    #[test]
    fn variance_factor_values() {
        let cases = [
            (0.1, 3.524_480_662_499_879_4),
            (0.25, 1.595_769_121_605_730_7),
            (0.3, 1.383_376_321_945_876_1),
            (0.45, 1.052_714_800_420_875_7),
        ];
        for (hv, v) in cases {
            assert!(rel(variance_factor(h(hv)), v) < 1e-12);
        }
        assert!((variance_factor(h(0.4999)) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_square_integral_equals_variance_factor() {
        for hv in [0.1, 0.3] {
            for t in [0.5, 1.0, 2.0] {
                let q = kernel_square_integral(h(hv), t, 4000).unwrap();
                let expected = variance_factor(h(hv)) * t.powf(2.0 * hv);
                assert!(rel(q, expected) < 1e-5, "H={hv} t={t}: {q} vs {expected}");
            }
        }
    }

    #[test]
    fn riemann_liouville_closed_forms() {
        let grid = TimeGrid::uniform(1.0, 999).unwrap();
        let one = SampledFunction::from_fn(grid.clone(), |_| 1.0);
        let r = riemann_liouville(&one, 0.5).unwrap();
        for (&x, &v) in grid.points().iter().zip(r.values()).skip(1) {
            assert!(rel(v, 2.0 * (x / PI).sqrt()) < 1e-12);
        }
        let lin = SampledFunction::from_fn(grid.clone(), |y| y);
        let r = riemann_liouville(&lin, 0.5).unwrap();
        for (&x, &v) in grid.points().iter().zip(r.values()).skip(1) {
            assert!(rel(v, 4.0 / 3.0 * x.powf(1.5) / PI.sqrt()) < 1e-6);
        }
        let zero = SampledFunction::zeros(grid);
        assert!(riemann_liouville(&zero, 0.3).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(riemann_liouville(&one, 1.0).is_err());
    }

    #[test]
    fn apply_kernel_basics() {
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let zero = SampledFunction::zeros(grid.clone());
        let out = apply_kernel(h(0.3), &zero).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
        let one = SampledFunction::from_fn(grid.clone(), |_| 1.0);
        let out = apply_kernel(h(0.4999), &one).unwrap();
        assert_eq!(out.values()[0], 0.0);
        for (&t, &v) in grid.points().iter().zip(out.values()).skip(1) {
            assert!(rel(v, t) < 1e-3, "t={t}: {v}");
        }
    }

    #[test]
    fn kernel_matrix_rows_integrate_kernel() {
        // Row sums are ∫_0^t K(t,s) ds; compare with a fine graded Simpson rule.
        let hh = h(0.2);
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let m = KernelMatrix::new(hh, &grid).unwrap();
        let total: f64 = m.row(40).iter().sum();
        let n = 20_000;
        let q = 8.0;
        let mut acc = 0.0;
        for side in [0, 1] {
            let du = 1.0 / n as f64;
            let mut part = 0.0;
            for i in 1..=n {
                let u = i as f64 * du;
                let r = 0.5 * u.powf(q);
                let (s, gap) = if side == 0 { (r, 1.0 - r) } else { (1.0 - r, r) };
                let w = if i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                part += w * kernel_with_gap(hh, 1.0, s, gap).unwrap() * 0.5 * q * u.powf(q - 1.0);
            }
            acc += part * du / 3.0;
        }
        assert!(rel(total, acc) < 1e-6, "{total} vs {acc}");
    }

    #[test]
    fn invert_constant_density_is_exact() {
        for hv in [0.1, 0.25, 0.4] {
            let hh = HurstExponent::new(hv).unwrap();
            let grid = TimeGrid::uniform(1.0, 2000).unwrap();
            let xi = 0.7;
            let g = SampledFunction::from_fn(grid.clone(), |_| xi);
            let eta = invert_kernel(hh, &g).unwrap();
            let kc = specfun::kernel_constant(hh).unwrap();
            for (&s, &e) in grid.points().iter().zip(eta.values()).skip(1) {
                assert!(rel(e, kc * xi * s.powf(0.5 - hv)) < 1e-6);
            }
        }
    }

    #[test]
    fn invert_then_apply_recovers_primitive() {
        let hh = HurstExponent::new(0.3).unwrap();
        let grid = TimeGrid::uniform(1.0, 1999).unwrap();
        let g = SampledFunction::from_fn(grid.clone(), |s| s * (1.0 - s));
        let eta = invert_kernel(hh, &g).unwrap();
        let back = apply_kernel(hh, &eta).unwrap();
        let mut worst: f64 = 0.0;
        for (&t, &v) in grid.points().iter().zip(back.values()) {
            let primitive = t * t / 2.0 - t * t * t / 3.0;
            worst = worst.max((v - primitive).abs());
        }
        assert!(worst < 1e-3, "max error {worst}");
    }

    #[test]
    fn unit_density_bound() {
        let hh = HurstExponent::new(0.2).unwrap();
        let grid = TimeGrid::uniform(2.0, 300).unwrap();
        let g = SampledFunction::from_fn(grid.clone(), |s| if s < 0.9 { 1.0 } else { -1.0 });
        let eta = invert_kernel(hh, &g).unwrap();
        let kc = specfun::kernel_constant(hh).unwrap();
        for (&s, &e) in grid.points().iter().zip(eta.values()) {
            assert!(e.abs() <= kc * s.powf(0.3) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn scaling_matches_direct_construction() {
        let hh = HurstExponent::new(0.35).unwrap();
        let grid = TimeGrid::uniform(1.0, 30).unwrap();
        let a = KernelMatrix::new(hh, &grid).unwrap().scaled(2.5).unwrap();
        let b = KernelMatrix::new(hh, &grid.scaled(2.5).unwrap()).unwrap();
        for j in 1..31 {
            for (x, y) in a.row(j).iter().zip(b.row(j)) {
                assert!(rel(*x, *y) < 1e-10);
            }
        }
        let a = InverseKernel::new(hh, &grid).unwrap().scaled(0.3).unwrap();
        let b = InverseKernel::new(hh, &grid.scaled(0.3).unwrap()).unwrap();
        for j in 1..31 {
            for (x, y) in a.row(j).iter().zip(b.row(j)) {
                assert!(rel(*x, *y) < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn riemann_liouville_is_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            f in proptest::collection::vec(-1.0f64..1.0, 21),
            g in proptest::collection::vec(-1.0f64..1.0, 21),
        ) {
            let grid = TimeGrid::uniform(1.0, 20).unwrap();
            let sf = SampledFunction::new(grid.clone(), f.clone()).unwrap();
            let sg = SampledFunction::new(grid.clone(), g.clone()).unwrap();
            let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let sc = SampledFunction::new(grid, comb).unwrap();
            let lhs = riemann_liouville(&sc, 0.4).unwrap();
            let rf = riemann_liouville(&sf, 0.4).unwrap();
            let rg = riemann_liouville(&sg, 0.4).unwrap();
            for k in 0..21 {
                let rhs = a * rf.values()[k] + b * rg.values()[k];
                prop_assert!((lhs.values()[k] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn apply_kernel_vanishes_at_zero(vals in proptest::collection::vec(-5.0f64..5.0, 11)) {
            let grid = TimeGrid::uniform(1.0, 10).unwrap();
            let g = SampledFunction::new(grid, vals).unwrap();
            let out = apply_kernel(HurstExponent::new(0.2).unwrap(), &g).unwrap();
            prop_assert_eq!(out.values()[0], 0.0);
        }
    }
}
