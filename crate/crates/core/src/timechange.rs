//! Time changes: subordinators given by their Bernstein function,
//! inverse subordinators, deterministic clocks and the `ε`-regularisation
//! `ℓ_ε(t) = (1/ε)∫_t^{t+ε} ℓ(s) ds + εt` with its inverse `γ_ε`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SampledFunction, TimeGrid};

/// Positive `α`-stable part, `φ(r) = c r^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableComponent {
    pub alpha: f64,
    pub scale: f64,
}

/// Gamma part, `φ(r) = a log(1 + r/b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaComponent {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Exponential { mean: f64 },
    Deterministic { size: f64 },
}

/// Compound Poisson part, `φ(r) = λ ∫ (1 - e^{-rx}) F(dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPoissonComponent {
    pub rate: f64,
    pub jumps: JumpLaw,
}

/// Bernstein function `φ(r) = ϑr + c r^α + a log(1 + r/b) + λ∫(1-e^{-rx})F(dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinSpec {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub stable: Option<StableComponent>,
    #[serde(default)]
    pub gamma: Option<GammaComponent>,
    #[serde(default)]
    pub compound_poisson: Option<CompoundPoissonComponent>,
}

impl BernsteinSpec {
    pub fn drift(drift: f64) -> Self {
        Self {
            drift,
            ..Self::default()
        }
    }

    pub fn stable(alpha: f64, scale: f64) -> Self {
        Self {
            stable: Some(StableComponent { alpha, scale }),
            ..Self::default()
        }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        Self {
            gamma: Some(GammaComponent { shape, rate }),
            ..Self::default()
        }
    }

    pub fn compound_poisson(rate: f64, jumps: JumpLaw) -> Self {
        Self {
            compound_poisson: Some(CompoundPoissonComponent { rate, jumps }),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drift >= 0.0) || !self.drift.is_finite() {
            return Err(Error::domain("subordinator drift", self.drift, "drift >= 0"));
        }
        let mut active = self.drift > 0.0;
        if let Some(s) = self.stable {
            if !(s.alpha > 0.0 && s.alpha < 1.0) {
                return Err(Error::domain("stable index", s.alpha, "0 < alpha < 1"));
            }
            if !(s.scale >= 0.0) {
                return Err(Error::domain("stable scale", s.scale, "scale >= 0"));
            }
            active |= s.scale > 0.0;
        }
        if let Some(g) = self.gamma {
            if !(g.shape >= 0.0) {
                return Err(Error::domain("gamma shape", g.shape, "shape >= 0"));
            }
            if !(g.rate > 0.0) {
                return Err(Error::domain("gamma rate", g.rate, "rate > 0"));
            }
            active |= g.shape > 0.0;
        }
        if let Some(cp) = self.compound_poisson {
            if !(cp.rate >= 0.0) {
                return Err(Error::domain("compound Poisson rate", cp.rate, "rate >= 0"));
            }
            let size = match cp.jumps {
                JumpLaw::Exponential { mean } => mean,
                JumpLaw::Deterministic { size } => size,
            };
            if !(size > 0.0) {
                return Err(Error::domain("jump size", size, "positive jumps"));
            }
            active |= cp.rate > 0.0;
        }
        if !active {
            return Err(Error::Precondition("subordinator has no active component".into()));
        }
        Ok(())
    }

    /// True iff `ϑ > 0` or the Lévy measure has infinite mass.
    pub fn is_strictly_increasing(&self) -> bool {
        self.drift > 0.0
            || self.stable.is_some_and(|s| s.scale > 0.0)
            || self.gamma.is_some_and(|g| g.shape > 0.0)
    }

    /// `φ(r)` for `r > 0`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("Laplace exponent argument", r, "r > 0"));
        }
        let mut v = self.drift * r;
        if let Some(s) = self.stable {
            v += s.scale * r.powf(s.alpha);
        }
        if let Some(g) = self.gamma {
            v += g.shape * (r / g.rate).ln_1p();
        }
        if let Some(cp) = self.compound_poisson {
            v += cp.rate
                * match cp.jumps {
                    JumpLaw::Exponential { mean } => r * mean / (1.0 + r * mean),
                    JumpLaw::Deterministic { size } => -(-r * size).exp_m1(),
                };
        }
        Ok(v)
    }

    /// Natural time scale for reaching level `t`: the `s` with `s φ(1/t) = 1`.
    pub fn natural_scale(&self, t: f64) -> Result<f64> {
        Ok(1.0 / self.phi(1.0 / t)?)
    }

    /// Increment of the jump part (everything but the drift) over a cell
    /// of length `dt`.
    pub fn sample_jump_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let mut x = 0.0;
        if let Some(s) = self.stable {
            if s.scale > 0.0 {
                x += (s.scale * dt).powf(1.0 / s.alpha) * positive_stable(s.alpha, rng);
            }
        }
        if let Some(g) = self.gamma {
            if g.shape > 0.0 {
                // Parameters were validated; Gamma::new only fails on invalid input.
                x += Gamma::new(g.shape * dt, 1.0 / g.rate)
                    .map(|d| d.sample(rng))
                    .unwrap_or(0.0);
            }
        }
        if let Some(cp) = self.compound_poisson {
            let lambda = cp.rate * dt;
            if lambda > 0.0 {
                let n = Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(0.0) as u64;
                for _ in 0..n {
                    x += match cp.jumps {
                        JumpLaw::Exponential { mean } => mean * rng.sample::<f64, _>(Exp1),
                        JumpLaw::Deterministic { size } => size,
                    };
                }
            }
        }
        x
    }
}

/// Standard positive `α`-stable variable with `E e^{-rY} = e^{-r^α}`
/// (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

/// How a [`TimeChangePath`] behaves between its grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Straight line between the sampled values (continuous clocks).
    Linear,
    /// Slope `drift` from the left value, then a jump to the right value at
    /// the end of the cell (sampled subordinators).
    DriftThenJump { drift: f64 },
}

/// A nondecreasing càdlàg path starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChangePath {
    grid: TimeGrid,
    values: Vec<f64>,
    interpolation: Interpolation,
    strictly_increasing: bool,
}

impl TimeChangePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Precondition(format!("time change must start at 0, starts at {}", values[0])));
        }
        if values.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Precondition("time change must be nondecreasing".into()));
        }
        let strictly_increasing = match interpolation {
            Interpolation::Linear => values.windows(2).all(|w| w[1] > w[0]),
            Interpolation::DriftThenJump { drift } => drift > 0.0 || values.windows(2).all(|w| w[1] > w[0]),
        };
        if let Interpolation::DriftThenJump { drift } = interpolation {
            let steps = grid.steps();
            if values.windows(2).zip(&steps).any(|(w, d)| w[1] - w[0] < drift * d * (1.0 - 1e-12)) {
                return Err(Error::Precondition("cell increment below the drift contribution".into()));
            }
        }
        Ok(Self {
            grid,
            values,
            interpolation,
            strictly_increasing,
        })
    }

    /// `ℓ(t) = c t` on `grid`.
    pub fn linear(grid: TimeGrid, rate: f64) -> Result<Self> {
        let values = grid.points().iter().map(|t| rate * t).collect();
        Self::new(grid, values, Interpolation::Linear)
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    #[inline]
    pub fn is_strictly_increasing(&self) -> bool {
        self.strictly_increasing
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.grid.end()
    }

    #[inline]
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `ℓ(t)`, right-continuous; errors beyond the horizon.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.horizon() {
            return Err(Error::Horizon {
                needed: t,
                available: self.horizon(),
            });
        }
        if t == self.horizon() {
            return Ok(self.terminal());
        }
        let i = self.grid.locate(t);
        Ok(self.eval_in_cell(i, t - self.grid.points()[i]))
    }

    fn eval_in_cell(&self, i: usize, u: f64) -> f64 {
        let p = self.grid.points();
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        match self.interpolation {
            Interpolation::Linear => v0 + (v1 - v0) * u / (p[i + 1] - p[i]),
            Interpolation::DriftThenJump { drift } => v0 + drift * u,
        }
    }

    /// `∫_{t_i}^{t_i + u} ℓ` inside cell `i`.
    fn integral_in_cell(&self, i: usize, u: f64) -> f64 {
        let p = self.grid.points();
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        match self.interpolation {
            Interpolation::Linear => v0 * u + 0.5 * (v1 - v0) * u * u / (p[i + 1] - p[i]),
            Interpolation::DriftThenJump { drift } => v0 * u + 0.5 * drift * u * u,
        }
    }

    /// Left-point Stieltjes sum `Σ w(t_j) (ℓ(t_{j+1}) - ℓ(t_j))` over the
    /// cells up to `t_end` (which must be a grid point or the horizon),
    /// together with the right-point sum.
    pub fn stieltjes_sums(&self, weight: impl Fn(f64) -> f64, t_end: f64) -> (f64, f64) {
        let p = self.grid.points();
        let mut left = 0.0;
        let mut right = 0.0;
        for i in 0..self.grid.cells() {
            if p[i] >= t_end {
                break;
            }
            let dv = self.values[i + 1] - self.values[i];
            left += weight(p[i]) * dv;
            right += weight(p[i + 1]) * dv;
        }
        (left, right)
    }
}

/// Subordinator path on `grid`: independent increments, drift inside cells
/// and the jump part added at the cell ends.
pub fn sample_subordinator<R: Rng + ?Sized>(spec: &BernsteinSpec, grid: &TimeGrid, rng: &mut R) -> Result<TimeChangePath> {
    spec.validate()?;
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    let mut acc = 0.0;
    for d in grid.steps() {
        acc += spec.drift * d + spec.sample_jump_increment(d, rng);
        values.push(acc);
    }
    TimeChangePath::new(
        grid.clone(),
        values,
        Interpolation::DriftThenJump { drift: spec.drift },
    )
}

/// Subordinator on a uniform mesh `ds`, extended until it exceeds `level`.
pub fn sample_subordinator_until<R: Rng + ?Sized>(
    spec: &BernsteinSpec,
    ds: f64,
    level: f64,
    rng: &mut R,
) -> Result<TimeChangePath> {
    spec.validate()?;
    if !spec.is_strictly_increasing() {
        return Err(Error::Precondition(
            "inverse subordinator needs a strictly increasing subordinator".into(),
        ));
    }
    if !(ds > 0.0) {
        return Err(Error::domain("subordinator mesh", ds, "ds > 0"));
    }
    let mut points = vec![0.0];
    let mut values = vec![0.0];
    let mut acc = 0.0;
    let mut k = 0u64;
    while acc <= level {
        acc += spec.drift * ds + spec.sample_jump_increment(ds, rng);
        k += 1;
        points.push(k as f64 * ds);
        values.push(acc);
    }
    TimeChangePath::new(
        TimeGrid::new(points)?,
        values,
        Interpolation::DriftThenJump { drift: spec.drift },
    )
}

/// `S^{-1}(t) = inf{s : S(s) > t}` for every query time.
pub fn invert_path(s: &TimeChangePath, query: &TimeGrid) -> Result<TimeChangePath> {
    if !s.is_strictly_increasing() {
        return Err(Error::Precondition(
            "path inversion needs a strictly increasing subordinator".into(),
        ));
    }
    let values = query
        .points()
        .iter()
        .map(|&t| first_passage(s, t))
        .collect::<Result<Vec<_>>>()?;
    TimeChangePath::new(query.clone(), values, Interpolation::Linear)
}

/// `inf{s : S(s) > t}` on a sampled path.
pub fn first_passage(s: &TimeChangePath, t: f64) -> Result<f64> {
    if t > s.terminal() || t < 0.0 {
        return Err(Error::OutOfRange {
            what: "inverse subordinator query",
            value: t,
            lo: 0.0,
            hi: s.terminal(),
        });
    }
    if t == 0.0 && s.is_strictly_increasing() {
        return Ok(0.0);
    }
    let v = s.values();
    let p = s.grid().points();
    // Last index with S(s_i) <= t.
    let i = v.partition_point(|&x| x <= t) - 1;
    if i + 1 >= v.len() {
        return Ok(s.horizon());
    }
    let dt = p[i + 1] - p[i];
    Ok(match s.interpolation() {
        Interpolation::Linear => p[i] + (t - v[i]) / (v[i + 1] - v[i]) * dt,
        Interpolation::DriftThenJump { drift } => {
            if drift > 0.0 && t < v[i] + drift * dt {
                p[i] + (t - v[i]) / drift
            } else {
                p[i + 1]
            }
        }
    })
}

/// First-passage times of one subordinator path over increasing `levels`,
/// simulated on mesh `ds` without storing the path.
pub fn first_passage_times<R: Rng + ?Sized>(spec: &BernsteinSpec, levels: &[f64], ds: f64, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if !spec.is_strictly_increasing() {
        return Err(Error::Precondition(
            "inverse subordinator needs a strictly increasing subordinator".into(),
        ));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("levels must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(levels.len());
    let mut s = 0.0;
    let mut v = 0.0;
    let mut next = 0;
    while next < levels.len() {
        let before = v;
        let drift_end = v + spec.drift * ds;
        v = drift_end + spec.sample_jump_increment(ds, rng);
        while next < levels.len() && levels[next] < v {
            let t = levels[next];
            out.push(if t == 0.0 {
                0.0
            } else if spec.drift > 0.0 && t < drift_end {
                s + (t - before) / spec.drift
            } else {
                s + ds
            });
            next += 1;
        }
        s += ds;
    }
    Ok(out)
}

/// `ℓ_ε` for a sampled clock `ℓ`, defined on `[0, horizon(ℓ) - ε]`.
#[derive(Debug, Clone)]
pub struct RegularizedClock {
    path: TimeChangePath,
    eps: f64,
    /// `A(t_i) = ∫_0^{t_i} ℓ`.
    prefix: Vec<f64>,
}

impl RegularizedClock {
    pub fn new(path: TimeChangePath, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain("regularisation epsilon", eps, "0 < eps < 1"));
        }
        if path.horizon() <= eps {
            return Err(Error::Horizon {
                needed: eps,
                available: path.horizon(),
            });
        }
        let mut prefix = Vec::with_capacity(path.grid().len());
        prefix.push(0.0);
        let steps = path.grid().steps();
        for (i, d) in steps.iter().enumerate() {
            let last = prefix[i];
            prefix.push(last + path.integral_in_cell(i, *d));
        }
        Ok(Self { path, eps, prefix })
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn path(&self) -> &TimeChangePath {
        &self.path
    }

    /// Last time at which `ℓ_ε` is defined.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.path.horizon() - self.eps
    }

    fn primitive(&self, t: f64) -> f64 {
        if t >= self.path.horizon() {
            return self.prefix[self.prefix.len() - 1];
        }
        let i = self.path.grid().locate(t);
        self.prefix[i] + self.path.integral_in_cell(i, t - self.path.grid().points()[i])
    }

    fn check(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.horizon() * (1.0 + 1e-14) {
            Err(Error::Horizon {
                needed: t + self.eps,
                available: self.path.horizon(),
            })
        } else {
            Ok(())
        }
    }

    /// `ℓ_ε(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        (self.primitive(t + self.eps) - self.primitive(t)) / self.eps + self.eps * t
    }

    /// `ℓ_ε'(t) = (ℓ(t+ε) - ℓ(t))/ε + ε` (right derivative).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let h = self.path.horizon();
        Ok((self.path.eval((t + self.eps).min(h))? - self.path.eval(t)?) / self.eps + self.eps)
    }

    /// `γ_ε(y)`, the inverse of `ℓ_ε`, by bisection.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let lo_v = self.eval_unchecked(0.0);
        let hi_t = self.horizon();
        let hi_v = self.eval_unchecked(hi_t);
        let slack = 1e-12 * hi_v.abs().max(1.0);
        if y < lo_v - slack || y > hi_v + slack {
            return Err(Error::OutOfRange {
                what: "regularised clock value",
                value: y,
                lo: lo_v,
                hi: hi_v,
            });
        }
        let y = y.clamp(lo_v, hi_v);
        let (mut a, mut b) = (0.0, hi_t);
        let tol = 1e-13 * hi_t.max(1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.eval_unchecked(m) < y {
                a = m;
            } else {
                b = m;
            }
            if b - a <= tol {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `ℓ_ε` sampled on `grid`.
    pub fn sampled(&self, grid: &TimeGrid) -> Result<SampledFunction> {
        self.check(grid.end())?;
        Ok(SampledFunction::from_fn(grid.clone(), |t| self.eval_unchecked(t)))
    }

    /// `∫_0^T w(t) dℓ_ε(t) = ∫_0^T w(t) ℓ_ε'(t) dt`, with 4-point Gauss rules
    /// between the breakpoints of `ℓ_ε'` (the grid points of `ℓ` and those
    /// shifted by `-ε`).
    pub fn stieltjes(&self, weight: impl Fn(f64) -> f64, t_end: f64) -> Result<f64> {
        self.check(t_end)?;
        let mut breaks: Vec<f64> = vec![0.0, t_end];
        for &s in self.path.grid().points() {
            for b in [s, s - self.eps] {
                if b > 0.0 && b < t_end {
                    breaks.push(b);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        const X: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const W: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, wt) in X.iter().zip(&W) {
                let t = c + r * x;
                total += r * wt * weight(t) * self.derivative(t)?;
            }
        }
        Ok(total)
    }
}

/// Configuration-level description of a clock `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClockSpec {
    /// `Z(t) = rate·t`.
    Linear { rate: f64 },
    /// Piecewise-linear table starting at `(0, 0)`.
    Table { times: Vec<f64>, values: Vec<f64> },
    Subordinator { bernstein: BernsteinSpec },
    /// `Z = S^{-1}`, simulated on a mesh `refine` times finer than the
    /// query grid in units of the natural scale `1/φ(1/T)`.
    InverseSubordinator {
        bernstein: BernsteinSpec,
        #[serde(default = "default_refine")]
        refine: usize,
    },
}

fn default_refine() -> usize {
    10
}

impl ClockSpec {
    pub fn identity() -> Self {
        ClockSpec::Linear { rate: 1.0 }
    }

    pub fn stable(alpha: f64) -> Self {
        ClockSpec::Subordinator {
            bernstein: BernsteinSpec::stable(alpha, 1.0),
        }
    }

    pub fn inverse_stable(alpha: f64) -> Self {
        ClockSpec::InverseSubordinator {
            bernstein: BernsteinSpec::stable(alpha, 1.0),
            refine: default_refine(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClockSpec::Linear { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::domain("clock rate", *rate, "rate > 0"));
                }
            }
            ClockSpec::Table { times, values } => {
                TimeGrid::new(times.clone())?;
                TimeChangePath::new(TimeGrid::new(times.clone())?, values.clone(), Interpolation::Linear)?;
            }
            ClockSpec::Subordinator { bernstein } => bernstein.validate()?,
            ClockSpec::InverseSubordinator { bernstein, refine } => {
                bernstein.validate()?;
                if !bernstein.is_strictly_increasing() {
                    return Err(Error::Precondition(
                        "inverse subordinator needs a strictly increasing subordinator".into(),
                    ));
                }
                if *refine == 0 {
                    return Err(Error::domain("inverse clock refinement", 0.0, "refine >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn is_random(&self) -> bool {
        matches!(self, ClockSpec::Subordinator { .. } | ClockSpec::InverseSubordinator { .. })
    }

    pub fn is_inverse_subordinator(&self) -> bool {
        matches!(self, ClockSpec::InverseSubordinator { .. })
    }

    /// The clock sampled on `grid` (natural time).
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Result<TimeChangePath> {
        match self {
            ClockSpec::Linear { rate } => TimeChangePath::linear(grid.clone(), *rate),
            ClockSpec::Table { times, values } => {
                let table = TimeChangePath::new(TimeGrid::new(times.clone())?, values.clone(), Interpolation::Linear)?;
                let v = grid
                    .points()
                    .iter()
                    .map(|&t| table.eval(t))
                    .collect::<Result<Vec<_>>>()?;
                TimeChangePath::new(grid.clone(), v, Interpolation::Linear)
            }
            ClockSpec::Subordinator { bernstein } => sample_subordinator(bernstein, grid, rng),
            ClockSpec::InverseSubordinator { bernstein, refine } => {
                let ds = bernstein.natural_scale(grid.end())? / (*refine * grid.cells()) as f64;
                let s = sample_subordinator_until(bernstein, ds, grid.end(), rng)?;
                invert_path(&s, grid)
            }
        }
    }

    /// `Z(T)` alone, without storing a path where that is possible.
    pub fn sample_terminal<R: Rng + ?Sized>(&self, horizon: f64, cells: usize, rng: &mut R) -> Result<f64> {
        match self {
            ClockSpec::Subordinator { bernstein } => {
                bernstein.validate()?;
                Ok(bernstein.drift * horizon + bernstein.sample_jump_increment(horizon, rng))
            }
            ClockSpec::InverseSubordinator { bernstein, refine } => {
                let ds = bernstein.natural_scale(horizon)? / (*refine * cells) as f64;
                Ok(first_passage_times(bernstein, &[horizon], ds, rng)?[0])
            }
            _ => Ok(self.sample(&TimeGrid::uniform(horizon, cells)?, rng)?.terminal()),
        }
    }
}
