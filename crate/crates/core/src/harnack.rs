//! Harnack-type bounds and their Monte Carlo verification.
//!
//! The bounds share one clock functional: the expectation over `Z` of
//! `Z(T)^{2-2H} / (∫_0^T e^{-K} dZ)²` (isotropic) or of `Z_i(T)^{-2H_i}`
//! (anisotropic). Left-hand sides and right-hand sides of an inequality are
//! estimated on disjoint random streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::KernelScaling;
use crate::frac_kernel::variance_factor;
use crate::grid::TimeGrid;
use crate::rng::{self, tag};
use crate::sde::{self, Certificate, KFunction, McOptions, Model, SolverOptions, TestFunction, UFunction};
use crate::specfun::{gamma, theta_h, HurstExponent};
use crate::stats::{pairwise_sum, Estimate};
use crate::timechange::{BernsteinSpec, ClockSpec};

/// `Θ_H` for the model's normalisation of `W^H` (the constant is derived
/// for the representation process of variance `V_H t^{2H}`).
pub fn effective_theta(h: HurstExponent, scaling: KernelScaling) -> Result<f64> {
    Ok(theta_h(h)? * variance_factor(h) / scaling.variance(h))
}

/// Monte Carlo settings for clock expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorOptions {
    pub n_samples: usize,
    /// Cells of the grid on which random clocks are sampled.
    pub cells: usize,
    pub seed: u64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            cells: 256,
            seed: 0,
        }
    }
}

/// Outcome of the stabilisation test on a running mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    pub flagged: bool,
    /// Failed comparisons among `n/8 → n/4 → n/2 → n`.
    pub failures: usize,
}

/// Compare running means at `n/8, n/4, n/2, n`. A doubling fails when the
/// means differ by more than 5 SE of the smaller prefix, when a single
/// sample carries more than half of the total mass, or when any sample is
/// not finite; three consecutive failures flag divergence.
pub fn divergence_check(samples: &[f64]) -> DivergenceCheck {
    if samples.iter().any(|v| !v.is_finite()) {
        return DivergenceCheck {
            flagged: true,
            failures: 3,
        };
    }
    let n = samples.len();
    let mut failures = 0;
    let mut run = 0;
    let mut flagged = false;
    for k in (1..=3).rev() {
        let m = n >> k;
        if m < 2 {
            continue;
        }
        let a = Estimate::from_samples(&samples[..m]);
        let b = Estimate::from_samples(&samples[..2 * m]);
        let mass = pairwise_sum(&samples[..2 * m].iter().map(|v| v.abs()).collect::<Vec<_>>());
        let top = samples[..2 * m].iter().fold(0.0f64, |t, v| t.max(v.abs()));
        let fail = (b.mean - a.mean).abs() > 5.0 * a.se || (mass > 0.0 && top > 0.5 * mass);
        if fail {
            failures += 1;
            run += 1;
            flagged |= run >= 3;
        } else {
            run = 0;
        }
    }
    DivergenceCheck { flagged, failures }
}

/// The clock functional with its convention sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEstimate {
    /// Left-point Stieltjes convention.
    pub estimate: Estimate,
    /// Right-point convention minus left-point, on the same draws.
    pub convention_gap: f64,
    pub divergence: DivergenceCheck,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl FactorEstimate {
    fn exact(value: f64) -> Self {
        Self {
            estimate: Estimate::exact(value),
            convention_gap: 0.0,
            divergence: DivergenceCheck {
                flagged: false,
                failures: 0,
            },
            samples: vec![value],
        }
    }

    fn from_pairs(left: Vec<f64>, right: &[f64]) -> Self {
        let estimate = Estimate::from_samples(&left);
        let gap = Estimate::from_samples(right).mean - estimate.mean;
        Self {
            estimate,
            convention_gap: gap,
            divergence: divergence_check(&left),
            samples: left,
        }
    }
}

fn k_is_zero(k: &KFunction) -> bool {
    match k {
        KFunction::Constant { value } => *value == 0.0,
        KFunction::Affine { intercept, slope } => *intercept == 0.0 && *slope == 0.0,
        KFunction::Table { values, .. } => values.iter().all(|v| *v == 0.0),
    }
}

const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `(Z(T), ∫_0^T e^{-K} dZ)` for a deterministic clock, integrating the
/// piecewise-constant density of `Z` against `e^{-K}` by Gauss rules.
fn deterministic_pair(clock: &ClockSpec, k: &KFunction, horizon: f64) -> Result<(f64, f64)> {
    let mut breaks: Vec<f64> = (0..=256).map(|i| horizon * i as f64 / 256.0).collect();
    if let ClockSpec::Table { times, .. } = clock {
        breaks.extend(times.iter().copied().filter(|&t| t < horizon));
    }
    if let KFunction::Table { times, .. } = k {
        breaks.extend(times.iter().copied().filter(|&t| t < horizon));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let path = clock.sample(&TimeGrid::new(breaks.clone())?, &mut rng::stream(0, tag::CLOCK, 0))?;
    let z = path.values();
    let mut integral = 0.0;
    for (j, w) in breaks.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let slope = (z[j + 1] - z[j]) / (b - a);
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let cell: f64 = GL8_X.iter().zip(&GL8_W).map(|(x, wt)| wt * (-k.integral(c + r * x)).exp()).sum();
        integral += slope * r * cell;
    }
    Ok((path.terminal(), integral))
}

/// `E[Z(T)^{2-2H} / (∫_0^T e^{-K(t)} dZ(t))²]`.
pub fn expectation_factor(clock: &ClockSpec, hurst: HurstExponent, k: &KFunction, horizon: f64, opts: &FactorOptions) -> Result<FactorEstimate> {
    clock.validate()?;
    let e = 2.0 - 2.0 * hurst.get();
    if !clock.is_random() {
        let (z, s) = deterministic_pair(clock, k, horizon)?;
        return Ok(FactorEstimate::exact(z.powf(e) / (s * s)));
    }
    if opts.n_samples < 2 {
        return Err(Error::domain("n_z_samples", opts.n_samples as f64, "at least 2"));
    }
    let draws: Vec<(f64, f64)> = if k_is_zero(k) {
        (0..opts.n_samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(rng::derive(opts.seed, tag::CLOCK, i), tag::CLOCK, 0);
                let z = clock.sample_terminal(horizon, opts.cells, &mut r)?;
                let v = z.powf(-2.0 * hurst.get());
                Ok((v, v))
            })
            .collect::<Result<_>>()?
    } else {
        let grid = TimeGrid::uniform(horizon, opts.cells)?;
        (0..opts.n_samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(rng::derive(opts.seed, tag::CLOCK, i), tag::CLOCK, 0);
                let path = clock.sample(&grid, &mut r)?;
                let (left, right) = path.stieltjes_sums(|t| (-k.integral(t)).exp(), horizon);
                let z = path.terminal().powf(e);
                Ok((z / (left * left), z / (right * right)))
            })
            .collect::<Result<_>>()?
    };
    let (left, right): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    Ok(FactorEstimate::from_pairs(left, &right))
}

/// `E[Z(T)^{-2H}]`, the anisotropic clock functional of one coordinate.
pub fn inverse_power_factor(clock: &ClockSpec, hurst: HurstExponent, horizon: f64, opts: &FactorOptions, coordinate: u64) -> Result<FactorEstimate> {
    clock.validate()?;
    let q = -2.0 * hurst.get();
    if !clock.is_random() {
        let (z, _) = deterministic_pair(clock, &KFunction::constant(0.0), horizon)?;
        return Ok(FactorEstimate::exact(z.powf(q)));
    }
    let samples = terminal_samples(clock, horizon, opts, coordinate)?
        .into_iter()
        .map(|z| z.powf(q))
        .collect::<Vec<_>>();
    Ok(FactorEstimate::from_pairs(samples.clone(), &samples))
}

fn terminal_samples(clock: &ClockSpec, horizon: f64, opts: &FactorOptions, coordinate: u64) -> Result<Vec<f64>> {
    (0..opts.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng::derive(opts.seed, tag::CLOCK, i), tag::CLOCK, coordinate);
            clock.sample_terminal(horizon, opts.cells, &mut r)
        })
        .collect()
}

fn isotropic_parts(model: &Model) -> Result<(HurstExponent, &ClockSpec, &KFunction)> {
    model.validate()?;
    if model.is_anisotropic() {
        return Err(Error::Precondition("isotropic bounds need one Hurst index and one shared clock".into()));
    }
    let k = match &model.drift.certificate {
        Certificate::OneSidedLipschitz { k } => k,
        Certificate::YamadaWatanabe { .. } => {
            return Err(Error::Hypothesis("isotropic bounds need a one-sided Lipschitz certificate".into()));
        }
    };
    Ok((model.hurst(0), model.clock(0), k))
}

/// `Θ_H E[Z(T)^{2-2H}/(∫e^{-K}dZ)²]`, shared by the log-Harnack and
/// gradient bounds.
pub fn harnack_coefficient(model: &Model, horizon: f64, opts: &FactorOptions) -> Result<(f64, FactorEstimate)> {
    let (h, clock, k) = isotropic_parts(model)?;
    let theta = effective_theta(h, model.noise.scaling)?;
    let factor = expectation_factor(clock, h, k, horizon, opts)?;
    if factor.divergence.flagged {
        return Err(Error::Divergence(format!(
            "clock expectation did not stabilise ({} failed doublings)",
            factor.divergence.failures
        )));
    }
    Ok((theta, factor))
}

fn scale(e: &Estimate, c: f64) -> Estimate {
    Estimate {
        mean: e.mean * c,
        se: e.se * c.abs(),
        n: e.n,
    }
}

/// `Θ_H E[Z(T)^{2-2H}/(∫_0^T e^{-K} dZ)²] |x-y|²`.
pub fn log_harnack_bound(model: &Model, horizon: f64, x: &[f64], y: &[f64], opts: &FactorOptions) -> Result<Estimate> {
    let d2 = dist2(x, y);
    if d2 == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let (theta, f) = harnack_coefficient(model, horizon, opts)?;
    Ok(scale(&f.estimate, theta * d2))
}

/// `2Θ_H E[Z(T)^{2-2H}/(∫_0^T e^{-K} dZ)²]`.
pub fn gradient_bound(model: &Model, horizon: f64, opts: &FactorOptions) -> Result<Estimate> {
    let (theta, f) = harnack_coefficient(model, horizon, opts)?;
    Ok(scale(&f.estimate, 2.0 * theta))
}

/// `(E exp[pΘ_H Z(T)^{2-2H}|x-y|² / ((p-1)²(∫e^{-K}dZ)²)])^{p-1}`.
pub fn power_harnack_factor(model: &Model, horizon: f64, x: &[f64], y: &[f64], p: f64, opts: &FactorOptions) -> Result<Estimate> {
    if !(p > 1.0) {
        return Err(Error::domain("p", p, "p > 1"));
    }
    let (h, clock, k) = isotropic_parts(model)?;
    let d2 = dist2(x, y);
    if d2 == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    if clock.is_inverse_subordinator() {
        return Err(inverse_clock_refusal());
    }
    let theta = effective_theta(h, model.noise.scaling)?;
    let c = p * theta * d2 / ((p - 1.0) * (p - 1.0));
    let base = expectation_factor(clock, h, k, horizon, opts)?;
    let samples: Vec<f64> = base.samples.iter().map(|v| (c * v).exp()).collect();
    power_of_mean(&samples, p)
}

fn inverse_clock_refusal() -> Error {
    Error::Divergence(
        "E exp[δ/Z(T)^θ] is infinite for inverse stable clocks, so no power-Harnack factor exists".into(),
    )
}

/// `(mean)^{p-1}` with a delta-method SE, after the divergence test.
fn power_of_mean(samples: &[f64], p: f64) -> Result<Estimate> {
    let check = divergence_check(samples);
    if check.flagged {
        return Err(Error::Divergence(format!(
            "exponential moment did not stabilise ({} failed doublings)",
            check.failures
        )));
    }
    let e = Estimate::from_samples(samples);
    Ok(Estimate {
        mean: e.mean.powf(p - 1.0),
        se: (p - 1.0) * e.mean.powf(p - 2.0) * e.se,
        n: e.n,
    })
}

/// The three anisotropic bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicBounds {
    /// `Φ_{u,k}(T, ‖x-y‖₁)`.
    pub phi: f64,
    /// `Θ_{H_i}` in the model's normalisation.
    pub thetas: Vec<f64>,
    /// `E[Z_i(T)^{-2H_i}]`.
    pub expectations: Vec<Estimate>,
    /// i) `Φ² Σ Θ_i E[Z_i^{-2H_i}]`.
    pub log: Estimate,
    /// ii) the power factor, `None` when it diverges.
    pub power: Option<Estimate>,
    /// iii) `2(1 + c∫k e^{cK})² Σ Θ_i E[Z_i^{-2H_i}]`, when `u(s) = cs`.
    pub gradient: Option<Estimate>,
}

fn anisotropic_parts(model: &Model) -> Result<(&UFunction, &KFunction)> {
    model.validate()?;
    if model.dim > 1 && model.noise.clocks.len() != model.dim {
        return Err(Error::Precondition("anisotropic bounds need one clock per coordinate".into()));
    }
    match &model.drift.certificate {
        Certificate::YamadaWatanabe { u, k } => Ok((u, k)),
        Certificate::OneSidedLipschitz { .. } => Err(Error::Hypothesis(
            "anisotropic bounds need a condition (A) certificate".into(),
        )),
    }
}

/// Bounds i)–iii) for the anisotropic equation; `p` selects ii).
pub fn anisotropic_bounds(model: &Model, horizon: f64, x: &[f64], y: &[f64], p: Option<f64>, opts: &FactorOptions) -> Result<AnisotropicBounds> {
    let (u, k) = anisotropic_parts(model)?;
    let d = model.dim;
    let r: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let phi = u.phi(k, horizon, r)?;
    let mut thetas = Vec::with_capacity(d);
    let mut expectations = Vec::with_capacity(d);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let h = model.hurst(i);
        thetas.push(effective_theta(h, model.noise.scaling)?);
        let f = inverse_power_factor(model.clock(i), h, horizon, opts, i as u64)?;
        if f.divergence.flagged && !model.clock(i).is_inverse_subordinator() {
            return Err(Error::Divergence(format!("E[Z_{i}(T)^(-2H)] did not stabilise")));
        }
        expectations.push(f.estimate);
        samples.push(f.samples);
    }
    let combined = combine(&thetas, &expectations);
    let log = scale(&combined, phi * phi);
    let power = match p {
        Some(p) if !(p > 1.0) => return Err(Error::domain("p", p, "p > 1")),
        Some(_) if r == 0.0 => Some(Estimate::exact(1.0)),
        Some(p) => {
            if (0..d).any(|i| model.clock(i).is_inverse_subordinator()) {
                None
            } else {
                let n = samples.iter().map(|s| s.len()).max().unwrap_or(1);
                let c = p * phi * phi / ((p - 1.0) * (p - 1.0));
                let joint: Vec<f64> = (0..n)
                    .map(|j| {
                        let s: f64 = (0..d).map(|i| thetas[i] * samples[i][j.min(samples[i].len() - 1)]).sum();
                        (c * s).exp()
                    })
                    .collect();
                match power_of_mean(&joint, p) {
                    Ok(e) => Some(e),
                    Err(Error::Divergence(_)) => None,
                    Err(e) => return Err(e),
                }
            }
        }
        None => None,
    };
    let gradient = u.linear_constant().map(|c| {
        let growth = (c * k.integral(horizon)).exp();
        scale(&combined, 2.0 * growth * growth)
    });
    Ok(AnisotropicBounds {
        phi,
        thetas,
        expectations,
        log,
        power,
        gradient,
    })
}

/// `Σ θ_i E_i` with independent SEs.
fn combine(thetas: &[f64], es: &[Estimate]) -> Estimate {
    let mean = thetas.iter().zip(es).map(|(t, e)| t * e.mean).sum();
    let var: f64 = thetas.iter().zip(es).map(|(t, e)| (t * e.se).powi(2)).sum();
    Estimate {
        mean,
        se: var.sqrt(),
        n: es.iter().map(|e| e.n).min().unwrap_or(1),
    }
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Which clock family a corollary speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockRegime {
    Subordinator,
    InverseSubordinator,
}

/// Predicted `T`-scaling exponents of the bound factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSchedule {
    pub regime: ClockRegime,
    /// Per coordinate: `ρ_i` (subordinators) or `σ_i` (inverse ones).
    pub indices: Vec<f64>,
    /// Per coordinate: `2H_i/ρ_i` or `2H_iσ_i`; the factor scales like
    /// `T^{-exponent}`.
    pub exponents: Vec<f64>,
    /// `κ₁` / `κ₃`: twice the smallest of the per-coordinate ratios.
    pub kappa_min: f64,
    /// `κ₂` / `κ₄`.
    pub kappa_max: f64,
    /// Whether the small-`r` condition also holds, so the bound holds with
    /// `T` in place of `T ∧ 1`.
    pub global: bool,
    /// Subordinators only: `2H_i/(ρ_i - 2H_i(1-ρ_i))` when
    /// `ρ_i > 2H_i/(1+2H_i)`.
    pub power_exponents: Vec<Option<f64>>,
}

/// Power-law indices of `φ` at infinity and at zero, from the components
/// (drift 1, stable `α`, gamma 0 at infinity and 1 at zero, compound
/// Poisson 0 at infinity and 1 at zero).
fn bernstein_indices(spec: &BernsteinSpec) -> (f64, f64) {
    let mut at_inf: f64 = 0.0;
    let mut at_zero: f64 = f64::INFINITY;
    if spec.drift > 0.0 {
        at_inf = at_inf.max(1.0);
        at_zero = at_zero.min(1.0);
    }
    if let Some(s) = &spec.stable {
        at_inf = at_inf.max(s.alpha);
        at_zero = at_zero.min(s.alpha);
    }
    if spec.gamma.is_some() || spec.compound_poisson.is_some() {
        at_zero = at_zero.min(1.0);
    }
    (at_inf, at_zero)
}

/// `φ(r) r^{-ρ}` stays within `[lo, hi]` on `r = 10^k`, `k ∈ range`.
fn ratio_bounds(spec: &BernsteinSpec, rho: f64, range: std::ops::RangeInclusive<i32>) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for k in range {
        let r = 10f64.powi(k);
        let v = spec.phi(r)? * r.powf(-rho);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

fn bernstein_of(clock: &ClockSpec) -> Result<(BernsteinSpec, ClockRegime)> {
    match clock {
        ClockSpec::Linear { rate } => Ok((BernsteinSpec::drift(*rate), ClockRegime::Subordinator)),
        ClockSpec::Subordinator { bernstein } => Ok((*bernstein, ClockRegime::Subordinator)),
        ClockSpec::InverseSubordinator { bernstein, .. } => Ok((*bernstein, ClockRegime::InverseSubordinator)),
        ClockSpec::Table { .. } => Err(Error::Hypothesis("tabulated clocks carry no Bernstein function".into())),
    }
}

/// Exponent schedule for the given clocks and Hurst indices (one clock per
/// coordinate, or one clock and one index).
pub fn corollary_exponents(clocks: &[ClockSpec], hurst: &[f64]) -> Result<ExponentSchedule> {
    if clocks.is_empty() || clocks.len() != hurst.len() {
        return Err(Error::Precondition("one Hurst index per clock".into()));
    }
    let mut regime = None;
    let mut indices = Vec::new();
    let mut exponents = Vec::new();
    let mut power_exponents = Vec::new();
    let mut global = true;
    for (clock, &h) in clocks.iter().zip(hurst) {
        HurstExponent::new(h)?;
        let (spec, reg) = bernstein_of(clock)?;
        spec.validate()?;
        if regime.is_some_and(|r| r != reg) {
            return Err(Error::Precondition("clocks must all be subordinators or all inverse subordinators".into()));
        }
        regime = Some(reg);
        let (at_inf, at_zero) = bernstein_indices(&spec);
        match reg {
            ClockRegime::Subordinator => {
                // liminf_{r→∞} φ(r) r^{-ρ} > 0 needs ρ > 0 attained at infinity
                let rho = at_inf;
                let (lo, _) = if rho > 0.0 { ratio_bounds(&spec, rho, 6..=12)? } else { (0.0, 0.0) };
                if !(rho > 0.0) || !(lo > 1e-3 * spec.phi(1.0)?) {
                    return Err(Error::Hypothesis(format!(
                        "liminf φ(r) r^(-ρ) > 0 as r → ∞ fails for every ρ > 0 (φ(10^12) = {:.4e})",
                        spec.phi(1e12)?
                    )));
                }
                let (lo0, _) = ratio_bounds(&spec, rho, -12..=-6)?;
                global &= lo0 > 1e-3 * spec.phi(1.0)?;
                indices.push(rho);
                exponents.push(2.0 * h / rho);
                power_exponents.push((rho > 2.0 * h / (1.0 + 2.0 * h)).then(|| 2.0 * h / (rho - 2.0 * h * (1.0 - rho))));
            }
            ClockRegime::InverseSubordinator => {
                // φ(r) ≤ c r^σ for all r needs index(∞) ≤ σ ≤ index(0)
                let sigma = at_inf;
                let (_, hi_inf) = ratio_bounds(&spec, sigma, 6..=12)?;
                let (_, hi_zero) = ratio_bounds(&spec, sigma, -12..=-6)?;
                let cap = 1e3 * spec.phi(1.0)?;
                if !(sigma > 0.0) || at_zero < sigma || hi_inf > cap || hi_zero > cap {
                    return Err(Error::Hypothesis(format!(
                        "no σ > 0 with limsup φ(r) r^(-σ) < ∞ at both 0 and ∞ (indices {at_zero} at 0, {at_inf} at ∞)"
                    )));
                }
                indices.push(sigma);
                exponents.push(2.0 * h * sigma);
                power_exponents.push(None);
            }
        }
    }
    let kappa_min = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa_max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentSchedule {
        regime: regime.expect("nonempty"),
        indices,
        exponents,
        kappa_min,
        kappa_max,
        global,
        power_exponents,
    })
}

/// `(1/(1-θ)) [2cΓ(σ+1)]^θ t^{-σθ}`, the bound on `E[(S^{-1}(t))^{-θ}]`
/// when `φ(r) ≤ c r^σ`.
pub fn inverse_moment_bound(sigma: f64, theta: f64, c: f64, t: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain("theta", theta, "0 < theta < 1"));
    }
    if !(sigma > 0.0 && c > 0.0 && t > 0.0) {
        return Err(Error::domain("sigma, c, t", sigma.min(c).min(t), "all > 0"));
    }
    Ok((2.0 * c * gamma(sigma + 1.0)?).powf(theta) * t.powf(-sigma * theta) / (1.0 - theta))
}

/// One point of an exponent sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub horizon: f64,
    pub factor: Estimate,
}

/// The clock expectation across horizons with its log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSweep {
    pub points: Vec<SweepPoint>,
    pub fitted_slope: f64,
    /// `-2H/ρ` or `-2Hσ`; `None` when the corollary hypotheses fail.
    pub predicted_slope: Option<f64>,
}

/// `E[Z(T)^{2-2H}/(∫e^{-K}dZ)²]` at each `T` and the least-squares slope
/// of its logarithm against `log T`. Every horizon reuses `opts.seed`.
pub fn exponent_sweep(clock: &ClockSpec, hurst: HurstExponent, k: &KFunction, horizons: &[f64], opts: &FactorOptions) -> Result<ExponentSweep> {
    if horizons.len() < 2 || horizons.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Precondition("the sweep needs at least two positive horizons".into()));
    }
    let mut points = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let f = expectation_factor(clock, hurst, k, t, opts)?;
        if f.divergence.flagged {
            return Err(Error::Divergence(format!("clock expectation did not stabilise at T = {t}")));
        }
        points.push(SweepPoint {
            horizon: t,
            factor: f.estimate,
        });
    }
    let lx: Vec<f64> = points.iter().map(|p| p.horizon.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.factor.mean.ln()).collect();
    let (_, slope, _) = crate::stats::linear_fit(&lx, &ly);
    let predicted = match corollary_exponents(std::slice::from_ref(clock), &[hurst.get()]) {
        Ok(s) => Some(-s.exponents[0]),
        Err(Error::Hypothesis(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ExponentSweep {
        points,
        fitted_slope: slope,
        predicted_slope: predicted,
    })
}

/// The inequality under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InequalityKind {
    Log,
    Power { p: f64 },
    Gradient,
}

impl InequalityKind {
    pub fn name(&self) -> &'static str {
        match self {
            InequalityKind::Log => "log",
            InequalityKind::Power { .. } => "power",
            InequalityKind::Gradient => "gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub horizon: f64,
    /// Cells of the solver grid.
    pub cells: usize,
    pub n_paths: usize,
    pub n_z_samples: usize,
    /// Cells of the grid random clocks are sampled on for the bound.
    pub z_cells: usize,
    pub seed: u64,
    /// Step of the central differences in the gradient check.
    pub fd_step: f64,
    pub solver: SolverOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            cells: 32,
            n_paths: 10_000,
            n_z_samples: 10_000,
            z_cells: 256,
            seed: 0,
            fd_step: 0.05,
            solver: SolverOptions::default(),
        }
    }
}

/// Seeds of the four disjoint streams of one verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSeeds {
    pub base: u64,
    pub lhs: u64,
    pub rhs: u64,
    pub factor: u64,
    pub variance: u64,
}

impl ReportSeeds {
    pub fn new(base: u64) -> Self {
        Self {
            base,
            lhs: rng::derive(base, tag::LHS, 0),
            rhs: rng::derive(base, tag::RHS, 0),
            factor: rng::derive(base, tag::FACTOR, 0),
            variance: rng::derive(base, tag::VARIANCE, 0),
        }
    }
}

/// One verified inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub kind: String,
    pub p: Option<f64>,
    pub anisotropic: bool,
    pub lhs: Estimate,
    /// `None` when the bound's expectation diverged.
    pub rhs: Option<Estimate>,
    /// `Θ_H`, or `Θ_{H_i}` per coordinate.
    pub constants: Vec<f64>,
    /// The clock expectation(s) entering the bound.
    pub expectations: Vec<Estimate>,
    /// `|x-y|²` or `Φ²_{u,k}(T, ‖x-y‖₁)`; for the gradient kind the factor
    /// multiplying the constants and expectations.
    pub displacement: f64,
    /// The bound term: additive (log), multiplicative (power) or the
    /// variance multiplier (gradient).
    pub bound: Option<Estimate>,
    /// Right-point minus left-point Stieltjes convention of the clock
    /// expectation.
    pub convention_gap: f64,
    pub margin: Option<f64>,
    pub pass: bool,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
    pub n_paths: usize,
    pub n_z_samples: usize,
    pub seeds: ReportSeeds,
}

impl HarnackReport {
    /// JSON with every number rounded to 12 significant digits.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serialises");
        serde_json::to_string_pretty(&round_json(v)).expect("report serialises")
    }
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Round every float in a JSON tree to 12 significant digits.
pub fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(f64::NAN), 12);
            serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn mc(opts: &VerifyOptions, seed: u64) -> McOptions {
    McOptions {
        horizon: opts.horizon,
        cells: opts.cells,
        n_paths: opts.n_paths,
        seed,
        solver: opts.solver,
    }
}

fn product(a: &Estimate, b: &Estimate) -> Estimate {
    Estimate {
        mean: a.mean * b.mean,
        se: (b.mean * b.mean * a.se * a.se + a.mean * a.mean * b.se * b.se).sqrt(),
        n: a.n.min(b.n),
    }
}

/// Estimate both sides of the inequality `kind` for `f` and decide whether
/// `lhs ≤ rhs + 3·SE`.
pub fn verify_inequality(kind: InequalityKind, f: &TestFunction, x: &[f64], y: &[f64], model: &Model, opts: &VerifyOptions) -> Result<HarnackReport> {
    model.validate()?;
    if x.len() != model.dim || y.len() != model.dim {
        return Err(Error::Precondition(format!("starts must have dimension {}", model.dim)));
    }
    sde::check_index(f, model.dim)?;
    let (lo, _) = f.bounds();
    match kind {
        InequalityKind::Log if !(lo >= 1.0) || !f.is_bounded() => {
            return Err(Error::Precondition("the log-Harnack inequality needs a bounded f >= 1".into()));
        }
        InequalityKind::Power { p } if !(lo >= 0.0) || !f.is_bounded() || !(p > 1.0) => {
            return Err(Error::Precondition("the power-Harnack inequality needs a bounded f >= 0 and p > 1".into()));
        }
        InequalityKind::Gradient if !f.is_bounded() => {
            return Err(Error::Precondition("the gradient estimate needs a bounded f".into()));
        }
        _ => {}
    }
    let seeds = ReportSeeds::new(opts.seed);
    let fopts = FactorOptions {
        n_samples: opts.n_z_samples,
        cells: opts.z_cells,
        seed: seeds.factor,
    };
    let anisotropic = matches!(model.drift.certificate, Certificate::YamadaWatanabe { .. });
    let (constants, expectations, displacement, bound, gap) = bound_parts(kind, model, opts.horizon, x, y, &fopts, anisotropic)?;
    let lhs = match kind {
        InequalityKind::Log => {
            let g = TestFunction::Log { inner: Box::new(f.clone()) };
            sde::estimate_pt(&g, y, model, &mc(opts, seeds.lhs))?
        }
        InequalityKind::Power { p } => {
            let e = sde::estimate_pt(f, y, model, &mc(opts, seeds.lhs))?;
            Estimate {
                mean: e.mean.powf(p),
                se: p * e.mean.abs().powf(p - 1.0) * e.se,
                n: e.n,
            }
        }
        InequalityKind::Gradient => squared_gradient(f, x, model, opts, seeds.lhs, anisotropic)?,
    };
    let (bound, divergence_reason) = match bound {
        Ok(b) => (Some(b), None),
        Err(reason) => (None, Some(reason)),
    };
    let rhs = match (&bound, kind) {
        (None, _) => None,
        (Some(b), InequalityKind::Log) => {
            let e = sde::estimate_pt(f, x, model, &mc(opts, seeds.rhs))?;
            let lg = Estimate {
                mean: e.mean.ln(),
                se: e.se / e.mean,
                n: e.n,
            };
            Some(Estimate {
                mean: lg.mean + b.mean,
                se: (lg.se * lg.se + b.se * b.se).sqrt(),
                n: lg.n,
            })
        }
        (Some(b), InequalityKind::Power { p }) => {
            let fp = power_of(f, p);
            let e = sde::estimate_pt(&fp, x, model, &mc(opts, seeds.rhs))?;
            Some(product(&e, b))
        }
        (Some(b), InequalityKind::Gradient) => {
            let v = variance_estimate(f, x, model, &mc(opts, seeds.variance))?;
            Some(product(&v, b))
        }
    };
    let (margin, pass) = match &rhs {
        Some(r) => {
            let se = (lhs.se * lhs.se + r.se * r.se).sqrt();
            (Some(r.mean - lhs.mean), lhs.mean <= r.mean + 3.0 * se)
        }
        None => (None, false),
    };
    Ok(HarnackReport {
        kind: kind.name().into(),
        p: match kind {
            InequalityKind::Power { p } => Some(p),
            _ => None,
        },
        anisotropic,
        lhs,
        diverged: rhs.is_none(),
        divergence_reason,
        rhs,
        constants,
        expectations,
        displacement,
        bound,
        convention_gap: gap,
        margin,
        pass,
        n_paths: opts.n_paths,
        n_z_samples: opts.n_z_samples,
        seeds,
    })
}

/// `f^p` as `exp(p log f)`; `log 0 = -∞` maps to `0`.
fn power_of(f: &TestFunction, p: f64) -> TestFunction {
    TestFunction::Exp {
        inner: Box::new(TestFunction::Scale {
            factor: p,
            inner: Box::new(TestFunction::Log { inner: Box::new(f.clone()) }),
        }),
    }
}

type BoundParts = (Vec<f64>, Vec<Estimate>, f64, Result<Estimate, String>, f64);

fn bound_parts(kind: InequalityKind, model: &Model, horizon: f64, x: &[f64], y: &[f64], fopts: &FactorOptions, anisotropic: bool) -> Result<BoundParts> {
    if anisotropic {
        let p = match kind {
            InequalityKind::Power { p } => Some(p),
            _ => None,
        };
        let b = anisotropic_bounds(model, horizon, x, y, p, fopts)?;
        let disp = b.phi * b.phi;
        let bound = match kind {
            InequalityKind::Log => Ok(b.log),
            InequalityKind::Power { .. } => b.power.ok_or_else(|| {
                if (0..model.dim).any(|i| model.clock(i).is_inverse_subordinator()) {
                    inverse_clock_refusal().to_string()
                } else {
                    "the exponential moment of the anisotropic power factor did not stabilise".to_string()
                }
            }),
            InequalityKind::Gradient => match b.gradient {
                Some(g) => Ok(g),
                None => return Err(Error::Hypothesis("the anisotropic gradient estimate needs u(s) = c s".into())),
            },
        };
        let disp = match (kind, anisotropic_parts(model)?) {
            (InequalityKind::Gradient, (u, k)) => {
                let growth = (u.linear_constant().unwrap_or(0.0) * k.integral(horizon)).exp();
                2.0 * growth * growth
            }
            _ => disp,
        };
        return Ok((b.thetas, b.expectations, disp, bound, 0.0));
    }
    let (h, clock, k) = isotropic_parts(model)?;
    let theta = effective_theta(h, model.noise.scaling)?;
    let d2 = dist2(x, y);
    match kind {
        InequalityKind::Power { .. } if clock.is_inverse_subordinator() && d2 > 0.0 => {
            Ok((vec![theta], vec![], d2, Err(inverse_clock_refusal().to_string()), 0.0))
        }
        InequalityKind::Power { p } => {
            let f = expectation_factor(clock, h, k, horizon, fopts)?;
            let c = p * theta * d2 / ((p - 1.0) * (p - 1.0));
            let samples: Vec<f64> = f.samples.iter().map(|v| (c * v).exp()).collect();
            let bound = power_of_mean(&samples, p).map_err(|e| e.to_string());
            Ok((vec![theta], vec![f.estimate], d2, bound, f.convention_gap))
        }
        _ => {
            let f = expectation_factor(clock, h, k, horizon, fopts)?;
            let bound = if f.divergence.flagged {
                Err(format!("clock expectation did not stabilise ({} failed doublings)", f.divergence.failures))
            } else if kind == InequalityKind::Log {
                Ok(scale(&f.estimate, theta * d2))
            } else {
                Ok(scale(&f.estimate, 2.0 * theta))
            };
            let disp = if kind == InequalityKind::Gradient { 2.0 } else { d2 };
            Ok((vec![theta], vec![f.estimate], disp, bound, f.convention_gap))
        }
    }
}

/// `|∇P_T f|²(x)` by central differences along the coordinate axes on
/// common noise; the Euclidean norm for isotropic models, the `ℓ^∞` norm
/// (dual of `ℓ¹`) for anisotropic ones.
fn squared_gradient(f: &TestFunction, x: &[f64], model: &Model, opts: &VerifyOptions, seed: u64, sup_norm: bool) -> Result<Estimate> {
    let d = model.dim;
    let h = opts.fd_step;
    if !(h > 0.0) {
        return Err(Error::domain("fd_step", h, "> 0"));
    }
    let mut starts = Vec::with_capacity(2 * d);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut z = x.to_vec();
            z[i] += s * h;
            starts.push(z);
        }
    }
    let term = sde::simulate_terminals(model, &starts, &mc(opts, seed))?;
    let n = term.len();
    let diffs: Vec<Vec<f64>> = (0..d)
        .map(|i| term.iter().map(|p| (f.eval(&p[2 * i]) - f.eval(&p[2 * i + 1])) / (2.0 * h)).collect())
        .collect();
    let g: Vec<Estimate> = diffs.iter().map(|c| Estimate::from_samples(c)).collect();
    if sup_norm {
        let i = (0..d).max_by(|&a, &b| g[a].mean.abs().total_cmp(&g[b].mean.abs())).unwrap_or(0);
        return Ok(Estimate {
            mean: g[i].mean * g[i].mean,
            se: 2.0 * g[i].mean.abs() * g[i].se,
            n,
        });
    }
    let mut var = 0.0;
    for a in 0..d {
        for b in 0..d {
            let cov = diffs[a]
                .iter()
                .zip(&diffs[b])
                .map(|(p, q)| (p - g[a].mean) * (q - g[b].mean))
                .sum::<f64>()
                / (n as f64 - 1.0);
            var += 4.0 * g[a].mean * g[b].mean * cov;
        }
    }
    Ok(Estimate {
        mean: g.iter().map(|e| e.mean * e.mean).sum(),
        se: (var / n as f64).max(0.0).sqrt(),
        n,
    })
}

/// `P_T f² - (P_T f)²` with the SE of the sample variance.
fn variance_estimate(f: &TestFunction, x: &[f64], model: &Model, mc: &McOptions) -> Result<Estimate> {
    let t = sde::simulate_terminals(model, &[x.to_vec()], mc)?;
    let v: Vec<f64> = t.iter().map(|p| f.eval(&p[0])).collect();
    let n = v.len() as f64;
    let m = pairwise_sum(&v) / n;
    let c2: Vec<f64> = v.iter().map(|a| (a - m).powi(2)).collect();
    let s2 = pairwise_sum(&c2) / (n - 1.0);
    let m4 = pairwise_sum(&c2.iter().map(|a| a * a).collect::<Vec<_>>()) / n;
    Ok(Estimate {
        mean: s2,
        se: ((m4 - s2 * s2).max(0.0) / n).sqrt(),
        n: v.len(),
    })
}
