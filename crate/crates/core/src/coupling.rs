//! Coupling by change of measure: a second solution `Y` pushed toward `X`
//! along the regularised clock, the Girsanov density that removes the push,
//! and the bound on its compensator.
//!
//! Everything lives on a plan: a time grid `t_j` and, per noise channel, the
//! Brownian-clock grid `r_j = ℓ_ε(t_j) - ℓ_ε(0)` carrying the Volterra
//! sampler and the inverse-kernel weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{KernelScaling, VolterraSampler};
use crate::frac_kernel::{variance_factor, InverseKernel};
use crate::grid::{SamplePath, TimeGrid};
use crate::rng::{self, tag};
use crate::sde::{Certificate, DriftField, DriftSpec, KFunction, SolverOptions, Stepper, VSpec};
use crate::specfun::{kernel_constant, theta_h, HurstExponent};
use crate::timechange::RegularizedClock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingOptions {
    /// Cells of the simulation grid.
    pub cells: usize,
    /// A gap below `tolerance·|x - y|` counts as coupled.
    pub tolerance: f64,
    /// `δ ∈ (0, 1)` of the anisotropic coupling.
    pub delta: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            cells: 256,
            tolerance: 1e-8,
            delta: 0.99,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Channel {
    hurst: HurstExponent,
    r_grid: TimeGrid,
    sampler: VolterraSampler,
    inverse: InverseKernel,
    /// `η` is computed for the representation process; the model's `W^H`
    /// is that process times the sampler's output scale.
    eta_scale: f64,
}

impl Channel {
    fn new(hurst: HurstExponent, r_grid: TimeGrid, scaling: KernelScaling) -> Result<Self> {
        let sampler = VolterraSampler::new(hurst, &r_grid, scaling)?;
        let inverse = InverseKernel::new(hurst, &r_grid)?;
        let eta_scale = 1.0 / sampler.output_scale();
        Ok(Self {
            hurst,
            r_grid,
            sampler,
            inverse,
            eta_scale,
        })
    }

    /// `C_H² ξ² L^{2-2H} / (2(1-H))` in the model's scaling.
    fn bound(&self, xi: f64) -> Result<f64> {
        let h = self.hurst.get();
        let c = kernel_constant(self.hurst)? * self.eta_scale;
        Ok(c * c * xi * xi * self.r_grid.end().powf(2.0 - 2.0 * h) / (2.0 * (1.0 - h)))
    }
}

/// Grids, samplers and clocks for repeated couplings.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    dim: usize,
    horizon: f64,
    t_grid: TimeGrid,
    clocks: Vec<RegularizedClock>,
    channels: Vec<Channel>,
    opts: CouplingOptions,
    anisotropic: bool,
}

impl CouplingPlan {
    /// One clock shared by all coordinates; the grid is uniform on the
    /// Brownian clock, `t_j = γ_ε(ℓ_ε(0) + r_j)`.
    pub fn isotropic(
        dim: usize,
        hurst: HurstExponent,
        scaling: KernelScaling,
        clock: RegularizedClock,
        horizon: f64,
        opts: CouplingOptions,
    ) -> Result<Self> {
        check_common(dim, horizon, &opts, std::slice::from_ref(&clock))?;
        let l0 = clock.eval(0.0)?;
        let span = clock.eval(horizon)? - l0;
        let r_grid = TimeGrid::uniform(span, opts.cells)?;
        let mut t = Vec::with_capacity(opts.cells + 1);
        t.push(0.0);
        for &r in &r_grid.points()[1..opts.cells] {
            t.push(clock.inverse(l0 + r)?);
        }
        t.push(horizon);
        let t_grid = TimeGrid::new(t)?;
        let channels = vec![Channel::new(hurst, r_grid, scaling)?];
        Ok(Self {
            dim,
            horizon,
            t_grid,
            clocks: vec![clock],
            channels,
            opts,
            anisotropic: false,
        })
    }

    /// Independent clocks and Hurst indices per coordinate on a uniform
    /// time grid.
    pub fn anisotropic(
        hurst: &[HurstExponent],
        scaling: KernelScaling,
        clocks: Vec<RegularizedClock>,
        horizon: f64,
        opts: CouplingOptions,
    ) -> Result<Self> {
        let dim = hurst.len();
        if clocks.len() != dim {
            return Err(Error::Precondition(format!("{} clocks for {dim} coordinates", clocks.len())));
        }
        if !(opts.delta > 0.0 && opts.delta < 1.0) {
            return Err(Error::domain("delta", opts.delta, "0 < delta < 1"));
        }
        check_common(dim, horizon, &opts, &clocks)?;
        let t_grid = TimeGrid::uniform(horizon, opts.cells)?;
        let mut channels = Vec::with_capacity(dim);
        for (h, clock) in hurst.iter().zip(&clocks) {
            let l0 = clock.eval(0.0)?;
            let r: Vec<f64> = t_grid
                .points()
                .iter()
                .map(|&t| clock.eval(t).map(|v| (v - l0).max(0.0)))
                .collect::<Result<_>>()?;
            channels.push(Channel::new(*h, TimeGrid::new(r)?, scaling)?);
        }
        Ok(Self {
            dim,
            horizon,
            t_grid,
            clocks,
            channels,
            opts,
            anisotropic: true,
        })
    }

    pub fn is_anisotropic(&self) -> bool {
        self.anisotropic
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn options(&self) -> &CouplingOptions {
        &self.opts
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.t_grid
    }

    /// Brownian-clock grid of coordinate `i`.
    pub fn clock_grid(&self, i: usize) -> &TimeGrid {
        &self.channel(i).r_grid
    }

    pub fn clock(&self, i: usize) -> &RegularizedClock {
        &self.clocks[if self.clocks.len() == 1 { 0 } else { i }]
    }

    fn channel(&self, i: usize) -> &Channel {
        &self.channels[if self.channels.len() == 1 { 0 } else { i }]
    }

    /// The noise `U_t = W^H_{ℓ_ε(t)-ℓ_ε(0)} + v_t` on the time grid and the
    /// Brownian increments behind it (cell-major).
    fn noise(&self, v: &VSpec, seed: u64) -> Result<(SamplePath, Vec<f64>)> {
        let d = self.dim;
        let n = self.t_grid.len();
        let mut u = v.sample(&self.t_grid, d, &mut rng::stream(seed, tag::DRIFT_V, 0))?;
        let mut inc = vec![0.0; (n - 1) * d];
        for i in 0..d {
            let draw = self.channel(i).sampler.sample(&mut rng::stream(seed, tag::FBM, i as u64));
            for j in 0..n {
                u[j * d + i] += draw.values[j];
            }
            for j in 0..n - 1 {
                inc[j * d + i] = draw.increments[j];
            }
        }
        Ok((SamplePath::new(self.t_grid.clone(), d, u)?, inc))
    }

    /// `X(x)` on the plan's grid with the noise of `seed`.
    pub fn solve(&self, x: &[f64], drift: &DriftField, v: &VSpec, seed: u64) -> Result<SamplePath> {
        self.check_start(x)?;
        let (u, _) = self.noise(v, seed)?;
        let mut out = SamplePath::zeros(self.t_grid.clone(), self.dim);
        out.point_mut(0).copy_from_slice(x);
        let mut state = x.to_vec();
        let mut step = CellStep::new(self.dim);
        for j in 0..self.t_grid.cells() {
            step.advance(drift, &u, j, &mut state, &self.opts.solver)?;
            out.point_mut(j + 1).copy_from_slice(&state);
        }
        Ok(out)
    }

    fn check_start(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Precondition(format!("start has dimension {}, plan {}", x.len(), self.dim)));
        }
        Ok(())
    }

    /// `∫_0^T e^{-K} dℓ_ε` for coordinate `i`'s clock.
    pub fn weight_integral(&self, k: &KFunction, i: usize) -> Result<f64> {
        weight_integral(self.clock(i), k, self.horizon)
    }

    /// Run the coupled pair with noise `seed`.
    pub fn couple(&self, x: &[f64], y: &[f64], drift: &DriftSpec, v: &VSpec, seed: u64) -> Result<CouplingResult> {
        self.check_start(x)?;
        self.check_start(y)?;
        if x == y {
            return Err(Error::Precondition("coupling needs x != y".into()));
        }
        let (u, increments) = self.noise(v, seed)?;
        let sim = if !self.anisotropic {
            let k = match &drift.certificate {
                Certificate::OneSidedLipschitz { k } => k,
                Certificate::YamadaWatanabe { .. } => {
                    return Err(Error::Hypothesis("the isotropic coupling needs a one-sided Lipschitz drift".into()));
                }
            };
            let xi = euclid(x, y) / self.weight_integral(k, 0)?;
            self.run_isotropic(x, y, &drift.field, k, xi, &u)?
        } else {
            let (u_fn, k) = match &drift.certificate {
                Certificate::YamadaWatanabe { u, k } => (u, k),
                Certificate::OneSidedLipschitz { .. } => {
                    return Err(Error::Hypothesis("the anisotropic coupling needs a condition (A) drift".into()));
                }
            };
            let phi = u_fn.phi(k, self.horizon, l1(x, y))?;
            let dt = self.horizon * self.opts.delta;
            let xi = (0..self.dim)
                .map(|i| Ok(phi / (self.clock(i).eval(dt)? - self.clock(i).eval(0.0)?)))
                .collect::<Result<Vec<_>>>()?;
            self.run_anisotropic(x, y, &drift.field, &xi, &u)?
        };
        let d = self.dim;
        let n = self.t_grid.len();
        let mut eta = vec![0.0; n * d];
        let (mut m, mut qv, mut bound) = (0.0, 0.0, 0.0);
        for i in 0..d {
            let ch = self.channel(i);
            let g: Vec<f64> = (0..n - 1).map(|j| sim.g[j * d + i]).collect();
            let inc: Vec<f64> = (0..n - 1).map(|j| increments[j * d + i]).collect();
            let terms = girsanov_terms(&ch.inverse, ch.eta_scale, &ch.r_grid, &g, &inc);
            for j in 0..n {
                eta[j * d + i] = terms.eta[j];
            }
            m += terms.m;
            qv += terms.qv;
            // the isotropic bound already covers |η|² summed over coordinates
            if self.anisotropic || i == 0 {
                bound += ch.bound(sim.xi[if sim.xi.len() == 1 { 0 } else { i }])?;
            }
        }
        Ok(CouplingResult {
            x: sim.x,
            y: sim.y,
            xi: sim.xi,
            tau: sim.tau,
            g: sim.g,
            eta,
            increments,
            m_terminal: m,
            compensator: qv,
            compensator_bound: bound,
            post_coupling_forcing: sim.post_coupling,
        })
    }

    fn run_isotropic(&self, x: &[f64], y: &[f64], drift: &DriftField, k: &KFunction, xi: f64, u: &SamplePath) -> Result<Simulation> {
        let d = self.dim;
        let pts = self.t_grid.points();
        let dr = self.channels[0].r_grid.steps();
        let threshold = self.opts.tolerance * euclid(x, y);
        let mut xp = SamplePath::zeros(self.t_grid.clone(), d);
        let mut yp = SamplePath::zeros(self.t_grid.clone(), d);
        xp.point_mut(0).copy_from_slice(x);
        yp.point_mut(0).copy_from_slice(y);
        let (mut xs, mut ys) = (x.to_vec(), y.to_vec());
        let mut g = vec![0.0; (pts.len() - 1) * d];
        let mut tau = None;
        let mut step = CellStep::new(d);
        let mut force = vec![0.0; d];
        for j in 0..pts.len() - 1 {
            let x_prev = xs.clone();
            step.advance(drift, u, j, &mut xs, &self.opts.solver)?;
            if tau.is_some() {
                ys.copy_from_slice(&xs);
            } else {
                let push = xi * dr[j];
                // Push on the side of the drift step where e^{-K} is larger,
                // so the discrete push dominates ξ∫e^{-K}dℓ_ε.
                let before = k.eval(0.5 * (pts[j] + pts[j + 1])) > 0.0;
                let closed;
                if before {
                    closed = direction_push(&x_prev, &ys, push, &mut force);
                    for i in 0..d {
                        ys[i] += force[i];
                    }
                    if closed {
                        ys.copy_from_slice(&x_prev);
                    }
                    step.advance(drift, u, j, &mut ys, &self.opts.solver)?;
                    if closed {
                        tau = Some(pts[j]);
                    }
                } else {
                    step.advance(drift, u, j, &mut ys, &self.opts.solver)?;
                    closed = direction_push(&xs, &ys, push, &mut force);
                    for i in 0..d {
                        ys[i] += force[i];
                    }
                    if closed {
                        tau = Some(pts[j + 1]);
                    }
                }
                for i in 0..d {
                    g[j * d + i] = force[i] / dr[j];
                }
                if tau.is_none() && euclid(&xs, &ys) <= threshold {
                    tau = Some(pts[j + 1]);
                }
                if tau.is_some() {
                    ys.copy_from_slice(&xs);
                }
            }
            xp.point_mut(j + 1).copy_from_slice(&xs);
            yp.point_mut(j + 1).copy_from_slice(&ys);
        }
        let tau = match tau {
            Some(t) => t,
            None => {
                return Err(Error::CouplingFailure {
                    distance: euclid(&xs, &ys),
                    tolerance: threshold,
                });
            }
        };
        Ok(Simulation {
            x: xp,
            y: yp,
            xi: vec![xi],
            tau: vec![tau],
            g,
            post_coupling: 0.0,
        })
    }

    fn run_anisotropic(&self, x: &[f64], y: &[f64], drift: &DriftField, xi: &[f64], u: &SamplePath) -> Result<Simulation> {
        let d = self.dim;
        let pts = self.t_grid.points();
        let threshold = self.opts.tolerance * l1(x, y);
        let dr: Vec<Vec<f64>> = (0..d).map(|i| self.channel(i).r_grid.steps()).collect();
        let mut xp = SamplePath::zeros(self.t_grid.clone(), d);
        let mut yp = SamplePath::zeros(self.t_grid.clone(), d);
        xp.point_mut(0).copy_from_slice(x);
        yp.point_mut(0).copy_from_slice(y);
        let (mut xs, mut ys) = (x.to_vec(), y.to_vec());
        let mut g = vec![0.0; (pts.len() - 1) * d];
        let mut tau: Vec<Option<f64>> = (0..d).map(|i| (x[i] == y[i]).then_some(0.0)).collect();
        let mut post: f64 = 0.0;
        let mut step = CellStep::new(d);
        for j in 0..pts.len() - 1 {
            step.advance(drift, u, j, &mut xs, &self.opts.solver)?;
            step.advance(drift, u, j, &mut ys, &self.opts.solver)?;
            for i in 0..d {
                let gap = xs[i] - ys[i];
                if tau[i].is_some() {
                    post = post.max(gap.abs());
                    ys[i] = xs[i];
                    continue;
                }
                let push = xi[i] * dr[i][j];
                let f = if gap.abs() <= push * (1.0 + 1e-12) { gap } else { push * gap.signum() };
                ys[i] += f;
                g[j * d + i] = f / dr[i][j];
                if (xs[i] - ys[i]).abs() <= threshold || f == gap {
                    ys[i] = xs[i];
                    tau[i] = Some(pts[j + 1]);
                }
            }
            xp.point_mut(j + 1).copy_from_slice(&xs);
            yp.point_mut(j + 1).copy_from_slice(&ys);
        }
        let tau = tau
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or(Error::CouplingFailure {
                    distance: (xs[i] - ys[i]).abs(),
                    tolerance: threshold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            x: xp,
            y: yp,
            xi: xi.to_vec(),
            tau,
            g,
            post_coupling: post,
        })
    }
}

fn check_common(dim: usize, horizon: f64, opts: &CouplingOptions, clocks: &[RegularizedClock]) -> Result<()> {
    if dim == 0 {
        return Err(Error::Precondition("dimension must be at least 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon", horizon, "T > 0"));
    }
    if opts.cells < 2 {
        return Err(Error::domain("cells", opts.cells as f64, "at least 2"));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::domain("coupling tolerance", opts.tolerance, "> 0"));
    }
    for c in clocks {
        if horizon > c.horizon() {
            return Err(Error::Horizon {
                needed: horizon + c.eps(),
                available: c.path().horizon(),
            });
        }
    }
    Ok(())
}

/// Sets `force` to the push of length `push` from `y` toward `x`, or to
/// `x - y` when that is shorter; returns whether the gap closes.
fn direction_push(x: &[f64], y: &[f64], push: f64, force: &mut [f64]) -> bool {
    let gap = euclid(x, y);
    if gap <= push * (1.0 + 1e-12) {
        for i in 0..x.len() {
            force[i] = x[i] - y[i];
        }
        true
    } else {
        for i in 0..x.len() {
            force[i] = push * (x[i] - y[i]) / gap;
        }
        false
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
}

/// One drift step across a grid cell with `U` linear inside it.
struct CellStep {
    stepper: Stepper,
    z: Vec<f64>,
}

impl CellStep {
    fn new(d: usize) -> Self {
        Self {
            stepper: Stepper::new(d),
            z: vec![0.0; d],
        }
    }

    /// `state` holds `X_{t_j}` on entry and `X_{t_{j+1}}` on exit.
    fn advance(&mut self, drift: &DriftField, u: &SamplePath, j: usize, state: &mut [f64], opts: &SolverOptions) -> Result<()> {
        let d = state.len();
        let pts = u.grid().points();
        let (t0, t1) = (pts[j], pts[j + 1]);
        let (u0, u1) = (u.point(j), u.point(j + 1));
        for i in 0..d {
            state[i] -= u0[i];
        }
        let z = &mut self.z;
        let mut f = |t: f64, y: &[f64], k: &mut [f64]| {
            let w = (t - t0) / (t1 - t0);
            for i in 0..d {
                z[i] = y[i] + u0[i] + w * (u1[i] - u0[i]);
            }
            drift.eval(t, z, k);
        };
        self.stepper.advance(&mut f, t0, t1, state, opts)?;
        for i in 0..d {
            state[i] += u1[i];
        }
        Ok(())
    }
}

struct Simulation {
    x: SamplePath,
    y: SamplePath,
    xi: Vec<f64>,
    tau: Vec<f64>,
    g: Vec<f64>,
    post_coupling: f64,
}

/// One coupled realisation.
#[derive(Debug, Clone)]
pub struct CouplingResult {
    pub x: SamplePath,
    pub y: SamplePath,
    /// `ξ`, or `ξ^{(i)}` per coordinate.
    pub xi: Vec<f64>,
    /// `τ`, or `τ_i` per coordinate.
    pub tau: Vec<f64>,
    /// Push density per Brownian-clock cell, cell-major.
    pub g: Vec<f64>,
    /// `η` at the left end of each Brownian-clock cell (and at the end).
    pub eta: Vec<f64>,
    /// Brownian increments behind `W^H`, cell-major.
    pub increments: Vec<f64>,
    pub m_terminal: f64,
    /// `⟨M⟩` at the end of the clock.
    pub compensator: f64,
    /// The closed-form upper bound on `⟨M⟩`.
    pub compensator_bound: f64,
    /// Largest gap reopened by the drift after a coordinate coupled (zero
    /// for diagonal drifts).
    pub post_coupling_forcing: f64,
}

impl CouplingResult {
    pub fn log_weight(&self) -> f64 {
        self.m_terminal - 0.5 * self.compensator
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// `R = exp[M - ⟨M⟩/2]`.
pub fn girsanov_weight(result: &CouplingResult) -> f64 {
    result.log_weight().exp()
}

/// `η`, `M` and `⟨M⟩` from one channel's push densities and increments.
#[derive(Debug, Clone, PartialEq)]
pub struct GirsanovTerms {
    pub eta: Vec<f64>,
    pub m: f64,
    pub qv: f64,
}

fn girsanov_terms(inverse: &InverseKernel, eta_scale: f64, r_grid: &TimeGrid, g: &[f64], inc: &[f64]) -> GirsanovTerms {
    // η at s_j only uses the pushes on cells before j, so the integrand of
    // M is adapted and E[R] = 1 holds for the discrete sum as well.
    let mut eta = inverse.apply_cells(g);
    for e in &mut eta {
        *e *= eta_scale;
    }
    let steps = r_grid.steps();
    let mut m = 0.0;
    let mut qv = 0.0;
    for j in 0..steps.len() {
        m -= eta[j] * inc[j];
        qv += eta[j] * eta[j] * steps[j];
    }
    GirsanovTerms { eta, m, qv }
}

/// Girsanov terms for a scalar push density `g` on `r_grid`.
pub fn girsanov_from_density(
    hurst: HurstExponent,
    scaling: KernelScaling,
    r_grid: &TimeGrid,
    g: &[f64],
    increments: &[f64],
) -> Result<GirsanovTerms> {
    if g.len() != r_grid.cells() || increments.len() != r_grid.cells() {
        return Err(Error::Precondition("one density and one increment per cell".into()));
    }
    let inverse = InverseKernel::new(hurst, r_grid)?;
    let eta_scale = (variance_factor(hurst) / scaling.variance(hurst)).sqrt();
    Ok(girsanov_terms(&inverse, eta_scale, r_grid, g, increments))
}

/// `∫_0^T e^{-K(t)} dℓ_ε(t)`.
pub fn weight_integral(clock: &RegularizedClock, k: &KFunction, horizon: f64) -> Result<f64> {
    clock.stieltjes(|t| (-k.integral(t)).exp(), horizon)
}

/// `C_{T,H}² |x-y|² [ℓ_ε(T) - ℓ_ε(0)]^{2-2H} / (2(1-H))` with
/// `C_{T,H} = kernel_constant(H) / ∫_0^T e^{-K} dℓ_ε`, in the scaling of
/// the model's `W^H`.
pub fn compensator_bound(
    hurst: HurstExponent,
    distance: f64,
    clock: &RegularizedClock,
    k: &KFunction,
    horizon: f64,
    scaling: KernelScaling,
) -> Result<f64> {
    if distance == 0.0 {
        return Ok(0.0);
    }
    let h = hurst.get();
    let c = kernel_constant(hurst)? / weight_integral(clock, k, horizon)?;
    let span = clock.eval(horizon)? - clock.eval(0.0)?;
    let rescale = variance_factor(hurst) / scaling.variance(hurst);
    Ok(rescale * c * c * distance * distance * span.powf(2.0 - 2.0 * h) / (2.0 * (1.0 - h)))
}

/// `2Φ² Σ_i Θ_{H_i} [ℓ^i_ε(T) - ℓ^i_ε(0)]^{2-2H_i} / [ℓ^i_ε(δT) - ℓ^i_ε(0)]²`.
pub fn anisotropic_compensator_bound(
    hurst: &[HurstExponent],
    phi: f64,
    clocks: &[RegularizedClock],
    horizon: f64,
    delta: f64,
    scaling: KernelScaling,
) -> Result<f64> {
    let mut total = 0.0;
    for (h, c) in hurst.iter().zip(clocks) {
        let l0 = c.eval(0.0)?;
        let full = c.eval(horizon)? - l0;
        let part = c.eval(delta * horizon)? - l0;
        let rescale = variance_factor(*h) / scaling.variance(*h);
        total += rescale * 2.0 * theta_h(*h)? * full.powf(2.0 - 2.0 * h.get()) / (part * part);
    }
    Ok(phi * phi * total)
}
