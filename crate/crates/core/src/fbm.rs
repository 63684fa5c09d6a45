//! Fractional Brownian motion samplers.
//!
//! [`CholeskySampler`] draws the exact Gaussian vector at any finite set of
//! times (repeats allowed). [`VolterraSampler`] builds `W^H` from Brownian
//! increments through the kernel representation, which is what the
//! Girsanov construction needs: it returns the increments alongside the
//! path so that a change of drift of the Brownian motion can be weighed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac_kernel::{variance_factor, KernelMatrix};
use crate::grid::TimeGrid;
use crate::linalg::Cholesky;
use crate::rng;
use crate::specfun::HurstExponent;

/// Pivots of a covariance matrix smaller than this (relative to its
/// largest diagonal entry) are treated as exact zeros.
const PSD_TOL: f64 = 1e-12;

/// Which normalisation of fBM a model uses.
///
/// `Representation` is the process `∫ K_H(t,s) dW_s` for the kernel as
/// written, with `E (W^H_t)^2 = V_H t^{2H}`; this is the process the
/// coupling argument is carried out for. `UnitVariance` is the standard fBM
/// with `E (W^H_t)^2 = t^{2H}`, i.e. the former divided by `√V_H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelScaling {
    #[default]
    Representation,
    UnitVariance,
}

impl KernelScaling {
    /// Variance of the model's `W^H_1`.
    pub fn variance(self, h: HurstExponent) -> f64 {
        match self {
            Self::Representation => variance_factor(h),
            Self::UnitVariance => 1.0,
        }
    }
}

/// `½(t^{2H} + s^{2H} - |t-s|^{2H})`, for any `H ∈ (0, 1)` (including the
/// Brownian case `H = 1/2`).
pub fn fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// A `d`-dimensional fBM sampled at a nondecreasing list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Point-major: `values[j * dim + i]` is coordinate `i` at `times[j]`.
    pub values: Vec<f64>,
    pub hurst: Vec<f64>,
    pub seed: u64,
}

impl FbmPath {
    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        (0..self.times.len()).map(|j| self.values[j * self.dim + i]).collect()
    }
}

/// Exact sampler at fixed times via a Cholesky factor of the covariance of
/// the distinct positive times, broadcast back to the requested list.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    factor: Option<Cholesky>,
    /// For each requested time, the index of its distinct value, or `None`
    /// for `t = 0`.
    slots: Vec<Option<usize>>,
}

impl CholeskySampler {
    pub fn new(hurst: HurstExponent, times: &[f64], scaling: KernelScaling) -> Result<Self> {
        let mut distinct: Vec<f64> = Vec::new();
        let mut slots = Vec::with_capacity(times.len());
        let mut prev = f64::NEG_INFINITY;
        for &t in times {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::domain("fBM time", t, "finite t >= 0"));
            }
            if t < prev {
                return Err(Error::InvalidGrid(format!("times must be nondecreasing ({prev} then {t})")));
            }
            prev = t;
            if t == 0.0 {
                slots.push(None);
                continue;
            }
            if distinct.last() != Some(&t) {
                distinct.push(t);
            }
            slots.push(Some(distinct.len() - 1));
        }
        let n = distinct.len();
        let factor = if n == 0 {
            None
        } else {
            let v = scaling.variance(hurst);
            let hv = hurst.get();
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let c = v * fbm_covariance(hv, distinct[i], distinct[j]);
                    cov[i * n + j] = c;
                    cov[j * n + i] = c;
                }
            }
            Some(Cholesky::factor(&cov, n, PSD_TOL)?)
        };
        Ok(Self { factor, slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// One scalar path at the requested times.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let Some(factor) = &self.factor else {
            return vec![0.0; self.slots.len()];
        };
        let z: Vec<f64> = (0..factor.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let x = factor.mul(&z);
        self.slots.iter().map(|s| s.map_or(0.0, |k| x[k])).collect()
    }
}

/// Standard (unit-variance) `d`-dimensional fBM at the given times, exact.
pub fn fbm_at(hurst: HurstExponent, times: &[f64], dim: usize, seed: u64) -> Result<FbmPath> {
    if dim == 0 {
        return Err(Error::Precondition("dimension must be at least 1".into()));
    }
    let sampler = CholeskySampler::new(hurst, times, KernelScaling::UnitVariance)?;
    let mut values = vec![0.0; times.len() * dim];
    for i in 0..dim {
        let mut r = rng::stream(seed, rng::tag::FBM, i as u64);
        for (j, v) in sampler.sample(&mut r).into_iter().enumerate() {
            values[j * dim + i] = v;
        }
    }
    Ok(FbmPath {
        times: times.to_vec(),
        dim,
        values,
        hurst: vec![hurst.get(); dim],
        seed,
    })
}

/// One scalar draw of the Volterra sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraDraw {
    /// `W^H` at the grid points, in the sampler's scaling.
    pub values: Vec<f64>,
    /// Brownian increments over the grid cells.
    pub increments: Vec<f64>,
    /// Part of `W^H` not explained by the increments (independent of them).
    pub residual: Vec<f64>,
}

/// `W^H(t_j) = Σ_i A[j][i] ΔW_i / Δ_i + R_j`.
///
/// The first term is the conditional expectation of `∫ K_H(t_j,s) dW_s`
/// given the Brownian increments on the grid (with `A` the cell integrals
/// of the kernel); `R` is the independent Gaussian remainder with
/// covariance `C - A D^{-1} A^T`. The law is therefore exact at the grid
/// points whatever the mesh, and a drift of `W` that is constant on each
/// cell moves `W^H` by exactly `A g`.
#[derive(Debug, Clone)]
pub struct VolterraSampler {
    kernel: KernelMatrix,
    steps: Vec<f64>,
    residual: Cholesky,
    /// Multiplies the representation process on output.
    output_scale: f64,
}

impl VolterraSampler {
    pub fn new(hurst: HurstExponent, grid: &TimeGrid, scaling: KernelScaling) -> Result<Self> {
        let kernel = KernelMatrix::new(hurst, grid)?;
        Self::from_kernel(kernel, scaling)
    }

    pub fn from_kernel(kernel: KernelMatrix, scaling: KernelScaling) -> Result<Self> {
        let hurst = kernel.hurst();
        let grid = kernel.grid().clone();
        let p = grid.points();
        let steps = grid.steps();
        let n = p.len() - 1;
        let v = variance_factor(hurst);
        let hv = hurst.get();
        let mut cov = vec![0.0; n * n];
        for a in 0..n {
            let ra = kernel.row(a + 1);
            for b in 0..=a {
                let rb = kernel.row(b + 1);
                let proj: f64 = rb.iter().zip(ra).zip(&steps).map(|((x, y), d)| x * y / d).sum();
                let c = v * fbm_covariance(hv, p[a + 1], p[b + 1]) - proj;
                cov[a * n + b] = c;
                cov[b * n + a] = c;
            }
        }
        let residual = Cholesky::factor(&cov, n, 1e-10)?;
        let output_scale = match scaling {
            KernelScaling::Representation => 1.0,
            KernelScaling::UnitVariance => 1.0 / v.sqrt(),
        };
        Ok(Self {
            kernel,
            steps,
            residual,
            output_scale,
        })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        self.kernel.grid()
    }

    #[inline]
    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    #[inline]
    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// The sampler on the grid scaled by `c > 0` (self-similarity).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let hv = self.kernel.hurst().get();
        let f = c.powf(hv);
        let n = self.residual.dim();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = self.residual.entry(i, j) * f;
            }
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                cov[i * n + j] = s;
                cov[j * n + i] = s;
            }
        }
        Ok(Self {
            kernel: self.kernel.scaled(c)?,
            steps: self.steps.iter().map(|d| d * c).collect(),
            residual: Cholesky::factor(&cov, n, 1e-10)?,
            output_scale: self.output_scale,
        })
    }

    /// Draw the Brownian increments and the remainder, and assemble `W^H`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VolterraDraw {
        let increments: Vec<f64> = self
            .steps
            .iter()
            .map(|d| d.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z: Vec<f64> = (0..self.residual.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let mut residual = vec![0.0];
        residual.extend(self.residual.mul(&z));
        let values = self.assemble(&increments, &residual);
        VolterraDraw {
            values,
            increments,
            residual,
        }
    }

    /// `W^H` from given increments and remainder.
    pub fn assemble(&self, increments: &[f64], residual: &[f64]) -> Vec<f64> {
        let rates: Vec<f64> = increments.iter().zip(&self.steps).map(|(w, d)| w / d).collect();
        let mut out = self.kernel.apply_cells(&rates);
        for (o, r) in out.iter_mut().zip(residual) {
            *o = (*o + r) * self.output_scale;
        }
        out
    }
}

/// Standard fBM on `grid` through the Volterra representation.
pub fn fbm_volterra(hurst: HurstExponent, grid: &TimeGrid, seed: u64) -> Result<FbmPath> {
    let sampler = VolterraSampler::new(hurst, grid, KernelScaling::UnitVariance)?;
    let mut r = rng::stream(seed, rng::tag::FBM, 0);
    let draw = sampler.sample(&mut r);
    Ok(FbmPath {
        times: grid.points().to_vec(),
        dim: 1,
        values: draw.values,
        hurst: vec![hurst.get()],
        seed,
    })
}
