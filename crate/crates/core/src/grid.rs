//! Time meshes and functions sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing mesh on `[0, T]` starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "grid must start at 0, starts at {}",
                points[0]
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "points not strictly increasing at index {}: {} -> {}",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { points })
    }

    /// `n` equal cells on `[0, horizon]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        let h = horizon / n as f64;
        let mut points: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        points[n] = horizon;
        Self::new(points)
    }

    /// Mesh clustered at both endpoints: `t = T·w(u)` with `w` a symmetric
    /// power grading of exponent `q` around the midpoint.
    pub fn graded(horizon: f64, n: usize, q: f64) -> Result<Self> {
        if n < 2 || q < 1.0 {
            return Err(Error::InvalidGrid(format!("graded grid needs n >= 2, q >= 1 (n = {n}, q = {q})")));
        }
        let mut points = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let u = i as f64 / n as f64;
            let w = if u <= 0.5 {
                0.5 * (2.0 * u).powf(q)
            } else {
                1.0 - 0.5 * (2.0 * (1.0 - u)).powf(q)
            };
            points.push(horizon * w);
        }
        points[n] = horizon;
        points.dedup();
        Self::new(points)
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Number of cells, `len() - 1`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.points.len() - 1
    }

    pub fn steps(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest cell width.
    pub fn mesh(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index `i` of the cell `[t_i, t_{i+1})` containing `t`, clamped to the
    /// last cell for `t >= end`.
    pub fn locate(&self, t: f64) -> usize {
        let p = &self.points;
        match p.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(p.len() - 2),
        }
    }

    /// Same mesh multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|t| t * c).collect())
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.points
    }
}

/// Scalar function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolation, constant extrapolation past the end.
    pub fn interpolate(&self, t: f64) -> f64 {
        let p = self.grid.points();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.grid.end() {
            return self.values[self.values.len() - 1];
        }
        let i = self.grid.locate(t);
        let w = (t - p[i]) / (p[i + 1] - p[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// `d`-dimensional path on a grid, stored point-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != grid.len() * dim {
            return Err(Error::InvalidGrid(format!(
                "{} values do not fit {} points of dimension {}",
                values.len(),
                grid.len(),
                dim
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![0.0; grid.len() * dim];
        Self { grid, dim, values }
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn point_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.grid.len() - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinate `i` as a scalar sampled function.
    pub fn coordinate(&self, i: usize) -> SampledFunction {
        let values = (0..self.grid.len()).map(|j| self.values[j * self.dim + i]).collect();
        SampledFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Stack scalar functions on a common grid as coordinates.
    pub fn from_coordinates(coords: &[SampledFunction]) -> Result<Self> {
        let first = coords
            .first()
            .ok_or_else(|| Error::InvalidGrid("no coordinates".into()))?;
        let grid = first.grid.clone();
        if coords.iter().any(|c| c.grid != grid) {
            return Err(Error::InvalidGrid("coordinates live on different grids".into()));
        }
        let dim = coords.len();
        let mut values = vec![0.0; grid.len() * dim];
        for (i, c) in coords.iter().enumerate() {
            for (j, v) in c.values.iter().enumerate() {
                values[j * dim + i] = *v;
            }
        }
        Ok(Self { grid, dim, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(serde_json::from_str::<TimeGrid>("[0.0, 2.0, 1.0]").is_err());
    }

    #[test]
    fn uniform_and_graded() {
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let g = TimeGrid::graded(1.0, 100, 4.0).unwrap();
        assert!(g.points()[1] < 1e-6);
        assert!((1.0 - g.points()[g.len() - 2]) < 1e-6);
        assert_eq!(g.end(), 1.0);
    }

    #[test]
    fn locate_cells() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.locate(0.0), 0);
        assert_eq!(g.locate(0.3), 1);
        assert_eq!(g.locate(0.25), 1);
        assert_eq!(g.locate(1.0), 3);
        assert_eq!(g.locate(5.0), 3);
    }

    #[test]
    fn interpolation() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let f = SampledFunction::new(g, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(f.interpolate(0.25), 0.5);
        assert_eq!(f.interpolate(0.75), 2.0);
        assert_eq!(f.interpolate(2.0), 3.0);
    }

    #[test]
    fn path_coordinates_round_trip() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let a = SampledFunction::new(g.clone(), vec![0.0, 1.0, 2.0]).unwrap();
        let b = SampledFunction::new(g, vec![0.0, -1.0, -2.0]).unwrap();
        let p = SamplePath::from_coordinates(&[a.clone(), b]).unwrap();
        assert_eq!(p.point(2), &[2.0, -2.0]);
        assert_eq!(p.coordinate(0), a);
    }
}
