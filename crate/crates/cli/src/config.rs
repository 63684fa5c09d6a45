use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tcfbm::harnack::InequalityKind;
use tcfbm::sde::{KFunction, Model, SolverOptions, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    SimulateFbm,
    SimulateClock,
    SolveSde,
    Couple,
    VerifyHarnack,
    MomentBounds,
    ExponentSweep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::SimulateFbm => "simulate-fbm",
            Task::SimulateClock => "simulate-clock",
            Task::SolveSde => "solve-sde",
            Task::Couple => "couple",
            Task::VerifyHarnack => "verify-harnack",
            Task::MomentBounds => "moment-bounds",
            Task::ExponentSweep => "exponent-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub horizon: f64,
    /// Cells of the simulation grid.
    pub cells: usize,
    pub n_paths: usize,
    pub n_z_samples: usize,
    /// Cells of the grid random clocks are sampled on for bound factors.
    pub z_cells: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub coupling_tolerance: f64,
    pub coupling_cells: usize,
    pub fd_step: f64,
    /// Paths written to `paths.csv`.
    pub paths_written: usize,
    pub solver: SolverOptions,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            cells: 32,
            n_paths: 1000,
            n_z_samples: 10_000,
            z_cells: 256,
            seed: 0,
            epsilon: 0.1,
            delta: 0.99,
            coupling_tolerance: 1e-8,
            coupling_cells: 256,
            fd_step: 0.05,
            paths_written: 10,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub horizons: Vec<f64>,
    #[serde(default = "zero_k")]
    pub k: KFunction,
}

fn zero_k() -> KFunction {
    KFunction::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsBlock {
    pub thetas: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub report: String,
    pub paths: String,
    pub sweep: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            report: "report.json".into(),
            paths: "paths.csv".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: Model,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub inequality: Option<InequalityKind>,
    #[serde(default)]
    pub f: Option<TestFunction>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub moments: Option<MomentsBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A parsed config with the hash of its source text.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
}

pub fn load(path: &std::path::Path) -> Result<Loaded> {
    let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let config: ExperimentConfig =
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))?;
    config.validate()?;
    let hash = Sha256::digest(&text).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, hash })
}

fn check(ok: bool, what: &str) -> Result<()> {
    if !ok {
        bail!("invalid config: {what}");
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().context("invalid model")?;
        let r = &self.run;
        check(r.horizon > 0.0 && r.horizon.is_finite(), "run.horizon must be positive")?;
        check((1..=100_000).contains(&r.cells), "run.cells must lie in [1, 100000]")?;
        check((1..=100_000).contains(&r.coupling_cells), "run.coupling_cells must lie in [1, 100000]")?;
        check((1..=100_000).contains(&r.z_cells), "run.z_cells must lie in [1, 100000]")?;
        check(r.n_paths >= 1, "run.n_paths must be at least 1")?;
        check(r.n_z_samples >= 2, "run.n_z_samples must be at least 2")?;
        check(r.epsilon > 0.0 && r.epsilon < 1.0, "run.epsilon must lie in (0, 1)")?;
        check(r.delta > 0.0 && r.delta < 1.0, "run.delta must lie in (0, 1)")?;
        check(r.coupling_tolerance > 0.0, "run.coupling_tolerance must be positive")?;
        check(r.fd_step > 0.0, "run.fd_step must be positive")?;
        let d = self.model.dim;
        for (name, p) in [("x", &self.x), ("y", &self.y)] {
            if let Some(p) = p {
                check(p.len() == d, &format!("{name} must have {d} coordinates"))?;
                check(p.iter().all(|v| v.is_finite()), &format!("{name} must be finite"))?;
            }
        }
        match self.task {
            Task::SolveSde => check(self.x.is_some(), "solve-sde needs x")?,
            Task::Couple => check(self.x.is_some() && self.y.is_some(), "couple needs x and y")?,
            Task::VerifyHarnack => {
                check(self.inequality.is_some(), "verify-harnack needs an inequality")?;
                check(self.f.is_some(), "verify-harnack needs f")?;
                check(self.x.is_some(), "verify-harnack needs x")?;
                let gradient = matches!(self.inequality, Some(InequalityKind::Gradient));
                check(gradient || self.y.is_some(), "log and power inequalities need y")?;
                check(r.n_paths >= 100, "verify-harnack needs run.n_paths >= 100")?;
            }
            Task::MomentBounds => {
                let m = self.moments.as_ref();
                check(m.is_some(), "moment-bounds needs a moments block")?;
                let m = m.expect("checked");
                check(!m.thetas.is_empty() && m.thetas.iter().all(|t| *t > 0.0 && *t < 1.0), "moments.thetas must lie in (0, 1)")?;
                check(!m.times.is_empty() && m.times.iter().all(|t| *t > 0.0), "moments.times must be positive")?;
                check(self.model.clock(0).is_inverse_subordinator(), "moment-bounds needs an inverse subordinator clock")?;
            }
            Task::ExponentSweep => {
                let s = self.sweep.as_ref();
                check(s.is_some(), "exponent-sweep needs a sweep block")?;
                let s = s.expect("checked");
                check(s.horizons.len() >= 2 && s.horizons.iter().all(|t| *t > 0.0), "sweep.horizons needs two or more positive values")?;
            }
            Task::SimulateFbm | Task::SimulateClock => {}
        }
        Ok(())
    }
}
