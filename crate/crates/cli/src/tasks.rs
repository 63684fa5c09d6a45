use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use tcfbm::coupling::{girsanov_weight, CouplingOptions, CouplingPlan};
use tcfbm::fbm::CholeskySampler;
use tcfbm::grid::TimeGrid;
use tcfbm::harnack::{corollary_exponents, exponent_sweep, inverse_moment_bound, verify_inequality, FactorOptions, VerifyOptions};
use tcfbm::rng::{self, tag};
use tcfbm::sde::{solve_sde, Certificate, PreparedModel};
use tcfbm::stats::{linear_fit, Estimate};
use tcfbm::timechange::{ClockSpec, RegularizedClock};

use crate::config::{ExperimentConfig, Task};
use crate::output::{num, target, write_json, Csv, Provenance};

/// How a task ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Done,
    Pass,
    Fail,
    Diverged(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Done | Status::Pass => 0,
            Status::Fail => 2,
            Status::Diverged(_) => 3,
        }
    }
}

pub fn run(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    match cfg.task {
        Task::SimulateFbm => simulate_fbm(cfg, out, prov),
        Task::SimulateClock => simulate_clock(cfg, out, prov),
        Task::SolveSde => solve(cfg, out, prov),
        Task::Couple => couple(cfg, out, prov),
        Task::VerifyHarnack => verify(cfg, out, prov),
        Task::MomentBounds => moment_bounds(cfg, out, prov),
        Task::ExponentSweep => sweep(cfg, out, prov),
    }
}

fn estimate_json(e: &Estimate) -> Value {
    json!({"mean": e.mean, "se": e.se, "n": e.n})
}

/// `[path][point][coordinate]` written as `path,time,<prefix>0,...`.
fn path_csv(prefix: &[&str], dim: usize, grid: &TimeGrid, paths: &[Vec<Vec<f64>>]) -> Csv {
    let mut header = vec!["path".to_string(), "time".to_string()];
    for p in prefix {
        header.extend((0..dim).map(|i| format!("{p}{i}")));
    }
    let mut csv = Csv::new(header);
    for (k, path) in paths.iter().enumerate() {
        for (j, &t) in grid.points().iter().enumerate() {
            let mut row = vec![k.to_string(), num(t)];
            row.extend(path[j].iter().map(|v| num(*v)));
            csv.row(&row);
        }
    }
    csv
}

fn terminal_stats(paths: &[Vec<Vec<f64>>], width: usize) -> Vec<Value> {
    (0..width)
        .map(|i| estimate_json(&Estimate::from_samples(&paths.iter().map(|p| p[p.len() - 1][i]).collect::<Vec<_>>())))
        .collect()
}

fn simulate_fbm(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let m = &cfg.model;
    let grid = TimeGrid::uniform(r.horizon, r.cells)?;
    let samplers = (0..m.dim)
        .map(|i| CholeskySampler::new(m.hurst(i), grid.points(), m.noise.scaling))
        .collect::<tcfbm::Result<Vec<_>>>()?;
    let paths: Vec<Vec<Vec<f64>>> = (0..r.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let w: Vec<Vec<f64>> = samplers
                .iter()
                .enumerate()
                .map(|(i, s)| s.sample(&mut rng::stream(rng::derive(prov.seed, tag::FBM, p), tag::FBM, i as u64)))
                .collect();
            (0..grid.len()).map(|j| w.iter().map(|c| c[j]).collect()).collect()
        })
        .collect();
    path_csv(&["w"], m.dim, &grid, &paths[..r.paths_written.min(paths.len())]).write(&target(out, &cfg.output.paths), prov)?;
    let expected: Vec<f64> = (0..m.dim)
        .map(|i| {
            let h = m.hurst(i);
            m.noise.scaling.variance(h) * r.horizon.powf(2.0 * h.get())
        })
        .collect();
    let var: Vec<Value> = (0..m.dim)
        .map(|i| {
            let sq: Vec<f64> = paths.iter().map(|p| p[grid.len() - 1][i].powi(2)).collect();
            estimate_json(&Estimate::from_samples(&sq))
        })
        .collect();
    write_json(
        &target(out, &cfg.output.report),
        json!({"n_paths": r.n_paths, "terminal_second_moment": var, "expected_variance": expected}),
        prov,
    )?;
    Ok(Status::Done)
}

fn simulate_clock(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let m = &cfg.model;
    let grid = TimeGrid::uniform(r.horizon, r.cells)?;
    let n = m.clock_count();
    let paths: Vec<Vec<Vec<f64>>> = (0..r.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let z = (0..n)
                .map(|c| {
                    m.clock(c)
                        .sample(&grid, &mut rng::stream(rng::derive(prov.seed, tag::CLOCK, p), tag::CLOCK, c as u64))
                        .map(|z| z.values().to_vec())
                })
                .collect::<tcfbm::Result<Vec<_>>>()?;
            Ok((0..grid.len()).map(|j| z.iter().map(|c| c[j]).collect()).collect())
        })
        .collect::<tcfbm::Result<_>>()?;
    path_csv(&["z"], n, &grid, &paths[..r.paths_written.min(paths.len())]).write(&target(out, &cfg.output.paths), prov)?;
    write_json(
        &target(out, &cfg.output.report),
        json!({"n_paths": r.n_paths, "terminal": terminal_stats(&paths, n)}),
        prov,
    )?;
    Ok(Status::Done)
}

fn solve(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let m = &cfg.model;
    let x = cfg.x.as_ref().expect("validated");
    let grid = TimeGrid::uniform(r.horizon, r.cells)?;
    let prepared = PreparedModel::new(m, &grid)?;
    let paths: Vec<Vec<Vec<f64>>> = (0..r.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let noise = prepared.realize(prov.seed, p)?;
            let sol = solve_sde(x, &m.drift.field, &noise.u, &r.solver)?;
            Ok((0..grid.len()).map(|j| sol.x.point(j).to_vec()).collect())
        })
        .collect::<tcfbm::Result<_>>()?;
    path_csv(&["x"], m.dim, &grid, &paths[..r.paths_written.min(paths.len())]).write(&target(out, &cfg.output.paths), prov)?;
    write_json(
        &target(out, &cfg.output.report),
        json!({"n_paths": r.n_paths, "x": x, "terminal": terminal_stats(&paths, m.dim)}),
        prov,
    )?;
    Ok(Status::Done)
}

fn regularized(clock: &ClockSpec, horizon: f64, eps: f64, cells: usize, seed: u64, index: u64) -> tcfbm::Result<RegularizedClock> {
    // simulate on [0, T + 1] so every ε ∈ (0, 1) is serviceable
    let grid = TimeGrid::uniform(horizon + 1.0, ((horizon + 1.0) / horizon * cells as f64).ceil() as usize)?;
    let path = clock.sample(&grid, &mut rng::stream(seed, tag::CLOCK, index))?;
    RegularizedClock::new(path, eps)
}

fn couple(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let m = &cfg.model;
    let (x, y) = (cfg.x.as_ref().expect("validated"), cfg.y.as_ref().expect("validated"));
    let opts = CouplingOptions {
        cells: r.coupling_cells,
        tolerance: r.coupling_tolerance,
        delta: r.delta,
        solver: r.solver,
    };
    let plan = match &m.drift.certificate {
        Certificate::OneSidedLipschitz { .. } => {
            if m.is_anisotropic() {
                bail!("the isotropic coupling needs one Hurst index and one clock; use a condition (A) certificate for independent clocks");
            }
            let ell = regularized(m.clock(0), r.horizon, r.epsilon, r.coupling_cells, prov.seed, 0)?;
            CouplingPlan::isotropic(m.dim, m.hurst(0), m.noise.scaling, ell, r.horizon, opts)?
        }
        Certificate::YamadaWatanabe { .. } => {
            let hurst: Vec<_> = (0..m.dim).map(|i| m.hurst(i)).collect();
            let shared = m.clock_count() == 1 && m.dim > 1;
            let clocks = (0..m.dim)
                .map(|i| {
                    let index = if shared { 0 } else { i as u64 };
                    regularized(m.clock(i), r.horizon, r.epsilon, r.coupling_cells, prov.seed, index)
                })
                .collect::<tcfbm::Result<Vec<_>>>()?;
            CouplingPlan::anisotropic(&hurst, m.noise.scaling, clocks, r.horizon, opts)?
        }
    };
    let res = plan.couple(x, y, &m.drift, &m.noise.v, prov.seed)?;
    let grid = plan.time_grid();
    let joint: Vec<Vec<f64>> = (0..grid.len())
        .map(|j| res.x.point(j).iter().chain(res.y.point(j)).copied().collect())
        .collect();
    path_csv(&["x", "y"], m.dim, grid, &[joint]).write(&target(out, &cfg.output.paths), prov)?;
    write_json(
        &target(out, &cfg.output.report),
        json!({
            "anisotropic": plan.is_anisotropic(),
            "x": x,
            "y": y,
            "xi": res.xi,
            "tau": res.tau,
            "coupled": res.x.last() == res.y.last(),
            "m_terminal": res.m_terminal,
            "compensator": res.compensator,
            "compensator_bound": res.compensator_bound,
            "girsanov_weight": girsanov_weight(&res),
            "post_coupling_forcing": res.post_coupling_forcing,
        }),
        prov,
    )?;
    Ok(Status::Done)
}

fn verify(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let x = cfg.x.as_ref().expect("validated");
    let y = cfg.y.as_ref().unwrap_or(x);
    let opts = VerifyOptions {
        horizon: r.horizon,
        cells: r.cells,
        n_paths: r.n_paths,
        n_z_samples: r.n_z_samples,
        z_cells: r.z_cells,
        seed: prov.seed,
        fd_step: r.fd_step,
        solver: r.solver,
    };
    let report = verify_inequality(
        cfg.inequality.expect("validated"),
        cfg.f.as_ref().expect("validated"),
        x,
        y,
        &cfg.model,
        &opts,
    )?;
    write_json(&target(out, &cfg.output.report), serde_json::to_value(&report)?, prov)?;
    Ok(if report.diverged {
        Status::Diverged(report.divergence_reason.unwrap_or_else(|| "bound diverged".into()))
    } else if report.pass {
        Status::Pass
    } else {
        Status::Fail
    })
}

/// `sup_r φ(r) r^{-σ}` over `r = 10^k`, `k ∈ [-12, 12]`.
fn phi_constant(clock: &ClockSpec, sigma: f64) -> Result<f64> {
    let ClockSpec::InverseSubordinator { bernstein, .. } = clock else {
        bail!("moment-bounds needs an inverse subordinator clock");
    };
    let mut c: f64 = 0.0;
    for k in -48..=48 {
        let r = 10f64.powf(k as f64 / 4.0);
        c = c.max(bernstein.phi(r)? * r.powf(-sigma));
    }
    Ok(c)
}

fn moment_bounds(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let mb = cfg.moments.as_ref().expect("validated");
    let clock = cfg.model.clock(0);
    let sched = corollary_exponents(std::slice::from_ref(clock), &[cfg.model.hurst(0).get()])?;
    let sigma = sched.indices[0];
    let c = phi_constant(clock, sigma)?;
    let mut csv = Csv::new(["theta", "t", "moment", "se", "bound"]);
    let mut rows = Vec::new();
    let mut pass = true;
    let samples: Vec<Vec<f64>> = mb
        .times
        .iter()
        .map(|&t| {
            (0..r.n_z_samples as u64)
                .into_par_iter()
                .map(|i| clock.sample_terminal(t, r.z_cells, &mut rng::stream(rng::derive(prov.seed, tag::CLOCK, i), tag::CLOCK, 0)))
                .collect::<tcfbm::Result<Vec<f64>>>()
        })
        .collect::<tcfbm::Result<_>>()?;
    let mut slopes = Vec::new();
    for &theta in &mb.thetas {
        let mut logs = Vec::new();
        for (z, &t) in samples.iter().zip(&mb.times) {
            let e = Estimate::from_samples(&z.iter().map(|v| v.powf(-theta)).collect::<Vec<_>>());
            let bound = inverse_moment_bound(sigma, theta, c, t)?;
            let ok = e.mean <= bound + 4.0 * e.se;
            pass &= ok;
            csv.row(&[num(theta), num(t), num(e.mean), num(e.se), num(bound)]);
            rows.push(json!({"theta": theta, "t": t, "moment": estimate_json(&e), "bound": bound, "within": ok}));
            logs.push(e.mean.ln());
        }
        if mb.times.len() >= 2 {
            let lt: Vec<f64> = mb.times.iter().map(|t| t.ln()).collect();
            let (_, slope, se) = linear_fit(&lt, &logs);
            slopes.push(json!({"theta": theta, "fitted": slope, "se": se, "predicted": -sigma * theta}));
        }
    }
    csv.write(&target(out, &cfg.output.sweep), prov)?;
    write_json(
        &target(out, &cfg.output.report),
        json!({"sigma": sigma, "c": c, "rows": rows, "slopes": slopes, "pass": pass}),
        prov,
    )?;
    Ok(if pass { Status::Pass } else { Status::Fail })
}

fn sweep(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<Status> {
    let r = &cfg.run;
    let sb = cfg.sweep.as_ref().expect("validated");
    let m = &cfg.model;
    if m.is_anisotropic() {
        bail!("exponent-sweep runs on one Hurst index and one clock");
    }
    // propagates hypothesis violations of the corollaries
    corollary_exponents(std::slice::from_ref(m.clock(0)), &[m.hurst(0).get()])?;
    let opts = FactorOptions {
        n_samples: r.n_z_samples,
        cells: r.z_cells,
        seed: rng::derive(prov.seed, tag::FACTOR, 0),
    };
    let s = exponent_sweep(m.clock(0), m.hurst(0), &sb.k, &sb.horizons, &opts)?;
    let mut csv = Csv::new(["T", "factor", "se"]);
    for p in &s.points {
        csv.row(&[num(p.horizon), num(p.factor.mean), num(p.factor.se)]);
    }
    csv.write(&target(out, &cfg.output.sweep), prov)?;
    write_json(&target(out, &cfg.output.report), serde_json::to_value(&s)?, prov)?;
    Ok(Status::Done)
}
