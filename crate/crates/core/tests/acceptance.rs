//! Acceptance suite: one line per criterion, exit status 1 if any fails.

use std::time::Instant;

use rayon::prelude::*;
use tcfbm::coupling::{girsanov_weight, CouplingOptions, CouplingPlan};
use tcfbm::fbm::{fbm_covariance, CholeskySampler, KernelScaling, VolterraSampler};
use tcfbm::frac_kernel::{apply_kernel, invert_kernel, kernel_square_integral, variance_factor};
use tcfbm::grid::{SamplePath, SampledFunction, TimeGrid};
use tcfbm::harnack::{
    corollary_exponents, exponent_sweep, inverse_moment_bound, verify_inequality, FactorOptions, InequalityKind, VerifyOptions,
};
use tcfbm::rng::{self, tag};
use tcfbm::sde::{solve_sde, Certificate, DriftField, DriftSpec, KFunction, Model, SolverOptions, TestFunction, UFunction, VSpec};
use tcfbm::specfun::{gamma, kernel_constant, HurstExponent};
use tcfbm::stats::{linear_fit, Estimate};
use tcfbm::timechange::{BernsteinSpec, ClockSpec, RegularizedClock};

struct Outcome {
    pass: bool,
    detail: String,
}

fn h(v: f64) -> HurstExponent {
    HurstExponent::new(v).unwrap()
}

fn clock_family() -> [(&'static str, ClockSpec); 3] {
    [
        ("deterministic", ClockSpec::identity()),
        ("stable", ClockSpec::stable(0.5)),
        ("inverse-stable", ClockSpec::inverse_stable(0.5)),
    ]
}

fn c1_covariance() -> Outcome {
    let n = 50_000;
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let times: Vec<f64> = grid.points()[1..].to_vec();
    let mut worst: f64 = 0.0;
    for hv in [0.1, 0.3, 0.45] {
        let chol = CholeskySampler::new(h(hv), &times, KernelScaling::UnitVariance).unwrap();
        let volt = VolterraSampler::new(h(hv), &grid, KernelScaling::UnitVariance).unwrap();
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let a = chol.sample(&mut rng::stream(1, tag::FBM, i));
                let b = volt.sample(&mut rng::stream(2, tag::FBM, i)).values[1..].to_vec();
                (a, b)
            })
            .collect();
        for j in 0..8 {
            for k in 0..=j {
                let exact = fbm_covariance(hv, times[j], times[k]);
                for side in 0..2 {
                    let prod: Vec<f64> = draws
                        .iter()
                        .map(|(a, b)| if side == 0 { a[j] * a[k] } else { b[j] * b[k] })
                        .collect();
                    worst = worst.max(Estimate::from_samples(&prod).z_score(exact).abs());
                }
            }
        }
    }
    Outcome {
        pass: worst <= 4.0,
        detail: format!("max |z| over 216 entries = {worst:.2} (limit 4)"),
    }
}

fn c2_kernel() -> Outcome {
    let mut worst_unit: f64 = 0.0;
    let mut worst_vh: f64 = 0.0;
    for hv in [0.1, 0.3, 0.45] {
        for t in [0.5, 1.0, 2.0] {
            let q = kernel_square_integral(h(hv), t, 4000).unwrap();
            let target = t.powf(2.0 * hv);
            worst_unit = worst_unit.max((q / target - 1.0).abs());
            worst_vh = worst_vh.max((q / (variance_factor(h(hv)) * target) - 1.0).abs());
        }
    }
    let mut worst_inv: f64 = 0.0;
    for hv in [0.1, 0.3, 0.45] {
        let grid = TimeGrid::uniform(1.0, 2000).unwrap();
        let xi = 0.7;
        let eta = invert_kernel(h(hv), &SampledFunction::from_fn(grid.clone(), |_| xi)).unwrap();
        let kc = kernel_constant(h(hv)).unwrap();
        for (&s, &e) in grid.points().iter().zip(eta.values()).skip(1) {
            worst_inv = worst_inv.max((e / (kc * xi * s.powf(0.5 - hv)) - 1.0).abs());
        }
    }
    let mut errs = Vec::new();
    for cells in [250, 500, 1000] {
        let grid = TimeGrid::uniform(1.0, cells).unwrap();
        let g = SampledFunction::from_fn(grid.clone(), |s| (3.0 * s).cos());
        let back = apply_kernel(h(0.3), &invert_kernel(h(0.3), &g).unwrap()).unwrap();
        let e = grid
            .points()
            .iter()
            .zip(back.values())
            .map(|(&t, &v)| (v - (3.0 * t).sin() / 3.0).abs())
            .fold(0.0f64, f64::max);
        errs.push(e);
    }
    let round_trip = errs.windows(2).all(|w| w[1] < w[0]) && errs[2] < 1e-3;
    let unit = worst_unit <= 1e-4;
    Outcome {
        pass: unit && worst_vh <= 1e-4 && worst_inv <= 1e-6 && round_trip,
        detail: format!(
            "∫K² vs t^2H rel {worst_unit:.3e} ({}), vs V_H t^2H rel {worst_vh:.3e}; K^-1 const rel {worst_inv:.2e}; round trip {:.2e}/{:.2e}/{:.2e}",
            if unit { "ok" } else { "kernel normalised to V_H" },
            errs[0],
            errs[1],
            errs[2]
        ),
    }
}

fn regularized(spec: &ClockSpec, horizon: f64, eps: f64, seed: u64) -> RegularizedClock {
    let grid = TimeGrid::uniform(horizon + 1.0, 512).unwrap();
    let path = spec.sample(&grid, &mut rng::stream(seed, tag::CLOCK, 0)).unwrap();
    RegularizedClock::new(path, eps).unwrap()
}

fn c3_coupling() -> Outcome {
    let opts = CouplingOptions {
        cells: 64,
        ..Default::default()
    };
    let drifts = [("b=0", DriftSpec::zero()), ("b=-x", DriftSpec::linear(1.0))];
    let mut violations = 0usize;
    for (_, clock) in clock_family() {
        for (_, drift) in &drifts {
            let bad: usize = (0..1000u64)
                .into_par_iter()
                .map(|seed| {
                    let ell = regularized(&clock, 1.0, 0.1, seed);
                    let plan = CouplingPlan::isotropic(2, h(0.3), KernelScaling::Representation, ell, 1.0, opts).unwrap();
                    match plan.couple(&[0.0, 0.0], &[0.6, -0.8], drift, &VSpec::Zero, seed) {
                        Ok(r) => {
                            let ok = r.tau[0] <= 1.0 && r.x.last() == r.y.last() && r.compensator <= r.compensator_bound * (1.0 + 1e-9);
                            usize::from(!ok)
                        }
                        Err(_) => 1,
                    }
                })
                .sum();
            violations += bad;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("6000 coupled pairs, {violations} violations of τ ≤ T, X_T = Y_T or ⟨M⟩ ≤ bound"),
    }
}

fn c4_girsanov() -> Outcome {
    let opts = CouplingOptions {
        cells: 64,
        ..Default::default()
    };
    let ell = regularized(&ClockSpec::identity(), 1.0, 0.1, 0);
    let plan = CouplingPlan::isotropic(1, h(0.3), KernelScaling::Representation, ell, 1.0, opts).unwrap();
    let drift = DriftSpec::linear(1.0);
    let runs: Vec<(f64, f64, f64)> = (0..50_000u64)
        .into_par_iter()
        .map(|seed| {
            let r = plan.couple(&[0.0], &[0.5], &drift, &VSpec::Zero, seed).unwrap();
            (girsanov_weight(&r), r.compensator, r.compensator_bound)
        })
        .collect();
    let w: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let rlogr: Vec<f64> = w.iter().map(|r| r * r.ln()).collect();
    let bound = runs[0].2;
    let qv_ok = runs.iter().all(|r| r.1 <= r.2 * (1.0 + 1e-9));
    let e = Estimate::from_samples(&w);
    let ent = Estimate::from_samples(&rlogr);
    let unit = e.within(1.0, 4.0);
    let entropy = ent.mean <= 0.5 * bound + 4.0 * ent.se;
    Outcome {
        pass: unit && qv_ok && entropy,
        detail: format!(
            "E[R] = {:.5} ± {:.5}; ⟨M⟩ ≤ bound on all paths: {qv_ok}; E[R log R] = {:.4} ± {:.4} vs bound/2 = {:.4}",
            e.mean,
            e.se,
            ent.mean,
            ent.se,
            0.5 * bound
        ),
    }
}

fn verify_opts(n_paths: usize, seed: u64) -> VerifyOptions {
    VerifyOptions {
        horizon: 1.0,
        cells: 32,
        n_paths,
        n_z_samples: 20_000,
        z_cells: 256,
        seed,
        fd_step: 0.05,
        solver: SolverOptions::default(),
    }
}

fn c5_log_harnack() -> Outcome {
    let f = TestFunction::one_plus_clamp(0);
    let mut lines = Vec::new();
    let mut pass = true;
    for hv in [0.2, 0.4] {
        for (cname, clock) in [("det", ClockSpec::identity()), ("stable", ClockSpec::stable(0.5))] {
            for (dname, drift) in [("b=0", DriftSpec::zero()), ("b=-x", DriftSpec::linear(1.0))] {
                let m = Model::isotropic(1, drift, hv, clock.clone());
                let r = verify_inequality(InequalityKind::Log, &f, &[0.0], &[1.0], &m, &verify_opts(50_000, 11)).unwrap();
                pass &= r.pass;
                lines.push(format!("H={hv} {cname} {dname}: margin {:.4}", r.margin.unwrap_or(f64::NAN)));
            }
        }
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c6_power_harnack() -> Outcome {
    let f = TestFunction::one_plus_clamp(0);
    let mut lines = Vec::new();
    let mut pass = true;
    for (cname, clock) in [("det", ClockSpec::identity()), ("stable", ClockSpec::stable(0.5))] {
        for p in [2.0, 4.0] {
            let m = Model::isotropic(1, DriftSpec::linear(1.0), 0.3, clock.clone());
            let r = verify_inequality(InequalityKind::Power { p }, &f, &[0.0], &[1.0], &m, &verify_opts(50_000, 12)).unwrap();
            pass &= r.pass;
            lines.push(format!("{cname} p={p}: margin {:.4}", r.margin.unwrap_or(f64::NAN)));
        }
    }
    let m = Model::isotropic(1, DriftSpec::linear(1.0), 0.3, ClockSpec::inverse_stable(0.5));
    let r = verify_inequality(InequalityKind::Power { p: 2.0 }, &f, &[0.0], &[1.0], &m, &verify_opts(1_000, 12)).unwrap();
    pass &= r.diverged && !r.pass;
    lines.push(format!("inverse-stable diverged: {}", r.diverged));
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c7_gradient() -> Outcome {
    let f = TestFunction::Tanh {
        inner: Box::new(TestFunction::coordinate(0)),
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for (cname, clock) in [("det", ClockSpec::identity()), ("stable", ClockSpec::stable(0.5))] {
        let m = Model::isotropic(1, DriftSpec::linear(1.0), 0.3, clock);
        let r = verify_inequality(InequalityKind::Gradient, &f, &[0.2], &[0.2], &m, &verify_opts(50_000, 13)).unwrap();
        pass &= r.pass;
        lines.push(format!(
            "{cname}: |∇P f|² = {:.4} ± {:.4} ≤ {:.4}",
            r.lhs.mean,
            r.lhs.se,
            r.rhs.map(|e| e.mean).unwrap_or(f64::NAN)
        ));
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c8_exponents() -> Outcome {
    let ts = [0.25, 0.5, 1.0, 2.0, 4.0];
    let opts = FactorOptions {
        n_samples: 100_000,
        cells: 256,
        seed: 8,
    };
    let zero = KFunction::constant(0.0);
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, clock) in [("stable", ClockSpec::stable(0.5)), ("inverse-stable", ClockSpec::inverse_stable(0.5))] {
        for hv in [0.25, 0.4] {
            let s = exponent_sweep(&clock, h(hv), &zero, &ts, &opts).unwrap();
            let pred = s.predicted_slope.unwrap();
            pass &= (s.fitted_slope - pred).abs() <= 0.1;
            lines.push(format!("{name} H={hv}: slope {:.4} vs {pred:.4}", s.fitted_slope));
        }
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c9_inverse_moments() -> Outcome {
    let n = 200_000;
    let alpha = 0.5;
    let clock = ClockSpec::InverseSubordinator {
        bernstein: BernsteinSpec::stable(alpha, 1.0),
        refine: 10,
    };
    let ts = [0.5, 1.0, 2.0];
    let mut lines = Vec::new();
    let mut pass = true;
    let terminals: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            (0..n as u64)
                .into_par_iter()
                .map(|i| clock.sample_terminal(t, 64, &mut rng::stream(9, tag::CLOCK, i)).unwrap())
                .collect()
        })
        .collect();
    for theta in [0.2, 0.5] {
        let mut logm = Vec::new();
        for (z, &t) in terminals.iter().zip(&ts) {
            let e = Estimate::from_samples(&z.iter().map(|v| v.powf(-theta)).collect::<Vec<_>>());
            let b = inverse_moment_bound(alpha, theta, 1.0, t).unwrap();
            pass &= e.mean <= b + 4.0 * e.se;
            logm.push(e.mean.ln());
        }
        let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let (_, slope, _) = linear_fit(&lt, &logm);
        pass &= (slope + alpha * theta).abs() <= 0.05;
        lines.push(format!("θ={theta}: slope {slope:.4} vs {:.4}", -alpha * theta));
    }
    // first-passage mesh bias by halving the subordinator mesh at t = 1
    let fine = ClockSpec::InverseSubordinator {
        bernstein: BernsteinSpec::stable(alpha, 1.0),
        refine: 20,
    };
    let zf: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| fine.sample_terminal(1.0, 64, &mut rng::stream(9, tag::CLOCK, i)).unwrap())
        .collect();
    let exact = 1.0 / gamma(1.0 + alpha).unwrap();
    let coarse = Estimate::from_samples(&terminals[1]);
    let finer = Estimate::from_samples(&zf);
    lines.push(format!(
        "E[S^-1(1)] mesh halving {:.5} → {:.5} (exact {exact:.5})",
        coarse.mean, finer.mean
    ));
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c10_anisotropic() -> Outcome {
    let f = TestFunction::one_plus_clamp(0);
    let mut lines = Vec::new();
    let mut pass = true;
    let clocks = vec![ClockSpec::identity(), ClockSpec::identity()];
    for (name, drift) in [("b=0", DriftSpec::zero_yw(UFunction::identity())), ("b=-x", DriftSpec::linear_yw(1.0))] {
        let m = Model::anisotropic(drift, vec![0.2, 0.4], clocks.clone());
        let r = verify_inequality(InequalityKind::Log, &f, &[0.0, 0.0], &[0.6, -0.4], &m, &verify_opts(50_000, 14)).unwrap();
        pass &= r.pass;
        lines.push(format!("{name}: margin {:.4}", r.margin.unwrap_or(f64::NAN)));
    }
    // Bihari envelope on uncoupled pairs with a non-monotone drift
    let (amp, freq) = (0.8, 1.5);
    let k = KFunction::constant(amp * freq);
    let drift = DriftSpec {
        field: DriftField::Sine {
            amplitude: amp,
            frequency: freq,
        },
        certificate: Certificate::YamadaWatanabe {
            u: UFunction::identity(),
            k: k.clone(),
        },
    };
    let opts = CouplingOptions {
        cells: 64,
        ..Default::default()
    };
    let ells = vec![
        regularized(&ClockSpec::identity(), 1.0, 0.1, 0),
        regularized(&ClockSpec::identity(), 1.0, 0.1, 0),
    ];
    let plan = CouplingPlan::anisotropic(&[h(0.2), h(0.4)], KernelScaling::Representation, ells, 1.0, opts).unwrap();
    let (x, y) = ([0.0, 0.0], [0.6, -0.4]);
    let r0 = 1.0;
    let u = UFunction::identity();
    let mut envelope_ok = true;
    for seed in 0..200 {
        let a = plan.solve(&x, &drift.field, &VSpec::Zero, seed).unwrap();
        let b = plan.solve(&y, &drift.field, &VSpec::Zero, seed).unwrap();
        for (j, &t) in plan.time_grid().points().iter().enumerate() {
            let gap: f64 = a.point(j).iter().zip(b.point(j)).map(|(p, q)| (p - q).abs()).sum();
            envelope_ok &= gap <= u.bihari(&k, t, r0).unwrap() * (1.0 + 1e-6);
        }
    }
    pass &= envelope_ok;
    lines.push(format!("Bihari envelope on 200 pairs: {envelope_ok}"));
    let sub = corollary_exponents(&[ClockSpec::stable(0.5), ClockSpec::stable(0.8)], &[0.2, 0.4]).unwrap();
    let inv = corollary_exponents(&[ClockSpec::inverse_stable(0.5), ClockSpec::inverse_stable(0.8)], &[0.2, 0.4]).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let kappa = close(sub.kappa_min, 0.8)
        && close(sub.kappa_max, 1.0)
        && close(inv.kappa_min, 0.2)
        && close(inv.kappa_max, 0.64)
        && close(sub.power_exponents[0].unwrap(), 0.4 / 0.3)
        && close(sub.power_exponents[1].unwrap(), 0.8 / (0.8 - 0.8 * 0.2));
    pass &= kappa;
    lines.push(format!(
        "κ = ({}, {}, {}, {}) vs (0.8, 1, 0.2, 0.64)",
        sub.kappa_min, sub.kappa_max, inv.kappa_min, inv.kappa_max
    ));
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn c11_regularization() -> Outcome {
    let hurst = h(0.3);
    let horizon = 1.0;
    let grid = TimeGrid::uniform(horizon + 1.0, 4000).unwrap();
    let ell = ClockSpec::stable(0.5).sample(&grid, &mut rng::stream(2024, tag::CLOCK, 0)).unwrap();
    let tgrid = TimeGrid::uniform(horizon, 256).unwrap();
    let epsilons = [0.2, 0.1, 0.05, 0.025];
    let mut clocks: Vec<Vec<f64>> = epsilons
        .iter()
        .map(|&e| {
            let c = RegularizedClock::new(ell.clone(), e).unwrap();
            let l0 = c.eval(0.0).unwrap();
            tgrid.points().iter().map(|&t| c.eval(t).unwrap() - l0).collect()
        })
        .collect();
    clocks.push(tgrid.points().iter().map(|&t| ell.eval(t).unwrap()).collect());
    let rmax = clocks.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let rgrid = TimeGrid::uniform(rmax * (1.0 + 1e-9), 2048).unwrap();
    let sampler = VolterraSampler::new(hurst, &rgrid, KernelScaling::Representation).unwrap();
    let drift = DriftField::Linear { rate: 1.0 };
    let n = 200;
    let gaps: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|seed| {
            let w = SampledFunction::new(rgrid.clone(), sampler.sample(&mut rng::stream(seed, tag::FBM, 0)).values).unwrap();
            let terminals: Vec<f64> = clocks
                .iter()
                .map(|r| {
                    let u = SamplePath::new(tgrid.clone(), 1, r.iter().map(|&v| w.interpolate(v)).collect()).unwrap();
                    solve_sde(&[0.5], &drift, &u, &SolverOptions::default()).unwrap().terminal()[0]
                })
                .collect();
            (0..epsilons.len()).map(|i| (terminals[i] - terminals[epsilons.len()]).abs()).collect()
        })
        .collect();
    let mean: Vec<Estimate> = (0..epsilons.len())
        .map(|i| Estimate::from_samples(&gaps.iter().map(|g| g[i]).collect::<Vec<_>>()))
        .collect();
    let mut pass = mean[epsilons.len() - 1].mean < mean[0].mean;
    for i in 1..epsilons.len() {
        let d: Vec<f64> = gaps.iter().map(|g| g[i] - g[i - 1]).collect();
        let e = Estimate::from_samples(&d);
        pass &= e.mean <= 2.0 * e.se;
    }
    Outcome {
        pass,
        detail: format!(
            "E|X^ε_T - X_T| = {}",
            mean.iter()
                .zip(epsilons)
                .map(|(m, e)| format!("{:.4e} (ε={e})", m.mean))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

type Criterion = (&'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("fBM covariance", 60.0, c1_covariance),
        ("kernel calculus", 30.0, c2_kernel),
        ("coupling", 120.0, c3_coupling),
        ("Girsanov", 300.0, c4_girsanov),
        ("log-Harnack", 600.0, c5_log_harnack),
        ("power-Harnack", 600.0, c6_power_harnack),
        ("gradient estimate", 300.0, c7_gradient),
        ("scaling exponents", 600.0, c8_exponents),
        ("inverse moments", 300.0, c9_inverse_moments),
        ("anisotropic", 600.0, c10_anisotropic),
        ("regularization", 120.0, c11_regularization),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let ok = out.pass && secs <= *budget;
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {} {name} [{secs:.1} s / {budget:.0} s]: {}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
