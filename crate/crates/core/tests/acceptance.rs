//! Acceptance suite: the quantitative claims the construction exposes, each
//! checked at the reference resolution and reported as one PASS/FAIL line.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_complex::Complex64;

use esvortex::background::{kw_data, Family, ModuliPoint};
use esvortex::config::SweepSpec;
use esvortex::geometry::{chart_z, DiscreteField, Grid, SigmaPoint};
use esvortex::instanton::{reducible_energy, reducible_saturation_energy};
use esvortex::moduli::uhlenbeck_limit_probe;
use esvortex::run::{report_for, SolveReportJson};
use esvortex::solver::{
    constant_supersolution, manufactured, monotone_solve, newton_solve, SolverConfig,
};

const N_RHO: usize = 512;
const N_T: usize = 32;
const RHO_MAX: f64 = 40.0;
const DECAY_WINDOW: (f64, f64) = (20.0, 36.0);

/// Write the verdict line to the real stdout so it survives libtest capture.
fn announce(criterion: &str, passed: bool, detail: &str) {
    use std::io::Write;
    use std::os::unix::io::FromRawFd;
    let mut out = unsafe { std::fs::File::from_raw_fd(1) };
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{verdict} {criterion}: {detail}");
    std::mem::forget(out); // fd 1 stays open for libtest
}

fn grid() -> Arc<Grid> {
    Grid::new(N_RHO, N_T, RHO_MAX).unwrap()
}

fn solve_report(point: &ModuliPoint, grid: Arc<Grid>) -> SolveReportJson {
    let cfg = SolverConfig::default();
    let bg = kw_data(point, grid).unwrap();
    let rep = newton_solve(&bg, &cfg, None).unwrap();
    assert!(rep.converged, "solve for E={} did not converge", point.energy);
    let (report, _) = report_for(&bg, &rep, &cfg, 1.0, Some(DECAY_WINDOW)).unwrap();
    report
}

/// The reference sweep, solved once and shared by several criteria.
fn sweep() -> &'static Vec<(ModuliPoint, SolveReportJson)> {
    static SWEEP: OnceLock<Vec<(ModuliPoint, SolveReportJson)>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        use rayon::prelude::*;
        let grid = grid();
        SweepSpec::standard()
            .points()
            .into_par_iter()
            .map(|p| {
                let report = solve_report(&p, grid.clone());
                (p, report)
            })
            .collect()
    })
}

#[test]
fn criterion_01_charap_duff_oracle() {
    let started = Instant::now();
    let point = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
    let cfg = SolverConfig::default();
    let bg = kw_data(&point, grid()).unwrap();
    let rep = newton_solve(&bg, &cfg, None).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let f_dev = rep
        .f
        .values
        .iter()
        .map(|v| (v - std::f64::consts::LN_2).abs())
        .fold(0.0f64, f64::max);
    let ok = rep.converged
        && f_dev <= 1e-6
        && rep.final_residual_sup <= 1e-10
        && elapsed <= 60.0;
    announce(
        "criterion 01 charap-duff oracle",
        ok,
        &format!(
            "sup|f - ln 2| = {f_dev:.3e}, residual = {:.3e}, {elapsed:.1} s",
            rep.final_residual_sup
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_energy_equals_degree_equals_e() {
    let mut worst_energy = 0.0f64;
    let mut worst_degree = 0.0f64;
    for (p, r) in sweep() {
        worst_energy = worst_energy.max((r.ym_energy - p.energy).abs());
        worst_degree = worst_degree.max((r.degree - p.energy).abs());
    }
    let ok = worst_energy <= 1e-3 && worst_degree <= 1e-4;
    announce(
        "criterion 02 energy = degree = E",
        ok,
        &format!("max |ym_energy - E| = {worst_energy:.3e}, max |degree - E| = {worst_degree:.3e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_energy_window_and_bradlow_rejection() {
    let in_window = sweep()
        .iter()
        .all(|(_, r)| r.ym_energy > 0.0 && r.ym_energy < 2.0);
    let rejected = match ModuliPoint::divisor_free(2.0).validate() {
        Err(e) => e.to_string().contains("Bradlow"),
        Ok(()) => false,
    };
    let ok = in_window && rejected;
    announce(
        "criterion 03 energy window (0, 2)",
        ok,
        &format!("all sweep energies in window: {in_window}, E = 2 rejected citing Bradlow: {rejected}"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_decay_exponents() {
    let mut worst = 0.0f64;
    for (p, r) in sweep() {
        let cubic = matches!(p.family, Family::DivisorAt(_)) && (p.energy - 1.0).abs() < 1e-12;
        let expect = if cubic { -3.0 } else { -2.0 };
        worst = worst.max((r.decay_exponent - expect).abs());
    }
    let ok = worst <= 0.1;
    announce(
        "criterion 04 decay exponents -3 / -2",
        ok,
        &format!("max deviation from expected exponent = {worst:.3}"),
    );
    assert!(ok);
}

#[test]
fn criterion_05_degree_preservation() {
    let worst = sweep()
        .iter()
        .map(|(_, r)| r.integral_laplacian.abs())
        .fold(0.0f64, f64::max);
    let ok = worst <= 1e-6 * 2.0 * std::f64::consts::PI;
    announce(
        "criterion 05 degree preservation",
        ok,
        &format!("max |integral of Delta f| = {worst:.3e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_06_taubes_bound() {
    let g = grid();
    let bound = 4.0 + 10.0 * g.du * g.du;
    let worst = sweep()
        .iter()
        .map(|(_, r)| r.taubes_max)
        .fold(0.0f64, f64::max);
    let ok = worst <= bound;
    announce(
        "criterion 06 taubes bound",
        ok,
        &format!("max phi_sq = {worst:.6} vs bound {bound:.6}"),
    );
    assert!(ok);
}

#[test]
fn criterion_07_solver_cross_check() {
    let grid = Grid::new(256, 16, RHO_MAX).unwrap();
    let cfg = SolverConfig::default();
    let points = [
        ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0),
        ModuliPoint::divisor_free(0.5),
    ];
    let mut worst = 0.0f64;
    for point in &points {
        let bg = kw_data(point, grid.clone()).unwrap();
        let from_zero = newton_solve(&bg, &cfg, None).unwrap();
        let ones = DiscreteField::constant(grid.clone(), 1.0);
        let from_one = newton_solve(&bg, &cfg, Some(&ones)).unwrap();
        let f_super = constant_supersolution(&bg).unwrap();
        let monotone = monotone_solve(&bg, &cfg, &f_super).unwrap();
        assert!(from_zero.converged && from_one.converged && monotone.converged);
        for k in 0..grid.len() {
            worst = worst.max((from_zero.f.values[k] - from_one.f.values[k]).abs());
            worst = worst.max((from_zero.f.values[k] - monotone.f.values[k]).abs());
        }
    }
    let ok = worst <= 1e-8;
    announce(
        "criterion 07 uniqueness across solvers",
        ok,
        &format!("max cellwise disagreement = {worst:.3e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_08_weitzenbock_identity() {
    let worst = sweep()
        .iter()
        .map(|(_, r)| r.weitzenbock_residual)
        .fold(0.0f64, f64::max);
    let ok = worst <= 1e-6;
    announce(
        "criterion 08 weitzenbock identity",
        ok,
        &format!("max interior sup residual = {worst:.3e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_09_truncation_insensitivity() {
    // Axisymmetric representative solved on the reference cutoff and on a
    // doubled domain with matching radial resolution per unit u. The huge
    // dynamic range of h at rho_max = 80 stalls the residual slightly above
    // the default tolerance, which is far tighter than the 1e-5 comparison.
    let mut cfg = SolverConfig::default();
    cfg.residual_tol = 1e-9;
    let point = ModuliPoint::divisor_free(0.75);
    let grid_40 = Grid::new(N_RHO, 1, RHO_MAX).unwrap();
    let grid_80 = Grid::new(724, 1, 2.0 * RHO_MAX).unwrap();
    let solve = |g: &Arc<Grid>| {
        let bg = kw_data(&point, g.clone()).unwrap();
        let rep = newton_solve(&bg, &cfg, None).unwrap();
        assert!(rep.converged);
        let (report, _) = report_for(&bg, &rep, &cfg, 1.0, Some(DECAY_WINDOW)).unwrap();
        // the physical conformal factor is the solver unknown plus the lift
        let mut f = rep.f.clone();
        for (v, l) in f.values.iter_mut().zip(&bg.lift.values) {
            *v += l;
        }
        (report, f)
    };
    let (rep_40, f_40) = solve(&grid_40);
    let (rep_80, f_80) = solve(&grid_80);
    let d_energy = (rep_80.ym_energy - rep_40.ym_energy).abs();
    let d_degree = (rep_80.degree - rep_40.degree).abs();

    // compare f on rho <= 20 by quadratic interpolation of the wide solution
    // at the narrow grid's cell centers
    let mut d_f = 0.0f64;
    for (i, &rho) in grid_40.rho_centers.iter().enumerate() {
        if rho > 20.0 {
            break;
        }
        let u = grid_40.u_centers[i];
        let k = ((u / grid_80.du - 0.5).round() as usize).clamp(1, grid_80.n_rho - 2);
        let (um, u0, up) = (
            grid_80.u_centers[k - 1],
            grid_80.u_centers[k],
            grid_80.u_centers[k + 1],
        );
        let (fm, f0, fp) = (
            f_80.values[k - 1],
            f_80.values[k],
            f_80.values[k + 1],
        );
        let interp = fm * (u - u0) * (u - up) / ((um - u0) * (um - up))
            + f0 * (u - um) * (u - up) / ((u0 - um) * (u0 - up))
            + fp * (u - um) * (u - u0) / ((up - um) * (up - u0));
        d_f = d_f.max((interp - f_40.values[i]).abs());
    }
    let ok = d_energy <= 1e-5 && d_degree <= 1e-5 && d_f <= 1e-5;
    announce(
        "criterion 09 truncation insensitivity",
        ok,
        &format!("|dE| = {d_energy:.3e}, |d deg| = {d_degree:.3e}, sup|df| on rho<=20 = {d_f:.3e}"),
    );
    assert!(ok);
}

/// Radius rho with |chart_z(rho, t)| = r, found by bisection.
fn rho_of_chart_radius(r: f64) -> f64 {
    let chart_r = |rho: f64| rho.sqrt() * (0.5 * rho).exp();
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chart_r(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_10_moduli_behavior() {
    let g = grid();
    // divisor recovery within one cell of z0
    let mut divisor_ok = true;
    let mut worst_cells = 0.0f64;
    for (p, r) in sweep() {
        let z0 = match p.family {
            Family::DivisorAt(z0) => z0,
            Family::DivisorFree => {
                divisor_ok &= r.divisor_at_infinity;
                continue;
            }
        };
        let est = match r.divisor_estimate {
            Some([re, im]) => Complex64::new(re, im),
            None => {
                divisor_ok = false;
                continue;
            }
        };
        // one-cell extent in the chart at the divisor's radius
        let rho0 = rho_of_chart_radius(z0.norm().max(1e-12));
        let u0 = (2.0 * rho0).sqrt();
        let rho_next = 0.5 * (u0 + g.du) * (u0 + g.du);
        let radial = chart_z(SigmaPoint::new(rho_next, 0.0).unwrap()).norm()
            - chart_z(SigmaPoint::new(rho0, 0.0).unwrap()).norm();
        let cell = radial + z0.norm() * g.dt;
        let miss = (est - z0).norm();
        worst_cells = worst_cells.max(miss / cell.max(g.du));
        divisor_ok &= miss <= cell.max(g.du);
    }
    // staticity: exactly z0 = 0 and the divisor-free family
    let static_ok = sweep().iter().all(|(p, r)| {
        let expect = match p.family {
            Family::DivisorFree => true,
            Family::DivisorAt(z0) => z0.norm() == 0.0,
        };
        r.is_static == expect
    });
    // Uhlenbeck ladder strictly decreasing
    let ladder: Vec<Complex64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|x| Complex64::new(*x, 0.0))
        .collect();
    let grid_l = Grid::new(256, 16, RHO_MAX).unwrap();
    let dists =
        uhlenbeck_limit_probe(1.0, &ladder, grid_l, &SolverConfig::default(), 3.0).unwrap();
    let ladder_ok = dists.windows(2).all(|w| w[1] < w[0]);
    let ok = divisor_ok && static_ok && ladder_ok;
    announce(
        "criterion 10 moduli behavior",
        ok,
        &format!(
            "divisor within one cell: {divisor_ok} (worst {worst_cells:.2} cells), \
             staticity exact: {static_ok}, ladder decreasing: {ladder_ok}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_11_reducible_references() {
    let table_ok = (0..=5).all(|n| reducible_energy(n) == 2.0 * f64::from(n * n));
    let saturation = reducible_saturation_energy(&grid());
    let sat_ok = (saturation - 8.0).abs() <= 1e-12;
    let ok = table_ok && sat_ok;
    announce(
        "criterion 11 reducible references",
        ok,
        &format!("2n^2 table: {table_ok}, saturation energy = {saturation}"),
    );
    assert!(ok);
}

#[test]
fn criterion_12_grid_convergence() {
    // Residual of the injected exact solution under simultaneous radial and
    // angular refinement.
    let mut sups = Vec::new();
    for (n_rho, n_t) in [(128, 8), (256, 16), (512, 32)] {
        let g = Grid::new(n_rho, n_t, RHO_MAX).unwrap();
        let f = DiscreteField::from_fn(g.clone(), manufactured::field);
        // with the source manufactured from the exact Laplacian, the residual
        // of the injected solution is the discretization error of the
        // operator, measured in the volume-weighted L2 norm of the scheme
        let lap = esvortex::solver::apply_laplacian(&f);
        let mut l2 = 0.0;
        for i in 0..g.n_rho {
            for j in 0..g.n_t {
                let (rho, t) = (g.rho_centers[i], g.t_center(j));
                let d = lap.at(i, j) - manufactured::laplacian(rho, t);
                l2 += d * d * g.cell_vol[i];
            }
        }
        sups.push((l2 * g.dt).sqrt());
    }
    let order_a = (sups[0] / sups[1]).log2();
    let order_b = (sups[1] / sups[2]).log2();
    let ok = (order_a - 2.0).abs() <= 0.2 && (order_b - 2.0).abs() <= 0.2;
    announce(
        "criterion 12 grid convergence",
        ok,
        &format!("observed orders {order_a:.2}, {order_b:.2}"),
    );
    assert!(ok);
}
