//! Nonlinear solver for Delta f = g - h e^{2f} on the truncated grid.
//!
//! The Laplacian is discretized in flux form in (u, t), u = sqrt(2 rho):
//!
//! ```text
//! Delta f = -(1/w) [ d_u(a d_u f) + d_t(c d_t f) ],
//! w = u/(rho+1)^2,  a = u/(rho+1),  c = (rho+1)/u.
//! ```
//!
//! The radial flux coefficient a vanishes at u = 0, so the coordinate pole
//! needs no special stencil, and the flux at the outer face is dropped
//! (homogeneous Neumann). Summing the discrete Laplacian against the cell
//! volumes telescopes to zero exactly, which is what preserves the vortex
//! degree under the complex gauge flow.
//!
//! Linear solves use conjugate gradients on the volume-weighted (symmetric
//! positive) form, preconditioned by the exact inverse of the same operator
//! with its zeroth-order coefficient replaced by its ring average: Fourier
//! transform in t, then one tridiagonal solve per mode.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::background::BackgroundData;
use crate::error::{Error, Result};
use crate::geometry::{DiscreteField, Grid};

/// Tunables of the nonlinear solver.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Sup-norm target for the nonlinear residual.
    pub residual_tol: f64,
    pub max_newton_iters: usize,
    /// Backtracking factor in (0, 1).
    pub damping: f64,
    /// Relative tolerance of the inner linear solves.
    pub linear_tol: f64,
    /// Attempt the monotone scheme when Newton stalls.
    pub monotone_fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            max_newton_iters: 50,
            damping: 0.5,
            linear_tol: 1e-12,
            monotone_fallback: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0 && self.linear_tol > 0.0) {
            return Err(Error::Domain("solver tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Domain(format!(
                "damping = {} must lie in (0, 1)",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Outcome of a nonlinear solve.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_sup: f64,
    pub final_residual_l2: f64,
    /// Discrete int Delta f dvol; vanishes to rounding by construction.
    pub integral_laplacian: f64,
    pub f: DiscreteField,
    /// Largest cellwise increase seen across monotone iterations, when the
    /// monotone scheme produced this report.
    pub monotone_max_increase: Option<f64>,
}

/// Residual evaluation Delta f - g + h e^{2f}.
#[derive(Debug)]
pub struct ResidualInfo {
    pub sup_norm: f64,
    pub l2_norm: f64,
    pub field: DiscreteField,
}

/// Flux-form discrete Laplacian on a grid.
pub struct Laplacian {
    grid: Arc<Grid>,
    /// a/du at radial faces 0..=n_rho; zero at both ends.
    a_face: Vec<f64>,
    /// c_i du / dt^2 for the angular second difference.
    c_theta: Vec<f64>,
    /// Radial cell volumes (per unit t).
    vol: Vec<f64>,
}

impl Laplacian {
    pub fn new(grid: Arc<Grid>) -> Self {
        let n = grid.n_rho;
        let du = grid.du;
        let mut a_face = vec![0.0; n + 1];
        for k in 1..n {
            let u = k as f64 * du;
            let rho = 0.5 * u * u;
            a_face[k] = u / (rho + 1.0) / du;
        }
        // outer face flux dropped: homogeneous Neumann
        let mut c_theta = vec![0.0; n];
        if grid.n_t > 1 {
            for i in 0..n {
                let u = grid.u_centers[i];
                let rho = grid.rho_centers[i];
                c_theta[i] = (rho + 1.0) / u * du / (grid.dt * grid.dt);
            }
        }
        let vol = grid.cell_vol.clone();
        Self {
            grid,
            a_face,
            c_theta,
            vol,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// out = Delta f (pointwise values).
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        self.apply_weighted(f, out);
        for i in 0..self.grid.n_rho {
            let inv = -1.0 / self.vol[i];
            for j in 0..self.grid.n_t {
                out[i * self.grid.n_t + j] *= inv;
            }
        }
    }

    /// out = d_u(a d_u f) + d_t(c d_t f) in divided form, i.e. -vol * Delta f.
    /// This is the symmetric (volume-weighted) kernel used by the linear solver.
    fn apply_weighted(&self, f: &[f64], out: &mut [f64]) {
        let n = self.grid.n_rho;
        let n_t = self.grid.n_t;
        for i in 0..n {
            let a_lo = self.a_face[i];
            let a_hi = self.a_face[i + 1];
            let c = self.c_theta[i];
            let row = i * n_t;
            for j in 0..n_t {
                let fc = f[row + j];
                let mut acc = 0.0;
                if a_lo != 0.0 {
                    acc += a_lo * (f[row - n_t + j] - fc);
                }
                if a_hi != 0.0 {
                    acc += a_hi * (f[row + n_t + j] - fc);
                }
                if n_t > 1 {
                    let jl = if j == 0 { n_t - 1 } else { j - 1 };
                    let jr = if j == n_t - 1 { 0 } else { j + 1 };
                    acc += c * (f[row + jl] - 2.0 * fc + f[row + jr]);
                }
                out[row + j] = acc;
            }
        }
    }

    /// Discrete int Delta f dvol (telescopes to rounding error).
    pub fn integral(&self, lap_f: &[f64]) -> f64 {
        let n_t = self.grid.n_t;
        let mut total = 0.0;
        for i in 0..self.grid.n_rho {
            let mut ring = 0.0;
            for j in 0..n_t {
                ring += lap_f[i * n_t + j];
            }
            total += ring * self.vol[i];
        }
        total * self.grid.dt
    }
}

/// Apply the positive Laplacian to a field.
pub fn apply_laplacian(f: &DiscreteField) -> DiscreteField {
    let lap = Laplacian::new(f.grid.clone());
    let mut out = vec![0.0; f.values.len()];
    lap.apply(&f.values, &mut out);
    DiscreteField {
        grid: f.grid.clone(),
        values: out,
    }
}

/// Linear solver for (Delta + V) x = b with V >= 0, via preconditioned CG on
/// the volume-weighted symmetric form.
pub struct LinearSolver {
    lap: Laplacian,
    fft_fwd: Option<std::sync::Arc<dyn rustfft::Fft<f64>>>,
    fft_inv: Option<std::sync::Arc<dyn rustfft::Fft<f64>>>,
    /// Angular eigenvalues mu_k = 2 - 2 cos(2 pi k / n_t).
    mu: Vec<f64>,
}

impl LinearSolver {
    pub fn new(grid: Arc<Grid>) -> Self {
        let n_t = grid.n_t;
        let (fft_fwd, fft_inv, mu) = if n_t > 1 {
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(n_t);
            let inv = planner.plan_fft_inverse(n_t);
            let mu = (0..n_t)
                .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n_t as f64).cos())
                .collect();
            (Some(fwd), Some(inv), mu)
        } else {
            (None, None, vec![0.0])
        };
        Self {
            lap: Laplacian::new(grid),
            fft_fwd,
            fft_inv,
            mu,
        }
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.lap
    }

    fn grid(&self) -> &Arc<Grid> {
        self.lap.grid()
    }

    /// Solve (Delta + diag(v)) x = b to relative tolerance rtol.
    /// x carries the initial guess on entry.
    pub fn solve(&self, v: &[f64], b: &[f64], x: &mut [f64], rtol: f64, max_iters: usize) -> usize {
        let grid = self.grid();
        let n = grid.len();
        let n_t = grid.n_t;

        // Symmetric system: A x = w b, with A = weighted-Laplacian + diag(w v).
        let mut wb = vec![0.0; n];
        let mut wv = vec![0.0; n];
        for i in 0..grid.n_rho {
            let w = self.lap.vol[i];
            for j in 0..n_t {
                let k = i * n_t + j;
                wb[k] = w * b[k];
                wv[k] = w * v[k];
            }
        }

        // Ring means of v for the preconditioner.
        let mut v_bar = vec![0.0; grid.n_rho];
        for i in 0..grid.n_rho {
            let mut s = 0.0;
            for j in 0..n_t {
                s += v[i * n_t + j];
            }
            v_bar[i] = s / n_t as f64;
        }
        let precond = TridiagPrecond::new(&self.lap, &v_bar, &self.mu);

        let matvec = |x: &[f64], out: &mut [f64]| {
            self.lap.apply_weighted(x, out);
            for k in 0..n {
                out[k] = -out[k] + wv[k] * x[k];
            }
        };

        let mut r = vec![0.0; n];
        matvec(x, &mut r);
        for k in 0..n {
            r[k] = wb[k] - r[k];
        }
        let b_norm = wb.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let target = rtol * b_norm;

        let mut z = vec![0.0; n];
        self.apply_precond(&precond, &r, &mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let mut iters = 0;
        for _ in 0..max_iters {
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= target {
                break;
            }
            matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break; // loss of positivity from rounding; bail with best iterate
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            self.apply_precond(&precond, &r, &mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            iters += 1;
        }
        iters
    }

    fn apply_precond(&self, pc: &TridiagPrecond, r: &[f64], z: &mut [f64]) {
        let grid = self.grid();
        let n_rho = grid.n_rho;
        let n_t = grid.n_t;
        if n_t == 1 {
            pc.solve_mode(0, r, z, 1, 0);
            return;
        }
        let fwd = self.fft_fwd.as_ref().unwrap();
        let inv = self.fft_inv.as_ref().unwrap();
        let mut buf: Vec<Complex64> = r.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        for i in 0..n_rho {
            fwd.process(&mut buf[i * n_t..(i + 1) * n_t]);
        }
        // one tridiagonal solve per angular mode
        let mut rhs = vec![Complex64::new(0.0, 0.0); n_rho];
        let mut sol = vec![Complex64::new(0.0, 0.0); n_rho];
        for k in 0..n_t {
            for i in 0..n_rho {
                rhs[i] = buf[i * n_t + k];
            }
            pc.solve_mode_complex(k, &rhs, &mut sol);
            for i in 0..n_rho {
                buf[i * n_t + k] = sol[i];
            }
        }
        for i in 0..n_rho {
            inv.process(&mut buf[i * n_t..(i + 1) * n_t]);
        }
        let scale = 1.0 / n_t as f64;
        for (zk, bk) in z.iter_mut().zip(&buf) {
            *zk = bk.re * scale;
        }
    }
}

/// Tridiagonal factorizations of the preconditioner, one per angular mode.
struct TridiagPrecond {
    /// diag[k][i], factored in place by Thomas elimination on demand.
    diag: Vec<Vec<f64>>,
    /// Sub/super-diagonal (mode independent): -a_{i+1}/du coupling i and i+1.
    off: Vec<f64>,
}

impl TridiagPrecond {
    fn new(lap: &Laplacian, v_bar: &[f64], mu: &[f64]) -> Self {
        let n = lap.grid.n_rho;
        let off: Vec<f64> = (0..n - 1).map(|i| -lap.a_face[i + 1]).collect();
        let mut diag = Vec::with_capacity(mu.len());
        for &m in mu {
            let mut d = Vec::with_capacity(n);
            for i in 0..n {
                let base = lap.a_face[i] + lap.a_face[i + 1] + lap.c_theta[i] * m
                    + lap.vol[i] * v_bar[i];
                d.push(base);
            }
            // forward elimination factors
            for i in 1..n {
                let w = off[i - 1] / d[i - 1];
                d[i] -= w * off[i - 1];
            }
            diag.push(d);
        }
        Self { diag, off }
    }

    fn solve_mode(&self, k: usize, rhs: &[f64], sol: &mut [f64], stride: usize, offset: usize) {
        let d = &self.diag[k];
        let n = d.len();
        let mut y = vec![0.0; n];
        y[0] = rhs[offset];
        for i in 1..n {
            let w = self.off[i - 1] / d[i - 1];
            y[i] = rhs[offset + i * stride] - w * y[i - 1];
        }
        sol[offset + (n - 1) * stride] = y[n - 1] / d[n - 1];
        for i in (0..n - 1).rev() {
            sol[offset + i * stride] =
                (y[i] - self.off[i] * sol[offset + (i + 1) * stride]) / d[i];
        }
    }

    fn solve_mode_complex(&self, k: usize, rhs: &[Complex64], sol: &mut [Complex64]) {
        let d = &self.diag[k];
        let n = d.len();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        y[0] = rhs[0];
        for i in 1..n {
            let w = self.off[i - 1] / d[i - 1];
            y[i] = rhs[i] - y[i - 1] * w;
        }
        sol[n - 1] = y[n - 1] / d[n - 1];
        for i in (0..n - 1).rev() {
            sol[i] = (y[i] - sol[i + 1] * self.off[i]) / d[i];
        }
    }
}

fn eval_residual(lap: &Laplacian, bg: &BackgroundData, f: &[f64], out: &mut [f64]) -> (f64, f64) {
    lap.apply(f, out);
    let grid = lap.grid();
    let mut sup = 0.0f64;
    let mut l2 = 0.0;
    for i in 0..grid.n_rho {
        let w = grid.cell_vol[i];
        for j in 0..grid.n_t {
            let k = i * grid.n_t + j;
            let r = out[k] - bg.g.values[k] + bg.h.values[k] * (2.0 * f[k]).exp();
            out[k] = r;
            sup = sup.max(r.abs());
            l2 += w * r * r;
        }
    }
    (sup, (l2 * grid.dt).sqrt())
}

/// Evaluate the nonlinear residual Delta f - g + h e^{2f}.
pub fn residual(bg: &BackgroundData, f: &DiscreteField) -> ResidualInfo {
    let lap = Laplacian::new(f.grid.clone());
    let mut out = vec![0.0; f.values.len()];
    let (sup, l2) = eval_residual(&lap, bg, &f.values, &mut out);
    ResidualInfo {
        sup_norm: sup,
        l2_norm: l2,
        field: DiscreteField {
            grid: f.grid.clone(),
            values: out,
        },
    }
}

fn check_bradlow(bg: &BackgroundData) -> Result<()> {
    let e = bg.source.energy();
    if e >= 2.0 || e <= 0.0 {
        return Err(Error::BradlowViolated { energy: e });
    }
    Ok(())
}

fn make_report(
    lap: &Laplacian,
    bg: &BackgroundData,
    f: Vec<f64>,
    converged: bool,
    iterations: usize,
) -> SolverReport {
    let mut buf = vec![0.0; f.len()];
    let (sup, l2) = eval_residual(lap, bg, &f, &mut buf);
    lap.apply(&f, &mut buf);
    let integral = lap.integral(&buf);
    SolverReport {
        converged,
        iterations,
        final_residual_sup: sup,
        final_residual_l2: l2,
        integral_laplacian: integral,
        f: DiscreteField {
            grid: lap.grid().clone(),
            values: f,
        },
        monotone_max_increase: None,
    }
}

/// Damped Newton iteration for the Kazdan-Warner equation.
///
/// Falls back to the monotone scheme from a constant supersolution when
/// Newton stalls and the configuration allows it.
pub fn newton_solve(
    bg: &BackgroundData,
    cfg: &SolverConfig,
    init: Option<&DiscreteField>,
) -> Result<SolverReport> {
    cfg.validate()?;
    check_bradlow(bg)?;
    let grid = bg.grid.clone();
    let solver = LinearSolver::new(grid.clone());
    let lap = solver.laplacian();
    let n = grid.len();

    let mut f = match init {
        Some(f0) => {
            if f0.values.len() != n {
                return Err(Error::InvalidGrid(
                    "initial field lives on a different grid".into(),
                ));
            }
            f0.values.clone()
        }
        None => vec![0.0; n],
    };

    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut v = vec![0.0; n];

    let (mut sup, _) = eval_residual(lap, bg, &f, &mut res);
    let mut accepted = 0usize;
    let mut stalled = false;
    while sup > cfg.residual_tol {
        if accepted >= cfg.max_newton_iters {
            break;
        }
        for k in 0..n {
            v[k] = 2.0 * bg.h.values[k] * (2.0 * f[k]).exp();
        }
        let mut b = vec![0.0; n];
        for k in 0..n {
            b[k] = -res[k];
        }
        delta.iter_mut().for_each(|d| *d = 0.0);
        solver.solve(&v, &b, &mut delta, cfg.linear_tol, 20_000);

        // backtracking on the residual sup-norm
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            for k in 0..n {
                trial[k] = f[k] + step * delta[k];
            }
            let (trial_sup, _) = eval_residual(lap, bg, &trial, &mut trial_res);
            if trial_sup < sup {
                f.copy_from_slice(&trial);
                res.copy_from_slice(&trial_res);
                sup = trial_sup;
                improved = true;
                break;
            }
            step *= cfg.damping;
        }
        accepted += 1;
        if !improved {
            stalled = true;
            break;
        }
    }

    if sup <= cfg.residual_tol {
        return Ok(make_report(lap, bg, f, true, accepted));
    }
    if stalled && cfg.monotone_fallback {
        if let Ok(f_super) = constant_supersolution(bg) {
            if let Ok(rep) = monotone_solve(bg, cfg, &f_super) {
                if rep.converged {
                    return Ok(rep);
                }
            }
        }
    }
    Ok(make_report(lap, bg, f, false, accepted))
}

/// A constant discrete supersolution, when one exists: C with
/// g - h e^{2C} <= 0 at every cell.
pub fn constant_supersolution(bg: &BackgroundData) -> Result<DiscreteField> {
    let mut c: f64 = 0.0;
    for k in 0..bg.grid.len() {
        let g = bg.g.values[k];
        let h = bg.h.values[k];
        if g > 0.0 {
            if h <= 0.0 {
                return Err(Error::NotSupersolution { violation: g });
            }
            c = c.max(0.5 * (g / h).ln());
        }
    }
    Ok(DiscreteField::constant(bg.grid.clone(), c + 0.5))
}

/// Monotone (sub/supersolution) iteration:
/// (Delta + V_k) f_{k+1} = g - h e^{2 f_k} + V_k f_k with the pointwise
/// coefficient V_k = 2 h e^{2 f_k}, starting from a discrete supersolution.
/// Since h e^{2f} is convex in f and V_k dominates its slope below f_k, the
/// sequence is cellwise non-increasing and stays above the solution.
pub fn monotone_solve(
    bg: &BackgroundData,
    cfg: &SolverConfig,
    f_super: &DiscreteField,
) -> Result<SolverReport> {
    cfg.validate()?;
    check_bradlow(bg)?;
    let grid = bg.grid.clone();
    if f_super.values.len() != grid.len() {
        return Err(Error::InvalidGrid(
            "supersolution lives on a different grid".into(),
        ));
    }
    let solver = LinearSolver::new(grid.clone());
    let lap = solver.laplacian();
    let n = grid.len();

    // supersolution check: Delta f - g + h e^{2f} >= 0 cellwise
    let info = residual(bg, f_super);
    let worst = info
        .field
        .values
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v));
    if worst < -1e-9 {
        return Err(Error::NotSupersolution { violation: worst });
    }

    let mut f = f_super.values.clone();
    let mut res = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut next = f.clone();
    let mut max_increase = f64::NEG_INFINITY;
    let (mut sup, _) = eval_residual(lap, bg, &f, &mut res);
    let mut iters = 0usize;
    let max_outer = 10_000;
    while sup > cfg.residual_tol && iters < max_outer {
        for k in 0..n {
            let he2f = bg.h.values[k] * (2.0 * f[k]).exp();
            v[k] = 2.0 * he2f;
            rhs[k] = bg.g.values[k] - he2f + v[k] * f[k];
        }
        next.copy_from_slice(&f);
        solver.solve(&v, &rhs, &mut next, cfg.linear_tol, 20_000);
        for k in 0..n {
            max_increase = max_increase.max(next[k] - f[k]);
        }
        f.copy_from_slice(&next);
        let (s, _) = eval_residual(lap, bg, &f, &mut res);
        sup = s;
        iters += 1;
    }
    let mut rep = make_report(lap, bg, f, sup <= cfg.residual_tol, iters);
    rep.monotone_max_increase = Some(if max_increase == f64::NEG_INFINITY {
        0.0
    } else {
        max_increase
    });
    Ok(rep)
}

/// Solve a path of backgrounds, warm-starting each solve from the previous f.
pub fn continuation_solve(
    backgrounds: &[BackgroundData],
    cfg: &SolverConfig,
) -> Result<Vec<SolverReport>> {
    let mut reports = Vec::with_capacity(backgrounds.len());
    let mut prev: Option<DiscreteField> = None;
    for (index, bg) in backgrounds.iter().enumerate() {
        let rep = newton_solve(bg, cfg, prev.as_ref()).map_err(|e| Error::Continuation {
            index,
            source: Box::new(e),
        })?;
        if !rep.converged {
            return Err(Error::Continuation {
                index,
                source: Box::new(Error::NotConverged {
                    iterations: rep.iterations,
                    residual_sup: rep.final_residual_sup,
                }),
            });
        }
        prev = Some(rep.f.clone());
        reports.push(rep);
    }
    Ok(reports)
}

/// Manufactured smooth field with a closed-form Laplacian, used to measure
/// the discretization order of the stencil.
pub mod manufactured {
    /// f = e^{-rho} + (1/20) sqrt(2 rho) cos t e^{-rho}; smooth across the
    /// pole and Neumann-compatible at large rho.
    pub fn field(rho: f64, t: f64) -> f64 {
        (-rho).exp() * (1.0 + 0.05 * (2.0 * rho).sqrt() * t.cos())
    }

    /// The positive Laplacian of `field`, evaluated analytically.
    pub fn laplacian(rho: f64, t: f64) -> f64 {
        let e = (-rho).exp();
        // radial piece e^{-rho}
        let radial = 2.0 * e * (1.0 - rho * (rho + 1.0));
        if rho == 0.0 {
            // the angular piece vanishes at the pole in the limit
            return radial;
        }
        let s = (2.0 * rho).sqrt();
        let rp1 = rho + 1.0;
        let a = s * e;
        let a1 = e * (1.0 - 2.0 * rho) / s;
        let a2 = e * (s - 2.0 / s - 1.0 / (s * s * s));
        let angular = t.cos()
            * ((rp1 * rp1 * rp1 / (2.0 * rho)) * a - 2.0 * rho * rp1 * a2 - 2.0 * a1);
        radial + 0.05 * angular
    }
}
