//! Vortex observables assembled from a converged Kazdan-Warner solution.
//!
//! With f solving Delta f = g - h e^{2f}, the gauge-invariant data of the
//! tau = 4 vortex are
//!
//! ```text
//! |Phi|^2     = 2 h e^{2f}
//! i Lambda F  = bg_curvature + Delta f
//! |grad Phi|^2 = (i Lambda F)|Phi|^2 - 1/2 Delta |Phi|^2
//! ```
//!
//! so the first vortex equation reads 2 curv = 4 - |Phi|^2 and maps linearly
//! to the Kazdan-Warner residual. The gradient term comes from the
//! Weitzenboeck identity rather than covariant differencing; a direct
//! covariant-difference evaluation is kept for cross-checks.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::background::{
    curvature_tail_integral, BackgroundData, BackgroundSource, Family, ModuliPoint,
};
use crate::error::{Error, Result};
use crate::geometry::{integrate, DiscreteField, Grid, Tail};
use crate::solver::{apply_laplacian, SolverReport};

/// Gauge-invariant fields of a solved vortex.
#[derive(Debug, Clone)]
pub struct VortexField {
    pub source: BackgroundSource,
    pub grid: Arc<Grid>,
    /// The complex-gauge factor.
    pub f: DiscreteField,
    /// |Phi|^2 in the solved Hermitian metric.
    pub phi_sq: DiscreteField,
    /// i Lambda F of the solved connection.
    pub curv: DiscreteField,
    /// |grad Phi|^2 via the Weitzenboeck identity.
    pub grad_phi_sq: DiscreteField,
}

impl VortexField {
    /// The moduli point behind this vortex, when it came from one.
    pub fn point(&self) -> Option<ModuliPoint> {
        match self.source {
            BackgroundSource::Point(p) => Some(p),
            BackgroundSource::UhlenbeckLimit { .. } => None,
        }
    }

    pub fn energy_parameter(&self) -> f64 {
        self.source.energy()
    }
}

/// Assemble the vortex fields from a background and a converged solve.
pub fn build_vortex(bg: &BackgroundData, report: &SolverReport) -> Result<VortexField> {
    if !report.converged {
        return Err(Error::NotConvergedReport);
    }
    if report.f.values.len() != bg.grid.len() {
        return Err(Error::InvalidGrid(
            "solver report lives on a different grid than the background".into(),
        ));
    }
    let grid = bg.grid.clone();
    let f = report.f.clone();
    let phi_sq = DiscreteField {
        grid: grid.clone(),
        values: (0..grid.len())
            .map(|k| 2.0 * bg.h.values[k] * (2.0 * f.values[k]).exp())
            .collect(),
    };
    let lap_f = apply_laplacian(&f);
    let curv = DiscreteField {
        grid: grid.clone(),
        values: (0..grid.len())
            .map(|k| bg.bg_curvature.values[k] + lap_f.values[k])
            .collect(),
    };
    let lap_phi = apply_laplacian(&phi_sq);
    let grad_phi_sq = DiscreteField {
        grid: grid.clone(),
        values: (0..grid.len())
            .map(|k| curv.values[k] * phi_sq.values[k] - 0.5 * lap_phi.values[k])
            .collect(),
    };
    Ok(VortexField {
        source: bg.source,
        grid,
        f,
        phi_sq,
        curv,
        grad_phi_sq,
    })
}

/// Sup-norm of the first vortex equation: |2 curv - (4 - phi_sq)|.
pub fn vortex_residual(v: &VortexField) -> f64 {
    v.curv
        .values
        .iter()
        .zip(&v.phi_sq.values)
        .fold(0.0f64, |m, (c, p)| m.max((2.0 * c - (4.0 - p)).abs()))
}

/// Degree (1/2 pi) int i Lambda F dvol, with the exact tail of the background
/// curvature; the Delta f part integrates to zero on the truncated grid.
pub fn degree(v: &VortexField) -> f64 {
    let tail = curvature_tail_integral(&v.source, &v.grid);
    integrate(&v.curv, Tail::Exact(tail)) / (2.0 * PI)
}

/// The Yang-Mills-Higgs integrand curv^2 + |grad Phi|^2 + 1/4 (4 - phi_sq)^2.
pub fn ymh_integrand(v: &VortexField) -> DiscreteField {
    DiscreteField {
        grid: v.grid.clone(),
        values: (0..v.grid.len())
            .map(|k| {
                let c = v.curv.values[k];
                let p = v.phi_sq.values[k];
                let s = 4.0 - p;
                c * c + v.grad_phi_sq.values[k] + 0.25 * s * s
            })
            .collect(),
    }
}

/// Yang-Mills-Higgs energy (1/2 pi) int (curv^2 + |grad Phi|^2
/// + 1/4 (4 - phi_sq)^2) dvol; equals 4 deg at any solution of the vortex
/// equations.
///
/// Tail closure: at a solution the integrand collapses to 8 - 2 phi_sq
/// - 1/2 Delta phi_sq, and the conservative Laplacian integrates to zero on
/// the grid, so the grid part equals four times the grid part of the degree.
/// The matching truncation correction is therefore four times the exact
/// curvature tail; this also cancels the distortion the zero-flux boundary
/// condition induces in the grid part.
pub fn ymh_energy(v: &VortexField) -> f64 {
    let tail = 4.0 * curvature_tail_integral(&v.source, &v.grid);
    integrate(&ymh_integrand(v), Tail::Exact(tail)) / (2.0 * PI)
}

/// Cell maximum of phi_sq; bounded by tau = 4 up to discretization slack.
pub fn taubes_check(v: &VortexField) -> f64 {
    v.phi_sq.values.iter().fold(f64::NEG_INFINITY, |m, p| m.max(*p))
}

/// Interior sup-norm of Delta phi_sq - (4 - phi_sq) phi_sq + 2 |grad Phi|^2.
/// Vanishes identically at solutions of the vortex equations.
pub fn weitzenbock_residual(v: &VortexField) -> f64 {
    let lap_phi = apply_laplacian(&v.phi_sq);
    let grid = &v.grid;
    let interior_end = grid.n_rho.saturating_sub(2);
    let mut sup = 0.0f64;
    for i in 0..interior_end {
        for j in 0..grid.n_t {
            let k = grid.idx(i, j);
            let p = v.phi_sq.values[k];
            let r = lap_phi.values[k] - (4.0 - p) * p + 2.0 * v.grad_phi_sq.values[k];
            sup = sup.max(r.abs());
        }
    }
    sup
}

/// Direct covariant-difference evaluation of |grad Phi|^2, for cross-checking
/// the Weitzenboeck route. Uses the Chern connection of the solved metric in
/// the global chart: with weight w = e^{2f - alpha} and conformal factor
/// lambda^2 = 2 (rho+1)^{-3} e^{-rho},
///
/// ```text
/// |grad Phi|^2 = (2 / lambda^2) w |Phi_0' + (d_z ln w) Phi_0|^2.
/// ```
///
/// Derivatives of f are central differences, so this carries O(h^2) error on
/// smooth solutions; it exists to validate conventions, not for production.
pub fn covariant_grad_phi_sq(bg: &BackgroundData, v: &VortexField) -> DiscreteField {
    let grid = &v.grid;
    let n_t = grid.n_t;
    let mut out = vec![0.0; grid.len()];
    for i in 1..grid.n_rho - 1 {
        let rho = grid.rho_centers[i];
        let u = grid.u_centers[i];
        for j in 0..n_t {
            let t = grid.t_center(j);
            let k = grid.idx(i, j);
            // central differences of f in (u, t)
            let f_u = (v.f.at(i + 1, j) - v.f.at(i - 1, j)) / (2.0 * grid.du);
            let f_rho = f_u / u;
            let f_t = if n_t > 1 {
                let jl = if j == 0 { n_t - 1 } else { j - 1 };
                let jr = if j == n_t - 1 { 0 } else { j + 1 };
                (v.f.values[grid.idx(i, jr)] - v.f.values[grid.idx(i, jl)]) / (2.0 * grid.dt)
            } else {
                0.0
            };
            let z = crate::geometry::chart_z(
                crate::geometry::SigmaPoint::new(rho, t).expect("grid point"),
            );
            let rho_z = rho / ((rho + 1.0) * z);
            let t_z = Complex64::new(0.0, 0.5) / z;
            let f_z = rho_z * f_rho + t_z * f_t;
            // alpha depends on rho only
            let alpha_rho = match v.source {
                BackgroundSource::Point(ModuliPoint {
                    family: Family::DivisorFree,
                    energy,
                }) => energy,
                BackgroundSource::Point(ModuliPoint {
                    family: Family::DivisorAt(_),
                    energy,
                })
                | BackgroundSource::UhlenbeckLimit { energy } => energy + 1.0 / (rho + 1.0),
            };
            let alpha_z = rho_z * alpha_rho;
            let dlog_w = 2.0 * f_z - alpha_z;
            let (phi0, phi0_prime) = match v.source {
                BackgroundSource::Point(ModuliPoint {
                    family: Family::DivisorAt(z0),
                    ..
                }) => (z - z0, Complex64::new(1.0, 0.0)),
                _ => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            };
            let w = (2.0 * v.f.values[k] - bg.alpha.values[k]).exp();
            let lambda_sq = 2.0 / ((rho + 1.0).powi(3) * rho.exp());
            out[k] = (2.0 / lambda_sq) * w * (phi0_prime + dlog_w * phi0).norm_sqr();
        }
    }
    DiscreteField {
        grid: grid.clone(),
        values: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::kw_data;
    use crate::solver::{newton_solve, SolverConfig};

    fn solve(point: &ModuliPoint, n_rho: usize, n_t: usize) -> (BackgroundData, VortexField) {
        let grid = Grid::new(n_rho, n_t, 40.0).unwrap();
        let bg = kw_data(point, grid).unwrap();
        let rep = newton_solve(&bg, &SolverConfig::default(), None).unwrap();
        assert!(rep.converged, "residual {}", rep.final_residual_sup);
        let v = build_vortex(&bg, &rep).unwrap();
        (bg, v)
    }

    #[test]
    fn charap_duff_closed_forms() {
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let (_, v) = solve(&p, 256, 8);
        let g = &v.grid;
        // skip the outermost rings: one-sided stencil error at the truncation
        for i in 0..g.n_rho - 2 {
            let rho = g.rho_centers[i];
            let phi = 4.0 * rho / (rho + 1.0);
            let curv = 2.0 / (rho + 1.0);
            let grad = 4.0 / ((rho + 1.0) * (rho + 1.0));
            assert!((v.phi_sq.at(i, 0) - phi).abs() < 1e-6, "phi at rho={rho}");
            assert!((v.curv.at(i, 0) - curv).abs() < 1e-5, "curv at rho={rho}");
            let grad_tol = 8.0 * g.du * g.du;
            assert!(
                (v.grad_phi_sq.at(i, 0) - grad).abs() < grad_tol,
                "grad at rho={rho}"
            );
        }
    }

    #[test]
    fn charap_duff_scalars() {
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let (_, v) = solve(&p, 512, 8);
        assert!(vortex_residual(&v) < 1e-8);
        assert!((degree(&v) - 1.0).abs() < 1e-4, "degree {}", degree(&v));
        assert!((ymh_energy(&v) - 4.0).abs() < 1e-3, "ymh {}", ymh_energy(&v));
        let max = taubes_check(&v);
        assert!(max < 4.0, "taubes max {max}");
        assert!(weitzenbock_residual(&v) < 1e-6);
    }

    #[test]
    fn divisor_free_asymptotics() {
        let p = ModuliPoint::divisor_free(0.5);
        let (_, v) = solve(&p, 256, 8);
        let g = &v.grid;
        let last = g.n_rho - 3;
        assert!(v.phi_sq.at(last, 0) < 1e-3, "phi at rho_max {}", v.phi_sq.at(last, 0));
        assert!((v.curv.at(last, 0) - 2.0).abs() < 1e-2);
        assert!((degree(&v) - 0.5).abs() < 1e-4);
        assert!((ymh_energy(&v) - 2.0).abs() < 1e-3, "ymh {}", ymh_energy(&v));
    }

    #[test]
    fn off_center_divisor() {
        let p = ModuliPoint::divisor_at(Complex64::new(2.0, 0.0), 1.5);
        let (_, v) = solve(&p, 256, 16);
        assert!(vortex_residual(&v) < 1e-8);
        assert!((degree(&v) - 1.5).abs() < 1e-4);
        assert!((ymh_energy(&v) - 6.0).abs() < 4e-3, "ymh {}", ymh_energy(&v));
        assert!(taubes_check(&v) <= 4.0 + 10.0 * v.grid.du * v.grid.du);
        assert!(weitzenbock_residual(&v) < 1e-6);
    }

    #[test]
    fn broken_input_detected() {
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let grid = Grid::new(128, 8, 40.0).unwrap();
        let bg = kw_data(&p, grid).unwrap();
        let mut rep = newton_solve(&bg, &SolverConfig::default(), None).unwrap();
        for v in rep.f.values.iter_mut() {
            *v += 0.1;
        }
        let v = build_vortex(&bg, &rep).unwrap();
        assert!(vortex_residual(&v) > 0.1);
        let mut rand_state = 88172645463325252u64;
        let mut garbage = rep.f.clone();
        for v in garbage.values.iter_mut() {
            rand_state ^= rand_state << 13;
            rand_state ^= rand_state >> 7;
            rand_state ^= rand_state << 17;
            *v = (rand_state % 1000) as f64 / 1000.0;
        }
        rep.f = garbage;
        let v = build_vortex(&bg, &rep).unwrap();
        assert!(weitzenbock_residual(&v) > 0.5);
    }

    #[test]
    fn non_converged_report_rejected() {
        let p = ModuliPoint::divisor_free(0.5);
        let grid = Grid::new(128, 8, 40.0).unwrap();
        let bg = kw_data(&p, grid).unwrap();
        let mut rep = newton_solve(&bg, &SolverConfig::default(), None).unwrap();
        rep.converged = false;
        assert!(matches!(
            build_vortex(&bg, &rep),
            Err(Error::NotConvergedReport)
        ));
    }

    #[test]
    fn covariant_gradient_cross_check() {
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let (bg, v) = solve(&p, 512, 8);
        let cov = covariant_grad_phi_sq(&bg, &v);
        // compare in a middle band where the difference stencils are accurate
        for i in 10..v.grid.n_rho / 2 {
            let rho = v.grid.rho_centers[i];
            let exact = 4.0 / ((rho + 1.0) * (rho + 1.0));
            let got = cov.at(i, 3);
            assert!(
                (got - exact).abs() < 1e-3 * (1.0 + exact),
                "rho={rho}: covariant {got} vs {exact}"
            );
        }
    }

    #[test]
    fn minimum_of_phi_tracks_divisor() {
        let p = ModuliPoint::divisor_at(Complex64::new(2.0, 0.0), 1.25);
        let (_, v) = solve(&p, 256, 32);
        // search a compact window: for E > 1 the section also vanishes at
        // infinity, so the global minimum sits at the outer edge
        let (mut i_min, mut j_min, mut p_min) = (0, 0, f64::INFINITY);
        for i in 0..v.grid.n_rho {
            if v.grid.rho_centers[i] > 20.0 {
                break;
            }
            for j in 0..v.grid.n_t {
                let val = v.phi_sq.at(i, j);
                if val < p_min {
                    p_min = val;
                    i_min = i;
                    j_min = j;
                }
            }
        }
        let (i, j) = (i_min, j_min);
        let z = crate::geometry::chart_z(
            crate::geometry::SigmaPoint::new(v.grid.rho_centers[i], v.grid.t_center(j)).unwrap(),
        );
        assert!((z - Complex64::new(2.0, 0.0)).norm() < 0.5, "min at {z}");
        assert!(p_min < 0.05, "min value {p_min}");
    }
}
