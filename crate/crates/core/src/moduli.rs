//! Moduli-space experiments: the canonical map to C union {infinity}, divisor
//! location from the gauge-invariant section norm, staticity detection,
//! parameter continuity, and the Uhlenbeck limit z0 -> infinity.

use std::sync::Arc;

use num_complex::Complex64;

use crate::background::{kw_data, kw_data_limit, Family, ModuliPoint};
use crate::error::{Error, Result};
use crate::geometry::{chart_z, DiscreteField, Grid, SigmaPoint};
use crate::solver::{apply_laplacian, newton_solve, SolverConfig, SolverReport};
use crate::vortex::{build_vortex, degree, taubes_check, vortex_residual, ymh_energy, VortexField};

/// Summary of one moduli point after the full solve/observe pipeline.
#[derive(Debug, Clone)]
pub struct ModuliSample {
    pub point: ModuliPoint,
    pub degree: f64,
    pub ymh_energy: f64,
    pub taubes_max: f64,
    pub vortex_residual: f64,
    /// Divisor location in the z-chart; None marks the divisor at infinity.
    pub divisor_estimate: Option<Complex64>,
    pub is_static: bool,
    pub t_variation: f64,
    pub solver_iterations: usize,
    pub residual_sup: f64,
}

/// Result of the Lipschitz-type continuity probe.
#[derive(Debug, Clone, Copy)]
pub struct ContinuityReport {
    /// Window norm of f1 - f2 over the L2 distance of the coefficient data.
    pub ratio: f64,
    /// Set when the two inputs are identical and the quotient is 0/0.
    pub equal_inputs: bool,
    pub solution_distance: f64,
    pub data_distance: f64,
}

/// Locate the divisor of a solved vortex: the zero of the Higgs field in the
/// z-chart, or None for the divisor-free family (the canonical map sends it
/// to infinity).
///
/// The discrete minimum of phi_sq is searched over the compact window
/// rho <= rho_max / 2; for E > 1 the section norm also decays at infinity, so
/// the outer region must be excluded. The minimum is refined by one-dimensional
/// quadratic fits in u and t.
pub fn divisor_locate(v: &VortexField) -> Result<Option<Complex64>> {
    let point = match v.point() {
        Some(p) => p,
        None => {
            return Err(Error::Diagnostic(
                "divisor location needs a moduli point, not a limit background".into(),
            ))
        }
    };
    match point.family {
        Family::DivisorFree => Ok(None),
        Family::DivisorAt(_) => {
            let grid = &v.grid;
            let n_t = grid.n_t;
            let mut i_cap = grid.n_rho;
            for i in 0..grid.n_rho {
                if grid.rho_centers[i] > 0.5 * grid.rho_max {
                    i_cap = i;
                    break;
                }
            }
            // For E > 1 the whole field decays along the axis, so the raw
            // minimum of phi_sq can sit in the far tail rather than at the
            // divisor. The tail is axisymmetric while the divisor dip is an
            // angular feature, so normalize each ring by its mean before
            // searching.
            let means: Vec<f64> = (0..i_cap).map(|i| v.phi_sq.ring_mean(i)).collect();
            let q = |i: usize, j: usize| v.phi_sq.at(i, j) / means[i].max(1e-300);
            let anisotropy = (0..i_cap)
                .map(|i| v.phi_sq.ring_oscillation(i) / means[i].max(1e-300))
                .fold(0.0f64, f64::max);

            if anisotropy <= 1e-6 || n_t == 1 {
                // axisymmetric field: the divisor sits on the axis, i.e. at
                // the pole (a far tail ring may be even smaller for E > 1,
                // which says nothing about the zero). Require a dip at the
                // pole and fit the ring means in u, mirroring across the pole
                // (phi_sq is even in u), which places the vertex at u = 0
                // when ring 0 holds the local minimum.
                if means[0] >= means[1] {
                    return Err(Error::Diagnostic(
                        "ambiguous divisor: axisymmetric field without a dip at the pole"
                            .into(),
                    ));
                }
                let i_min = 0;
                let b = means[i_min];
                let a = means[0];
                let c = means[i_min + 1];
                let denom = a - 2.0 * b + c;
                let delta = if denom.abs() > 1e-300 {
                    (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let u_star = (grid.u_centers[i_min] + delta * grid.du).max(0.0);
                let rho_star = 0.5 * u_star * u_star;
                return Ok(Some(chart_z(SigmaPoint::new(rho_star, 0.0)?)));
            }

            let (mut i_min, mut j_min, mut p_min) = (0usize, 0usize, f64::INFINITY);
            for i in 0..i_cap {
                for j in 0..n_t {
                    let val = q(i, j);
                    if val < p_min {
                        p_min = val;
                        i_min = i;
                        j_min = j;
                    }
                }
            }
            // ambiguity check: a second, non-adjacent near-minimum means the
            // minimum does not identify a single divisor cell
            for i in 0..i_cap {
                for j in 0..n_t {
                    let far_radial = i + 2 < i_min || i > i_min + 2;
                    let dj = (j as isize - j_min as isize).rem_euclid(n_t as isize);
                    let far_angular = dj > 2 && dj < n_t as isize - 2;
                    if (far_radial || far_angular) && q(i, j) <= p_min * (1.0 + 1e-9) {
                        return Err(Error::Diagnostic(format!(
                            "ambiguous divisor: cells ({i_min},{j_min}) and ({i},{j}) \
                             both attain the minimum of phi_sq"
                        )));
                    }
                }
            }

            // sub-cell refinement in t (periodic three-point parabola; the
            // ring normalization cancels inside a single ring)
            let t_star = {
                let jl = (j_min + n_t - 1) % n_t;
                let jr = (j_min + 1) % n_t;
                let (a, b, c) = (
                    v.phi_sq.at(i_min, jl),
                    v.phi_sq.at(i_min, j_min),
                    v.phi_sq.at(i_min, jr),
                );
                let denom = a - 2.0 * b + c;
                let delta = if denom.abs() > 1e-300 {
                    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                };
                grid.t_center(j_min) + delta * grid.dt
            };

            // sub-cell refinement in u on the normalized field; phi_sq is
            // even in u across the pole, so the inner neighbour of ring 0 is
            // its own mirror at angle t + pi
            let u_star = {
                let b = q(i_min, j_min);
                let (a, c) = if i_min == 0 {
                    (q(0, (j_min + n_t / 2) % n_t), q(1, j_min))
                } else if i_min + 1 == i_cap {
                    (q(i_min - 1, j_min), b)
                } else {
                    (q(i_min - 1, j_min), q(i_min + 1, j_min))
                };
                let denom = a - 2.0 * b + c;
                let delta = if denom.abs() > 1e-300 {
                    (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                (grid.u_centers[i_min] + delta * grid.du).max(0.0)
            };
            let rho_star = 0.5 * u_star * u_star;
            let z = chart_z(SigmaPoint::new(rho_star, t_star)?);
            Ok(Some(z))
        }
    }
}

/// Max t-oscillation of phi_sq over all rings; the vortex is static when it
/// falls below ten times the solver tolerance.
pub fn staticity_probe(v: &VortexField, solver_tol: f64) -> (bool, f64) {
    let mut variation = 0.0f64;
    for i in 0..v.grid.n_rho {
        variation = variation.max(v.phi_sq.ring_oscillation(i));
    }
    (variation <= 10.0 * solver_tol, variation)
}

fn l2_vol(field: &DiscreteField) -> f64 {
    let grid = &field.grid;
    let mut s = 0.0;
    for i in 0..grid.n_rho {
        let w = grid.cell_vol[i];
        for j in 0..grid.n_t {
            let v = field.at(i, j);
            s += w * v * v;
        }
    }
    (s * grid.dt).sqrt()
}

/// Window norm of a field: L2 over rho <= window of the field and its
/// Laplacian (a discrete stand-in for the second derivatives).
fn window_norm(field: &DiscreteField, window_rho: f64) -> f64 {
    let grid = &field.grid;
    let lap = apply_laplacian(field);
    let mut s = 0.0;
    for i in 0..grid.n_rho {
        if grid.rho_centers[i] > window_rho {
            break;
        }
        let w = grid.cell_vol[i];
        for j in 0..grid.n_t {
            let v = field.at(i, j);
            let l = lap.at(i, j);
            s += w * (v * v + l * l);
        }
    }
    (s * grid.dt).sqrt()
}

/// Ratio of the window norm of f1 - f2 to the L2 distance of the coefficient
/// data (g, h), probing the solution-comparison bound.
pub fn continuity_probe(
    p1: &ModuliPoint,
    p2: &ModuliPoint,
    grid: Arc<Grid>,
    cfg: &SolverConfig,
    window_rho: f64,
) -> Result<ContinuityReport> {
    let bg1 = kw_data(p1, grid.clone())?;
    let bg2 = kw_data(p2, grid.clone())?;
    let mut data_distance = 0.0;
    for (a, b) in [(&bg1.g, &bg2.g), (&bg1.h, &bg2.h)] {
        let diff = DiscreteField {
            grid: grid.clone(),
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        };
        data_distance += l2_vol(&diff);
    }
    if data_distance == 0.0 {
        return Ok(ContinuityReport {
            ratio: 0.0,
            equal_inputs: true,
            solution_distance: 0.0,
            data_distance: 0.0,
        });
    }
    let solve = |bg| -> Result<SolverReport> {
        let rep = newton_solve(bg, cfg, None)?;
        if !rep.converged {
            return Err(Error::NotConverged {
                iterations: rep.iterations,
                residual_sup: rep.final_residual_sup,
            });
        }
        Ok(rep)
    };
    let r1 = solve(&bg1)?;
    let r2 = solve(&bg2)?;
    let diff = DiscreteField {
        grid: grid.clone(),
        values: r1
            .f
            .values
            .iter()
            .zip(&r2.f.values)
            .map(|(x, y)| x - y)
            .collect(),
    };
    let solution_distance = window_norm(&diff, window_rho);
    Ok(ContinuityReport {
        ratio: solution_distance / data_distance,
        equal_inputs: false,
        solution_distance,
        data_distance,
    })
}

/// Sup-distances of phi_sq between divisor solves along a z0 ladder and the
/// divisor-at-infinity limit solve, over the window rho <= window_rho.
pub fn uhlenbeck_limit_probe(
    energy: f64,
    z0_sequence: &[Complex64],
    grid: Arc<Grid>,
    cfg: &SolverConfig,
    window_rho: f64,
) -> Result<Vec<f64>> {
    let mut i_cap = 0;
    for i in 0..grid.n_rho {
        if grid.rho_centers[i] <= window_rho {
            i_cap = i + 1;
        }
    }
    if i_cap == 0 {
        return Err(Error::Domain(format!(
            "comparison window rho <= {window_rho} holds no grid cells"
        )));
    }
    let bg_limit = kw_data_limit(energy, grid.clone())?;
    let rep_limit = newton_solve(&bg_limit, cfg, None)?;
    if !rep_limit.converged {
        return Err(Error::NotConverged {
            iterations: rep_limit.iterations,
            residual_sup: rep_limit.final_residual_sup,
        });
    }
    let v_limit = build_vortex(&bg_limit, &rep_limit)?;

    let mut distances = Vec::with_capacity(z0_sequence.len());
    let mut warm: Option<DiscreteField> = None;
    for z0 in z0_sequence {
        let point = ModuliPoint::divisor_at(*z0, energy);
        let bg = kw_data(&point, grid.clone())?;
        let rep = newton_solve(&bg, cfg, warm.as_ref())?;
        if !rep.converged {
            return Err(Error::NotConverged {
                iterations: rep.iterations,
                residual_sup: rep.final_residual_sup,
            });
        }
        warm = Some(rep.f.clone());
        let v = build_vortex(&bg, &rep)?;
        let mut sup = 0.0f64;
        for i in 0..i_cap {
            for j in 0..grid.n_t {
                sup = sup.max((v.phi_sq.at(i, j) - v_limit.phi_sq.at(i, j)).abs());
            }
        }
        distances.push(sup);
    }
    Ok(distances)
}

/// The canonical map to C union {infinity}: the divisor estimate of a sample.
pub fn canonical_map(sample: &ModuliSample) -> Option<Complex64> {
    sample.divisor_estimate
}

/// Run the full pipeline at one moduli point and summarize it.
pub fn moduli_sample(
    point: &ModuliPoint,
    grid: Arc<Grid>,
    cfg: &SolverConfig,
) -> Result<ModuliSample> {
    let bg = kw_data(point, grid)?;
    let rep = newton_solve(&bg, cfg, None)?;
    if !rep.converged {
        return Err(Error::NotConverged {
            iterations: rep.iterations,
            residual_sup: rep.final_residual_sup,
        });
    }
    let v = build_vortex(&bg, &rep)?;
    let (is_static, t_variation) = staticity_probe(&v, cfg.residual_tol);
    Ok(ModuliSample {
        point: *point,
        degree: degree(&v),
        ymh_energy: ymh_energy(&v),
        taubes_max: taubes_check(&v),
        vortex_residual: vortex_residual(&v),
        divisor_estimate: divisor_locate(&v)?,
        is_static,
        t_variation,
        solver_iterations: rep.iterations,
        residual_sup: rep.final_residual_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::BackgroundSource;

    fn solve(point: &ModuliPoint, n_rho: usize, n_t: usize) -> VortexField {
        let grid = Grid::new(n_rho, n_t, 40.0).unwrap();
        let bg = kw_data(point, grid).unwrap();
        let rep = newton_solve(&bg, &SolverConfig::default(), None).unwrap();
        assert!(rep.converged);
        build_vortex(&bg, &rep).unwrap()
    }

    #[test]
    fn charap_duff_divisor_at_origin() {
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let v = solve(&p, 256, 8);
        let z = divisor_locate(&v).unwrap().unwrap();
        assert!(z.norm() <= v.grid.du, "estimate {z}");
    }

    #[test]
    fn off_origin_divisor_recovered() {
        let z0 = Complex64::new(2.0, 1.0);
        let p = ModuliPoint::divisor_at(z0, 1.0);
        let v = solve(&p, 256, 32);
        let z = divisor_locate(&v).unwrap().unwrap();
        // one-cell accuracy in the chart: the local cell diameter in z
        let rho0 = 0.5 * (2.0f64 * z0.norm_sqr()).ln().max(0.1); // |z| ~ sqrt(rho) e^{rho/2}
        let cell = v.grid.du * (1.0 + rho0) * z0.norm();
        assert!((z - z0).norm() < cell.max(0.15), "estimate {z} vs {z0}");
    }

    #[test]
    fn divisor_free_maps_to_infinity() {
        let p = ModuliPoint::divisor_free(1.5);
        let v = solve(&p, 128, 8);
        assert!(divisor_locate(&v).unwrap().is_none());
    }

    #[test]
    fn rotation_equivariance_of_divisor() {
        let g = Grid::new(192, 32, 40.0).unwrap();
        let z0 = Complex64::new(2.0, 0.0);
        let k = 8usize;
        let theta = k as f64 * g.dt;
        let z0_rot = z0 * Complex64::new(0.0, -theta).exp();
        let cfg = SolverConfig::default();
        let locate = |z0| {
            let bg = kw_data(&ModuliPoint::divisor_at(z0, 1.25), g.clone()).unwrap();
            let rep = newton_solve(&bg, &cfg, None).unwrap();
            divisor_locate(&build_vortex(&bg, &rep).unwrap())
                .unwrap()
                .unwrap()
        };
        let a = locate(z0);
        let b = locate(z0_rot);
        let back = b * Complex64::new(0.0, theta).exp();
        assert!((a - back).norm() < 0.1, "{a} vs rotated-back {back}");
    }

    #[test]
    fn ambiguous_minimum_detected() {
        // synthetic field with two symmetric minima
        let grid = Grid::new(64, 16, 40.0).unwrap();
        let phi = DiscreteField::from_fn(grid.clone(), |rho, t| {
            2.0 + (2.0 * t).cos() + 0.01 * rho
        });
        let p = ModuliPoint::divisor_at(Complex64::new(1.0, 0.0), 1.0);
        let v = VortexField {
            source: BackgroundSource::Point(p),
            grid: grid.clone(),
            f: DiscreteField::constant(grid.clone(), 0.0),
            phi_sq: phi,
            curv: DiscreteField::constant(grid.clone(), 1.0),
            grad_phi_sq: DiscreteField::constant(grid, 0.0),
        };
        assert!(matches!(
            divisor_locate(&v),
            Err(Error::Diagnostic(_))
        ));
    }

    #[test]
    fn staticity_classification() {
        let tol = 1e-10;
        let v = solve(&ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0), 128, 16);
        let (s, var) = staticity_probe(&v, tol);
        assert!(s, "variation {var}");
        let v = solve(&ModuliPoint::divisor_free(0.75), 128, 16);
        let (s, _) = staticity_probe(&v, tol);
        assert!(s);
        let v = solve(&ModuliPoint::divisor_at(Complex64::new(2.0, 0.0), 1.0), 128, 16);
        let (s, var) = staticity_probe(&v, tol);
        assert!(!s);
        assert!(var > 0.1, "variation {var}");
    }

    #[test]
    fn continuity_equal_inputs() {
        let grid = Grid::new(64, 8, 40.0).unwrap();
        let p = ModuliPoint::divisor_free(0.5);
        let r = continuity_probe(&p, &p, grid, &SolverConfig::default(), 10.0).unwrap();
        assert!(r.equal_inputs);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn continuity_ratio_stable_under_step_halving() {
        let grid = Grid::new(128, 8, 40.0).unwrap();
        let cfg = SolverConfig::default();
        let base = ModuliPoint::divisor_free(1.2);
        let r1 = continuity_probe(
            &base,
            &ModuliPoint::divisor_free(1.21),
            grid.clone(),
            &cfg,
            10.0,
        )
        .unwrap();
        let r2 = continuity_probe(
            &base,
            &ModuliPoint::divisor_free(1.205),
            grid,
            &cfg,
            10.0,
        )
        .unwrap();
        assert!(r1.ratio.is_finite() && r1.ratio > 0.0);
        assert!(
            (r1.ratio - r2.ratio).abs() < 0.5 * r1.ratio,
            "ratios {} vs {}",
            r1.ratio,
            r2.ratio
        );
    }

    #[test]
    fn uhlenbeck_ladder_decreases() {
        let grid = Grid::new(128, 16, 40.0).unwrap();
        let ladder: Vec<Complex64> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|x| Complex64::new(*x, 0.0))
            .collect();
        let d =
            uhlenbeck_limit_probe(1.0, &ladder, grid, &SolverConfig::default(), 3.0).unwrap();
        assert_eq!(d.len(), 4);
        for w in d.windows(2) {
            assert!(w[1] < w[0], "distances not decreasing: {d:?}");
        }
    }

    #[test]
    fn uhlenbeck_empty_window_rejected() {
        let grid = Grid::new(128, 16, 40.0).unwrap();
        let r = uhlenbeck_limit_probe(
            1.0,
            &[Complex64::new(2.0, 0.0)],
            grid,
            &SolverConfig::default(),
            1e-9,
        );
        assert!(r.is_err());
    }

    #[test]
    fn sample_pipeline() {
        let grid = Grid::new(128, 16, 40.0).unwrap();
        let p = ModuliPoint::divisor_at(Complex64::new(0.0, 0.0), 1.0);
        let s = moduli_sample(&p, grid, &SolverConfig::default()).unwrap();
        assert!((s.degree - 1.0).abs() < 1e-4);
        assert!((s.ymh_energy - 4.0).abs() < 4e-3);
        assert!(s.taubes_max < 4.0);
        assert!(s.is_static);
        assert_eq!(canonical_map(&s).unwrap().norm() < 0.1, true);
    }
}
