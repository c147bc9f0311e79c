//! Geometry of the base surface: the complete, finite-volume metric on the
//! (rho, t) half-cylinder, its scalar Laplacian, the global holomorphic chart,
//! and quadrature with analytic tail corrections.
//!
//! The surface carries the metric
//!
//! ```text
//! g = (2 rho / (rho+1)^3) dt^2 + (1 / (2 rho (rho+1))) drho^2
//! ```
//!
//! which is smooth at rho = 0 in the regularized radial variable u = sqrt(2 rho)
//! (g ~ du^2 + u^2 dt^2 near the pole). All grids are cell-centered and uniform
//! in u, so no node ever sits on the coordinate pole.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of the base surface in (rho, t) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPoint {
    /// Radial coordinate, rho >= 0.
    pub rho: f64,
    /// Angular coordinate, taken modulo 2 pi.
    pub t: f64,
}

impl SigmaPoint {
    pub fn new(rho: f64, t: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::Domain(format!("rho = {rho} must be >= 0")));
        }
        Ok(Self {
            rho,
            t: t.rem_euclid(2.0 * PI),
        })
    }
}

/// Metric coefficients (g_tt, g_rhorho, vol_weight) at radius rho > 0.
///
/// vol_weight = sqrt(g_tt * g_rhorho) = (rho+1)^{-2} is the area density
/// with respect to drho dt.
pub fn metric_coefficients(rho: f64) -> Result<(f64, f64, f64)> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "metric coefficients need rho > 0, got {rho}"
        )));
    }
    let rp1 = rho + 1.0;
    let g_tt = 2.0 * rho / (rp1 * rp1 * rp1);
    let g_rhorho = 1.0 / (2.0 * rho * rp1);
    let vol_weight = 1.0 / (rp1 * rp1);
    Ok((g_tt, g_rhorho, vol_weight))
}

/// Coefficients (a_tt, a_rhorho, a_rho) of the positive Laplacian
/// Delta = a_tt d_t^2 + a_rhorho d_rho^2 + a_rho d_rho, so that Delta rho = -2.
pub fn laplacian_coefficients(rho: f64) -> Result<(f64, f64, f64)> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "laplacian coefficients need rho > 0, got {rho}"
        )));
    }
    let rp1 = rho + 1.0;
    Ok((-rp1 * rp1 * rp1 / (2.0 * rho), -2.0 * rho * rp1, -2.0))
}

/// Global holomorphic chart z = sqrt(rho) exp(rho/2 - i t).
///
/// Satisfies |z|^2 = rho e^rho and arg z = -t.
pub fn chart_z(p: SigmaPoint) -> Complex64 {
    let s = p.rho.sqrt() * (0.5 * p.rho).exp();
    Complex64::new(s * p.t.cos(), -s * p.t.sin())
}

/// Conformal factor kappa relating the metric to the round sphere metric on
/// the compactification: kappa = (rho+1)^3 e^rho / (1 + rho e^rho)^2.
pub fn conformal_kappa(rho: f64) -> f64 {
    let rp1 = rho + 1.0;
    // (rho+1)^3 e^rho / (1 + rho e^rho)^2, evaluated in log space for large rho
    if rho < 300.0 {
        let e = rho.exp();
        rp1 * rp1 * rp1 * e / ((1.0 + rho * e) * (1.0 + rho * e))
    } else {
        (3.0 * rp1.ln() - rho - 2.0 * rho.ln()).exp()
    }
}

/// Gauss curvature K = -4 + 12/(rho+1).
pub fn gauss_curvature(rho: f64) -> f64 {
    -4.0 + 12.0 / (rho + 1.0)
}

/// Tail rule for quadrature over the truncated grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// No correction beyond the truncation radius.
    None,
    /// Integrand tends to the given constant; adds 2 pi a / (rho_max + 1).
    Asymptote(f64),
    /// Exact value of the tail integral (already including the 2 pi factor).
    Exact(f64),
    /// Fit the outer ring means with c0 + c1/(rho+1) and integrate the fit
    /// analytically over (rho_max, infinity).
    FittedTwoTerm,
}

/// Truncated cell-centered grid, uniform in u = sqrt(2 rho) and in t.
#[derive(Debug)]
pub struct Grid {
    pub n_rho: usize,
    pub n_t: usize,
    pub rho_max: f64,
    /// Radial spacing in u.
    pub du: f64,
    /// Angular spacing.
    pub dt: f64,
    /// Cell-center radii u_i = (i + 1/2) du.
    pub u_centers: Vec<f64>,
    /// Cell-center rho_i = u_i^2 / 2.
    pub rho_centers: Vec<f64>,
    /// Exact radial cell volume per unit t:
    /// int_cell (rho+1)^{-2} drho = 1/(rho_lo+1) - 1/(rho_hi+1).
    pub cell_vol: Vec<f64>,
}

impl Grid {
    pub fn new(n_rho: usize, n_t: usize, rho_max: f64) -> Result<Arc<Self>> {
        if n_rho < 8 {
            return Err(Error::InvalidGrid(format!("n_rho = {n_rho} must be >= 8")));
        }
        if n_t != 1 && n_t < 8 {
            return Err(Error::InvalidGrid(format!(
                "n_t = {n_t} must be >= 8 (or 1 for t-independent problems)"
            )));
        }
        if !(rho_max > 4.0) {
            return Err(Error::InvalidGrid(format!(
                "rho_max = {rho_max} must be > 4"
            )));
        }
        if !(rho_max <= 600.0) {
            // keeps |z| = sqrt(rho) e^{rho/2} representable in f64
            return Err(Error::InvalidGrid(format!(
                "rho_max = {rho_max} must be <= 600"
            )));
        }
        let u_max = (2.0 * rho_max).sqrt();
        let du = u_max / n_rho as f64;
        let dt = 2.0 * PI / n_t as f64;
        let mut u_centers = Vec::with_capacity(n_rho);
        let mut rho_centers = Vec::with_capacity(n_rho);
        let mut cell_vol = Vec::with_capacity(n_rho);
        for i in 0..n_rho {
            let u = (i as f64 + 0.5) * du;
            let u_lo = i as f64 * du;
            let u_hi = (i as f64 + 1.0) * du;
            let rho_lo = 0.5 * u_lo * u_lo;
            let rho_hi = 0.5 * u_hi * u_hi;
            u_centers.push(u);
            rho_centers.push(0.5 * u * u);
            cell_vol.push(1.0 / (rho_lo + 1.0) - 1.0 / (rho_hi + 1.0));
        }
        Ok(Arc::new(Self {
            n_rho,
            n_t,
            rho_max,
            du,
            dt,
            u_centers,
            rho_centers,
            cell_vol,
        }))
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_t + j
    }

    /// Angular coordinate of cell column j (cell-centered).
    #[inline]
    pub fn t_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt
    }

    /// Total discrete volume (exact up to the truncation radius):
    /// 2 pi (1 - 1/(rho_max+1)).
    pub fn volume(&self) -> f64 {
        self.cell_vol.iter().sum::<f64>() * self.dt * self.n_t as f64
    }
}

/// A scalar field sampled at the cell centers of a grid.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    /// Sample a function of (rho, t) at every cell center.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_rho {
            let rho = grid.rho_centers[i];
            for j in 0..grid.n_t {
                values.push(f(rho, grid.t_center(j)));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean over the ring at radial index i.
    pub fn ring_mean(&self, i: usize) -> f64 {
        let n_t = self.grid.n_t;
        let base = i * n_t;
        self.values[base..base + n_t].iter().sum::<f64>() / n_t as f64
    }

    /// Max minus min over the ring at radial index i.
    pub fn ring_oscillation(&self, i: usize) -> f64 {
        let n_t = self.grid.n_t;
        let base = i * n_t;
        let ring = &self.values[base..base + n_t];
        let max = ring.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let min = ring.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        max - min
    }
}

/// Integrate a field against the volume form, with an optional tail model for
/// the region beyond the truncation radius.
pub fn integrate(field: &DiscreteField, tail: Tail) -> f64 {
    let grid = &field.grid;
    let mut sum = 0.0;
    for i in 0..grid.n_rho {
        let mut ring = 0.0;
        for j in 0..grid.n_t {
            ring += field.at(i, j);
        }
        sum += ring * grid.cell_vol[i];
    }
    sum *= grid.dt;
    sum + tail_integral(field, tail)
}

/// The tail contribution of `integrate` alone.
pub fn tail_integral(field: &DiscreteField, tail: Tail) -> f64 {
    let grid = &field.grid;
    match tail {
        Tail::None => 0.0,
        Tail::Asymptote(a) => 2.0 * PI * a / (grid.rho_max + 1.0),
        Tail::Exact(v) => v,
        Tail::FittedTwoTerm => {
            let (c0, c1) = fit_outer_tail(field);
            let r = grid.rho_max + 1.0;
            2.0 * PI * (c0 / r + c1 / (2.0 * r * r))
        }
    }
}

/// Least-squares fit of the outer ring means against c0 + c1/(rho+1), over the
/// window rho in [0.75, 0.95] * rho_max. Used to extrapolate quadrature tails
/// for integrands with an algebraic 1/(rho+1) approach to their limit.
pub fn fit_outer_tail(field: &DiscreteField) -> (f64, f64) {
    let grid = &field.grid;
    let lo = 0.75 * grid.rho_max;
    let hi = 0.95 * grid.rho_max;
    let mut n = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..grid.n_rho {
        let rho = grid.rho_centers[i];
        if rho < lo || rho > hi {
            continue;
        }
        let x = 1.0 / (rho + 1.0);
        let y = field.ring_mean(i);
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if n < 2.0 {
        return (0.0, 0.0);
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let c0 = (sxx * sy - sx * sxy) / det;
    let c1 = (n * sxy - sx * sy) / det;
    (c0, c1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn metric_at_sample_radii() {
        let (g_tt, g_rr, w) = metric_coefficients(1.0).unwrap();
        assert_relative_eq!(g_tt, 0.25, max_relative = 1e-14);
        assert_relative_eq!(g_rr, 0.25, max_relative = 1e-14);
        assert_relative_eq!(w, 0.25, max_relative = 1e-14);

        let (g_tt, g_rr, w) = metric_coefficients(3.0).unwrap();
        assert_relative_eq!(g_tt, 0.09375, max_relative = 1e-14);
        assert_relative_eq!(g_rr, 1.0 / 24.0, max_relative = 1e-14);
        assert_relative_eq!(w, 0.0625, max_relative = 1e-14);
    }

    #[test]
    fn metric_rejects_pole() {
        assert!(metric_coefficients(0.0).is_err());
        assert!(metric_coefficients(-1.0).is_err());
        assert!(laplacian_coefficients(0.0).is_err());
    }

    #[test]
    fn vol_weight_is_geometric_mean() {
        for &rho in &[0.1, 0.5, 1.0, 2.0, 7.3, 40.0, 123.0] {
            let (g_tt, g_rr, w) = metric_coefficients(rho).unwrap();
            assert!((w - (g_tt * g_rr).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_annihilates_constants_and_maps_rho_to_minus_two() {
        // analytic check of the printed coefficients
        for &rho in &[0.3, 1.0, 5.0, 20.0] {
            let (_a_tt, a_rr, a_r) = laplacian_coefficients(rho).unwrap();
            // f = rho: f_rho = 1, f_rhorho = 0
            assert_relative_eq!(a_rr * 0.0 + a_r * 1.0, -2.0, max_relative = 1e-14);
            // f = rho^2: Delta = -4 rho^2 - 8 rho
            let val = a_rr * 2.0 + a_r * 2.0 * rho;
            assert_relative_eq!(val, -4.0 * rho * rho - 8.0 * rho, max_relative = 1e-13);
        }
        let (_, a_rr, a_r) = laplacian_coefficients(1.0).unwrap();
        assert_relative_eq!(a_rr * 2.0 + a_r * 2.0, -12.0, max_relative = 1e-14);
    }

    #[test]
    fn chart_values() {
        let z = chart_z(SigmaPoint::new(0.0, 1.7).unwrap());
        assert_eq!(z, Complex64::new(0.0, 0.0));

        let z = chart_z(SigmaPoint::new(1.0, 0.0).unwrap());
        assert_relative_eq!(z.re, (0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(z.im, 0.0, epsilon = 1e-14);

        for &t in &[0.0, 0.9, 3.2, 6.0] {
            let z = chart_z(SigmaPoint::new(2.0, t).unwrap());
            assert_relative_eq!(z.norm_sqr(), 2.0 * (2.0f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn chart_norm_identity_on_grid() {
        let grid = Grid::new(64, 8, 40.0).unwrap();
        for i in 0..grid.n_rho {
            let rho = grid.rho_centers[i];
            let z = chart_z(SigmaPoint::new(rho, grid.t_center(3)).unwrap());
            assert_relative_eq!(z.norm_sqr(), rho * rho.exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn kappa_values() {
        assert_relative_eq!(conformal_kappa(0.0), 1.0, max_relative = 1e-14);
        let e = 1.0f64.exp();
        assert_relative_eq!(
            conformal_kappa(1.0),
            8.0 * e / ((1.0 + e) * (1.0 + e)),
            max_relative = 1e-13
        );
        assert!(conformal_kappa(20.0) < 1e-3);
        assert!(conformal_kappa(400.0) > 0.0);
    }

    #[test]
    fn gauss_curvature_values() {
        assert_relative_eq!(gauss_curvature(0.0), 8.0, max_relative = 1e-14);
        assert_relative_eq!(gauss_curvature(2.0), 0.0, epsilon = 1e-14);
        assert!((gauss_curvature(1e9) + 4.0).abs() < 1e-7);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(4, 16, 40.0).is_err());
        assert!(Grid::new(64, 3, 40.0).is_err());
        assert!(Grid::new(64, 1, 40.0).is_ok());
        assert!(Grid::new(64, 16, 2.0).is_err());
        assert!(Grid::new(64, 16, 1e4).is_err());
    }

    #[test]
    fn volume_is_two_pi() {
        let grid = Grid::new(256, 16, 40.0).unwrap();
        let one = DiscreteField::constant(grid.clone(), 1.0);
        let v = integrate(&one, Tail::Asymptote(1.0));
        assert!((v - 2.0 * PI).abs() < 1e-12, "volume error {:e}", v - 2.0 * PI);
    }

    #[test]
    fn integrate_zero_field() {
        let grid = Grid::new(64, 8, 40.0).unwrap();
        let zero = DiscreteField::constant(grid, 0.0);
        assert_eq!(integrate(&zero, Tail::None), 0.0);
    }

    #[test]
    fn integrate_decaying_field() {
        // int 2/(rho+1) dvol = 2 pi int 2 (rho+1)^{-3} drho = 2 pi over [0, inf)
        let grid = Grid::new(512, 8, 40.0).unwrap();
        let f = DiscreteField::from_fn(grid.clone(), |rho, _| 2.0 / (rho + 1.0));
        let exact_tail = 2.0 * PI / ((grid.rho_max + 1.0) * (grid.rho_max + 1.0));
        let v = integrate(&f, Tail::Exact(exact_tail));
        assert!((v - 2.0 * PI).abs() < 1e-5, "error {:e}", v - 2.0 * PI);
        // fitted tail should do about as well
        let v2 = integrate(&f, Tail::FittedTwoTerm);
        assert!((v2 - 2.0 * PI).abs() < 1e-4, "fitted error {:e}", v2 - 2.0 * PI);
    }

    #[test]
    fn fitted_tail_recovers_linear_model() {
        let grid = Grid::new(256, 8, 40.0).unwrap();
        let f = DiscreteField::from_fn(grid, |rho, _| 3.0 - 5.0 / (rho + 1.0));
        let (c0, c1) = fit_outer_tail(&f);
        assert_relative_eq!(c0, 3.0, max_relative = 1e-9);
        assert_relative_eq!(c1, -5.0, max_relative = 1e-7);
    }
}
