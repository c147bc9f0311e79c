//! Background data for the Kazdan-Warner reduction of the 4-vortex equations.
//!
//! Each target instanton is described by a moduli point: either the
//! divisor-free family (Phi_0 = 1, Hermitian exponent alpha = E rho) or the
//! family with a single divisor at z0 (Phi_0 = z - z0,
//! alpha = E rho + ln(rho+1)). From the exponent we build the coefficient
//! fields of Delta f = g - h e^{2f}:
//!
//! ```text
//! bg_curvature = -1/2 Delta alpha        (so deg = E for both families)
//! g  = 2 - bg_curvature
//! h  = 1/2 |Phi_0|^2 e^{-alpha}          (kept in log space)
//! ```
//!
//! The normalization is fixed so that the background degree, the vortex
//! degree, and the instanton energy all equal E.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{integrate, DiscreteField, Grid, Tail};

const LN_2: f64 = std::f64::consts::LN_2;

/// Which branch of the moduli space a target instanton belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Phi_0 = 1; valid for E in (0, 2). The divisor sits at infinity.
    DivisorFree,
    /// Phi_0 = z - z0; valid for E in [1, 2).
    DivisorAt(Complex64),
}

/// A point of the (conjectural) moduli space: family branch plus energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuliPoint {
    pub family: Family,
    pub energy: f64,
}

impl ModuliPoint {
    pub fn divisor_free(energy: f64) -> Self {
        Self {
            family: Family::DivisorFree,
            energy,
        }
    }

    pub fn divisor_at(z0: Complex64, energy: f64) -> Self {
        Self {
            family: Family::DivisorAt(z0),
            energy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.energy;
        if !e.is_finite() {
            return Err(Error::InvalidModuliPoint(format!("energy {e} not finite")));
        }
        if e >= 2.0 || e <= 0.0 {
            return Err(Error::BradlowViolated { energy: e });
        }
        match self.family {
            Family::DivisorFree => Ok(()),
            Family::DivisorAt(z0) => {
                if !z0.re.is_finite() || !z0.im.is_finite() {
                    return Err(Error::InvalidModuliPoint(format!("z0 = {z0} not finite")));
                }
                if e < 1.0 {
                    return Err(Error::InvalidModuliPoint(format!(
                        "divisor family requires E in [1, 2), got E = {e}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Rotate the divisor to the non-negative real axis; identity on the
    /// divisor-free family. Returns the normalized point and the rotation
    /// angle theta such that z0 = |z0| e^{-i theta}.
    pub fn so2_normalized(&self) -> (Self, f64) {
        match self.family {
            Family::DivisorFree => (*self, 0.0),
            Family::DivisorAt(z0) => {
                let theta = -z0.arg();
                (
                    Self::divisor_at(Complex64::new(z0.norm(), 0.0), self.energy),
                    theta,
                )
            }
        }
    }
}

/// Where a background came from: a moduli point, or the divisor-at-infinity
/// limit background used by the compactness probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundSource {
    Point(ModuliPoint),
    /// h = 1/2 e^{-E rho} / (rho + 1) with the divisor-family exponent; the
    /// z0 -> infinity limit of the divisor family.
    UhlenbeckLimit { energy: f64 },
}

impl BackgroundSource {
    pub fn energy(&self) -> f64 {
        match self {
            BackgroundSource::Point(p) => p.energy,
            BackgroundSource::UhlenbeckLimit { energy } => *energy,
        }
    }
}

/// Coefficient fields of the Kazdan-Warner equation for one moduli point.
#[derive(Debug, Clone)]
pub struct BackgroundData {
    pub source: BackgroundSource,
    pub grid: Arc<Grid>,
    pub g: DiscreteField,
    pub h: DiscreteField,
    pub log_h: DiscreteField,
    pub alpha: DiscreteField,
    pub bg_curvature: DiscreteField,
    /// Radial lift ell absorbed into the background: the physical conformal
    /// factor is f = w + ell where w is the flux-free solver unknown.
    pub lift: DiscreteField,
}

/// Hermitian exponent alpha(rho) of the background metric e^{-alpha} H_0.
pub fn hermitian_exponent(point: &ModuliPoint, rho: f64) -> f64 {
    match point.family {
        Family::DivisorFree => point.energy * rho,
        Family::DivisorAt(_) => point.energy * rho + (rho + 1.0).ln(),
    }
}

/// Background curvature i Lambda F of the Chern connection of e^{-alpha} H_0,
/// normalized as -1/2 Delta alpha.
pub fn background_curvature(point: &ModuliPoint, rho: f64) -> f64 {
    match point.family {
        Family::DivisorFree => point.energy,
        Family::DivisorAt(_) => (point.energy - 1.0) + 2.0 / (rho + 1.0),
    }
}

/// ln |z(rho, t) - z0|^2, evaluated without overflow for large rho.
pub fn log_dist_sq(rho: f64, t: f64, z0: Complex64) -> f64 {
    if rho == 0.0 {
        let n = z0.norm_sqr();
        return if n == 0.0 { f64::NEG_INFINITY } else { n.ln() };
    }
    // |z| = sqrt(rho) e^{rho/2}; direct evaluation is exact enough until
    // |z| approaches f64 overflow, after which we expand around |z|.
    let log_s = 0.5 * (rho.ln() + rho);
    if log_s < 300.0 {
        let s = log_s.exp();
        let dre = s * t.cos() - z0.re;
        let dim = -s * t.sin() - z0.im;
        let d = dre.hypot(dim);
        if d == 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * d.ln()
        }
    } else {
        let inv_s = (-log_s).exp();
        let w_re = z0.re * inv_s;
        let w_im = z0.im * inv_s;
        // |z - z0|^2 = |z|^2 (1 - 2 Re(w conj(dir)) + |w|^2), dir = z/|z|
        let q = w_re * w_re + w_im * w_im - 2.0 * (t.cos() * w_re - t.sin() * w_im);
        2.0 * log_s + q.ln_1p()
    }
}

fn log_h_at(point: &ModuliPoint, rho: f64, t: f64) -> f64 {
    match point.family {
        Family::DivisorFree => -point.energy * rho - LN_2,
        Family::DivisorAt(z0) => {
            log_dist_sq(rho, t, z0) - point.energy * rho - (rho + 1.0).ln() - LN_2
        }
    }
}

/// Radial flux a f_u carried by the complex-gauge factor of the true
/// solution at radius rho (per unit t), up to exponentially small Higgs
/// tails. The (1 - e^{-rho}) ramp turns the profile off smoothly at the pole
/// without touching its value at the outer face.
fn lift_flux(source: &BackgroundSource, rho: f64) -> f64 {
    let e = source.energy();
    let ramp = -(-rho).exp_m1();
    match source {
        BackgroundSource::Point(ModuliPoint {
            family: Family::DivisorFree,
            ..
        }) => (2.0 - e) * ramp / (rho + 1.0),
        _ => {
            // at E = 1 the Higgs field does not vanish at infinity and the
            // gauge factor is asymptotically constant: no flux
            if (e - 1.0).abs() < 1e-12 {
                0.0
            } else {
                let r = rho + 1.0;
                ((3.0 - e) / r - 1.0 / (r * r)) * ramp
            }
        }
    }
}

/// The asymptotic lift: a radial field whose discrete face fluxes match the
/// known far-field flux of the solution exactly, together with its discrete
/// Laplacian (outer face included). Folding the lift into the background
/// makes the solved factor flux-free, so the homogeneous Neumann truncation
/// of the solver introduces no long-range error.
fn asymptotic_lift(source: &BackgroundSource, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_rho;
    let du = grid.du;
    let mut flux = vec![0.0; n + 1];
    for (k, fk) in flux.iter_mut().enumerate().skip(1) {
        let u = k as f64 * du;
        *fk = lift_flux(source, 0.5 * u * u);
    }
    let mut ell = vec![0.0; n];
    for k in 1..n {
        let u = k as f64 * du;
        let rho = 0.5 * u * u;
        let a = u / (rho + 1.0) / du;
        ell[k] = ell[k - 1] + flux[k] / a;
    }
    let lap = (0..n)
        .map(|i| -(flux[i + 1] - flux[i]) / grid.cell_vol[i])
        .collect();
    (ell, lap)
}

fn assemble(
    source: BackgroundSource,
    grid: Arc<Grid>,
    log_h_fn: impl Fn(f64, f64) -> f64,
    alpha_fn: impl Fn(f64) -> f64,
    bg_fn: impl Fn(f64) -> f64,
) -> BackgroundData {
    let (ell, ell_lap) = asymptotic_lift(&source, &grid);
    let mut log_h = DiscreteField::from_fn(grid.clone(), |rho, t| log_h_fn(rho, t));
    let mut alpha = DiscreteField::from_fn(grid.clone(), |rho, _| alpha_fn(rho));
    let mut bg_curvature = DiscreteField::from_fn(grid.clone(), |rho, _| bg_fn(rho));
    let n_t = grid.n_t;
    for i in 0..grid.n_rho {
        for j in 0..n_t {
            let k = i * n_t + j;
            log_h.values[k] += 2.0 * ell[i];
            alpha.values[k] -= 2.0 * ell[i];
            bg_curvature.values[k] += ell_lap[i];
        }
    }
    let h = DiscreteField {
        grid: grid.clone(),
        values: log_h.values.iter().map(|lh| lh.exp()).collect(),
    };
    let g = DiscreteField {
        grid: grid.clone(),
        values: bg_curvature.values.iter().map(|c| 2.0 - c).collect(),
    };
    let mut lift = DiscreteField::from_fn(grid.clone(), |_, _| 0.0);
    for i in 0..grid.n_rho {
        for j in 0..n_t {
            lift.values[i * n_t + j] = ell[i];
        }
    }
    BackgroundData {
        source,
        grid,
        g,
        h,
        log_h,
        alpha,
        bg_curvature,
        lift,
    }
}

/// Build the Kazdan-Warner coefficient fields for a moduli point.
pub fn kw_data(point: &ModuliPoint, grid: Arc<Grid>) -> Result<BackgroundData> {
    point.validate()?;
    let p = *point;
    Ok(assemble(
        BackgroundSource::Point(p),
        grid,
        move |rho, t| log_h_at(&p, rho, t),
        move |rho| hermitian_exponent(&p, rho),
        move |rho| background_curvature(&p, rho),
    ))
}

/// Background of the z0 -> infinity limit of the divisor family:
/// same exponent alpha = E rho + ln(rho+1), but Phi_0 = 1.
pub fn kw_data_limit(energy: f64, grid: Arc<Grid>) -> Result<BackgroundData> {
    if !(energy >= 1.0 && energy < 2.0) {
        return Err(Error::InvalidModuliPoint(format!(
            "limit background requires E in [1, 2), got {energy}"
        )));
    }
    Ok(assemble(
        BackgroundSource::UhlenbeckLimit { energy },
        grid,
        move |rho, _| -energy * rho - (rho + 1.0).ln() - LN_2,
        move |rho| energy * rho + (rho + 1.0).ln(),
        move |rho| (energy - 1.0) + 2.0 / (rho + 1.0),
    ))
}

/// Bradlow margin int_Sigma g dvol = 2 pi (2 - E); the vortex exists iff it
/// is positive.
pub fn bradlow_margin(point: &ModuliPoint) -> f64 {
    2.0 * PI * (2.0 - point.energy)
}

/// Exact tail integral int_{rho_max}^infty bg_curvature dvol for a background
/// source on the given grid.
pub fn curvature_tail_integral(source: &BackgroundSource, grid: &Grid) -> f64 {
    let r = grid.rho_max + 1.0;
    let raw = match source {
        BackgroundSource::Point(ModuliPoint {
            family: Family::DivisorFree,
            energy,
        }) => 2.0 * PI * energy / r,
        BackgroundSource::Point(ModuliPoint {
            family: Family::DivisorAt(_),
            energy,
        })
        | BackgroundSource::UhlenbeckLimit { energy } => {
            2.0 * PI * ((energy - 1.0) / r + 1.0 / (r * r))
        }
    };
    // the lift moves 2 pi * flux(rho_max) of curvature from the grid interior
    // out into the tail
    raw + 2.0 * PI * lift_flux(source, grid.rho_max)
}

/// Quadrature of bg_curvature / 2 pi over the surface; returns E up to
/// quadrature error for every valid point.
pub fn degree_of_background(bg: &BackgroundData) -> f64 {
    let tail = curvature_tail_integral(&bg.source, &bg.grid);
    integrate(&bg.bg_curvature, Tail::Exact(tail)) / (2.0 * PI)
}
