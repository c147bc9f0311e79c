//! Run configuration: a small key-value text format with optional sections.
//!
//! ```text
//! family = divisor_at
//! E = 1.0
//! z0 = 2+1i
//! mass = 1.0
//!
//! [grid]
//! n_rho = 512
//! n_t = 32
//! rho_max = 40
//!
//! [solver]
//! residual_tol = 1e-10
//!
//! [sweep]
//! family = divisor_free
//! e_start = 0.25
//! e_stop = 1.75
//! e_step = 0.25
//! z0_list = 0, 1, 2+1i
//!
//! [limit]
//! E = 1.0
//! ladder = 2, 4, 8, 16
//! window_rho = 3
//!
//! [decay]
//! window_lo = 20
//! window_hi = 36
//! ```
//!
//! Lines may also carry several whitespace-separated `key=value` pairs, so
//! `family=divisor_at z0=0 E=1` is a complete configuration. `#` starts a
//! comment. Unknown keys are rejected by name.

use num_complex::Complex64;

use crate::background::ModuliPoint;
use crate::error::{Error, Result};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_rho: usize,
    pub n_t: usize,
    pub rho_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_rho: 512,
            n_t: 32,
            rho_max: 40.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<std::sync::Arc<crate::geometry::Grid>> {
        crate::geometry::Grid::new(self.n_rho, self.n_t, self.rho_max)
    }
}

/// One axis of a sweep: a family with an energy range and divisor locations.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub divisor_free_energies: Vec<f64>,
    pub divisor_energies: Vec<f64>,
    pub z0_list: Vec<Complex64>,
}

impl SweepSpec {
    /// The standard sweep: divisor-free E in {0.25, ..., 1.75} and divisor
    /// points E in {1.0, 1.25, 1.5, 1.75} x z0 in {0, 1, 2+i}.
    pub fn standard() -> Self {
        Self {
            divisor_free_energies: (1..=7).map(|k| 0.25 * k as f64).collect(),
            divisor_energies: (4..=7).map(|k| 0.25 * k as f64).collect(),
            z0_list: vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 1.0),
            ],
        }
    }

    pub fn points(&self) -> Vec<ModuliPoint> {
        let mut pts = Vec::new();
        for &e in &self.divisor_free_energies {
            pts.push(ModuliPoint::divisor_free(e));
        }
        for &e in &self.divisor_energies {
            for &z0 in &self.z0_list {
                pts.push(ModuliPoint::divisor_at(z0, e));
            }
        }
        pts
    }
}

#[derive(Debug, Clone)]
pub struct LimitSpec {
    pub energy: f64,
    pub ladder: Vec<Complex64>,
    pub window_rho: f64,
}

impl Default for LimitSpec {
    fn default() -> Self {
        Self {
            energy: 1.0,
            ladder: [2.0, 4.0, 8.0, 16.0]
                .iter()
                .map(|x| Complex64::new(*x, 0.0))
                .collect(),
            window_rho: 3.0,
        }
    }
}

/// Everything a run needs besides the subcommand itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub point: Option<ModuliPoint>,
    pub mass: f64,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub sweep: SweepSpec,
    pub limit: LimitSpec,
    pub decay_window: Option<(f64, f64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            point: None,
            mass: 1.0,
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            sweep: SweepSpec::standard(),
            limit: LimitSpec::default(),
            decay_window: None,
        }
    }
}

/// Parse a complex number: `2`, `-1.5`, `i`, `-i`, `3i`, `2+i`, `2-1.5i`.
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::Parse("empty complex literal".into()));
    }
    let fail = || Error::Parse(format!("cannot parse '{text}' as a complex number"));
    if !s.ends_with('i') {
        return s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| fail());
    }
    let body = &s[..s.len() - 1];
    // split off the imaginary part at the last +/- that is not an exponent sign
    let mut split = None;
    for (idx, c) in body.char_indices().skip(1) {
        if (c == '+' || c == '-') && !matches!(body.as_bytes()[idx - 1], b'e' | b'E') {
            split = Some(idx);
        }
    }
    let (re_str, im_str) = match split {
        Some(idx) => (&body[..idx], &body[idx..]),
        None => ("", body),
    };
    let re = if re_str.is_empty() {
        0.0
    } else {
        re_str.parse::<f64>().map_err(|_| fail())?
    };
    let im = match im_str {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| fail())?,
    };
    Ok(Complex64::new(re, im))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("key '{key}': '{value}' is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("key '{key}': '{value}' is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Parse(format!("key '{key}': '{other}' is not a boolean"))),
    }
}

fn parse_complex_list(key: &str, value: &str) -> Result<Vec<Complex64>> {
    value
        .split(',')
        .map(|tok| {
            parse_complex(tok).map_err(|_| {
                Error::Parse(format!("key '{key}': '{}' is not a complex number", tok.trim()))
            })
        })
        .collect()
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|tok| parse_f64(key, tok)).collect()
}

/// Parse configuration text into a validated [`RunConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut family: Option<&str> = None;
    let mut energy: Option<f64> = None;
    let mut z0: Option<Complex64> = None;
    let mut sweep_family: Option<String> = None;
    let mut sweep_range: (Option<f64>, Option<f64>, Option<f64>) = (None, None, None);
    let mut sweep_z0: Option<Vec<Complex64>> = None;
    let mut sweep_energies: Option<Vec<f64>> = None;
    let mut decay_lo = None;
    let mut decay_hi = None;

    let mut section = String::new();
    for raw_line in text.lines() {
        let line = match raw_line.find('#') {
            Some(idx) => &raw_line[..idx],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Parse(format!("malformed section header '{line}'")));
            }
            section = line[1..line.len() - 1].trim().to_ascii_lowercase();
            match section.as_str() {
                "grid" | "solver" | "sweep" | "limit" | "decay" => {}
                other => return Err(Error::Parse(format!("unknown section [{other}]"))),
            }
            continue;
        }
        // a line is either one assignment (value may contain commas/spaces)
        // or several whitespace-separated single-token assignments
        let assignments: Vec<(String, String)> = {
            let eq_count = line.matches('=').count();
            if eq_count == 0 {
                return Err(Error::Parse(format!("expected key = value, got '{line}'")));
            } else if eq_count == 1 {
                let (k, v) = line.split_once('=').unwrap();
                vec![(k.trim().to_string(), v.trim().to_string())]
            } else {
                line.split_whitespace()
                    .map(|tok| {
                        tok.split_once('=')
                            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                            .ok_or_else(|| {
                                Error::Parse(format!("expected key=value, got '{tok}'"))
                            })
                    })
                    .collect::<Result<_>>()?
            }
        };
        for (key, value) in assignments {
            let k = key.to_ascii_lowercase();
            match (section.as_str(), k.as_str()) {
                ("", "family") => {
                    family = Some(match value.as_str() {
                        "divisor_free" => "divisor_free",
                        "divisor_at" => "divisor_at",
                        other => {
                            return Err(Error::Parse(format!(
                                "key 'family': unknown family '{other}' \
                                 (expected divisor_free or divisor_at)"
                            )))
                        }
                    })
                }
                ("", "e" | "energy") => energy = Some(parse_f64(&key, &value)?),
                ("", "z0") => z0 = Some(parse_complex(&value)?),
                ("", "mass" | "m") => cfg.mass = parse_f64(&key, &value)?,
                ("grid", "n_rho") => cfg.grid.n_rho = parse_usize(&key, &value)?,
                ("grid", "n_t") => cfg.grid.n_t = parse_usize(&key, &value)?,
                ("grid", "rho_max") => cfg.grid.rho_max = parse_f64(&key, &value)?,
                ("solver", "residual_tol") => cfg.solver.residual_tol = parse_f64(&key, &value)?,
                ("solver", "max_newton_iters") => {
                    cfg.solver.max_newton_iters = parse_usize(&key, &value)?
                }
                ("solver", "damping") => cfg.solver.damping = parse_f64(&key, &value)?,
                ("solver", "linear_tol") => cfg.solver.linear_tol = parse_f64(&key, &value)?,
                ("solver", "monotone_fallback") => {
                    cfg.solver.monotone_fallback = parse_bool(&key, &value)?
                }
                ("sweep", "family") => sweep_family = Some(value.clone()),
                ("sweep", "e_start") => sweep_range.0 = Some(parse_f64(&key, &value)?),
                ("sweep", "e_stop") => sweep_range.1 = Some(parse_f64(&key, &value)?),
                ("sweep", "e_step") => sweep_range.2 = Some(parse_f64(&key, &value)?),
                ("sweep", "e_list") => sweep_energies = Some(parse_f64_list(&key, &value)?),
                ("sweep", "z0_list") => sweep_z0 = Some(parse_complex_list(&key, &value)?),
                ("limit", "e" | "energy") => cfg.limit.energy = parse_f64(&key, &value)?,
                ("limit", "ladder") => cfg.limit.ladder = parse_complex_list(&key, &value)?,
                ("limit", "window_rho") => cfg.limit.window_rho = parse_f64(&key, &value)?,
                ("decay", "window_lo") => decay_lo = Some(parse_f64(&key, &value)?),
                ("decay", "window_hi") => decay_hi = Some(parse_f64(&key, &value)?),
                (sec, _) => {
                    let place = if sec.is_empty() {
                        "top level".to_string()
                    } else {
                        format!("section [{sec}]")
                    };
                    return Err(Error::Parse(format!("unknown key '{key}' at {place}")));
                }
            }
        }
    }

    if let Some(fam) = family {
        let e = energy.ok_or_else(|| Error::Parse("key 'E' is required with 'family'".into()))?;
        let point = match fam {
            "divisor_free" => {
                if z0.is_some() {
                    return Err(Error::Parse(
                        "key 'z0' is not allowed with family = divisor_free".into(),
                    ));
                }
                ModuliPoint::divisor_free(e)
            }
            _ => {
                let z0 = z0
                    .ok_or_else(|| Error::Parse("key 'z0' is required with divisor_at".into()))?;
                ModuliPoint::divisor_at(z0, e)
            }
        };
        point.validate()?;
        cfg.point = Some(point);
    } else if energy.is_some() || z0.is_some() {
        return Err(Error::Parse("key 'family' is required with 'E'/'z0'".into()));
    }

    // an explicit energy range/list replaces the standard sweep
    let energies: Option<Vec<f64>> = match (sweep_energies, sweep_range) {
        (Some(list), _) => Some(list),
        (None, (Some(start), Some(stop), Some(step))) => {
            if !(step > 0.0 && stop >= start) {
                return Err(Error::Parse(
                    "keys 'e_start'/'e_stop'/'e_step': need e_step > 0 and e_stop >= e_start"
                        .into(),
                ));
            }
            let n = ((stop - start) / step + 0.5).floor() as usize;
            Some((0..=n).map(|k| start + step * k as f64).collect())
        }
        (None, (None, None, None)) => None,
        _ => {
            return Err(Error::Parse(
                "keys 'e_start'/'e_stop'/'e_step' must be given together".into(),
            ))
        }
    };
    if let Some(energies) = energies {
        let fam = sweep_family.as_deref().unwrap_or("divisor_free");
        match fam {
            "divisor_free" => {
                cfg.sweep = SweepSpec {
                    divisor_free_energies: energies,
                    divisor_energies: vec![],
                    z0_list: vec![],
                };
            }
            "divisor_at" => {
                cfg.sweep = SweepSpec {
                    divisor_free_energies: vec![],
                    divisor_energies: energies,
                    z0_list: sweep_z0
                        .clone()
                        .ok_or_else(|| {
                            Error::Parse("key 'z0_list' is required for a divisor_at sweep".into())
                        })?,
                };
            }
            other => {
                return Err(Error::Parse(format!(
                    "key 'family' in [sweep]: unknown family '{other}'"
                )))
            }
        }
    } else if let Some(z0s) = sweep_z0 {
        cfg.sweep.z0_list = z0s;
    }

    cfg.decay_window = match (decay_lo, decay_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(Error::Parse(
                "keys 'window_lo'/'window_hi' must be given together".into(),
            ))
        }
    };

    if !(cfg.mass > 0.0) {
        return Err(Error::Parse(format!(
            "key 'mass': {} must be positive",
            cfg.mass
        )));
    }
    cfg.solver.validate()?;
    for p in cfg.sweep.points() {
        p.validate()?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::Family;

    #[test]
    fn minimal_single_line() {
        let cfg = parse_config("family=divisor_at z0=0 E=1").unwrap();
        let p = cfg.point.unwrap();
        assert_eq!(p.energy, 1.0);
        assert!(matches!(p.family, Family::DivisorAt(z) if z.norm() == 0.0));
        assert_eq!(cfg.grid, GridSpec::default());
        assert_eq!(cfg.solver.residual_tol, 1e-10);
    }

    #[test]
    fn bradlow_rejection() {
        let err = parse_config("family=divisor_free E=2.0").unwrap_err();
        assert!(err.to_string().contains("Bradlow"), "{err}");
    }

    #[test]
    fn sweep_range_expansion() {
        let cfg = parse_config(
            "[sweep]\nfamily = divisor_free\ne_start = 1.0\ne_stop = 1.9\ne_step = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep.points().len(), 10);
        assert!((cfg.sweep.divisor_free_energies[9] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_named() {
        let err = parse_config("familly=divisor_free").unwrap_err();
        assert!(err.to_string().contains("familly"), "{err}");
        let err = parse_config("[grid]\nn_phi = 3").unwrap_err();
        assert!(err.to_string().contains("n_phi"), "{err}");
        assert!(err.to_string().contains("[grid]"), "{err}");
    }

    #[test]
    fn sections_apply() {
        let text = "family = divisor_free\nE = 0.5\n\n[grid]\nn_rho = 128\nn_t = 8\n\
                    rho_max = 60\n[solver]\nresidual_tol = 1e-8\nmonotone_fallback = false\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid.n_rho, 128);
        assert_eq!(cfg.grid.n_t, 8);
        assert_eq!(cfg.grid.rho_max, 60.0);
        assert_eq!(cfg.solver.residual_tol, 1e-8);
        assert!(!cfg.solver.monotone_fallback);
    }

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("2").unwrap(), Complex64::new(2.0, 0.0));
        assert_eq!(parse_complex("-1.5").unwrap(), Complex64::new(-1.5, 0.0));
        assert_eq!(parse_complex("i").unwrap(), Complex64::new(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert_eq!(parse_complex("3i").unwrap(), Complex64::new(0.0, 3.0));
        assert_eq!(parse_complex("2+i").unwrap(), Complex64::new(2.0, 1.0));
        assert_eq!(parse_complex("2-1.5i").unwrap(), Complex64::new(2.0, -1.5));
        assert_eq!(parse_complex("1e-2+2e-3i").unwrap(), Complex64::new(0.01, 0.002));
        assert!(parse_complex("").is_err());
        assert!(parse_complex("2+").is_err());
        assert!(parse_complex("banana").is_err());
    }

    #[test]
    fn divisor_family_validation_through_config() {
        let err = parse_config("family=divisor_at z0=1 E=0.5").unwrap_err();
        assert!(err.to_string().contains("divisor"), "{err}");
        assert!(parse_config("family=divisor_free z0=1 E=0.5").is_err());
        assert!(parse_config("E=0.5").is_err());
    }

    #[test]
    fn limit_and_decay_sections() {
        let text = "[limit]\nE = 1.25\nladder = 2, 4, 8\nwindow_rho = 2.5\n\
                    [decay]\nwindow_lo = 18\nwindow_hi = 34\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.limit.energy, 1.25);
        assert_eq!(cfg.limit.ladder.len(), 3);
        assert_eq!(cfg.limit.window_rho, 2.5);
        assert_eq!(cfg.decay_window, Some((18.0, 34.0)));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# a comment\n\nfamily = divisor_free # inline\nE = 0.5\n").unwrap();
        assert!(cfg.point.is_some());
    }
}
