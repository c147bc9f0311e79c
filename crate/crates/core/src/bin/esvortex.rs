//! Command-line front end: solve single moduli points, verify invariants,
//! sweep the moduli space, fit decay exponents, and probe the bubbling limit.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use esvortex::background::ModuliPoint;
use esvortex::config::{parse_complex, parse_config, RunConfig};
use esvortex::run;
use esvortex::Error;

#[derive(Parser)]
#[command(
    name = "esvortex",
    version,
    about = "SU(2) instantons on the Euclidean Schwarzschild manifold via Abelian vortices"
)]
struct Cli {
    /// Key-value configuration file; command-line flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for reports, CSV files, and snapshots
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for the sweep (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Grid resolution as N_RHOxN_T, e.g. 512x32
    #[arg(long, global = true, value_name = "NRxNT")]
    grid: Option<String>,

    /// Outer radial cutoff rho_max
    #[arg(long, global = true, value_name = "R")]
    rho_max: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PointArgs {
    /// Moduli family: divisor_free or divisor_at
    #[arg(long)]
    family: Option<String>,

    /// Energy parameter E in (0, 2)
    #[arg(long, short = 'E', value_name = "E")]
    energy: Option<f64>,

    /// Divisor location, a complex literal like 0, 2+i, -1.5i
    #[arg(long)]
    z0: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one moduli point; write solve.kwsn and report.json
    Solve(PointArgs),
    /// Re-check all invariants from a snapshot or a fresh solve
    Verify {
        #[command(flatten)]
        point: PointArgs,
        /// Snapshot produced by `solve`; omit to solve afresh
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Solve every point of the configured sweep; write sweep.csv
    Sweep,
    /// Fit the far-field decay exponent; write decay.csv and decay.json
    Decay(PointArgs),
    /// Drive the divisor to infinity; write limit.csv and limit.json
    Limit,
}

fn apply_point_args(cfg: &mut RunConfig, args: &PointArgs) -> Result<(), Error> {
    let family = args.family.as_deref();
    let energy = args.energy;
    let z0 = args.z0.as_deref();
    if family.is_none() && energy.is_none() && z0.is_none() {
        return Ok(());
    }
    let energy = energy
        .or(cfg.point.map(|p| p.energy))
        .ok_or_else(|| Error::Parse("missing --energy".into()))?;
    let point = match family {
        Some("divisor_free") => ModuliPoint::divisor_free(energy),
        Some("divisor_at") => {
            let z0 = z0.ok_or_else(|| Error::Parse("divisor_at needs --z0".into()))?;
            ModuliPoint::divisor_at(parse_complex(z0)?, energy)
        }
        Some(other) => {
            return Err(Error::Parse(format!(
                "unknown family '{other}' (expected divisor_free or divisor_at)"
            )))
        }
        None => match (cfg.point, z0) {
            (_, Some(z0)) => ModuliPoint::divisor_at(parse_complex(z0)?, energy),
            (Some(p), None) => ModuliPoint {
                family: p.family,
                energy,
            },
            (None, None) => ModuliPoint::divisor_free(energy),
        },
    };
    point.validate()?;
    cfg.point = Some(point);
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(spec) = &cli.grid {
        let (nr, nt) = spec
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Parse(format!("--grid wants NRxNT, got '{spec}'")))?;
        cfg.grid.n_rho = nr
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad n_rho in --grid '{spec}'")))?;
        cfg.grid.n_t = nt
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad n_t in --grid '{spec}'")))?;
    }
    if let Some(r) = cli.rho_max {
        cfg.grid.rho_max = r;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    let mut cfg = load_config(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .ok();
    let started = Instant::now();
    let code = match &cli.command {
        Command::Solve(point) => {
            apply_point_args(&mut cfg, point)?;
            let report = run::run_solve(&cfg, &cli.out)?;
            println!(
                "{} E={}  degree={:.8}  ym_energy={:.8}  taubes_max={:.8}",
                report.family,
                report.energy_parameter,
                report.degree,
                report.ym_energy,
                report.taubes_max
            );
            println!(
                "converged in {} iterations, residual sup {:.3e}",
                report.iterations, report.residual_sup
            );
            println!("wrote {}", cli.out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Command::Verify { point, snapshot } => {
            apply_point_args(&mut cfg, point)?;
            let checks = run::run_verify(&cfg, snapshot.as_deref())?;
            let mut all = true;
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status}  {:<24} {}", c.name, c.detail);
                all &= c.passed;
            }
            if all {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Sweep => {
            let rows = run::run_sweep(&cfg, &cli.out)?;
            let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "swept {} points, {} failed; wrote {}",
                rows.len(),
                failures,
                cli.out.join("sweep.csv").display()
            );
            for row in rows.iter().filter(|r| r.outcome.is_err()) {
                if let Err(e) = &row.outcome {
                    eprintln!("point E={} failed: {e}", row.point.energy);
                }
            }
            if failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Decay(point) => {
            apply_point_args(&mut cfg, point)?;
            let report = run::run_decay(&cfg, &cli.out)?;
            println!(
                "decay exponent {:.4} over rho in [{}, {}] (expected {})",
                report.decay_exponent, report.window[0], report.window[1], report.expected_exponent
            );
            println!("wrote {}", cli.out.join("decay.csv").display());
            ExitCode::SUCCESS
        }
        Command::Limit => {
            let report = run::run_limit(&cfg, &cli.out)?;
            for (z, d) in report.z0_abs.iter().zip(&report.distances) {
                println!("|z0| = {z:>6}  distance to limit = {d:.6e}");
            }
            println!(
                "monotone decreasing: {}; wrote {}",
                report.monotone_decreasing,
                cli.out.join("limit.csv").display()
            );
            if report.monotone_decreasing {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    };
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    Ok(code)
}
