//! Command-line front end: batch subcommands over the library, with
//! deterministic file outputs (CSV data, JSON reports) suitable for
//! diff-able experiment ledgers.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use bhshock::config::RunConfig;
use bhshock::diagnostics::{
    blowup_estimate, bootstrap_monitor, fit_decay, gradient_rate_monitor, holder_fit,
    profile_convergence, RunReport,
};
use bhshock::evolve::{self, EvolveError, Trajectory};
use bhshock::grid::{Field, Grid1D};
use bhshock::hilbert::{
    hilbert_padded_line, hilbert_pv_point, hilbert_spectral, HilbertError,
};
use bhshock::initdata::build_initial_physical;
use bhshock::profile::{ui_derivatives, ui_eval};
use bhshock::selfsim::{to_selfsimilar, ModulationState, SelfSimError, SelfSimilarFrame};
use bhshock::shooting::Shooter;

#[derive(Parser)]
#[command(name = "bhshock", version, about = "Unstable self-similar shock laboratory for the Burgers-Hilbert equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the self-similar profile U_i and its derivatives.
    Profile {
        /// profile family index (2 = unstable target, 1 = stable control)
        #[arg(long)]
        i: usize,
        /// evaluation point X
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        at: f64,
        /// tabulate this many log-spaced points over [-range, range]
        /// instead of a single point
        #[arg(long)]
        table: Option<usize>,
        /// half-width of the tabulation range
        #[arg(long, default_value_t = 10.0)]
        range: f64,
    },
    /// Run the Hilbert-transform operator checks and report each one.
    HilbertTest {
        /// grid size for the spectral checks
        #[arg(long, default_value_t = 4096)]
        n: usize,
    },
    /// Evolve a configured datum, writing the trajectory and a run report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Newton-shoot the two unstable origin directions along the
    /// checkpoint ladder; emits a JSON-lines trace.
    Shoot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the run report from a stored trajectory directory.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretty-print the headline numbers of a stored run report.
    Report {
        #[arg(long)]
        path: PathBuf,
    },
}

/// Exit codes: 0 success, 1 runtime failure, 2 usage/config error,
/// 3 frame extraction lost the modulation root, 4 state went non-finite.
fn exit_code_for(err: &anyhow_like::Error) -> u8 {
    match err {
        anyhow_like::Error::Config(_) => 2,
        anyhow_like::Error::Degenerate(_) => 3,
        anyhow_like::Error::NonFinite(_) => 4,
        _ => 1,
    }
}

/// Small error umbrella for the binary; keeps the library error types
/// intact while distinguishing the exit-code classes.
mod anyhow_like {
    use super::*;
    use thiserror::Error;

    #[derive(Debug, Error)]
    pub enum Error {
        #[error("{0}")]
        Config(String),
        #[error("modulation extraction degenerated: {0}")]
        Degenerate(String),
        #[error("state became non-finite: {0}")]
        NonFinite(String),
        #[error("{0}")]
        Runtime(String),
        #[error(transparent)]
        Io(#[from] std::io::Error),
    }

    impl From<EvolveError> for Error {
        fn from(e: EvolveError) -> Self {
            match e {
                EvolveError::NonFiniteState { .. } => Error::NonFinite(e.to_string()),
                EvolveError::Frame(SelfSimError::DegenerateModulation(_)) => {
                    Error::Degenerate(e.to_string())
                }
                EvolveError::BadConfig(_) => Error::Config(e.to_string()),
                other => Error::Runtime(other.to_string()),
            }
        }
    }

    impl From<SelfSimError> for Error {
        fn from(e: SelfSimError) -> Self {
            match e {
                SelfSimError::DegenerateModulation(_) => Error::Degenerate(e.to_string()),
                other => Error::Runtime(other.to_string()),
            }
        }
    }

    impl From<bhshock::config::ConfigError> for Error {
        fn from(e: bhshock::config::ConfigError) -> Self {
            Error::Config(e.to_string())
        }
    }

    impl From<bhshock::shooting::ShootError> for Error {
        fn from(e: bhshock::shooting::ShootError) -> Self {
            match e {
                bhshock::shooting::ShootError::BadConfig(_) => Error::Config(e.to_string()),
                bhshock::shooting::ShootError::Evolve(inner) => Error::from(inner),
                other => Error::Runtime(other.to_string()),
            }
        }
    }

    impl From<bhshock::initdata::InitError> for Error {
        fn from(e: bhshock::initdata::InitError) -> Self {
            Error::Config(e.to_string())
        }
    }

    impl From<bhshock::grid::GridError> for Error {
        fn from(e: bhshock::grid::GridError) -> Self {
            Error::Runtime(e.to_string())
        }
    }

    impl From<HilbertError> for Error {
        fn from(e: HilbertError) -> Self {
            Error::Runtime(e.to_string())
        }
    }

    impl From<bhshock::diagnostics::DiagError> for Error {
        fn from(e: bhshock::diagnostics::DiagError) -> Self {
            Error::Runtime(e.to_string())
        }
    }

    impl From<bhshock::profile::ProfileError> for Error {
        fn from(e: bhshock::profile::ProfileError) -> Self {
            Error::Config(e.to_string())
        }
    }

    impl From<serde_json::Error> for Error {
        fn from(e: serde_json::Error) -> Self {
            Error::Runtime(e.to_string())
        }
    }
}

use anyhow_like::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Profile { i, at, table, range } => cmd_profile(i, at, table, range),
        Command::HilbertTest { n } => cmd_hilbert_test(n),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Shoot { config, out } => cmd_shoot(&config, &out),
        Command::Diagnose { config, traj, out } => cmd_diagnose(&config, &traj, &out),
        Command::Report { path } => cmd_report(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn print_profile_row(out: &mut impl Write, x: f64, i: usize) -> Result<(), Error> {
    let u = ui_eval(x, i)?;
    let d = ui_derivatives(x, i, 5)?;
    write!(out, "{x:.17e},{u:.17e}")?;
    for v in &d {
        write!(out, ",{v:.17e}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_profile(i: usize, at: f64, table: Option<usize>, range: f64) -> Result<(), Error> {
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "x,u,du1,du2,du3,du4,du5")?;
    match table {
        None => print_profile_row(&mut out, at, i)?,
        Some(count) => {
            if count < 2 || !(range > 0.0) {
                return Err(Error::Config(
                    "table needs count >= 2 and range > 0".into(),
                ));
            }
            // log-spaced magnitudes on both sides plus the origin
            let lo: f64 = 1e-3;
            let half = count / 2;
            let mut xs = vec![0.0];
            for k in 0..half {
                let m = lo * (range / lo).powf(k as f64 / (half - 1).max(1) as f64);
                xs.push(m);
                xs.push(-m);
            }
            xs.sort_by(f64::total_cmp);
            for x in xs {
                print_profile_row(&mut out, x, i)?;
            }
        }
    }
    Ok(())
}

fn cmd_hilbert_test(n: usize) -> Result<(), Error> {
    let mut failures = 0usize;
    let mut check = |name: &str, observed: f64, tol: f64| {
        let pass = observed <= tol;
        if !pass {
            failures += 1;
        }
        println!(
            "{}: {} (error {observed:.3e}, tolerance {tol:.1e})",
            name,
            if pass { "pass" } else { "FAIL" }
        );
    };

    let grid = Grid1D::symmetric(std::f64::consts::PI, n)?;
    let f = Field::from_fn(grid, |x| x.sin());
    let hf = hilbert_spectral(&f)?;
    let cos_err = hf
        .values()
        .iter()
        .zip(grid.points())
        .map(|(v, x)| (v + x.cos()).abs())
        .fold(0.0f64, f64::max);
    check("spectral sin -> -cos", cos_err, 1e-10);

    let hhf = hilbert_spectral(&hf)?;
    let inv_err = hhf
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a + b).abs())
        .fold(0.0f64, f64::max);
    check("spectral H(H(f)) = -f", inv_err, 1e-10);

    // decaying line profile on a wide window, compared against its exact
    // transform x/(1+x^2); relative to the sup of the exact answer (1/2)
    let wide = Grid1D::symmetric(60.0, 8 * n)?;
    let g = Field::from_fn(wide, |x| 1.0 / (1.0 + x * x));
    let hg = hilbert_padded_line(&g, 8)?;
    let mut rel = 0.0f64;
    for (v, x) in hg.values().iter().zip(wide.points()) {
        if x.abs() <= 20.0 {
            rel = rel.max((v - x / (1.0 + x * x)).abs() / 0.5);
        }
    }
    check("padded line 1/(1+x^2)", rel, 1e-4);

    // fast-decaying datum on a wide window, where the periodic spectral
    // transform and the line principal value agree
    let bump_grid = Grid1D::symmetric(60.0, 32768)?;
    let bump = Field::from_fn(bump_grid, |x| (-x * x).exp());
    let bump_h = hilbert_spectral(&bump)?;
    let bump_spec = bump_h.spectrum();
    let mut pv_err = 0.0f64;
    for k in 0..32 {
        let x = -2.5 + 5.0 * k as f64 / 31.0;
        let spectral = bhshock::grid::jet_from_spectrum(bump_grid, &bump_spec, x, 0)[0];
        let pv = hilbert_pv_point(&bump, x, 1.0)?;
        pv_err = pv_err.max((spectral - pv).abs());
    }
    check("spectral vs principal value", pv_err, 1e-3);

    if failures == 0 {
        Ok(())
    } else {
        Err(Error::Runtime(format!("{failures} hilbert check(s) failed")))
    }
}

/// A report plus the exact configuration that produced it.
#[derive(Serialize)]
struct ReportDocument {
    config: RunConfig,
    report: RunReport,
}

/// Smallest blowup-time gap whose self-similar core stays resolved on the
/// physical grid: the frame length scale gap^{5/4} must cover several
/// grid spacings.
fn resolved_gap_floor(grid: Grid1D) -> f64 {
    (30.0 * grid.spacing()).powf(0.8)
}

/// Rebuild self-similar frames for every resolved ledger entry.
fn resolved_frames(
    traj: &Trajectory,
    x_half_width: f64,
) -> Result<(Vec<SelfSimilarFrame>, Vec<ModulationState>), Error> {
    let x_grid = Grid1D::new(-x_half_width, x_half_width, 512)?;
    let mut frames = Vec::new();
    let mut mods = Vec::new();
    for (u, m) in traj.frames.iter().zip(&traj.modulation) {
        let gap = m.tau - u.time;
        if gap < resolved_gap_floor(u.grid()) {
            continue;
        }
        // skip frames whose window would leave the physical domain
        let len = gap.powf(1.25);
        if !u.grid().contains_interior(m.xi + len * x_half_width)
            || !u.grid().contains_interior(m.xi - len * x_half_width)
        {
            continue;
        }
        frames.push(to_selfsimilar(u, u.time, m, x_grid)?);
        mods.push(m.clone());
    }
    Ok((frames, mods))
}

fn analyze(traj: &Trajectory, cfg: &RunConfig) -> Result<RunReport, Error> {
    let (t_star, x_star) = blowup_estimate(traj)?;
    let gradient_rate_band = gradient_rate_monitor(traj, t_star)?;
    let u_final = traj.frames.last().ok_or_else(|| {
        Error::Runtime("trajectory recorded no frames".into())
    })?;
    let (holder_exponent, holder_stderr) =
        holder_fit(u_final, x_star, cfg.diagnostics.holder_radii)?;

    let (frames, mods) = resolved_frames(traj, cfg.diagnostics.profile_window + 1.0)?;
    if frames.len() < 3 {
        return Err(Error::Runtime(format!(
            "only {} resolved frames; cannot fit profile convergence",
            frames.len()
        )));
    }
    let pc = profile_convergence(&frames)?;

    let mut decay_fits = BTreeMap::new();
    let d2: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| (f.s, f.origin_jet[2].abs()))
        .collect();
    let d3: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| (f.s, f.origin_jet[3].abs()))
        .collect();
    if let Ok(fit) = fit_decay(&d2) {
        decay_fits.insert("d2_origin".to_string(), fit);
    }
    if let Ok(fit) = fit_decay(&d3) {
        decay_fits.insert("d3_origin".to_string(), fit);
    }

    let bootstrap_verdicts = bootstrap_monitor(
        frames.last().unwrap(),
        mods.last().unwrap(),
        &cfg.diagnostics.thresholds,
    );

    Ok(RunReport {
        t_star,
        x_star,
        holder_exponent,
        holder_stderr,
        gradient_rate_band,
        decay_fits,
        nu_estimate: pc.nu_estimate,
        profile_errors: pc.errors,
        bootstrap_verdicts,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_series_csv(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<(), Error> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for (a, b) in rows {
        writeln!(w, "{a:.17e},{b:.17e}")?;
    }
    Ok(())
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), Error> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir)?;
    for (k, u) in traj.frames.iter().enumerate() {
        let mut w = BufWriter::new(fs::File::create(
            frames_dir.join(format!("frame_{k:05}.csv")),
        )?);
        u.write_csv(&mut w)?;
    }
    write_json(&dir.join("modulation.json"), &traj.modulation)?;
    Ok(())
}

fn read_trajectory(dir: &Path) -> Result<Trajectory, Error> {
    let text = fs::read_to_string(dir.join("modulation.json"))?;
    let modulation: Vec<ModulationState> = serde_json::from_str(&text)?;
    let frames_dir = dir.join("frames");
    let mut names: Vec<PathBuf> = fs::read_dir(&frames_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut frames = Vec::with_capacity(names.len());
    for p in names {
        let mut r = std::io::BufReader::new(fs::File::open(&p)?);
        frames.push(Field::read_csv(&mut r)?);
    }
    if frames.len() != modulation.len() {
        return Err(Error::Runtime(format!(
            "trajectory dir has {} frames but {} ledger entries",
            frames.len(),
            modulation.len()
        )));
    }
    Ok(Trajectory {
        frames,
        modulation,
        stopped_by_slope: true,
        steps: 0,
    })
}

fn emit_plots(dir: &Path, report: &RunReport, u_final: &Field) -> Result<(), Error> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    write_series_csv(
        &plots.join("profile_error.csv"),
        "s,sup_error",
        &report.profile_errors,
    )?;
    // cusp structure on the final frame: log distance vs log increment
    let grid = u_final.grid();
    let spectrum = u_final.spectrum();
    let at = |x: f64| bhshock::grid::jet_from_spectrum(grid, &spectrum, x, 0)[0];
    let u0 = at(report.x_star);
    let mut rows = Vec::new();
    let mut r = 0.1 * grid.spacing() * grid.len() as f64;
    while r > 4.0 * grid.spacing() {
        for side in [-1.0, 1.0] {
            let x = report.x_star + side * r;
            if grid.contains_interior(x) {
                let dv = (at(x) - u0).abs();
                if dv > 0.0 {
                    rows.push((r.ln(), dv.ln()));
                }
            }
        }
        r *= 0.5;
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    write_series_csv(&plots.join("cusp.csv"), "log_r,log_increment", &rows)?;
    Ok(())
}

fn emit_decay_plots(
    dir: &Path,
    frames: &[SelfSimilarFrame],
) -> Result<(), Error> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let d2: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| (f.s, f.origin_jet[2].abs()))
        .collect();
    let d3: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| (f.s, f.origin_jet[3].abs()))
        .collect();
    write_series_csv(&plots.join("d2_origin.csv"), "s,abs_d2", &d2)?;
    write_series_csv(&plots.join("d3_origin.csv"), "s,abs_d3", &d3)?;
    Ok(())
}

fn cmd_simulate(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.resolved.json"), cfg.resolved_json())?;

    let grid = cfg.grid.build()?;
    let u0 = build_initial_physical(&cfg.init, grid)?;
    let t0 = -cfg.init.epsilon;
    let mut ev = cfg.evolve.clone();
    ev.hilbert_method = cfg.hilbert.clone();
    let traj = evolve::run(&u0, t0, &ev)?;
    write_trajectory(out, &traj)?;

    let report = analyze(&traj, &cfg)?;
    let (frames, _) = resolved_frames(&traj, cfg.diagnostics.profile_window + 1.0)?;
    emit_plots(out, &report, traj.frames.last().unwrap())?;
    emit_decay_plots(out, &frames)?;
    write_json(
        &out.join("report.json"),
        &ReportDocument {
            config: cfg,
            report,
        },
    )?;
    println!("simulate: wrote {}", out.display());
    Ok(())
}

fn cmd_shoot(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.resolved.json"), cfg.resolved_json())?;

    let mut shooter = Shooter::new(cfg.shoot.clone())?;
    let trace = shooter.shoot_sequence()?;

    let mut w = BufWriter::new(fs::File::create(out.join("trace.jsonl"))?);
    for c in &trace.checkpoints {
        serde_json::to_writer(&mut w, c)?;
        writeln!(w)?;
    }
    write_json(&out.join("trace.json"), &trace)?;
    println!(
        "shoot: alpha* = {:.12e}, beta* = {:.12e} after {} checkpoints",
        trace.alpha_star,
        trace.beta_star,
        trace.checkpoints.len()
    );
    Ok(())
}

fn cmd_diagnose(config: &Path, traj_dir: &Path, out: &Path) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    cfg.validate()?;
    let traj = read_trajectory(traj_dir)?;
    let report = analyze(&traj, &cfg)?;
    write_json(
        out,
        &ReportDocument {
            config: cfg,
            report,
        },
    )?;
    println!("diagnose: wrote {}", out.display());
    Ok(())
}

fn cmd_report(path: &Path) -> Result<(), Error> {
    let text = fs::read_to_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let r = doc
        .get("report")
        .ok_or_else(|| Error::Runtime("no 'report' key in document".into()))?;
    let get = |k: &str| r.get(k).cloned().unwrap_or(serde_json::Value::Null);
    println!("t_star           : {}", get("t_star"));
    println!("x_star           : {}", get("x_star"));
    println!(
        "holder exponent  : {} +/- {}",
        get("holder_exponent"),
        get("holder_stderr")
    );
    println!("gradient band    : {}", get("gradient_rate_band"));
    println!("nu estimate      : {}", get("nu_estimate"));
    println!("decay fits       : {}", get("decay_fits"));
    if let Some(verdicts) = r.get("bootstrap_verdicts").and_then(|v| v.as_array()) {
        for v in verdicts {
            println!(
                "monitor {:<24} pass={} margin={}",
                v.get("name").cloned().unwrap_or_default(),
                v.get("pass").cloned().unwrap_or_default(),
                v.get("margin").cloned().unwrap_or_default()
            );
        }
    }
    Ok(())
}
