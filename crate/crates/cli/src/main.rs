use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spingate::analysis::{first_time_below, sweep_shift, sweep_shuttle_time, write_shift_csv, write_shuttle_csv};
use spingate::control::ShiftKind;
use spingate::dynamics::adiabatic_cycle_timeline;
use spingate::gate_algebra::identities::{
    run_identity_suite, universality_checks, IdentityCheck, SuiteOptions, IDENTITY_TOLERANCE,
};
use spingate::protocol::{calibrate_tau, GateProtocol};
use spingate::spin_model::{dipolar_max_strength, DipolarPair};

mod config;

use config::{RunConfig, Setup, Tau};

/// Threshold for the shuttle-time summary.
const FLIP_FLOP_TARGET: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad input file or I/O failure. Exit code 1.
    Config(String),
    /// The computation ran but failed a numerical check. Exit code 2.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn numerical(e: spingate::Error) -> CliError {
    match e {
        spingate::Error::Io(e) => CliError::Config(format!("i/o: {e}")),
        e => CliError::Numerical(e.to_string()),
    }
}

fn io_error(e: io::Error) -> CliError {
    CliError::Config(format!("i/o: {e}"))
}

#[derive(Parser)]
#[command(name = "spingate", version, about = "Adiabatic, decoupled electron-nuclear gate simulator")]
struct Cli {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV. Without it the CSV goes to stdout and the summary to stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Randomized checks of the gate algebra against dense products.
    VerifyIdentities,
    /// Measurement-based CZ constructions, branch by branch.
    Universality,
    /// Dwell time giving a conditional phase of pi.
    CalibrateTau,
    /// Single-ramp flip-flop probability against shuttle time.
    SweepShuttle,
    /// Composite-gate error channels against field shifts.
    SweepShift,
    /// Worst-case dipolar couplings between the spin species.
    Dipolar,
    /// Sampled field and hyperfine coupling along one calibrated cycle.
    Schedule,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spingate: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let setup = config.setup()?;
    let pool = match cli.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    let header = vec![
        format!("spingate {}", env!("CARGO_PKG_VERSION")),
        format!("config: {}", config.echo()),
    ];
    let mut buffer = Vec::new();
    let result = pool.install(|| dispatch(cli.command, &config, &setup, &header, &mut buffer));
    if !buffer.is_empty() {
        match &cli.out {
            Some(p) => std::fs::write(p, &buffer)
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?,
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(&buffer).and_then(|_| stdout.flush()).map_err(io_error)?;
            }
        }
    }
    let summary = result?;
    if cli.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn dispatch(
    command: Command,
    config: &RunConfig,
    setup: &Setup,
    header: &[String],
    out: &mut Vec<u8>,
) -> Result<String, CliError> {
    match command {
        Command::VerifyIdentities => verify_identities(config, header, out),
        Command::Universality => universality(config, header, out),
        Command::CalibrateTau => calibrate(setup, header, out),
        Command::SweepShuttle => shuttle(config, setup, header, out),
        Command::SweepShift => shift(config, setup, header, out),
        Command::Dipolar => dipolar(config, setup, header, out),
        Command::Schedule => schedule(setup, header, out),
    }
}

fn write_header(out: &mut Vec<u8>, header: &[String]) -> Result<(), CliError> {
    for line in header {
        writeln!(out, "# {line}").map_err(io_error)?;
    }
    Ok(())
}

fn write_checks(out: &mut Vec<u8>, header: &[String], checks: &[IdentityCheck], tol: f64) -> Result<String, CliError> {
    write_header(out, header)?;
    writeln!(out, "identity,samples,max_error,pass").map_err(io_error)?;
    for c in checks {
        writeln!(out, "{},{},{:e},{}", c.name, c.samples, c.max_error, c.passes(tol)).map_err(io_error)?;
    }
    let failing: Vec<&str> = checks.iter().filter(|c| !c.passes(tol)).map(|c| c.name).collect();
    let worst = checks.iter().map(|c| c.max_error).fold(0.0, f64::max);
    if failing.is_empty() {
        Ok(format!("{} identities hold, worst error {worst:.2e} (tolerance {tol:e})", checks.len()))
    } else {
        Err(CliError::Numerical(format!(
            "{} of {} identities exceed {tol:e}: {}",
            failing.len(),
            checks.len(),
            failing.join(", ")
        )))
    }
}

fn verify_identities(config: &RunConfig, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let report = run_identity_suite(&SuiteOptions {
        seed: config.seed,
        samples: config.random_samples,
        random_states: config.random_states,
        corrupt_convention: config.corrupt_convention,
    });
    write_checks(out, header, &report.checks, IDENTITY_TOLERANCE)
}

fn universality(config: &RunConfig, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let checks = universality_checks(config.seed, config.random_states);
    write_checks(out, header, &checks, 1e-12)
}

fn resolve_tau(setup: &Setup) -> Result<f64, CliError> {
    match setup.tau {
        Tau::Fixed(t) => Ok(t),
        Tau::Calibrate(mode) => calibrate_tau(&setup.params, &setup.schedule, mode).map_err(numerical),
    }
}

fn calibrate(setup: &Setup, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let tau = resolve_tau(setup)?;
    let schedule = setup.schedule.with_tau(tau).map_err(numerical)?;
    let run = adiabatic_cycle_timeline(&setup.params, &schedule.timeline(), tau).map_err(numerical)?;
    let a = setup.params.hyperfine.hyperfine_at(schedule.e_rop).map_err(numerical)?;
    let p = run.params;
    write_header(out, header)?;
    writeln!(out, "quantity,value").map_err(io_error)?;
    for (k, v) in [
        ("tau_ns", tau),
        ("a_rop_mhz", a),
        ("a", p.a),
        ("b", p.b),
        ("c", p.c),
        ("d", p.d),
        ("e", p.e),
        ("f", p.f),
        ("leakage", run.leakage),
        ("ramp_leakage", run.ramp_leakage),
    ] {
        writeln!(out, "{k},{v}").map_err(io_error)?;
    }
    Ok(format!(
        "tau = {tau:.9} ns (A = {a:.3} MHz), f = {:.12} rad, cycle leakage {:.2e}",
        p.f, run.leakage
    ))
}

fn shuttle(config: &RunConfig, setup: &Setup, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let rows = sweep_shuttle_time(&setup.params, &setup.schedule, &config.shuttle_times_ns).map_err(numerical)?;
    write_shuttle_csv(out, header, &rows).map_err(numerical)?;
    Ok(match first_time_below(&rows, FLIP_FLOP_TARGET) {
        Some(t) => format!("flip-flop probability first below {FLIP_FLOP_TARGET:e} at T = {t} ns"),
        None => format!("flip-flop probability never below {FLIP_FLOP_TARGET:e} on this grid"),
    })
}

fn shift(config: &RunConfig, setup: &Setup, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let tau = resolve_tau(setup)?;
    let protocol = GateProtocol::new(setup.params.clone(), setup.schedule.with_tau(tau).map_err(numerical)?)
        .and_then(|p| p.with_idles(config.cycle_idle_ns, config.travel_idle_ns))
        .map_err(numerical)?;
    let sweep = sweep_shift(&protocol, &setup.shift_kinds, &config.shift_deltas).map_err(numerical)?;
    write_shift_csv(out, header, &sweep).map_err(numerical)?;
    let mut parts = vec![format!("tau = {tau:.6} ns")];
    for kind in [ShiftKind::Static, ShiftKind::Alternating] {
        if let Some(s) = sweep.slope(kind, "max_phase") {
            parts.push(format!("{} slope {s:.3}", kind.name()));
        }
    }
    parts.push(format!("baseline worst phase probability {:.2e}", sweep.baseline.max_phase_probability()));
    Ok(parts.join(", "))
}

fn dipolar(config: &RunConfig, setup: &Setup, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let c = setup.params.constants;
    let r = config.dipolar_r_nm;
    let pairs = [
        ("electron-electron", DipolarPair::electron_electron(&c, r)),
        ("electron-nucleus", DipolarPair::electron_nucleus(&c, r)),
        ("nucleus-nucleus", DipolarPair::nucleus_nucleus(&c, r)),
    ];
    write_header(out, header)?;
    writeln!(out, "pair,r_nm,max_coupling_hz").map_err(io_error)?;
    let mut parts = Vec::new();
    for (name, pair) in pairs {
        let hz = dipolar_max_strength(&pair, &c).map_err(numerical)?;
        writeln!(out, "{name},{r},{hz}").map_err(io_error)?;
        parts.push(format!("{name} {}", human_hz(hz)));
    }
    Ok(format!("at r = {r} nm: {}", parts.join(", ")))
}

fn human_hz(hz: f64) -> String {
    match hz.abs() {
        x if x >= 1e6 => format!("{:.1} MHz", hz / 1e6),
        x if x >= 1e3 => format!("{:.1} kHz", hz / 1e3),
        _ => format!("{hz:.1} Hz"),
    }
}

fn schedule(setup: &Setup, header: &[String], out: &mut Vec<u8>) -> Result<String, CliError> {
    let tau = resolve_tau(setup)?;
    let s = setup.schedule.with_tau(tau).map_err(numerical)?;
    write_header(out, header)?;
    s.write_csv(out, &setup.params.hyperfine).map_err(numerical)?;
    Ok(format!(
        "{} samples over {:.4} ns (tau = {tau:.6} ns)",
        s.samples().len(),
        s.total_duration()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_units() {
        assert_eq!(human_hz(1.037e8), "103.7 MHz");
        assert_eq!(human_hz(63_887.0), "63.9 kHz");
        assert_eq!(human_hz(39.4), "39.4 Hz");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 2);
        assert_eq!(numerical(spingate::Error::ZeroCzRate).exit_code(), 2);
    }
}
