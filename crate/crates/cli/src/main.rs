use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqed_cli::commands::{
    gate_setup, modes_report, qubit_report, resolved_summary, run_gate, run_sweep, GateOverrides, SweepResult,
};
use cqed_cli::config::RunConfig;
use cqed_cli::output::{OutputTarget, Provenance};
use cqed_cli::reproduce::{pinned, reproduce, Check, FigureId};
use cqed_cli::{CliError, Result};
use serde_json::json;

/// Galvanically coupled flux qubits: resonator modes, qubit couplings,
/// parameter sweeps and CPHASE gate simulations.
#[derive(Parser, Debug)]
#[command(name = "cqed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output].dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Deterministic operation; no random numbers are drawn in any mode.
    #[arg(long)]
    seedless: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve (and calibrate) the resonator eigenmodes.
    Modes(Common),
    /// Project each qubit cell onto its two lowest levels.
    Qubit(Common),
    /// Coupling weights over a grid of alpha, alpha4, f1 or f3.
    Sweep(Common),
    /// Simulate the four-step CPHASE gate.
    Gate {
        #[command(flatten)]
        common: Common,
        /// Number of cavity modes (1 to 3).
        #[arg(long)]
        modes: Option<usize>,
        /// Coupling rise and fall time, ns.
        #[arg(long = "ramp-ns")]
        ramp_ns: Option<f64>,
        /// Fock truncation of the fundamental.
        #[arg(long)]
        fock: Option<usize>,
    },
    /// Rerun a pinned configuration and compare with published values.
    Reproduce {
        #[arg(value_enum)]
        id: FigureId,
        /// Replace the pinned configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seedless: bool,
    },
}

fn provenance(command: &str, seedless: bool, cfg: &RunConfig) -> Provenance {
    Provenance::new(command, seedless, cfg, resolved_summary(cfg))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Modes(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let report = modes_report(&cfg)?;
            for m in &report.modes {
                println!(
                    "mode {}: {:.6} GHz, phase slip {:.6}",
                    m.index, m.freq_ghz, m.phase_slip
                );
            }
            let target = OutputTarget::new(c.out.as_deref(), &cfg, "modes");
            let path = target.write_json(&report, &provenance("modes", c.seedless, &cfg))?;
            println!("wrote {}", path.display());
        }
        Command::Qubit(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let report = qubit_report(&cfg)?;
            for (i, q) in report.iter().enumerate() {
                println!(
                    "qubit {}: omega_q {:.6} GHz, E_c {:.6} GHz, c_z {:.6}, c_x {:.6}",
                    i + 1,
                    q.omega_q_ghz,
                    q.ec_ghz,
                    q.first_order.z,
                    q.first_order.x
                );
            }
            let target = OutputTarget::new(c.out.as_deref(), &cfg, "qubit");
            let path = target.write_json(&report, &provenance("qubit", c.seedless, &cfg))?;
            println!("wrote {}", path.display());
        }
        Command::Sweep(c) => {
            let cfg = RunConfig::load(&c.config)?;
            let result = run_sweep(&cfg)?;
            let failed = result.rows.iter().filter(|r| r.values.is_err()).count();
            let target = OutputTarget::new(c.out.as_deref(), &cfg, "sweep");
            let path = target.write_csv(&SweepResult::header(), &result.table(), &provenance("sweep", c.seedless, &cfg))?;
            println!("{} points ({failed} failed), wrote {}", result.rows.len(), path.display());
        }
        Command::Gate {
            common: c,
            modes,
            ramp_ns,
            fock,
        } => {
            let cfg = RunConfig::load(&c.config)?;
            let ov = GateOverrides { modes, ramp_ns, fock };
            let setup = gate_setup(&cfg, ov)?;
            let (_, report) = run_gate(&setup)?;
            println!(
                "fidelity {:.6}, gate time {:.6} ns, omega_r t1 {:.6}",
                report.fidelity, report.gate_time_ns, report.omega_r_t1
            );
            let mut meta = provenance("gate", c.seedless, &cfg);
            meta.resolved["overrides"] = json!({ "modes": modes, "ramp_ns": ramp_ns, "fock": fock });
            let target = OutputTarget::new(c.out.as_deref(), &cfg, "gate");
            let path = target.write_json(&report, &meta)?;
            println!("wrote {}", path.display());
        }
        Command::Reproduce {
            id,
            config,
            out,
            seedless,
        } => {
            let cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => pinned(id)?,
            };
            let rep = reproduce(id, &cfg)?;
            let meta = provenance(&format!("reproduce {}", id.name()), seedless, &cfg);
            let mut target = OutputTarget::new(out.as_deref(), &cfg, id.name());
            target.stem = id.name().to_string();
            let data = target.write_csv(&rep.header, &rep.rows, &meta)?;
            let checks = write_checks(&target, &rep.checks, &meta)?;
            for ch in &rep.checks {
                println!(
                    "[{}] {}: {} (expected {})",
                    if ch.pass { "PASS" } else { "FAIL" },
                    ch.name,
                    ch.value,
                    ch.expected
                );
            }
            println!("wrote {} and {}", data.display(), checks.display());
        }
    }
    Ok(())
}

fn write_checks(target: &OutputTarget, checks: &[Check], meta: &Provenance) -> Result<PathBuf> {
    let t = OutputTarget {
        dir: target.dir.clone(),
        stem: format!("{}_checks", target.stem),
    };
    let header: Vec<String> = Check::COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = checks.iter().map(Check::cells).collect();
    t.write_csv(&header, &rows, meta)
}

fn exit_with(err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_with(&e),
    }
}
