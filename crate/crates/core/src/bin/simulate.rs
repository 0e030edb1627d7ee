//! Command-line front end: runs a scenario and writes CSV plus a manifest.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use driven_tls::scenario::{
    parse_config, run_scenario, Outcome, OutputOptions, Preset, RunError, Scenario, ScenarioDoc,
    Workload,
};

#[derive(Parser, Debug)]
#[command(
    name = "simulate",
    version,
    about = "Driven two-level atom in a lossy cavity"
)]
struct Args {
    /// Scenario JSON file (or a manifest from an earlier run).
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Named preset: fig1a, fig1b, fig2, fig3, sweep or custom.
    #[arg(long)]
    preset: Option<Preset>,
    /// Relative tolerance of the adaptive closed-system integrator.
    #[arg(long)]
    rtol: Option<f64>,
    /// Fixed step of the dissipative integrator.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of output samples (sweep points for the sweep preset).
    #[arg(long)]
    samples: Option<usize>,
    /// Also write the tabulated bath kernel of every dissipative case.
    #[arg(long)]
    dump_kernel: bool,
}

fn resolve(args: &Args) -> Result<Scenario, RunError> {
    let base = match &args.config {
        Some(path) => {
            let s = parse_config(path)?;
            if let Some(p) = args.preset {
                if p != s.preset {
                    return Err(RunError::invalid(
                        "preset",
                        format!(
                            "--preset {} conflicts with {} in the config file",
                            p.name(),
                            s.preset.name()
                        ),
                    ));
                }
            }
            s
        }
        None => Scenario::preset(args.preset.expect("clap requires --config or --preset")),
    };
    if args.rtol.is_none() && args.dt.is_none() && args.samples.is_none() {
        return Ok(base);
    }
    let mut doc: ScenarioDoc = base.to_doc();
    let numerics = doc.numerics.get_or_insert_with(Default::default);
    if args.rtol.is_some() {
        numerics.rtol = args.rtol;
    }
    if args.dt.is_some() {
        numerics.dt = args.dt;
    }
    if let Some(n) = args.samples {
        match &mut doc.sweep {
            Some(sweep) => sweep.points = Some(n),
            None => doc.samples = Some(n),
        }
    }
    doc.resolve()
}

fn run(args: &Args) -> Result<(), RunError> {
    let scenario = resolve(args)?;
    let options = OutputOptions {
        dump_kernel: args.dump_kernel,
    };
    let (outcome, files) = run_scenario(&scenario, &args.out, options)?;
    if let Outcome::Trajectories(results) = &outcome {
        for r in results {
            let d = &r.diagnostics;
            for w in &d.warnings {
                eprintln!("warning [{}]: {w}", d.label);
            }
            if let Some(dt) = d.dt {
                eprintln!(
                    "[{}] dt = {dt:.3e}, kernel tau_max = {:.1}, max |r| = {:.6}",
                    d.label,
                    d.kernel_tau_max.unwrap_or(0.0),
                    d.max_norm
                );
            }
            if let Some(t) = d.first_positivity_violation {
                eprintln!(
                    "warning [{}]: Bloch vector left the unit ball at t = {t:.3} ({} samples)",
                    d.label, d.positivity_violations
                );
            }
        }
    }
    if let Workload::Trajectories { .. } = scenario.workload {
        eprintln!(
            "wrote {} cases to {}",
            scenario.cases().len(),
            files.data.display()
        );
    } else {
        eprintln!("wrote {}", files.data.display());
    }
    for k in &files.kernels {
        eprintln!("wrote {}", k.display());
    }
    eprintln!("wrote {}", files.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
