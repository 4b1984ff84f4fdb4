use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use alrom_cli::config::{load, ModeSpec, RunConfig};
use alrom_cli::error::{CliError, CliResult};
use alrom_cli::stages::{self, Layout};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alrom", version, about = "Ablowitz-Ladik lattice full-order and reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value configuration file layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// conservative, damped or damped_stride20.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Mode counts, e.g. `20,30` or `40:49` (N_r:N_d).
    #[arg(long, global = true)]
    modes: Option<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the full-order lattice and store snapshots.
    Fom,
    /// Build POD bases, DEIM points and reduced operators.
    Reduce,
    /// Integrate the reduced models.
    Rom,
    /// Tabulate reduced against full-order results.
    Compare,
    /// fom, reduce, rom and compare over the mode sweep.
    Pipeline,
}

/// Explicit flags win; otherwise a later stage reuses the `run.cfg` left by
/// an earlier one.
fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        None => None,
    };
    let mut cfg = if text.is_none() && cli.preset.is_none() {
        match cli.out.as_deref().map(|o| o.join("run.cfg")).filter(|p| p.exists()) {
            Some(p) => {
                let saved = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                load(None, Some(&saved))?
            }
            None => load(None, None)?,
        }
    } else {
        load(cli.preset.as_deref(), text.as_deref())?
    };
    if let Some(out) = &cli.out {
        cfg = cfg.with_entry("output.dir", &out.to_string_lossy())?;
    }
    Ok(cfg)
}

fn print_models(models: &[stages::ModelReport]) {
    for m in models {
        println!(
            "{}: N_r = {} N_d = {} captured p/q/m = {:.6e}/{:.6e}/{:.6e} cond = {:.4e}",
            m.spec.label(),
            m.spec.n_r,
            m.spec.n_d,
            m.captured_p,
            m.captured_q,
            m.captured_m,
            m.condition_number
        );
    }
}

fn print_rows(rows: &[stages::CompareRow]) {
    println!("n_r n_d rel_error h_{0} i_{0}", rows.first().map_or("aggregate", |r| r.aggregate_kind));
    for r in rows {
        println!("{} {} {:.3e} {:.3e} {:.3e}", r.spec.n_r, r.spec.n_d, r.rel_error, r.h_aggregate, r.i_aggregate);
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let modes: Option<Vec<ModeSpec>> = stages::modes_argument(cli.modes.as_deref())?;
    let layout = Layout::new(cfg.output_dir.clone());
    let modes = modes.as_deref();
    match cli.command {
        Command::Fom => {
            stages::write_run_config(&cfg, &layout)?;
            let r = stages::run_fom(&cfg, &layout)?;
            println!("steps = {} samples = {}", r.steps, r.samples);
            println!("H(0) = {:.16e} max drift = {:.3e}", r.hamiltonian0, r.hamiltonian_max_drift);
            println!("I(0) = {:.16e} max drift = {:.3e}", r.momentum0, r.momentum_max_drift);
            if let (Some(id), Some(ratio)) = (r.identity_max, r.ratio_max_deviation) {
                println!("scaled identity residual H/I = {:.3e}/{:.3e}", id.0, id.1);
                println!("decay ratio deviation H/I = {:.3e}/{:.3e}", ratio.0, ratio.1);
            }
        }
        Command::Reduce => {
            let r = stages::run_reduce(&cfg, &layout, modes)?;
            println!("snapshot columns = {}", r.snapshot_columns);
            println!("tolerance ranks p/q/m = {}/{}/{}", r.kappa_ranks.0, r.kappa_ranks.1, r.kappa_ranks.2);
            print_models(&r.models);
        }
        Command::Rom => {
            for r in stages::run_rom(&cfg, &layout, modes)? {
                println!(
                    "{} ({}): reduced H drift = {:.3e} I drift = {:.3e}",
                    r.spec.label(),
                    r.variant.label(),
                    r.hamiltonian_max_drift,
                    r.momentum_max_drift
                );
            }
        }
        Command::Compare => print_rows(&stages::run_compare(&cfg, &layout, modes)?),
        Command::Pipeline => {
            let r = stages::run_pipeline(&cfg, &layout, modes)?;
            print_models(&r.reduce.models);
            print_rows(&r.rows);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("alrom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
