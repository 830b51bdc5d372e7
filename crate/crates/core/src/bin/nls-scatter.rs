use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nls_scatter::commands;
use nls_scatter::Result;

#[derive(Parser)]
#[command(name = "nls-scatter", version, about = "Long-time dynamics of small 1D cubic NLS solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output (or run) directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the per-velocity sums.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also rerun the forward evolution at dt/2 and write richardson.json.
    #[arg(long, global = true)]
    dt_halve: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial data and write checkpoints and diagnostics.
    Simulate,
    /// Wave-packet coefficients and packet diagnostics of a run directory.
    Gamma,
    /// Scattering profile, its convergence and regularity.
    Profile,
    /// Backward solve for the correction to the approximate solution.
    Complete,
    /// Profile to solution to profile round trip over the T_max sweep.
    Roundtrip,
    /// Fit every registered decay claim and write verdicts.jsonl.
    Verify,
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate => {
            let cfg = commands::load_config(config, out)?;
            let traj = commands::cmd_simulate(&cfg, cli.dt_halve)?;
            println!("{} checkpoints in {}", traj.checkpoints.len(), cfg.output.dir.display());
        }
        Command::Gamma => {
            let dir = commands::run_dir(config, out)?;
            let p = commands::cmd_gamma(&dir)?;
            println!("gamma at {} analysis times", p.rows.len());
        }
        Command::Profile => {
            let dir = commands::run_dir(config, out)?;
            let s = commands::cmd_profile(&dir)?;
            println!(
                "W at t = {}: |W|_L2 = {:.6}, |u0|_L2 = {:.6}, regularity index {}",
                s.extraction_time, s.w_l2, s.u0_l2, s.regularity_index
            );
        }
        Command::Verify => {
            let dir = commands::run_dir(config, out)?;
            for v in commands::cmd_verify(&dir)? {
                println!(
                    "{:<14} {} exponent {:+.4} (target {:+.4}, slack {:.4}, r2 {:.4})",
                    v.claim_id,
                    if v.pass { "pass" } else { "FAIL" },
                    v.measured.exponent,
                    v.target_exponent,
                    v.slack,
                    v.measured.r_squared
                );
            }
        }
        Command::Complete => {
            let cfg = commands::load_config(config, out)?;
            let s = commands::cmd_complete(&cfg)?;
            println!(
                "|v(T_match)|_L2 = {:.3e}, X = {:.3e}, X~ = {:.3e}, forcing guard {:.2e}",
                s.v_match_l2, s.x_norm, s.x_tilde_norm, s.forcing_gap
            );
        }
        Command::Roundtrip => {
            let cfg = commands::load_config(config, out)?;
            for r in commands::cmd_roundtrip(&cfg)? {
                println!(
                    "T_max {:>6}: relative L2 error {:.4e}, forcing guard {:.2e}",
                    r.t_max, r.relative_error, r.forcing_gap
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
