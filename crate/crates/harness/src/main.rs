use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lincf_harness::{commands, Config, HarnessError, Result};

/// Complementary attitude filters and measurement-driven attitude control.
///
/// Euler angles in configuration and logs are aerospace Z-Y-X (roll, pitch,
/// yaw) in degrees, in a North-East-Down inertial frame.
#[derive(Debug, Parser)]
#[command(name = "lincf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the vector filters and TRIAD on a simulated scenario or an IMU log.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// IMU log to replay (header t,ax,ay,az,mx,my,mz,wx,wy,wz).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Closed-loop attitude stabilization on a simulated rigid body.
    Control {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop runs from random initial conditions.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Check filter gains, solve the Lyapunov equations and write gain files.
    DesignGains {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; bench defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// direct, passive or both.
    #[arg(long)]
    variant: Option<String>,
    /// Filter order; uses binomial gains.
    #[arg(long)]
    order: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(v) = &self.variant {
            cfg.filter.variant = v.clone();
        }
        if let Some(n) = self.order {
            cfg.filter.order = n;
            cfg.filter.gains.clear();
            cfg.filter.gains_file = None;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { common, input } => {
            let cfg = common.load()?;
            for o in commands::estimate(&cfg, input.as_deref(), &common.out)? {
                let eta = o
                    .metrics
                    .final_bias_error_norm
                    .map_or(String::new(), |e| format!(", final bias error {e:.3e} rad/s"));
                println!("{}: wrote {}{eta}", o.variant, o.csv.display());
            }
        }
        Command::Control { common } => {
            let cfg = common.load()?;
            let o = commands::control(&cfg, &common.out)?;
            let m = &o.metrics;
            println!(
                "wrote {}: final attitude error {:.4} deg, settled: {}",
                o.csv.display(),
                m.final_attitude_error_deg.unwrap_or(f64::NAN),
                m.settling_time.map_or("no".to_string(), |t| format!("at {t:.2} s")),
            );
        }
        Command::Sweep { common, count } => {
            let cfg = common.load()?;
            let o = commands::sweep(&cfg, count, &common.out)?;
            let s = &o.summary;
            println!(
                "{}/{} converged ({} diverged), wrote {}",
                s.converged,
                s.count,
                s.diverged,
                o.csv.display()
            );
        }
        Command::DesignGains { common } => {
            let cfg = common.load()?;
            for (path, f) in commands::design_gains(&cfg, &common.out)? {
                println!(
                    "{}: order {}, hurwitz {}, passive-admissible {}, wrote {}",
                    f.variant,
                    f.order,
                    f.hurwitz,
                    f.passive_admissible,
                    path.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
