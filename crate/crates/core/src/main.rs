use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use contact_opt::error::Error;
use contact_opt::harness::{run, Mode, Preset, RunConfig, PRESET_NAMES};

#[derive(Parser)]
#[command(about = "Level-set contact analysis and design runs")]
struct Cli {
    /// Problem preset name
    #[arg(long)]
    preset: String,

    /// forward | sweep | gradcheck | optimize
    #[arg(long, default_value = "forward")]
    mode: Mode,

    /// Override the preset mesh resolution
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    mesh: Option<Vec<usize>>,

    /// Output directory for run artifacts
    #[arg(long)]
    out: Option<PathBuf>,

    /// Repeatable key=value preset override
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker thread count (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut preset = Preset::named(&cli.preset).map_err(|_| {
        Error::config(format!(
            "unknown preset `{}` (available: {})",
            cli.preset,
            PRESET_NAMES.join(", ")
        ))
    })?;
    if let Some(mesh) = &cli.mesh {
        preset.mesh = [mesh[0], mesh[1]];
    }
    for ov in &cli.overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{ov}` is not key=value")))?;
        preset.apply_override(key, value)?;
    }
    Ok(RunConfig {
        preset,
        mode: cli.mode,
        out: cli.out.clone(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: failed to set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some_and(|n| n > 1) {
        eprintln!("warning: built without the `parallel` feature; --threads ignored");
    }

    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(code) => {
            if code == 4 {
                eprintln!("gradient check failed");
            }
            ExitCode::from(code as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
