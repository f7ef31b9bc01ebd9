use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tflow::renormalized_pt::{KernelOrder, PtSetup};
use tflow_cli::{cmd_run, cmd_validate, dump_kernel, load_kernel, parse_config, CliError, KernelDump, RunConfig};

#[derive(Parser)]
#[command(name = "tflow", version, about = "Temperature flow of the Anderson dot")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a flow and write observables, kernels and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a flow and print pass/fail per applicable check.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the perturbative kernel at one temperature.
    DumpKernel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        temperature: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a kernel dump and print a summary.
    LoadKernel {
        #[arg(long)]
        path: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok((parse_config(&text)?, text))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let res = match cli.cmd {
        Cmd::Run { config, out } => load_config(&config).and_then(|(cfg, text)| {
            let r = cmd_run(&cfg, &text, out.as_deref())?;
            for w in &r.trajectory.warnings {
                eprintln!("warning: {w}");
            }
            Ok(())
        }),
        Cmd::Validate { config } => {
            load_config(&config).and_then(|(cfg, _)| cmd_validate(&cfg, &mut std::io::stdout()).map(|_| ()))
        }
        Cmd::DumpKernel { config, temperature, out } => load_config(&config).and_then(|(cfg, _)| {
            let pt = PtSetup::new(&cfg.model, cfg.grid);
            let k = pt.sigma(&pt.uniform_temps(temperature), KernelOrder::NextToLeading).map_err(tflow::tflow_core::FlowError::from)?;
            dump_kernel(&out, &KernelDump::from_kernel(&k, temperature))?;
            Ok(())
        }),
        Cmd::LoadKernel { path } => load_kernel(&path).map_err(CliError::from).map(|d| {
            let max = d.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            println!("temperature={} t_max={} dims={:?} max_abs={:.6e}", d.temperature, d.t_max, d.dims, max);
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
