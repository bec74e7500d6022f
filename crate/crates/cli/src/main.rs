use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hydrosplit_cli::{cmd_converge, cmd_infsup, cmd_mesh, cmd_run, exit_code, output_dir, RunConfig};

#[derive(Parser)]
#[command(name = "hydrosplit", about = "Split-step hydrostatic Stokes / Navier-Stokes solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the complete effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Worker threads for assembly and study levels.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory, overrides `outputs.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the column mesh.
    Mesh(Common),
    /// Run the scheme on the manufactured problem.
    Run(Common),
    /// Convergence study over the configured levels.
    Converge(Common),
    /// Discrete inf-sup constants on the configured levels.
    Infsup(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Mesh(c) => ("mesh", c),
        Command::Run(c) => ("run", c),
        Command::Converge(c) => ("converge", c),
        Command::Infsup(c) => ("infsup", c),
    };
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if common.print_config {
        print!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    if common.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let out = output_dir(&cfg, common.out.clone());
    let result = pool.install(|| match name {
        "mesh" => cmd_mesh(&cfg, &out),
        "run" => cmd_run(&cfg, &out),
        "converge" => cmd_converge(&cfg, &out).map(|s| {
            let mut line = format!("pass={}", s.pass);
            for t in &s.thresholds {
                line += &format!(" {}={:.3}", t.norm, t.fitted_order);
            }
            line
        }),
        _ => cmd_infsup(&cfg, &out),
    });
    match result {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
