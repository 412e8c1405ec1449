use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use podflow::experiment::{emit_report, plan, run_experiment, write_artifacts, ExperimentConfig, RunOptions};
use podflow::net::read_bundle;

#[derive(Parser)]
#[command(name = "podflow", version, about = "Surrogate reduced-order model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the experiment id in the config (1-4).
        #[arg(long)]
        experiment: Option<u8>,
        /// Print the resolved config and sample counts without training.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory; defaults to the config's, then `out/expN`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the layout and statistics of a network bundle.
    Inspect {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // stage errors already include their cause in the message
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> podflow::Result<()> {
    match cmd {
        Command::Run {
            config,
            experiment,
            dry_run,
            workers,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config, experiment).map_err(|e| e.in_stage("config", 0))?;
            if dry_run {
                println!("{}", cfg.to_json_string()?);
                print!("{}", plan(&cfg)?);
                return Ok(());
            }
            let dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from(format!("out/exp{}", cfg.experiment)));
            let output = run_experiment(&cfg, &RunOptions { workers })?;
            emit_report(&output.report, &dir).map_err(|e| e.in_stage("report", cfg.seed))?;
            write_artifacts(&output, &dir).map_err(|e| e.in_stage("artifacts", cfg.seed))?;
            print!("{}", output.report.to_text());
            println!("\nwrote {}", dir.display());
            Ok(())
        }
        Command::Inspect { bundle } => {
            let net = read_bundle(&bundle)?;
            println!("bundle:      {}", bundle.display());
            println!("layers:      {:?}", net.dims());
            println!("parameters:  {}", net.n_params());
            println!("activation:  leaky ReLU (slope {}), output {:?}", net.slope(), net.output_activation());
            println!("init seed:   {}", net.seed());
            println!("normalized:  {}", net.normalization().is_some());
            for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
                println!(
                    "  layer {}: {}x{}  |W|max {:.4e}  |b|max {:.4e}",
                    l + 1,
                    w.nrows(),
                    w.ncols(),
                    w.amax(),
                    b.amax()
                );
            }
            Ok(())
        }
    }
}
