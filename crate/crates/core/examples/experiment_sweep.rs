//! Runs a shortened fixed-field experiment on four worker threads and
//! writes the report and artifacts into `out/experiment_sweep/`.

use podflow::experiment::{emit_report, run_experiment, write_artifacts, ExperimentConfig, RunOptions};

fn main() -> podflow::Result<()> {
    let mut cfg = ExperimentConfig::for_experiment(1)?;
    cfg.training.epochs = 40;
    cfg.sweep.depths = vec![3, 5];
    cfg.sweep.widths = vec![20, 100];

    let out = run_experiment(&cfg, &RunOptions { workers: 4 })?;
    let dir = std::path::Path::new("out/experiment_sweep");
    emit_report(&out.report, dir)?;
    write_artifacts(&out, dir)?;
    print!("{}", out.report.to_text());
    println!("seeds: {:?}", out.report.seeds);
    Ok(())
}
