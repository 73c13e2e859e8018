//! Runs a reduced version of the initialization comparison and prints one
//! line per arm. Pass a JSON config path to run that configuration instead.

use anyhow::Result;
use rnnt_lab::harness::{run_experiment, ExperimentConfig};

fn main() -> Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.corpus.train_utterances = 60;
            cfg.corpus.test_utterances = 20;
            cfg.pretrain.fit.epochs = 4;
            cfg.train.epochs = 6;
            cfg
        }
    };
    let report = run_experiment(&cfg)?;
    println!("config {}", report.summary.config_hash);
    for arm in &report.summary.arms {
        match &arm.error {
            Some(e) => println!("{:<12} failed: {e}", arm.arm.name()),
            None => println!(
                "{:<12} token error {:.3}  mean delay {:>6}",
                arm.arm.name(),
                arm.token_error_rate().unwrap_or(f64::NAN),
                arm.mean_delay().map_or("n/a".into(), |d| format!("{d:.2}"))
            ),
        }
    }
    Ok(())
}
