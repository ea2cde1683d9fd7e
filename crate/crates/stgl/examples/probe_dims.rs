//! Scratch probe: full model dims (N=200, T=256), sample count and optimizer
//! settings taken from env vars for quick trainability experiments.

use stgl::model::ModelConfig;
use stgl::simulator::{standard_spec, build_simulation_dataset, SimId};
use stgl::trainer::{evaluate, train_with, TrainConfig};
use stgl::graphdata::Split;
use std::time::Instant;

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let mut spec = standard_spec(SimId::I);
    spec.seed = 7;
    spec.samples_per_class = env_or("PROBE_SAMPLES", 40);
    let dataset = build_simulation_dataset(&spec).expect("dataset");
    let model_config = ModelConfig::with_defaults(200, 256, 2);
    let train_config = TrainConfig {
        epochs: env_or("PROBE_EPOCHS", 30),
        seed: env_or("PROBE_SEED", 1),
        learning_rate: env_or("PROBE_LR", TrainConfig::default().learning_rate),
        batch_size: env_or("PROBE_BS", TrainConfig::default().batch_size),
        ..Default::default()
    };
    println!(
        "samples/class {} lr {} bs {} epochs {} seed {}",
        spec.samples_per_class,
        train_config.learning_rate,
        train_config.batch_size,
        train_config.epochs,
        train_config.seed
    );
    let t0 = Instant::now();
    let outcome = train_with(&model_config, &train_config, &dataset, &mut |s| {
        println!(
            "epoch {:>2}: train_loss {:.4} val_loss {:.4} val_f1 {:.4} ({:.1}s)",
            s.epoch, s.train_loss, s.val_loss, s.val_weighted_f1, t0.elapsed().as_secs_f64()
        );
    })
    .expect("training");
    let rep = evaluate(&outcome.model, &dataset, Split::Test).expect("eval");
    println!("best epoch {}; test accuracy {:.4}", outcome.best_epoch, rep.accuracy());
}
