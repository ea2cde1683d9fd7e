//! Scratch probe: full-scale 30-epoch training run on simulation I.

use std::time::Instant;
use stgl::graphdata::Split;
use stgl::model::ModelConfig;
use stgl::simulator::{build_simulation_dataset, standard_spec, SimId};
use stgl::trainer::{evaluate, train_with, TrainConfig};

fn main() {
    let mut spec = standard_spec(SimId::I);
    spec.seed = 7;
    let t0 = Instant::now();
    let dataset = build_simulation_dataset(&spec).unwrap();
    println!("dataset built in {:.1}s", t0.elapsed().as_secs_f64());

    let model_config = ModelConfig::with_defaults(200, 256, 2);
    let train_config = TrainConfig { seed: 1, ..Default::default() };
    let t1 = Instant::now();
    let outcome = train_with(&model_config, &train_config, &dataset, &mut |s| {
        println!(
            "epoch {}: train_loss {:.4} val_loss {:.4} val_f1 {:.4} ({:.1}s elapsed)",
            s.epoch,
            s.train_loss,
            s.val_loss,
            s.val_weighted_f1,
            t1.elapsed().as_secs_f64()
        );
    })
    .unwrap();
    println!("best epoch {}", outcome.best_epoch);
    let report = evaluate(&outcome.model, &dataset, Split::Test).unwrap();
    println!(
        "test accuracy {:.4} weighted_f1 {:.4} (total {:.1}s)",
        report.accuracy(),
        report.weighted_f1,
        t1.elapsed().as_secs_f64()
    );
}
