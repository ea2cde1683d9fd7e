//! Scratch probe: reduced-scale strengthened-sender experiment — checks the
//! attribution and adaptive-adjacency directional signatures.

use stgl::attribution::{integrated_gradients, zero_baselines};
use stgl::graphdata::Split;
use stgl::model::ModelConfig;
use stgl::simulator::{build_simulation_dataset, ClassDef, SimulationSpec};
use stgl::tape::Tape;
use stgl::trainer::{evaluate, train, TrainConfig};

fn main() {
    let n = 60usize;
    let t = 64usize;
    let spec = SimulationSpec {
        n_nodes: n,
        n_communities: 6,
        t_len: t,
        samples_per_class: 80,
        seed: 13,
        class_defs: vec![
            ClassDef::StrengthenedSenders { nodes: (18..30).collect(), weight: 5.0 },
            ClassDef::StrengthenedSenders { nodes: (30..42).collect(), weight: 5.0 },
        ],
        ..Default::default()
    };
    let dataset = build_simulation_dataset(&spec).expect("dataset");
    let model_config = ModelConfig::with_defaults(n, t, 2);
    let train_config = TrainConfig { epochs: 20, seed: 1, ..Default::default() };
    let model = train(&model_config, &train_config, &dataset).expect("training").model;
    let rep = evaluate(&model, &dataset, Split::Test).expect("eval");
    println!("test accuracy {:.4}", rep.accuracy());

    let (base_a, base_x) = zero_baselines(n, t);
    let senders = [(0usize, 18usize..30usize), (1, 30..42)];
    for (class, block) in &senders {
        let idx: Vec<usize> = dataset
            .split_indices(Split::Test)
            .into_iter()
            .filter(|&i| dataset.samples[i].label == *class)
            .take(10)
            .collect();
        let mut col_sum = vec![0.0f64; n];
        let mut adp_col_sum = vec![0.0f64; n];
        for &i in &idx {
            let s = &dataset.samples[i];
            let r = integrated_gradients(&model, &s.adjacency, &s.signals, *class, 50, &base_a, &base_x)
                .expect("finite IG");
            for j in 0..n {
                col_sum[j] += (0..n).map(|i2| r.attr_a.data()[i2 * n + j].abs()).sum::<f64>();
            }
            let mut tape = Tape::new();
            let cache = model
                .forward_on_tape(&mut tape, &s.adjacency, &s.signals, false, None)
                .expect("forward");
            let a_adp = tape.value(cache.a_adp.expect("adaptive arm on"));
            for j in 0..n {
                adp_col_sum[j] += (0..n).map(|i2| a_adp.data()[i2 * n + j]).sum::<f64>();
            }
        }
        let k = block.clone().count();
        let inside: f64 = block.clone().map(|j| col_sum[j]).sum::<f64>() / k as f64;
        let outside: f64 =
            (0..n).filter(|j| !block.contains(j)).map(|j| col_sum[j]).sum::<f64>() / (n - k) as f64;
        let adp_inside: f64 = block.clone().map(|j| adp_col_sum[j]).sum::<f64>() / k as f64;
        let adp_outside: f64 =
            (0..n).filter(|j| !block.contains(j)).map(|j| adp_col_sum[j]).sum::<f64>() / (n - k) as f64;
        println!(
            "class {}: Attr_A col avg in {:.4e} out {:.4e} ({}); A_adp col mean in {:.4e} out {:.4e} ({})",
            class,
            inside,
            outside,
            if inside > outside { "ok" } else { "VIOLATED" },
            adp_inside,
            adp_outside,
            if adp_inside < adp_outside { "ok" } else { "VIOLATED" }
        );
    }
}
