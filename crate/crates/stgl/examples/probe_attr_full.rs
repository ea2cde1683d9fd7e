//! Scratch probe: criteria-style attribution checks against a trained
//! checkpoint on disk. Args: <dataset-dir> <checkpoint-dir>.

use std::path::Path;

use stgl::attribution::{
    aggregate_attributions, integrated_gradients, min_max_normalized, Differentiable,
    zero_baselines,
};
use stgl::graphdata::{read_dataset, Split};
use stgl::tape::Tape;
use stgl::trainer::load_checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dataset = read_dataset(Path::new(&args[1])).expect("dataset");
    let (model, _, best) = load_checkpoint(Path::new(&args[2])).expect("checkpoint");
    println!("loaded checkpoint (best epoch {})", best);
    let n = 200usize;
    let t = 256usize;
    let (base_a, base_x) = zero_baselines(n, t);

    // --- criterion 5: A_adp sparsity over 100 test samples
    let idx100: Vec<usize> = dataset.split_indices(Split::Test).into_iter().take(100).collect();
    let mut dense = 0.0f64;
    for &i in &idx100 {
        let s = &dataset.samples[i];
        let mut tape = Tape::new();
        let cache = model
            .forward_on_tape(&mut tape, &s.adjacency, &s.signals, false, None)
            .expect("forward");
        let a_adp = tape.value(cache.a_adp.expect("adaptive arm"));
        dense += a_adp.data().iter().filter(|&&v| v > 0.05).count() as f64
            / a_adp.numel() as f64;
    }
    println!("sparsity: {:.3}% entries > 0.05 (bound 10%)", 100.0 * dense / idx100.len() as f64);

    // --- criterion 3: Attr_X source contrast + Attr_A null, 10 samples/class
    let sources = [(0usize, 0usize..60usize), (1, 140..200)];
    let mut col_avg_a: Vec<(usize, Vec<f64>)> = Vec::new();
    for (class, src) in &sources {
        let idx: Vec<usize> = dataset
            .split_indices(Split::Test)
            .into_iter()
            .filter(|&i| dataset.samples[i].label == *class)
            .take(10)
            .collect();
        let mut results = Vec::new();
        for &i in &idx {
            let s = &dataset.samples[i];
            let r = integrated_gradients(&model, &s.adjacency, &s.signals, *class, 50, &base_a, &base_x)
                .expect("IG");
            let a = &r.attr_a;
            let cols: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|i2| a.data()[i2 * n + j].abs()).sum::<f64>() / n as f64)
                .collect();
            col_avg_a.push((*class, cols));
            results.push(r);
        }
        let agg = aggregate_attributions(&results, None).expect("aggregate");
        let norm = min_max_normalized(&agg.mean_x);
        let node_mean =
            |nn: usize| norm.data()[nn * t..(nn + 1) * t].iter().sum::<f64>() / t as f64;
        let src_mean: f64 = src.clone().map(node_mean).sum::<f64>() / src.clone().count() as f64;
        let non: Vec<usize> = (0..n).filter(|x| !src.contains(x)).collect();
        let non_mean: f64 = non.iter().map(|&x| node_mean(x)).sum::<f64>() / non.len() as f64;
        println!(
            "class {}: Attr_X source mean {:.4e} non-source {:.4e} ratio {:.2} (need >= 2)",
            class, src_mean, non_mean, src_mean / non_mean
        );
    }

    // Attr_A block-structure permutation null
    let block = 20usize;
    let block_means = |cols: &[f64]| -> Vec<f64> {
        (0..10)
            .map(|b| cols[b * block..(b + 1) * block].iter().sum::<f64>() / block as f64)
            .collect()
    };
    let stat = |labels: &[usize], data: &[(usize, Vec<f64>)]| -> f64 {
        let mut sums = [vec![0.0; 10], vec![0.0; 10]];
        let mut counts = [0usize; 2];
        for (&lab, (_, cols)) in labels.iter().zip(data) {
            let bm = block_means(cols);
            for (s, v) in sums[lab].iter_mut().zip(&bm) {
                *s += v;
            }
            counts[lab] += 1;
        }
        (0..10)
            .map(|b| (sums[0][b] / counts[0] as f64 - sums[1][b] / counts[1] as f64).abs())
            .fold(0.0f64, f64::max)
    };
    let labels: Vec<usize> = col_avg_a.iter().map(|(c, _)| *c).collect();
    let observed = stat(&labels, &col_avg_a);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut null = Vec::new();
    for _ in 0..400 {
        let mut perm = labels.clone();
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        null.push(stat(&perm, &col_avg_a));
    }
    null.sort_by(f64::total_cmp);
    let p95 = null[(0.95 * (null.len() as f64 - 1.0)).round() as usize];
    println!(
        "Attr_A block stat {:.4e} vs permutation null 95th pct {:.4e} ({})",
        observed,
        p95,
        if observed <= p95 { "ok" } else { "VIOLATED" }
    );

    // --- criterion 6: completeness at M=300 on one sample
    let s = &dataset.samples[dataset.split_indices(Split::Test)[0]];
    let r = integrated_gradients(&model, &s.adjacency, &s.signals, s.label, 300, &base_a, &base_x)
        .expect("IG 300");
    let (f1v, _, _) = model.value_and_grads(&s.adjacency, &s.signals, s.label).unwrap();
    let (f0v, _, _) = model.value_and_grads(&base_a, &base_x, s.label).unwrap();
    let span = (f1v - f0v).abs();
    println!(
        "completeness gap {:.4e} vs 1% bound {:.4e} ({})",
        r.completeness_gap,
        0.01 * span,
        if r.completeness_gap <= 0.01 * span { "ok" } else { "VIOLATED" }
    );
}
