//! Scratch probe: is the strengthened-sender dataset separable at all by an
//! oracle statistic? Uses mean lag-1 cross-correlation from each candidate
//! sender block to the rest of the graph.

use stgl::simulator::{build_simulation_dataset, standard_spec, SimId};

fn main() {
    let mut spec = standard_spec(SimId::II);
    spec.seed = 13;
    spec.samples_per_class = 50;
    let dataset = build_simulation_dataset(&spec).expect("dataset");
    let n = spec.n_nodes;
    let t = spec.t_len;

    // mean |corr(x_i(t+1), x_j(t))| over j in block, i outside, per block
    let block_stat = |x: &[f64], block: std::ops::Range<usize>| -> f64 {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for j in block.clone() {
            for i in (0..n).filter(|i| !block.contains(i)).step_by(7) {
                let xi = &x[i * t..(i + 1) * t];
                let xj = &x[j * t..(j + 1) * t];
                let mut num = 0.0;
                let (mut vi, mut vj) = (0.0, 0.0);
                for k in 0..t - 1 {
                    num += xi[k + 1] * xj[k];
                    vi += xi[k + 1] * xi[k + 1];
                    vj += xj[k] * xj[k];
                }
                acc += (num / (vi * vj).sqrt()).abs();
                cnt += 1;
            }
        }
        acc / cnt as f64
    };

    let b1 = (n * 30 / 100)..(n * 50 / 100);
    let b2 = (n * 50 / 100)..(n * 70 / 100);
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut d_means = [0.0f64; 2];
    for s in &dataset.samples {
        let d = block_stat(s.signals.data(), b1.clone()) - block_stat(s.signals.data(), b2.clone());
        let guess = if d > 0.0 { 0 } else { 1 };
        if guess == s.label {
            correct += 1;
        }
        d_means[s.label] += d;
        total += 1;
    }
    println!(
        "oracle accuracy {}/{} = {:.3}; mean stat diff class0 {:+.4e} class1 {:+.4e}",
        correct,
        total,
        correct as f64 / total as f64,
        d_means[0] / (total / 2) as f64,
        d_means[1] / (total / 2) as f64
    );
}
