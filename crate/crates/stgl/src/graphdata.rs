//! Graph construction, signal preprocessing, splits, and the on-disk
//! dataset layout (`manifest.json`, `adjacency/<id>.tns`, `signals/<id>.tns`).
//!
//! Adjacency files store the raw structural matrix; the degree-normalized
//! self-loop form is recomputed on load so the two never drift apart.

use crate::tensor::{Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug)]
pub enum GraphDataError {
    Validation(String),
    Format(String),
    Tensor(TensorError),
    Io(std::io::Error),
}

impl fmt::Display for GraphDataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphDataError::Validation(m) => write!(f, "validation: {}", m),
            GraphDataError::Format(m) => write!(f, "dataset format: {}", m),
            GraphDataError::Tensor(e) => write!(f, "{}", e),
            GraphDataError::Io(e) => write!(f, "i/o: {}", e),
        }
    }
}

impl std::error::Error for GraphDataError {}

impl From<TensorError> for GraphDataError {
    fn from(e: TensorError) -> Self {
        GraphDataError::Tensor(e)
    }
}

impl From<std::io::Error> for GraphDataError {
    fn from(e: std::io::Error) -> Self {
        GraphDataError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One training instance: raw structural matrix, its normalized form,
/// standardized node signals, and a class label.
#[derive(Debug, Clone)]
pub struct GraphSample {
    /// Symmetric nonnegative N×N matrix with zero diagonal.
    pub raw_structural: Tensor,
    /// D̃^{-1/2}(SC+I)D̃^{-1/2} of `raw_structural`.
    pub adjacency: Tensor,
    /// N×T standardized signal matrix.
    pub signals: Tensor,
    pub label: usize,
}

impl GraphSample {
    pub fn from_raw(raw: Tensor, signals: Tensor, label: usize) -> Result<Self, GraphDataError> {
        let adjacency = normalize_adjacency(&raw)?;
        Ok(GraphSample { raw_structural: raw, adjacency, signals, label })
    }

    pub fn n_nodes(&self) -> usize {
        self.raw_structural.shape()[0]
    }

    pub fn t_len(&self) -> usize {
        self.signals.shape()[1]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub n_samples: usize,
    pub n_nodes: usize,
    pub t_len: usize,
    pub class_names: Vec<String>,
    pub samples: Vec<SampleEntry>,
    pub provenance: String,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<GraphSample>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.manifest.class_names.len()
    }

    /// Sample indices belonging to a split, in manifest order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .samples
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id)
            .collect()
    }
}

/// D̃^{-1/2}(SC+I)D̃^{-1/2} with D̃ the degree of SC+I.
pub fn normalize_adjacency(sc: &Tensor) -> Result<Tensor, GraphDataError> {
    let shape = sc.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(GraphDataError::Validation(format!("adjacency must be square, got {:?}", shape)));
    }
    let n = shape[0];
    for i in 0..n {
        if sc.at2(i, i) != 0.0 {
            return Err(GraphDataError::Validation(format!("nonzero diagonal at ({}, {})", i, i)));
        }
        for j in 0..n {
            let v = sc.at2(i, j);
            if v < 0.0 {
                return Err(GraphDataError::Validation(format!("negative entry {} at ({}, {})", v, i, j)));
            }
            if (v - sc.at2(j, i)).abs() > 1e-9 {
                return Err(GraphDataError::Validation(format!("asymmetry at ({}, {}): {} vs {}", i, j, v, sc.at2(j, i))));
            }
        }
    }
    Ok(normalize_with_self_loop(sc))
}

/// Shared self-loop normalization without the structural-matrix validation;
/// operand may carry a nonzero diagonal (the FC path does).
fn normalize_with_self_loop(m: &Tensor) -> Tensor {
    let n = m.shape()[0];
    let mut with_loop = m.clone();
    for i in 0..n {
        let v = with_loop.at2(i, i) + 1.0;
        with_loop.set2(i, i, v);
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| with_loop.at2(i, j)).sum();
        inv_sqrt_deg[i] = 1.0 / deg.sqrt();
    }
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            out.set2(i, j, inv_sqrt_deg[i] * with_loop.at2(i, j) * inv_sqrt_deg[j]);
        }
    }
    out
}

/// Pearson correlation matrix (population convention) of the rows of `x`,
/// negatives clamped to zero, then self-loop degree normalization.
/// Constant rows contribute zero correlation and emit a warning.
pub fn fc_adjacency(x: &Tensor) -> Result<Tensor, GraphDataError> {
    let fc = pearson_matrix(x)?;
    let n = fc.shape()[0];
    let mut clamped = fc;
    for v in clamped.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    // diagonal stays as computed (1 for non-constant rows) before the +I self-loop
    let _ = n;
    Ok(normalize_with_self_loop(&clamped))
}

/// Raw Pearson correlation matrix of the rows of `x` (population std).
pub fn pearson_matrix(x: &Tensor) -> Result<Tensor, GraphDataError> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(GraphDataError::Validation(format!("signals must be N×T with T >= 2, got {:?}", shape)));
    }
    let (n, t) = (shape[0], shape[1]);
    let mut centered = vec![0.0; n * t];
    let mut norms = vec![0.0; n];
    let mut constant = vec![false; n];
    for i in 0..n {
        let row = &x.data()[i * t..(i + 1) * t];
        let mean: f64 = row.iter().sum::<f64>() / t as f64;
        let mut ss = 0.0;
        for (k, &v) in row.iter().enumerate() {
            let c = v - mean;
            centered[i * t + k] = c;
            ss += c * c;
        }
        norms[i] = ss.sqrt();
        if (ss / t as f64).sqrt() < 1e-8 {
            constant[i] = true;
            eprintln!("warning: constant signal row {} gets zero correlation", i);
        }
    }
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i..n {
            let v = if constant[i] || constant[j] {
                0.0
            } else {
                let dot: f64 = (0..t).map(|k| centered[i * t + k] * centered[j * t + k]).sum();
                dot / (norms[i] * norms[j])
            };
            out.set2(i, j, v);
            out.set2(j, i, v);
        }
    }
    Ok(out)
}

/// Erdős–Rényi G(n, p): binary symmetric, zero diagonal, deterministic per seed.
pub fn er_random_adjacency(n: usize, p: f64, seed: u64) -> Result<Tensor, GraphDataError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphDataError::Validation(format!("edge probability {} outside [0, 1]", p)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                out.set2(i, j, 1.0);
                out.set2(j, i, 1.0);
            }
        }
    }
    Ok(out)
}

/// Per-row zero mean, unit std (population 1/T convention).
/// Rows with std below 1e-8 become all-zero.
pub fn standardize_signals(x: &Tensor) -> Result<Tensor, GraphDataError> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(GraphDataError::Validation(format!("signals must be N×T with T >= 2, got {:?}", shape)));
    }
    let (n, t) = (shape[0], shape[1]);
    let mut out = x.clone();
    for i in 0..n {
        let row = &mut out.data_mut()[i * t..(i + 1) * t];
        let mean: f64 = row.iter().sum::<f64>() / t as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        let std = var.sqrt();
        if std < 1e-8 {
            row.fill(0.0);
        } else {
            for v in row.iter_mut() {
                *v = (*v - mean) / std;
            }
        }
    }
    Ok(out)
}

/// Sliding windows starting at 0, stride, 2·stride, …
pub fn make_windows(session: &Tensor, window: usize, stride: usize) -> Result<Vec<Tensor>, GraphDataError> {
    if stride == 0 {
        return Err(GraphDataError::Validation("stride must be >= 1".into()));
    }
    let shape = session.shape();
    if shape.len() != 2 {
        return Err(GraphDataError::Validation(format!("session must be N×T, got {:?}", shape)));
    }
    let (n, t_raw) = (shape[0], shape[1]);
    if t_raw < window {
        return Ok(vec![]);
    }
    let count = (t_raw - window) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let mut win = Tensor::zeros(&[n, window]);
        for i in 0..n {
            let src = &session.data()[i * t_raw + start..i * t_raw + start + window];
            win.data_mut()[i * window..(i + 1) * window].copy_from_slice(src);
        }
        out.push(win);
    }
    Ok(out)
}

/// Per-class proportional split, deterministic per seed; largest-remainder
/// allocation keeps each class within ±1 sample of the requested ratios.
pub fn stratified_split(
    labels: &[usize],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Vec<Split>, GraphDataError> {
    let (rt, rv, rs) = ratios;
    if (rt + rv + rs - 1.0).abs() > 1e-9 || rt < 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(GraphDataError::Validation(format!("split ratios {:?} must be nonnegative and sum to 1", ratios)));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(GraphDataError::Validation(format!("class {} has {} samples, need at least 3", c, members.len())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; labels.len()];
    for members in &mut by_class {
        // Fisher-Yates
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        let n = members.len() as f64;
        let targets = [rt * n, rv * n, rs * n];
        let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut fracs: Vec<(usize, f64)> = targets
            .iter()
            .enumerate()
            .map(|(k, t)| (k, t - t.floor()))
            .collect();
        fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for k in 0..members.len() - assigned {
            counts[fracs[k % 3].0] += 1;
        }
        let mut pos = 0;
        for (split, &cnt) in [Split::Train, Split::Val, Split::Test].iter().zip(&counts) {
            for &idx in &members[pos..pos + cnt] {
                out[idx] = *split;
            }
            pos += cnt;
        }
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), GraphDataError> {
    std::fs::create_dir_all(dir.join("adjacency"))?;
    std::fs::create_dir_all(dir.join("signals"))?;
    let manifest_json = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| GraphDataError::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), manifest_json)?;
    for (i, s) in dataset.samples.iter().enumerate() {
        s.raw_structural.write_tns(&dir.join("adjacency").join(format!("{}.tns", i)))?;
        s.signals.write_tns(&dir.join("signals").join(format!("{}.tns", i)))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, GraphDataError> {
    let manifest_json = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_json)
        .map_err(|e| GraphDataError::Format(format!("manifest: {}", e)))?;
    if manifest.version != DATASET_VERSION {
        return Err(GraphDataError::Format(format!(
            "dataset version {} unsupported (expected {})",
            manifest.version, DATASET_VERSION
        )));
    }
    if manifest.samples.len() != manifest.n_samples {
        return Err(GraphDataError::Format(format!(
            "manifest lists {} samples but n_samples = {}",
            manifest.samples.len(),
            manifest.n_samples
        )));
    }
    let mut samples = Vec::with_capacity(manifest.n_samples);
    for entry in &manifest.samples {
        let raw = Tensor::read_tns(&dir.join("adjacency").join(format!("{}.tns", entry.id)))?;
        let signals = Tensor::read_tns(&dir.join("signals").join(format!("{}.tns", entry.id)))?;
        if raw.shape() != [manifest.n_nodes, manifest.n_nodes] {
            return Err(GraphDataError::Format(format!(
                "sample {}: adjacency shape {:?} disagrees with manifest N={}",
                entry.id,
                raw.shape(),
                manifest.n_nodes
            )));
        }
        if signals.shape() != [manifest.n_nodes, manifest.t_len] {
            return Err(GraphDataError::Format(format!(
                "sample {}: signals shape {:?} disagrees with manifest",
                entry.id,
                signals.shape()
            )));
        }
        if entry.label >= manifest.class_names.len() {
            return Err(GraphDataError::Format(format!(
                "sample {}: label {} out of range for {} classes",
                entry.id,
                entry.label,
                manifest.class_names.len()
            )));
        }
        samples.push(GraphSample::from_raw(raw, signals, entry.label)?);
    }
    Ok(Dataset { manifest, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_empty_graph_is_identity() {
        let sc = Tensor::zeros(&[4, 4]);
        let a = normalize_adjacency(&sc).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((a.at2(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_two_node_edge() {
        let sc = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let a = normalize_adjacency(&sc).unwrap();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_star_matches_direct_formula() {
        // K_{1,2} star: center node 0 connected to 1 and 2
        let sc = Tensor::new(vec![3, 3], vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let a = normalize_adjacency(&sc).unwrap();
        // independent dense evaluation
        let mut tilde = sc.clone();
        for i in 0..3 {
            tilde.set2(i, i, 1.0);
        }
        for i in 0..3 {
            for j in 0..3 {
                let di: f64 = (0..3).map(|k| tilde.at2(i, k)).sum();
                let dj: f64 = (0..3).map(|k| tilde.at2(j, k)).sum();
                let want = tilde.at2(i, j) / (di.sqrt() * dj.sqrt());
                assert!((a.at2(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_asymmetry_and_negatives() {
        let mut sc = Tensor::zeros(&[2, 2]);
        sc.set2(0, 1, 1.0);
        assert!(normalize_adjacency(&sc).is_err());
        let mut neg = Tensor::zeros(&[2, 2]);
        neg.set2(0, 1, -1.0);
        neg.set2(1, 0, -1.0);
        assert!(normalize_adjacency(&neg).is_err());
    }

    #[test]
    fn pearson_identical_and_anticorrelated_rows() {
        let x = Tensor::new(vec![3, 4], vec![
            1.0, 2.0, 3.0, 4.0,
            1.0, 2.0, 3.0, 4.0,
            -1.0, -2.0, -3.0, -4.0,
        ]).unwrap();
        let fc = pearson_matrix(&x).unwrap();
        assert!((fc.at2(0, 1) - 1.0).abs() < 1e-12);
        assert!((fc.at2(0, 2) + 1.0).abs() < 1e-12);
        // clamped before normalization in fc_adjacency
        let a = fc_adjacency(&x).unwrap();
        assert!(a.at2(0, 2) >= 0.0);
    }

    #[test]
    fn pearson_matches_covariance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..3 * 7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![3, 7], data.clone()).unwrap();
        let fc = pearson_matrix(&x).unwrap();
        // oracle: direct covariance formula
        let t = 7;
        for i in 0..3 {
            for j in 0..3 {
                let ri = &data[i * t..(i + 1) * t];
                let rj = &data[j * t..(j + 1) * t];
                let mi = ri.iter().sum::<f64>() / t as f64;
                let mj = rj.iter().sum::<f64>() / t as f64;
                let cov: f64 = ri.iter().zip(rj).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / t as f64;
                let si = (ri.iter().map(|a| (a - mi) * (a - mi)).sum::<f64>() / t as f64).sqrt();
                let sj = (rj.iter().map(|b| (b - mj) * (b - mj)).sum::<f64>() / t as f64).sqrt();
                assert!((fc.at2(i, j) - cov / (si * sj)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn er_extremes() {
        let zero = er_random_adjacency(5, 0.0, 1).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let full = er_random_adjacency(5, 1.0, 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert_eq!(full.at2(i, j), want);
            }
        }
    }

    #[test]
    fn er_density_monte_carlo() {
        let n = 200;
        let mut total_edges = 0usize;
        for seed in 0..100 {
            let a = er_random_adjacency(n, 0.2, seed).unwrap();
            total_edges += a.data().iter().filter(|&&v| v == 1.0).count() / 2;
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let density = total_edges as f64 / (100.0 * pairs);
        assert!((0.19..=0.21).contains(&density), "density = {}", density);
    }

    #[test]
    fn standardize_rows() {
        let x = Tensor::new(vec![2, 4], vec![1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 2.0]).unwrap();
        let s = standardize_signals(&x).unwrap();
        assert_eq!(&s.data()[..4], &[0.0; 4]);
        assert_eq!(&s.data()[4..], &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn standardize_population_convention() {
        let x = Tensor::new(vec![1, 2], vec![0.0, 2.0]).unwrap();
        let s = standardize_signals(&x).unwrap();
        assert_eq!(s.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_random_rows_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..5 * 32).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let x = Tensor::new(vec![5, 32], data).unwrap();
        let s = standardize_signals(&x).unwrap();
        for i in 0..5 {
            let row = &s.data()[i * 32..(i + 1) * 32];
            let mean = row.iter().sum::<f64>() / 32.0;
            assert!(mean.abs() <= 1e-12);
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_counts() {
        let s265 = Tensor::zeros(&[2, 265]);
        assert_eq!(make_windows(&s265, 256, 10).unwrap().len(), 1);
        let s300 = Tensor::zeros(&[2, 300]);
        assert_eq!(make_windows(&s300, 256, 10).unwrap().len(), 5);
        let s100 = Tensor::zeros(&[2, 100]);
        assert_eq!(make_windows(&s100, 256, 10).unwrap().len(), 0);
    }

    #[test]
    fn window_starts_and_lengths() {
        let mut session = Tensor::zeros(&[1, 50]);
        for (i, v) in session.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let wins = make_windows(&session, 20, 7).unwrap();
        assert_eq!(wins.len(), (50 - 20) / 7 + 1);
        for (w, win) in wins.iter().enumerate() {
            assert_eq!(win.shape(), &[1, 20]);
            assert_eq!(win.data()[0], (w * 7) as f64);
        }
    }

    #[test]
    fn split_single_class_100() {
        let labels = vec![0usize; 100];
        let split = stratified_split(&labels, (0.7, 0.15, 0.15), 5).unwrap();
        let count = |s: Split| split.iter().filter(|&&x| x == s).count();
        assert_eq!(count(Split::Train), 70);
        assert_eq!(count(Split::Val), 15);
        assert_eq!(count(Split::Test), 15);
    }

    #[test]
    fn split_proportional_per_class() {
        let labels: Vec<usize> = std::iter::repeat(0).take(10).chain(std::iter::repeat(1).take(20)).collect();
        let split = stratified_split(&labels, (0.7, 0.15, 0.15), 11).unwrap();
        for class in 0..2 {
            let members: Vec<_> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| split[i])
                .collect();
            let n = members.len() as f64;
            for (s, r) in [(Split::Train, 0.7), (Split::Val, 0.15), (Split::Test, 0.15)] {
                let c = members.iter().filter(|&&x| x == s).count() as f64;
                assert!((c - r * n).abs() <= 1.0, "class {} split {:?}: {} vs {}", class, s, c, r * n);
            }
        }
    }

    #[test]
    fn split_deterministic_and_total() {
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let a = stratified_split(&labels, (0.7, 0.15, 0.15), 77).unwrap();
        let b = stratified_split(&labels, (0.7, 0.15, 0.15), 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), labels.len());
    }

    #[test]
    fn split_rejects_tiny_class() {
        let labels = vec![0, 0, 0, 1, 1];
        assert!(stratified_split(&labels, (0.7, 0.15, 0.15), 1).is_err());
    }

    fn toy_dataset() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut samples = Vec::new();
        let mut entries = Vec::new();
        for id in 0..6 {
            let raw = er_random_adjacency(4, 0.5, id as u64).unwrap();
            let data: Vec<f64> = (0..4 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let signals = standardize_signals(&Tensor::new(vec![4, 8], data).unwrap()).unwrap();
            let label = id % 2;
            samples.push(GraphSample::from_raw(raw, signals, label).unwrap());
            entries.push(SampleEntry { id, label, split: if id < 4 { Split::Train } else { Split::Test } });
        }
        Dataset {
            manifest: DatasetManifest {
                version: DATASET_VERSION,
                n_samples: 6,
                n_nodes: 4,
                t_len: 8,
                class_names: vec!["a".into(), "b".into()],
                samples: entries,
                provenance: "test".into(),
                seed: 21,
            },
            samples,
        }
    }

    #[test]
    fn dataset_roundtrip_bitwise() {
        let d = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.manifest.n_samples, d.manifest.n_samples);
        for (a, b) in d.samples.iter().zip(&back.samples) {
            for (x, y) in a.raw_structural.data().iter().zip(b.raw_structural.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.signals.data().iter().zip(b.signals.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn dataset_truncated_tensor_is_error() {
        let d = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let victim = dir.path().join("signals").join("0.tns");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        assert!(read_dataset(dir.path()).is_err());
    }

    #[test]
    fn dataset_label_counts_match_manifest() {
        let d = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        for (entry, sample) in back.manifest.samples.iter().zip(&back.samples) {
            assert_eq!(entry.label, sample.label);
        }
    }

    #[test]
    fn loaded_adjacency_matches_recomputation() {
        let d = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        for s in &back.samples {
            let again = normalize_adjacency(&s.raw_structural).unwrap();
            for (a, b) in s.adjacency.data().iter().zip(again.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
