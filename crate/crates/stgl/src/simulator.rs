//! Synthetic ground-truth generator: stochastic-block-model community graphs
//! plus neighbor-diffusion time series whose class signal lives either in
//! where noise is injected or in which senders have strengthened edges.

use crate::graphdata::{
    standardize_signals, Dataset, DatasetManifest, GraphDataError, GraphSample, SampleEntry,
    stratified_split, DATASET_VERSION,
};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How a class perturbs the shared diffusion process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ClassDef {
    /// Temporal noise is injected only at these nodes (and they carry the
    /// initial condition).
    NoiseSources { nodes: Vec<usize> },
    /// Outgoing edges of these nodes are scaled by `weight` during
    /// generation; the stored adjacency stays binary.
    StrengthenedSenders { nodes: Vec<usize>, weight: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub t_len: usize,
    pub temporal_noise_std: f64,
    pub spatial_noise_std: f64,
    pub class_defs: Vec<ClassDef>,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_nodes: 200,
            n_communities: 10,
            p_in: 0.5,
            p_out: 0.05,
            t_len: 256,
            temporal_noise_std: 0.1,
            spatial_noise_std: 0.01,
            class_defs: Vec::new(),
            samples_per_class: 400,
            seed: 0,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<(), GraphDataError> {
        if self.n_communities == 0 || self.n_nodes % self.n_communities != 0 {
            return Err(GraphDataError::Validation(format!(
                "n_nodes {} not divisible by n_communities {}",
                self.n_nodes, self.n_communities
            )));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(GraphDataError::Validation(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.temporal_noise_std < 0.0 || self.spatial_noise_std < 0.0 {
            return Err(GraphDataError::Validation("noise stds must be nonnegative".into()));
        }
        if self.class_defs.is_empty() {
            return Err(GraphDataError::Validation("class_defs must be nonempty".into()));
        }
        if self.t_len < 2 {
            return Err(GraphDataError::Validation("t_len must be >= 2".into()));
        }
        for (c, def) in self.class_defs.iter().enumerate() {
            let nodes = match def {
                ClassDef::NoiseSources { nodes } => nodes,
                ClassDef::StrengthenedSenders { nodes, weight } => {
                    if *weight <= 0.0 {
                        return Err(GraphDataError::Validation(format!(
                            "class {}: strengthened weight {} must be positive",
                            c, weight
                        )));
                    }
                    nodes
                }
            };
            if nodes.is_empty() {
                return Err(GraphDataError::Validation(format!("class {}: empty node set", c)));
            }
            if let Some(&bad) = nodes.iter().find(|&&n| n >= self.n_nodes) {
                return Err(GraphDataError::Validation(format!(
                    "class {}: node {} out of range (n_nodes = {})",
                    c, bad, self.n_nodes
                )));
            }
        }
        Ok(())
    }
}

/// Standard normal via Box-Muller; consumes two uniforms per pair of draws.
struct NormalSampler {
    cached: Option<f64>,
}

impl NormalSampler {
    fn new() -> Self {
        NormalSampler { cached: None }
    }

    fn sample(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some(v) = self.cached.take() {
            return v;
        }
        // u1 in (0, 1] so the log is finite
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// splitmix64 over (seed, index) for schedule-independent per-sample streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stochastic block model with equal-size contiguous communities.
pub fn generate_sbm(spec: &SimulationSpec, seed: u64) -> Result<Tensor, GraphDataError> {
    spec.validate()?;
    let n = spec.n_nodes;
    let block = n / spec.n_communities;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / block == j / block { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                adj.set2(i, j, 1.0);
                adj.set2(j, i, 1.0);
            }
        }
    }
    Ok(adj)
}

/// Diffusion recurrence x(t) = P·x(t−1) + n(t) on a fixed per-sample
/// propagation matrix P. P is the adjacency with strengthened sender columns
/// scaled, entrywise Gaussian jitter on existing edges (clamped nonnegative),
/// then row normalization; a node with no incoming edges keeps a zero row and
/// evolves as pure noise.
pub fn generate_diffusion_signals(
    adj: &Tensor,
    spec: &SimulationSpec,
    class_id: usize,
    seed: u64,
) -> Result<Tensor, GraphDataError> {
    spec.validate()?;
    let n = spec.n_nodes;
    if adj.shape() != [n, n] {
        return Err(GraphDataError::Validation(format!(
            "adjacency shape {:?} does not match n_nodes {}",
            adj.shape(),
            n
        )));
    }
    let def = spec
        .class_defs
        .get(class_id)
        .ok_or_else(|| GraphDataError::Validation(format!("class id {} out of range", class_id)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = NormalSampler::new();

    // Effective weights before normalization.
    let mut p = adj.clone();
    let mut noisy = vec![false; n];
    match def {
        ClassDef::NoiseSources { nodes } => {
            for &node in nodes {
                noisy[node] = true;
            }
        }
        ClassDef::StrengthenedSenders { nodes, weight } => {
            // edge-strength classes: every node receives temporal noise
            noisy.fill(true);
            for &sender in nodes {
                for i in 0..n {
                    let v = p.at2(i, sender);
                    p.set2(i, sender, v * weight);
                }
            }
        }
    }
    if spec.spatial_noise_std > 0.0 {
        for i in 0..n {
            for j in 0..n {
                let v = p.at2(i, j);
                if v != 0.0 {
                    p.set2(i, j, (v + spec.spatial_noise_std * normal.sample(&mut rng)).max(0.0));
                }
            }
        }
    }
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| p.at2(i, j)).sum();
        if row_sum > 0.0 {
            for j in 0..n {
                let v = p.at2(i, j) / row_sum;
                p.set2(i, j, v);
            }
        }
    }

    let mut x = Tensor::zeros(&[n, spec.t_len]);
    let t_len = spec.t_len;
    let mut prev = vec![0.0; n];
    for (node, is_noisy) in noisy.iter().enumerate() {
        if *is_noisy {
            prev[node] = spec.temporal_noise_std * normal.sample(&mut rng);
        }
    }
    for (node, &v) in prev.iter().enumerate() {
        x.data_mut()[node * t_len] = v;
    }
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += p.at2(i, j) * prev[j];
            }
            if noisy[i] {
                acc += spec.temporal_noise_std * normal.sample(&mut rng);
            }
            next[i] = acc;
        }
        for (node, &v) in next.iter().enumerate() {
            x.data_mut()[node * t_len + t] = v;
        }
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(x)
}

/// Canonical two-class specs from the reference experiments.
pub fn standard_spec(sim_id: SimId) -> SimulationSpec {
    let mut spec = SimulationSpec::default();
    spec.class_defs = match sim_id {
        SimId::I => vec![
            ClassDef::NoiseSources { nodes: (0..60).collect() },
            ClassDef::NoiseSources { nodes: (140..200).collect() },
        ],
        SimId::II => vec![
            ClassDef::StrengthenedSenders { nodes: (60..100).collect(), weight: 5.0 },
            ClassDef::StrengthenedSenders { nodes: (100..140).collect(), weight: 5.0 },
        ],
    };
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimId {
    I,
    II,
}

impl std::str::FromStr for SimId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "I" | "i" => Ok(SimId::I),
            "2" | "II" | "ii" => Ok(SimId::II),
            other => Err(format!("unknown simulation id '{}', expected I or II", other)),
        }
    }
}

/// Full dataset: per-sample SBM graph, diffusion signals, standardization,
/// stratified 0.7/0.15/0.15 split. The stored adjacency is always the binary
/// SBM matrix, even when generation used strengthened weights.
pub fn build_simulation_dataset(spec: &SimulationSpec) -> Result<Dataset, GraphDataError> {
    spec.validate()?;
    let n_classes = spec.class_defs.len();
    let n_samples = n_classes * spec.samples_per_class;
    let mut samples = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for idx in 0..n_samples {
        let class_id = idx / spec.samples_per_class;
        let graph_seed = derive_seed(spec.seed, 2 * idx as u64);
        let signal_seed = derive_seed(spec.seed, 2 * idx as u64 + 1);
        let adj = generate_sbm(spec, graph_seed)?;
        let raw_signals = generate_diffusion_signals(&adj, spec, class_id, signal_seed)?;
        let signals = standardize_signals(&raw_signals)?;
        samples.push(GraphSample::from_raw(adj, signals, class_id)?);
        labels.push(class_id);
    }
    let split = stratified_split(&labels, (0.7, 0.15, 0.15), derive_seed(spec.seed, u64::MAX))?;
    let entries: Vec<SampleEntry> = labels
        .iter()
        .zip(&split)
        .enumerate()
        .map(|(id, (&label, &split))| SampleEntry { id, label, split })
        .collect();
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        n_samples,
        n_nodes: spec.n_nodes,
        t_len: spec.t_len,
        class_names: (0..n_classes).map(|c| format!("class{}", c)).collect(),
        samples: entries,
        provenance: serde_json::to_string(spec).map_err(|e| GraphDataError::Format(e.to_string()))?,
        seed: spec.seed,
    };
    Ok(Dataset { manifest, samples })
}

/// Long un-windowed session on a single graph, for windowed-attribution
/// consistency checks.
pub fn generate_session(
    spec: &SimulationSpec,
    class_id: usize,
    session_len: usize,
    seed: u64,
) -> Result<(Tensor, Tensor), GraphDataError> {
    let mut long = spec.clone();
    long.t_len = session_len;
    long.validate()?;
    let adj = generate_sbm(&long, derive_seed(seed, 0))?;
    let raw = generate_diffusion_signals(&adj, &long, class_id, derive_seed(seed, 1))?;
    Ok((adj, raw))
}
