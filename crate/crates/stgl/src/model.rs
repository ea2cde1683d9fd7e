//! Encoder and classification head: sample-adaptive adjacency, gated strided
//! temporal convolutions, K-hop dual-adjacency graph layers, inner-cluster
//! smoothing, skip-connected pooling head, and the composite training loss.

use crate::graphdata::{er_random_adjacency, fc_adjacency, normalize_adjacency, GraphDataError};
use crate::tape::{NodeId, NumericsError, Tape};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Fixed stream for the random-adjacency ablation so runs stay reproducible.
const RANDOM_ADJ_SEED: u64 = 0x5eed_ad;
const RANDOM_ADJ_DENSITY: f64 = 0.1;

#[derive(Debug)]
pub enum ModelError {
    Config(String),
    Numerics(NumericsError),
    Graph(GraphDataError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(m) => write!(f, "model config: {}", m),
            ModelError::Numerics(e) => write!(f, "{}", e),
            ModelError::Graph(e) => write!(f, "{}", e),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<NumericsError> for ModelError {
    fn from(e: NumericsError) -> Self {
        ModelError::Numerics(e)
    }
}

impl From<GraphDataError> for ModelError {
    fn from(e: GraphDataError) -> Self {
        ModelError::Graph(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// Structural plus sample-adaptive adjacency (default).
    ScAdp,
    ScOnly,
    AdpOnly,
    /// Structural plus functional-connectivity adjacency derived from the
    /// signals (no learned adjacency).
    ScFc,
    /// Structural replaced by a fixed random graph (ablation control).
    Random,
}

impl AdjacencyMode {
    pub fn uses_adaptive(self) -> bool {
        matches!(self, AdjacencyMode::ScAdp | AdjacencyMode::AdpOnly)
    }

    /// How many adjacency matrices feed each graph layer's concat.
    pub fn n_adjacencies(self) -> usize {
        match self {
            AdjacencyMode::ScAdp | AdjacencyMode::ScFc => 2,
            AdjacencyMode::ScOnly | AdjacencyMode::AdpOnly | AdjacencyMode::Random => 1,
        }
    }
}

impl std::str::FromStr for AdjacencyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sc+adp" => Ok(AdjacencyMode::ScAdp),
            "sc_only" => Ok(AdjacencyMode::ScOnly),
            "adp_only" => Ok(AdjacencyMode::AdpOnly),
            "sc+fc" => Ok(AdjacencyMode::ScFc),
            "random" => Ok(AdjacencyMode::Random),
            other => Err(format!(
                "unknown adjacency mode '{}', expected sc+adp | sc_only | adp_only | sc+fc | random",
                other
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_nodes: usize,
    pub t_len: usize,
    pub n_classes: usize,
    pub d_h1: usize,
    pub d_latent: usize,
    pub k_hops: usize,
    pub h_adp: usize,
    pub tcn_per_gnn: usize,
    pub cluster_schedule: Vec<usize>,
    pub adjacency_mode: AdjacencyMode,
    pub smoothing_enabled: bool,
    /// Ablation arm: coarsen the node set by the time-averaged assignment
    /// instead of smoothing in place; skips disabled, schedule ends at 1.
    pub coarsen: bool,
    pub dropout: f64,
    /// Loss mix: cross-entropy, per-node assignment entropy, cluster-usage
    /// entropy, temporal assignment stability. Must sum to 1.
    pub alphas: [f64; 4],
    /// Window length for the temporal stability regularizer.
    pub tau: usize,
}

impl ModelConfig {
    pub fn with_defaults(n_nodes: usize, t_len: usize, n_classes: usize) -> Self {
        let mut cfg = ModelConfig {
            n_nodes,
            t_len,
            n_classes,
            d_h1: 8,
            d_latent: 16,
            k_hops: 2,
            h_adp: 5,
            tcn_per_gnn: 2,
            cluster_schedule: Vec::new(),
            adjacency_mode: AdjacencyMode::ScAdp,
            smoothing_enabled: true,
            coarsen: false,
            dropout: 0.1,
            alphas: [1.0, 0.0, 0.0, 0.0],
            tau: 4,
        };
        cfg.cluster_schedule = (0..cfg.n_blocks()).map(|b| (n_nodes >> (b + 1)).max(1)).collect();
        cfg
    }

    pub fn n_tcn_layers(&self) -> usize {
        self.t_len.trailing_zeros() as usize
    }

    pub fn n_blocks(&self) -> usize {
        let n = self.n_tcn_layers();
        (n + self.tcn_per_gnn - 1) / self.tcn_per_gnn
    }

    /// TCN layers per block; the last block absorbs the remainder.
    pub fn block_tcn_counts(&self) -> Vec<usize> {
        let mut left = self.n_tcn_layers();
        let mut counts = Vec::new();
        while left > 0 {
            let c = left.min(self.tcn_per_gnn);
            counts.push(c);
            left -= c;
        }
        counts
    }

    /// Concat width entering each graph layer's MLP for feature width d.
    pub fn gnn_in_width(&self, d: usize) -> usize {
        (self.adjacency_mode.n_adjacencies() * self.k_hops + 1) * d
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.n_nodes < 2 {
            return err(format!("n_nodes {} too small", self.n_nodes));
        }
        if !self.t_len.is_power_of_two() || self.t_len < 2 {
            return err(format!("t_len {} must be a power of two >= 2", self.t_len));
        }
        if self.n_classes < 2 {
            return err(format!("n_classes {} must be >= 2", self.n_classes));
        }
        if self.d_h1 == 0 || self.d_latent == 0 || self.k_hops == 0 || self.tcn_per_gnn == 0 {
            return err("d_h1, d_latent, k_hops, tcn_per_gnn must be >= 1".into());
        }
        if self.adjacency_mode.uses_adaptive() && self.h_adp == 0 {
            return err("h_adp must be >= 1 when the adaptive adjacency is used".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let alpha_sum: f64 = self.alphas.iter().sum();
        if (alpha_sum - 1.0).abs() > 1e-9 || self.alphas.iter().any(|&a| a < 0.0) {
            return err(format!("alphas {:?} must be nonnegative and sum to 1", self.alphas));
        }
        if self.tau < 2 {
            return err(format!("tau {} must be >= 2", self.tau));
        }
        let needs_schedule = self.smoothing_enabled || self.coarsen;
        if needs_schedule {
            if self.cluster_schedule.len() != self.n_blocks() {
                return err(format!(
                    "cluster_schedule length {} != number of blocks {}",
                    self.cluster_schedule.len(),
                    self.n_blocks()
                ));
            }
            if self.coarsen {
                let mut prev = self.n_nodes;
                for (b, &c) in self.cluster_schedule.iter().enumerate() {
                    if c == 0 || c >= prev {
                        return err(format!(
                            "coarsen schedule must strictly decrease: block {} has c={} after {}",
                            b, c, prev
                        ));
                    }
                    prev = c;
                }
                if *self.cluster_schedule.last().unwrap() != 1 {
                    return err("coarsen schedule must end at a single node".into());
                }
            } else {
                for (b, &c) in self.cluster_schedule.iter().enumerate() {
                    if c == 0 || c >= self.n_nodes {
                        return err(format!("block {}: cluster count {} must be in [1, N)", b, c));
                    }
                }
            }
        } else if self.alphas[1..].iter().any(|&a| a != 0.0) {
            return err("assignment regularizers require smoothing or coarsening".into());
        }
        Ok(())
    }

    fn head_pool_mid(&self) -> usize {
        (self.n_nodes / 4).max(1)
    }

    fn head_cls_mid(&self) -> usize {
        (self.d_latent / 2).max(1)
    }

    /// Every parameter name with its shape, in creation order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_h1;
        let mut out = Vec::new();
        if self.adjacency_mode.uses_adaptive() {
            out.push(("theta_adp".to_string(), vec![self.t_len, self.h_adp]));
        }
        out.push(("lift.w".to_string(), vec![d, 1]));
        out.push(("lift.b".to_string(), vec![d]));
        let counts = self.block_tcn_counts();
        for (b, &n_tcn) in counts.iter().enumerate() {
            for l in 0..n_tcn {
                for branch in ["emb", "gate"] {
                    out.push((format!("block{}.tcn{}.{}.w", b, l, branch), vec![d, d, 2]));
                    out.push((format!("block{}.tcn{}.{}.b", b, l, branch), vec![d]));
                }
            }
            let w_in = self.gnn_in_width(d);
            out.push((format!("block{}.gnn_emb.w", b), vec![d, w_in]));
            out.push((format!("block{}.gnn_emb.b", b), vec![d]));
            if self.smoothing_enabled || self.coarsen {
                let c = self.cluster_schedule[b];
                out.push((format!("block{}.gnn_pool.w", b), vec![c, w_in]));
                out.push((format!("block{}.gnn_pool.b", b), vec![c]));
            }
            out.push((format!("block{}.skip.w", b), vec![self.d_latent, d]));
            out.push((format!("block{}.skip.b", b), vec![self.d_latent]));
        }
        out.push(("head.pool1.w".to_string(), vec![self.head_pool_mid(), self.n_nodes]));
        out.push(("head.pool1.b".to_string(), vec![self.head_pool_mid()]));
        out.push(("head.pool2.w".to_string(), vec![1, self.head_pool_mid()]));
        out.push(("head.pool2.b".to_string(), vec![1]));
        out.push(("head.fc1.w".to_string(), vec![self.head_cls_mid(), self.d_latent]));
        out.push(("head.fc1.b".to_string(), vec![self.head_cls_mid()]));
        out.push(("head.fc2.w".to_string(), vec![self.n_classes, self.head_cls_mid()]));
        out.push(("head.fc2.b".to_string(), vec![self.n_classes]));
        out
    }
}

/// Named flat parameter registry; iteration order is sorted by name.
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    map: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = BTreeMap::new();
        for (name, shape) in config.parameter_shapes() {
            let tensor = if name.ends_with("gate.b") {
                // start with the gates mostly open; sigmoid(0) = 0.5 per layer
                // halves the signal and the strided stack is eight layers deep
                Tensor::filled(&shape, 2.0)
            } else if name == "head.pool1.b" || name == "head.fc1.b" {
                // the smoothing stack leaves node rows nearly identical, so a
                // rectified head unit dies whenever its weight sum is negative;
                // a small positive bias keeps the head trainable from step one
                Tensor::filled(&shape, 0.1)
            } else if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                // rectifier-friendly uniform bound; the gating and deep
                // multiplicative stack starve on anything more timid
                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                let mut s = (6.0 / fan_in as f64).sqrt();
                if name.contains("gnn_pool.w") {
                    // assignment logits need enough spread that the cluster
                    // softmax starts differentiated; near-uniform assignments
                    // reduce the smoothing output to a node-independent mean
                    // and gradients through the double softmax stall
                    s *= 8.0;
                }
                let n: usize = shape.iter().product();
                let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-s..s)).collect();
                Tensor::new(shape, data).unwrap()
            };
            map.insert(name, tensor);
        }
        Ok(ModelParams { map })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn set(&mut self, name: &str, value: Tensor) {
        self.map.insert(name.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.is_finite())
    }

    /// Shape-check against a config; used on checkpoint load.
    pub fn validate_against(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let expected = config.parameter_shapes();
        if expected.len() != self.map.len() {
            return Err(ModelError::Config(format!(
                "parameter count {} != expected {}",
                self.map.len(),
                expected.len()
            )));
        }
        for (name, shape) in &expected {
            match self.map.get(name) {
                None => return Err(ModelError::Config(format!("missing parameter '{}'", name))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(ModelError::Config(format!(
                        "parameter '{}' has shape {:?}, expected {:?}",
                        name,
                        t.shape(),
                        shape
                    )));
                }
                Some(t) if !t.is_finite() => {
                    return Err(ModelError::Config(format!("parameter '{}' is not finite", name)));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tape-level building blocks
// ---------------------------------------------------------------------------

/// 1×1 linear over the feature axis: h [N,d,t], w [d',d], b [d'] → [N,d',t].
pub fn feature_linear(
    tape: &mut Tape,
    h: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId, NumericsError> {
    tape.channel_linear(h, w, b)
}

/// Propagate node features through an adjacency: a [N,N] (or [N',N]) times
/// h [N,d,t] → [N',d,t].
pub fn node_mix(tape: &mut Tape, a: NodeId, h: NodeId) -> Result<NodeId, NumericsError> {
    let hs = tape.value(h).shape().to_vec();
    let (n, d, t) = (hs[0], hs[1], hs[2]);
    let n_out = tape.value(a).shape()[0];
    let flat = tape.reshape(h, &[n, d * t])?;
    let y = tape.matmul(a, flat)?;
    tape.reshape(y, &[n_out, d, t])
}

/// Sample-adaptive adjacency from raw signals: column-normalized softmax of
/// the rectified Gram matrix of XΘ. Every column sums to 1.
pub fn adaptive_adjacency(
    tape: &mut Tape,
    x: NodeId,
    theta: NodeId,
) -> Result<NodeId, NumericsError> {
    let e = tape.matmul(x, theta)?;
    let et = tape.permute(e, &[1, 0])?;
    let gram = tape.matmul(e, et)?;
    let r = tape.relu(gram);
    tape.softmax(r, 0)
}

/// Gated temporal convolution: tanh(conv(h)) ⊙ σ(conv(h)), kernel 2 stride 2.
/// Halves the temporal length; outputs lie in (−1, 1).
pub fn gated_tcn(
    tape: &mut Tape,
    h: NodeId,
    w_emb: NodeId,
    b_emb: NodeId,
    w_gate: NodeId,
    b_gate: NodeId,
) -> Result<NodeId, NumericsError> {
    let e = tape.conv1d_strided(h, w_emb, b_emb)?;
    let g = tape.conv1d_strided(h, w_gate, b_gate)?;
    let te = tape.tanh(e);
    let sg = tape.sigmoid(g);
    tape.mul(te, sg)
}

/// K-hop graph layer: MLP over Concat(h, ReLU(A¹h), …, ReLU(A^K h), …) along
/// the feature axis, one rectified block per adjacency per hop. `activate`
/// appends the output ReLU (assignment-logit consumers skip it).
pub fn gnn_layer(
    tape: &mut Tape,
    h: NodeId,
    adjs: &[NodeId],
    k_hops: usize,
    w: NodeId,
    b: NodeId,
    activate: bool,
) -> Result<NodeId, NumericsError> {
    let mut parts = vec![h];
    for &a in adjs {
        let mut cur = h;
        for _ in 0..k_hops {
            cur = node_mix(tape, a, cur)?;
            parts.push(tape.relu(cur));
        }
    }
    let cat = tape.concat(&parts, 1)?;
    let y = feature_linear(tape, cat, w, b)?;
    Ok(if activate { tape.relu(y) } else { y })
}

/// Cluster-and-reverse-assign smoothing. Pool and embedding graph layers run
/// in parallel on the same input; output keeps N, d, t. Returns the output
/// and the soft assignment tensor S [N,c,t] (cluster-softmaxed).
pub fn inner_cluster_smoothing(
    tape: &mut Tape,
    h: NodeId,
    adjs: &[NodeId],
    k_hops: usize,
    pool_w: NodeId,
    pool_b: NodeId,
    emb_w: NodeId,
    emb_b: NodeId,
) -> Result<(NodeId, NodeId), NumericsError> {
    let hs = tape.value(h).shape().to_vec();
    let (n, d, t) = (hs[0], hs[1], hs[2]);
    let c = tape.value(pool_w).shape()[0];
    if c >= n {
        return Err(NumericsError::Contract {
            msg: format!("smoothing: cluster count {} must be < node count {}", c, n),
        });
    }
    let logits = gnn_layer(tape, h, adjs, k_hops, pool_w, pool_b, false)?;
    let s = tape.softmax(logits, 1)?; // [N,c,t], rows sum to 1 over clusters
    let z = gnn_layer(tape, h, adjs, k_hops, emb_w, emb_b, true)?; // [N,d,t]

    // H̃[c,d] per time slice = Σ_n S[n,c] Z[n,d]
    let s_t = tape.permute(s, &[2, 1, 0])?; // [t,c,N]
    let z_t = tape.permute(z, &[2, 0, 1])?; // [t,N,d]
    let pooled = tape.matmul(s_t, z_t)?; // [t,c,d]

    // reverse assignment: softmax over the node axis
    let s_rev = tape.softmax(s, 0)?; // [N,c,t], columns sum to 1 over nodes
    let rev_t = tape.permute(s_rev, &[2, 0, 1])?; // [t,N,c]
    let out_t = tape.matmul(rev_t, pooled)?; // [t,N,d]
    let out = tape.permute(out_t, &[1, 2, 0])?; // [N,d,t]
    debug_assert_eq!(tape.value(out).shape(), &[n, d, t]);
    Ok((out, s))
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Node ids of everything downstream consumers need after a forward pass.
pub struct ForwardCache {
    pub logits: NodeId,
    /// Pre-head representation [N, d_latent] ([1, d_latent] when coarsened).
    pub rep: NodeId,
    pub a_adp: Option<NodeId>,
    /// Soft assignment tensors, one per smoothing/coarsening block.
    pub assignments: Vec<NodeId>,
    pub a_input: NodeId,
    pub x_input: NodeId,
    pub param_ids: BTreeMap<String, NodeId>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Model { config, params })
    }

    /// Run the encoder + head on a tape. `a` is the normalized structural
    /// adjacency, `x` the standardized N×T signals. Dropout fires only when
    /// an rng is supplied (training); evaluation passes None.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        a: &Tensor,
        x: &Tensor,
        inputs_require_grad: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache, ModelError> {
        let a_input = tape.leaf(a.clone(), inputs_require_grad);
        let x_input = tape.leaf(x.clone(), inputs_require_grad);
        self.forward_ids(tape, a_input, x_input, dropout_rng, &BTreeMap::new())
    }

    /// Like [`forward_on_tape`](Self::forward_on_tape) but over nodes already
    /// on the tape; `param_overrides` substitutes existing leaves for named
    /// parameters (gradient-checking harnesses use this).
    pub fn forward_ids(
        &self,
        tape: &mut Tape,
        a_input: NodeId,
        x_input: NodeId,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
        param_overrides: &BTreeMap<String, NodeId>,
    ) -> Result<ForwardCache, ModelError> {
        let cfg = &self.config;
        let (n, t_len) = (cfg.n_nodes, cfg.t_len);
        if tape.value(a_input).shape() != [n, n] {
            return Err(ModelError::Config(format!(
                "adjacency shape {:?} does not match config N={}",
                tape.value(a_input).shape(),
                n
            )));
        }
        if tape.value(x_input).shape() != [n, t_len] {
            return Err(ModelError::Config(format!(
                "signal shape {:?} does not match config N={}, T={}",
                tape.value(x_input).shape(),
                n,
                t_len
            )));
        }

        let mut param_ids = BTreeMap::new();
        for (name, value) in self.params.iter() {
            let id = match param_overrides.get(name) {
                Some(&id) => id,
                None => tape.leaf(value.clone(), true),
            };
            param_ids.insert(name.clone(), id);
        }
        let p = |name: &str| -> NodeId { param_ids[name] };

        // adjacency set feeding every graph layer
        let mut a_adp = None;
        let mut adjs: Vec<NodeId> = Vec::new();
        match cfg.adjacency_mode {
            AdjacencyMode::ScAdp => {
                adjs.push(a_input);
                let adp = adaptive_adjacency(tape, x_input, p("theta_adp"))?;
                a_adp = Some(adp);
                adjs.push(adp);
            }
            AdjacencyMode::ScOnly => adjs.push(a_input),
            AdjacencyMode::AdpOnly => {
                let adp = adaptive_adjacency(tape, x_input, p("theta_adp"))?;
                a_adp = Some(adp);
                adjs.push(adp);
            }
            AdjacencyMode::ScFc => {
                adjs.push(a_input);
                let fc = fc_adjacency(tape.value(x_input))?;
                adjs.push(tape.constant(fc));
            }
            AdjacencyMode::Random => {
                let raw = er_random_adjacency(n, RANDOM_ADJ_DENSITY, RANDOM_ADJ_SEED)?;
                let norm = normalize_adjacency(&raw)?;
                adjs.push(tape.constant(norm));
            }
        }

        // lift raw signals to d_h1 channels
        let x3 = tape.reshape(x_input, &[n, 1, t_len])?;
        let mut h = feature_linear(tape, x3, p("lift.w"), p("lift.b"))?;

        let counts = cfg.block_tcn_counts();
        let mut assignments = Vec::new();
        let mut skip_total: Option<NodeId> = None;
        let mut cur_t = t_len;

        for (b, &n_tcn) in counts.iter().enumerate() {
            for l in 0..n_tcn {
                h = gated_tcn(
                    tape,
                    h,
                    p(&format!("block{}.tcn{}.emb.w", b, l)),
                    p(&format!("block{}.tcn{}.emb.b", b, l)),
                    p(&format!("block{}.tcn{}.gate.w", b, l)),
                    p(&format!("block{}.tcn{}.gate.b", b, l)),
                )?;
                cur_t /= 2;
            }

            if cfg.coarsen {
                // coarsening arm: pool-assign, average S over time, contract
                // both the features and every adjacency to c nodes
                let logits = gnn_layer(
                    tape,
                    h,
                    &adjs,
                    cfg.k_hops,
                    p(&format!("block{}.gnn_pool.w", b)),
                    p(&format!("block{}.gnn_pool.b", b)),
                    false,
                )?;
                let s = tape.softmax(logits, 1)?;
                assignments.push(s);
                let z = gnn_layer(
                    tape,
                    h,
                    &adjs,
                    cfg.k_hops,
                    p(&format!("block{}.gnn_emb.w", b)),
                    p(&format!("block{}.gnn_emb.b", b)),
                    true,
                )?;
                let s_sum = tape.sum_axis(s, 2)?;
                let s_bar = tape.scale(s_sum, 1.0 / cur_t as f64); // [N_b, c]
                let s_bar_t = tape.permute(s_bar, &[1, 0])?; // [c, N_b]
                h = node_mix(tape, s_bar_t, z)?; // [c, d, t]
                let mut next_adjs = Vec::with_capacity(adjs.len());
                for &adj in &adjs {
                    let left = tape.matmul(s_bar_t, adj)?;
                    next_adjs.push(tape.matmul(left, s_bar)?);
                }
                adjs = next_adjs;
            } else if cfg.smoothing_enabled {
                let (out, s) = inner_cluster_smoothing(
                    tape,
                    h,
                    &adjs,
                    cfg.k_hops,
                    p(&format!("block{}.gnn_pool.w", b)),
                    p(&format!("block{}.gnn_pool.b", b)),
                    p(&format!("block{}.gnn_emb.w", b)),
                    p(&format!("block{}.gnn_emb.b", b)),
                )?;
                assignments.push(s);
                h = out;
            } else {
                h = gnn_layer(
                    tape,
                    h,
                    &adjs,
                    cfg.k_hops,
                    p(&format!("block{}.gnn_emb.w", b)),
                    p(&format!("block{}.gnn_emb.b", b)),
                    true,
                )?;
            }

            if cfg.dropout > 0.0 {
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    h = tape.dropout(h, cfg.dropout, || rng.gen())?;
                }
            }

            if !cfg.coarsen {
                // parameterized skip: project, pool to length 1, accumulate
                let mut s = feature_linear(
                    tape,
                    h,
                    p(&format!("block{}.skip.w", b)),
                    p(&format!("block{}.skip.b", b)),
                )?;
                let mut st = cur_t;
                while st > 1 {
                    s = tape.maxpool1d(s)?;
                    st /= 2;
                }
                let flat = tape.reshape(s, &[n, cfg.d_latent])?;
                skip_total = Some(match skip_total {
                    None => flat,
                    Some(acc) => tape.add(acc, flat)?,
                });
            }
        }
        debug_assert_eq!(cur_t, 1);

        let (rep, pooled_feat) = if cfg.coarsen {
            // single node left: project its features and go straight to the
            // classifier
            let last = counts.len() - 1;
            let proj = feature_linear(
                tape,
                h,
                p(&format!("block{}.skip.w", last)),
                p(&format!("block{}.skip.b", last)),
            )?;
            let rep = tape.reshape(proj, &[1, cfg.d_latent])?;
            let rep = tape.relu(rep);
            let feat = tape.reshape(rep, &[cfg.d_latent, 1])?;
            (rep, feat)
        } else {
            let rep = tape.relu(skip_total.expect("at least one block"));
            // node pooling: two linear maps along the node axis
            let h1 = tape.matmul(p("head.pool1.w"), rep)?;
            let h1 = tape.add_bias(h1, p("head.pool1.b"), 0)?;
            let h1 = tape.relu(h1);
            let h2 = tape.matmul(p("head.pool2.w"), h1)?;
            let h2 = tape.add_bias(h2, p("head.pool2.b"), 0)?;
            let feat = tape.reshape(h2, &[cfg.d_latent, 1])?;
            (rep, feat)
        };

        let c1 = tape.matmul(p("head.fc1.w"), pooled_feat)?;
        let c1 = tape.add_bias(c1, p("head.fc1.b"), 0)?;
        let c1 = tape.relu(c1);
        let c2 = tape.matmul(p("head.fc2.w"), c1)?;
        let c2 = tape.add_bias(c2, p("head.fc2.b"), 0)?;
        let logits = tape.reshape(c2, &[cfg.n_classes])?;

        Ok(ForwardCache { logits, rep, a_adp, assignments, a_input, x_input, param_ids })
    }

    /// Evaluation-mode forward returning plain logits.
    pub fn logits(&self, a: &Tensor, x: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let cache = self.forward_on_tape(&mut tape, a, x, false, None)?;
        Ok(tape.value(cache.logits).data().to_vec())
    }

    pub fn predict(&self, a: &Tensor, x: &Tensor) -> Result<usize, ModelError> {
        let logits = self.logits(a, x)?;
        Ok(argmax(&logits))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Composite loss: α₁·CE + α₂·(per-node assignment entropy) + α₃·(negative
/// cluster-usage entropy) + α₄·(windowed temporal assignment std).
pub fn compute_loss(
    tape: &mut Tape,
    logits: NodeId,
    assignments: &[NodeId],
    label: usize,
    config: &ModelConfig,
) -> Result<NodeId, ModelError> {
    let n_classes = tape.value(logits).numel();
    if label >= n_classes {
        return Err(ModelError::Config(format!("label {} out of range for {} classes", label, n_classes)));
    }
    let [a1, a2, a3, a4] = config.alphas;
    if (a2 != 0.0 || a3 != 0.0 || a4 != 0.0) && assignments.is_empty() {
        return Err(ModelError::Config("assignment regularizers need assignment tensors".into()));
    }

    let lsm = tape.log_softmax(logits, 0)?;
    let picked = tape.select(lsm, label)?;
    let ce = tape.scale(picked, -1.0);
    let mut loss = tape.scale(ce, a1);

    if a2 != 0.0 {
        let e1 = assignment_entropy(tape, assignments)?;
        let term = tape.scale(e1, a2);
        loss = tape.add(loss, term)?;
    }
    if a3 != 0.0 {
        let e2 = cluster_usage_neg_entropy(tape, assignments)?;
        let term = tape.scale(e2, a3);
        loss = tape.add(loss, term)?;
    }
    if a4 != 0.0 {
        let lt = temporal_stability(tape, assignments, config.tau)?;
        let term = tape.scale(lt, a4);
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}

/// Mean entropy of per-node cluster assignment rows, averaged over blocks.
fn assignment_entropy(tape: &mut Tape, assignments: &[NodeId]) -> Result<NodeId, ModelError> {
    let mut total: Option<NodeId> = None;
    for &s in assignments {
        let shape = tape.value(s).shape().to_vec();
        let (n, t) = (shape[0], shape[2]);
        let shifted = tape.add_scalar(s, 1e-12);
        let lg = tape.log(shifted);
        let pl = tape.mul(s, lg)?;
        let sum = tape.sum_all(pl);
        let ent = tape.scale(sum, -1.0 / (n * t) as f64);
        total = Some(match total {
            None => ent,
            Some(acc) => tape.add(acc, ent)?,
        });
    }
    let total = total.expect("nonempty assignments");
    Ok(tape.scale(total, 1.0 / assignments.len() as f64))
}

/// Negative entropy of the per-time cluster usage distribution (mass of each
/// cluster over all nodes), averaged over time and blocks. Minimizing this
/// spreads nodes across clusters.
fn cluster_usage_neg_entropy(tape: &mut Tape, assignments: &[NodeId]) -> Result<NodeId, ModelError> {
    let mut total: Option<NodeId> = None;
    for &s in assignments {
        let shape = tape.value(s).shape().to_vec();
        let (n, t) = (shape[0], shape[2]);
        let col = tape.sum_axis(s, 0)?; // [c,t]
        let q = tape.scale(col, 1.0 / n as f64); // distribution over c per t
        let shifted = tape.add_scalar(q, 1e-12);
        let lq = tape.log(shifted);
        let ql = tape.mul(q, lq)?;
        let sum = tape.sum_all(ql);
        let neg_ent = tape.scale(sum, 1.0 / t as f64);
        total = Some(match total {
            None => neg_ent,
            Some(acc) => tape.add(acc, neg_ent)?,
        });
    }
    let total = total.expect("nonempty assignments");
    Ok(tape.scale(total, 1.0 / assignments.len() as f64))
}

/// Mean within-window standard deviation of S over time; blocks whose
/// temporal length is 1 contribute nothing.
fn temporal_stability(
    tape: &mut Tape,
    assignments: &[NodeId],
    tau: usize,
) -> Result<NodeId, ModelError> {
    let mut total: Option<NodeId> = None;
    let mut used = 0usize;
    for &s in assignments {
        let t = tape.value(s).shape()[2];
        if t < 2 {
            continue;
        }
        let win = tau.min(t);
        let n_win = t / win;
        let mut block_sum: Option<NodeId> = None;
        for w in 0..n_win {
            let sl = tape.slice_axis(s, 2, w * win, win)?;
            let mu_sum = tape.sum_axis(sl, 2)?;
            let mu = tape.scale(mu_sum, 1.0 / win as f64);
            let mu_e = tape.expand_last(mu, win)?;
            let diff = tape.sub(sl, mu_e)?;
            let sq = tape.mul(diff, diff)?;
            let var_sum = tape.sum_axis(sq, 2)?;
            let var = tape.scale(var_sum, 1.0 / win as f64);
            let var_eps = tape.add_scalar(var, 1e-12);
            let std = tape.sqrt(var_eps);
            let m = tape.mean_all(std);
            block_sum = Some(match block_sum {
                None => m,
                Some(acc) => tape.add(acc, m)?,
            });
        }
        if let Some(bs) = block_sum {
            let avg = tape.scale(bs, 1.0 / n_win as f64);
            total = Some(match total {
                None => avg,
                Some(acc) => tape.add(acc, avg)?,
            });
            used += 1;
        }
    }
    Ok(match total {
        None => tape.constant(Tensor::scalar(0.0)),
        Some(t) => tape.scale(t, 1.0 / used as f64),
    })
}
