//! Integrated-gradients attribution over both the adjacency and signal
//! inputs, task-level aggregation, and the overlapping-window consistency
//! check.

use crate::graphdata::standardize_signals;
use crate::model::{Model, ModelError};
use crate::tape::Tape;
use crate::tensor::Tensor;
use std::fmt;
use std::io::Write;
use std::path::Path;

#[derive(Debug)]
pub enum AttributionError {
    Validation(String),
    /// Gradient blew up at interpolation step `step` (1-based).
    NonFiniteGradient { step: usize },
    Model(ModelError),
    Io(std::io::Error),
}

impl fmt::Display for AttributionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributionError::Validation(m) => write!(f, "attribution: {}", m),
            AttributionError::NonFiniteGradient { step } => {
                write!(f, "non-finite gradient at interpolation step {}", step)
            }
            AttributionError::Model(e) => write!(f, "{}", e),
            AttributionError::Io(e) => write!(f, "i/o: {}", e),
        }
    }
}

impl std::error::Error for AttributionError {}

impl From<ModelError> for AttributionError {
    fn from(e: ModelError) -> Self {
        AttributionError::Model(e)
    }
}

impl From<std::io::Error> for AttributionError {
    fn from(e: std::io::Error) -> Self {
        AttributionError::Io(e)
    }
}

/// Anything that exposes a scalar class score with gradients against both
/// inputs. The real model implements it; tests use an analytic linear map.
pub trait Differentiable {
    /// Returns (score, ∂score/∂a, ∂score/∂x) for the target class at (a, x).
    fn value_and_grads(
        &self,
        a: &Tensor,
        x: &Tensor,
        target: usize,
    ) -> Result<(f64, Tensor, Tensor), AttributionError>;
}

impl Differentiable for Model {
    fn value_and_grads(
        &self,
        a: &Tensor,
        x: &Tensor,
        target: usize,
    ) -> Result<(f64, Tensor, Tensor), AttributionError> {
        if target >= self.config.n_classes {
            return Err(AttributionError::Validation(format!(
                "target class {} out of range for {} classes",
                target, self.config.n_classes
            )));
        }
        let mut tape = Tape::new();
        let cache = self.forward_on_tape(&mut tape, a, x, true, None)?;
        // pre-softmax logit of the target class
        let logit = tape.select(cache.logits, target).map_err(ModelError::from)?;
        let value = tape.value(logit).data()[0];
        tape.backward(logit).map_err(ModelError::from)?;
        let ga = tape.grad(cache.a_input).unwrap_or_else(|| Tensor::zeros(a.shape()));
        let gx = tape.grad(cache.x_input).unwrap_or_else(|| Tensor::zeros(x.shape()));
        Ok((value, ga, gx))
    }
}

#[derive(Debug, Clone)]
pub struct AttributionResult {
    pub attr_a: Tensor,
    pub attr_x: Tensor,
    pub target_class: usize,
    pub m_steps: usize,
    pub baseline: String,
    /// |Σ attributions − (F(input) − F(baseline))|; recorded, never dropped.
    pub completeness_gap: f64,
}

pub fn zero_baselines(n_nodes: usize, t_len: usize) -> (Tensor, Tensor) {
    (Tensor::zeros(&[n_nodes, n_nodes]), Tensor::zeros(&[n_nodes, t_len]))
}

/// Right-Riemann integrated gradients over the straight path from the
/// baselines to the inputs, joint in (a, x). Attribution shapes equal input
/// shapes; the attributed scalar is whatever `model` scores.
pub fn integrated_gradients(
    model: &dyn Differentiable,
    a: &Tensor,
    x: &Tensor,
    target: usize,
    m_steps: usize,
    baseline_a: &Tensor,
    baseline_x: &Tensor,
) -> Result<AttributionResult, AttributionError> {
    if m_steps == 0 {
        return Err(AttributionError::Validation("m_steps must be >= 1".into()));
    }
    if baseline_a.shape() != a.shape() || baseline_x.shape() != x.shape() {
        return Err(AttributionError::Validation(format!(
            "baseline shapes ({:?}, {:?}) must equal input shapes ({:?}, {:?})",
            baseline_a.shape(),
            baseline_x.shape(),
            a.shape(),
            x.shape()
        )));
    }

    let mut sum_ga = vec![0.0; a.numel()];
    let mut sum_gx = vec![0.0; x.numel()];
    for step in 1..=m_steps {
        let alpha = step as f64 / m_steps as f64;
        let ia = lerp(baseline_a, a, alpha);
        let ix = lerp(baseline_x, x, alpha);
        let (_, ga, gx) = model.value_and_grads(&ia, &ix, target)?;
        if !ga.is_finite() || !gx.is_finite() {
            return Err(AttributionError::NonFiniteGradient { step });
        }
        for (s, g) in sum_ga.iter_mut().zip(ga.data()) {
            *s += g;
        }
        for (s, g) in sum_gx.iter_mut().zip(gx.data()) {
            *s += g;
        }
    }

    let scale = 1.0 / m_steps as f64;
    let attr_a_data: Vec<f64> = a
        .data()
        .iter()
        .zip(baseline_a.data())
        .zip(&sum_ga)
        .map(|((&v, &b), &g)| (v - b) * g * scale)
        .collect();
    let attr_x_data: Vec<f64> = x
        .data()
        .iter()
        .zip(baseline_x.data())
        .zip(&sum_gx)
        .map(|((&v, &b), &g)| (v - b) * g * scale)
        .collect();

    let (f_input, _, _) = model.value_and_grads(a, x, target)?;
    let (f_base, _, _) = model.value_and_grads(baseline_a, baseline_x, target)?;
    let total: f64 = attr_a_data.iter().chain(&attr_x_data).sum();
    let completeness_gap = (total - (f_input - f_base)).abs();

    let baseline = if baseline_a.data().iter().all(|&v| v == 0.0)
        && baseline_x.data().iter().all(|&v| v == 0.0)
    {
        "zeros".to_string()
    } else {
        "custom".to_string()
    };

    Ok(AttributionResult {
        attr_a: Tensor::new(a.shape().to_vec(), attr_a_data).unwrap(),
        attr_x: Tensor::new(x.shape().to_vec(), attr_x_data).unwrap(),
        target_class: target,
        m_steps,
        baseline,
        completeness_gap,
    })
}

fn lerp(from: &Tensor, to: &Tensor, alpha: f64) -> Tensor {
    let data: Vec<f64> = from
        .data()
        .iter()
        .zip(to.data())
        .map(|(&b, &v)| b + alpha * (v - b))
        .collect();
    Tensor::new(from.shape().to_vec(), data).unwrap()
}

#[derive(Debug, Clone)]
pub struct AggregateMap {
    pub n_results: usize,
    pub target_class: usize,
    pub mean_a: Tensor,
    pub var_a: Tensor,
    pub mean_x: Tensor,
    pub var_x: Tensor,
    /// Sender importance: column averages of `mean_a`.
    pub col_avg_a: Vec<f64>,
    /// Per-node time-average of `mean_x`.
    pub time_avg_x: Vec<f64>,
    /// Group means of `col_avg_a` under the optional node→group mapping.
    pub group_col_avg: Option<Vec<f64>>,
}

/// Elementwise mean/variance over a set of same-shape attribution results,
/// plus the paper-style reductions. Population variance.
pub fn aggregate_attributions(
    results: &[AttributionResult],
    group_map: Option<&[usize]>,
) -> Result<AggregateMap, AttributionError> {
    let first = results
        .first()
        .ok_or_else(|| AttributionError::Validation("no attribution results to aggregate".into()))?;
    let (sa, sx) = (first.attr_a.shape().to_vec(), first.attr_x.shape().to_vec());
    let target = first.target_class;
    for r in results {
        if r.attr_a.shape() != sa || r.attr_x.shape() != sx {
            return Err(AttributionError::Validation("mismatched attribution shapes".into()));
        }
        if r.target_class != target {
            return Err(AttributionError::Validation(format!(
                "mixed target classes {} and {}",
                target, r.target_class
            )));
        }
    }
    let k = results.len() as f64;
    let stat = |get: &dyn Fn(&AttributionResult) -> &Tensor, shape: &[usize]| {
        let n = shape.iter().product::<usize>();
        let mut mean = vec![0.0; n];
        for r in results {
            for (m, v) in mean.iter_mut().zip(get(r).data()) {
                *m += v / k;
            }
        }
        let mut var = vec![0.0; n];
        for r in results {
            for ((vv, v), m) in var.iter_mut().zip(get(r).data()).zip(&mean) {
                *vv += (v - m) * (v - m) / k;
            }
        }
        (
            Tensor::new(shape.to_vec(), mean).unwrap(),
            Tensor::new(shape.to_vec(), var).unwrap(),
        )
    };
    let (mean_a, var_a) = stat(&|r| &r.attr_a, &sa);
    let (mean_x, var_x) = stat(&|r| &r.attr_x, &sx);

    let n = sa[0];
    let col_avg_a: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| mean_a.at2(i, j)).sum::<f64>() / n as f64)
        .collect();
    let t = sx[1];
    let time_avg_x: Vec<f64> = (0..n)
        .map(|i| mean_x.data()[i * t..(i + 1) * t].iter().sum::<f64>() / t as f64)
        .collect();

    let group_col_avg = match group_map {
        None => None,
        Some(groups) => {
            if groups.len() != n {
                return Err(AttributionError::Validation(format!(
                    "group map length {} != node count {}",
                    groups.len(),
                    n
                )));
            }
            let n_groups = groups.iter().max().map_or(0, |&g| g + 1);
            let mut sums = vec![0.0; n_groups];
            let mut counts = vec![0usize; n_groups];
            for (node, &g) in groups.iter().enumerate() {
                sums[g] += col_avg_a[node];
                counts[g] += 1;
            }
            Some(
                sums.iter()
                    .zip(&counts)
                    .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                    .collect(),
            )
        }
    };

    Ok(AggregateMap {
        n_results: results.len(),
        target_class: target,
        mean_a,
        var_a,
        mean_x,
        var_x,
        col_avg_a,
        time_avg_x,
        group_col_avg,
    })
}

/// Min-max rescale to [0, 1]; a constant map comes back all zero.
pub fn min_max_normalized(t: &Tensor) -> Tensor {
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data: Vec<f64> = if span <= 0.0 {
        vec![0.0; t.numel()]
    } else {
        t.data().iter().map(|&v| (v - lo) / span).collect()
    };
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// Attribution agreement between two windows of the same session offset by
/// `tau`: Pearson correlation of the signal attributions over the aligned
/// overlap. The attributed class is the model's prediction on the first
/// window. Each window is standardized independently, matching training.
pub fn overlap_consistency_check(
    model: &Model,
    adjacency: &Tensor,
    session: &Tensor,
    t0: usize,
    tau: usize,
    window: usize,
    m_steps: usize,
) -> Result<f64, AttributionError> {
    let shape = session.shape();
    if shape.len() != 2 {
        return Err(AttributionError::Validation(format!("session must be N×T, got {:?}", shape)));
    }
    let (n, total) = (shape[0], shape[1]);
    if tau >= window {
        return Err(AttributionError::Validation(format!(
            "offset {} must be smaller than the window {}",
            tau, window
        )));
    }
    if t0 + tau + window > total {
        return Err(AttributionError::Validation(format!(
            "session length {} too short for windows at {} and {} of length {}",
            total,
            t0,
            t0 + tau,
            window
        )));
    }

    let slice = |start: usize| -> Result<Tensor, AttributionError> {
        let mut w = Tensor::zeros(&[n, window]);
        for i in 0..n {
            w.data_mut()[i * window..(i + 1) * window]
                .copy_from_slice(&session.data()[i * total + start..i * total + start + window]);
        }
        standardize_signals(&w).map_err(|e| AttributionError::Validation(e.to_string()))
    };
    let w1 = slice(t0)?;
    let w2 = slice(t0 + tau)?;

    let target = model.predict(adjacency, &w1)?;
    let (base_a, base_x) = zero_baselines(n, window);
    let r1 = integrated_gradients(model, adjacency, &w1, target, m_steps, &base_a, &base_x)?;
    let r2 = integrated_gradients(model, adjacency, &w2, target, m_steps, &base_a, &base_x)?;

    // overlap: window 1 columns [tau, window) vs window 2 columns [0, window-tau)
    let olen = window - tau;
    let mut u = Vec::with_capacity(n * olen);
    let mut v = Vec::with_capacity(n * olen);
    for i in 0..n {
        for s in 0..olen {
            u.push(r1.attr_x.data()[i * window + tau + s]);
            v.push(r2.attr_x.data()[i * window + s]);
        }
    }
    Ok(pearson(&u, &v))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return if va == vb { 1.0 } else { 0.0 };
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// CSV summary: one row per node with its group (empty when no mapping),
/// sender importance (column average of mean Attr_A), its variance proxy
/// (mean per-column variance), and the importance rank (0 = most important).
pub fn write_aggregate_csv(
    path: &Path,
    map: &AggregateMap,
    group_map: Option<&[usize]>,
) -> Result<(), AttributionError> {
    let n = map.col_avg_a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| map.col_avg_a[j].partial_cmp(&map.col_avg_a[i]).unwrap());
    let mut rank = vec![0usize; n];
    for (r, &node) in order.iter().enumerate() {
        rank[node] = r;
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "node,group,col_avg_attr_a,col_var_attr_a,time_avg_attr_x,rank")?;
    for node in 0..n {
        let group = group_map.map_or(String::new(), |g| g[node].to_string());
        let col_var: f64 = (0..n).map(|i| map.var_a.at2(i, node)).sum::<f64>() / n as f64;
        writeln!(
            f,
            "{},{},{},{},{},{}",
            node, group, map.col_avg_a[node], col_var, map.time_avg_x[node], rank[node]
        )?;
    }
    Ok(())
}
