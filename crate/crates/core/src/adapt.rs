//! Structural actions on the first hidden layer: Increment, Merge and Pool.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{corrupt_matrix, init_bound, layer_gradient, random_matrix, DataBatch, Matrix, Network, Objective, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Pool,
    Increment,
    Merge,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Pool, ActionKind::Increment, ActionKind::Merge];

    pub fn index(self) -> usize {
        match self {
            ActionKind::Pool => 0,
            ActionKind::Increment => 1,
            ActionKind::Merge => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Pool => "pool",
            ActionKind::Increment => "increment",
            ActionKind::Merge => "merge",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool" => Ok(ActionKind::Pool),
            "increment" => Ok(ActionKind::Increment),
            "merge" => Ok(ActionKind::Merge),
            other => Err(Error::InvalidAction(format!("unknown action `{other}`"))),
        }
    }
}

/// An action with its node count; the count is zero exactly for Pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuralAction {
    kind: ActionKind,
    count: usize,
}

impl StructuralAction {
    pub fn new(kind: ActionKind, count: usize) -> Result<Self> {
        if (kind == ActionKind::Pool) != (count == 0) {
            return Err(Error::InvalidAction(format!("{kind} with count {count}")));
        }
        Ok(StructuralAction { kind, count })
    }

    pub fn pool() -> Self {
        StructuralAction {
            kind: ActionKind::Pool,
            count: 0,
        }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Which parameters a masked update may touch after growing layer 1.
enum Downstream {
    Output,
    Layer(usize),
}

fn downstream(net: &Network) -> Downstream {
    if net.layers.len() > 1 {
        Downstream::Layer(1)
    } else {
        Downstream::Output
    }
}

fn append_columns(m: &Matrix, extra: &Matrix) -> Matrix {
    let mut out = m.clone().resize_horizontally(m.ncols() + extra.ncols(), 0.0);
    out.columns_mut(m.ncols(), extra.ncols()).copy_from(extra);
    out
}

fn append_rows(m: &Matrix, extra: &Matrix) -> Matrix {
    let mut out = m.clone().resize_vertically(m.nrows() + extra.nrows(), 0.0);
    out.rows_mut(m.nrows(), extra.nrows()).copy_from(extra);
    out
}

/// Adds `delta` randomly initialised nodes to layer 1 without training them.
/// Returns the previous width.
pub fn grow_first_layer<R: Rng + ?Sized>(net: &mut Network, delta: usize, rng: &mut R) -> usize {
    let old = net.layers[0].hidden_dim();
    let new = old + delta;
    let dim = net.layers[0].input_dim();
    let rows = random_matrix(delta, dim, init_bound(dim, new), rng);
    let l1 = &mut net.layers[0];
    l1.weights = append_rows(&l1.weights, &rows);
    l1.hidden_bias = l1.hidden_bias.clone().resize_vertically(new, 0.0);

    match downstream(net) {
        Downstream::Layer(i) => {
            let next = &mut net.layers[i];
            let cols = random_matrix(next.hidden_dim(), delta, init_bound(new, next.hidden_dim()), rng);
            next.weights = append_columns(&next.weights, &cols);
            next.recon_bias = next.recon_bias.clone().resize_vertically(new, 0.0);
        }
        Downstream::Output => {
            let k = net.out_weights.nrows();
            let cols = random_matrix(k, delta, init_bound(new, k), rng);
            net.out_weights = append_columns(&net.out_weights, &cols);
        }
    }
    old
}

/// Increment: grow layer 1 by `delta` nodes and greedily train only the new
/// parameters on the recent pool (one epoch).
pub fn increment<R: Rng + ?Sized, B: AsRef<DataBatch>>(
    net: &mut Network,
    delta: usize,
    recent: &[B],
    rng: &mut R,
) -> Result<()> {
    increment_with_epochs(net, delta, recent, 1, rng)
}

pub fn increment_with_epochs<R: Rng + ?Sized, B: AsRef<DataBatch>>(
    net: &mut Network,
    delta: usize,
    pool: &[B],
    epochs: usize,
    rng: &mut R,
) -> Result<()> {
    if delta == 0 {
        return Ok(());
    }
    if net.layers.is_empty() {
        return Err(Error::LayerOutOfRange { index: 0, layers: 0 });
    }
    if pool.iter().all(|b| b.as_ref().is_empty()) {
        return Err(Error::EmptyRecentPool);
    }
    for b in pool {
        if b.as_ref().dim() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "increment",
                expected: net.input_dim(),
                found: b.as_ref().dim(),
            });
        }
    }
    let old = grow_first_layer(net, delta, rng);
    let rate = net.learning_rate;

    // generative phase: new rows of W1 and their hidden biases
    for _ in 0..epochs {
        for b in pool {
            let b = b.as_ref();
            let mut start = 0;
            while start < b.len() {
                let len = net.minibatch.min(b.len() - start);
                let clean = b.input_columns(start, len);
                let input = corrupt_matrix(&clean, net.corruption, rng);
                let (_, g) = layer_gradient(&net.layers[0], &clean, &input);
                let l1 = &mut net.layers[0];
                let mut rows = l1.weights.rows_mut(old, delta);
                rows -= g.weights.rows(old, delta) * rate;
                let mut bias = l1.hidden_bias.rows_mut(old, delta);
                bias -= g.hidden_bias.rows(old, delta) * rate;
                start += len;
            }
        }
    }

    // discriminative phase: new downstream columns only
    for b in pool {
        let b = b.as_ref();
        let mut start = 0;
        while start < b.len() {
            let len = net.minibatch.min(b.len() - start);
            let clean = b.input_columns(start, len);
            let input = corrupt_matrix(&clean, net.corruption, rng);
            let (_, g) = net.objective_gradient(&clean, &input, &b.labels[start..start + len], Objective::discriminative());
            match downstream(net) {
                Downstream::Layer(i) => {
                    let mut cols = net.layers[i].weights.columns_mut(old, delta);
                    cols -= g.layers[i].weights.columns(old, delta) * rate;
                }
                Downstream::Output => {
                    let mut cols = net.out_weights.columns_mut(old, delta);
                    cols -= g.out_weights.columns(old, delta) * rate;
                }
            }
            start += len;
        }
    }
    Ok(())
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Greedy closest-pair selection over the rows of `weights`: repeatedly take
/// the globally closest unused pair, ties going to the lowest index pair.
pub fn closest_pairs(weights: &Matrix, count: usize) -> Vec<(usize, usize)> {
    let n = weights.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| weights.row(i).iter().copied().collect()).collect();
    let mut candidates = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((cosine_distance(&rows[i], &rows[j]), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; n];
    let mut pairs = Vec::with_capacity(count);
    for (_, i, j) in candidates {
        if pairs.len() == count {
            break;
        }
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Merge: fuse `delta` closest pairs of layer-1 nodes. Weight rows, hidden
/// biases and downstream reconstruction biases are averaged; downstream
/// weight columns are summed so that duplicate nodes merge without changing
/// the network function. Returns the merged pairs.
pub fn merge(net: &mut Network, delta: usize) -> Result<Vec<(usize, usize)>> {
    if delta == 0 {
        return Ok(Vec::new());
    }
    if net.layers.is_empty() {
        return Err(Error::LayerOutOfRange { index: 0, layers: 0 });
    }
    let width = net.layers[0].hidden_dim();
    if width < 2 * delta {
        return Err(Error::InsufficientWidth { pairs: delta, width });
    }
    let pairs = closest_pairs(&net.layers[0].weights, delta);

    let mut keep = vec![true; width];
    {
        let l1 = &mut net.layers[0];
        for &(i, j) in &pairs {
            let merged = (l1.weights.row(i) + l1.weights.row(j)) * 0.5;
            l1.weights.set_row(i, &merged);
            l1.hidden_bias[i] = 0.5 * (l1.hidden_bias[i] + l1.hidden_bias[j]);
            keep[j] = false;
        }
    }
    let down: &mut Matrix = match downstream(net) {
        Downstream::Layer(i) => {
            let next = &mut net.layers[i];
            for &(a, b) in &pairs {
                next.recon_bias[a] = 0.5 * (next.recon_bias[a] + next.recon_bias[b]);
            }
            &mut next.weights
        }
        Downstream::Output => &mut net.out_weights,
    };
    for &(i, j) in &pairs {
        let summed = down.column(i) + down.column(j);
        down.set_column(i, &summed);
    }

    let kept: Vec<usize> = (0..width).filter(|&i| keep[i]).collect();
    let l1 = &mut net.layers[0];
    l1.weights = l1.weights.select_rows(kept.iter());
    l1.hidden_bias = l1.hidden_bias.select_rows(kept.iter());
    match downstream(net) {
        Downstream::Layer(i) => {
            let next = &mut net.layers[i];
            next.weights = next.weights.select_columns(kept.iter());
            next.recon_bias = Vector::from_iterator(kept.len(), kept.iter().map(|&k| next.recon_bias[k]));
        }
        Downstream::Output => {
            net.out_weights = net.out_weights.select_columns(kept.iter());
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolOutcome {
    Trained { batches: usize },
    EmptyPool,
}

/// Pool: one fine-tuning pass over every pooled batch, oldest first.
pub fn pool_finetune<R: Rng + ?Sized, B: AsRef<DataBatch>>(
    net: &mut Network,
    pool: &[B],
    lambda: f64,
    rng: &mut R,
) -> Result<PoolOutcome> {
    if pool.is_empty() {
        log::warn!("pool action on an empty diverse pool; skipping");
        return Ok(PoolOutcome::EmptyPool);
    }
    for b in pool {
        net.finetune(b.as_ref(), lambda, rng)?;
    }
    Ok(PoolOutcome::Trained { batches: pool.len() })
}
