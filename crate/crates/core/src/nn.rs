//! Tied-weight denoising autoencoder layers stacked under a softmax classifier.
//!
//! Examples are processed column-wise: a minibatch of `m` inputs of width `D`
//! is a `D x m` matrix. [`DataBatch`] stores rows (one example per row) and is
//! transposed on the way in.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Probabilities inside log terms are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn sigmoid_scalar(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

pub fn sigmoid(v: &Vector) -> Vector {
    v.map(sigmoid_scalar)
}

/// Zeroes each coordinate independently with probability `p`.
pub fn corrupt<R: Rng + ?Sized>(x: &Vector, p: f64, rng: &mut R) -> Vector {
    x.map(|v| if rng.random::<f64>() < p { 0.0 } else { v })
}

/// Matrix form of [`corrupt`]; consumes one draw per entry in column-major order.
pub fn corrupt_matrix<R: Rng + ?Sized>(x: &Matrix, p: f64, rng: &mut R) -> Matrix {
    x.map(|v| if rng.random::<f64>() < p { 0.0 } else { v })
}

pub fn softmax(logits: &Vector) -> Vector {
    let max = logits.max();
    let exp = logits.map(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[inline]
fn bernoulli_ce(target: f64, prob: f64) -> f64 {
    let q = clamp_prob(prob);
    -(target * q.ln() + (1.0 - target) * (1.0 - q).ln())
}

/// Derivative of [`bernoulli_ce`] with respect to the pre-sigmoid activation
/// producing `prob`. Zero inside the clamped region.
#[inline]
fn bernoulli_ce_logit_grad(target: f64, prob: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob) {
        0.0
    } else {
        prob - target
    }
}

/// Derivative of [`bernoulli_ce`] with respect to `prob` itself.
#[inline]
fn bernoulli_ce_prob_grad(target: f64, prob: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob) {
        0.0
    } else {
        -target / prob + (1.0 - target) / (1.0 - prob)
    }
}

/// Reconstruction cross-entropy, negated so that lower is better.
pub fn generative_loss(x: &Vector, x_hat: &Vector) -> f64 {
    x.iter()
        .zip(x_hat.iter())
        .map(|(&t, &p)| bernoulli_ce(t, p))
        .sum()
}

/// Per-class Bernoulli cross-entropy of a probability vector against a one-hot target.
pub fn discriminative_loss(y: &Vector, y_hat: &Vector) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "discriminative_loss",
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    Ok(y.iter()
        .zip(y_hat.iter())
        .map(|(&t, &p)| bernoulli_ce(t, p))
        .sum())
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Symmetric uniform initialisation bound for a sigmoid layer.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    4.0 * (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Matrix {
    // row-major draw order so that appending rows never reshuffles earlier draws
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.random_range(-bound..=bound);
        }
    }
    m
}

/// One tied-weight autoencoder: `W` is `hidden x input`, the decoder uses `W^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub hidden_bias: Vector,
    pub recon_bias: Vector,
}

impl LayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LayerParams {
            weights: Matrix::zeros(hidden, input),
            hidden_bias: Vector::zeros(hidden),
            recon_bias: Vector::zeros(input),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        LayerParams {
            weights: random_matrix(hidden, input, init_bound(input, hidden), rng),
            hidden_bias: Vector::zeros(hidden),
            recon_bias: Vector::zeros(input),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_consistent(&self) -> bool {
        self.weights.nrows() == self.hidden_bias.len() && self.weights.ncols() == self.recon_bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
            && self.recon_bias.iter().all(|v| v.is_finite())
    }

    fn encode_cols(&self, x: &Matrix) -> Matrix {
        let mut a = &self.weights * x;
        for mut col in a.column_iter_mut() {
            col += &self.hidden_bias;
        }
        a.apply(|v| *v = sigmoid_scalar(*v));
        a
    }

    fn decode_cols(&self, h: &Matrix) -> Matrix {
        let mut a = self.weights.tr_mul(h);
        for mut col in a.column_iter_mut() {
            col += &self.recon_bias;
        }
        a.apply(|v| *v = sigmoid_scalar(*v));
        a
    }

    fn scaled_sub(&mut self, grad: &LayerParams, rate: f64) {
        self.weights -= &grad.weights * rate;
        self.hidden_bias -= &grad.hidden_bias * rate;
        self.recon_bias -= &grad.recon_bias * rate;
    }
}

pub fn encode(layer: &LayerParams, x: &Vector) -> Result<Vector> {
    if x.len() != layer.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "encode",
            expected: layer.input_dim(),
            found: x.len(),
        });
    }
    Ok(sigmoid(&(&layer.weights * x + &layer.hidden_bias)))
}

pub fn decode(layer: &LayerParams, h: &Vector) -> Result<Vector> {
    if h.len() != layer.hidden_dim() {
        return Err(Error::DimensionMismatch {
            context: "decode",
            expected: layer.hidden_dim(),
            found: h.len(),
        });
    }
    Ok(sigmoid(&(layer.weights.tr_mul(h) + &layer.recon_bias)))
}

/// `p` labelled examples. Inputs are rows of a `p x D` matrix in `[0,1]`;
/// labels are stored as class indices and exposed as one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    pub seq_id: u64,
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl DataBatch {
    pub fn new(seq_id: u64, inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::InvalidBatch(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidBatch(format!("label {bad} outside 0..{num_classes}")));
        }
        if inputs.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidBatch("input outside [0,1]".into()));
        }
        Ok(DataBatch {
            seq_id,
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn input(&self, i: usize) -> Vector {
        self.inputs.row(i).transpose()
    }

    pub fn one_hot(&self, i: usize) -> Vector {
        let mut y = Vector::zeros(self.num_classes);
        y[self.labels[i]] = 1.0;
        y
    }

    pub fn one_hot_matrix(&self) -> Matrix {
        let mut y = Matrix::zeros(self.len(), self.num_classes);
        for (i, &l) in self.labels.iter().enumerate() {
            y[(i, l)] = 1.0;
        }
        y
    }

    /// Class frequencies (sums to 1 for a non-empty batch).
    pub fn class_histogram(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1.0;
        }
        let n = self.len().max(1) as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    /// Columns `start..start+len` as a `D x len` matrix.
    pub fn input_columns(&self, start: usize, len: usize) -> Matrix {
        self.inputs.rows(start, len).transpose()
    }
}

/// Relative weight of the two loss terms in a training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub disc: f64,
    pub gen: f64,
}

impl Objective {
    pub fn hybrid(lambda: f64) -> Self {
        Objective { disc: 1.0, gen: lambda }
    }

    pub fn discriminative() -> Self {
        Objective { disc: 1.0, gen: 0.0 }
    }

    pub fn generative() -> Self {
        Objective { disc: 0.0, gen: 1.0 }
    }
}

/// Gradient (or any other quantity) shaped like a [`Network`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrad {
    pub layers: Vec<LayerParams>,
    pub out_weights: Matrix,
    pub out_bias: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchErrors {
    /// Mean per-example reconstruction loss of the full stack.
    pub generative: f64,
    /// Misclassification fraction.
    pub classification: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<LayerParams>,
    pub out_weights: Matrix,
    pub out_bias: Vector,
    pub learning_rate: f64,
    pub corruption: f64,
    pub minibatch: usize,
    /// Highest `seq_id` this network has been fine-tuned on.
    pub trained_through: Option<u64>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, widths: &[usize], classes: usize, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input_dim;
        for &w in widths {
            layers.push(LayerParams::random(prev, w, rng));
            prev = w;
        }
        Network {
            layers,
            out_weights: random_matrix(classes, prev, init_bound(prev, classes), rng),
            out_bias: Vector::zeros(classes),
            learning_rate: 0.2,
            corruption: 0.2,
            minibatch: 10,
            trained_through: None,
        }
    }

    pub fn with_learning_rate(mut self, rate: f64) -> Self {
        self.learning_rate = rate;
        self
    }

    pub fn with_corruption(mut self, p: f64) -> Self {
        self.corruption = p;
        self
    }

    pub fn with_minibatch(mut self, size: usize) -> Self {
        self.minibatch = size.max(1);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.out_weights.ncols(), |l| l.input_dim())
    }

    pub fn num_classes(&self) -> usize {
        self.out_weights.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim()).collect()
    }

    pub fn top_width(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), |l| l.hidden_dim())
    }

    /// Dimension chaining between layers and into the output layer.
    pub fn is_well_formed(&self) -> bool {
        let mut prev = self.input_dim();
        for l in &self.layers {
            if !l.is_consistent() || l.input_dim() != prev {
                return false;
            }
            prev = l.hidden_dim();
        }
        self.out_weights.ncols() == prev && self.out_weights.nrows() == self.out_bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
            && self.out_weights.iter().all(|v| v.is_finite())
            && self.out_bias.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, dim: usize, context: &'static str) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.input_dim(),
                found: dim,
            });
        }
        Ok(())
    }

    fn check_batch(&self, batch: &DataBatch, context: &'static str) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_input(batch.dim(), context)?;
        if batch.num_classes != self.num_classes() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.num_classes(),
                found: batch.num_classes,
            });
        }
        Ok(())
    }

    pub fn hidden(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x.len(), "hidden")?;
        let mut h = x.clone();
        for l in &self.layers {
            h = encode(l, &h)?;
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Vector) -> Result<Vector> {
        let h = self.hidden(x)?;
        Ok(softmax(&(&self.out_weights * h + &self.out_bias)))
    }

    /// Full-stack reconstruction: encode through every layer, decode back down.
    pub fn reconstruct(&self, x: &Vector) -> Result<Vector> {
        let mut r = self.hidden(x)?;
        for l in self.layers.iter().rev() {
            r = decode(l, &r)?;
        }
        Ok(r)
    }

    fn forward_cols(&self, x: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in &self.layers {
            let h = l.encode_cols(acts.last().unwrap());
            acts.push(h);
        }
        acts
    }

    fn logits_cols(&self, top: &Matrix) -> Matrix {
        let mut z = &self.out_weights * top;
        for mut col in z.column_iter_mut() {
            col += &self.out_bias;
        }
        z
    }

    /// Decoder activations from the top: `recon[l]` is the reconstruction of
    /// the input to layer `l` (so `recon[0]` reconstructs `x`), and
    /// `recon[L]` is the top hidden code.
    fn reconstruct_cols(&self, top: &Matrix) -> Vec<Matrix> {
        let n = self.layers.len();
        let mut recon = vec![Matrix::zeros(0, 0); n + 1];
        recon[n] = top.clone();
        for l in (0..n).rev() {
            recon[l] = self.layers[l].decode_cols(&recon[l + 1]);
        }
        recon
    }

    fn softmax_cols(z: &Matrix) -> Matrix {
        let mut out = z.clone();
        for mut col in out.column_iter_mut() {
            let s = softmax(&col.clone_owned());
            col.copy_from(&s);
        }
        out
    }

    /// Mean objective over the columns of `clean` (targets) with `input`
    /// (possibly corrupted) fed to the encoder.
    pub fn objective_value(&self, clean: &Matrix, input: &Matrix, labels: &[usize], obj: Objective) -> f64 {
        let m = clean.ncols() as f64;
        let acts = self.forward_cols(input);
        let top = acts.last().unwrap();
        let mut total = 0.0;
        if obj.disc != 0.0 {
            let probs = Self::softmax_cols(&self.logits_cols(top));
            let mut disc = 0.0;
            for (j, &label) in labels.iter().enumerate() {
                for k in 0..probs.nrows() {
                    let t = if k == label { 1.0 } else { 0.0 };
                    disc += bernoulli_ce(t, probs[(k, j)]);
                }
            }
            total += obj.disc * disc / m;
        }
        if obj.gen != 0.0 {
            let recon = self.reconstruct_cols(top);
            let gen: f64 = clean
                .iter()
                .zip(recon[0].iter())
                .map(|(&t, &p)| bernoulli_ce(t, p))
                .sum();
            total += obj.gen * gen / m;
        }
        total
    }

    /// Analytic gradient of [`Network::objective_value`].
    pub fn objective_gradient(
        &self,
        clean: &Matrix,
        input: &Matrix,
        labels: &[usize],
        obj: Objective,
    ) -> (f64, NetworkGrad) {
        let n = self.layers.len();
        let m = clean.ncols() as f64;
        let acts = self.forward_cols(input);
        let top = &acts[n];

        let mut grad = NetworkGrad {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.input_dim(), l.hidden_dim()))
                .collect(),
            out_weights: Matrix::zeros(self.out_weights.nrows(), self.out_weights.ncols()),
            out_bias: Vector::zeros(self.out_bias.len()),
        };
        let mut value = 0.0;
        let mut delta_top = Matrix::zeros(top.nrows(), top.ncols());

        if obj.disc != 0.0 {
            let probs = Self::softmax_cols(&self.logits_cols(top));
            let mut dz = Matrix::zeros(probs.nrows(), probs.ncols());
            let mut disc = 0.0;
            for (j, &label) in labels.iter().enumerate() {
                let col = probs.column(j);
                let mut g = Vector::zeros(col.len());
                for k in 0..col.len() {
                    let t = if k == label { 1.0 } else { 0.0 };
                    disc += bernoulli_ce(t, col[k]);
                    g[k] = bernoulli_ce_prob_grad(t, col[k]);
                }
                // softmax jacobian: dz_i = p_i (g_i - sum_k g_k p_k)
                let dot = g.dot(&col);
                for k in 0..col.len() {
                    dz[(k, j)] = col[k] * (g[k] - dot) * obj.disc / m;
                }
            }
            value += obj.disc * disc / m;
            grad.out_weights = &dz * top.transpose();
            grad.out_bias = dz.column_sum();
            delta_top += self.out_weights.tr_mul(&dz);
        }

        if obj.gen != 0.0 {
            let recon = self.reconstruct_cols(top);
            let mut gen = 0.0;
            // gradient w.r.t. the pre-activation of recon[0]
            let mut delta = Matrix::zeros(clean.nrows(), clean.ncols());
            for (d, (&t, &p)) in delta.iter_mut().zip(clean.iter().zip(recon[0].iter())) {
                gen += bernoulli_ce(t, p);
                *d = bernoulli_ce_logit_grad(t, p) * obj.gen / m;
            }
            value += obj.gen * gen / m;
            for l in 0..n {
                // recon[l] = sig(W_l^T recon[l+1] + c_l)
                let g = &mut grad.layers[l];
                g.recon_bias += delta.column_sum();
                g.weights += &recon[l + 1] * delta.transpose();
                let back = &self.layers[l].weights * &delta;
                if l + 1 == n {
                    delta_top += back;
                } else {
                    delta = back.component_mul(&recon[l + 1].map(|r| r * (1.0 - r)));
                }
            }
        }

        // encoder backward pass
        let mut delta_h = delta_top;
        for l in (0..n).rev() {
            let h = &acts[l + 1];
            let delta_pre = delta_h.component_mul(&h.map(|v| v * (1.0 - v)));
            let g = &mut grad.layers[l];
            g.weights += &delta_pre * acts[l].transpose();
            g.hidden_bias += delta_pre.column_sum();
            if l > 0 {
                delta_h = self.layers[l].weights.tr_mul(&delta_pre);
            }
        }
        (value, grad)
    }

    pub fn apply_gradient(&mut self, grad: &NetworkGrad, rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.scaled_sub(g, rate);
        }
        self.out_weights -= &grad.out_weights * rate;
        self.out_bias -= &grad.out_bias * rate;
    }

    /// Clean input to layer `index` for columns `start..start+len` of a batch.
    pub fn layer_input(&self, index: usize, batch: &DataBatch, start: usize, len: usize) -> Matrix {
        let mut h = batch.input_columns(start, len);
        for l in &self.layers[..index] {
            h = l.encode_cols(&h);
        }
        h
    }

    /// One pass of minibatch SGD on the hybrid objective over `batch`.
    /// Returns the mean objective observed before each update.
    pub fn finetune<R: Rng + ?Sized>(&mut self, batch: &DataBatch, lambda: f64, rng: &mut R) -> Result<f64> {
        self.finetune_with(batch, Objective::hybrid(lambda), rng)
    }

    pub fn finetune_with<R: Rng + ?Sized>(&mut self, batch: &DataBatch, obj: Objective, rng: &mut R) -> Result<f64> {
        self.check_batch(batch, "finetune")?;
        let mut total = 0.0;
        let mut start = 0;
        while start < batch.len() {
            let len = self.minibatch.min(batch.len() - start);
            let clean = batch.input_columns(start, len);
            let input = corrupt_matrix(&clean, self.corruption, rng);
            let (value, grad) = self.objective_gradient(&clean, &input, &batch.labels[start..start + len], obj);
            self.apply_gradient(&grad, self.learning_rate);
            total += value * len as f64;
            start += len;
        }
        self.trained_through = Some(self.trained_through.map_or(batch.seq_id, |s| s.max(batch.seq_id)));
        Ok(total / batch.len() as f64)
    }

    /// Greedy denoising pre-training of one layer on the given batches.
    /// Returns the mean per-example reconstruction loss of every epoch.
    pub fn pretrain_layer<R: Rng + ?Sized, B: AsRef<DataBatch>>(
        &mut self,
        index: usize,
        batches: &[B],
        epochs: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if index >= self.layers.len() {
            return Err(Error::LayerOutOfRange {
                index,
                layers: self.layers.len(),
            });
        }
        if batches.is_empty() {
            return Err(Error::NoBatches("pretrain_layer"));
        }
        for b in batches {
            self.check_input(b.as_ref().dim(), "pretrain_layer")?;
        }
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut total = 0.0;
            let mut count = 0usize;
            for b in batches {
                let b = b.as_ref();
                let mut start = 0;
                while start < b.len() {
                    let len = self.minibatch.min(b.len() - start);
                    let clean = self.layer_input(index, b, start, len);
                    let input = corrupt_matrix(&clean, self.corruption, rng);
                    let (value, grad) = layer_gradient(&self.layers[index], &clean, &input);
                    self.layers[index].scaled_sub(&grad, self.learning_rate);
                    total += value * len as f64;
                    count += len;
                    start += len;
                }
            }
            history.push(total / count.max(1) as f64);
        }
        Ok(history)
    }

    /// Greedy layer-wise pre-training of the whole stack, bottom-up.
    pub fn pretrain<R: Rng + ?Sized, B: AsRef<DataBatch>>(
        &mut self,
        batches: &[B],
        epochs: usize,
        rng: &mut R,
    ) -> Result<()> {
        for index in 0..self.layers.len() {
            self.pretrain_layer(index, batches, epochs, rng)?;
        }
        Ok(())
    }

    /// Per-example full-stack reconstruction loss (no corruption).
    pub fn example_generative_losses(&self, batch: &DataBatch) -> Result<Vec<f64>> {
        self.check_batch(batch, "example_generative_losses")?;
        let x = batch.input_columns(0, batch.len());
        let acts = self.forward_cols(&x);
        let recon = self.reconstruct_cols(&acts[self.layers.len()]);
        Ok((0..batch.len())
            .map(|j| {
                x.column(j)
                    .iter()
                    .zip(recon[0].column(j).iter())
                    .map(|(&t, &p)| bernoulli_ce(t, p))
                    .sum()
            })
            .collect())
    }

    /// Predicted class of every example.
    pub fn classify(&self, batch: &DataBatch) -> Result<Vec<usize>> {
        self.check_batch(batch, "classify")?;
        let x = batch.input_columns(0, batch.len());
        let acts = self.forward_cols(&x);
        let probs = Self::softmax_cols(&self.logits_cols(&acts[self.layers.len()]));
        Ok(probs
            .column_iter()
            .map(|c| argmax(c.as_slice()))
            .collect())
    }

    /// Mean per-example discriminative loss.
    pub fn mean_discriminative_loss(&self, batch: &DataBatch) -> Result<f64> {
        self.check_batch(batch, "mean_discriminative_loss")?;
        let x = batch.input_columns(0, batch.len());
        Ok(self.objective_value(&x, &x, &batch.labels, Objective::discriminative()))
    }

    pub fn batch_errors(&self, batch: &DataBatch) -> Result<BatchErrors> {
        let losses = self.example_generative_losses(batch)?;
        let predicted = self.classify(batch)?;
        let wrong = predicted
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p != l)
            .count();
        Ok(BatchErrors {
            generative: losses.iter().sum::<f64>() / batch.len() as f64,
            classification: wrong as f64 / batch.len() as f64,
        })
    }
}

impl AsRef<DataBatch> for DataBatch {
    fn as_ref(&self) -> &DataBatch {
        self
    }
}

/// Mean reconstruction loss of a single autoencoder over the columns of `clean`,
/// with `input` fed to its encoder.
pub fn layer_objective(layer: &LayerParams, clean: &Matrix, input: &Matrix) -> f64 {
    let h = layer.encode_cols(input);
    let r = layer.decode_cols(&h);
    let total: f64 = clean.iter().zip(r.iter()).map(|(&t, &p)| bernoulli_ce(t, p)).sum();
    total / clean.ncols() as f64
}

/// Analytic gradient of [`layer_objective`].
pub fn layer_gradient(layer: &LayerParams, clean: &Matrix, input: &Matrix) -> (f64, LayerParams) {
    let m = clean.ncols() as f64;
    let h = layer.encode_cols(input);
    let r = layer.decode_cols(&h);
    let mut value = 0.0;
    let mut delta = Matrix::zeros(clean.nrows(), clean.ncols());
    for (d, (&t, &p)) in delta.iter_mut().zip(clean.iter().zip(r.iter())) {
        value += bernoulli_ce(t, p);
        *d = bernoulli_ce_logit_grad(t, p) / m;
    }
    let mut grad = LayerParams::zeros(layer.input_dim(), layer.hidden_dim());
    grad.recon_bias = delta.column_sum();
    grad.weights = &h * delta.transpose();
    let delta_h = &layer.weights * &delta;
    let delta_pre = delta_h.component_mul(&h.map(|v| v * (1.0 - v)));
    grad.weights += &delta_pre * input.transpose();
    grad.hidden_bias = delta_pre.column_sum();
    (value / m, grad)
}
