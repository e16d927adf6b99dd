//! Deterministic fixtures shared by the benchmarks.

use radae::nn::{DataBatch, Matrix, Network};
use radae::stream::{synth_dataset, LabeledSource, StreamMode, StreamSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn network(input: usize, widths: &[usize], classes: usize) -> Network {
    Network::new(input, widths, classes, &mut rng(1))
}

pub fn batch(len: usize, dim: usize, classes: usize) -> DataBatch {
    let mut r = rng(2);
    let inputs = Matrix::from_fn(len, dim, |_, _| r.random::<f64>());
    let labels = (0..len).map(|_| r.random_range(0..classes)).collect();
    DataBatch::new(0, inputs, labels, classes).expect("valid batch")
}

/// `n` points in `dim` dimensions with smooth targets.
pub fn regression_data(n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(3);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(0.0..2.0)).collect()).collect();
    let y = x.iter().map(|p| p.iter().map(|v| v.sin()).sum()).collect();
    (x, y)
}

pub fn source(classes: usize, dim: usize) -> LabeledSource {
    synth_dataset(classes, dim, 500, 0.3, &mut rng(4)).expect("valid source")
}

pub fn stream_spec(classes: usize, dim: usize, batches: usize) -> StreamSpec {
    StreamSpec::new(classes, dim, 100, batches, StreamMode::NonStationary)
}
