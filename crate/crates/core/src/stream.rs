//! Labelled batch streams whose class proportions drift over time, plus the
//! data sources that feed them.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gpr::{cholesky_with_jitter, gram};
use crate::nn::{DataBatch, Matrix, Vector};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_CLASSES: usize = 10;

/// Share of the batch given to the dominant half of the classes in
/// [`StreamMode::Switch`].
pub const SWITCH_DOMINANT_SHARE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamMode {
    Stationary,
    /// Class ratios follow softmax-normalised GP sample paths.
    #[default]
    NonStationary,
    /// The first `ceil(K/2)` classes dominate until batch `at`, the rest after.
    Switch { at: usize },
}

impl fmt::Display for StreamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamMode::Stationary => f.write_str("stationary"),
            StreamMode::NonStationary => f.write_str("nonstationary"),
            StreamMode::Switch { at } => write!(f, "switch:{at}"),
        }
    }
}

impl FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "stationary" => Ok(StreamMode::Stationary),
            "nonstationary" | "non-stationary" => Ok(StreamMode::NonStationary),
            _ => match s.strip_prefix("switch:").map(|v| v.parse::<usize>()) {
                Some(Ok(at)) => Ok(StreamMode::Switch { at }),
                _ => Err(Error::InvalidConfig(format!(
                    "unknown stream mode `{s}` (expected stationary, nonstationary or switch:<batch>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub num_classes: usize,
    pub dims: usize,
    pub batch_size: usize,
    pub num_batches: usize,
    pub mode: StreamMode,
    /// Defaults to `num_batches / 10` when unset.
    pub gp_length_scale: Option<f64>,
    pub gp_amplitude: f64,
    pub mask_noise: f64,
}

impl StreamSpec {
    pub fn new(num_classes: usize, dims: usize, batch_size: usize, num_batches: usize, mode: StreamMode) -> Self {
        StreamSpec {
            num_classes,
            dims,
            batch_size,
            num_batches,
            mode,
            gp_length_scale: None,
            gp_amplitude: 1.0,
            mask_noise: 0.1,
        }
    }

    pub fn length_scale(&self) -> f64 {
        self.gp_length_scale.unwrap_or((self.num_batches as f64 / 10.0).max(1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!("stream.classes must be at least 2, got {}", self.num_classes)));
        }
        if self.dims == 0 || self.batch_size == 0 || self.num_batches == 0 {
            return Err(Error::InvalidConfig("stream.dims, stream.batch_size and stream.batches must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_noise) {
            return Err(Error::InvalidConfig(format!("stream.mask_noise must lie in [0,1], got {}", self.mask_noise)));
        }
        if self.gp_length_scale.is_some_and(|l| l <= 0.0) || self.gp_amplitude <= 0.0 {
            return Err(Error::InvalidConfig("stream GP length scale and amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Per-class example stores; row `i` of `classes[k]` is one example of class `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSource {
    pub classes: Vec<Matrix>,
}

impl LabeledSource {
    pub fn new(classes: Vec<Matrix>) -> Result<Self> {
        let dim = classes.first().map(|m| m.ncols()).unwrap_or(0);
        for (k, m) in classes.iter().enumerate() {
            if m.nrows() == 0 {
                return Err(Error::InvalidBatch(format!("class {k} has no examples")));
            }
            if m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "labelled source",
                    expected: dim,
                    found: m.ncols(),
                });
            }
        }
        Ok(LabeledSource { classes })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map(|m| m.ncols()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(|m| m.nrows()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `K` curves of length `T`, each a draw from a zero-mean GP with an SE
/// kernel over `t = 1..=T`.
pub fn gp_sample_curves<R: Rng + ?Sized>(k: usize, t: usize, length_scale: f64, amplitude: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let times: Vec<[f64; 1]> = (1..=t).map(|i| [i as f64]).collect();
    let cov = gram(&times, amplitude, length_scale);
    let (chol, _) = cholesky_with_jitter(&cov, 0.0)?;
    let l = chol.l();
    Ok((0..k)
        .map(|_| {
            let z = Vector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&l * z).iter().copied().collect()
        })
        .collect())
}

/// Softmax across classes of the curve values at time index `t` (0-based).
pub fn class_ratios(curves: &[Vec<f64>], t: usize) -> Vec<f64> {
    let vals: Vec<f64> = curves.iter().map(|c| c[t]).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Integer counts summing to `total`: floors first, then the leftover units go
/// to the largest fractional parts, ties to the lowest index.
pub fn largest_remainder(ratios: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Target class proportions for every batch of the stream.
pub fn stream_ratios<R: Rng + ?Sized>(spec: &StreamSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let k = spec.num_classes;
    match spec.mode {
        StreamMode::Stationary => Ok(vec![vec![1.0 / k as f64; k]; spec.num_batches]),
        StreamMode::NonStationary => {
            let curves = gp_sample_curves(k, spec.num_batches, spec.length_scale(), spec.gp_amplitude, rng)?;
            Ok((0..spec.num_batches).map(|t| class_ratios(&curves, t)).collect())
        }
        StreamMode::Switch { at } => {
            let head = k.div_ceil(2);
            let split = |head_dominant: bool| -> Vec<f64> {
                (0..k)
                    .map(|c| {
                        let in_head = c < head;
                        let share = if in_head == head_dominant { SWITCH_DOMINANT_SHARE } else { 1.0 - SWITCH_DOMINANT_SHARE };
                        let group = if in_head { head } else { k - head };
                        share / group as f64
                    })
                    .collect()
            };
            Ok((0..spec.num_batches).map(|t| split(t < at)).collect())
        }
    }
}

/// Uniformly resamples each coordinate with probability `p`.
pub fn mask_example<R: Rng + ?Sized>(x: &mut [f64], p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    for v in x.iter_mut() {
        if rng.random::<f64>() < p {
            *v = rng.random::<f64>();
        }
    }
}

/// Draws every batch of the stream from `source` with replacement.
pub fn build_stream<R: Rng + ?Sized>(source: &LabeledSource, spec: &StreamSpec, rng: &mut R) -> Result<Vec<DataBatch>> {
    spec.validate()?;
    if source.num_classes() != spec.num_classes {
        return Err(Error::DimensionMismatch {
            context: "stream classes",
            expected: spec.num_classes,
            found: source.num_classes(),
        });
    }
    if source.dim() != spec.dims {
        return Err(Error::DimensionMismatch {
            context: "stream dims",
            expected: spec.dims,
            found: source.dim(),
        });
    }
    let ratios = stream_ratios(spec, rng)?;
    let mut batches = Vec::with_capacity(spec.num_batches);
    for (t, r) in ratios.iter().enumerate() {
        let counts = largest_remainder(r, spec.batch_size);
        let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.batch_size);
        for (k, &c) in counts.iter().enumerate() {
            let store = &source.classes[k];
            for _ in 0..c {
                let i = rng.random_range(0..store.nrows());
                let mut x: Vec<f64> = store.row(i).iter().copied().collect();
                mask_example(&mut x, spec.mask_noise, rng);
                rows.push((x, k));
            }
        }
        rows.shuffle(rng);
        let inputs = Matrix::from_fn(rows.len(), spec.dims, |i, j| rows[i].0[j]);
        let labels = rows.into_iter().map(|(_, k)| k).collect();
        batches.push(DataBatch::new(t as u64, inputs, labels, spec.num_classes)?);
    }
    Ok(batches)
}

/// Gaussian blobs around uniform random prototypes, clamped to `[0,1]`.
pub fn synth_dataset<R: Rng + ?Sized>(k: usize, d: usize, per_class: usize, sigma: f64, rng: &mut R) -> Result<LabeledSource> {
    let prototypes: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let classes = prototypes
        .iter()
        .map(|proto| {
            Matrix::from_fn(per_class, d, |_, j| {
                let noise: f64 = rng.sample(StandardNormal);
                (proto[j] + sigma * noise).clamp(0.0, 1.0)
            })
        })
        .collect();
    LabeledSource::new(classes)
}

/// Holds out `round(fraction * n_k)` examples of every class as a test batch
/// and returns the remaining source. Classes with a single example keep it.
pub fn split_balanced<R: Rng + ?Sized>(source: &LabeledSource, fraction: f64, rng: &mut R) -> Result<(LabeledSource, DataBatch)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("test fraction must lie in [0,1), got {fraction}")));
    }
    let dim = source.dim();
    let mut train = Vec::with_capacity(source.num_classes());
    let mut test_rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (k, store) in source.classes.iter().enumerate() {
        let n = store.nrows();
        let held = ((fraction * n as f64).round() as usize).min(n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for &i in &idx[..held] {
            test_rows.push((store.row(i).iter().copied().collect(), k));
        }
        let kept = &idx[held..];
        train.push(Matrix::from_fn(kept.len(), dim, |r, c| store[(kept[r], c)]));
    }
    if test_rows.is_empty() {
        return Err(Error::InvalidConfig("test split is empty".into()));
    }
    let inputs = Matrix::from_fn(test_rows.len(), dim, |i, j| test_rows[i].0[j]);
    let labels = test_rows.into_iter().map(|(_, k)| k).collect();
    Ok((LabeledSource::new(train)?, DataBatch::new(u64::MAX, inputs, labels, source.num_classes())?))
}

fn read_u32_be(bytes: &mut &[u8], what: &'static str) -> Result<u32> {
    bytes.read_u32::<BigEndian>().map_err(|_| Error::Truncated(what))
}

/// Parses in-memory IDX image and label files into a ten-class source.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledSource> {
    let mut img = images;
    let magic = read_u32_be(&mut img, "image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&mut img, "image header")? as usize;
    let rows = read_u32_be(&mut img, "image header")? as usize;
    let cols = read_u32_be(&mut img, "image header")? as usize;

    let mut lab = labels;
    let magic = read_u32_be(&mut lab, "label header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&mut lab, "label header")? as usize;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let dim = rows * cols;
    if img.len() < count * dim {
        return Err(Error::Truncated("image data"));
    }
    if lab.len() < count {
        return Err(Error::Truncated("label data"));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); IDX_CLASSES];
    for (i, &l) in lab[..count].iter().enumerate() {
        let l = l as usize;
        if l >= IDX_CLASSES {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: IDX_CLASSES,
            });
        }
        per_class[l].push(i);
    }
    let classes = per_class
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            if idx.is_empty() {
                return Err(Error::InvalidBatch(format!("class {k} has no examples")));
            }
            Ok(Matrix::from_fn(idx.len(), dim, |r, c| img[idx[r] * dim + c] as f64 / 255.0))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSource::new(classes)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledSource> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// Writes batches as `K, D, p, T` (u32 little endian) followed by each batch's
/// u64 sequence id and `p` records of `[u32 label][D x f64]`.
pub fn write_stream_cache<W: Write>(mut w: W, batches: &[DataBatch]) -> Result<()> {
    let first = batches.first().ok_or(Error::NoBatches("stream cache"))?;
    let (k, d, p) = (first.num_classes, first.dim(), first.len());
    for b in batches {
        if b.len() != p || b.dim() != d || b.num_classes != k {
            return Err(Error::InvalidBatch(format!("batch {} does not match the stream shape", b.seq_id)));
        }
    }
    for v in [k, d, p, batches.len()] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    for b in batches {
        w.write_u64::<LittleEndian>(b.seq_id)?;
        for i in 0..p {
            w.write_u32::<LittleEndian>(b.labels[i] as u32)?;
            for j in 0..d {
                w.write_f64::<LittleEndian>(b.inputs[(i, j)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_stream_cache<R: Read>(mut r: R) -> Result<Vec<DataBatch>> {
    let mut header = [0u32; 4];
    for h in header.iter_mut() {
        *h = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("stream cache header"))?;
    }
    let [k, d, p, t] = header.map(|v| v as usize);
    let mut batches = Vec::with_capacity(t);
    for _ in 0..t {
        let seq = r.read_u64::<LittleEndian>().map_err(|_| Error::Truncated("stream cache batch"))?;
        let mut inputs = Matrix::zeros(p, d);
        let mut labels = Vec::with_capacity(p);
        for i in 0..p {
            labels.push(r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("stream cache record"))? as usize);
            for j in 0..d {
                inputs[(i, j)] = r.read_f64::<LittleEndian>().map_err(|_| Error::Truncated("stream cache record"))?;
            }
        }
        batches.push(DataBatch::new(seq, inputs, labels, k)?);
    }
    Ok(batches)
}

pub fn save_stream(path: &Path, batches: &[DataBatch]) -> Result<()> {
    write_stream_cache(BufWriter::new(File::create(path)?), batches)
}

pub fn load_stream(path: &Path) -> Result<Vec<DataBatch>> {
    read_stream_cache(BufReader::new(File::open(path)?))
}
