//! Experiment driver: builds the stream and initial network for a seed, then
//! runs one policy over the stream, recording a trace record per batch.

use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapt::{increment_with_epochs, merge, pool_finetune, ActionKind};
use crate::config::{DataSource, ExperimentConfig, Policy};
use crate::error::{Error, Result};
use crate::midae::{MiDaeEvent, MiDaeState};
use crate::nn::{DataBatch, Network};
use crate::pools::{PoolSet, SharedBatch};
use crate::rl::{Observation, RaDaeController};
use crate::stream::{build_stream, load_idx, split_balanced, synth_dataset};
use crate::trace::{save_trace, Summary, TraceAction, TraceRecord};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngPurpose {
    Data = 0,
    Init = 1,
    Train = 2,
    Control = 3,
}

pub fn rng_for(seed: u64, purpose: RngPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Everything that depends only on the seed: the stream, the held-out test
/// set and the initial network. Shared across policies.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stream: Vec<SharedBatch>,
    pub test: DataBatch,
    pub initial: Network,
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    cfg.validate()?;
    let mut data_rng = rng_for(seed, RngPurpose::Data);
    let mut spec = cfg.stream.spec.clone();
    let source = match &cfg.stream.source {
        DataSource::Synthetic { per_class, sigma } => synth_dataset(spec.num_classes, spec.dims, *per_class, *sigma, &mut data_rng)?,
        DataSource::Idx { images, labels } => {
            let src = load_idx(images, labels)?;
            spec.num_classes = src.num_classes();
            spec.dims = src.dim();
            src
        }
    };
    let (train, test) = split_balanced(&source, cfg.stream.test_fraction, &mut data_rng)?;
    let stream: Vec<SharedBatch> = build_stream(&train, &spec, &mut data_rng)?.into_iter().map(Arc::new).collect();

    let mut init_rng = rng_for(seed, RngPurpose::Init);
    let mut initial = Network::new(spec.dims, &cfg.nn.widths, spec.num_classes, &mut init_rng)
        .with_learning_rate(cfg.nn.learning_rate)
        .with_corruption(cfg.nn.corruption)
        .with_minibatch(cfg.nn.minibatch);
    if cfg.nn.pretrain_batches > 0 {
        initial.pretrain(&stream[..cfg.nn.pretrain_batches], cfg.nn.pretrain_epochs, &mut init_rng)?;
    }
    Ok(Prepared { stream, test, initial })
}

/// Classification error on the batch after the current one. Fails if the
/// network has already been trained on that batch.
pub fn eval_local(net: &Network, next: &DataBatch) -> Result<f64> {
    if let Some(trained) = net.trained_through {
        if trained >= next.seq_id {
            return Err(Error::OrderingViolation {
                next: next.seq_id,
                trained,
            });
        }
    }
    Ok(net.batch_errors(next)?.classification)
}

/// Classification error over the held-out test set.
pub fn eval_global(net: &Network, test: &DataBatch) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(net.batch_errors(test)?.classification)
}

enum Driver {
    Sdae,
    Midae(MiDaeState),
    Radae(RaDaeController),
}

struct StepOutcome {
    action: TraceAction,
    delta_inc: usize,
    delta_mrg: usize,
    reward: Option<f64>,
    q_values: Option<[f64; 3]>,
    kl: Option<f64>,
}

/// Runs one policy over a prepared stream. `on_record` sees each record as
/// soon as it is produced.
pub fn run_policy_with<F: FnMut(&TraceRecord)>(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    policy: Policy,
    seed: u64,
    mut on_record: F,
) -> Result<(Vec<TraceRecord>, Network)> {
    let mut net = prepared.initial.clone();
    let mut train_rng = rng_for(seed, RngPurpose::Train);
    let mut ctrl_rng = rng_for(seed, RngPurpose::Control);
    let mut pools = PoolSet::new(cfg.pool.tau, cfg.pool.lambda);
    let lambda = cfg.nn.lambda;
    let mut driver = match policy {
        Policy::Sdae => Driver::Sdae,
        Policy::Midae => {
            let mut m = cfg.midae.clone();
            m.lambda = lambda;
            m.increment_epochs = cfg.nn.increment_epochs;
            Driver::Midae(MiDaeState::new(m)?)
        }
        Policy::Radae => Driver::Radae(RaDaeController::new(cfg.rl.clone(), net.layers[0].hidden_dim(), net.input_dim())?),
    };

    let stream = &prepared.stream;
    let mut records = Vec::with_capacity(stream.len());
    for (n, batch) in stream.iter().enumerate() {
        let started = Instant::now();
        let errs = net.batch_errors(batch)?;

        let outcome = match &mut driver {
            Driver::Sdae => {
                net.finetune(batch, lambda, &mut train_rng)?;
                StepOutcome {
                    action: TraceAction::None,
                    delta_inc: 0,
                    delta_mrg: 0,
                    reward: None,
                    q_values: None,
                    kl: None,
                }
            }
            Driver::Midae(state) => {
                let ev = state.merge_inc_step(&mut net, batch, &mut pools, &mut train_rng)?;
                StepOutcome {
                    action: if ev == MiDaeEvent::default() { TraceAction::None } else { TraceAction::MergeInc },
                    delta_inc: ev.incremented,
                    delta_mrg: ev.merged,
                    reward: None,
                    q_values: None,
                    kl: None,
                }
            }
            Driver::Radae(ctrl) => {
                pools.update_recent(Arc::clone(batch));
                pools.update_diverse(Arc::clone(batch))?;
                let widths = net.widths();
                let histogram = batch.class_histogram();
                let obs = Observation {
                    lg: errs.generative,
                    lc: errs.classification,
                    histogram: &histogram,
                    widths: &widths,
                };
                let p = ctrl.control_params(n, obs, &mut ctrl_rng)?;
                let (mut inc, mut mrg) = (0, 0);
                match p.action {
                    ActionKind::Pool => {
                        let diverse: Vec<SharedBatch> = pools.diverse().iter().cloned().collect();
                        pool_finetune(&mut net, &diverse, lambda, &mut train_rng)?;
                    }
                    ActionKind::Increment if p.delta_inc > 0 => {
                        let recent: Vec<SharedBatch> = pools.recent().iter().cloned().collect();
                        increment_with_epochs(&mut net, p.delta_inc, &recent, cfg.nn.increment_epochs, &mut train_rng)?;
                        inc = p.delta_inc;
                    }
                    ActionKind::Merge if p.delta_mrg > 0 => {
                        merge(&mut net, p.delta_mrg)?;
                        mrg = p.delta_mrg;
                    }
                    _ => {}
                }
                net.finetune(batch, lambda, &mut train_rng)?;
                StepOutcome {
                    action: p.action.into(),
                    delta_inc: inc,
                    delta_mrg: mrg,
                    reward: p.reward,
                    q_values: p.q_values,
                    kl: Some(p.kl),
                }
            }
        };

        let e_lcl = match stream.get(n + 1) {
            Some(next) => Some(eval_local(&net, next)?),
            None => None,
        };
        let e_glb = eval_global(&net, &prepared.test)?;
        let record = TraceRecord {
            n,
            action: outcome.action,
            delta_inc: outcome.delta_inc,
            delta_mrg: outcome.delta_mrg,
            widths: net.widths(),
            lg: errs.generative,
            lc: errs.classification,
            e_lcl,
            e_glb,
            reward: outcome.reward,
            q_values: outcome.q_values,
            kl: outcome.kl,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if n % 50 == 0 {
            info!(
                "{policy} seed {seed} batch {n}: action {} widths {:?} E_glb {:.4}",
                record.action, record.widths, record.e_glb
            );
        }
        on_record(&record);
        records.push(record);
    }
    Ok((records, net))
}

pub fn run_policy(cfg: &ExperimentConfig, prepared: &Prepared, policy: Policy, seed: u64) -> Result<Vec<TraceRecord>> {
    run_policy_with(cfg, prepared, policy, seed, |_| {}).map(|(r, _)| r)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub summary: Summary,
}

/// Prepares and runs the configured policy and seed, writing the trace to
/// `harness.out` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let prepared = prepare(cfg, cfg.harness.seed)?;
    let records = run_policy(cfg, &prepared, cfg.harness.policy, cfg.harness.seed)?;
    if let Some(path) = &cfg.harness.out {
        save_trace(path, &records)?;
    }
    let summary = Summary::from_records(&records, cfg.harness.summary_last);
    Ok(RunOutput { records, summary })
}
