//! Online stacked denoising autoencoders whose first hidden layer is grown,
//! merged and refreshed per batch by a Q-learning controller (RA-DAE), with a
//! merge-incremental baseline (MI-DAE) and a fixed baseline (SDAE).

pub mod adapt;
pub mod config;
pub mod error;
pub mod gpr;
pub mod harness;
pub mod midae;
pub mod nn;
pub mod pools;
pub mod rl;
pub mod stream;
pub mod trace;

pub use adapt::{ActionKind, StructuralAction};
pub use config::{ExperimentConfig, Policy};
pub use error::{Error, Result};
pub use gpr::{GprModel, Hyperparams};
pub use harness::{prepare, run_experiment, run_policy, Prepared, RunOutput};
pub use midae::{MiDaeConfig, MiDaeState};
pub use nn::{BatchErrors, DataBatch, LayerParams, Network, Objective};
pub use pools::{PoolSet, SharedBatch};
pub use rl::{ControllerConfig, CtrlParams, QModel, RaDaeController, RlState, StateSpace};
pub use stream::{LabeledSource, StreamMode, StreamSpec};
pub use trace::{Summary, TraceAction, TraceRecord};
