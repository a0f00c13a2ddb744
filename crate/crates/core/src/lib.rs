//! Fault root-cause classification from short industrial alarm sequences.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`simgen`] generates labeled synthetic alarm logs,
//! * [`ingest`] parses logs, suppresses chattering repeats and cuts windows,
//! * [`embed`] learns skip-gram vectors for alarm tags,
//! * [`net`] is the convolution / BiLSTM / attention classifier,
//! * [`trainpipe`] trains and evaluates it,
//! * [`detect`] names the fault online from a live alarm stream.

pub mod detect;
pub mod embed;
pub mod error;
pub mod ingest;
pub mod kvconfig;
pub mod math;
pub mod net;
pub mod simgen;
pub mod trainpipe;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use types::{
    argmax, one_hot, split_samples, tokenize, AlarmEvent, Direction, FaultLabel, Occurrence, Sample, ScenarioSet,
    SplitConfig,
};
