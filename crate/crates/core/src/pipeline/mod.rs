//! End-to-end orchestration: corpus I/O, per-clip processing, evaluation.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod overlay;
pub mod process;
pub mod run;
pub mod synth;

pub use config::RunConfig;
pub use eval::{evaluate, EvalReport};
pub use process::{process_clip, FrameResult, ProcessConfig, RefineOrder};
