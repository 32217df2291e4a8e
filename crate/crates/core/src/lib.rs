//! Streaming tensor time series prediction with a joint Tucker decomposition
//! and proximal alternating minimization, plus the sliding-window variant
//! with adaptive weights.

pub mod aaw;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod evalio;
pub mod linalg;
pub mod matrix;
pub mod regression;
pub mod runner;
pub mod scalar;
pub mod tensor;

pub use aaw::{aaw_ingest_and_update, AawConfig, WeightVector};
pub use datagen::{synth_tts, CoreModel, SynthConfig, SynthSeries};
pub use engine::{
    ingest_and_update, offline_refit_step, predict_next, stage1_fit, CoreUpdateMode, Hyperparams, PredictorState,
};
pub use error::{Result, TopaError};
pub use evalio::{nrmse, AnyCheckpoint, AnyTts, Checkpoint, RunReport, TtsRecord};
pub use matrix::DenseMatrix;
pub use num_complex::Complex64;
pub use regression::{ArParams, ArSpec};
pub use runner::{run_bench, run_stream, BenchConfig, BenchReport, Method, StreamConfig};
pub use scalar::{Field, Scalar};
pub use tensor::DenseTensor;
