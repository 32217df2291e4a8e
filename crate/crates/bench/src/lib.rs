//! Deterministic fixtures shared by the kernel benchmarks.

use topa_core::{synth_tts, DenseMatrix, DenseTensor, Hyperparams, ArSpec, SynthConfig};

/// Smooth but full-rank matrix, cheap to build and identical across runs.
pub fn fixture_matrix(rows: usize, cols: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 13 + 1) as f64).sin() + if i == j { 1.0 } else { 0.0 })
}

/// Synthetic low-rank stream of `len` tensors with the given dims and ranks.
pub fn fixture_stream(dims: &[usize], ranks: &[usize], len: usize) -> Vec<DenseTensor<f64>> {
    let cfg = SynthConfig::new(dims.to_vec(), ranks.to_vec(), len, 1);
    synth_tts::<f64>(&cfg).expect("valid fixture").record.into_tensors()
}

/// Default predictor settings for the given ranks with a short batch budget.
pub fn fixture_hyper(ranks: &[usize]) -> Hyperparams {
    let mut h = Hyperparams::new(ranks.to_vec(), ArSpec::new(3, 1).expect("valid spec"));
    h.max_iter_stage1 = 5;
    h
}
