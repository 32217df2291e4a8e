//! Metrics, timing, run reports and the binary file formats.

mod format;

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopaError};
use crate::scalar::{Field, Scalar};
use crate::tensor::DenseTensor;

pub use format::{
    decode_checkpoint, decode_tts, encode_checkpoint, encode_tts, read_checkpoint, read_tts, read_tts_as,
    write_checkpoint, write_tts, AnyCheckpoint, Checkpoint, CHECKPOINT_MAGIC, FORMAT_VERSION, TTS_MAGIC,
};

/// `||pred - actual||_F / ||actual||_F`.
pub fn nrmse<S: Scalar>(pred: &DenseTensor<S>, actual: &DenseTensor<S>) -> Result<f64> {
    let norm = actual.frob_norm();
    if norm == 0.0 {
        return Err(TopaError::ZeroNorm);
    }
    Ok(pred.dist_sq(actual)?.sqrt() / norm)
}

/// Runs `f` and returns its result with the elapsed wall time in microseconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e6)
}

/// A tensor time series with optional per-tensor timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TtsRecord<S> {
    dims: Vec<usize>,
    tensors: Vec<DenseTensor<S>>,
    timestamps: Option<Vec<f64>>,
}

impl<S: Scalar> TtsRecord<S> {
    pub fn new(dims: Vec<usize>, tensors: Vec<DenseTensor<S>>, timestamps: Option<Vec<f64>>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(TopaError::ShapeMismatch(format!("invalid dims {dims:?}")));
        }
        if let Some(x) = tensors.iter().find(|x| x.dims() != dims.as_slice()) {
            return Err(TopaError::ShapeMismatch(format!(
                "record dims {dims:?}, tensor dims {:?}",
                x.dims()
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != tensors.len() {
                return Err(TopaError::ShapeMismatch(format!(
                    "{} timestamps for {} tensors",
                    ts.len(),
                    tensors.len()
                )));
            }
        }
        Ok(Self {
            dims,
            tensors,
            timestamps,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn field(&self) -> Field {
        S::FIELD
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[DenseTensor<S>] {
        &self.tensors
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn into_tensors(self) -> Vec<DenseTensor<S>> {
        self.tensors
    }
}

/// A record whose field is only known at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTts {
    Real(TtsRecord<f64>),
    Complex(TtsRecord<Complex64>),
}

impl AnyTts {
    pub fn field(&self) -> Field {
        match self {
            AnyTts::Real(_) => Field::Real,
            AnyTts::Complex(_) => Field::Complex,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTts::Real(r) => r.dims(),
            AnyTts::Complex(r) => r.dims(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyTts::Real(r) => r.len(),
            AnyTts::Complex(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<TtsRecord<f64>> for AnyTts {
    fn from(r: TtsRecord<f64>) -> Self {
        AnyTts::Real(r)
    }
}

impl From<TtsRecord<Complex64>> for AnyTts {
    fn from(r: TtsRecord<Complex64>) -> Self {
        AnyTts::Complex(r)
    }
}

/// Result of one streaming run. Serializes to a flat JSON object; the
/// effective configuration is merged in at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    pub nrmse: Vec<f64>,
    pub mean_nrmse: f64,
    pub step_micros: Vec<f64>,
    pub mean_step_micros: f64,
    #[serde(flatten)]
    pub config: BTreeMap<String, serde_json::Value>,
}

impl RunReport {
    pub fn new(
        method: impl Into<String>,
        seed: u64,
        nrmse: Vec<f64>,
        step_micros: Vec<f64>,
        config: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self> {
        if nrmse.len() != step_micros.len() {
            return Err(TopaError::ShapeMismatch(format!(
                "{} errors for {} timings",
                nrmse.len(),
                step_micros.len()
            )));
        }
        Ok(Self {
            method: method.into(),
            seed,
            mean_nrmse: mean(&nrmse),
            mean_step_micros: mean(&step_micros),
            nrmse,
            step_micros,
            config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean; zero for fewer than two samples.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn nrmse_examples() {
        let a = DenseTensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
        let zero = DenseTensor::zeros(&[2, 2]).unwrap();
        assert!((nrmse(&zero, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((nrmse(&a.scale(1.1), &a).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(nrmse(&a, &zero), Err(TopaError::ZeroNorm)));
    }

    #[test]
    fn timing_sanity() {
        for _ in 0..3 {
            let ((), us) = timed(|| ());
            assert!(us >= 0.0);
        }
        let ((), us) = timed(|| std::thread::sleep(Duration::from_millis(20)));
        assert!(us >= 20_000.0 && us < 2_000_000.0, "{us}");
        let ((inner_a, inner_b), outer) = timed(|| {
            let (_, a) = timed(|| std::thread::sleep(Duration::from_millis(15)));
            let (_, b) = timed(|| std::thread::sleep(Duration::from_millis(15)));
            (a, b)
        });
        assert!((outer - inner_a - inner_b).abs() <= 0.1 * outer);
    }

    #[test]
    fn report_json_is_flat_and_round_trips() {
        let mut config = BTreeMap::new();
        config.insert("t0".to_string(), serde_json::json!(20));
        let r = RunReport::new("topa", 7, vec![0.1, 0.3], vec![5.0, 7.0], config).unwrap();
        assert!((r.mean_nrmse - 0.2).abs() < 1e-12);
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["t0"], 20);
        assert_eq!(v["mean_step_micros"], 6.0);
        assert_eq!(RunReport::from_json(&json).unwrap(), r);
        assert!(RunReport::new("topa", 7, vec![0.1], vec![], BTreeMap::new()).is_err());
    }

    #[test]
    fn record_validation() {
        let x = DenseTensor::<f64>::zeros(&[2, 3]).unwrap();
        assert!(TtsRecord::new(vec![2, 3], vec![x.clone()], Some(vec![0.0, 1.0])).is_err());
        assert!(TtsRecord::new(vec![3, 2], vec![x.clone()], None).is_err());
        let r = TtsRecord::new(vec![2, 3], vec![x], None).unwrap();
        assert_eq!(r.field(), Field::Real);
    }
}
