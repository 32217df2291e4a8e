//! Predict-then-ingest streaming runs and seeded Monte Carlo comparisons.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aaw::{aaw_ingest_and_update, AawConfig};
use crate::datagen::{synth_tts, SynthConfig};
use crate::engine::{
    append_without_update, ingest_and_update, offline_refit_step, predict_next, stage1_fit, Hyperparams,
    PredictorState,
};
use crate::error::{Result, TopaError};
use crate::evalio::{mean, nrmse, std_error, timed, RunReport};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Topa,
    TopaAaw,
    TopaInit,
    OfflineRefit,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Topa, Method::TopaAaw, Method::TopaInit, Method::OfflineRefit];

    pub fn name(self) -> &'static str {
        match self {
            Method::Topa => "topa",
            Method::TopaAaw => "topa-aaw",
            Method::TopaInit => "topa-init",
            Method::OfflineRefit => "offline-refit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TopaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TopaError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Length of the Stage I prefix.
    pub t0: usize,
    pub hyper: Hyperparams,
    /// Window settings, used by `topa-aaw` only.
    pub aaw: AawConfig,
    pub seed: u64,
}

impl StreamConfig {
    pub fn validate(&self, method: Method, dims: &[usize], len: usize) -> Result<()> {
        self.hyper.validate(dims)?;
        if method == Method::TopaAaw {
            self.aaw.validate(self.hyper.spec)?;
        }
        let needed = self.hyper.spec.lag() + 2;
        if self.t0 < needed {
            return Err(TopaError::SeriesTooShort {
                needed,
                got: self.t0,
            });
        }
        if len <= self.t0 {
            return Err(TopaError::SeriesTooShort {
                needed: self.t0 + 1,
                got: len,
            });
        }
        Ok(())
    }

    /// Flat configuration echo for reports.
    pub fn echo(&self, method: Method) -> BTreeMap<String, serde_json::Value> {
        let h = &self.hyper;
        let mut m = BTreeMap::new();
        m.insert("t0".into(), json!(self.t0));
        m.insert("ranks".into(), json!(h.ranks));
        m.insert("p".into(), json!(h.spec.p));
        m.insert("d".into(), json!(h.spec.d));
        m.insert("varphi".into(), json!(h.varphi));
        m.insert("lambda".into(), json!(h.lambda));
        m.insert("eps".into(), json!(h.eps));
        m.insert("max_iter_stage1".into(), json!(h.max_iter_stage1));
        m.insert("iters".into(), json!(h.iters_online));
        m.insert("mode".into(), json!(h.core_update_mode));
        if method == Method::TopaAaw {
            m.insert("tau".into(), json!(self.aaw.tau));
            m.insert("alpha_damp".into(), json!(self.aaw.alpha_damp));
            m.insert("beta".into(), json!(self.aaw.beta));
        }
        m
    }
}

/// Seed of the fresh fit the offline baseline runs before predicting step `k`.
pub fn refit_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub struct StreamOutcome<S> {
    pub report: RunReport,
    /// Final predictor state; for `offline-refit` the last fresh fit.
    pub state: PredictorState<S>,
}

/// Fits on the first `t0` tensors, then scores each later tensor against
/// the forecast made before it is ingested. Step time covers the forecast
/// and the update that absorbs the observation.
pub fn run_stream<S: Scalar>(tts: &[DenseTensor<S>], method: Method, cfg: &StreamConfig) -> Result<StreamOutcome<S>> {
    let dims = tts.first().ok_or(TopaError::SeriesTooShort { needed: 1, got: 0 })?.dims();
    cfg.validate(method, dims, tts.len())?;
    let hyper = &cfg.hyper;
    let mut state = stage1_fit(&tts[..cfg.t0], hyper, cfg.seed)?;
    let mut errors = Vec::with_capacity(tts.len() - cfg.t0);
    let mut micros = Vec::with_capacity(tts.len() - cfg.t0);
    for k in cfg.t0..tts.len() {
        let actual = &tts[k];
        let (pred, t_pred) = match method {
            Method::OfflineRefit if k > cfg.t0 => {
                let (res, us) = timed(|| offline_refit_step(&tts[..k], hyper, refit_seed(cfg.seed, k)));
                let (st, pred) = res?;
                state = st;
                (pred, us)
            }
            _ => {
                let (pred, us) = timed(|| predict_next(&state, hyper));
                (pred?, us)
            }
        };
        let (res, t_update) = timed(|| match method {
            Method::Topa => ingest_and_update(&mut state, actual.clone(), hyper),
            Method::TopaAaw => aaw_ingest_and_update(&mut state, actual.clone(), hyper, &cfg.aaw).map(|_| ()),
            Method::TopaInit => append_without_update(&mut state, actual.clone()),
            // The refit before the next forecast is this method's update.
            Method::OfflineRefit => Ok(()),
        });
        res?;
        errors.push(nrmse(&pred, actual)?);
        micros.push(t_pred + t_update);
    }
    let report = RunReport::new(method.name(), cfg.seed, errors, micros, cfg.echo(method))?;
    Ok(StreamOutcome { report, state })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub stream: StreamConfig,
    pub methods: Vec<Method>,
    /// Replica seeds; each seeds both the generator and the predictor.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_nrmse: f64,
    pub se_nrmse: f64,
    pub mean_step_micros: f64,
    /// Per-replica mean NRMSE, in seed order.
    pub run_nrmse: Vec<f64>,
    /// Per-replica mean step time, in seed order.
    pub run_micros: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seeds: Vec<u64>,
    pub summaries: Vec<MethodSummary>,
}

impl BenchReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>12} {:>10} {:>14}",
            "method", "runs", "mean_nrmse", "se", "step_ms"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>12.6} {:>10.6} {:>14.3}",
                s.method.name(),
                s.runs,
                s.mean_nrmse,
                s.se_nrmse,
                s.mean_step_micros / 1000.0
            );
        }
        out
    }
}

/// Runs every method on one generated replica.
pub fn run_replica(cfg: &BenchConfig, seed: u64) -> Result<Vec<RunReport>> {
    let synth = SynthConfig {
        seed,
        ..cfg.synth.clone()
    };
    let series = synth_tts::<f64>(&synth)?;
    let stream = StreamConfig {
        seed,
        ..cfg.stream.clone()
    };
    cfg.methods
        .iter()
        .map(|&m| run_stream(series.record.tensors(), m, &stream).map(|o| o.report))
        .collect()
}

/// Replicas run in parallel; aggregation is in seed order, so results do not
/// depend on scheduling (timings aside).
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.seeds.is_empty() || cfg.methods.is_empty() {
        return Err(TopaError::InvalidConfig("bench needs at least one seed and one method".into()));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| run_replica(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let summaries = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let run_nrmse: Vec<f64> = per_seed.iter().map(|r| r[j].mean_nrmse).collect();
            let run_micros: Vec<f64> = per_seed.iter().map(|r| r[j].mean_step_micros).collect();
            MethodSummary {
                method,
                runs: run_nrmse.len(),
                mean_nrmse: mean(&run_nrmse),
                se_nrmse: std_error(&run_nrmse),
                mean_step_micros: mean(&run_micros),
                run_nrmse,
                run_micros,
            }
        })
        .collect();
    Ok(BenchReport {
        seeds: cfg.seeds.clone(),
        summaries,
    })
}
