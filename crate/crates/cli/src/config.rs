//! Flag groups that double as JSON config sections. A flag that is given
//! wins over the same key in the file; anything left unset takes a default.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use topa_core::{AawConfig, ArSpec, CoreModel, CoreUpdateMode, Hyperparams, StreamConfig, SynthConfig};

pub fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Paper,
    Exact,
}

impl From<ModeArg> for CoreUpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => CoreUpdateMode::PaperForm,
            ModeArg::Exact => CoreUpdateMode::ExactBlock,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// Tensor dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Tucker ranks, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Series length.
    #[arg(long)]
    pub t: Option<usize>,
    /// Noise ratio.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Subspace rotation per step, radians.
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Core AR coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub core_coeffs: Option<Vec<f64>>,
    /// Differencing order of the core model.
    #[arg(long)]
    pub core_d: Option<usize>,
    /// Innovation standard deviation of the core model.
    #[arg(long)]
    pub innovation: Option<f64>,
}

macro_rules! merge_fields {
    ($flags:expr, $file:expr, $($f:ident),+) => {
        Self { $($f: $flags.$f.clone().or_else(|| $file.$f.clone())),+ }
    };
}

impl SynthArgs {
    pub fn merged(&self, file: &SynthArgs) -> SynthArgs {
        merge_fields!(self, file, dims, ranks, t, rho, drift, seed, core_coeffs, core_d, innovation)
    }

    pub fn build(&self) -> Result<SynthConfig> {
        let Some(dims) = self.dims.clone() else {
            bail!("missing dims (use --dims or the config file)");
        };
        let Some(ranks) = self.ranks.clone() else {
            bail!("missing ranks (use --ranks or the config file)");
        };
        let Some(t) = self.t else {
            bail!("missing series length (use --t or the config file)");
        };
        let mut cfg = SynthConfig::new(dims, ranks, t, self.seed.unwrap_or(0));
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(a) = self.drift {
            cfg.drift_angle = a;
        }
        let default = CoreModel::default();
        cfg.core = CoreModel {
            coeffs: self.core_coeffs.clone().unwrap_or(default.coeffs),
            d: self.core_d.unwrap_or(default.d),
        };
        if let Some(s) = self.innovation {
            cfg.innovation_scale = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamArgs {
    /// Length of the initial batch fit.
    #[arg(long)]
    pub t0: Option<usize>,
    /// AR order.
    #[arg(long)]
    pub p: Option<usize>,
    /// Differencing order.
    #[arg(long)]
    pub d: Option<usize>,
    /// Decomposition residual weight.
    #[arg(long)]
    pub varphi: Option<f64>,
    /// Proximal step.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sweeps per online step.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Window length (topa-aaw).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Staleness damping (topa-aaw).
    #[arg(long)]
    pub alpha_damp: Option<f64>,
    /// Fit-quality floor (topa-aaw).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Iteration budget of a batch fit.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Squared-change stopping tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
}

impl StreamArgs {
    pub fn merged(&self, file: &StreamArgs) -> StreamArgs {
        merge_fields!(self, file, t0, p, d, varphi, lambda, iters, tau, alpha_damp, beta, mode, max_iter, eps)
    }

    pub fn build(&self, ranks: Vec<usize>, seed: u64) -> Result<StreamConfig> {
        let spec = ArSpec::new(self.p.unwrap_or(3), self.d.unwrap_or(1))?;
        let mut hyper = Hyperparams::new(ranks, spec);
        if let Some(v) = self.varphi {
            hyper.varphi = v;
        }
        if let Some(v) = self.lambda {
            hyper.lambda = v;
        }
        if let Some(v) = self.iters {
            hyper.iters_online = v;
        }
        if let Some(v) = self.max_iter {
            hyper.max_iter_stage1 = v;
        }
        if let Some(v) = self.eps {
            hyper.eps = v;
        }
        if let Some(m) = self.mode {
            hyper.core_update_mode = m.into();
        }
        let aaw = AawConfig::new(
            self.tau.unwrap_or(8),
            self.alpha_damp.unwrap_or(0.9),
            self.beta.unwrap_or(0.6),
        );
        Ok(StreamConfig {
            t0: self.t0.unwrap_or(20),
            hyper,
            aaw,
            seed,
        })
    }
}
