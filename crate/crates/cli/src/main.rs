mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use topa_core::evalio::{read_tts, write_checkpoint, write_tts};
use topa_core::{
    run_bench, run_stream, synth_tts, AnyTts, BenchConfig, Checkpoint, Complex64, Method, Scalar, StreamConfig,
};

use config::{load_json, StreamArgs, SynthArgs};

#[derive(Parser)]
#[command(name = "topa", version, about = "Online tensor time series prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series file.
    Gen(GenCmd),
    /// Fit on a prefix, then predict and update one step at a time.
    Stream(StreamCmd),
    /// Compare methods over seeded synthetic replicas.
    Bench(BenchCmd),
}

#[derive(clap::Args)]
struct GenCmd {
    /// JSON generator config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    /// Complex-valued series.
    #[arg(long)]
    complex: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(clap::Args)]
struct StreamCmd {
    /// Series file.
    input: PathBuf,
    /// topa, topa-aaw, topa-init or offline-refit [default: topa].
    #[arg(long)]
    method: Option<Method>,
    /// JSON stream config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Predictor Tucker ranks, comma separated.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    stream: StreamArgs,
    /// Write the final model here.
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct StreamFile {
    ranks: Option<Vec<usize>>,
    seed: Option<u64>,
    method: Option<Method>,
    #[serde(flatten)]
    stream: StreamArgs,
}

#[derive(clap::Args)]
struct BenchCmd {
    /// JSON bench config with `synth`, `stream`, `runs`, `methods`; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of Monte Carlo replicas; seeds run from --seed upward.
    #[arg(long)]
    runs: Option<usize>,
    /// Methods to compare, comma separated.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Print JSON instead of the text table.
    #[arg(long)]
    json: bool,
    /// Also write the JSON report here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchFile {
    runs: Option<usize>,
    methods: Option<Vec<Method>>,
    synth: SynthArgs,
    stream: StreamArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Stream(c) => cmd_stream(c),
        Command::Bench(c) => cmd_bench(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_gen(c: GenCmd) -> Result<()> {
    let file: SynthArgs = load_json(c.config.as_deref())?;
    let cfg = c.synth.merged(&file).build()?;
    if c.complex {
        write_tts(&c.output, &synth_tts::<Complex64>(&cfg)?.record)?;
    } else {
        write_tts(&c.output, &synth_tts::<f64>(&cfg)?.record)?;
    }
    let dims: Vec<String> = cfg.dims.iter().map(|d| d.to_string()).collect();
    println!(
        "wrote {}: dims {}, T {}, rho {}, seed {}",
        c.output.display(),
        dims.join("x"),
        cfg.t,
        cfg.rho,
        cfg.seed
    );
    Ok(())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn stream_typed<S: Scalar>(
    tensors: &[topa_core::DenseTensor<S>],
    method: Method,
    cfg: &StreamConfig,
    input: &Path,
    checkpoint: Option<&Path>,
) -> Result<topa_core::RunReport> {
    let outcome = run_stream(tensors, method, cfg)?;
    if let Some(path) = checkpoint {
        let ck = Checkpoint {
            hyper: cfg.hyper.clone(),
            aaw: (method == Method::TopaAaw).then_some(cfg.aaw),
            state: outcome.state,
        };
        write_checkpoint(path, &ck).with_context(|| format!("writing checkpoint {}", path.display()))?;
    }
    let mut report = outcome.report;
    report.config.insert("input".into(), json!(input.display().to_string()));
    report.config.insert("dims".into(), json!(tensors[0].dims()));
    report.config.insert("field".into(), json!(S::FIELD));
    Ok(report)
}

fn cmd_stream(c: StreamCmd) -> Result<()> {
    let file: StreamFile = load_json(c.config.as_deref())?;
    let method = c.method.or(file.method).unwrap_or(Method::Topa);
    let args = c.stream.merged(&file.stream);
    let Some(ranks) = c.ranks.or(file.ranks) else {
        bail!("missing predictor ranks (use --ranks or the config file)");
    };
    let cfg = args.build(ranks, c.seed.or(file.seed).unwrap_or(0))?;
    let data = read_tts(&c.input).with_context(|| format!("reading {}", c.input.display()))?;
    if data.is_empty() {
        bail!("{} holds no tensors", c.input.display());
    }
    let ck = c.checkpoint_out.as_deref();
    let report = match &data {
        AnyTts::Real(r) => stream_typed(r.tensors(), method, &cfg, &c.input, ck)?,
        AnyTts::Complex(r) => stream_typed(r.tensors(), method, &cfg, &c.input, ck)?,
    };
    emit(&report.to_json()?, c.output.as_deref())
}

fn cmd_bench(c: BenchCmd) -> Result<()> {
    let file: BenchFile = load_json(c.config.as_deref())?;
    let synth = c.synth.merged(&file.synth).build()?;
    let runs = c.runs.or(file.runs).unwrap_or(10);
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let methods = c
        .methods
        .or(file.methods)
        .unwrap_or_else(|| vec![Method::Topa, Method::OfflineRefit]);
    let stream = c.stream.merged(&file.stream).build(synth.ranks.clone(), synth.seed)?;
    let seeds = (0..runs as u64).map(|k| synth.seed + k).collect();
    let report = run_bench(&BenchConfig {
        synth,
        stream,
        methods,
        seeds,
    })?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &c.output {
        fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?;
    }
    if c.json {
        println!("{json}");
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}
