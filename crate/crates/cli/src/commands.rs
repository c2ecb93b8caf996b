//! `train`, `baseline`, `entropy`, `synth` and `encode-dump`.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use qcnn_core::ansatz::{build_conv_unit, AnsatzSpec};
use qcnn_core::baseline::{train_baseline, BaselineConfig, CnnVariant};
use qcnn_core::data::{format_features, parse_features, split, DatasetManifest, Preprocessor};
use qcnn_core::encoding::{amplitude_qubits, EncodingKind, EncodingSpec};
use qcnn_core::entropy::{conv_unit_entropy_sample, export_histogram, qcnn_layerwise_entropy_sample, EntropySample};
use qcnn_core::noise::{NoiseKind, NoiseSpec};
use qcnn_core::train::{train, GradientMode, TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{overlay, sibling, usage, write_atomic, write_json};
use crate::dataset::{self, SynthSpec};

/// Parses the quantum-side names shared by `train` and `sweep`.
pub fn quantum_config(
    ansatz: &str,
    encoding: &str,
    qubits: usize,
    noise: &str,
    p: f64,
    gradient_mode: &str,
) -> Result<TrainConfig> {
    let ansatz = AnsatzSpec::parse(ansatz, qubits).map_err(usage)?;
    let kind: EncodingKind = encoding.parse().map_err(usage)?;
    let mut cfg = TrainConfig::new(EncodingSpec::new(kind, qubits), ansatz);
    cfg.noise = match noise {
        "none" => None,
        name => Some(NoiseSpec::new(name.parse::<NoiseKind>().map_err(usage)?, p).map_err(usage)?),
    };
    cfg.gradient_mode = gradient_mode.parse::<GradientMode>().map_err(usage)?;
    Ok(cfg)
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("train fraction {f} outside (0, 1)")))
    }
}

fn echo(run: &impl Serialize, manifest: &DatasetManifest) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(run)?;
    v["dataset"] = serde_json::to_value(manifest)?;
    Ok(v)
}

fn summary_line(report: &TrainReport, out: &std::path::Path) {
    println!(
        "{} params={} train_acc={:.4} test_acc={:.4} loss={:.6} report={}",
        report.architecture.name,
        report.architecture.param_count,
        report.train_acc,
        report.test_acc,
        report.losses.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "a3-nopool")]
    pub ansatz: String,
    #[arg(long, default_value = "amplitude")]
    pub encoding: String,
    #[arg(long, default_value_t = 8)]
    pub qubits: usize,
    /// Feature CSV path or `synth:dim=256,n=200,sep=8,seed=0`.
    #[arg(long, default_value = "synth")]
    pub data: String,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// `none`, `bitflip`, `phaseflip`, `ampdamp` or `depol`.
    #[arg(long, default_value = "none")]
    pub noise: String,
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    #[arg(long = "lr", default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "parameter-shift")]
    pub gradient_mode: String,
    #[arg(long)]
    pub two_term_only: bool,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let run = overlay(args, args.config.as_deref())?;
    check_fraction(run.train_fraction)?;
    let mut cfg = quantum_config(&run.ansatz, &run.encoding, run.qubits, &run.noise, run.p, &run.gradient_mode)?;
    cfg.learning_rate = run.learning_rate;
    cfg.epochs = run.epochs;
    cfg.batch_size = run.batch_size;
    cfg.seed = run.seed;
    cfg.two_term_only = run.two_term_only;
    cfg.validate().map_err(usage)?;
    let (records, manifest) = dataset::load(&run.data, run.seed)?;
    if let Some(r) = records.first() {
        if !cfg.encoding.accepts_dim(r.features.len()) {
            return Err(usage(format!(
                "{} encoding on {} qubits cannot take {} features",
                cfg.encoding.kind,
                cfg.encoding.n_qubits,
                r.features.len()
            )));
        }
    }
    let (tr, te) = split(&records, run.train_fraction, run.seed)?;
    let mut report = train(&cfg, &tr, &te)?;
    report.config = echo(&run, &manifest)?;
    write_json(&run.out, &report)?;
    summary_line(&report, &run.out);
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `cnn1` .. `cnn6`.
    #[arg(long, default_value = "cnn1")]
    pub variant: String,
    #[arg(long, default_value = "synth")]
    pub data: String,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long = "lr", default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "baseline.json")]
    pub out: PathBuf,
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let run = overlay(args, args.config.as_deref())?;
    check_fraction(run.train_fraction)?;
    let variant: CnnVariant = run.variant.parse().map_err(usage)?;
    if !(run.learning_rate > 0.0 && run.learning_rate.is_finite()) || run.batch_size == 0 {
        return Err(usage("learning rate must be positive and batch size at least 1"));
    }
    let (records, manifest) = dataset::load(&run.data, run.seed)?;
    let (tr, te) = split(&records, run.train_fraction, run.seed)?;
    let cfg = BaselineConfig {
        variant,
        learning_rate: run.learning_rate,
        epochs: run.epochs,
        batch_size: run.batch_size,
        seed: run.seed,
    };
    let mut report = train_baseline(&cfg, &tr, &te)?;
    report.config = echo(&run, &manifest)?;
    write_json(&run.out, &report)?;
    summary_line(&report, &run.out);
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Convolution unit id, 1..9.
    #[arg(long, conflicts_with = "ansatz")]
    pub conv: Option<u8>,
    /// Full QCNN ansatz, e.g. `a8-nopool`.
    #[arg(long)]
    pub ansatz: Option<String>,
    /// Report the readout entropy after every layer instead of only the last.
    #[arg(long)]
    pub layerwise: bool,
    #[arg(short = 'n', long = "samples", default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 8)]
    pub qubits: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives `<id>.hist.csv` per sample and `entropy.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn cmd_entropy(args: &EntropyArgs) -> Result<()> {
    let run = overlay(args, args.config.as_deref())?;
    if run.bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    let samples: Vec<EntropySample> = match (run.conv, &run.ansatz) {
        (Some(id), None) => {
            build_conv_unit(id).map_err(usage)?;
            vec![conv_unit_entropy_sample(id, run.samples, run.seed)?]
        }
        (None, Some(name)) => {
            let spec = AnsatzSpec::parse(name, run.qubits).map_err(usage)?;
            let mut layers = qcnn_layerwise_entropy_sample(&spec, run.samples, run.seed)?;
            if !run.layerwise {
                layers.drain(..layers.len() - 1);
            }
            layers
        }
        _ => return Err(usage("give exactly one of --conv or --ansatz")),
    };
    std::fs::create_dir_all(&run.out_dir)?;
    let mut summaries = Vec::new();
    for s in &samples {
        export_histogram(s, run.bins, &run.out_dir.join(format!("{}.hist.csv", s.id)))?;
        let sum = s.summary();
        println!("{} n={} mean={:.6} std={:.6} min={:.6} max={:.6}", s.id, sum.n, sum.mean, sum.std, sum.min, sum.max);
        summaries.push(json!({ "id": s.id, "summary": sum }));
    }
    write_json(&run.out_dir.join("entropy.json"), &json!({ "config": run, "samples": summaries }))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Records per class.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 8.0)]
    pub sep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature CSV; the manifest goes to `<out>.manifest.json`.
    #[arg(long, default_value = "synth.csv")]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let run = overlay(args, args.config.as_deref())?;
    let spec = SynthSpec { dim: run.dim, n: run.n, sep: run.sep, seed: run.seed };
    let text = format_features(&spec.generate()?)?;
    write_atomic(&run.out, text.as_bytes())?;
    let (_, manifest) = parse_features(&text, &run.out.display().to_string())?;
    write_json(&sibling(&run.out, ".manifest.json"), &json!({ "config": run, "manifest": manifest }))?;
    println!("wrote {} records of dim {} to {}", manifest.n_records, manifest.feature_dim, run.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeDumpArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "amplitude")]
    pub encoding: String,
    /// Defaults to the fewest qubits the encoding needs.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Feature vector, comma separated; used as given.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "data")]
    pub x: Vec<f64>,
    /// Dataset to take the record from; preprocessing is fit on the whole file.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_encode_dump(args: &EncodeDumpArgs) -> Result<()> {
    let run = overlay(args, args.config.as_deref())?;
    let kind: EncodingKind = run.encoding.parse().map_err(usage)?;
    let x = match &run.data {
        Some(data) => {
            let (records, _) = dataset::load(data, run.seed)?;
            let r = records.get(run.record).ok_or_else(|| usage(format!("no record {}", run.record)))?;
            let dim = r.features.len();
            let spec = EncodingSpec::new(kind, run.qubits.unwrap_or_else(|| min_qubits(kind, dim)));
            Preprocessor::fit(&records, &spec)?.apply(std::slice::from_ref(r))?.remove(0).features
        }
        None if run.x.is_empty() => return Err(usage("give --x or --data")),
        None => run.x.clone(),
    };
    let spec = EncodingSpec::new(kind, run.qubits.unwrap_or_else(|| min_qubits(kind, x.len())));
    let state = spec.encode(&x).map_err(usage)?;
    let amplitudes: Vec<[f64; 2]> = state.amplitudes().iter().map(|a| [a.re, a.im]).collect();
    let doc = json!({ "config": run, "n_qubits": spec.n_qubits, "features": x, "amplitudes": amplitudes });
    match &run.out {
        Some(path) => write_json(path, &doc),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &doc)?;
            Ok(writeln!(out)?)
        }
    }
}

fn min_qubits(kind: EncodingKind, dim: usize) -> usize {
    match kind {
        EncodingKind::Amplitude => amplitude_qubits(dim),
        EncodingKind::Angle => dim,
        EncodingKind::DenseAngle => dim.div_ceil(2),
    }
}
