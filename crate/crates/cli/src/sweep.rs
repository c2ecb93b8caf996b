//! Resumable grid of training runs.
//!
//! Every cell (ansatz, noise, p, seed and the shared training settings) is
//! stored as `<out>.cells/<sha256 of the cell JSON>.json` once finished, so a
//! rerun only trains the cells that have no file yet.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use qcnn_core::ansatz::AnsatzSpec;
use qcnn_core::data::{split, FeatureRecord};
use qcnn_core::train::train;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::commands::quantum_config;
use crate::config::{overlay, sibling, usage, write_atomic, write_json};
use crate::dataset;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Ansatz names, or `all` for the eighteen.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub ansatzes: Vec<String>,
    /// Noise kinds; `none` adds one noiseless row per ansatz.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub noises: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05")]
    pub ps: Vec<f64>,
    /// Training seeds per cell are `seed, seed+1, ..`.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    #[arg(long, default_value = "amplitude")]
    pub encoding: String,
    #[arg(long, default_value_t = 8)]
    pub qubits: usize,
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
    #[arg(long, default_value = "parameter-shift")]
    pub gradient_mode: String,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Results CSV; cells live in `<out>.cells/`, the summary in `<out>.json`.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    /// Stop after this many new cells, leaving the rest for a rerun.
    #[arg(long, hide = true)]
    #[serde(skip)]
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ansatz: String,
    pub noise: String,
    pub p: f64,
    pub seed: u64,
    pub encoding: String,
    pub qubits: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub gradient_mode: String,
    pub data_checksum: String,
}

impl Cell {
    pub fn key(&self) -> String {
        let json = serde_json::to_string(self).expect("cell serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub ansatz: String,
    pub noise: String,
    pub p: f64,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_train_acc: f64,
    pub std_train_acc: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Cells in row order, seeds innermost.
fn grid(run: &SweepArgs, checksum: &str) -> Result<Vec<Vec<Cell>>> {
    let ansatzes: Vec<String> = if run.ansatzes.iter().any(|a| a == "all") {
        AnsatzSpec::all(run.qubits).map_err(usage)?.iter().map(AnsatzSpec::name).collect()
    } else {
        run.ansatzes.clone()
    };
    let mut rows = Vec::new();
    for ansatz in &ansatzes {
        for noise in &run.noises {
            let ps: &[f64] = if noise == "none" { &[0.0] } else { &run.ps };
            for &p in ps {
                quantum_config(ansatz, &run.encoding, run.qubits, noise, p, &run.gradient_mode)?;
                rows.push(
                    (0..run.repeats)
                        .map(|i| Cell {
                            ansatz: ansatz.clone(),
                            noise: noise.clone(),
                            p,
                            seed: run.seed + i,
                            encoding: run.encoding.clone(),
                            qubits: run.qubits,
                            learning_rate: run.learning_rate,
                            epochs: run.epochs,
                            batch_size: run.batch_size,
                            train_fraction: run.train_fraction,
                            gradient_mode: run.gradient_mode.clone(),
                            data_checksum: checksum.to_string(),
                        })
                        .collect(),
                );
            }
        }
    }
    Ok(rows)
}

fn run_cell(cell: &Cell, train_set: &[FeatureRecord], test_set: &[FeatureRecord]) -> CellResult {
    let outcome = quantum_config(&cell.ansatz, &cell.encoding, cell.qubits, &cell.noise, cell.p, &cell.gradient_mode)
        .and_then(|mut cfg| {
            cfg.learning_rate = cell.learning_rate;
            cfg.epochs = cell.epochs;
            cfg.batch_size = cell.batch_size;
            cfg.seed = cell.seed;
            Ok(train(&cfg, train_set, test_set)?)
        });
    match outcome {
        Ok(r) => CellResult {
            cell: cell.clone(),
            train_acc: Some(r.train_acc),
            test_acc: Some(r.test_acc),
            final_loss: r.losses.last().copied(),
            error: None,
        },
        Err(e) => CellResult { cell: cell.clone(), train_acc: None, test_acc: None, final_loss: None, error: Some(format!("{e:#}")) },
    }
}

fn cell_path(dir: &Path, cell: &Cell) -> PathBuf {
    dir.join(format!("{}.json", cell.key()))
}

fn read_cell(path: &Path) -> Result<CellResult> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("corrupt cell file {}", path.display()))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut run = overlay(args, args.config.as_deref())?;
    run.max_cells = args.max_cells;
    if !(run.train_fraction > 0.0 && run.train_fraction < 1.0) {
        return Err(usage(format!("train fraction {} outside (0, 1)", run.train_fraction)));
    }
    if run.repeats == 0 || run.batch_size == 0 || !(run.learning_rate > 0.0 && run.learning_rate.is_finite()) {
        return Err(usage("repeats and batch size must be at least 1 and the learning rate positive"));
    }
    let (records, manifest) = dataset::load(&run.data, run.seed)?;
    let rows = grid(&run, &manifest.checksum)?;
    let (train_set, test_set) = split(&records, run.train_fraction, run.seed)?;

    let cells_dir = sibling(&run.out, ".cells");
    std::fs::create_dir_all(&cells_dir)?;
    let all: Vec<&Cell> = rows.iter().flatten().collect();
    let mut pending: Vec<&Cell> = all.iter().copied().filter(|c| !cell_path(&cells_dir, c).exists()).collect();
    let reused = all.len() - pending.len();
    let remaining = match run.max_cells {
        Some(m) if m < pending.len() => pending.split_off(m).len(),
        _ => 0,
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(run.jobs).build()?;
    pool.install(|| {
        pending.par_iter().try_for_each(|cell| {
            let result = run_cell(cell, &train_set, &test_set);
            if let Some(e) = &result.error {
                eprintln!("cell {} {} p={} seed={} failed: {e}", cell.ansatz, cell.noise, cell.p, cell.seed);
            }
            let mut text = serde_json::to_string_pretty(&result)?;
            text.push('\n');
            write_atomic(&cell_path(&cells_dir, cell), text.as_bytes())
        })
    })?;
    println!("cells: total={} computed={} reused={} remaining={remaining}", all.len(), pending.len(), reused);
    if remaining > 0 {
        bail!("stopped with {remaining} cells left; rerun to finish");
    }

    let mut table = Vec::with_capacity(rows.len());
    for cells in &rows {
        let results = cells.iter().map(|c| read_cell(&cell_path(&cells_dir, c))).collect::<Result<Vec<_>>>()?;
        let test: Vec<f64> = results.iter().filter_map(|r| r.test_acc).collect();
        let train: Vec<f64> = results.iter().filter_map(|r| r.train_acc).collect();
        let (mean_test_acc, std_test_acc) = mean_std(&test);
        let (mean_train_acc, std_train_acc) = mean_std(&train);
        table.push(Row {
            ansatz: cells[0].ansatz.clone(),
            noise: cells[0].noise.clone(),
            p: cells[0].p,
            n_seeds: cells.len(),
            n_failed: cells.len() - test.len(),
            mean_test_acc,
            std_test_acc,
            mean_train_acc,
            std_train_acc,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table {
        w.serialize(row)?;
    }
    write_atomic(&run.out, &w.into_inner()?)?;
    write_json(&sibling(&run.out, ".json"), &json!({ "config": run, "dataset": manifest, "rows": table }))?;
    println!("wrote {} rows to {}", table.len(), run.out.display());
    Ok(())
}
