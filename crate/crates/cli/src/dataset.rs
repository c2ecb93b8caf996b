//! `--data` sources: a feature CSV path or `synth:dim=..,n=..,sep=..,seed=..`.

use std::path::Path;

use anyhow::Result;
use qcnn_core::data::{format_features, load_features, parse_features, synthesize_gaussians, DatasetManifest, FeatureRecord};

use crate::config::usage;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    pub n: usize,
    pub sep: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Parses the part after `synth:`; missing keys take defaults, `seed`
    /// defaults to the run seed.
    pub fn parse(body: &str, run_seed: u64) -> Result<Self> {
        let mut spec = SynthSpec { dim: 256, n: 200, sep: 8.0, seed: run_seed };
        for kv in body.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("bad synth option `{kv}` (key=value)")))?;
            let bad = |_: std::num::ParseIntError| usage(format!("bad value for synth option `{k}`: `{v}`"));
            let badf = |_: std::num::ParseFloatError| usage(format!("bad value for synth option `{k}`: `{v}`"));
            match k {
                "dim" => spec.dim = v.parse().map_err(bad)?,
                "n" => spec.n = v.parse().map_err(bad)?,
                "sep" => spec.sep = v.parse().map_err(badf)?,
                "seed" => spec.seed = v.parse().map_err(bad)?,
                _ => return Err(usage(format!("unknown synth option `{k}` (dim, n, sep, seed)"))),
            }
        }
        Ok(spec)
    }

    pub fn source(&self) -> String {
        format!("synth:dim={},n={},sep={},seed={}", self.dim, self.n, self.sep, self.seed)
    }

    pub fn generate(&self) -> Result<Vec<FeatureRecord>> {
        synthesize_gaussians(self.dim, self.n, self.sep, self.seed).map_err(usage)
    }
}

/// Records plus a manifest whose checksum covers the CSV bytes the records
/// serialize to, so synthetic and file-backed runs are keyed the same way.
pub fn load(data: &str, run_seed: u64) -> Result<(Vec<FeatureRecord>, DatasetManifest)> {
    if let Some(body) = data.strip_prefix("synth") {
        let body = match body {
            "" => "",
            b => b.strip_prefix(':').ok_or_else(|| usage(format!("bad data source `{data}`")))?,
        };
        let spec = SynthSpec::parse(body, run_seed)?;
        let text = format_features(&spec.generate()?)?;
        return Ok(parse_features(&text, &spec.source())?);
    }
    let path = Path::new(data);
    if !path.exists() {
        return Err(usage(format!("data file {} does not exist", path.display())));
    }
    Ok(load_features(path)?)
}
