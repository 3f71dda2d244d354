//! On-disk model format: a JSON object
//!
//! ```text
//! { "magic": "RECAST-SOURCE-MODEL", "version": 1, "model": { ... } }
//! ```
//!
//! `model` holds the response kind, the standardizer, the fitted parameters
//! (tagged by `kind`) and the number of fit rows. No training data is stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SourceModel;
use crate::error::{RecastError, Result};

pub const FORMAT_MAGIC: &str = "RECAST-SOURCE-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    magic: &'a str,
    version: u32,
    model: &'a SourceModel,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    magic: String,
    version: u32,
    model: serde_json::Value,
}

pub fn write_model<W: Write>(model: &SourceModel, mut w: W) -> Result<()> {
    let env = EnvelopeOut {
        magic: FORMAT_MAGIC,
        version: FORMAT_VERSION,
        model,
    };
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| RecastError::Container(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<SourceModel> {
    let env: EnvelopeIn =
        serde_json::from_reader(r).map_err(|e| RecastError::Container(format!("malformed model file: {e}")))?;
    if env.magic != FORMAT_MAGIC {
        return Err(RecastError::Container(format!("bad magic '{}'", env.magic)));
    }
    if env.version != FORMAT_VERSION {
        return Err(RecastError::Container(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            env.version
        )));
    }
    let model: SourceModel =
        serde_json::from_value(env.model).map_err(|e| RecastError::Container(format!("bad model body: {e}")))?;
    let p = model.p();
    if model.standardizer.sds.len() != p || model.standardizer.sds.iter().any(|&s| !(s > 0.0)) {
        return Err(RecastError::Container("invalid standardizer".into()));
    }
    let ok = match &model.params {
        super::ModelParams::Linear { coef, .. } | super::ModelParams::Logistic { coef, .. } => coef.len() == p,
        super::ModelParams::Mlp(n) => {
            n.p == p && n.w1.len() == n.hidden * p && n.b1.len() == n.hidden && n.w2.len() == n.hidden
        }
    };
    if !ok {
        return Err(RecastError::Container("parameter shapes do not match feature count".into()));
    }
    Ok(model)
}

pub fn save_model(model: &SourceModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SourceModel> {
    read_model(BufReader::new(File::open(path)?))
}
