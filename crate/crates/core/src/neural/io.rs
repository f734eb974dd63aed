//! Model directories: a `model.json` header plus FPK1 matrices for each
//! parameter block. Parameters are stored as f32, so a reloaded model equals
//! `rounded_to_f32()` of the one that was saved.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::logreg::LogRegModel;
use super::mlp::{Head, MlpModel};
use crate::error::{Error, Result};
use crate::featpack::format::{read_matrix, write_matrix};

pub const MODEL_HEADER: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelHeader {
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        head: Head,
        hidden_activation: String,
        seed: u64,
        config_digest: String,
    },
    Logreg {
        input_dim: usize,
        decision_threshold: f64,
        config_digest: String,
    },
}

fn to_f32(m: &Array2<f64>) -> Array2<f32> {
    m.mapv(|v| v as f32)
}

fn row_f32(v: &Array1<f64>) -> Array2<f32> {
    v.mapv(|x| x as f32).insert_axis(Axis(0))
}

fn write_header(dir: &Path, header: &ModelHeader) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(MODEL_HEADER);
    let text = serde_json::to_string_pretty(header).expect("header serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_header(dir: &Path) -> Result<ModelHeader> {
    let path = dir.join(MODEL_HEADER);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

fn load_block(dir: &Path, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let path = dir.join(name);
    let m = read_matrix(&path)?;
    if m.dim() != (rows, cols) {
        return Err(Error::CorruptMatrix {
            path,
            reason: format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(m.mapv(f64::from))
}

pub fn save_mlp(dir: &Path, model: &MlpModel, config_digest: &str) -> Result<()> {
    write_header(
        dir,
        &ModelHeader::Mlp {
            input_dim: model.input_dim(),
            hidden_dim: model.hidden_dim(),
            output_dim: model.output_dim(),
            head: model.head,
            hidden_activation: "relu".into(),
            seed: model.seed,
            config_digest: config_digest.into(),
        },
    )?;
    write_matrix(&dir.join("w1.fpk"), &to_f32(&model.w1))?;
    write_matrix(&dir.join("b1.fpk"), &row_f32(&model.b1))?;
    write_matrix(&dir.join("w2.fpk"), &to_f32(&model.w2))?;
    write_matrix(&dir.join("b2.fpk"), &row_f32(&model.b2))
}

pub fn load_mlp(dir: &Path) -> Result<MlpModel> {
    let ModelHeader::Mlp {
        input_dim: d,
        hidden_dim: h,
        output_dim: c,
        head,
        seed,
        ..
    } = read_header(dir)?
    else {
        return Err(Error::invalid(format!("{} is not an MLP model", dir.display())));
    };
    let model = MlpModel {
        w1: load_block(dir, "w1.fpk", h, d)?,
        b1: load_block(dir, "b1.fpk", 1, h)?.row(0).to_owned(),
        w2: load_block(dir, "w2.fpk", c, h)?,
        b2: load_block(dir, "b2.fpk", 1, c)?.row(0).to_owned(),
        head,
        seed,
    };
    if !model.is_finite() {
        return Err(Error::invalid(format!("{} holds non-finite parameters", dir.display())));
    }
    Ok(model)
}

pub fn save_logreg(dir: &Path, model: &LogRegModel, config_digest: &str) -> Result<()> {
    write_header(
        dir,
        &ModelHeader::Logreg {
            input_dim: model.dim(),
            decision_threshold: model.decision_threshold,
            config_digest: config_digest.into(),
        },
    )?;
    write_matrix(&dir.join("w.fpk"), &row_f32(&model.w))?;
    write_matrix(&dir.join("b.fpk"), &Array2::from_elem((1, 1), model.b as f32))
}

pub fn load_logreg(dir: &Path) -> Result<LogRegModel> {
    let ModelHeader::Logreg {
        input_dim,
        decision_threshold,
        ..
    } = read_header(dir)?
    else {
        return Err(Error::invalid(format!(
            "{} is not a logistic regression model",
            dir.display()
        )));
    };
    let w = load_block(dir, "w.fpk", 1, input_dim)?.row(0).to_owned();
    let b = load_block(dir, "b.fpk", 1, 1)?[[0, 0]];
    LogRegModel::new(w, b).with_threshold(decision_threshold)
}
