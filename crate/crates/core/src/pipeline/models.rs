use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::io::{load_logreg, load_mlp, read_header, save_logreg, save_mlp, ModelHeader};
use crate::neural::{LogRegModel, MlpModel};

/// Key of the single head used in early fusion.
pub const EARLY_KEY: &str = "early";
/// Directory name of the AH video gate.
pub const GATE_KEY: &str = "gate";

/// Trained heads of one task, keyed by modality name (or [`EARLY_KEY`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    pub mlps: BTreeMap<String, MlpModel>,
    pub gate: Option<LogRegModel>,
}

impl ModelSet {
    pub fn mlp(&self, key: &str) -> Result<&MlpModel> {
        self.mlps
            .get(key)
            .ok_or_else(|| Error::invalid(format!("no trained model for `{key}`")))
    }

    /// The parameters a save/load round trip would produce.
    pub fn rounded_to_f32(&self) -> ModelSet {
        ModelSet {
            mlps: self
                .mlps
                .iter()
                .map(|(k, m)| (k.clone(), m.rounded_to_f32()))
                .collect(),
            gate: self.gate.as_ref().map(LogRegModel::rounded_to_f32),
        }
    }

    /// SHA-256 over every parameter bit, in key order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (key, m) in &self.mlps {
            h.update(key.as_bytes());
            h.update([m.head as u8]);
            for block in [&m.w1, &m.w2] {
                h.update((block.nrows() as u64).to_le_bytes());
                h.update((block.ncols() as u64).to_le_bytes());
                block.iter().for_each(|v| h.update(v.to_le_bytes()));
            }
            m.b1.iter().chain(m.b2.iter()).for_each(|v| h.update(v.to_le_bytes()));
        }
        if let Some(g) = &self.gate {
            h.update(GATE_KEY.as_bytes());
            g.w.iter().for_each(|v| h.update(v.to_le_bytes()));
            h.update(g.b.to_le_bytes());
            h.update(g.decision_threshold.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// One sub-directory per model.
    pub fn save(&self, dir: &Path, config_digest: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (key, m) in &self.mlps {
            if key == GATE_KEY {
                return Err(Error::invalid(format!("model key `{GATE_KEY}` is reserved")));
            }
            save_mlp(&dir.join(key), m, config_digest)?;
        }
        if let Some(g) = &self.gate {
            save_logreg(&dir.join(GATE_KEY), g, config_digest)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ModelSet> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if entry.path().is_dir() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        let mut set = ModelSet::default();
        for name in names {
            let sub = dir.join(&name);
            match read_header(&sub)? {
                ModelHeader::Mlp { .. } => {
                    set.mlps.insert(name, load_mlp(&sub)?);
                }
                ModelHeader::Logreg { .. } => set.gate = Some(load_logreg(&sub)?),
            }
        }
        if set.mlps.is_empty() {
            return Err(Error::invalid(format!("no models found in {}", dir.display())));
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{mlp_init, Head};
    use ndarray::array;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = ModelSet::default();
        set.mlps.insert("face".into(), mlp_init(4, 3, 2, Head::Softmax, 1).unwrap());
        set.mlps.insert(EARLY_KEY.into(), mlp_init(6, 3, 1, Head::Sigmoid, 2).unwrap());
        set.gate = Some(LogRegModel::new(array![0.3, -0.1], 0.2));
        set.save(dir.path(), "digest").unwrap();
        let back = ModelSet::load(dir.path()).unwrap();
        assert_eq!(back, set.rounded_to_f32());
        assert_eq!(back.fingerprint(), set.rounded_to_f32().fingerprint());
        assert_ne!(back.fingerprint(), ModelSet::default().fingerprint());
    }

    #[test]
    fn empty_dir_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ModelSet::load(dir.path()).is_err());
        assert!(ModelSet::load(&dir.path().join("missing")).is_err());
    }
}
