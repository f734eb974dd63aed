use std::fmt;

use serde::Serialize;

use super::{FeaturePack, LabelPayload, ModalityKind, EMI_EMOTIONS, EXPR_CLASSES};

/// Simplex tolerance for probabilities-kind rows.
pub const SIMPLEX_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MissingMatrix,
    Unreadable,
    NonFinite,
    Simplex,
    FrameCount,
    MissingLabels,
    LabelLength,
    ClassRange,
    BinaryValue,
    IntensityCount,
    IntensityRange,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::MissingMatrix => "missing matrix",
            Rule::Unreadable => "unreadable",
            Rule::NonFinite => "non-finite",
            Rule::Simplex => "simplex",
            Rule::FrameCount => "frame count",
            Rule::MissingLabels => "missing labels",
            Rule::LabelLength => "label length",
            Rule::ClassRange => "class range",
            Rule::BinaryValue => "binary value",
            Rule::IntensityCount => "intensity count",
            Rule::IntensityRange => "intensity range",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub video: String,
    pub modality: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}): {}",
            self.video,
            self.modality.as_deref().unwrap_or("-"),
            self.rule,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    fn push(&mut self, video: &str, modality: Option<&str>, rule: Rule, detail: String) {
        self.violations.push(Violation {
            video: video.to_string(),
            modality: modality.map(str::to_string),
            rule,
            detail,
        });
    }
}

/// Checks every data invariant of the pack. Violations are collected, never
/// raised.
pub fn validate_pack(pack: &FeaturePack) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = pack.manifest();
    let frame_modality = manifest.frame_modality().map(|m| m.name.as_str());

    for video in &manifest.videos {
        let id = video.id.as_str();
        if video.frames == 0 {
            report.push(id, None, Rule::FrameCount, "video declares 0 frames".into());
        }
        for decl in &manifest.modalities {
            let name = decl.name.as_str();
            if !pack.has_matrix(id, name) {
                report.push(id, Some(name), Rule::MissingMatrix, "no matrix file".into());
                continue;
            }
            let data = match pack.load_raw(id, name) {
                Ok(d) => d,
                Err(e) => {
                    report.push(id, Some(name), Rule::Unreadable, e.to_string());
                    continue;
                }
            };
            if Some(name) == frame_modality && data.nrows() != video.frames {
                report.push(
                    id,
                    Some(name),
                    Rule::FrameCount,
                    format!("{} rows, manifest declares {} frames", data.nrows(), video.frames),
                );
            } else if data.nrows() == 0 {
                report.push(id, Some(name), Rule::FrameCount, "matrix has 0 rows".into());
            }
            if let Some(((r, c), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
                report.push(
                    id,
                    Some(name),
                    Rule::NonFinite,
                    format!("first non-finite entry at row {r}, column {c}"),
                );
                continue;
            }
            if decl.kind == ModalityKind::Probabilities {
                let mut bad = data.rows().into_iter().enumerate().filter(|(_, row)| {
                    let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
                    (sum - 1.0).abs() > SIMPLEX_TOL
                        || row.iter().any(|&v| f64::from(v) < -SIMPLEX_TOL)
                });
                if let Some((first, row)) = bad.next() {
                    let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
                    let n = 1 + bad.count();
                    report.push(
                        id,
                        Some(name),
                        Rule::Simplex,
                        format!("{n} row(s) off the simplex; row {first} sums to {sum}"),
                    );
                }
            }
        }

        if video.labels_file.is_none() {
            continue;
        }
        let track = match pack.labels(id) {
            Ok(Some(t)) => t,
            Ok(None) => unreachable!("labels_file declared"),
            Err(e) => {
                report.push(id, None, Rule::MissingLabels, e.to_string());
                continue;
            }
        };
        if let LabelPayload::Classes(_) | LabelPayload::Binary(_) = track.payload {
            if track.payload.len() != video.frames {
                report.push(
                    id,
                    None,
                    Rule::LabelLength,
                    format!(
                        "{} frame labels for {} frames",
                        track.payload.len(),
                        video.frames
                    ),
                );
            }
        }
        match &track.payload {
            LabelPayload::Classes(ids) => {
                if let Some(bad) = ids.iter().find(|&&c| c as usize >= EXPR_CLASSES) {
                    report.push(
                        id,
                        None,
                        Rule::ClassRange,
                        format!("class id {bad} outside [0, {EXPR_CLASSES})"),
                    );
                }
            }
            LabelPayload::Binary(flags) => {
                if let Some(bad) = flags.iter().find(|&&f| f > 1) {
                    report.push(id, None, Rule::BinaryValue, format!("flag value {bad}"));
                }
            }
            LabelPayload::Intensities(values) => {
                if values.len() != EMI_EMOTIONS {
                    report.push(
                        id,
                        None,
                        Rule::IntensityCount,
                        format!("{} intensities, expected {EMI_EMOTIONS}", values.len()),
                    );
                }
                if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    report.push(
                        id,
                        None,
                        Rule::IntensityRange,
                        format!("intensity {bad} outside [0, 1]"),
                    );
                }
            }
        }
    }
    report
}
