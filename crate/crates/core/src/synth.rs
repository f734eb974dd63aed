//! Synthetic packs with known structure, for end-to-end checks and demos.
//!
//! EXPR: Markov class labels, per-modality Gaussian clusters (class `c` sits
//! at `separation · e_c`, unit isotropic noise, plus nuisance dimensions) and
//! an optional frozen-model probability track.
//! EMI: intensities are a fixed linear map of each video's STAT descriptor
//! plus noise.
//! AH: frame labels are a per-frame segment indicator masked by a per-video
//! hidden variable that only the text track observes.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::featpack::{
    read_pack, write_pack_with_labels, FeaturePack, FeatureSequence, LabelPayload, LabelTrack,
    Manifest, ModalityDecl, ModalityKind, Task, VideoDecl, EMI_EMOTIONS, EXPR_CLASSES,
};
use crate::seed::derive_seed;
use crate::temporal::stat_aggregate;

/// Cluster separation (in noise standard deviations) at which the Bayes
/// classifier of one EXPR modality is 70% accurate.
pub const SEPARATION_70: f64 = 1.962;

/// Name of the frozen-model probability modality.
pub const PRETRAINED: &str = "pretrained";

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn to_f32(m: Array2<f64>) -> Array2<f32> {
    m.mapv(|v| v as f32)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Labels that keep their value with probability `stay` and otherwise jump
/// to a different, uniformly drawn value.
pub fn markov_labels(rng: &mut ChaCha8Rng, len: usize, values: usize, stay: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let mut cur = rng.random_range(0..values);
    for _ in 0..len {
        out.push(cur);
        if values > 1 && rng.random::<f64>() >= stay {
            let step = rng.random_range(1..values);
            cur = (cur + step) % values;
        }
    }
    out
}

fn video_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (0..n).map(|i| format!("v{i:0width$}")).collect()
}

fn finish(
    root: &Path,
    manifest: Manifest,
    sequences: Vec<FeatureSequence>,
    labels: Vec<LabelTrack>,
) -> Result<FeaturePack> {
    write_pack_with_labels(root, &manifest, &sequences, &labels)?;
    read_pack(root)
}

fn labelled_decl(id: &str, frames: usize, labelled: bool) -> VideoDecl {
    VideoDecl {
        id: id.to_string(),
        frames,
        labels_file: labelled.then(|| format!("{id}.labels.json")),
    }
}

#[derive(Debug, Clone)]
pub struct ExprSynth {
    pub videos: usize,
    pub frames: usize,
    /// Feature modalities; the first carries the frame clock.
    pub modalities: Vec<String>,
    pub separation: f64,
    pub nuisance_dims: usize,
    pub stay: f64,
    /// Rows of the non-clock modalities per frame (1.0 = same rate).
    pub secondary_rate: f64,
    /// Separation of the frozen model's logits; no probability track if `None`.
    pub pretrained: Option<f64>,
    pub labelled: bool,
}

impl Default for ExprSynth {
    fn default() -> Self {
        ExprSynth {
            videos: 50,
            frames: 200,
            modalities: vec!["face".into(), "audio".into()],
            separation: SEPARATION_70,
            nuisance_dims: 8,
            stay: 0.95,
            secondary_rate: 1.0,
            pretrained: Some(SEPARATION_70),
            labelled: true,
        }
    }
}

impl ExprSynth {
    pub fn dim(&self) -> usize {
        EXPR_CLASSES + self.nuisance_dims
    }

    fn rows(&self, clock: bool) -> usize {
        if clock {
            self.frames
        } else {
            ((self.frames as f64 * self.secondary_rate).round() as usize).max(1)
        }
    }
}

/// Writes an EXPR pack drawn with `seed` to `root`.
pub fn expr_pack(root: &Path, cfg: &ExprSynth, seed: u64) -> Result<FeaturePack> {
    if cfg.modalities.is_empty() || cfg.frames == 0 || cfg.videos == 0 {
        return Err(Error::invalid("synthetic EXPR pack needs modalities, frames and videos"));
    }
    let dim = cfg.dim();
    let mut decls: Vec<ModalityDecl> = cfg
        .modalities
        .iter()
        .map(|m| ModalityDecl::new(m, dim, ModalityKind::Embedding).with_source("synthetic"))
        .collect();
    if cfg.pretrained.is_some() {
        decls.push(
            ModalityDecl::new(PRETRAINED, EXPR_CLASSES, ModalityKind::Probabilities)
                .with_source("synthetic"),
        );
    }
    let ids = video_ids(cfg.videos);
    let mut sequences = Vec::new();
    let mut labels = Vec::new();
    let mut videos = Vec::new();
    for id in &ids {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synth/{id}")));
        let y = markov_labels(&mut rng, cfg.frames, EXPR_CLASSES, cfg.stay);
        for (i, m) in cfg.modalities.iter().enumerate() {
            let rows = cfg.rows(i == 0);
            let mut x = Array2::zeros((rows, dim));
            for r in 0..rows {
                let frame = if rows == 1 { 0 } else { r * (cfg.frames - 1) / (rows - 1) };
                for c in 0..dim {
                    x[[r, c]] = normal(&mut rng);
                }
                x[[r, y[frame]]] += cfg.separation;
            }
            sequences.push(FeatureSequence::new(id.as_str(), m.as_str(), to_f32(x))?);
        }
        if let Some(sep) = cfg.pretrained {
            let mut p = Array2::zeros((cfg.frames, EXPR_CLASSES));
            for (t, &label) in y.iter().enumerate() {
                let mut z: Vec<f64> = (0..EXPR_CLASSES).map(|_| normal(&mut rng)).collect();
                z[label] += sep;
                for (c, v) in softmax(&z).into_iter().enumerate() {
                    p[[t, c]] = v;
                }
            }
            sequences.push(FeatureSequence::new(id.as_str(), PRETRAINED, to_f32(p))?);
        }
        if cfg.labelled {
            labels.push(LabelTrack::new(
                id.as_str(),
                LabelPayload::Classes(y.iter().map(|&c| c as u32).collect()),
            ));
        }
        videos.push(labelled_decl(id, cfg.frames, cfg.labelled));
    }
    finish(root, Manifest::new(Task::Expr, decls, videos), sequences, labels)
}

#[derive(Debug, Clone)]
pub struct EmiSynth {
    pub videos: usize,
    pub frames: usize,
    /// Width of the `face` logits track; the descriptor has four times this.
    pub dim: usize,
    pub frame_noise: f64,
    /// Standard deviation of the noiseless map output per emotion.
    pub target_scale: f64,
    pub target_noise: f64,
    /// Adds an uninformative `audio` embedding track of this width.
    pub distractor_dim: Option<usize>,
    pub labelled: bool,
}

impl Default for EmiSynth {
    fn default() -> Self {
        EmiSynth {
            videos: 400,
            frames: 20,
            dim: 7,
            frame_noise: 0.3,
            target_scale: 0.12,
            target_noise: 0.02,
            distractor_dim: None,
            labelled: true,
        }
    }
}

/// The fixed affine map of an EMI world, `y = 0.5 + scale·A·(d − centre)`.
/// `A` (`6 × 4D`) is drawn from `world_seed`; its rows are rescaled so that
/// each emotion's noiseless output has unit standard deviation over the
/// descriptor distribution, estimated on a reference sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmiMap {
    pub a: Array2<f64>,
    pub centre: Array1<f64>,
}

const EMI_REFERENCE_VIDEOS: usize = 4000;

fn emi_face(rng: &mut ChaCha8Rng, cfg: &EmiSynth) -> Array2<f64> {
    let centre: Vec<f64> = (0..cfg.dim).map(|_| normal(rng)).collect();
    Array2::from_shape_fn((cfg.frames, cfg.dim), |(_, c)| centre[c] + cfg.frame_noise * normal(rng))
}

fn descriptor(id: &str, x: Array2<f64>) -> Result<(FeatureSequence, Array1<f64>)> {
    let face = FeatureSequence::new(id, "face", to_f32(x))?;
    let d = Array1::from(stat_aggregate(&face)?.0);
    Ok((face, d))
}

pub fn emi_map(cfg: &EmiSynth, world_seed: u64) -> Result<EmiMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(world_seed, "synth/emi/map"));
    let width = 4 * cfg.dim;
    let mut a = Array2::from_shape_fn((EMI_EMOTIONS, width), |_| normal(&mut rng));
    let mut reference = Array2::zeros((EMI_REFERENCE_VIDEOS, width));
    for mut row in reference.rows_mut() {
        row.assign(&descriptor("ref", emi_face(&mut rng, cfg))?.1);
    }
    let centre = reference.mean_axis(ndarray::Axis(0)).expect("non-empty reference");
    let outputs = (&reference - &centre).dot(&a.t());
    for (mut row, col) in a.rows_mut().into_iter().zip(outputs.columns()) {
        let sd = col.mapv(|v| v * v).mean().expect("non-empty").sqrt();
        row /= sd;
    }
    Ok(EmiMap { a, centre })
}

/// Writes an EMI pack whose intensities are `0.5 + scale·A·(d − centre) +
/// noise`, clipped to [0, 1], with the map from [`emi_map`] and `d` the exact
/// STAT descriptor of the stored `face` track. The noiseless correlation
/// ceiling per emotion is about `scale / sqrt(scale² + noise²)`.
pub fn emi_pack(root: &Path, cfg: &EmiSynth, world_seed: u64, seed: u64) -> Result<FeaturePack> {
    if cfg.videos < 2 || cfg.frames == 0 || cfg.dim == 0 {
        return Err(Error::invalid("synthetic EMI pack needs at least 2 videos, frames and a width"));
    }
    let map = emi_map(cfg, world_seed)?;
    let mut decls = vec![ModalityDecl::new("face", cfg.dim, ModalityKind::Logits).with_source("synthetic")];
    if let Some(d) = cfg.distractor_dim {
        decls.push(ModalityDecl::new("audio", d, ModalityKind::Embedding).with_source("synthetic"));
    }
    let mut sequences = Vec::new();
    let mut labels = Vec::new();
    let mut videos = Vec::new();
    for id in video_ids(cfg.videos) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synth/{id}")));
        let (face, d) = descriptor(&id, emi_face(&mut rng, cfg))?;
        let y: Vec<f64> = map
            .a
            .dot(&(d - &map.centre))
            .iter()
            .map(|v| (0.5 + cfg.target_scale * v + cfg.target_noise * normal(&mut rng)).clamp(0.0, 1.0))
            .collect();
        sequences.push(face);
        if let Some(dd) = cfg.distractor_dim {
            let a = Array2::from_shape_fn((cfg.frames, dd), |_| normal(&mut rng));
            sequences.push(FeatureSequence::new(id.as_str(), "audio", to_f32(a))?);
        }
        if cfg.labelled {
            labels.push(LabelTrack::new(id.as_str(), LabelPayload::Intensities(y)));
        }
        videos.push(labelled_decl(&id, cfg.frames, cfg.labelled));
    }
    finish(root, Manifest::new(Task::Emi, decls, videos), sequences, labels)
}

#[derive(Debug, Clone)]
pub struct AhSynth {
    pub videos: usize,
    pub frames: usize,
    pub face_dim: usize,
    pub text_dim: usize,
    /// Text rows per video (text is sampled more sparsely than frames).
    pub text_rows: usize,
    /// Face signal on the frame segment indicator.
    pub face_separation: f64,
    /// Text signal on the video's hidden variable.
    pub text_scale: f64,
    pub stay: f64,
    /// Separation of a frozen two-class probability track, if any.
    pub pretrained: Option<f64>,
    pub labelled: bool,
}

impl Default for AhSynth {
    fn default() -> Self {
        AhSynth {
            videos: 40,
            frames: 120,
            face_dim: 4,
            text_dim: 4,
            text_rows: 30,
            face_separation: 2.0,
            text_scale: 2.0,
            stay: 0.9,
            pretrained: None,
            labelled: true,
        }
    }
}

/// Writes an AH pack. Each video draws a hidden `h ~ N(0,1)`; a frame is
/// positive iff `h > 0` and its Markov segment indicator is on. `face` sees
/// only the indicator, `text` only `h`.
pub fn ah_pack(root: &Path, cfg: &AhSynth, seed: u64) -> Result<FeaturePack> {
    if cfg.videos == 0 || cfg.frames == 0 || cfg.text_rows == 0 {
        return Err(Error::invalid("synthetic AH pack needs videos, frames and text rows"));
    }
    let mut decls = vec![
        ModalityDecl::new("face", cfg.face_dim, ModalityKind::Embedding).with_source("synthetic"),
        ModalityDecl::new("text", cfg.text_dim, ModalityKind::Embedding).with_source("synthetic"),
    ];
    if cfg.pretrained.is_some() {
        decls.push(ModalityDecl::new(PRETRAINED, 2, ModalityKind::Probabilities).with_source("synthetic"));
    }
    let mut sequences = Vec::new();
    let mut labels = Vec::new();
    let mut videos = Vec::new();
    for id in video_ids(cfg.videos) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synth/{id}")));
        let h = normal(&mut rng);
        let segment = markov_labels(&mut rng, cfg.frames, 2, cfg.stay);
        let y: Vec<u8> = segment.iter().map(|&s| u8::from(h > 0.0 && s == 1)).collect();
        let face = Array2::from_shape_fn((cfg.frames, cfg.face_dim), |(t, c)| {
            let signal = if c == 0 && segment[t] == 1 { cfg.face_separation } else { 0.0 };
            signal + normal(&mut rng)
        });
        let text = Array2::from_shape_fn((cfg.text_rows, cfg.text_dim), |(_, c)| {
            let signal = if c == 0 { cfg.text_scale * h } else { 0.0 };
            signal + normal(&mut rng)
        });
        sequences.push(FeatureSequence::new(id.as_str(), "face", to_f32(face))?);
        sequences.push(FeatureSequence::new(id.as_str(), "text", to_f32(text))?);
        if let Some(sep) = cfg.pretrained {
            let mut p = Array2::zeros((cfg.frames, 2));
            for (t, &label) in y.iter().enumerate() {
                let mut z = [normal(&mut rng), normal(&mut rng)];
                z[label as usize] += sep;
                let s = softmax(&z);
                p[[t, 0]] = s[0];
                p[[t, 1]] = s[1];
            }
            sequences.push(FeatureSequence::new(id.as_str(), PRETRAINED, to_f32(p))?);
        }
        if cfg.labelled {
            labels.push(LabelTrack::new(id.as_str(), LabelPayload::Binary(y)));
        }
        videos.push(labelled_decl(&id, cfg.frames, cfg.labelled));
    }
    finish(root, Manifest::new(Task::Ah, decls, videos), sequences, labels)
}
