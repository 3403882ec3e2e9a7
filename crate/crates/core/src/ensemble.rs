//! Dice-proportional ensemble weights and thresholded weighted fusion.
//!
//! Given validation dice scores `d_i`, model `i` gets weight
//! `w_i = d_i / sum_j d_j`. The fused map is `sum_i w_i * P_i`, accumulated
//! per voxel in f64, and the final mask is 1 where that sum is at least 0.5.
//! The threshold branches overlap at exactly 0.5; ties resolve to
//! foreground, so uniform weights over binary maps give a majority vote in
//! which a 3-3 split counts as a vote for the artery.

use std::io::Write;

use crate::error::{Error, Result};
use crate::nifti::{NiftiHeader, SlabReader, SlabWriter};
use crate::volume::{Dims, Volume, VoxelData};

pub const FUSION_THRESHOLD: f64 = 0.5;

/// Validation dice score per model, in model order. Units (percent or
/// fraction) do not matter; only ratios enter the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScores(Vec<f64>);

impl ModelScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, &d)| !(d > 0.0) || !d.is_finite())
        {
            return Err(Error::NonPositiveScore { index, value });
        }
        Ok(ModelScores(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parse `model_id,dice` lines. Blank lines, `#` comments and a header
    /// line whose second field is not numeric are skipped.
    pub fn parse_csv(text: &str) -> Result<(Vec<String>, Self)> {
        let mut ids = Vec::new();
        let mut scores = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, dice) = line.split_once(',').ok_or_else(|| {
                Error::InvalidParameter(format!("scores line {}: expected `model_id,dice`", lineno + 1))
            })?;
            match dice.trim().parse::<f64>() {
                Ok(d) => {
                    ids.push(id.trim().to_string());
                    scores.push(d);
                }
                Err(_) if ids.is_empty() && lineno == 0 => continue,
                Err(_) => {
                    return Err(Error::InvalidParameter(format!(
                        "scores line {}: bad dice value {:?}",
                        lineno + 1,
                        dice.trim()
                    )))
                }
            }
        }
        Ok((ids, ModelScores::new(scores)?))
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("negative or non-finite weight in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(EnsembleWeights(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        compute_weights(&ModelScores::new(vec![1.0; n])?)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_weights(scores: &ModelScores) -> Result<EnsembleWeights> {
    let total: f64 = scores.as_slice().iter().sum();
    let w: Vec<f64> = scores.as_slice().iter().map(|d| d / total).collect();
    EnsembleWeights::new(w)
}

fn check_inputs(preds: &[&Volume], weights: &EnsembleWeights) -> Result<()> {
    if preds.len() != weights.len() {
        return Err(Error::CountMismatch {
            scores: weights.len(),
            predictions: preds.len(),
        });
    }
    for p in &preds[1..] {
        preds[0].check_same_shape(p)?;
    }
    Ok(())
}

/// Weighted voxel sum over `preds[..][range]`, in f64, model order.
fn weighted_sums(preds: &[&Volume], weights: &[f64], out: &mut Vec<f64>) {
    let n = preds[0].len();
    out.clear();
    out.resize(n, 0.0);
    for (p, &w) in preds.iter().zip(weights) {
        match p.data() {
            VoxelData::F32(d) => {
                for (o, &x) in out.iter_mut().zip(d) {
                    *o += w * x as f64;
                }
            }
            VoxelData::U8(d) => {
                for (o, &x) in out.iter_mut().zip(d) {
                    *o += w * x as f64;
                }
            }
            VoxelData::I16(d) => {
                for (o, &x) in out.iter_mut().zip(d) {
                    *o += w * x as f64;
                }
            }
        }
    }
}

fn check_finite(sums: &[f64], offset: usize) -> Result<()> {
    match sums.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(Error::NonFiniteValue(offset + i)),
        None => Ok(()),
    }
}

/// Voxelwise `sum_i w_i * P_i`, stored as f32 and clamped to `[0, 1]`.
pub fn fuse(preds: &[&Volume], weights: &EnsembleWeights) -> Result<Volume> {
    if preds.is_empty() {
        return Err(Error::CountMismatch {
            scores: weights.len(),
            predictions: 0,
        });
    }
    check_inputs(preds, weights)?;
    let mut sums = Vec::new();
    weighted_sums(preds, weights.as_slice(), &mut sums);
    check_finite(&sums, 0)?;
    let data = sums.iter().map(|&s| s.clamp(0.0, 1.0) as f32).collect();
    preds[0].like(VoxelData::F32(data))
}

/// Binary mask: 1 where `v >= 0.5`, else 0.
pub fn threshold_half(v: &Volume) -> Result<Volume> {
    let mut bits = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let x = v.get_f64(i);
        if !x.is_finite() {
            return Err(Error::NonFiniteValue(i));
        }
        bits.push((x >= FUSION_THRESHOLD) as u8);
    }
    v.like(VoxelData::U8(bits))
}

/// Fused, thresholded prediction. The threshold is applied to the f64
/// accumulator, before rounding to f32.
pub fn fuse_and_binarize(preds: &[&Volume], weights: &EnsembleWeights) -> Result<Volume> {
    let (mask, _) = fuse_both(preds, weights)?;
    Ok(mask)
}

/// Both the binary mask and the soft fused map from one accumulation pass.
pub fn fuse_both(preds: &[&Volume], weights: &EnsembleWeights) -> Result<(Volume, Volume)> {
    if preds.is_empty() {
        return Err(Error::CountMismatch {
            scores: weights.len(),
            predictions: 0,
        });
    }
    check_inputs(preds, weights)?;
    let mut sums = Vec::new();
    weighted_sums(preds, weights.as_slice(), &mut sums);
    check_finite(&sums, 0)?;
    let mask = sums.iter().map(|&s| (s >= FUSION_THRESHOLD) as u8).collect();
    let soft = sums.iter().map(|&s| s.clamp(0.0, 1.0) as f32).collect();
    Ok((
        preds[0].like(VoxelData::U8(mask))?,
        preds[0].like(VoxelData::F32(soft))?,
    ))
}

/// Counters reported by [`fuse_streaming`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamStats {
    pub slabs: usize,
    pub foreground: usize,
}

/// Slab-at-a-time fusion over NIfTI readers, writing the binary mask (and
/// optionally the soft map) as it goes. Peak memory is one slab per model.
/// Produces exactly the same voxels as [`fuse_both`] on whole volumes.
pub fn fuse_streaming<W: Write, S: Write>(
    readers: &mut [SlabReader],
    weights: &EnsembleWeights,
    slab_depth: usize,
    mask_out: (W, bool),
    soft_out: Option<(S, bool)>,
) -> Result<(StreamStats, W, Option<S>)> {
    if readers.len() != weights.len() {
        return Err(Error::CountMismatch {
            scores: weights.len(),
            predictions: readers.len(),
        });
    }
    if readers.is_empty() {
        return Err(Error::CountMismatch {
            scores: 0,
            predictions: 0,
        });
    }
    if slab_depth == 0 {
        return Err(Error::InvalidParameter("slab depth must be at least 1".into()));
    }
    let shape = readers[0].shape();
    for r in &readers[1..] {
        if r.shape() != shape {
            return Err(Error::ShapeMismatch(shape, r.shape()));
        }
    }
    let template = readers[0].header().clone();
    let mut mask_header = template.clone();
    mask_header.datatype = 2;
    mask_header.bitpix = 8;
    let mut soft_header = template;
    soft_header.datatype = 16;
    soft_header.bitpix = 32;
    let mut mask_writer = SlabWriter::new(mask_out.0, &mask_header, mask_out.1)?;
    let mut soft_writer = match soft_out {
        Some((s, gz)) => Some(SlabWriter::new(s, &soft_header, gz)?),
        None => None,
    };

    let mut stats = StreamStats {
        slabs: 0,
        foreground: 0,
    };
    let mut sums = Vec::new();
    let plane = shape[0] * shape[1];
    let mut z = 0;
    while z < shape[2] {
        let mut slabs = Vec::with_capacity(readers.len());
        for r in readers.iter_mut() {
            let s = r
                .next_slab(slab_depth)?
                .ok_or_else(|| Error::InvalidParameter("prediction ended early".into()))?;
            slabs.push(s);
        }
        let refs: Vec<&Volume> = slabs.iter().collect();
        weighted_sums(&refs, weights.as_slice(), &mut sums);
        check_finite(&sums, z * plane)?;
        let depth = slabs[0].shape()[2];
        let dims = Dims::new(shape[0], shape[1], depth);
        let mask: Vec<u8> = sums.iter().map(|&s| (s >= FUSION_THRESHOLD) as u8).collect();
        stats.foreground += mask.iter().filter(|&&m| m == 1).count();
        mask_writer.write_slab(&Volume::from_u8(dims, slabs[0].spacing(), mask)?)?;
        if let Some(w) = soft_writer.as_mut() {
            let soft = sums.iter().map(|&s| s.clamp(0.0, 1.0) as f32).collect();
            w.write_slab(&Volume::from_f32(dims, slabs[0].spacing(), soft)?)?;
        }
        stats.slabs += 1;
        z += depth;
    }
    let mask_sink = mask_writer.finish()?;
    let soft_sink = match soft_writer {
        Some(w) => Some(w.finish()?),
        None => None,
    };
    Ok((stats, mask_sink, soft_sink))
}

/// Header to use for a fused output derived from the first prediction.
pub fn output_header(first: &NiftiHeader, fused: &Volume) -> NiftiHeader {
    first.adapted_to(fused)
}
