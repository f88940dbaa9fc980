//! End-to-end detection pipeline glue: run the network on an image tensor,
//! decode every head, gate by score, suppress overlaps, and (for labeled
//! data) evaluate whole datasets.

use rayon::prelude::*;

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::layers::forward_pass;
use crate::metrics::{match_image, Averaging, EvalReport, EvalThresholds, MatchResult};
use crate::netdef::{ModelWeights, NetConfig};
use crate::postprocess::{decode_head, filter_by_score, nms, Detection, NmsMode};
use crate::tensor::Tensor;

/// Pipeline knobs shared by detect and eval.
#[derive(Clone, Copy, Debug)]
pub struct PipelineSettings {
    pub thresholds: EvalThresholds,
    pub nms_mode: NmsMode,
    /// Suppression threshold; defaults to `thresholds.iou_min` when unset.
    pub nms_iou: Option<f64>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            thresholds: EvalThresholds::default(),
            nms_mode: NmsMode::PerClass,
            nms_iou: None,
        }
    }
}

impl PipelineSettings {
    pub fn nms_threshold(&self) -> f64 {
        self.nms_iou.unwrap_or(self.thresholds.iou_min)
    }
}

/// Detect on one network-ready image tensor (1×c×h×w): forward, decode
/// both heads (coarse first), filter by score, then NMS.
pub fn detect_image(
    cfg: &NetConfig,
    weights: &ModelWeights<f32>,
    image: &Tensor<f32>,
    settings: &PipelineSettings,
) -> Result<Vec<Detection>> {
    settings.thresholds.validate()?;
    let heads = forward_pass(cfg, weights, image)?;
    if heads.is_empty() {
        return Err(Error::Data("model graph has no yolo layer".into()));
    }
    let mut dets = Vec::new();
    for head in &heads {
        dets.extend(decode_head(&head.tensor, &head.spec, cfg.input_w)?);
    }
    let dets = filter_by_score(dets, settings.thresholds.score_min);
    Ok(nms(dets, settings.nms_threshold(), settings.nms_mode))
}

/// Raw decoded candidates for one image, before any gating — the
/// S₁²·A + S₂²·A full set.
pub fn decode_all(
    cfg: &NetConfig,
    weights: &ModelWeights<f32>,
    image: &Tensor<f32>,
) -> Result<Vec<Detection>> {
    let heads = forward_pass(cfg, weights, image)?;
    let mut dets = Vec::new();
    for head in &heads {
        dets.extend(decode_head(&head.tensor, &head.spec, cfg.input_w)?);
    }
    Ok(dets)
}

/// Evaluate a labeled dataset with the full pipeline. Every sample must
/// carry exactly one ground truth; anything else is a protocol violation
/// and fails loudly rather than being silently mishandled.
pub fn evaluate_dataset(
    cfg: &NetConfig,
    weights: &ModelWeights<f32>,
    samples: &[Sample],
    settings: &PipelineSettings,
    averaging: Averaging,
    classes: &[String],
) -> Result<EvalReport> {
    settings.thresholds.validate()?;
    let results: Vec<MatchResult> = samples
        .par_iter()
        .map(|sample| -> Result<MatchResult> {
            let truth = single_truth(sample)?;
            let dets = detect_image(cfg, weights, &sample.image, settings)?;
            Ok(match_image(&dets, truth, &settings.thresholds))
        })
        .collect::<Result<_>>()?;
    let truths: Vec<_> = samples
        .iter()
        .map(|s| single_truth(s).copied())
        .collect::<Result<_>>()?;
    EvalReport::from_results(&results, &truths, classes, averaging)
}

fn single_truth(sample: &Sample) -> Result<&crate::dataset::GroundTruth> {
    match sample.truths.as_slice() {
        [one] => Ok(one),
        other => Err(Error::Data(format!(
            "sample `{}` has {} ground truths; the evaluation protocol requires exactly one per image",
            sample.id,
            other.len()
        ))),
    }
}
