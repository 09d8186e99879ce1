use serde::{Deserialize, Serialize};

use super::{LocalizationError, MAX_REGION_TIERS, REGION_DEDUP_IOU};
use crate::backends::{Backends, Detection, FrameInput, SegmentMask};
use crate::geometry::BBox;
use crate::session::Fixation;

const LABELS_PER_OBJECT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazePointKind {
    Sensor,
    FrameCenter,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazePointSource {
    pub kind: GazePointKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_uri: Option<String>,
}

impl GazePointSource {
    pub const SENSOR: GazePointSource = GazePointSource { kind: GazePointKind::Sensor, external_uri: None };
    pub const FRAME_CENTER: GazePointSource = GazePointSource { kind: GazePointKind::FrameCenter, external_uri: None };

    /// An external provider; `uri` names it in traces. The call itself goes
    /// through the configured gaze-provider backend.
    pub fn external(uri: impl Into<String>) -> Self {
        Self { kind: GazePointKind::External, external_uri: Some(uri.into()) }
    }
}

/// Point of regard on `frame`, normalized to the unit square.
pub fn resolve_gaze_point(
    source: &GazePointSource,
    fixation: Option<&Fixation>,
    frame: &FrameInput,
    backends: &Backends,
) -> Result<(f64, f64), LocalizationError> {
    match source.kind {
        GazePointKind::Sensor => {
            let f = fixation.ok_or(LocalizationError::MissingFixation)?;
            Ok((f.x.clamp(0.0, 1.0), f.y.clamp(0.0, 1.0)))
        }
        GazePointKind::FrameCenter => Ok((0.5, 0.5)),
        GazePointKind::External => {
            if source.external_uri.is_none() {
                return Err(LocalizationError::Provider(crate::backends::BackendError::Config(
                    "external gaze source without a provider uri".into(),
                )));
            }
            backends.gaze_point(frame).map_err(LocalizationError::Provider)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTier {
    Fine,
    Mid,
    Coarse,
}

impl ScaleTier {
    const ORDER: [ScaleTier; 3] = [ScaleTier::Fine, ScaleTier::Mid, ScaleTier::Coarse];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCandidate {
    pub bbox: BBox,
    pub scale_tier: ScaleTier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
}

/// Masks containing `point`, smallest first, with near-duplicates
/// (IoU above the dedup cut) folded into the smaller one; at most three,
/// tiered fine to coarse in size order.
pub fn regions_from_masks(masks: &[SegmentMask], point: (f64, f64)) -> Vec<RegionCandidate> {
    let mut containing: Vec<&SegmentMask> =
        masks.iter().filter(|m| m.bbox.is_valid() && m.bbox.contains(point.0, point.1)).collect();
    // stable sort keeps backend order among equal areas
    containing.sort_by(|a, b| a.bbox.area().total_cmp(&b.bbox.area()));
    let mut kept: Vec<&SegmentMask> = Vec::new();
    for m in containing {
        if kept.iter().all(|k| k.bbox.iou(&m.bbox) <= REGION_DEDUP_IOU) {
            kept.push(m);
        }
    }
    kept.into_iter()
        .take(MAX_REGION_TIERS)
        .zip(ScaleTier::ORDER)
        .map(|(m, tier)| RegionCandidate { bbox: m.bbox, scale_tier: tier, mask_ref: m.mask_ref.clone() })
        .collect()
}

pub fn gaze_region_candidates(
    frame: &FrameInput,
    point: (f64, f64),
    backends: &Backends,
) -> Result<Vec<RegionCandidate>, LocalizationError> {
    let (x, y) = point;
    if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
        return Err(LocalizationError::PointOutOfRange(x, y));
    }
    let masks = backends.segment(frame, point)?;
    Ok(regions_from_masks(&masks, point))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestCandidate {
    pub labels: Vec<(String, f64)>,
    pub bbox: BBox,
}

impl InterestCandidate {
    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(l, _)| l.as_str())
    }
}

/// Detections sharing one bounding box, labels by descending confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedBox {
    pub bbox: BBox,
    pub labels: Vec<(String, f64)>,
}

impl DetectedBox {
    pub fn score(&self) -> f64 {
        self.labels.first().map_or(0.0, |(_, s)| *s)
    }
}

fn sort_labels(labels: &mut Vec<(String, f64)>) {
    // stable: equal confidences keep detector order
    labels.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut seen = std::collections::HashSet::new();
    labels.retain(|(l, _)| seen.insert(l.clone()));
}

/// Group detections with identical boxes, in order of first appearance.
/// Open-vocabulary detectors report one row per (box, label) pair.
pub fn group_boxes(detections: &[Detection]) -> Vec<DetectedBox> {
    let mut boxes: Vec<DetectedBox> = Vec::new();
    for d in detections {
        match boxes.iter_mut().find(|b| b.bbox == d.bbox) {
            Some(b) => b.labels.push((d.label.clone(), d.score)),
            None => boxes.push(DetectedBox { bbox: d.bbox, labels: vec![(d.label.clone(), d.score)] }),
        }
    }
    for b in &mut boxes {
        sort_labels(&mut b.labels);
    }
    boxes
}

/// One candidate per region from a single frame's detections.
///
/// Boxes whose best label clears `threshold` are ranked by IoU with the
/// region (ties to the higher score, then detector order); labels come
/// from the best box first and are topped up from the following boxes.
pub fn interests_for_regions(
    regions: &[RegionCandidate],
    detections: &[Detection],
    threshold: f64,
) -> Result<Vec<InterestCandidate>, LocalizationError> {
    let passing: Vec<DetectedBox> = group_boxes(detections).into_iter().filter(|b| b.score() >= threshold).collect();
    if passing.is_empty() {
        return Err(LocalizationError::EmptyDetection);
    }
    Ok(regions
        .iter()
        .map(|region| {
            let mut ranked: Vec<&DetectedBox> = passing.iter().collect();
            ranked.sort_by(|a, b| {
                b.bbox.iou(&region.bbox).total_cmp(&a.bbox.iou(&region.bbox)).then(b.score().total_cmp(&a.score()))
            });
            let mut labels: Vec<(String, f64)> = Vec::new();
            for b in &ranked {
                for (l, s) in &b.labels {
                    if labels.len() < LABELS_PER_OBJECT && labels.iter().all(|(k, _)| k != l) {
                        labels.push((l.clone(), *s));
                    }
                }
                if labels.len() == LABELS_PER_OBJECT {
                    break;
                }
            }
            // padding from weaker boxes can bring higher confidences
            labels.sort_by(|a, b| b.1.total_cmp(&a.1));
            InterestCandidate { labels, bbox: ranked[0].bbox }
        })
        .collect())
}

pub fn detect_interest_objects(
    frame: &FrameInput,
    regions: &[RegionCandidate],
    backends: &Backends,
    threshold: f64,
) -> Result<Vec<InterestCandidate>, LocalizationError> {
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let detections = backends.detect(frame)?;
    interests_for_regions(regions, &detections.detections, threshold)
}

/// The `top_n` most confident boxes of the whole frame.
pub fn top_confident(detections: &[Detection], top_n: usize) -> Vec<InterestCandidate> {
    let mut boxes = group_boxes(detections);
    boxes.sort_by(|a, b| b.score().total_cmp(&a.score()));
    boxes
        .into_iter()
        .take(top_n)
        .map(|b| InterestCandidate { labels: b.labels.into_iter().take(LABELS_PER_OBJECT).collect(), bbox: b.bbox })
        .collect()
}

pub fn global_confident_detection(
    frame: &FrameInput,
    backends: &Backends,
    top_n: usize,
) -> Result<Vec<InterestCandidate>, LocalizationError> {
    Ok(top_confident(&backends.detect(frame)?.detections, top_n))
}
