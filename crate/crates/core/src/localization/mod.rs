//! Where and when the user was looking: key-frame selection from fixations
//! (temporal), gaze point to region to object labels (spatial), and the
//! gaze-free substitutes used by the ablation variants.

mod sharpness;
mod spatial;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::session::{fixations_in_window, Fixation, FixationId, FrameRef, QuerySpan};

pub use sharpness::{frame_sharpness, image_sharpness, SharpnessCache, SharpnessSource};
pub use spatial::{
    detect_interest_objects, gaze_region_candidates, global_confident_detection, group_boxes, interests_for_regions,
    regions_from_masks, resolve_gaze_point, top_confident, DetectedBox, GazePointKind, GazePointSource,
    InterestCandidate, RegionCandidate, ScaleTier,
};

pub const KEY_FRAME_COUNT: usize = 3;
/// Time constant trading fixation duration against distance from onset.
pub const DEFAULT_TAU_S: f64 = 5.0;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_TOP_N: usize = 3;
pub const MAX_REGION_TIERS: usize = 3;
/// Region candidates overlapping more than this are treated as one.
pub const REGION_DEDUP_IOU: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum LocalizationError {
    #[error("no frames available")]
    NoFrames,
    #[error("cannot decode frame `{uri}`: {detail}")]
    Decode { uri: String, detail: String },
    #[error("sensor gaze point needs a fixation")]
    MissingFixation,
    #[error("gaze point ({0}, {1}) lies outside the unit square")]
    PointOutOfRange(f64, f64),
    #[error("no detection passed the confidence threshold")]
    EmptyDetection,
    #[error("gaze provider failed: {0}")]
    Provider(#[source] BackendError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyFrameSelection {
    pub frames: Vec<FrameRef>,
    pub source_fixations: Vec<Option<FixationId>>,
    pub scores: Vec<f64>,
}

impl KeyFrameSelection {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn push(&mut self, frame: FrameRef, source: Option<FixationId>, score: f64) {
        self.frames.push(frame);
        self.source_fixations.push(source);
        self.scores.push(score);
    }
}

/// `duration / (1 + |t_start - onset| / tau)`: long fixations near the
/// query onset rank first.
pub fn fixation_score(f: &Fixation, onset: f64, tau: f64) -> f64 {
    f.duration() / (1.0 + (f.t_start - onset).abs() / tau)
}

/// Candidate fixations ranked by [`fixation_score`], ties to the earlier
/// start and then the smaller id.
pub fn rank_fixations<'a>(
    query: &QuerySpan,
    fixations: &'a [Fixation],
    tau: f64,
    lead: f64,
) -> Vec<(&'a Fixation, f64)> {
    let mut ranked: Vec<(&Fixation, f64)> = fixations_in_window(fixations, query.t_start - lead, query.t_end)
        .iter()
        .map(|f| (f, fixation_score(f, query.t_start, tau)))
        .collect();
    ranked.sort_by(|(fa, sa), (fb, sb)| {
        sb.total_cmp(sa).then(fa.t_start.total_cmp(&fb.t_start)).then_with(|| fa.id.cmp(&fb.id))
    });
    ranked
}

fn distance_to_span(t: f64, start: f64, end: f64) -> f64 {
    if t < start {
        start - t
    } else if t > end {
        t - end
    } else {
        0.0
    }
}

/// Gaze-driven temporal localization.
///
/// Walks fixations from the candidate window `[onset - lead, t_end]` in rank
/// order and gives each the sharpest unused frame captured during it, or the
/// nearest unused frame when none was. Stops after `k` frames.
pub fn select_key_frames(
    query: &QuerySpan,
    fixations: &[Fixation],
    frames: &[FrameRef],
    k: usize,
    tau: f64,
    lead: f64,
    sharpness: &dyn SharpnessSource,
) -> Result<KeyFrameSelection, LocalizationError> {
    if frames.is_empty() {
        return Err(LocalizationError::NoFrames);
    }
    let mut used = vec![false; frames.len()];
    let mut out = KeyFrameSelection::default();
    for (f, score) in rank_fixations(query, fixations, tau, lead) {
        if out.len() >= k {
            break;
        }
        let lo = frames.partition_point(|fr| fr.t < f.t_start);
        let hi = frames.partition_point(|fr| fr.t <= f.t_end);
        let mut best: Option<(usize, f64)> = None;
        for i in lo..hi {
            if used[i] {
                continue;
            }
            let s = sharpness.sharpness(&frames[i])?;
            // strict comparison keeps the earliest frame on ties
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        let pick = match best {
            Some((i, _)) => Some(i),
            None => (0..frames.len()).filter(|&i| !used[i]).min_by(|&a, &b| {
                distance_to_span(frames[a].t, f.t_start, f.t_end)
                    .total_cmp(&distance_to_span(frames[b].t, f.t_start, f.t_end))
                    .then(a.cmp(&b))
            }),
        };
        let Some(i) = pick else { break };
        used[i] = true;
        out.push(frames[i].clone(), Some(f.id.clone()), score);
    }
    Ok(out)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Gaze-free temporal localization: `k` frames drawn uniformly, without
/// replacement, from the window's frames at least as sharp as the window
/// median. The draw uses ChaCha8 seeded with `seed` (a partial
/// Fisher-Yates shuffle over the eligible frames in time order), so it is
/// reproducible across platforms. Each frame's score is its sharpness.
pub fn select_random_sharp_frames(
    query: &QuerySpan,
    frames: &[FrameRef],
    k: usize,
    seed: u64,
    lead: f64,
    sharpness: &dyn SharpnessSource,
) -> Result<KeyFrameSelection, LocalizationError> {
    let lo = frames.partition_point(|fr| fr.t < query.t_start - lead);
    let hi = frames.partition_point(|fr| fr.t <= query.t_end);
    if lo >= hi {
        return Err(LocalizationError::NoFrames);
    }
    let window = &frames[lo..hi];
    let scores = window.iter().map(|fr| sharpness.sharpness(fr)).collect::<Result<Vec<_>, _>>()?;
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = median(&sorted);
    let mut eligible: Vec<usize> = (0..window.len()).filter(|&i| scores[i] >= cut).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k.min(eligible.len());
    for i in 0..take {
        let j = rng.random_range(i..eligible.len());
        eligible.swap(i, j);
    }
    let mut chosen = eligible[..take].to_vec();
    chosen.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });

    let mut out = KeyFrameSelection::default();
    for i in chosen {
        out.push(window[i].clone(), None, scores[i]);
    }
    Ok(out)
}

/// Fixation that best describes where the user looked when `frame` was
/// captured: the one spanning its timestamp, else the closest in time
/// among `fixations`.
pub fn fixation_at(fixations: &[Fixation], t: f64) -> Option<&Fixation> {
    fixations.iter().min_by(|a, b| {
        distance_to_span(t, a.t_start, a.t_end)
            .total_cmp(&distance_to_span(t, b.t_start, b.t_end))
            .then(a.t_start.total_cmp(&b.t_start))
    })
}

#[cfg(test)]
mod tests;
