use std::sync::Arc;

use approx::assert_abs_diff_eq;
use image::{GrayImage, Luma};
use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::backends::{Backend, Backends, Detection, FrameInput, Request, Role, SegmentMask};
use crate::geometry::BBox;
use crate::session::FrameRef;
use crate::testutil::{fix, query};

fn frame(t: f64, sharp: f64) -> FrameRef {
    FrameRef { t, uri: format!("f{t}.png"), width: 8, height: 8, sharpness: Some(sharp) }
}

fn no_input() -> FrameInput {
    FrameInput { uri: "x.png".into(), digest: "uri:x.png".into(), bytes: None }
}

struct Fixed(Value);

impl Backend for Fixed {
    fn call(&self, _: &Request) -> Result<Value, crate::backends::BackendError> {
        Ok(self.0.clone())
    }
}

fn with(role: Role, v: Value) -> Backends {
    Backends::new().with(role, Arc::new(Fixed(v)))
}

fn det(label: &str, b: [f64; 4], score: f64) -> Detection {
    Detection { label: label.into(), bbox: BBox::new(b[0], b[1], b[2], b[3]), score }
}

fn mask(b: [f64; 4]) -> SegmentMask {
    SegmentMask { bbox: BBox::new(b[0], b[1], b[2], b[3]), mask_ref: None, score: None }
}

fn region(b: [f64; 4]) -> RegionCandidate {
    RegionCandidate { bbox: BBox::new(b[0], b[1], b[2], b[3]), scale_tier: ScaleTier::Fine, mask_ref: None }
}

#[test]
fn single_fixation_single_frame() {
    let q = query("q", 10.0, 12.0, &[]);
    let fx = vec![fix("a", 9.0, 11.0)];
    let frames = vec![frame(10.0, 1.0)];
    let sel = select_key_frames(&q, &fx, &frames, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
    assert_eq!(sel.frames, frames);
    assert_eq!(sel.source_fixations, vec![Some(FixationId("a".into()))]);
}

#[test]
fn nearer_fixation_ranks_first() {
    let q = query("q", 20.0, 22.0, &[]);
    let fx = vec![fix("b", 10.0, 12.0), fix("a", 20.0, 22.0)];
    let ranked = rank_fixations(&q, &fx, DEFAULT_TAU_S, 20.0);
    assert_eq!(ranked[0].0.id.as_str(), "a");
    assert_abs_diff_eq!(ranked[0].1, 2.0);
    assert_abs_diff_eq!(ranked[1].1, 2.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn sharpest_frame_inside_span_wins() {
    let q = query("q", 5.0, 6.0, &[]);
    let fx = vec![fix("a", 4.0, 6.0)];
    let frames = vec![frame(4.0, 1.0), frame(5.0, 9.0), frame(6.0, 3.0), frame(7.0, 100.0)];
    let sel = select_key_frames(&q, &fx, &frames, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
    assert_eq!(sel.frames[0].t, 5.0);
}

#[test]
fn falls_back_to_nearest_frame() {
    let q = query("q", 5.0, 6.0, &[]);
    let fx = vec![fix("a", 4.0, 4.5), fix("b", 5.0, 6.0)];
    let frames = vec![frame(1.0, 1.0), frame(4.8, 1.0), frame(9.0, 1.0)];
    let sel = select_key_frames(&q, &fx, &frames, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
    // b (dur 1 at onset) first, no frame inside -> 4.8; a then takes 1.0
    assert_eq!(sel.frames.iter().map(|f| f.t).collect::<Vec<_>>(), vec![4.8, 1.0]);
}

#[test]
fn no_frames_is_an_error() {
    let q = query("q", 5.0, 6.0, &[]);
    let err = select_key_frames(&q, &[fix("a", 5.0, 6.0)], &[], 3, DEFAULT_TAU_S, 20.0, &()).unwrap_err();
    assert!(matches!(err, LocalizationError::NoFrames));
}

#[test]
fn fewer_candidates_fewer_frames() {
    let q = query("q", 30.0, 31.0, &[]);
    let fx = vec![fix("old", 0.0, 5.0), fix("a", 29.0, 30.5)];
    let frames: Vec<_> = (0..40).map(|t| frame(t as f64, 1.0)).collect();
    let sel = select_key_frames(&q, &fx, &frames, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
    assert_eq!(sel.len(), 1);
}

#[test]
fn random_single_candidate_any_seed() {
    let q = query("q", 30.0, 31.0, &[]);
    let frames = vec![frame(0.0, 5.0), frame(30.5, 1.0), frame(40.0, 5.0)];
    for seed in 0..20 {
        let sel = select_random_sharp_frames(&q, &frames, 3, seed, 20.0, &()).unwrap();
        assert_eq!(sel.frames, vec![frames[1].clone()]);
        assert_eq!(sel.source_fixations, vec![None]);
    }
}

#[test]
fn random_is_deterministic() {
    let q = query("q", 30.0, 31.0, &[]);
    let frames: Vec<_> = (10..32).map(|t| frame(t as f64, (t * 7 % 11) as f64)).collect();
    let a = select_random_sharp_frames(&q, &frames, 3, 42, 20.0, &()).unwrap();
    let b = select_random_sharp_frames(&q, &frames, 3, 42, 20.0, &()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
}

#[test]
fn random_draws_only_from_sharp_half() {
    let q = query("q", 30.0, 31.0, &[]);
    // sharpness 1..=10 at shuffled times; median 5.5
    let sharp = [3.0, 9.0, 1.0, 7.0, 10.0, 2.0, 6.0, 4.0, 8.0, 5.0];
    let frames: Vec<_> = sharp.iter().enumerate().map(|(i, s)| frame(20.0 + i as f64, *s)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..100 {
        let sel = select_random_sharp_frames(&q, &frames, 3, seed, 20.0, &()).unwrap();
        assert_eq!(sel.len(), 3);
        for (f, s) in sel.frames.iter().zip(&sel.scores) {
            assert!(f.sharpness.unwrap() > 5.5);
            assert_eq!(f.sharpness, Some(*s));
            seen.insert(f.uri.clone());
        }
        assert!(sel.scores.windows(2).all(|w| w[0] >= w[1]));
    }
    assert_eq!(seen.len(), 5);
}

#[test]
fn random_empty_window() {
    let q = query("q", 30.0, 31.0, &[]);
    let frames = vec![frame(0.0, 5.0)];
    assert!(matches!(select_random_sharp_frames(&q, &frames, 3, 0, 20.0, &()), Err(LocalizationError::NoFrames)));
}

#[test]
fn constant_image_has_zero_sharpness() {
    let img = GrayImage::from_pixel(16, 9, Luma([128]));
    assert_eq!(image_sharpness(&img), 0.0);
}

#[test]
fn step_edge_scales_with_square_height() {
    let w = 20;
    let edge = |h: u8| GrayImage::from_fn(w, 10, |x, _| Luma([if x < w / 2 { 0 } else { h }]));
    // one edge column per row: h^2 * (1 / w)
    assert_abs_diff_eq!(image_sharpness(&edge(10)), 100.0 / f64::from(w));
    assert_abs_diff_eq!(image_sharpness(&edge(40)), 1600.0 / f64::from(w));
}

#[test]
fn blur_lowers_sharpness() {
    let img = GrayImage::from_fn(32, 32, |x, y| Luma([if (x / 4 + y / 4) % 2 == 0 { 20 } else { 220 }]));
    let blurred = image::imageops::blur(&img, 1.5);
    assert!(image_sharpness(&blurred) < image_sharpness(&img));
}

#[test]
fn undecodable_bytes() {
    assert!(matches!(frame_sharpness(b"not an image", "x"), Err(LocalizationError::Decode { .. })));
}

#[test]
fn gaze_point_sources() {
    let b = with(Role::GazeProvider, json!({"x": 0.7, "y": 0.2}));
    let mut f = fix("a", 0.0, 1.0);
    f.x = 0.3;
    f.y = 1.2;
    let center = resolve_gaze_point(&GazePointSource::FRAME_CENTER, None, &no_input(), &b).unwrap();
    assert_eq!(center, (0.5, 0.5));
    let sensor = resolve_gaze_point(&GazePointSource::SENSOR, Some(&f), &no_input(), &b).unwrap();
    assert_eq!(sensor, (0.3, 1.0));
    let ext = resolve_gaze_point(&GazePointSource::external("sal"), None, &no_input(), &b).unwrap();
    assert_eq!(ext, (0.7, 0.2));
    assert!(matches!(
        resolve_gaze_point(&GazePointSource::SENSOR, None, &no_input(), &b),
        Err(LocalizationError::MissingFixation)
    ));
    assert!(matches!(
        resolve_gaze_point(&GazePointSource::external("sal"), None, &no_input(), &Backends::new()),
        Err(LocalizationError::Provider(_))
    ));
}

#[test]
fn nested_masks_give_three_tiers() {
    let masks = vec![
        mask([0.1, 0.1, 0.9, 0.9]),
        mask([0.4, 0.4, 0.6, 0.6]),
        mask([0.3, 0.3, 0.7, 0.7]),
        mask([0.0, 0.0, 0.2, 0.2]),
    ];
    let r = regions_from_masks(&masks, (0.5, 0.5));
    let tiers: Vec<_> = r.iter().map(|c| c.scale_tier).collect();
    assert_eq!(tiers, vec![ScaleTier::Fine, ScaleTier::Mid, ScaleTier::Coarse]);
    assert_eq!(r[0].bbox, BBox::new(0.4, 0.4, 0.6, 0.6));
    assert_eq!(r[2].bbox, BBox::new(0.1, 0.1, 0.9, 0.9));
}

#[test]
fn single_mask_is_fine() {
    let r = regions_from_masks(&[mask([0.2, 0.2, 0.8, 0.8])], (0.5, 0.5));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].scale_tier, ScaleTier::Fine);
}

#[test]
fn near_duplicate_masks_collapse() {
    // [0.25, 0.75]^2 inside [0.2375, 0.7625]^2: IoU = 0.25 / 0.275625 = 0.907
    let a = mask([0.25, 0.25, 0.75, 0.75]);
    let b = mask([0.2375, 0.2375, 0.7625, 0.7625]);
    assert_abs_diff_eq!(a.bbox.iou(&b.bbox), 0.25 / 0.275625, epsilon = 1e-12);
    let r = regions_from_masks(&[b.clone(), a.clone()], (0.5, 0.5));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].bbox, a.bbox);
}

#[test]
fn region_call_rejects_outside_point() {
    let b = with(Role::Segmenter, json!({"masks": []}));
    assert!(matches!(gaze_region_candidates(&no_input(), (1.2, 0.5), &b), Err(LocalizationError::PointOutOfRange(..))));
}

#[test]
fn labels_from_best_box_in_confidence_order() {
    let r = region([0.0, 0.0, 0.5, 0.5]);
    let bx = [0.0, 0.0, 0.5, 0.4];
    let d = vec![det("pear", bx, 0.5), det("apple", bx, 0.9), det("tomato", bx, 0.2)];
    let out = interests_for_regions(&[r], &d, 0.3).unwrap();
    let names: Vec<_> = out[0].label_names().collect();
    assert_eq!(names, vec!["apple", "pear", "tomato"]);
}

#[test]
fn all_below_threshold_is_empty_detection() {
    let d = vec![det("cup", [0.0, 0.0, 0.5, 0.5], 0.29)];
    assert!(matches!(
        interests_for_regions(&[region([0.0, 0.0, 0.5, 0.5])], &d, 0.3),
        Err(LocalizationError::EmptyDetection)
    ));
}

#[test]
fn higher_iou_box_supplies_labels_first() {
    let r = region([0.0, 0.0, 0.4, 0.4]);
    // IoU 0.16/0.2286 = 0.7 and 0.064/0.16 = 0.4
    let near = [0.0, 0.0, 0.4, 0.28];
    let far = [0.0, 0.0, 0.4, 0.16];
    let a = r.bbox.iou(&BBox::new(near[0], near[1], near[2], near[3]));
    let b = r.bbox.iou(&BBox::new(far[0], far[1], far[2], far[3]));
    assert_abs_diff_eq!(a, 0.7, epsilon = 1e-9);
    assert_abs_diff_eq!(b, 0.4, epsilon = 1e-9);
    let d = vec![det("mug", far, 0.95), det("book", near, 0.6), det("box", far, 0.4)];
    let out = interests_for_regions(&[r], &d, 0.3).unwrap();
    assert_eq!(out[0].bbox, BBox::new(near[0], near[1], near[2], near[3]));
    // book first by IoU, then padded with the 0.4 box's labels
    let names: std::collections::BTreeSet<_> = out[0].label_names().collect();
    assert_eq!(names, ["book", "box", "mug"].into_iter().collect());
    assert!(out[0].labels.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn global_keeps_top_three() {
    let d: Vec<_> = (0..5)
        .map(|i| {
            let x = i as f64 * 0.1;
            det(&format!("o{i}"), [x, 0.0, x + 0.1, 0.1], 0.1 + i as f64 * 0.2)
        })
        .collect();
    let out = top_confident(&d, 3);
    let names: Vec<_> = out.iter().map(|c| c.labels[0].0.as_str()).collect();
    assert_eq!(names, vec!["o4", "o3", "o2"]);
    assert!(top_confident(&[], 3).is_empty());
    let b = with(Role::Detector, json!({"detections": []}));
    assert!(global_confident_detection(&no_input(), &b, 3).unwrap().is_empty());
}

fn dyadic_fixations(raw: Vec<(u16, u16)>) -> Vec<Fixation> {
    let mut t = 0.0;
    raw.into_iter()
        .enumerate()
        .map(|(i, (gap, dur))| {
            let s = t + f64::from(gap) / 64.0;
            let e = s + f64::from(dur + 1) / 64.0;
            t = e;
            fix(&format!("f{i:03}"), s, e)
        })
        .collect()
}

fn brute_rank(q: &QuerySpan, fx: &[Fixation]) -> Vec<String> {
    let mut scored: Vec<(f64, f64, String)> = fx
        .iter()
        .filter(|f| f.t_end >= q.t_start - 20.0 && f.t_start <= q.t_end)
        .map(|f| {
            let d = f.t_end - f.t_start;
            (d / (1.0 + (f.t_start - q.t_start).abs() / 5.0), f.t_start, f.id.0.clone())
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2)));
    scored.into_iter().map(|s| s.2).collect()
}

proptest! {
    #[test]
    fn ranking_matches_brute_force(
        raw in prop::collection::vec((0u16..400, 0u16..300), 0..25),
        onset in 0u16..4000,
        qlen in 1u16..300,
        nframes in 3usize..30,
        k in 1usize..5,
    ) {
        let fx = dyadic_fixations(raw);
        let ts = f64::from(onset) / 64.0;
        let q = query("q", ts, ts + f64::from(qlen) / 64.0, &[]);
        let end = fx.last().map_or(100.0, |f| f.t_end);
        let frames: Vec<_> = (0..nframes)
            .map(|i| frame(end * i as f64 / nframes as f64, ((i * 37) % 11) as f64))
            .collect();
        let sel = select_key_frames(&q, &fx, &frames, k, DEFAULT_TAU_S, 20.0, &()).unwrap();
        let expect: Vec<String> = brute_rank(&q, &fx).into_iter().take(k.min(nframes)).collect();
        let got: Vec<String> = sel.source_fixations.iter().map(|f| f.clone().unwrap().0).collect();
        prop_assert_eq!(got, expect);
        prop_assert!(sel.scores.windows(2).all(|w| w[0] >= w[1]));
        let uris: std::collections::BTreeSet<_> = sel.frames.iter().map(|f| &f.uri).collect();
        prop_assert_eq!(uris.len(), sel.len());
    }

    #[test]
    fn shift_leaves_choice_unchanged(
        raw in prop::collection::vec((0u16..400, 0u16..300), 1..20),
        onset in 0u16..3000,
        shift in -50i32..500,
    ) {
        let fx = dyadic_fixations(raw);
        let ts = f64::from(onset) / 64.0;
        let q = query("q", ts, ts + 1.0, &[]);
        let frames: Vec<_> = (0..200).map(|i| frame(i as f64 * 0.5, 1.0)).collect();
        let a = select_key_frames(&q, &fx, &frames, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
        let d = f64::from(shift);
        let moved: Vec<_> = fx.iter().map(|f| { let mut g = f.clone(); g.t_start += d; g.t_end += d; g }).collect();
        let mq = query("q", ts + d, ts + 1.0 + d, &[]);
        let mframes: Vec<_> = frames.iter().map(|f| { let mut g = f.clone(); g.t += d; g }).collect();
        let b = select_key_frames(&mq, &moved, &mframes, 3, DEFAULT_TAU_S, 20.0, &()).unwrap();
        prop_assert_eq!(a.source_fixations, b.source_fixations);
    }

    #[test]
    fn regions_contain_point(
        boxes in prop::collection::vec((0.0f64..0.5, 0.0f64..0.5, 0.01f64..0.5, 0.01f64..0.5), 0..8),
        px in 0.0f64..=1.0, py in 0.0f64..=1.0,
    ) {
        let masks: Vec<_> = boxes.iter().map(|(x, y, w, h)| mask([*x, *y, x + w, y + h])).collect();
        let r = regions_from_masks(&masks, (px, py));
        prop_assert!(r.len() <= 3);
        for c in &r {
            prop_assert!(c.bbox.contains(px, py));
        }
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                prop_assert!(r[i].bbox.iou(&r[j].bbox) <= REGION_DEDUP_IOU);
            }
        }
    }

    #[test]
    fn chosen_box_maximizes_iou(
        dets in prop::collection::vec((0.0f64..0.5, 0.0f64..0.5, 0.05f64..0.5, 0.05f64..0.5, 0.0f64..=1.0, 0usize..6), 1..10),
        rb in (0.0f64..0.5, 0.0f64..0.5, 0.05f64..0.5, 0.05f64..0.5),
    ) {
        let names = ["cup", "mug", "bowl", "book", "lamp", "pen"];
        let d: Vec<_> = dets.iter().map(|(x, y, w, h, s, n)| det(names[*n], [*x, *y, x + w, y + h], *s)).collect();
        let r = region([rb.0, rb.1, rb.0 + rb.2, rb.1 + rb.3]);
        match interests_for_regions(std::slice::from_ref(&r), &d, 0.3) {
            Err(LocalizationError::EmptyDetection) => prop_assert!(d.iter().all(|x| x.score < 0.3)),
            Err(e) => prop_assert!(false, "{e}"),
            Ok(out) => {
                let best = d.iter().filter(|x| x.score >= 0.3).map(|x| x.bbox.iou(&r.bbox)).fold(f64::MIN, f64::max);
                prop_assert_eq!(out[0].bbox.iou(&r.bbox), best);
                prop_assert!(out[0].labels.windows(2).all(|w| w[0].1 >= w[1].1));
                let distinct: std::collections::BTreeSet<_> = out[0].label_names().collect();
                prop_assert_eq!(distinct.len(), out[0].labels.len());
                prop_assert!(out[0].labels.len() <= 3);
            }
        }
    }
}
