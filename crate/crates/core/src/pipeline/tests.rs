use std::sync::Arc;

use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::backends::{Backend, Request};
use crate::session::{Fixation, FrameRef};
use crate::testutil::{fix, query, session};

fn bundle_all() -> PromptBundle {
    PromptBundle::new(
        vec!["a kitchen counter".into()],
        vec![vec!["apple".into(), "pear".into(), "tomato".into()]],
        Some("FRESH".into()),
        "what is this".into(),
    )
}

#[test]
fn full_roster_lists_all_four() {
    let p = build_prompt(&bundle_all()).unwrap();
    for t in InputType::ORDER {
        assert!(p.contains(&format!("- {}: {}", t.name(), t.description())), "{t:?}");
        assert!(p.contains(&format!("\n{}:\n", t.name())));
    }
    assert!(p.contains("Interest Caption:\n[apple, pear, tomato]"));
    assert!(!p.contains("{{"));
}

#[test]
fn roster_without_ocr() {
    let mut b = bundle_all();
    b.ocr_text = None;
    b.input_roster.retain(|t| *t != InputType::Ocr);
    let p = build_prompt(&b).unwrap();
    assert!(!p.contains(InputType::Ocr.description()));
    assert!(!p.contains("\nOCR:\n"));
    assert_eq!(
        PromptBundle::new(
            b.context_captions.clone(),
            b.interest_captions.clone(),
            Some("  ".into()),
            b.query_text.clone()
        ),
        b
    );
}

#[test]
fn roster_must_match_fields() {
    let mut b = bundle_all();
    b.input_roster.pop();
    assert!(matches!(build_prompt(&b), Err(TemplateError::InvalidBundle(_))));
    let empty = PromptBundle::new(vec![], vec![], None, " ".into());
    assert!(matches!(build_prompt(&empty), Err(TemplateError::InvalidBundle(_))));
}

#[test]
fn template_slots_checked() {
    assert_eq!(PromptTemplate::parse("{{values}}"), Err(TemplateError::MissingSlot("inputs")));
    assert_eq!(
        PromptTemplate::parse("{{inputs}} {{values}} {{extra}}"),
        Err(TemplateError::UnknownSlot("extra".into()))
    );
    let t = PromptTemplate::parse("[{{inputs}}]\n{{values}}\n{{examples}}").unwrap().with_examples("EX");
    let b = PromptBundle::new(vec![], vec![], None, "q {{examples}}".into());
    let out = t.render(&b).unwrap();
    assert!(out.ends_with("User Query:\nq {{examples}}\nEX"));
}

#[test]
fn default_template_keeps_fixed_text() {
    let p = build_prompt(&bundle_all()).unwrap();
    assert!(p.starts_with("VOILA is designed to be able to assist"));
    assert!(p.contains("figure out whether user's query contains ambiguous words"));
    assert!(p.contains("\"answer\": string \\\\ The answer to user's question"));
    assert!(p.ends_with("}\n```\n"));
}

#[test]
fn parse_plain_fenced_and_prose() {
    let want = AssistantResponse { thought: "t".into(), answer: "a".into(), query: "q".into() };
    let raw = r#"{"thought":"t","answer":"a","query":"q"}"#;
    assert_eq!(parse_response(raw).unwrap(), want);
    assert_eq!(parse_response(&format!("```json\n{raw}\n```")).unwrap(), want);
    assert_eq!(parse_response(&format!("Sure {{not json}} here: {raw} hope it helps}}")).unwrap(), want);
}

#[test]
fn parse_errors() {
    assert_eq!(parse_response(r#"{"answer":"a"}"#), Err(ParseError::MissingField("thought")));
    assert_eq!(parse_response("no braces"), Err(ParseError::NoJson));
    assert_eq!(parse_response(r#"{"thought":"t","answer":"","query":"q"}"#), Err(ParseError::InvalidField("answer")));
}

#[test]
fn parse_handles_braces_in_strings() {
    let r = parse_response(r#"x {"thought":"a } b","answer":"{","query":"\"}"}"#).unwrap();
    assert_eq!(r.thought, "a } b");
    assert_eq!(r.query, "\"}");
}

proptest! {
    #[test]
    fn parse_inverts_serialize(t in "\\PC*[a-z]\\PC*", a in "\\PC*[a-z]", q in "[a-z]\\PC*", pre in "[^{]*") {
        let r = AssistantResponse { thought: t, answer: a, query: q };
        let raw = format!("{pre}```json\n{}\n```", serde_json::to_string_pretty(&r).unwrap());
        prop_assert_eq!(parse_response(&raw).unwrap(), r);
    }
}

#[test]
fn variant_table() {
    use Spatial::*;
    use Temporal::*;
    let expect = [
        ("VOILA-G", GazeDriven, GazeRegion),
        ("VOILA-T", GazeDriven, GlobalDetection),
        ("VOILA-S", RandomSharp, GazeRegion),
        ("VOILA", RandomSharp, GlobalDetection),
        ("VOILA-center", RandomSharp, CenterPoint),
        ("VOILA-ext", RandomSharp, ExternalPoint),
    ];
    for (name, t, s) in expect {
        let v: Variant = name.parse().unwrap();
        let cfg = VariantConfig::new(v, 0);
        assert_eq!((cfg.temporal, cfg.spatial), (t, s));
        assert_eq!(v.to_string(), name);
        assert_eq!(serde_json::to_value(v).unwrap(), json!(name));
    }
    assert!("VOILA-X".parse::<Variant>().is_err());
}

/// Scene stub: caption names the frame, the detector sees an apple at the
/// upper left and a clock at the centre, segmentation returns the box
/// around whichever object holds the point.
struct Stub;

const APPLE: [f64; 4] = [0.1, 0.1, 0.3, 0.3];
const CLOCK: [f64; 4] = [0.4, 0.4, 0.6, 0.6];

impl Backend for Stub {
    fn call(&self, r: &Request) -> Result<Value, crate::backends::BackendError> {
        Ok(match r.role {
            Role::Captioner => json!({"text": format!("a room seen in {}", r.body["uri"].as_str().unwrap())}),
            Role::Ocr => json!({"text": ""}),
            Role::Detector => json!({"detections": [
                {"label": "apple", "bbox": APPLE, "score": 0.9},
                {"label": "peach", "bbox": APPLE, "score": 0.4},
                {"label": "clock", "bbox": CLOCK, "score": 0.8},
                {"label": "timer", "bbox": CLOCK, "score": 0.5},
                {"label": "watch", "bbox": CLOCK, "score": 0.35},
            ]}),
            Role::Segmenter => {
                let p = &r.body["point"];
                let (x, y) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
                let inside = |b: [f64; 4]| b[0] <= x && x <= b[2] && b[1] <= y && y <= b[3];
                let masks: Vec<_> =
                    [APPLE, CLOCK].into_iter().filter(|b| inside(*b)).map(|b| json!({"bbox": b})).collect();
                json!({"masks": masks})
            }
            Role::GazeProvider => json!({"x": 0.2, "y": 0.2}),
            Role::Transcriber => {
                json!({"language": "en", "words": [{"text": "what", "t_start": 0.0, "t_end": 0.2}, {"text": "this", "t_start": 0.3, "t_end": 0.5}]})
            }
            Role::Responder => {
                let prompt = r.body["messages"][0]["content"].as_str().unwrap();
                let ans = if prompt.contains("[apple") { "an apple" } else { "a clock" };
                json!({"text": json!({"thought": "looked", "answer": ans, "query": ans}).to_string()})
            }
        })
    }
}

fn stub_backends() -> Backends {
    let mut b = Backends::new();
    for role in Role::ALL {
        b = b.with(role, Arc::new(Stub));
    }
    b
}

fn looking_at_apple() -> Session {
    let q = query("q1", 30.0, 31.0, &[("what", 30.0, 30.3), ("is", 30.35, 30.5), ("this", 30.6, 31.0)]);
    let mut f = fix("f1", 29.0, 30.5);
    f.x = 0.2;
    f.y = 0.2;
    let fx: Vec<Fixation> = vec![fix("f0", 12.0, 12.4), f];
    let mut s = session(vec![q], fx, crate::session::RelevanceLabels::new());
    s.id = "s1".into();
    s.frames = (0..40)
        .map(|i| FrameRef {
            t: i as f64,
            uri: format!("frames/{i:03}.png"),
            width: 64,
            height: 48,
            sharpness: Some(((i * 13) % 7) as f64),
        })
        .collect();
    s
}

fn run(s: &Session, v: Variant, b: &Backends) -> Result<QueryRun, PipelineError> {
    let template = PromptTemplate::default();
    let ctx = RunContext { backends: b, sharpness: &(), template: &template };
    run_query(s, &QueryId("q1".into()), &VariantConfig::new(v, 7), &ctx)
}

#[test]
fn gaze_variant_answers_about_fixated_object() {
    let b = stub_backends();
    let r = run(&looking_at_apple(), Variant::VoilaG, &b).unwrap();
    assert_eq!(r.response.answer, "an apple");
    assert_eq!(r.trace.frames[0].source_fixation.as_deref(), Some("f1"));
    assert_eq!(r.trace.frames[0].gaze_point, Some((0.2, 0.2)));
    // padded from the clock box, then re-sorted by confidence
    assert_eq!(r.trace.bundle.interest_captions[0], vec!["apple", "clock", "peach"]);
    // empty OCR text leaves the OCR input out
    assert!(!r.trace.bundle.input_roster.contains(&InputType::Ocr));
}

#[test]
fn center_variant_looks_at_centre() {
    let b = stub_backends();
    let r = run(&looking_at_apple(), Variant::VoilaCenter, &b).unwrap();
    assert!(r.trace.frames.iter().all(|f| f.gaze_point == Some((0.5, 0.5))));
    assert_eq!(r.trace.bundle.interest_captions, vec![vec!["clock", "timer", "watch"]]);
    assert_eq!(r.response.answer, "a clock");
    let g = run(&looking_at_apple(), Variant::VoilaG, &b).unwrap();
    assert_ne!(g.trace.bundle.interest_captions, r.trace.bundle.interest_captions);
}

#[test]
fn runs_are_reproducible_and_trace_rebuilds_prompt() {
    let b = stub_backends();
    let s = looking_at_apple();
    for v in Variant::ALL {
        let a = run(&s, v, &b).unwrap();
        let c = run(&s, v, &b).unwrap();
        assert_eq!(a.trace.hash(), c.trace.hash(), "{v}");
        let rebuilt = build_prompt(&a.trace.bundle).unwrap();
        assert_eq!(sha256_hex(rebuilt.as_bytes()), a.trace.prompt_hash);
        assert_eq!(rebuilt, a.prompt);
    }
}

#[test]
fn random_variants_share_frames() {
    let b = stub_backends();
    let s = looking_at_apple();
    let uris = |v| run(&s, v, &b).unwrap().trace.frames.iter().map(|f| f.uri.clone()).collect::<Vec<_>>();
    let base = uris(Variant::Voila);
    assert_eq!(base.len(), 3);
    for v in [Variant::VoilaS, Variant::VoilaCenter, Variant::VoilaExt] {
        assert_eq!(uris(v), base);
    }
}

#[test]
fn without_gaze_only_gaze_free_variants_run() {
    let b = stub_backends();
    let mut s = looking_at_apple();
    s.fixations.clear();
    for v in [Variant::VoilaG, Variant::VoilaT, Variant::VoilaS] {
        let e = run(&s, v, &b).unwrap_err();
        assert!(matches!(e, PipelineError::MissingGaze { .. }), "{v}");
        assert_eq!(e.stage(), Stage::Precondition);
    }
    for v in [Variant::Voila, Variant::VoilaCenter, Variant::VoilaExt] {
        run(&s, v, &b).unwrap();
    }
}

#[test]
fn missing_backend_is_a_precondition_error() {
    let b = Backends::new().with(Role::Captioner, Arc::new(Stub)).with(Role::Responder, Arc::new(Stub));
    let e = run(&looking_at_apple(), Variant::Voila, &b).unwrap_err();
    assert!(matches!(e, PipelineError::MissingBackend { role: Role::Detector, .. }));
    assert_eq!(e.role(), Some(Role::Detector));
}

struct NoDetections;

impl Backend for NoDetections {
    fn call(&self, _: &Request) -> Result<Value, crate::backends::BackendError> {
        Ok(json!({"detections": [{"label": "blur", "bbox": [0.0, 0.0, 1.0, 1.0], "score": 0.1}]}))
    }
}

#[test]
fn weak_detections_degrade_to_captions() {
    let mut b = stub_backends();
    b.set(Role::Detector, Arc::new(NoDetections), Default::default());
    let r = run(&looking_at_apple(), Variant::VoilaG, &b).unwrap();
    assert!(r.trace.bundle.interest_captions.is_empty());
    assert!(r.trace.notes.iter().any(|n| n.contains("caption only")));
    assert_eq!(r.trace.bundle.input_roster, vec![InputType::ContextCaption, InputType::UserQuery]);
}

#[test]
fn transcriber_fills_missing_words() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("q1.wav"), b"RIFF").unwrap();
    let mut s = looking_at_apple();
    s.root = dir.path().to_path_buf();
    s.queries[0].words.clear();
    s.queries[0].audio_ref = Some("q1.wav".into());
    let r = run(&s, Variant::VoilaG, &stub_backends()).unwrap();
    assert!(r.trace.transcribed);
    assert_eq!(r.trace.query_text, "what this");
}

#[test]
fn unknown_query() {
    let template = PromptTemplate::default();
    let b = stub_backends();
    let ctx = RunContext { backends: &b, sharpness: &(), template: &template };
    let e = run_query(&looking_at_apple(), &QueryId("nope".into()), &VariantConfig::new(Variant::Voila, 0), &ctx);
    assert!(matches!(e, Err(PipelineError::UnknownQuery(_))));
}
