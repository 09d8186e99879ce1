//! Regenerates `fixtures/home-01`: a 12-query household session with small
//! rendered frames, a scene description, backend fixtures recorded from the
//! scene backend for all six variants at seed 0, and the expected
//! response of every variant.
//!
//! ```text
//! cargo run -p gazequery --example make_fixtures [-- <out-dir>]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gazequery::backends::scene::{Scene, SceneBackend, SceneFrame, SceneObject};
use gazequery::backends::{Backend, Backends, RecordLog, Recorder, Role};
use gazequery::geometry::BBox;
use gazequery::pipeline::{Variant, VariantConfig};
use gazequery::session::{
    load_session, write_session, Fixation, FixationId, FrameRef, GazeSample, GroundTruth, PronounLexicon, QueryId,
    QuerySpan, RelevanceLabels, Session, TimedWord,
};
use gazequery_cli::manifest::RunLog;
use gazequery_cli::respond::{execute, RespondOptions, StageSettings};
use image::{imageops, Rgb, RgbImage};

const W: u32 = 128;
const H: u32 = 96;
const BLOCK_S: f64 = 40.0;
const QUERY_AT_S: f64 = 22.0;
const FRAME_STEP_S: f64 = 2.0;
const FRAMES_PER_BLOCK: usize = 13;
const WORD_S: f64 = 0.35;
const WORD_GAP_S: f64 = 0.05;
const FIXTURE_DIR: &str = "backend-fixtures";

const BACKENDS_TOML: &str = r#"# Every role answered from recorded fixtures.
[segmenter]
kind = "fixture"
fixture_dir = "backend-fixtures"

[captioner]
kind = "fixture"
fixture_dir = "backend-fixtures"

[detector]
kind = "fixture"
fixture_dir = "backend-fixtures"

[ocr]
kind = "fixture"
fixture_dir = "backend-fixtures"

[gaze_provider]
kind = "fixture"
fixture_dir = "backend-fixtures"

[responder]
kind = "fixture"
fixture_dir = "backend-fixtures"
"#;

#[derive(Clone, Copy)]
enum Slot {
    Center,
    Left,
    Right,
    Top,
}

impl Slot {
    fn bbox(self) -> BBox {
        match self {
            Slot::Center => BBox::new(0.39, 0.35, 0.61, 0.65),
            Slot::Left => BBox::new(0.06, 0.40, 0.28, 0.70),
            Slot::Right => BBox::new(0.72, 0.40, 0.94, 0.70),
            Slot::Top => BBox::new(0.10, 0.05, 0.30, 0.30),
        }
    }
}

struct Station {
    place: &'static str,
    query: &'static str,
    /// Target first; empty target name marks an unrelated query.
    objects: Vec<(&'static str, Slot)>,
    target: Option<&'static str>,
    ocr: Option<&'static str>,
    /// Extra glance at this distractor just before speaking.
    wander: Option<&'static str>,
}

fn stations() -> Vec<Station> {
    use Slot::*;
    let st = |place, query, target, objects: Vec<(&'static str, Slot)>, ocr, wander| Station {
        place,
        query,
        objects,
        target,
        ocr,
        wander,
    };
    vec![
        st(
            "kitchen counter",
            "how many calories are in this",
            Some("apple"),
            vec![("apple", Center), ("banana", Left), ("mug", Right)],
            None,
            None,
        ),
        st(
            "kitchen shelf",
            "is this mug dishwasher safe",
            Some("mug"),
            vec![("mug", Center), ("kettle", Left), ("apple", Right)],
            None,
            None,
        ),
        st(
            "study desk",
            "who wrote this",
            Some("book"),
            vec![("book", Left), ("lamp", Center), ("clock", Right), ("mug", Top)],
            Some("ATLAS OF THE WORLD"),
            None,
        ),
        st(
            "window sill",
            "how often should I water it",
            Some("plant"),
            vec![("plant", Center), ("book", Left), ("lamp", Right)],
            None,
            None,
        ),
        st(
            "hallway wall",
            "is that clock running fast",
            Some("clock"),
            vec![("clock", Center), ("remote", Left), ("plant", Right)],
            Some("12"),
            None,
        ),
        st(
            "living room table",
            "how do I pair this with my tv",
            Some("remote"),
            vec![("remote", Center), ("bottle", Left), ("mug", Right)],
            None,
            None,
        ),
        st(
            "recycling corner",
            "can I recycle that",
            Some("bottle"),
            vec![("bottle", Right), ("banana", Center), ("apple", Left)],
            Some("SPRING WATER"),
            None,
        ),
        st(
            "furniture store",
            "how much does this cost",
            Some("lamp"),
            vec![("lamp", Center), ("book", Left), ("plant", Right), ("teddy bear", Top)],
            Some("$29.99"),
            Some("book"),
        ),
        st(
            "bedroom",
            "can I put it in the washing machine",
            Some("teddy bear"),
            vec![("teddy bear", Center), ("book", Left), ("remote", Right)],
            None,
            None,
        ),
        st(
            "sunny window",
            "what is the weather tomorrow",
            None,
            vec![("plant", Center), ("lamp", Left), ("clock", Right)],
            None,
            None,
        ),
        st(
            "stove",
            "how long does this kettle take to boil",
            Some("kettle"),
            vec![("kettle", Center), ("mug", Left), ("banana", Right)],
            None,
            None,
        ),
        st(
            "fruit bowl",
            "are these ripe",
            Some("banana"),
            vec![("banana", Left), ("kettle", Center), ("apple", Right)],
            None,
            None,
        ),
    ]
}

fn confusers(name: &str) -> Vec<(String, f64)> {
    let pair: [&str; 2] = match name {
        "apple" => ["peach", "tomato"],
        "banana" => ["plantain", "lemon"],
        "mug" => ["cup", "jar"],
        "kettle" => ["teapot", "pitcher"],
        "book" => ["notebook", "magazine"],
        "lamp" => ["lampshade", "vase"],
        "clock" => ["wall clock", "plate"],
        "plant" => ["flowerpot", "herb"],
        "remote" => ["phone", "calculator"],
        "bottle" => ["flask", "vase"],
        "teddy bear" => ["toy", "pillow"],
        _ => ["object", "thing"],
    };
    vec![(pair[0].into(), 0.45), (pair[1].into(), 0.35)]
}

fn color(name: &str) -> [u8; 3] {
    match name {
        "apple" => [200, 30, 40],
        "banana" => [230, 210, 40],
        "mug" => [40, 90, 200],
        "kettle" => [150, 150, 160],
        "book" => [120, 60, 20],
        "lamp" => [240, 200, 140],
        "clock" => [250, 250, 250],
        "plant" => [30, 150, 50],
        "remote" => [20, 20, 20],
        "bottle" => [100, 200, 220],
        "teddy bear" => [170, 110, 60],
        _ => [128, 0, 128],
    }
}

fn shifted(b: BBox, dx: f64) -> BBox {
    BBox::new(((b.x_min + dx) * 1e4).round() / 1e4, b.y_min, ((b.x_max + dx) * 1e4).round() / 1e4, b.y_max)
}

fn render(objects: &[SceneObject], blur: f32) -> Vec<u8> {
    let mut img = RgbImage::from_fn(W, H, |x, y| {
        let v = 90 + ((x + 2 * y) % 40) as u8;
        Rgb([v, v, v.saturating_add(10)])
    });
    for o in objects {
        let c = color(&o.name);
        let (x0, y0) = ((o.bbox.x_min * W as f64) as u32, (o.bbox.y_min * H as f64) as u32);
        let (x1, y1) = ((o.bbox.x_max * W as f64) as u32, (o.bbox.y_max * H as f64) as u32);
        for y in y0..y1.min(H) {
            for x in x0..x1.min(W) {
                let stripe = if (x / 3 + y / 3) % 2 == 0 { 1.0 } else { 0.7 };
                img.put_pixel(x, y, Rgb(c.map(|ch| (ch as f64 * stripe) as u8)));
            }
        }
    }
    if blur > 0.0 {
        img = imageops::blur(&img, blur);
    }
    let mut bytes = Vec::new();
    image::DynamicImage::ImageRgb8(img)
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .expect("png encodes");
    bytes
}

struct Built {
    session: Session,
    scene: Scene,
    images: BTreeMap<String, Vec<u8>>,
}

fn build() -> Built {
    let lexicon = PronounLexicon::default();
    let mut scene = Scene::default();
    let mut images = BTreeMap::new();
    let mut queries = Vec::new();
    let mut fixations = Vec::new();
    let mut frames = Vec::new();
    let mut labels = RelevanceLabels::new();
    let mut truth = GroundTruth::default();
    let mut vocabulary = BTreeSet::new();

    for (i, st) in stations().iter().enumerate() {
        let qid = QueryId(format!("q{:02}", i + 1));
        let block = i as f64 * BLOCK_S;
        let t_q = block + QUERY_AT_S;
        let score = |rank: usize| [0.9, 0.85, 0.8, 0.7][rank];
        for (name, _) in &st.objects {
            vocabulary.insert(name.to_string());
        }

        for f in 0..FRAMES_PER_BLOCK {
            let t = block + FRAME_STEP_S * (f + 1) as f64;
            let dx = [0.0, 0.01, -0.01, 0.02, -0.02][f % 5];
            let objects: Vec<SceneObject> = st
                .objects
                .iter()
                .enumerate()
                .map(|(rank, (name, slot))| SceneObject {
                    name: name.to_string(),
                    bbox: shifted(slot.bbox(), dx),
                    score: score(rank),
                    confusers: confusers(name),
                })
                .collect();
            let uri = format!("frames/{qid}_{f:02}.png");
            let names: Vec<&str> = st.objects.iter().map(|(n, _)| *n).collect();
            let listed = match names.len() {
                3 => format!("a {}, a {} and a {}", names[0], names[1], names[2]),
                _ => format!("a {}, a {}, a {} and a {}", names[0], names[1], names[2], names[3]),
            };
            images.insert(uri.clone(), render(&objects, [0.0, 1.2, 0.4][f % 3]));
            scene.frames.insert(
                uri.clone(),
                SceneFrame {
                    caption: format!("A {} with {listed}.", st.place),
                    ocr: st.ocr.map(str::to_string),
                    objects,
                    salient: None,
                },
            );
            frames.push(FrameRef { t, uri, width: W, height: H, sharpness: None });
        }

        let mut words = Vec::new();
        let mut t = t_q;
        for (index, text) in st.query.split_whitespace().enumerate() {
            words.push(TimedWord {
                text: text.into(),
                t_start: t,
                t_end: ((t + WORD_S) * 1e3).round() / 1e3,
                index,
                is_pronoun: lexicon.is_pronoun(text),
            });
            t = ((t + WORD_S + WORD_GAP_S) * 1e3).round() / 1e3;
        }
        let t_end = words.last().expect("words").t_end;

        let centre = |name: &str| {
            let (_, slot) = st.objects.iter().find(|(n, _)| *n == name).expect("object in scene");
            let b = slot.bbox();
            ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
        };
        let focus = st.target.unwrap_or(st.objects[0].0);
        let d1 = st.objects[1].0;
        let d2 = st.objects[2].0;
        // (offset from query onset, duration, looked-at object)
        let mut plan: Vec<(f64, f64, &str)> =
            vec![(-12.0, 0.6, d1), (-8.0, 0.5, d2), (-4.5, 1.2, focus), (-2.0, 0.8, focus), (0.1, 0.9, focus)];
        if let Some(w) = st.wander {
            plan.push((-1.5, 0.7, w));
            plan.retain(|p| p.0 != -2.0);
        }
        plan.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (k, (off, dur, obj)) in plan.iter().enumerate() {
            let id = FixationId(format!("{qid}_f{k}"));
            let (x, y) = centre(obj);
            fixations.push(Fixation { id: id.clone(), t_start: t_q + off, t_end: t_q + off + dur, x, y });
            labels.insert(qid.clone(), id, Some(*obj) == st.target);
        }
        truth.entries.insert(qid.clone(), st.target.map(|t| BTreeSet::from([t.to_string()])).unwrap_or_default());
        queries.push(QuerySpan { id: qid, t_start: t_q, t_end, words, audio_ref: None });
    }
    truth.synonym_groups = vec![BTreeSet::from(["teddy bear".to_string(), "stuffed animal".to_string()])];
    scene.vocabulary = vocabulary.into_iter().collect();

    let gaze = fixations
        .iter()
        .flat_map(|f: &Fixation| [f.t_start, f.t_end].map(|t| GazeSample { t, x: f.x, y: f.y, confidence: Some(1.0) }))
        .collect();
    Built {
        session: Session {
            id: "home-01".into(),
            root: PathBuf::from("."),
            gaze,
            fixations,
            queries,
            frames,
            labels: Some(labels),
            truth: Some(truth),
        },
        scene,
        images,
    }
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/home-01"));
    // regenerated parts only; hand-written files under expected/ stay
    for dir in ["frames", FIXTURE_DIR] {
        if out.join(dir).exists() {
            std::fs::remove_dir_all(out.join(dir))?;
        }
    }
    for v in Variant::ALL {
        let dir = out.join("expected").join(v.name());
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
    }
    let built = build();
    write_session(&built.session, &out)?;
    for (uri, bytes) in &built.images {
        let p = out.join(uri);
        std::fs::create_dir_all(p.parent().expect("frames dir"))?;
        std::fs::write(p, bytes)?;
    }
    let mut scene_json = serde_json::to_string_pretty(&built.scene)?;
    scene_json.push('\n');
    std::fs::write(out.join("scene.json"), scene_json)?;
    std::fs::write(out.join("backends.toml"), BACKENDS_TOML)?;

    let session = load_session(&out)?;
    let sink = Arc::new(RecordLog::to_fixtures(&out.join(FIXTURE_DIR)));
    let scene: Arc<dyn Backend> = Arc::new(SceneBackend::new(built.scene));
    let recorded: Arc<dyn Backend> = Arc::new(Recorder::new(scene, sink));
    let backends = [Role::Segmenter, Role::Captioner, Role::Detector, Role::Ocr, Role::GazeProvider, Role::Responder]
        .into_iter()
        .fold(Backends::new(), |b, r| b.with(r, recorded.clone()));

    let d = VariantConfig::new(Variant::VoilaG, 0);
    let opts = RespondOptions {
        session: out.clone(),
        variants: Variant::ALL.to_vec(),
        queries: Vec::new(),
        seed: 0,
        jobs: 1,
        stages: StageSettings {
            k: d.k,
            tau_s: d.tau_s,
            window_lead_s: d.window_lead_s,
            score_threshold: d.score_threshold,
            top_n: d.top_n,
        },
        backends: Some(out.join("backends.toml")),
        backends_toml: Some(BACKENDS_TOML.into()),
        template: None,
        examples: None,
    };
    let scratch = std::env::temp_dir().join(format!("gazequery-fixtures-{}", std::process::id()));
    let mut log = RunLog::start("respond");
    execute(&session, &opts, &backends, &scratch, &mut log)?;

    for (v, q) in Variant::ALL.iter().flat_map(|v| session.queries.iter().map(move |q| (v, q))) {
        let rel = Path::new(v.name()).join(format!("{}.json", q.id));
        let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(scratch.join(&rel))?)?;
        let p = out.join("expected").join(rel);
        std::fs::create_dir_all(p.parent().expect("dir"))?;
        let mut text = serde_json::to_string_pretty(&result["response"])?;
        text.push('\n');
        std::fs::write(p, text)?;
    }
    std::fs::remove_dir_all(&scratch)?;
    println!("wrote {}", out.display());
    Ok(())
}
