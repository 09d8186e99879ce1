//! Deterministic simulated backends driven by a scene description.
//!
//! A [`Scene`] lists, per frame URI, the objects in view with their boxes and
//! confusable labels, a caption, optional OCR text and a salient point. The
//! responder reads the prompt back and names objects by a fixed rule, so a
//! recorded run is a faithful stand-in for hosted models when building test
//! fixtures.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, Request, Role, TranscriptWord};
use crate::evaluation::tokenize;
use crate::geometry::BBox;

/// Box scale of the part mask relative to the object.
const PART_SCALE: f64 = 0.6;
/// Box scale of the surrounding mask relative to the object.
const CONTEXT_SCALE: f64 = 1.6;
/// Half side of the mask returned when the point hits no object.
const BACKGROUND_HALF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    pub bbox: BBox,
    #[serde(default = "default_score")]
    pub score: f64,
    /// Extra labels the detector reports on the same box.
    #[serde(default)]
    pub confusers: Vec<(String, f64)>,
}

fn default_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFrame {
    pub caption: String,
    #[serde(default)]
    pub ocr: Option<String>,
    pub objects: Vec<SceneObject>,
    /// Point a saliency provider would report; defaults to the first object's centre.
    #[serde(default)]
    pub salient: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Object names the responder recognizes in queries and captions.
    pub vocabulary: Vec<String>,
    /// Keyed by frame URI.
    pub frames: BTreeMap<String, SceneFrame>,
    /// Keyed by audio URI.
    #[serde(default)]
    pub transcripts: BTreeMap<String, Vec<TranscriptWord>>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| BackendError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }
}

fn r4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn scaled(b: &BBox, s: f64, cx: f64, cy: f64) -> BBox {
    let (hw, hh) = (b.width() * s / 2.0, b.height() * s / 2.0);
    BBox::new(r4((cx - hw).max(0.0)), r4((cy - hh).max(0.0)), r4((cx + hw).min(1.0)), r4((cy + hh).min(1.0)))
}

fn centre(b: &BBox) -> (f64, f64) {
    ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}

/// Every role answered from one [`Scene`].
#[derive(Debug, Clone)]
pub struct SceneBackend {
    scene: Scene,
}

impl SceneBackend {
    pub fn new(scene: Scene) -> Self {
        Self { scene }
    }

    fn frame(&self, req: &Request) -> Result<&SceneFrame, BackendError> {
        let uri = req.body.get("uri").and_then(Value::as_str).unwrap_or_default();
        self.scene.frames.get(uri).ok_or_else(|| BackendError::BackendUnavailable {
            role: req.role,
            detail: format!("no scene entry for frame `{uri}`"),
        })
    }

    fn segment(&self, frame: &SceneFrame, x: f64, y: f64) -> Value {
        let hit = frame
            .objects
            .iter()
            .filter(|o| o.bbox.contains(x, y))
            .min_by(|a, b| a.bbox.area().total_cmp(&b.bbox.area()));
        let boxes = match hit {
            Some(o) => {
                let part = scaled(&o.bbox, PART_SCALE, x, y);
                let part = BBox::new(
                    part.x_min.max(o.bbox.x_min),
                    part.y_min.max(o.bbox.y_min),
                    part.x_max.min(o.bbox.x_max),
                    part.y_max.min(o.bbox.y_max),
                );
                let (cx, cy) = centre(&o.bbox);
                vec![part, o.bbox, scaled(&o.bbox, CONTEXT_SCALE, cx, cy)]
            }
            None => {
                vec![
                    BBox::new(
                        r4((x - BACKGROUND_HALF).max(0.0)),
                        r4((y - BACKGROUND_HALF).max(0.0)),
                        r4((x + BACKGROUND_HALF).min(1.0)),
                        r4((y + BACKGROUND_HALF).min(1.0)),
                    ),
                    BBox::FULL,
                ]
            }
        };
        json!({"masks": boxes.iter().enumerate().map(|(i, b)| json!({"bbox": b, "mask_ref": format!("m{i}")})).collect::<Vec<_>>()})
    }

    fn detect(frame: &SceneFrame) -> Value {
        let dets: Vec<Value> = frame
            .objects
            .iter()
            .flat_map(|o| {
                std::iter::once((o.name.clone(), o.score))
                    .chain(o.confusers.iter().cloned())
                    .map(|(label, score)| json!({"label": label, "bbox": o.bbox, "score": score}))
                    .collect::<Vec<_>>()
            })
            .collect();
        json!({ "detections": dets })
    }

    fn named(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        let mut hits: Vec<(usize, &String)> = self
            .scene
            .vocabulary
            .iter()
            .filter_map(|name| {
                let phrase = tokenize(name);
                tokens
                    .windows(phrase.len().max(1))
                    .position(|w| !phrase.is_empty() && w == phrase.as_slice())
                    .map(|p| (p, name))
            })
            .collect();
        hits.sort();
        hits.into_iter().map(|(_, n)| n.clone()).collect()
    }

    /// Query names an object: that object. Otherwise the distinct top labels
    /// of the interest lines, else objects named in the context captions.
    fn respond(&self, prompt: &str) -> Value {
        let query = section(prompt, "User Query").unwrap_or_default();
        let mut objects = self.named(&query);
        if objects.is_empty() {
            for line in section(prompt, "Interest Caption").unwrap_or_default().lines() {
                let top = line.trim_start_matches('[').split([',', ']']).next().unwrap_or("").trim().to_string();
                if !top.is_empty() && !objects.contains(&top) {
                    objects.push(top);
                }
            }
        }
        if objects.is_empty() {
            for name in self.named(&section(prompt, "Context Caption").unwrap_or_default()) {
                if !objects.contains(&name) {
                    objects.push(name);
                }
            }
        }
        let (answer, search) = if objects.is_empty() {
            ("I cannot tell which object you mean.".to_string(), query.clone())
        } else {
            let list = objects.join(" and ");
            (format!("You are asking about the {list}."), format!("{list}: {query}"))
        };
        let body = json!({
            "thought": format!("The query is \"{query}\"; candidate objects: {}.", if objects.is_empty() { "none".to_string() } else { objects.join(", ") }),
            "answer": answer,
            "query": search,
        });
        json!({"text": format!("```json\n{}\n```", serde_json::to_string_pretty(&body).expect("json"))})
    }
}

/// Value block that follows `name:` on its own line, up to the next blank line.
fn section(prompt: &str, name: &str) -> Option<String> {
    let marker = format!("\n{name}:\n");
    let start = prompt.find(&marker)? + marker.len();
    let rest = &prompt[start..];
    Some(rest[..rest.find("\n\n").unwrap_or(rest.len())].to_string())
}

impl Backend for SceneBackend {
    fn call(&self, req: &Request) -> Result<Value, BackendError> {
        match req.role {
            Role::Transcriber => {
                let uri = req.body.get("uri").and_then(Value::as_str).unwrap_or_default();
                let words = self.scene.transcripts.get(uri).ok_or_else(|| BackendError::BackendUnavailable {
                    role: req.role,
                    detail: format!("no transcript for `{uri}`"),
                })?;
                Ok(json!({"language": "en", "words": words}))
            }
            Role::Segmenter => {
                let frame = self.frame(req)?;
                let p = req.body.get("point").and_then(Value::as_array);
                let coord = |i: usize| p.and_then(|a| a.get(i)).and_then(Value::as_f64);
                match (coord(0), coord(1)) {
                    (Some(x), Some(y)) => Ok(self.segment(frame, x, y)),
                    _ => Err(BackendError::MalformedResponse {
                        role: req.role,
                        detail: "segment request without a point".into(),
                    }),
                }
            }
            Role::Captioner => Ok(json!({"text": self.frame(req)?.caption, "detail_level": "Detail"})),
            Role::Detector => Ok(Self::detect(self.frame(req)?)),
            Role::Ocr => Ok(json!({"text": self.frame(req)?.ocr.clone().unwrap_or_default()})),
            Role::GazeProvider => {
                let frame = self.frame(req)?;
                let (x, y) =
                    frame.salient.or_else(|| frame.objects.first().map(|o| centre(&o.bbox))).unwrap_or((0.5, 0.5));
                Ok(json!({"x": r4(x), "y": r4(y)}))
            }
            Role::Responder => {
                let prompt = req.body["messages"][0]["content"].as_str().unwrap_or_default();
                Ok(self.respond(prompt))
            }
        }
    }
}
