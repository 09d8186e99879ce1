use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::load::SYNONYMS_KEY;
use super::{Manifest, Session, SessionError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io { path: path.to_path_buf(), source }
}

fn put(dir: &Path, name: &str, contents: &str) -> Result<(), SessionError> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(io_err(&p))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("session values serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `session` in the canonical on-disk layout (seconds, normalized
/// coordinates) and return the manifest path. Output is byte-deterministic.
pub fn write_session(session: &Session, dir: &Path) -> Result<PathBuf, SessionError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut gaze = String::from("t,x,y,confidence\n");
    for g in &session.gaze {
        let _ = writeln!(gaze, "{},{},{},{}", g.t, g.x, g.y, opt(g.confidence));
    }
    put(dir, "gaze.csv", &gaze)?;

    let mut fix = String::from("id,t_start,t_end,x,y\n");
    for f in &session.fixations {
        let _ = writeln!(fix, "{},{},{},{},{}", f.id, f.t_start, f.t_end, f.x, f.y);
    }
    put(dir, "fixations.csv", &fix)?;

    let queries: Vec<Value> = session
        .queries
        .iter()
        .map(|q| {
            let mut v = json!({"id": q.id, "t_start": q.t_start, "t_end": q.t_end});
            if let Some(a) = &q.audio_ref {
                v["audio"] = json!(a);
            }
            v
        })
        .collect();
    put(dir, "queries.json", &pretty(&queries))?;

    let transcript: BTreeMap<&str, Vec<Value>> = session
        .queries
        .iter()
        .filter(|q| !q.words.is_empty())
        .map(|q| {
            let words =
                q.words.iter().map(|w| json!({"text": w.text, "t_start": w.t_start, "t_end": w.t_end})).collect();
            (q.id.as_str(), words)
        })
        .collect();
    put(dir, "transcript.json", &pretty(&transcript))?;

    let mut frames = String::from("t,uri,width,height,sharpness\n");
    for fr in &session.frames {
        let _ = writeln!(frames, "{},{},{},{},{}", fr.t, fr.uri, fr.width, fr.height, opt(fr.sharpness));
    }
    put(dir, "frames.csv", &frames)?;

    let mut manifest = Manifest {
        id: Some(session.id.clone()),
        gaze: "gaze.csv".into(),
        fixations: "fixations.csv".into(),
        transcript: "transcript.json".into(),
        queries: "queries.json".into(),
        frames: "frames.csv".into(),
        labels: None,
        truth: None,
        lexicon: None,
        time_unit: None,
        time_origin: None,
        pixel_size: None,
    };

    if let Some(labels) = &session.labels {
        let rows: Vec<Value> =
            labels.iter().map(|(q, f, r)| json!({"query": q, "fixation": f, "relevant": u8::from(r)})).collect();
        put(dir, "labels.json", &pretty(&rows))?;
        manifest.labels = Some("labels.json".into());
    }

    if let Some(truth) = &session.truth {
        let mut obj = serde_json::Map::new();
        for (q, names) in &truth.entries {
            obj.insert(q.0.clone(), json!(names));
        }
        obj.insert(SYNONYMS_KEY.into(), json!(truth.synonym_groups));
        put(dir, "truth.json", &pretty(&obj))?;
        manifest.truth = Some("truth.json".into());
    }

    put(dir, "manifest.json", &pretty(&manifest))?;
    Ok(dir.join("manifest.json"))
}
