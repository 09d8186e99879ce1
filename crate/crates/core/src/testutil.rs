//! Builders shared by unit tests.

use std::path::PathBuf;

use crate::session::{Fixation, FixationId, QueryId, QuerySpan, RelevanceLabels, Session, TimedWord};

pub fn fix(id: &str, t_start: f64, t_end: f64) -> Fixation {
    Fixation { id: FixationId(id.into()), t_start, t_end, x: 0.5, y: 0.5 }
}

/// Query `id` with words given as `(text, start, end)`; pronouns are flagged
/// with the default lexicon.
pub fn query(id: &str, t_start: f64, t_end: f64, words: &[(&str, f64, f64)]) -> QuerySpan {
    let lex = crate::session::PronounLexicon::default();
    QuerySpan {
        id: QueryId(id.into()),
        t_start,
        t_end,
        words: words
            .iter()
            .enumerate()
            .map(|(index, (text, s, e))| TimedWord {
                text: text.to_string(),
                t_start: *s,
                t_end: *e,
                index,
                is_pronoun: lex.is_pronoun(text),
            })
            .collect(),
        audio_ref: None,
    }
}

pub fn labels(query: &str, pairs: &[(&str, bool)]) -> RelevanceLabels {
    let mut l = RelevanceLabels::new();
    for (f, r) in pairs {
        l.insert(QueryId(query.into()), FixationId((*f).into()), *r);
    }
    l
}

pub fn session(queries: Vec<QuerySpan>, fixations: Vec<Fixation>, labels: RelevanceLabels) -> Session {
    Session {
        id: "test".into(),
        root: PathBuf::from("."),
        gaze: vec![],
        fixations,
        queries,
        frames: vec![],
        labels: Some(labels),
        truth: None,
    }
}
