//! Gaze-assisted resolution of ambiguous spoken queries.
//!
//! The crate is organised around one recorded session (gaze, fixations,
//! word-timed queries, scene frames): [`session`] loads it, [`analytics`]
//! measures how gaze and speech line up, [`localization`] turns gaze into key
//! frames and object candidates, [`pipeline`] assembles the language-model
//! prompt and parses the reply, and [`evaluation`] scores replies against
//! ground truth. [`synth`] produces sessions with known answers for testing.

// `!(a < b)` checks below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod session;

pub mod backends;
pub mod canon;
pub mod evaluation;
pub mod geometry;
pub mod localization;
pub mod pipeline;
pub mod synth;
#[cfg(test)]
pub(crate) mod testutil;
