use super::Fixation;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid interval [{start}, {end}]")]
pub struct InvalidInterval {
    pub start: f64,
    pub end: f64,
}

fn check(start: f64, end: f64) -> Result<(), InvalidInterval> {
    // NaN fails the comparison as well
    if start <= end {
        Ok(())
    } else {
        Err(InvalidInterval { start, end })
    }
}

/// True iff the closed intervals `[a_start, a_end]` and `[b_start, b_end]`
/// share at least one point. Touching endpoints intersect.
pub fn intervals_intersect(a_start: f64, a_end: f64, b_start: f64, b_end: f64) -> Result<bool, InvalidInterval> {
    check(a_start, a_end)?;
    check(b_start, b_end)?;
    Ok(a_start <= b_end && b_start <= a_end)
}

/// Fixations whose closed span intersects `[t_lo, t_hi]`, in start order.
///
/// Requires `fixations` sorted by start and non-overlapping, which makes end
/// times sorted too, so both bounds are found by binary search.
pub fn fixations_in_window(fixations: &[Fixation], t_lo: f64, t_hi: f64) -> &[Fixation] {
    if !(t_lo <= t_hi) {
        return &[];
    }
    let first = fixations.partition_point(|f| f.t_end < t_lo);
    let last = fixations.partition_point(|f| f.t_start <= t_hi);
    if first >= last {
        &[]
    } else {
        &fixations[first..last]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::FixationId;
    use proptest::prelude::*;

    fn fix(id: usize, s: f64, e: f64) -> Fixation {
        Fixation { id: FixationId(format!("f{id}")), t_start: s, t_end: e, x: 0.5, y: 0.5 }
    }

    #[test]
    fn closed_interval_cases() {
        assert!(intervals_intersect(1.0, 1.5, 1.4, 2.0).unwrap());
        assert!(intervals_intersect(1.0, 1.5, 1.5, 2.0).unwrap());
        assert!(!intervals_intersect(1.0, 1.5, 2.0, 3.0).unwrap());
        assert!(intervals_intersect(2.0, 2.0, 1.0, 3.0).unwrap());
    }

    #[test]
    fn reversed_interval_is_rejected() {
        assert_eq!(intervals_intersect(2.0, 1.0, 0.0, 3.0), Err(InvalidInterval { start: 2.0, end: 1.0 }));
        assert!(intervals_intersect(0.0, 1.0, f64::NAN, 3.0).is_err());
    }

    #[test]
    fn window_edges() {
        let fx = vec![fix(0, 1.0, 2.0), fix(1, 3.0, 4.0), fix(2, 5.0, 6.0)];
        assert_eq!(fixations_in_window(&fx, 0.0, 100.0).len(), 3);
        assert!(fixations_in_window(&fx, 0.0, 0.0).is_empty());
        let w = fixations_in_window(&fx, 2.0, 3.0);
        assert_eq!(w.len(), 2, "both boundary touches count");
        assert!(fixations_in_window(&fx, 2.1, 2.9).is_empty());
    }

    fn sorted_fixations() -> impl Strategy<Value = Vec<Fixation>> {
        prop::collection::vec((0.0f64..3.0, 0.01f64..2.0), 0..40).prop_map(|parts| {
            let mut t = 0.0;
            parts
                .into_iter()
                .enumerate()
                .map(|(i, (gap, dur))| {
                    let s = t + gap;
                    t = s + dur;
                    fix(i, s, t)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn window_matches_linear_filter(fx in sorted_fixations(), a in -5.0f64..80.0, len in 0.0f64..20.0) {
            let (lo, hi) = (a, a + len);
            let fast: Vec<_> = fixations_in_window(&fx, lo, hi).iter().map(|f| f.id.clone()).collect();
            let slow: Vec<_> = fx
                .iter()
                .filter(|f| f.t_start <= hi && lo <= f.t_end)
                .map(|f| f.id.clone())
                .collect();
            prop_assert_eq!(fast, slow);
        }
    }
}
