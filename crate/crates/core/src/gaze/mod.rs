//! From pixel-space fixations to token-level state-action trajectories.

mod aoi;
mod augment;
mod fixation;
mod trajectory;

pub use aoi::{map_fixation, GlyphBox, TokenBoxes};
pub use augment::{augment, perturb, PerturbedCopy};
pub use fixation::{read_fixations, write_fixations, Fixation, LayoutSpec};
pub use trajectory::{merge_repeats, read_trajectories, write_trajectories, Trajectory};

use crate::code_model::Snippet;
use crate::error::Result;

/// Fixations shorter than this are dropped by default.
pub const DEFAULT_MIN_DUR_MS: f64 = 50.0;

/// Filters short fixations, maps the rest onto tokens, drops unmapped ones
/// and merges consecutive repeats. The trajectory inherits the snippet's
/// task label and has weight 1.
pub fn build_trajectory(
    fixations: &[Fixation],
    layout: &LayoutSpec,
    snippet: &Snippet,
    min_dur_ms: f64,
    radius_px: f64,
) -> Result<Trajectory> {
    let boxes = TokenBoxes::new(snippet, layout);
    let steps = fixations
        .iter()
        .filter(|f| f.dur_ms >= min_dur_ms)
        .filter_map(|f| boxes.locate(f.x_px, f.y_px, radius_px))
        .collect();
    Trajectory::new(snippet.id.clone(), steps, snippet.task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::{tokenize, LexerConfig};
    use crate::error::Error;

    fn at_token(boxes: &TokenBoxes, i: usize, dur: f64) -> Fixation {
        let (x, y) = boxes.boxes()[i].center();
        Fixation {
            t_ms: 0.0,
            x_px: x,
            y_px: y,
            dur_ms: dur,
        }
    }

    fn far(dur: f64) -> Fixation {
        Fixation {
            t_ms: 0.0,
            x_px: -5000.0,
            y_px: -5000.0,
            dur_ms: dur,
        }
    }

    fn setup() -> (Snippet, LayoutSpec, TokenBoxes) {
        let s = tokenize("a b c d\ne f g h", &LexerConfig::default())
            .unwrap()
            .with_id("snip");
        let layout = LayoutSpec::default();
        let boxes = TokenBoxes::new(&s, &layout);
        (s, layout, boxes)
    }

    #[test]
    fn merges_repeated_tokens() {
        let (s, l, b) = setup();
        let fixes: Vec<_> = [3, 3, 7, 7, 7, 2]
            .iter()
            .map(|&i| at_token(&b, i, 100.0))
            .collect();
        let t = build_trajectory(&fixes, &l, &s, 50.0, 10.0).unwrap();
        assert_eq!(t.steps, [3, 7, 2]);
        assert_eq!(t.weight, 1.0);
    }

    #[test]
    fn merge_across_dropped_fixations() {
        let (s, l, b) = setup();
        let fixes = vec![at_token(&b, 3, 100.0), far(100.0), at_token(&b, 3, 100.0)];
        let t = build_trajectory(&fixes, &l, &s, 50.0, 10.0).unwrap();
        assert_eq!(t.steps, [3]);
        let fixes = vec![
            at_token(&b, 3, 100.0),
            at_token(&b, 5, 20.0),
            at_token(&b, 3, 100.0),
        ];
        let t = build_trajectory(&fixes, &l, &s, 50.0, 10.0).unwrap();
        assert_eq!(t.steps, [3]);
    }

    #[test]
    fn all_short_fixations_is_an_error() {
        let (s, l, b) = setup();
        let fixes = vec![at_token(&b, 1, 10.0), at_token(&b, 2, 49.9)];
        let err = build_trajectory(&fixes, &l, &s, 50.0, 10.0).unwrap_err();
        match err {
            Error::EmptyTrajectory { snippet } => assert_eq!(snippet, "snip"),
            other => panic!("unexpected {other}"),
        }
    }
}
