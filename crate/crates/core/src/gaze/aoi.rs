//! Fixation to token assignment over monospace glyph boxes.
//!
//! A token's box spans `[x0, x1) x [y0, y1)` with
//! `x0 = origin_x + col_start * char_width`, `x1 = origin_x + col_end * char_width`,
//! `y0 = origin_y + line * line_height` and `y1 = y0 + line_height`.
//! A fixation inside a box maps to that token. Otherwise it maps to the token
//! whose box centre is nearest, if that centre lies within the radius, with
//! ties going to the lower token index.

use super::{Fixation, LayoutSpec};
use crate::code_model::Snippet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlyphBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl GlyphBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }
}

/// Glyph boxes of every token of one snippet, grouped by line for fast
/// lookup.
#[derive(Clone, Debug)]
pub struct TokenBoxes {
    boxes: Vec<GlyphBox>,
    /// `(line centre y, token indices in column order)`, sorted by line.
    lines: Vec<(f64, Vec<usize>)>,
    layout: LayoutSpec,
}

impl TokenBoxes {
    pub fn new(snippet: &Snippet, layout: &LayoutSpec) -> Self {
        let boxes: Vec<GlyphBox> = snippet
            .tokens
            .iter()
            .map(|t| {
                let y0 = layout.origin_y_px + t.line as f64 * layout.line_height_px;
                GlyphBox {
                    x0: layout.origin_x_px + t.col_start as f64 * layout.char_width_px,
                    x1: layout.origin_x_px + t.col_end as f64 * layout.char_width_px,
                    y0,
                    y1: y0 + layout.line_height_px,
                }
            })
            .collect();
        let mut lines: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, t) in snippet.tokens.iter().enumerate() {
            match lines.last_mut() {
                Some((line, members)) if *line == t.line => members.push(i),
                _ => lines.push((t.line, vec![i])),
            }
        }
        let lines = lines
            .into_iter()
            .map(|(_, members)| (boxes[members[0]].center().1, members))
            .collect();
        TokenBoxes {
            boxes,
            lines,
            layout: *layout,
        }
    }

    pub fn boxes(&self) -> &[GlyphBox] {
        &self.boxes
    }

    pub fn locate(&self, x: f64, y: f64, radius_px: f64) -> Option<usize> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        if let Some(hit) = self.containing(x, y) {
            return Some(hit);
        }
        self.nearest_center(x, y, radius_px)
    }

    fn containing(&self, x: f64, y: f64) -> Option<usize> {
        let half = self.layout.line_height_px / 2.0;
        let start = self.lines.partition_point(|(cy, _)| cy + half < y);
        // Boundary rounding can put the hit in an adjacent line.
        for (_, members) in self.lines.iter().skip(start.saturating_sub(1)).take(3) {
            let k = members.partition_point(|&i| self.boxes[i].x1 <= x);
            if let Some(&i) = members.get(k) {
                if self.boxes[i].contains(x, y) {
                    return Some(i);
                }
            }
        }
        None
    }

    fn nearest_center(&self, x: f64, y: f64, radius_px: f64) -> Option<usize> {
        let r2 = radius_px * radius_px;
        let mut best: Option<(f64, usize)> = None;
        let better = |cand: (f64, usize), best: Option<(f64, usize)>| match best {
            None => true,
            Some(b) => cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1),
        };

        // Visit lines in order of vertical distance; once a line is farther
        // than the best candidate, every remaining line is too.
        let split = self.lines.partition_point(|(cy, _)| *cy < y);
        let (mut up, mut down) = (split, split);
        loop {
            let above = up.checked_sub(1).map(|i| (i, y - self.lines[i].0));
            let below = self.lines.get(down).map(|(cy, _)| (down, cy - y));
            let (line, dy) = match (above, below) {
                (Some(a), Some(b)) if a.1 <= b.1 => {
                    up -= 1;
                    a
                }
                (_, Some(b)) => {
                    down += 1;
                    b
                }
                (Some(a), None) => {
                    up -= 1;
                    a
                }
                (None, None) => break,
            };
            let limit = best.map_or(r2, |b| b.0.min(r2));
            if dy * dy > limit {
                break;
            }
            let members = &self.lines[line].1;
            let k = members.partition_point(|&i| self.boxes[i].center().0 < x);
            for &i in members[k.saturating_sub(1)..(k + 1).min(members.len())].iter() {
                let (cx, cy) = self.boxes[i].center();
                let (ddx, ddy) = (x - cx, y - cy);
                let d2 = ddx * ddx + ddy * ddy;
                if better((d2, i), best) {
                    best = Some((d2, i));
                }
            }
        }
        best.filter(|&(d2, _)| d2 <= r2).map(|(_, i)| i)
    }
}

/// Maps one fixation onto a token index of `snippet`.
pub fn map_fixation(
    fix: &Fixation,
    layout: &LayoutSpec,
    snippet: &Snippet,
    radius_px: f64,
) -> Option<usize> {
    TokenBoxes::new(snippet, layout).locate(fix.x_px, fix.y_px, radius_px)
}
