//! Synthetic snippets and scripted expert demonstrations.
//!
//! Each generated snippet is a small pseudo-function. Its algorithm class `c`
//! is realised by one body line that pairs the class's signature keyword with
//! its signature call (class 0 uses `for` + `swap`, class 1 `while` + `merge`,
//! and so on). Filler lines never use signature tokens. A bugged snippet has
//! one identifier replaced by [`BUG_TOKEN`].
//!
//! The scripted experts are deterministic functions of the snippet, which
//! makes their behaviour exactly learnable.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code_model::{tokenize, LexerConfig, Snippet, TaskLabel};
use crate::error::{Error, Result};
use crate::gaze::{Fixation, LayoutSpec, TokenBoxes, Trajectory};

pub const BUG_TOKEN: &str = "BUGTOK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabPool {
    pub signature_keywords: Vec<String>,
    pub signature_calls: Vec<String>,
    pub function_names: Vec<String>,
    pub identifiers: Vec<String>,
}

impl Default for VocabPool {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        VocabPool {
            signature_keywords: owned(&["for", "while", "loop", "repeat", "foreach", "until"]),
            signature_calls: owned(&["swap", "merge", "push", "split", "scan", "hash"]),
            function_names: owned(&["sort", "find", "walk", "build", "fold", "check"]),
            identifiers: owned(&[
                "a", "b", "i", "j", "k", "n", "x", "y", "lo", "hi", "acc", "tmp", "left", "right",
                "mid", "val",
            ]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_snippets: usize,
    pub n_classes: usize,
    /// Inclusive range of source lines per snippet.
    pub lines_per_snippet: (usize, usize),
    pub pool: VocabPool,
    /// Fraction of snippets with a planted bug token.
    pub bug_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_snippets: 200,
            n_classes: 3,
            lines_per_snippet: (4, 6),
            pool: VocabPool::default(),
            bug_rate: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lines_per_snippet;
        let p = &self.pool;
        if self.n_classes < 2 {
            return Err(Error::param("n_classes must be at least 2"));
        }
        if self.n_classes > p.signature_keywords.len().min(p.signature_calls.len()) {
            return Err(Error::param(format!(
                "{} classes need as many signature keywords and calls",
                self.n_classes
            )));
        }
        if lo < 3 || lo > hi {
            return Err(Error::param(format!(
                "lines_per_snippet must be a non-empty range starting at 3 or more, got {lo}..={hi}"
            )));
        }
        if p.identifiers.len() < 2 || p.function_names.is_empty() {
            return Err(Error::param(
                "identifier and function-name pools must not be empty",
            ));
        }
        if !(0.0..=1.0).contains(&self.bug_rate) {
            return Err(Error::param(format!(
                "bug_rate must be in [0, 1], got {}",
                self.bug_rate
            )));
        }
        Ok(())
    }
}

/// A generated snippet together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSnippet {
    pub source: String,
    pub snippet: Snippet,
    pub class: usize,
}

pub fn snippet_id(index: usize) -> String {
    format!("snippet_{index:04}")
}

/// Word slot in a generated line; identifiers are candidates for the bug.
enum Word {
    Fixed(String),
    Ident(String),
}

pub fn generate(
    cfg: &GeneratorConfig,
    index: usize,
    lexer: &LexerConfig,
) -> Result<GeneratedSnippet> {
    cfg.validate()?;
    if index >= cfg.n_snippets {
        return Err(Error::param(format!(
            "snippet index {index} outside corpus of {}",
            cfg.n_snippets
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let pool = &cfg.pool;
    let class = index % cfg.n_classes;
    let n_lines = rng.gen_range(cfg.lines_per_snippet.0..=cfg.lines_per_snippet.1);
    let n_body = n_lines - 2;
    let signature_line = rng.gen_range(0..n_body);

    let fixed = |s: &str| Word::Fixed(s.to_string());
    let ident = |rng: &mut ChaCha8Rng| Word::Ident(pool.identifiers.choose(rng).unwrap().clone());
    let num = |rng: &mut ChaCha8Rng| Word::Fixed(rng.gen_range(0..10).to_string());

    let mut lines: Vec<(usize, Vec<Word>)> = Vec::with_capacity(n_lines);
    let name = pool.function_names.choose(&mut rng).unwrap().clone();
    lines.push((
        0,
        vec![
            fixed("fn"),
            fixed(&name),
            fixed("("),
            ident(&mut rng),
            fixed(","),
            ident(&mut rng),
            fixed(")"),
            fixed("{"),
        ],
    ));
    for body in 0..n_body {
        let words = if body == signature_line {
            vec![
                fixed(&pool.signature_keywords[class]),
                ident(&mut rng),
                fixed("{"),
                fixed(&pool.signature_calls[class]),
                fixed("("),
                ident(&mut rng),
                fixed(")"),
                fixed(";"),
                fixed("}"),
            ]
        } else {
            match rng.gen_range(0..3) {
                0 => vec![
                    fixed("let"),
                    ident(&mut rng),
                    fixed("="),
                    ident(&mut rng),
                    fixed("+"),
                    num(&mut rng),
                    fixed(";"),
                ],
                1 => vec![
                    fixed("if"),
                    ident(&mut rng),
                    fixed("<"),
                    num(&mut rng),
                    fixed("{"),
                    fixed("return"),
                    ident(&mut rng),
                    fixed(";"),
                    fixed("}"),
                ],
                _ => vec![
                    ident(&mut rng),
                    fixed("="),
                    ident(&mut rng),
                    fixed("*"),
                    ident(&mut rng),
                    fixed(";"),
                ],
            }
        };
        lines.push((2, words));
    }
    lines.push((0, vec![fixed("}")]));

    let bugged = rng.gen::<f64>() < cfg.bug_rate;
    let mut bug_slot = None;
    if bugged {
        let slots: Vec<(usize, usize)> = lines
            .iter()
            .enumerate()
            .flat_map(|(li, (_, ws))| {
                ws.iter()
                    .enumerate()
                    .filter(|(_, w)| matches!(w, Word::Ident(_)))
                    .map(move |(wi, _)| (li, wi))
            })
            .collect();
        bug_slot = slots.choose(&mut rng).copied();
    }

    let mut source = String::new();
    for (li, (indent, words)) in lines.iter().enumerate() {
        source.push_str(&" ".repeat(*indent));
        let texts: Vec<&str> = words
            .iter()
            .enumerate()
            .map(|(wi, w)| match w {
                _ if bug_slot == Some((li, wi)) => BUG_TOKEN,
                Word::Fixed(s) | Word::Ident(s) => s.as_str(),
            })
            .collect();
        source.push_str(&texts.join(" "));
        source.push('\n');
    }

    let mut snippet = tokenize(&source, lexer)?.with_id(snippet_id(index));
    snippet.task = Some(match bug_slot {
        Some(_) => {
            let at = snippet
                .tokens
                .iter()
                .position(|t| t.text == BUG_TOKEN)
                .expect("planted bug token survives lexing");
            TaskLabel::bug(at)
        }
        None => TaskLabel::class(class),
    });
    Ok(GeneratedSnippet {
        source,
        snippet,
        class,
    })
}

/// Deterministic snippet `index` of the corpus described by `cfg`.
pub fn gen_snippet(cfg: &GeneratorConfig, index: usize, lexer: &LexerConfig) -> Result<Snippet> {
    generate(cfg, index, lexer).map(|g| g.snippet)
}

/// Reads every token in document order.
pub fn linear_reader(snippet: &Snippet) -> Result<Trajectory> {
    Trajectory::new(
        snippet.id.clone(),
        (0..snippet.len()).collect(),
        snippet.task,
    )
}

/// Visits only tokens whose text is salient, in document order.
pub fn keyword_skimmer(snippet: &Snippet, salient: &BTreeSet<String>) -> Result<Trajectory> {
    let steps = snippet
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| salient.contains(&t.text))
        .map(|(i, _)| i)
        .collect();
    Trajectory::new(snippet.id.clone(), steps, snippet.task)
}

/// Salient tokens for [`keyword_skimmer`]: the class signatures plus the
/// control keywords of the filler lines.
pub fn default_salient(pool: &VocabPool) -> BTreeSet<String> {
    pool.signature_keywords
        .iter()
        .chain(&pool.signature_calls)
        .cloned()
        .chain(["fn", "if", "return"].map(String::from))
        .collect()
}

/// Skims towards the bug and then oscillates around it.
///
/// Reads every other token of `0..b-w`, then sweeps `b-w ..= b+w` and back
/// over `b-w+1 ..= b`, dropping out-of-range indices and repeated steps, so
/// the trajectory always ends exactly at the bug `b`.
pub fn bug_seeker(snippet: &Snippet, window: usize) -> Result<Trajectory> {
    let b = snippet.bug_index().ok_or_else(|| {
        Error::data(
            format!("snippet `{}`", snippet.id),
            "task",
            "bug_seeker needs a BugIndex label",
        )
    })?;
    let n = snippet.len() as i64;
    let (b, w) = (b as i64, window as i64);
    let in_range = |i: &i64| (0..n).contains(i);
    let mut steps: Vec<i64> = (0..(b - w).max(0)).step_by(2).collect();
    steps.extend((b - w..=b + w).filter(in_range));
    steps.extend((b - w + 1..=b).filter(in_range));
    let steps = steps.into_iter().map(|i| i as usize).collect();
    Trajectory::new(snippet.id.clone(), steps, snippet.task)
}

/// Fixations at the centre of every step's token, 250 ms apart.
pub fn synthetic_fixations(
    traj: &Trajectory,
    snippet: &Snippet,
    layout: &LayoutSpec,
) -> Vec<Fixation> {
    let boxes = TokenBoxes::new(snippet, layout);
    traj.steps
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let (x, y) = boxes.boxes()[s].center();
            Fixation {
                t_ms: 250.0 * k as f64,
                x_px: x,
                y_px: y,
                dur_ms: 200.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::TaskKind;

    fn lexer() -> LexerConfig {
        LexerConfig::default()
    }

    fn from_src(src: &str) -> Snippet {
        tokenize(src, &lexer()).unwrap().with_id("t")
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig {
            bug_rate: 0.5,
            ..GeneratorConfig::default()
        };
        for i in [0, 7, 199] {
            assert_eq!(
                generate(&cfg, i, &lexer()).unwrap(),
                generate(&cfg, i, &lexer()).unwrap()
            );
        }
        let other = GeneratorConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            generate(&cfg, 3, &lexer()).unwrap().source,
            generate(&other, 3, &lexer()).unwrap().source
        );
    }

    #[test]
    fn signatures_identify_the_class() {
        let cfg = GeneratorConfig::default();
        let pool = &cfg.pool;
        for i in 0..200 {
            let g = generate(&cfg, i, &lexer()).unwrap();
            let texts: BTreeSet<&str> = g.snippet.tokens.iter().map(|t| t.text.as_str()).collect();
            for c in 0..cfg.n_classes {
                let pair = texts.contains(pool.signature_keywords[c].as_str())
                    && texts.contains(pool.signature_calls[c].as_str());
                assert_eq!(pair, c == g.class, "snippet {i} class {c}");
            }
            assert_eq!(g.snippet.task, Some(TaskLabel::class(g.class)));
        }
    }

    #[test]
    fn class_balance() {
        let cfg = GeneratorConfig::default();
        let mut counts = vec![0usize; cfg.n_classes];
        for i in 0..cfg.n_snippets {
            counts[generate(&cfg, i, &lexer()).unwrap().class] += 1;
        }
        let expected = cfg.n_snippets as f64 / cfg.n_classes as f64;
        for c in counts {
            assert!((c as f64 - expected).abs() <= 0.1 * expected);
        }
    }

    #[test]
    fn bug_rate_extremes() {
        let clean = GeneratorConfig::default();
        let buggy = GeneratorConfig {
            bug_rate: 1.0,
            ..GeneratorConfig::default()
        };
        for i in 0..50 {
            let s = gen_snippet(&clean, i, &lexer()).unwrap();
            assert!(s.tokens.iter().all(|t| t.text != BUG_TOKEN));
            let s = gen_snippet(&buggy, i, &lexer()).unwrap();
            let b = s.bug_index().unwrap();
            assert_eq!(s.tokens[b].text, BUG_TOKEN);
            assert_eq!(s.tokens.iter().filter(|t| t.text == BUG_TOKEN).count(), 1);
        }
    }

    #[test]
    fn invalid_configs() {
        let cfg = GeneratorConfig {
            n_classes: 1,
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig {
            lines_per_snippet: (6, 4),
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn linear_reader_cases() {
        assert_eq!(linear_reader(&from_src("a b c")).unwrap().steps, [0, 1, 2]);
        assert!(matches!(
            linear_reader(&from_src("")),
            Err(Error::EmptyTrajectory { .. })
        ));
        let s = from_src("p q r s t u v");
        assert_eq!(linear_reader(&s).unwrap().steps.len(), s.len());
    }

    #[test]
    fn skimmer_cases() {
        let s = from_src("if x then y if z");
        let salient: BTreeSet<String> = ["if".to_string()].into();
        assert_eq!(keyword_skimmer(&s, &salient).unwrap().steps, [0, 4]);
        let all: BTreeSet<String> = s.tokens.iter().map(|t| t.text.clone()).collect();
        assert_eq!(
            keyword_skimmer(&s, &all).unwrap(),
            linear_reader(&s).unwrap()
        );
        assert!(matches!(
            keyword_skimmer(&s, &BTreeSet::new()),
            Err(Error::EmptyTrajectory { .. })
        ));
    }

    fn bugged(n: usize, b: usize) -> Snippet {
        let src: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let mut s = from_src(&src.join(" "));
        s.task = Some(TaskLabel::bug(b));
        s
    }

    #[test]
    fn bug_seeker_window_zero() {
        let t = bug_seeker(&bugged(12, 7), 0).unwrap();
        assert_eq!(t.steps, [0, 2, 4, 6, 7]);
        assert_eq!(t.task.unwrap().kind, TaskKind::BugIndex);
    }

    #[test]
    fn bug_seeker_clips_at_start() {
        let t = bug_seeker(&bugged(10, 0), 2).unwrap();
        assert!(t.steps[0] <= 2);
        assert_eq!(*t.steps.last().unwrap(), 0);
        assert_eq!(t.steps, [0, 1, 2, 0]);
    }

    #[test]
    fn bug_seeker_clips_at_end() {
        let t = bug_seeker(&bugged(10, 9), 1).unwrap();
        assert_eq!(t.steps, [0, 2, 4, 6, 8, 9]);
    }

    #[test]
    fn bug_seeker_always_ends_at_bug() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.gen_range(1..40);
            let b = rng.gen_range(0..n);
            let w = rng.gen_range(0..6);
            let s = bugged(n, b);
            let t = bug_seeker(&s, w).unwrap();
            assert_eq!(*t.steps.last().unwrap(), b);
            t.validate(&s).unwrap();
        }
    }

    #[test]
    fn bug_seeker_needs_a_bug_label() {
        assert!(bug_seeker(&from_src("a b"), 1).is_err());
    }

    #[test]
    fn fixations_land_on_steps() {
        let cfg = GeneratorConfig::default();
        let s = gen_snippet(&cfg, 3, &lexer()).unwrap();
        let t = linear_reader(&s).unwrap();
        let layout = LayoutSpec::default();
        let fixes = synthetic_fixations(&t, &s, &layout);
        let back = crate::gaze::build_trajectory(&fixes, &layout, &s, 50.0, 5.0).unwrap();
        assert_eq!(back, t);
    }
}
