//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the terminal.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gazebc::code_model::{build_vocab, tokenize, FeatureSpec, Featurizer, LexerConfig, Snippet};
use gazebc::gaze::{
    augment, map_fixation, merge_repeats, perturb, Fixation, LayoutSpec, Trajectory,
};
use gazebc::policy::{bc_loss, check_gradients, BcConfig, Example, PolicyParams, TaskMode};
use gazebc::synth::{self, GeneratorConfig};
use gazebc::trainer::{self, split_by_id, DataConfig, Metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Verdict {
    check(
        elapsed.as_secs_f64() < limit_s as f64,
        format!("{detail}; {:.1}s (limit {limit_s}s)", elapsed.as_secs_f64()),
    )
}

// 1. Gradient correctness of the full policy.

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut snippet = tokenize("fn f ( a , b ) {\n  return a ; }", &LexerConfig::default())
        .map_err(|e| e.to_string())?
        .with_id("grad");
    if snippet.len() != 12 {
        return Err(format!("fixture has {} tokens, expected 12", snippet.len()));
    }
    let vocab = build_vocab(std::slice::from_ref(&snippet), 1);
    vocab.assign(&mut snippet);
    let features = Featurizer::new(&FeatureSpec::OneHotPos, &vocab)
        .and_then(|f| f.featurize(&snippet))
        .map_err(|e| e.to_string())?;
    let config = BcConfig {
        d_emb: 8,
        d_hidden: 8,
        d_attn: 8,
        task_mode: TaskMode::Classify { n_classes: 3 },
        ..BcConfig::default()
    };
    // Same draw as the `gradcheck` subcommand: uniform in [-1, 1].
    let params = PolicyParams::uniform(config.dims(features.cols()), 0, 1.0);
    let steps = [0, 3, 5, 9, 11];
    let example = Example {
        features: &features,
        steps: &steps,
        task_target: Some(1),
        weight: 1.0,
    };
    let report = check_gradients(&params, &example, 1.0, 1.0, 1e-5).map_err(|e| e.to_string())?;
    let detail = format!(
        "max relative error {:.2e} over {} entries",
        report.max_rel_error, report.entries_checked
    );
    check(report.max_rel_error <= 1e-4, detail).and_then(|d| within(start.elapsed(), 30, d))
}

// 2. Fixation mapping against a brute-force scan.

/// Independent nearest-box scan over every token.
fn brute_force_map(
    x: f64,
    y: f64,
    snippet: &Snippet,
    layout: &LayoutSpec,
    radius: f64,
) -> Option<usize> {
    let mut nearest: Option<(f64, usize)> = None;
    for (i, t) in snippet.tokens.iter().enumerate() {
        let left = layout.origin_x_px + layout.char_width_px * t.col_start as f64;
        let right = layout.origin_x_px + layout.char_width_px * t.col_end as f64;
        let top = layout.origin_y_px + layout.line_height_px * t.line as f64;
        let bottom = top + layout.line_height_px;
        if x >= left && x < right && y >= top && y < bottom {
            return Some(i);
        }
        let dx = x - (left + right) / 2.0;
        let dy = y - (top + bottom) / 2.0;
        let d2 = dx * dx + dy * dy;
        if nearest.map_or(true, |(best, _)| d2 < best) {
            nearest = Some((d2, i));
        }
    }
    nearest
        .filter(|&(d2, _)| d2 <= radius * radius)
        .map(|(_, i)| i)
}

fn fixation_oracle() -> Verdict {
    let start = Instant::now();
    let lexer = LexerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for k in 0..20 {
        let cfg = GeneratorConfig {
            seed: 100 + k,
            bug_rate: 0.5,
            lines_per_snippet: (3, 9),
            ..GeneratorConfig::default()
        };
        let snippet = synth::gen_snippet(&cfg, k as usize, &lexer).map_err(|e| e.to_string())?;
        let layout = LayoutSpec {
            origin_x_px: rng.gen_range(0.0..80.0),
            origin_y_px: rng.gen_range(0.0..80.0),
            char_width_px: rng.gen_range(5.0..14.0),
            line_height_px: rng.gen_range(12.0..30.0),
            tab_width: 4,
        };
        let width = layout.char_width_px * (snippet.max_cols() + 10) as f64;
        let height = layout.line_height_px * (snippet.n_lines + 2) as f64;
        for j in 0..1000 {
            let (mut x, mut y) = (
                layout.origin_x_px + rng.gen_range(-0.2..1.2) * width,
                layout.origin_y_px + rng.gen_range(-0.2..1.2) * height,
            );
            // Every fourth fixation sits exactly on a grid line.
            if j % 4 == 0 {
                x = layout.origin_x_px
                    + layout.char_width_px * rng.gen_range(0..snippet.max_cols() + 2) as f64;
                y = layout.origin_y_px
                    + layout.line_height_px * rng.gen_range(0..snippet.n_lines + 1) as f64;
            }
            let radius = if j % 10 == 0 {
                0.0
            } else {
                rng.gen_range(0.0..60.0)
            };
            let fix = Fixation {
                t_ms: 0.0,
                x_px: x,
                y_px: y,
                dur_ms: 100.0,
            };
            let got = map_fixation(&fix, &layout, &snippet, radius);
            let want = brute_force_map(x, y, &snippet, &layout, radius);
            if got != want {
                return Err(format!(
                    "snippet {k}, fixation ({x}, {y}), radius {radius}: got {got:?}, oracle {want:?}"
                ));
            }
            checked += 1;
        }
    }
    within(start.elapsed(), 10, format!("{checked} fixations match"))
}

// 3-5. Imitation on the synthetic corpus.

struct Corpus {
    train_s: Vec<Snippet>,
    held_s: Vec<Snippet>,
    train_t: Vec<Trajectory>,
    held_t: Vec<Trajectory>,
}

fn corpus(bug_rate: f64, expert: impl Fn(&Snippet) -> Trajectory) -> Corpus {
    let cfg = GeneratorConfig {
        bug_rate,
        ..GeneratorConfig::default()
    };
    let lexer = LexerConfig::default();
    let snippets: Vec<Snippet> = (0..cfg.n_snippets)
        .map(|i| synth::gen_snippet(&cfg, i, &lexer).expect("generator"))
        .collect();
    let demos: Vec<Trajectory> = snippets.iter().map(expert).collect();
    let (train_s, held_s) = split_by_id(&snippets, |s| s.id.as_str());
    let (train_t, held_t) = split_by_id(&demos, |t| t.snippet_id.as_str());
    Corpus {
        train_s,
        held_s,
        train_t,
        held_t,
    }
}

fn fit_and_eval(c: &Corpus, config: &BcConfig) -> Result<Metrics, String> {
    let outcome = trainer::train(&c.train_t, &c.train_s, &DataConfig::default(), config)
        .map_err(|e| e.to_string())?;
    trainer::evaluate(&outcome.checkpoint, &c.held_t, &c.held_s).map_err(|e| e.to_string())
}

fn imitation_config(task_mode: TaskMode, w_aux: f64) -> BcConfig {
    BcConfig {
        w_att: 1.0,
        w_aux,
        epochs: 50,
        seed: 0,
        task_mode,
        ..BcConfig::default()
    }
}

fn linear_imitation() -> Verdict {
    let start = Instant::now();
    let c = corpus(0.0, |s| synth::linear_reader(s).expect("linear reader"));
    let m = fit_and_eval(&c, &imitation_config(TaskMode::None, 0.0))?;
    let detail = format!(
        "held-out action accuracy {:.3} (need >= 0.95)",
        m.action_accuracy
    );
    check(m.action_accuracy >= 0.95, detail).and_then(|d| within(start.elapsed(), 300, d))
}

fn skimmer_imitation() -> Verdict {
    let start = Instant::now();
    let salient = synth::default_salient(&GeneratorConfig::default().pool);
    let c = corpus(0.0, |s| {
        synth::keyword_skimmer(s, &salient).expect("skimmer")
    });
    // K+1 decisions per trajectory, each uniform over n+1 slots.
    let snippet_len: BTreeMap<&str, usize> =
        c.held_s.iter().map(|s| (s.id.as_str(), s.len())).collect();
    let (mut hits, mut decisions) = (0.0, 0.0);
    for t in &c.held_t {
        let k1 = (t.steps.len() + 1) as f64;
        hits += k1 / (snippet_len[t.snippet_id.as_str()] + 1) as f64;
        decisions += k1;
    }
    let chance = hits / decisions;
    let m = fit_and_eval(&c, &imitation_config(TaskMode::None, 0.0))?;
    let detail = format!(
        "held-out action accuracy {:.3} (need >= 0.80 and >= {:.3} = 5x chance)",
        m.action_accuracy,
        5.0 * chance
    );
    check(
        m.action_accuracy >= 0.80 && m.action_accuracy >= 5.0 * chance,
        detail,
    )
    .and_then(|d| within(start.elapsed(), 300, d))
}

fn auxiliary_task_effect() -> Verdict {
    let c = corpus(1.0, |s| synth::bug_seeker(s, 2).expect("bug seeker"));
    let chance = c.held_s.iter().map(|s| 1.0 / s.len() as f64).sum::<f64>() / c.held_s.len() as f64;
    let with_aux = fit_and_eval(&c, &imitation_config(TaskMode::Localize, 1.0))?;
    let without = fit_and_eval(&c, &imitation_config(TaskMode::Localize, 0.0))?;
    let (a, b) = (
        with_aux.task_accuracy.unwrap_or(f64::NAN),
        without.task_accuracy.unwrap_or(f64::NAN),
    );
    check(
        a >= 0.80 && b <= 2.0 * chance,
        format!(
            "localization accuracy {a:.3} with w_aux=1 (need >= 0.80), {b:.3} with w_aux=0 (need <= {:.3} = 2x chance)",
            2.0 * chance
        ),
    )
}

// 6. Augmentation contract.

fn augmentation_contract() -> Verdict {
    let lexer = LexerConfig::default();
    let sigma = 1.0;
    let reach = (2.0 * sigma as f64).ceil() as usize;
    let cfg = GeneratorConfig {
        bug_rate: 1.0,
        ..GeneratorConfig::default()
    };
    let mut families = 0;
    for i in 0..30 {
        let snippet = synth::gen_snippet(&cfg, i, &lexer).map_err(|e| e.to_string())?;
        let salient = synth::default_salient(&cfg.pool);
        let experts = [
            synth::linear_reader(&snippet),
            synth::keyword_skimmer(&snippet, &salient),
            synth::bug_seeker(&snippet, 2),
        ];
        for (e, traj) in experts.into_iter().enumerate() {
            let traj = traj.map_err(|e| e.to_string())?;
            let seed = (i * 3 + e) as u64;
            let out = augment(&traj, &snippet, sigma, 4, seed).map_err(|e| e.to_string())?;
            let again = augment(&traj, &snippet, sigma, 4, seed).map_err(|e| e.to_string())?;
            if out.len() != 5 {
                return Err(format!("{} trajectories instead of 5", out.len()));
            }
            let bitwise = out.iter().zip(&again).all(|(a, b)| {
                a.steps == b.steps && a.weight.to_bits() == b.weight.to_bits() && a.task == b.task
            });
            if !bitwise {
                return Err(format!("snippet {i}: repeated call differs"));
            }
            let total: f64 = out.iter().map(|t| t.weight).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(format!("snippet {i}: weights sum to {total}"));
            }
            if out[0].steps != traj.steps || out[0].weight != 0.5 {
                return Err(format!(
                    "snippet {i}: original not kept first with weight 0.5"
                ));
            }
            let copies = perturb(&traj, &snippet, sigma, 4, seed).map_err(|e| e.to_string())?;
            for (copy, t) in copies.iter().zip(&out[1..]) {
                if copy.raw_steps.len() != traj.steps.len()
                    || t.steps != merge_repeats(copy.raw_steps.clone())
                {
                    return Err(format!("snippet {i}: copy is not the merged perturbation"));
                }
                for (&orig, &new) in traj.steps.iter().zip(&copy.raw_steps) {
                    let same_line = snippet.tokens[orig].line == snippet.tokens[new].line;
                    if orig != new && !(same_line && orig.abs_diff(new) <= reach) {
                        return Err(format!("snippet {i}: step {orig} moved to {new}"));
                    }
                }
            }
            families += 1;
        }
    }
    Ok(format!(
        "{families} families of 5, weights sum to 1, reproducible, local perturbations"
    ))
}

// 7. End-to-end determinism through the binary.

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gazebc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "gazebc {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let common = ["--seed", "7"];
    let synth_args = [
        "synth",
        "--n-snippets",
        "25",
        "--expert",
        "skim",
        "--emit-fixations",
        "true",
        "--corpus-dir",
        &p("corpus"),
        "--labels",
        &p("labels.csv"),
        "--trajectories",
        &p("demos.jsonl"),
        "--gaze-dir",
        &p("gaze"),
        "--layout",
        &p("layout.json"),
    ];
    run_cli(&[&synth_args[..], &common[..]].concat())?;
    run_cli(&[
        "ingest",
        "--corpus-dir",
        &p("corpus"),
        "--gaze-dir",
        &p("gaze"),
        "--layout",
        &p("layout.json"),
        "--trajectories",
        &p("ingested.jsonl"),
        "--seed",
        "7",
    ])?;
    run_cli(&[
        "train",
        "--corpus-dir",
        &p("corpus"),
        "--labels",
        &p("labels.csv"),
        "--trajectories",
        &p("ingested.jsonl"),
        "--checkpoint",
        &p("model.json"),
        "--metrics-out",
        &p("metrics.jsonl"),
        "--epochs",
        "3",
        "--d-hidden",
        "12",
        "--seed",
        "7",
    ])?;
    [
        "demos.jsonl",
        "ingested.jsonl",
        "model.json",
        "metrics.jsonl",
    ]
    .iter()
    .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
    .collect()
}

fn end_to_end_determinism() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let names = ["demos", "trajectories", "checkpoint", "metrics"];
    for ((x, y), name) in first.iter().zip(&second).zip(names) {
        if x != y {
            return Err(format!("{name} files differ between runs"));
        }
        if x.is_empty() {
            return Err(format!("{name} file is empty"));
        }
    }
    Ok("trajectories, checkpoint and metrics byte-identical across two runs".into())
}

// 8. Closed-form loss values.

fn analytic_losses() -> Verdict {
    let half = bc_loss(&[vec![0.5, 0.5]], &[0], None, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let quarter =
        bc_loss(&[vec![0.25; 4]], &[3], None, 1.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let (e2, e4) = ((half - 2f64.ln()).abs(), (quarter - 4f64.ln()).abs());
    check(
        e2 <= 1e-12 && e4 <= 1e-12,
        format!("|loss - ln 2| = {e2:.1e}, |loss - ln 4| = {e4:.1e}"),
    )
}

fn main() {
    // Keeps `cargo test -- <filter>` from running the whole suite.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }

    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("gradient correctness", gradient_correctness),
        ("fixation-mapping oracle", fixation_oracle),
        ("linear-reader imitation", linear_imitation),
        ("keyword-skimmer imitation", skimmer_imitation),
        ("auxiliary-task effect", auxiliary_task_effect),
        ("augmentation contract", augmentation_contract),
        ("end-to-end determinism", end_to_end_determinism),
        ("analytic loss values", analytic_losses),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
