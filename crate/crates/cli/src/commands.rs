use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use gazebc::code_model::{
    apply_labels, build_vocab, default_keywords, load_corpus, read_labels, write_labels,
    Featurizer, LexerConfig, Snippet, TokenKind,
};
use gazebc::gaze::{
    augment as augment_one, build_trajectory, read_fixations, read_trajectories, write_fixations,
    write_trajectories, LayoutSpec, Trajectory, DEFAULT_MIN_DUR_MS,
};
use gazebc::policy::{
    check_gradients, rollout as greedy, task_target, Example, PolicyParams, TaskMode,
};
use gazebc::synth::{self, GeneratorConfig};
use gazebc::trainer::{self, Checkpoint, DataConfig};
use gazebc::Error;
use serde::Serialize;

use crate::config::{
    input_dir, input_file, optional_input, optional_output, output_dir, output_file, RunConfig,
};
use crate::Failure;

type Outcome = Result<(), Failure>;

const DEFAULT_RADIUS_PX: f64 = 20.0;
const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Parameters for the gradient check are drawn from `[-1, 1]`. At the much
/// smaller initialisation scale many gate gradients are ~1e-9, where
/// central-difference round-off alone exceeds the tolerance.
const GRADCHECK_SCALE: f64 = 1.0;

fn layout(run: &RunConfig) -> Result<LayoutSpec, Failure> {
    match optional_input(&run.layout, "layout")? {
        Some(path) => Ok(LayoutSpec::load(&path)?),
        None => Ok(LayoutSpec::default()),
    }
}

fn lexer(layout: &LayoutSpec) -> LexerConfig {
    LexerConfig {
        keywords: default_keywords(),
        tab_width: layout.tab_width,
    }
}

/// Loads the corpus and attaches labels when a labels file is configured.
fn corpus(run: &RunConfig, layout: &LayoutSpec) -> Result<Vec<Snippet>, Failure> {
    let dir = input_dir(&run.corpus_dir, "corpus_dir")?;
    let labels = optional_input(&run.labels, "labels")?;
    let mut snippets = load_corpus(&dir, &lexer(layout))?;
    if let Some(path) = labels {
        let origin = path.display().to_string();
        apply_labels(&mut snippets, &read_labels(&path)?, &origin)?;
    }
    Ok(snippets)
}

fn select_split(run: &RunConfig, default: &str) -> Result<fn(&str) -> bool, Failure> {
    match run.split.as_deref().unwrap_or(default) {
        "train" => Ok(|id| !trainer::is_held_out(id)),
        "held_out" => Ok(trainer::is_held_out),
        "all" => Ok(|_| true),
        other => Err(Failure::usage(format!("split: unknown split `{other}`"))),
    }
}

/// Attributes snippet-resolution failures to the trajectories file.
fn in_trajectories(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        Error::UnknownSnippet { .. } | Error::EmptyDataset(_) => {
            Failure::from(e).context(&format!("{}: snippet_id", path.display()))
        }
        other if other.is_data_error() => Failure::from(other).context(&path.display().to_string()),
        other => other.into(),
    }
}

fn print_json(value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string(value).map_err(|e| Failure::usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Outcome {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).map_err(|e| Failure::usage(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct TokenRow<'a> {
    snippet_id: &'a str,
    index: usize,
    text: &'a str,
    kind: TokenKind,
    line: usize,
    col_start: usize,
    col_end: usize,
}

pub fn tokenize(run: &RunConfig) -> Outcome {
    let layout = layout(run)?;
    let out = optional_output(&run.out, "out")?;
    let snippets = corpus(run, &layout)?;
    let rows: Vec<TokenRow> = snippets
        .iter()
        .flat_map(|s| {
            s.tokens.iter().enumerate().map(|(index, t)| TokenRow {
                snippet_id: &s.id,
                index,
                text: &t.text,
                kind: t.kind,
                line: t.line,
                col_start: t.col_start,
                col_end: t.col_end,
            })
        })
        .collect();
    match out {
        Some(path) => write_jsonl(&path, &rows),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for row in &rows {
                let line = serde_json::to_string(row).map_err(|e| Failure::usage(e.to_string()))?;
                match writeln!(lock, "{line}") {
                    Ok(()) => {}
                    // The reader went away, e.g. `| head`.
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                    Err(e) => return Err(Failure::usage(e.to_string())),
                }
            }
            Ok(())
        }
    }
}

/// Snippet id of a fixation file: the stem up to an optional `@reader` suffix.
fn gaze_snippet_id(path: &Path) -> Option<&str> {
    let stem = path.file_stem()?.to_str()?;
    Some(stem.split('@').next().unwrap_or(stem))
}

pub fn ingest(run: &RunConfig) -> Outcome {
    let layout = layout(run)?;
    let gaze_dir = input_dir(&run.gaze_dir, "gaze_dir")?;
    let out = output_file(&run.trajectories, "trajectories")?;
    let snippets = corpus(run, &layout)?;
    let min_dur = run.min_dur_ms.unwrap_or(DEFAULT_MIN_DUR_MS);
    let radius = run.radius_px.unwrap_or(DEFAULT_RADIUS_PX);
    if !(radius >= 0.0) {
        return Err(Failure::usage(format!(
            "radius_px must be non-negative, got {radius}"
        )));
    }

    let mut files: Vec<_> = fs::read_dir(&gaze_dir)
        .map_err(|e| Error::Io {
            path: gaze_dir.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();

    let mut trajectories = Vec::with_capacity(files.len());
    for path in &files {
        let origin = path.display().to_string();
        let id = gaze_snippet_id(path).ok_or_else(|| {
            Failure::from(Error::Param("unreadable file name".into())).context(&origin)
        })?;
        let snippet = snippets
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Failure {
                code: 2,
                message: format!("{origin}: snippet_id: no corpus snippet `{id}`"),
            })?;
        let fixations = read_fixations(path)?;
        let traj = build_trajectory(&fixations, &layout, snippet, min_dur, radius)
            .map_err(|e| Failure::from(e).context(&origin))?;
        trajectories.push(traj);
    }
    write_trajectories(&out, &trajectories)?;
    Ok(())
}

pub fn augment(run: &RunConfig) -> Outcome {
    let layout = layout(run)?;
    let input = input_file(&run.trajectories, "trajectories")?;
    let out = output_file(&run.out, "out")?;
    let snippets = corpus(run, &layout)?;
    let sigma = run.sigma_tokens.unwrap_or(1.0);
    let m = run.m.unwrap_or(4);
    let seed = run.seed();

    let mut expanded = Vec::new();
    for (i, traj) in read_trajectories(&input)?.iter().enumerate() {
        let snippet = snippets
            .iter()
            .find(|s| s.id == traj.snippet_id)
            .ok_or_else(|| Failure {
                code: 2,
                message: format!(
                    "{}: snippet_id: no corpus snippet `{}`",
                    input.display(),
                    traj.snippet_id
                ),
            })?;
        expanded.extend(augment_one(
            traj,
            snippet,
            sigma,
            m,
            seed.wrapping_add(i as u64),
        )?);
    }
    write_trajectories(&out, &expanded)?;
    Ok(())
}

pub fn synth(run: &RunConfig) -> Outcome {
    let expert = run.expert.as_deref().unwrap_or("linear");
    if !matches!(expert, "linear" | "skim" | "bug") {
        return Err(Failure::usage(format!("expert: unknown expert `{expert}`")));
    }
    let defaults = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        seed: run.seed(),
        n_snippets: run.n_snippets.unwrap_or(defaults.n_snippets),
        n_classes: run.n_classes.unwrap_or(defaults.n_classes),
        lines_per_snippet: (
            run.lines_min.unwrap_or(defaults.lines_per_snippet.0),
            run.lines_max.unwrap_or(defaults.lines_per_snippet.1),
        ),
        bug_rate: run
            .bug_rate
            .unwrap_or(if expert == "bug" { 1.0 } else { 0.0 }),
        pool: defaults.pool,
    };
    cfg.validate().map_err(Failure::from)?;
    if expert == "bug" && cfg.bug_rate < 1.0 {
        return Err(Failure::usage(
            "expert `bug` needs bug_rate 1 so every snippet has a bug",
        ));
    }
    let corpus_dir = output_dir(&run.corpus_dir, "corpus_dir")?;
    let labels_path = output_file(&run.labels, "labels")?;
    let demos_path = output_file(&run.trajectories, "trajectories")?;
    let emit = run.emit_fixations.unwrap_or(false);
    let gaze_dir = if emit {
        Some(output_dir(&run.gaze_dir, "gaze_dir")?)
    } else {
        None
    };
    let layout = match &run.layout {
        Some(path) if path.is_file() => LayoutSpec::load(path)?,
        Some(path) => {
            let path = output_file(&Some(path.clone()), "layout")?;
            let layout = LayoutSpec::default();
            layout.save(&path)?;
            layout
        }
        None => LayoutSpec::default(),
    };
    let lexer = lexer(&layout);
    let salient = synth::default_salient(&cfg.pool);

    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e| Failure::from(Error::Io { path, source: e })
    };
    fs::create_dir_all(&corpus_dir).map_err(io(&corpus_dir))?;
    if let Some(dir) = &gaze_dir {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }

    let mut labels = BTreeMap::new();
    let mut demos = Vec::with_capacity(cfg.n_snippets);
    for index in 0..cfg.n_snippets {
        let generated = synth::generate(&cfg, index, &lexer)?;
        let snippet = &generated.snippet;
        let file = corpus_dir.join(format!("{}.src", snippet.id));
        fs::write(&file, &generated.source).map_err(io(&file))?;
        if let Some(label) = snippet.task {
            labels.insert(snippet.id.clone(), label);
        }
        let demo = match expert {
            "linear" => synth::linear_reader(snippet)?,
            "skim" => synth::keyword_skimmer(snippet, &salient)?,
            _ => synth::bug_seeker(snippet, run.window.unwrap_or(2))?,
        };
        if let Some(dir) = &gaze_dir {
            let fixations = synth::synthetic_fixations(&demo, snippet, &layout);
            write_fixations(&dir.join(format!("{}.csv", snippet.id)), &fixations)?;
        }
        demos.push(demo);
    }
    write_labels(&labels_path, &labels)?;
    write_trajectories(&demos_path, &demos)?;
    Ok(())
}

fn in_split(trajectories: Vec<Trajectory>, keep: fn(&str) -> bool) -> Vec<Trajectory> {
    trajectories
        .into_iter()
        .filter(|t| keep(&t.snippet_id))
        .collect()
}

#[derive(Serialize)]
struct TrainSummary {
    trajectories: usize,
    epochs: usize,
    final_epoch: Option<trainer::EpochMetrics>,
}

pub fn train(run: &RunConfig) -> Outcome {
    let config = run.bc_config()?;
    let data_config = DataConfig {
        feature_spec: run.feature_spec()?,
        vocab_min_count: run.vocab_min_count.unwrap_or(1),
    };
    let layout = layout(run)?;
    let traj_path = input_file(&run.trajectories, "trajectories")?;
    let checkpoint_path = output_file(&run.checkpoint, "checkpoint")?;
    let metrics_path = optional_output(&run.metrics_out, "metrics_out")?;
    let keep = select_split(run, "train")?;

    let snippets: Vec<Snippet> = corpus(run, &layout)?
        .into_iter()
        .filter(|s| keep(&s.id))
        .collect();
    let trajectories = in_split(read_trajectories(&traj_path)?, keep);
    let outcome = trainer::train(&trajectories, &snippets, &data_config, &config)
        .map_err(in_trajectories(&traj_path))?;

    outcome.checkpoint.save(&checkpoint_path)?;
    if let Some(path) = metrics_path {
        write_jsonl(&path, &outcome.log)?;
    }
    print_json(&TrainSummary {
        trajectories: trajectories.len(),
        epochs: config.epochs,
        final_epoch: outcome.log.last().copied(),
    })
}

#[derive(Serialize)]
struct EvalReport {
    split: String,
    trajectories: usize,
    #[serde(flatten)]
    metrics: trainer::Metrics,
}

pub fn eval(run: &RunConfig) -> Outcome {
    let layout = layout(run)?;
    let checkpoint_path = input_file(&run.checkpoint, "checkpoint")?;
    let traj_path = input_file(&run.trajectories, "trajectories")?;
    let keep = select_split(run, "held_out")?;
    let checkpoint = Checkpoint::load(&checkpoint_path)?;
    let snippets = corpus(run, &layout)?;
    let trajectories = in_split(read_trajectories(&traj_path)?, keep);
    let metrics = trainer::evaluate(&checkpoint, &trajectories, &snippets)
        .map_err(in_trajectories(&traj_path))?;
    print_json(&EvalReport {
        split: run.split.clone().unwrap_or_else(|| "held_out".into()),
        trajectories: trajectories.len(),
        metrics,
    })
}

#[derive(Serialize)]
struct RolloutReport<'a> {
    snippet_id: &'a str,
    steps: Vec<usize>,
    stopped: bool,
    task_output: Option<usize>,
    task_dist: Option<Vec<f64>>,
}

pub fn rollout(run: &RunConfig) -> Outcome {
    let layout = layout(run)?;
    let checkpoint_path = input_file(&run.checkpoint, "checkpoint")?;
    let id = run
        .snippet
        .clone()
        .ok_or_else(|| Failure::usage("missing required key `snippet`"))?;
    let max_steps = run.max_steps.unwrap_or(256);
    if max_steps == 0 {
        return Err(Failure::usage("max_steps must be at least 1"));
    }
    let checkpoint = Checkpoint::load(&checkpoint_path)?;
    let snippets = corpus(run, &layout)?;
    let mut snippet = snippets
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Failure::usage(format!("snippet: no corpus snippet `{id}`")))?;
    if snippet.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("snippet `{id}` has no tokens"),
        });
    }
    checkpoint.vocab.assign(&mut snippet);
    let features = checkpoint.featurizer()?.featurize(&snippet)?;
    let r = greedy(&checkpoint.params, &features, max_steps)?;
    print_json(&RolloutReport {
        snippet_id: &id,
        steps: r.steps,
        stopped: r.stopped,
        task_output: r.task_output,
        task_dist: r.task_dist,
    })
}

#[derive(Serialize)]
struct GradCheckSummary {
    max_rel_error: f64,
    worst_parameter: String,
    worst_entry: usize,
    worst_analytic: f64,
    worst_numeric: f64,
    entries_checked: usize,
    tolerance: f64,
    passed: bool,
}

/// Checks the full policy on synthetic snippet 0 of the configured seed,
/// with a keyword-skimming trajectory and the configured task head.
pub fn gradcheck(run: &RunConfig) -> Outcome {
    let config = run.bc_config()?;
    let eps = run.eps.unwrap_or(1e-5);
    let gen = GeneratorConfig {
        seed: run.seed(),
        n_snippets: 1,
        bug_rate: if config.task_mode == TaskMode::Localize {
            1.0
        } else {
            0.0
        },
        n_classes: match config.task_mode {
            TaskMode::Classify { n_classes } => n_classes.max(2),
            _ => 3,
        },
        ..GeneratorConfig::default()
    };
    let layout = LayoutSpec::default();
    let generated = synth::generate(&gen, 0, &lexer(&layout)).map_err(Failure::from)?;
    let mut snippet = generated.snippet;
    let traj = synth::keyword_skimmer(&snippet, &synth::default_salient(&gen.pool))?;
    let label = match config.task_mode {
        TaskMode::Classify { .. } => Some(gazebc::code_model::TaskLabel::class(generated.class)),
        _ => snippet.task,
    };
    let target = task_target(config.task_mode, label, snippet.len())?;

    let vocab = build_vocab(std::slice::from_ref(&snippet), 1);
    vocab.assign(&mut snippet);
    let features = Featurizer::new(&run.feature_spec()?, &vocab)?.featurize(&snippet)?;
    let params = PolicyParams::uniform(config.dims(features.cols()), config.seed, GRADCHECK_SCALE);
    let example = Example {
        features: &features,
        steps: &traj.steps,
        task_target: target,
        weight: 1.0,
    };
    let report = check_gradients(&params, &example, config.w_att, config.w_aux, eps)?;
    let slots = params.slots();
    let passed = report.max_rel_error <= GRADCHECK_TOLERANCE;
    print_json(&GradCheckSummary {
        max_rel_error: report.max_rel_error,
        worst_parameter: slots[report.worst.0].name().to_string(),
        worst_entry: report.worst.1,
        worst_analytic: report.worst_values.0,
        worst_numeric: report.worst_values.1,
        entries_checked: report.entries_checked,
        tolerance: GRADCHECK_TOLERANCE,
        passed,
    })?;
    if passed {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "gradient check failed: max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )))
    }
}
