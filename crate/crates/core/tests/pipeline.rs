use gazebc::code_model::LexerConfig;
use gazebc::gaze::{build_trajectory, LayoutSpec, DEFAULT_MIN_DUR_MS};
use gazebc::policy::{rollout, BcConfig, TaskMode};
use gazebc::synth::{self, GeneratorConfig};
use gazebc::trainer::{self, Checkpoint, DataConfig};

#[test]
fn synthetic_fixations_recover_the_expert_trajectory() {
    let cfg = GeneratorConfig {
        bug_rate: 1.0,
        ..GeneratorConfig::default()
    };
    let layout = LayoutSpec::default();
    let salient = synth::default_salient(&cfg.pool);
    for i in 0..20 {
        let snippet = synth::gen_snippet(&cfg, i, &LexerConfig::default()).unwrap();
        for demo in [
            synth::linear_reader(&snippet).unwrap(),
            synth::keyword_skimmer(&snippet, &salient).unwrap(),
            synth::bug_seeker(&snippet, 2).unwrap(),
        ] {
            let fixations = synth::synthetic_fixations(&demo, &snippet, &layout);
            let rebuilt =
                build_trajectory(&fixations, &layout, &snippet, DEFAULT_MIN_DUR_MS, 0.0).unwrap();
            assert_eq!(rebuilt, demo);
        }
    }
}

#[test]
fn trained_checkpoint_round_trips_and_rolls_out() {
    let gen = GeneratorConfig::default();
    let lexer = LexerConfig::default();
    let snippets: Vec<_> = (0..12)
        .map(|i| synth::gen_snippet(&gen, i, &lexer).unwrap())
        .collect();
    let demos: Vec<_> = snippets
        .iter()
        .map(|s| synth::linear_reader(s).unwrap())
        .collect();
    let config = BcConfig {
        d_emb: 6,
        d_hidden: 6,
        d_attn: 6,
        epochs: 3,
        w_aux: 0.0,
        task_mode: TaskMode::None,
        ..BcConfig::default()
    };
    let out = trainer::train(&demos, &snippets, &DataConfig::default(), &config).unwrap();
    assert_eq!(out.log.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), out.checkpoint.to_json().unwrap());

    let before = trainer::evaluate(&out.checkpoint, &demos, &snippets).unwrap();
    let after = trainer::evaluate(&loaded, &demos, &snippets).unwrap();
    assert_eq!(before, after);

    let mut snippet = snippets[0].clone();
    loaded.vocab.assign(&mut snippet);
    let features = loaded.featurizer().unwrap().featurize(&snippet).unwrap();
    let r = rollout(&loaded.params, &features, 10).unwrap();
    assert!(r.steps.len() <= 10);
    assert!(r.steps.iter().all(|&s| s < snippet.len()));
    assert!(r.task_output.is_none());
}
