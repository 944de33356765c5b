//! Behavioral-cloning training loop, evaluation and checkpoints.
//!
//! Trajectories are processed one at a time; a minibatch sums the losses
//! and gradients of its members and takes one Adam step.

mod checkpoint;

pub use checkpoint::{Checkpoint, FLOAT_ENCODING, FORMAT_VERSION};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, argmax, softmax, AdamConfig, AdamState, Graph, Tensor};
use crate::code_model::{build_vocab, fnv1a64, FeatureSpec, Featurizer, Snippet, Vocab};
use crate::error::{Error, Result};
use crate::gaze::Trajectory;
use crate::policy::{
    bc_loss_graph, forward_teacher_graph, loss_and_grad, task_target, BcConfig, Example,
    PolicyParams, TaskMode,
};

/// Held-out membership: one id in five on average, decided by the id's
/// FNV-1a hash so the split never depends on corpus order.
pub fn is_held_out(snippet_id: &str) -> bool {
    fnv1a64(snippet_id.as_bytes()) % 5 == 0
}

/// Splits items into `(train, held_out)` by their snippet id.
pub fn split_by_id<T: Clone>(items: &[T], id: impl Fn(&T) -> &str) -> (Vec<T>, Vec<T>) {
    items.iter().cloned().partition(|t| !is_held_out(id(t)))
}

/// How snippets become feature matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub feature_spec: FeatureSpec,
    /// Token texts rarer than this in the training snippets map to UNK.
    pub vocab_min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            feature_spec: FeatureSpec::OneHotPos,
            vocab_min_count: 1,
        }
    }
}

#[derive(Clone, Debug)]
struct Item {
    snippet: usize,
    steps: Vec<usize>,
    task_target: Option<usize>,
    weight: f64,
}

/// Trajectories resolved against featurized snippets.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Vec<Tensor>,
    items: Vec<Item>,
}

impl Dataset {
    /// Resolves every trajectory to its snippet, checks steps and task
    /// labels, and featurizes each referenced snippet once. A trajectory
    /// without its own label uses the snippet's.
    pub fn build(
        trajectories: &[Trajectory],
        snippets: &[Snippet],
        vocab: &Vocab,
        featurizer: &Featurizer,
        mode: TaskMode,
    ) -> Result<Self> {
        let by_id: HashMap<&str, usize> = snippets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut feature_slot: HashMap<usize, usize> = HashMap::new();
        let mut features = Vec::new();
        let mut items = Vec::with_capacity(trajectories.len());
        for traj in trajectories {
            let &si = by_id
                .get(traj.snippet_id.as_str())
                .ok_or_else(|| Error::UnknownSnippet {
                    id: traj.snippet_id.clone(),
                })?;
            let snippet = &snippets[si];
            traj.validate(snippet)?;
            if !(traj.weight >= 0.0 && traj.weight.is_finite()) {
                return Err(Error::param(format!(
                    "trajectory for `{}` has invalid weight {}",
                    traj.snippet_id, traj.weight
                )));
            }
            let target = task_target(mode, traj.task.or(snippet.task), snippet.len())
                .map_err(|e| Error::param(format!("snippet `{}`: {e}", snippet.id)))?;
            let slot = match feature_slot.get(&si) {
                Some(&slot) => slot,
                None => {
                    let mut s = snippet.clone();
                    vocab.assign(&mut s);
                    features.push(featurizer.featurize(&s)?);
                    feature_slot.insert(si, features.len() - 1);
                    features.len() - 1
                }
            };
            items.push(Item {
                snippet: slot,
                steps: traj.steps.clone(),
                task_target: target,
                weight: traj.weight,
            });
        }
        Ok(Dataset { features, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        let item = &self.items[i];
        Example {
            features: &self.features[item.snippet],
            steps: &item.steps,
            task_target: item.task_target,
            weight: item.weight,
        }
    }
}

/// Summed loss and gradients of a set of examples.
pub fn batch_loss_and_grad(
    params: &PolicyParams,
    data: &Dataset,
    members: &[usize],
    w_att: f64,
    w_aux: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut total = 0.0;
    let mut grads: Vec<Tensor> = params
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    for &i in members {
        let (loss, g) = loss_and_grad(params, &data.example(i), w_att, w_aux)?;
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a += b;
            }
        }
    }
    Ok((total, grads))
}

/// Aggregate quality of a policy on a set of trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of teacher-forced targets, stop included, whose argmax
    /// matches the expert.
    pub action_accuracy: f64,
    /// Fraction of trajectories whose task argmax matches the label;
    /// `None` without a task head.
    pub task_accuracy: Option<f64>,
    /// `sum(bc_loss) / sum(weight)`.
    pub mean_loss: f64,
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub action_accuracy: f64,
    pub task_accuracy: Option<f64>,
}

/// Teacher-forced metrics of `params` on every example of `data`.
pub fn evaluate_dataset(
    params: &PolicyParams,
    data: &Dataset,
    w_att: f64,
    w_aux: f64,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mode = params.dims().task;
    let (mut hits, mut targets) = (0usize, 0usize);
    let mut task_hits = 0usize;
    let (mut loss_sum, mut weight_sum) = (0.0, 0.0);
    for i in 0..data.len() {
        let ex = data.example(i);
        let mut g = Graph::new();
        let b = params.bind(&mut g);
        let out = forward_teacher_graph(&mut g, &b, ex.features, ex.steps, mode)?;
        for (&logits, &target) in out.action_logits.iter().zip(&out.targets) {
            hits += usize::from(argmax(g.value(logits).data()) == target);
            targets += 1;
        }
        if let (Some(logits), Some(target)) = (out.task_logits, ex.task_target) {
            task_hits += usize::from(argmax(&softmax(g.value(logits).data())) == target);
        }
        let loss = bc_loss_graph(&mut g, &out, ex.task_target, w_att, w_aux, ex.weight)?;
        loss_sum += g.value(loss).data()[0];
        weight_sum += ex.weight;
    }
    Ok(Metrics {
        action_accuracy: hits as f64 / targets as f64,
        task_accuracy: match mode {
            TaskMode::None => None,
            _ => Some(task_hits as f64 / data.len() as f64),
        },
        mean_loss: if weight_sum > 0.0 {
            loss_sum / weight_sum
        } else {
            0.0
        },
    })
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Training-set metrics after each epoch.
    pub log: Vec<EpochMetrics>,
}

/// Trains a policy on `trajectories` over `snippets`, which should be the
/// training split only: the vocabulary is built from them.
///
/// Parameters are initialised from `config.seed`; the per-epoch shuffle
/// uses a separate stream of the same seed.
pub fn train(
    trajectories: &[Trajectory],
    snippets: &[Snippet],
    data_config: &DataConfig,
    config: &BcConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset("no training trajectories".into()));
    }
    let vocab = build_vocab(snippets, data_config.vocab_min_count);
    let featurizer = Featurizer::new(&data_config.feature_spec, &vocab)?;
    let data = Dataset::build(
        trajectories,
        snippets,
        &vocab,
        &featurizer,
        config.task_mode,
    )?;

    let mut params = PolicyParams::init(config.dims(featurizer.dim()), config.seed);
    let adam = AdamConfig {
        lr: config.lr,
        clip: config.grad_clip,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch) {
            let (_, mut grads) =
                batch_loss_and_grad(&params, &data, batch, config.w_att, config.w_aux)?;
            adam_step(params.tensors_mut(), &mut grads, &mut state)?;
        }
        let m = evaluate_dataset(&params, &data, config.w_att, config.w_aux)?;
        log.push(EpochMetrics {
            epoch,
            mean_loss: m.mean_loss,
            action_accuracy: m.action_accuracy,
            task_accuracy: m.task_accuracy,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            vocab,
            feature_spec: data_config.feature_spec.clone(),
            params,
        },
        log,
    })
}

/// Teacher-forced metrics of a checkpoint on `trajectories`.
pub fn evaluate(
    checkpoint: &Checkpoint,
    trajectories: &[Trajectory],
    snippets: &[Snippet],
) -> Result<Metrics> {
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let featurizer = checkpoint.featurizer()?;
    let c = &checkpoint.config;
    let data = Dataset::build(
        trajectories,
        snippets,
        &checkpoint.vocab,
        &featurizer,
        c.task_mode,
    )?;
    evaluate_dataset(&checkpoint.params, &data, c.w_att, c.w_aux)
}
