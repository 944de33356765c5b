//! Pointer-network policy and the behavioral-cloning loss.

mod network;
mod params;

pub use network::{
    bc_loss, bc_loss_graph, encode_graph, forward_teacher_graph, task_target, Encoded, TeacherGraph,
};
pub use params::{BcConfig, Bound, PolicyDims, PolicyParams, Slot, TaskMode, INIT_SCALE};

use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, grad_check, softmax, GradCheckReport, Graph, Tensor};
use crate::error::{Error, Result};

/// Encoder states `(n, d_hidden)` and the final state `(1, d_hidden)`.
pub fn encode(params: &PolicyParams, features: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let enc = encode_graph(&mut g, &b, features)?;
    Ok((
        g.value(enc.states).clone(),
        g.value(enc.final_state).clone(),
    ))
}

/// Action distribution over `n` tokens plus stop for decoder state `d`
/// against encoder states `states`.
pub fn decode_step(params: &PolicyParams, d: &Tensor, states: &Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let d = g.leaf(d.clone());
    let e = g.leaf(states.clone());
    let w1 = b.var(Slot::AttnW1)?;
    let token_keys = g.matmul(e, w1)?;
    let stop = g.matmul(b.var(Slot::StopKey)?, w1)?;
    let keys = g.concat_rows(&[token_keys, stop])?;
    let q = g.matmul(d, b.var(Slot::AttnW2)?)?;
    let pre = g.add(keys, q)?;
    let pre = g.add(pre, b.var(Slot::AttnB)?)?;
    let act = g.tanh(pre)?;
    let logits = g.matmul(act, b.var(Slot::AttnV)?)?;
    Ok(softmax(g.value(logits).data()))
}

/// Distributions produced by one teacher-forced pass.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherOutput {
    /// One distribution over `n + 1` slots per target.
    pub action_dists: Vec<Vec<f64>>,
    /// `steps` followed by the stop slot `n`.
    pub targets: Vec<usize>,
    pub task_dist: Option<Vec<f64>>,
}

pub fn forward_teacher(
    params: &PolicyParams,
    features: &Tensor,
    steps: &[usize],
) -> Result<TeacherOutput> {
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let out = forward_teacher_graph(&mut g, &b, features, steps, params.dims().task)?;
    Ok(TeacherOutput {
        action_dists: out
            .action_logits
            .iter()
            .map(|&l| softmax(g.value(l).data()))
            .collect(),
        targets: out.targets,
        task_dist: out.task_logits.map(|l| softmax(g.value(l).data())),
    })
}

/// One weighted training example in model terms.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub features: &'a Tensor,
    pub steps: &'a [usize],
    /// Task target already checked against the task mode.
    pub task_target: Option<usize>,
    pub weight: f64,
}

/// Loss of one example and its gradient with respect to every parameter
/// tensor, in [`PolicyParams::tensors`] order.
pub fn loss_and_grad(
    params: &PolicyParams,
    example: &Example<'_>,
    w_att: f64,
    w_aux: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let out = forward_teacher_graph(
        &mut g,
        &b,
        example.features,
        example.steps,
        params.dims().task,
    )?;
    let loss = bc_loss_graph(
        &mut g,
        &out,
        example.task_target,
        w_att,
        w_aux,
        example.weight,
    )?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss)?;
    Ok((value, b.vars().iter().map(|&v| grads.take(v)).collect()))
}

/// Finite-difference check of the full loss gradient of one example.
pub fn check_gradients(
    params: &PolicyParams,
    example: &Example<'_>,
    w_att: f64,
    w_aux: f64,
    eps: f64,
) -> Result<GradCheckReport> {
    let slots = params.slots().to_vec();
    let mode = params.dims().task;
    grad_check(
        |g, vars| {
            let b = Bound::new(slots.clone(), vars.to_vec());
            let out = forward_teacher_graph(g, &b, example.features, example.steps, mode)?;
            bc_loss_graph(g, &out, example.task_target, w_att, w_aux, example.weight)
        },
        params.tensors(),
        eps,
    )
}

/// Greedy decoding result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Emitted token indices, without the stop slot.
    pub steps: Vec<usize>,
    /// Whether decoding ended on the stop slot rather than `max_steps`.
    pub stopped: bool,
    /// Argmax of the task distribution, if the policy has a task head.
    pub task_output: Option<usize>,
    pub task_dist: Option<Vec<f64>>,
}

/// Greedy rollout: pick the most likely slot at each step, lowest index
/// on ties, feed the chosen token back, stop on the stop slot or after
/// `max_steps` tokens. The task head reads the state after the last
/// emitted token was consumed.
pub fn rollout(params: &PolicyParams, features: &Tensor, max_steps: usize) -> Result<Rollout> {
    if max_steps == 0 {
        return Err(Error::param("max_steps must be at least 1"));
    }
    let mut g = Graph::new();
    let b = params.bind(&mut g);
    let enc = encode_graph(&mut g, &b, features)?;
    let n = enc.n;
    let mut d = enc.advance(&mut g, enc.final_state, None)?;
    let mut steps = Vec::new();
    let mut stopped = false;
    loop {
        let logits = enc.action_logits(&mut g, d)?;
        let choice = argmax(g.value(logits).data());
        if choice == n {
            stopped = true;
            break;
        }
        steps.push(choice);
        d = enc.advance(&mut g, d, Some(choice))?;
        if steps.len() == max_steps {
            break;
        }
    }
    let task_dist = enc
        .task_logits(&mut g, &b, params.dims().task, d)?
        .map(|l| softmax(g.value(l).data()));
    Ok(Rollout {
        steps,
        stopped,
        task_output: task_dist.as_deref().map(argmax),
        task_dist,
    })
}
