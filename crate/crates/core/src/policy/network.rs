//! Encoder/decoder pointer network.
//!
//! * The encoder projects token features `x_j = f_j W_in` and runs a GRU
//!   from `h_0 = 0`, keeping every hidden state as row `j` of `E`.
//! * The decoder is a second GRU started from the encoder's final state. At
//!   step 0 it reads the learned start input; afterwards it reads the
//!   projection of the token attended at the previous step.
//! * From decoder state `d` the pointer scores every token and a learned
//!   stop key: `u_j = v . tanh(W1 E_j + W2 d + b)`, with `E_n = stop_key`.
//!   The action distribution is `softmax(u)` over `n + 1` slots.
//! * The task head reads the final decoder state: a class softmax
//!   `softmax(d W_task)`, or a pointer over tokens scored with `v_loc` in
//!   place of `v` and no stop slot.

use super::params::{Bound, Slot, TaskMode};
use crate::autodiff::{Graph, Tensor, Var};
use crate::code_model::{TaskKind, TaskLabel};
use crate::error::{Error, Result};

struct Gru {
    u_z: Var,
    u_r: Var,
    u_h: Var,
    b_z: Var,
    b_r: Var,
    b_h: Var,
}

/// Input-side projections `x W_z`, `x W_r`, `x W_h` for a stack of inputs.
struct Projected {
    z: Var,
    r: Var,
    h: Var,
}

impl Gru {
    fn bind(b: &Bound, encoder: bool) -> Result<Self> {
        use Slot::*;
        let pick = |e: Slot, d: Slot| b.var(if encoder { e } else { d });
        Ok(Gru {
            u_z: pick(EncUz, DecUz)?,
            u_r: pick(EncUr, DecUr)?,
            u_h: pick(EncUh, DecUh)?,
            b_z: pick(EncBz, DecBz)?,
            b_r: pick(EncBr, DecBr)?,
            b_h: pick(EncBh, DecBh)?,
        })
    }

    fn project(g: &mut Graph, b: &Bound, inputs: Var, encoder: bool) -> Result<Projected> {
        use Slot::*;
        let pick = |e: Slot, d: Slot| b.var(if encoder { e } else { d });
        Ok(Projected {
            z: g.matmul(inputs, pick(EncWz, DecWz)?)?,
            r: g.matmul(inputs, pick(EncWr, DecWr)?)?,
            h: g.matmul(inputs, pick(EncWh, DecWh)?)?,
        })
    }

    /// One GRU update reading row `row` of the projected inputs.
    fn step(&self, g: &mut Graph, x: &Projected, row: usize, h: Var) -> Result<Var> {
        let xz = g.row_gather(x.z, &[row])?;
        let xr = g.row_gather(x.r, &[row])?;
        let xh = g.row_gather(x.h, &[row])?;

        let hz = g.matmul(h, self.u_z)?;
        let z = g.add(xz, hz)?;
        let z = g.add(z, self.b_z)?;
        let z = g.sigmoid(z)?;

        let hr = g.matmul(h, self.u_r)?;
        let r = g.add(xr, hr)?;
        let r = g.add(r, self.b_r)?;
        let r = g.sigmoid(r)?;

        let rh = g.mul(r, h)?;
        let cand = g.matmul(rh, self.u_h)?;
        let cand = g.add(xh, cand)?;
        let cand = g.add(cand, self.b_h)?;
        let cand = g.tanh(cand)?;

        // (1 - z) * h + z * cand == h + z * (cand - h)
        let delta = g.sub(cand, h)?;
        let delta = g.mul(z, delta)?;
        g.add(h, delta)
    }
}

/// Graph nodes shared by every decoding step for one snippet.
pub struct Encoded {
    pub n: usize,
    /// Encoder states, `(n, d_hidden)`.
    pub states: Var,
    /// Final encoder state, `(1, d_hidden)`.
    pub final_state: Var,
    /// `W1` applied to the token states, `(n, d_attn)`.
    token_keys: Var,
    /// `W1` applied to tokens and stop key, `(n + 1, d_attn)`.
    slot_keys: Var,
    /// Decoder input projections: rows `0..n` are tokens, row `n` the start input.
    dec_inputs: Projected,
    dec: Gru,
    w2: Var,
    v: Var,
    b_attn: Var,
}

/// Runs the encoder over a `(n, d_feat)` feature matrix.
pub fn encode_graph(g: &mut Graph, b: &Bound, features: &Tensor) -> Result<Encoded> {
    let n = features.rows();
    if n == 0 || features.shape().len() != 2 {
        return Err(Error::param("encode needs at least one token"));
    }
    let f = g.leaf(features.clone());
    let x = g.matmul(f, b.var(Slot::InputProj)?)?;

    let enc = Gru::bind(b, true)?;
    let enc_in = Gru::project(g, b, x, true)?;
    let d_hidden = g.value(b.var(Slot::EncUz)?).rows();
    let mut h = g.leaf(Tensor::zeros(&[1, d_hidden]));
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        h = enc.step(g, &enc_in, j, h)?;
        rows.push(h);
    }
    let states = g.concat_rows(&rows)?;

    let w1 = b.var(Slot::AttnW1)?;
    let token_keys = g.matmul(states, w1)?;
    let stop_key = g.matmul(b.var(Slot::StopKey)?, w1)?;
    let slot_keys = g.concat_rows(&[token_keys, stop_key])?;

    let dec_x = g.concat_rows(&[x, b.var(Slot::StartInput)?])?;
    let dec_inputs = Gru::project(g, b, dec_x, false)?;

    Ok(Encoded {
        n,
        states,
        final_state: h,
        token_keys,
        slot_keys,
        dec_inputs,
        dec: Gru::bind(b, false)?,
        w2: b.var(Slot::AttnW2)?,
        v: b.var(Slot::AttnV)?,
        b_attn: b.var(Slot::AttnB)?,
    })
}

impl Encoded {
    /// Advances the decoder by reading token `input` (or the start input
    /// when `None`).
    pub fn advance(&self, g: &mut Graph, state: Var, input: Option<usize>) -> Result<Var> {
        let row = input.unwrap_or(self.n);
        if row > self.n {
            return Err(Error::param(format!(
                "decoder input {row} outside snippet of {}",
                self.n
            )));
        }
        self.dec.step(g, &self.dec_inputs, row, state)
    }

    fn scores(&self, g: &mut Graph, keys: Var, d: Var, v: Var) -> Result<Var> {
        let q = g.matmul(d, self.w2)?;
        let pre = g.add(keys, q)?;
        let pre = g.add(pre, self.b_attn)?;
        let act = g.tanh(pre)?;
        g.matmul(act, v)
    }

    /// Pointer logits over the `n` tokens plus the stop slot, `(n + 1, 1)`.
    pub fn action_logits(&self, g: &mut Graph, d: Var) -> Result<Var> {
        self.scores(g, self.slot_keys, d, self.v)
    }

    /// Task logits from the final decoder state.
    pub fn task_logits(
        &self,
        g: &mut Graph,
        b: &Bound,
        mode: TaskMode,
        d: Var,
    ) -> Result<Option<Var>> {
        match mode {
            TaskMode::None => Ok(None),
            TaskMode::Classify { .. } => Ok(Some(g.matmul(d, b.var(Slot::TaskW)?)?)),
            TaskMode::Localize => {
                let v_loc = b.var(Slot::LocV)?;
                Ok(Some(self.scores(g, self.token_keys, d, v_loc)?))
            }
        }
    }
}

/// Logit nodes of one teacher-forced pass.
pub struct TeacherGraph {
    /// `K + 1` action logits; entry `t` targets `steps[t]`, the last targets stop.
    pub action_logits: Vec<Var>,
    pub targets: Vec<usize>,
    pub task_logits: Option<Var>,
}

/// Teacher-forced decoding: step `t` reads the expert's token `steps[t-1]`
/// regardless of what the policy would have chosen.
pub fn forward_teacher_graph(
    g: &mut Graph,
    b: &Bound,
    features: &Tensor,
    steps: &[usize],
    mode: TaskMode,
) -> Result<TeacherGraph> {
    if steps.is_empty() {
        return Err(Error::param("teacher forcing needs a non-empty trajectory"));
    }
    let n = features.rows();
    if let Some(bad) = steps.iter().find(|&&s| s >= n) {
        return Err(Error::param(format!(
            "step index {bad} outside snippet of {n} tokens"
        )));
    }
    let enc = encode_graph(g, b, features)?;
    let mut d = enc.final_state;
    let mut action_logits = Vec::with_capacity(steps.len() + 1);
    let mut targets = Vec::with_capacity(steps.len() + 1);
    for t in 0..=steps.len() {
        let input = if t == 0 { None } else { Some(steps[t - 1]) };
        d = enc.advance(g, d, input)?;
        action_logits.push(enc.action_logits(g, d)?);
        targets.push(steps.get(t).copied().unwrap_or(n));
    }
    let task_logits = enc.task_logits(g, b, mode, d)?;
    Ok(TeacherGraph {
        action_logits,
        targets,
        task_logits,
    })
}

/// Checks that a label fits the task head and returns its target index.
pub fn task_target(
    mode: TaskMode,
    label: Option<TaskLabel>,
    n_tokens: usize,
) -> Result<Option<usize>> {
    match mode {
        TaskMode::None => Ok(None),
        TaskMode::Classify { n_classes } => match label {
            Some(TaskLabel {
                kind: TaskKind::ClassLabel,
                value,
            }) if value < n_classes => Ok(Some(value)),
            other => Err(Error::param(format!(
                "classification over {n_classes} classes needs a class label, got {other:?}"
            ))),
        },
        TaskMode::Localize => match label {
            Some(TaskLabel {
                kind: TaskKind::BugIndex,
                value,
            }) if value < n_tokens => Ok(Some(value)),
            other => Err(Error::param(format!(
                "localization over {n_tokens} tokens needs a bug index, got {other:?}"
            ))),
        },
    }
}

/// Records `weight * (w_att * mean_t CE_t + w_aux * CE_task)`.
pub fn bc_loss_graph(
    g: &mut Graph,
    out: &TeacherGraph,
    task_target: Option<usize>,
    w_att: f64,
    w_aux: f64,
    weight: f64,
) -> Result<Var> {
    check_loss_weights(w_att, w_aux)?;
    let ces = out
        .action_logits
        .iter()
        .zip(&out.targets)
        .map(|(&logits, &target)| g.softmax_cross_entropy(logits, target, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let total = g.sum(&ces)?;
    let l_att = g.scale(total, 1.0 / ces.len() as f64)?;
    let mut parts = vec![g.scale(l_att, w_att)?];
    if let (Some(logits), Some(target)) = (out.task_logits, task_target) {
        let l_aux = g.softmax_cross_entropy(logits, target, 1.0)?;
        parts.push(g.scale(l_aux, w_aux)?);
    }
    let combined = g.sum(&parts)?;
    g.scale(combined, weight)
}

fn check_loss_weights(w_att: f64, w_aux: f64) -> Result<()> {
    if w_att < 0.0 || w_aux < 0.0 || w_att + w_aux <= 0.0 || !(w_att + w_aux).is_finite() {
        return Err(Error::param(format!(
            "loss weights must be non-negative and not both zero, got w_att={w_att} w_aux={w_aux}"
        )));
    }
    Ok(())
}

/// Behavioral-cloning loss from already computed distributions.
///
/// `action_dists[t]` must assign probability to `targets[t]`; the attention
/// term averages `-ln p_t(target_t)` over all targets. The auxiliary term is
/// `-ln q(label)` when both a task distribution and a label are given.
pub fn bc_loss(
    action_dists: &[Vec<f64>],
    targets: &[usize],
    task: Option<(&[f64], usize)>,
    w_att: f64,
    w_aux: f64,
    sample_weight: f64,
) -> Result<f64> {
    check_loss_weights(w_att, w_aux)?;
    if action_dists.is_empty() || action_dists.len() != targets.len() {
        return Err(Error::param(format!(
            "{} distributions for {} targets",
            action_dists.len(),
            targets.len()
        )));
    }
    let mut l_att = 0.0;
    for (dist, &target) in action_dists.iter().zip(targets) {
        let p = *dist.get(target).ok_or_else(|| {
            Error::param(format!(
                "target {target} outside distribution of {}",
                dist.len()
            ))
        })?;
        l_att -= p.ln();
    }
    l_att /= targets.len() as f64;
    let l_aux = match task {
        Some((q, label)) => {
            let p = *q
                .get(label)
                .ok_or_else(|| Error::param(format!("label {label} outside task distribution")))?;
            -p.ln()
        }
        None => 0.0,
    };
    Ok(sample_weight * (w_att * l_att + w_aux * l_aux))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln2_for_half_probability() {
        let l = bc_loss(&[vec![0.5, 0.25, 0.25]], &[0], None, 1.0, 0.0, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ln4_for_uniform_over_four() {
        let u = vec![0.25; 4];
        let l = bc_loss(&[u.clone(), u], &[1, 3], None, 1.0, 0.0, 1.0).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn aux_weight_zero_ignores_task() {
        let d = vec![vec![0.1, 0.9]];
        let base = bc_loss(&d, &[1], None, 0.7, 0.0, 1.0).unwrap();
        let with_task = bc_loss(&d, &[1], Some((&[0.01, 0.99], 0)), 0.7, 0.0, 1.0).unwrap();
        assert_eq!(base, with_task);
        assert_eq!(base, 0.7 * -(0.9f64.ln()));
    }

    #[test]
    fn both_weights_zero_is_rejected() {
        assert!(matches!(
            bc_loss(&[vec![1.0]], &[0], None, 0.0, 0.0, 1.0),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn linear_in_weights() {
        let d = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0]];
        let task = Some((&[0.3, 0.7][..], 1));
        let one = bc_loss(&d, &[2, 0], task, 1.0, 0.0, 1.0).unwrap();
        let aux = bc_loss(&d, &[2, 0], task, 0.0, 1.0, 1.0).unwrap();
        let mix = bc_loss(&d, &[2, 0], task, 2.0, 3.0, 1.0).unwrap();
        assert!((mix - (2.0 * one + 3.0 * aux)).abs() < 1e-14);
        let doubled = bc_loss(&d, &[2, 0], task, 2.0, 3.0, 2.0).unwrap();
        assert_eq!(doubled, 2.0 * mix);
    }

    #[test]
    fn task_target_checks_label_kind() {
        let cls = TaskMode::Classify { n_classes: 3 };
        assert_eq!(
            task_target(cls, Some(TaskLabel::class(2)), 9).unwrap(),
            Some(2)
        );
        assert!(task_target(cls, Some(TaskLabel::class(3)), 9).is_err());
        assert!(task_target(cls, Some(TaskLabel::bug(1)), 9).is_err());
        assert!(task_target(TaskMode::Localize, Some(TaskLabel::bug(9)), 9).is_err());
        assert_eq!(task_target(TaskMode::None, None, 9).unwrap(), None);
    }

    #[test]
    fn params_bind_every_slot() {
        let dims = super::super::PolicyDims {
            d_feat: 2,
            d_emb: 2,
            d_hidden: 2,
            d_attn: 2,
            task: TaskMode::Localize,
        };
        let p = super::super::PolicyParams::zeros(dims);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        assert!(b.var(Slot::LocV).is_ok());
        assert!(b.var(Slot::TaskW).is_err());
    }
}
