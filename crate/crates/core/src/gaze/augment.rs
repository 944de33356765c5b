//! Fixation-uncertainty augmentation.
//!
//! A fixation usually covers a small group of neighbouring tokens, so each
//! recorded step is only known up to that group. Every perturbed copy
//! resamples each step among the tokens on the same line within
//! `ceil(2 * sigma)` token positions, with probability proportional to
//! `exp(-d^2 / (2 sigma^2))` for token-index distance `d`.
//!
//! The original keeps half of the total weight. The copies share the other
//! half in proportion to their joint sampling probability, so the whole
//! family always sums to one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trajectory::{merge_repeats, Trajectory};
use crate::code_model::Snippet;
use crate::error::{Error, Result};

/// A perturbed copy before duplicate merging, with its joint log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedCopy {
    pub raw_steps: Vec<usize>,
    pub log_prob: f64,
}

/// Draws `m` perturbed step sequences for `traj`.
pub fn perturb(
    traj: &Trajectory,
    snippet: &Snippet,
    sigma_tokens: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<PerturbedCopy>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if !(sigma_tokens > 0.0 && sigma_tokens.is_finite()) {
        return Err(Error::param(format!(
            "sigma_tokens must be positive when m > 0, got {sigma_tokens}"
        )));
    }
    traj.validate(snippet)?;

    let reach = (2.0 * sigma_tokens).ceil() as usize;
    let n = snippet.len();
    // Candidate neighbourhoods depend only on the step, so build them once.
    let neighbourhood = |s: usize| -> (Vec<usize>, Vec<f64>) {
        let line = snippet.tokens[s].line;
        let lo = s.saturating_sub(reach);
        let hi = (s + reach).min(n - 1);
        let members: Vec<usize> = (lo..=hi)
            .filter(|&j| snippet.tokens[j].line == line)
            .collect();
        let weights = members
            .iter()
            .map(|&j| {
                let d = j.abs_diff(s) as f64;
                (-d * d / (2.0 * sigma_tokens * sigma_tokens)).exp()
            })
            .collect();
        (members, weights)
    };
    let tables: Vec<(Vec<usize>, Vec<f64>)> =
        traj.steps.iter().map(|&s| neighbourhood(s)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut copies = Vec::with_capacity(m);
    for _ in 0..m {
        let mut raw_steps = Vec::with_capacity(traj.steps.len());
        let mut log_prob = 0.0;
        for (members, weights) in &tables {
            let total: f64 = weights.iter().sum();
            let target = rng.gen::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = members.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                cumulative += w;
                if cumulative > target {
                    pick = k;
                    break;
                }
            }
            raw_steps.push(members[pick]);
            log_prob += (weights[pick] / total).ln();
        }
        copies.push(PerturbedCopy {
            raw_steps,
            log_prob,
        });
    }
    Ok(copies)
}

/// Returns the original followed by `m` perturbed copies, with weights
/// summing to one.
pub fn augment(
    traj: &Trajectory,
    snippet: &Snippet,
    sigma_tokens: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let copies = perturb(traj, snippet, sigma_tokens, m, seed)?;
    if copies.is_empty() {
        return Ok(vec![Trajectory {
            weight: 1.0,
            ..traj.clone()
        }]);
    }

    let max_lp = copies
        .iter()
        .map(|c| c.log_prob)
        .fold(f64::NEG_INFINITY, f64::max);
    let rel: Vec<f64> = copies.iter().map(|c| (c.log_prob - max_lp).exp()).collect();
    let rel_total: f64 = rel.iter().sum();

    let mut out = Vec::with_capacity(m + 1);
    out.push(Trajectory {
        weight: 0.5,
        ..traj.clone()
    });
    for (copy, r) in copies.into_iter().zip(rel) {
        out.push(Trajectory {
            snippet_id: traj.snippet_id.clone(),
            steps: merge_repeats(copy.raw_steps),
            weight: 0.5 * r / rel_total,
            task: traj.task,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::{tokenize, LexerConfig};

    fn fixture() -> (Snippet, Trajectory) {
        let s = tokenize("a b c d e f g\nh i j k\nl m n o p", &LexerConfig::default())
            .unwrap()
            .with_id("s");
        let t = Trajectory::new("s", vec![0, 3, 6, 8, 10, 13, 15], None).unwrap();
        (s, t)
    }

    #[test]
    fn m_zero_returns_original_with_unit_weight() {
        let (s, t) = fixture();
        let out = augment(&t, &s, 1.0, 0, 7).unwrap();
        assert_eq!(out, vec![t]);
        // sigma is irrelevant without copies
        assert!(augment(&fixture().1, &s, 0.0, 0, 7).is_ok());
    }

    #[test]
    fn weights_sum_to_one() {
        let (s, t) = fixture();
        for m in [1, 3, 17] {
            let out = augment(&t, &s, 1.3, m, 99).unwrap();
            assert_eq!(out.len(), m + 1);
            assert_eq!(out[0].weight, 0.5);
            let total: f64 = out.iter().map(|t| t.weight).sum();
            assert!((total - 1.0).abs() <= 1e-12, "{total}");
            for copy in &out {
                copy.validate(&s).unwrap();
            }
        }
    }

    #[test]
    fn vanishing_sigma_keeps_every_step() {
        let (s, t) = fixture();
        let out = augment(&t, &s, 1e-6, 5, 3).unwrap();
        for copy in &out[1..] {
            assert_eq!(copy.steps, t.steps);
        }
    }

    #[test]
    fn copies_stay_on_the_same_line_and_within_reach() {
        let (s, t) = fixture();
        let sigma = 0.9;
        let reach = (2.0f64 * sigma).ceil() as usize;
        for copy in perturb(&t, &s, sigma, 50, 11).unwrap() {
            for (&orig, &new) in t.steps.iter().zip(&copy.raw_steps) {
                assert_eq!(s.tokens[orig].line, s.tokens[new].line);
                assert!(orig.abs_diff(new) <= reach);
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let (s, t) = fixture();
        let a = augment(&t, &s, 2.0, 6, 42).unwrap();
        let b = augment(&t, &s, 2.0, 6, 42).unwrap();
        assert_eq!(a, b);
        let bits = |v: &[Trajectory]| v.iter().map(|t| t.weight.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = augment(&t, &s, 2.0, 6, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        let (s, t) = fixture();
        assert!(matches!(augment(&t, &s, 0.0, 2, 1), Err(Error::Param(_))));
        assert!(matches!(augment(&t, &s, -1.0, 2, 1), Err(Error::Param(_))));
    }
}
