use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::code_model::{Snippet, TaskLabel};
use crate::error::{Error, Result};

/// Expert state-action sequence over one snippet.
///
/// `steps[t]` is the token attended at time `t`; the state is the feature of
/// that token and the expert action is `steps[t + 1]` (or stop after the
/// last step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snippet_id: String,
    pub steps: Vec<usize>,
    pub weight: f64,
    pub task: Option<TaskLabel>,
}

impl Trajectory {
    /// Builds a weight-1 trajectory, merging consecutive duplicate steps.
    pub fn new(
        snippet_id: impl Into<String>,
        steps: Vec<usize>,
        task: Option<TaskLabel>,
    ) -> Result<Self> {
        let snippet_id = snippet_id.into();
        let steps = merge_repeats(steps);
        if steps.is_empty() {
            return Err(Error::EmptyTrajectory {
                snippet: snippet_id,
            });
        }
        Ok(Trajectory {
            snippet_id,
            steps,
            weight: 1.0,
            task,
        })
    }

    /// Checks the invariants against the snippet the trajectory refers to.
    pub fn validate(&self, snippet: &Snippet) -> Result<()> {
        let origin = format!("trajectory for `{}`", self.snippet_id);
        if self.steps.is_empty() {
            return Err(Error::EmptyTrajectory {
                snippet: self.snippet_id.clone(),
            });
        }
        if let Some(bad) = self.steps.iter().find(|&&s| s >= snippet.len()) {
            return Err(Error::data(
                origin,
                "steps",
                format!("index {bad} outside snippet of {} tokens", snippet.len()),
            ));
        }
        if self.steps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data(origin, "steps", "consecutive duplicate steps"));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::data(
                origin,
                "weight",
                format!("must be positive, got {}", self.weight),
            ));
        }
        Ok(())
    }
}

/// Collapses runs of equal consecutive values.
pub fn merge_repeats(mut steps: Vec<usize>) -> Vec<usize> {
    steps.dedup();
    steps
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for t in trajectories {
        let line = serde_json::to_string(t).expect("trajectory serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::data(&origin, format!("line {}", i + 1), e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}
