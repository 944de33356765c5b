//! Tokenized code snippets and their per-token state features.

mod corpus;
mod features;
mod lexer;
mod vocab;

use serde::{Deserialize, Serialize};

pub use corpus::{apply_labels, load_corpus, read_labels, write_labels};
pub use features::{fnv1a64, EmbeddingTable, FeatureSpec, Featurizer};
pub use lexer::{default_keywords, tokenize, LexerConfig};
pub use vocab::{build_vocab, Vocab, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    String,
    Operator,
    Punct,
    CommentWord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 0-based line.
    pub line: usize,
    /// Inclusive start column.
    pub col_start: usize,
    /// Exclusive end column.
    pub col_end: usize,
    pub vocab_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "class")]
    ClassLabel,
    #[serde(rename = "bug")]
    BugIndex,
}

/// Task-relevant output attached to a snippet or trajectory: an algorithm
/// class, or the token index of a planted bug.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskLabel {
    pub kind: TaskKind,
    pub value: usize,
}

impl TaskLabel {
    pub fn class(value: usize) -> Self {
        TaskLabel {
            kind: TaskKind::ClassLabel,
            value,
        }
    }

    pub fn bug(value: usize) -> Self {
        TaskLabel {
            kind: TaskKind::BugIndex,
            value,
        }
    }
}

/// A tokenized source snippet: the environment the policy attends over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub tokens: Vec<Token>,
    pub n_lines: usize,
    pub task: Option<TaskLabel>,
}

impl Snippet {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Widest column reached by any token, at least 1.
    pub fn max_cols(&self) -> usize {
        self.tokens
            .iter()
            .map(|t| t.col_end)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn bug_index(&self) -> Option<usize> {
        match self.task {
            Some(TaskLabel {
                kind: TaskKind::BugIndex,
                value,
            }) => Some(value),
            _ => None,
        }
    }
}
