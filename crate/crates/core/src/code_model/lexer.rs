//! Language-agnostic lexer producing tokens with line/column spans.
//!
//! Lexing rules, applied line by line:
//!
//! * identifiers match `[A-Za-z_][A-Za-z0-9_]*`; those in the keyword set
//!   become [`TokenKind::Keyword`]
//! * a digit starts a number, which extends over every following digit or `.`
//! * `"` or `'` starts a string literal that must close on the same line; a
//!   backslash escapes the next character
//! * `//` comments and `/* ... */` comments emit one [`TokenKind::CommentWord`]
//!   per whitespace-separated word; the markers themselves emit nothing
//! * any other non-whitespace character is a single-character punct or
//!   operator token
//!
//! Columns count characters, with tabs advancing to the next multiple of the
//! tab width.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Snippet, Token, TokenKind};
use crate::error::{Error, Result};

const PUNCT: &str = "()[]{},;.:";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexerConfig {
    pub keywords: BTreeSet<String>,
    pub tab_width: usize,
}

impl Default for LexerConfig {
    fn default() -> Self {
        LexerConfig {
            keywords: default_keywords(),
            tab_width: 4,
        }
    }
}

impl LexerConfig {
    pub fn with_keywords<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LexerConfig {
            keywords: keywords.into_iter().map(Into::into).collect(),
            tab_width: 4,
        }
    }
}

/// Keywords shared by the common C-family languages, plus the ones the
/// synthetic corpus uses.
pub fn default_keywords() -> BTreeSet<String> {
    [
        "break", "case", "class", "const", "continue", "def", "do", "else", "end", "fn", "for",
        "foreach", "func", "if", "in", "let", "loop", "match", "repeat", "return", "struct",
        "switch", "then", "until", "var", "while", "yield",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// Splits `source` into tokens. Empty input yields an empty snippet.
pub fn tokenize(source: &str, config: &LexerConfig) -> Result<Snippet> {
    if config.tab_width == 0 {
        return Err(Error::param("tab_width must be at least 1"));
    }
    let mut tokens = Vec::new();
    let mut block_comment_start: Option<usize> = None;
    let mut n_lines = 0;
    for (line_no, raw) in source.lines().enumerate() {
        n_lines = line_no + 1;
        let chars: Vec<char> = raw.chars().collect();
        let cols = columns(&chars, config.tab_width);
        let mut lexer = LineLexer {
            chars: &chars,
            cols: &cols,
            line: line_no,
            pos: 0,
            config,
            out: &mut tokens,
        };
        lexer.run(&mut block_comment_start)?;
    }
    if let Some(start) = block_comment_start {
        return Err(Error::Lex {
            line: start + 1,
            message: "unterminated block comment".into(),
        });
    }
    Ok(Snippet {
        id: String::new(),
        tokens,
        n_lines,
        task: None,
    })
}

/// Column of every char boundary; `cols[i]` is where char `i` starts and
/// `cols[len]` is the end of the line.
fn columns(chars: &[char], tab_width: usize) -> Vec<usize> {
    let mut cols = Vec::with_capacity(chars.len() + 1);
    let mut col = 0;
    for &c in chars {
        cols.push(col);
        col = if c == '\t' {
            (col / tab_width + 1) * tab_width
        } else {
            col + 1
        };
    }
    cols.push(col);
    cols
}

struct LineLexer<'a> {
    chars: &'a [char],
    cols: &'a [usize],
    line: usize,
    pos: usize,
    config: &'a LexerConfig,
    out: &'a mut Vec<Token>,
}

impl LineLexer<'_> {
    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn starts_with(&self, pat: &str) -> bool {
        pat.chars()
            .enumerate()
            .all(|(i, c)| self.peek(i) == Some(c))
    }

    fn emit(&mut self, start: usize, end: usize, kind: TokenKind) {
        let text: String = self.chars[start..end].iter().collect();
        self.out.push(Token {
            text,
            kind,
            line: self.line,
            col_start: self.cols[start],
            col_end: self.cols[end],
            vocab_id: 0,
        });
    }

    fn run(&mut self, block_comment_start: &mut Option<usize>) -> Result<()> {
        while self.pos < self.chars.len() {
            if block_comment_start.is_some() {
                if self.comment_words(Some("*/")) {
                    *block_comment_start = None;
                }
                continue;
            }
            let c = self.chars[self.pos];
            if c.is_whitespace() {
                self.pos += 1;
            } else if self.starts_with("//") {
                self.pos += 2;
                self.comment_words(None);
            } else if self.starts_with("/*") {
                self.pos += 2;
                *block_comment_start = Some(self.line);
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = self.pos;
                while self
                    .peek(0)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                let kind = if self.config.keywords.contains(&text) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                };
                self.emit(start, self.pos, kind);
            } else if c.is_ascii_digit() {
                let start = self.pos;
                while self.peek(0).is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    self.pos += 1;
                }
                self.emit(start, self.pos, TokenKind::Number);
            } else if c == '"' || c == '\'' {
                self.string_literal(c)?;
            } else {
                let kind = if PUNCT.contains(c) {
                    TokenKind::Punct
                } else {
                    TokenKind::Operator
                };
                self.pos += 1;
                self.emit(self.pos - 1, self.pos, kind);
            }
        }
        Ok(())
    }

    fn string_literal(&mut self, quote: char) -> Result<()> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.peek(0) {
                None => {
                    return Err(Error::Lex {
                        line: self.line + 1,
                        message: "unterminated string literal".into(),
                    })
                }
                Some('\\') => self.pos += 2,
                Some(c) if c == quote => {
                    self.pos += 1;
                    break;
                }
                Some(_) => self.pos += 1,
            }
        }
        // An escape as the final character can step past the line end.
        if self.pos > self.chars.len() {
            return Err(Error::Lex {
                line: self.line + 1,
                message: "unterminated string literal".into(),
            });
        }
        self.emit(start, self.pos, TokenKind::String);
        Ok(())
    }

    /// Emits comment words until the end of the line or until `terminator`.
    /// Returns true if the terminator was consumed.
    fn comment_words(&mut self, terminator: Option<&str>) -> bool {
        let mut word_start: Option<usize> = None;
        while self.pos < self.chars.len() {
            if let Some(term) = terminator {
                if self.starts_with(term) {
                    if let Some(s) = word_start.take() {
                        self.emit(s, self.pos, TokenKind::CommentWord);
                    }
                    self.pos += term.chars().count();
                    return true;
                }
            }
            let c = self.chars[self.pos];
            if c.is_whitespace() {
                if let Some(s) = word_start.take() {
                    self.emit(s, self.pos, TokenKind::CommentWord);
                }
            } else if word_start.is_none() {
                word_start = Some(self.pos);
            }
            self.pos += 1;
        }
        if let Some(s) = word_start {
            self.emit(s, self.pos, TokenKind::CommentWord);
        }
        false
    }
}
