use std::collections::BTreeMap;
use std::path::Path;

use super::{tokenize, LexerConfig, Snippet, TaskKind, TaskLabel};
use crate::error::{Error, Result};

/// Tokenizes every regular file in `dir`, one snippet per file, with the
/// file stem as snippet id. Snippets come back sorted by id.
pub fn load_corpus(dir: &Path, config: &LexerConfig) -> Result<Vec<Snippet>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();

    let mut snippets: Vec<Snippet> = Vec::with_capacity(files.len());
    for path in files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::data(path.display().to_string(), "file name", "not UTF-8"))?
            .to_string();
        let source = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let snippet = tokenize(&source, config).map_err(|e| match e {
            Error::Lex { line, message } => {
                Error::data(path.display().to_string(), format!("line {line}"), message)
            }
            other => other,
        })?;
        if snippets.iter().any(|s| s.id == id) {
            return Err(Error::data(
                path.display().to_string(),
                "snippet_id",
                "duplicate stem",
            ));
        }
        snippets.push(snippet.with_id(id));
    }
    snippets.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(snippets)
}

/// Reads a `snippet_id,kind,value` labels file.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, TaskLabel>> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&file, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&file, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["snippet_id", "kind", "value"] {
        return Err(Error::data(
            &file,
            "header",
            "expected `snippet_id,kind,value`",
        ));
    }
    let mut labels = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&file, e))?;
        let row = format!("row {}", i + 2);
        let id = record[0].to_string();
        let kind = match &record[1] {
            "class" => TaskKind::ClassLabel,
            "bug" => TaskKind::BugIndex,
            other => {
                return Err(Error::data(
                    &file,
                    format!("{row} kind"),
                    format!("unknown kind `{other}`"),
                ))
            }
        };
        let value: usize = record[2].parse().map_err(|_| {
            Error::data(&file, format!("{row} value"), "not a non-negative integer")
        })?;
        if labels
            .insert(id.clone(), TaskLabel { kind, value })
            .is_some()
        {
            return Err(Error::data(
                &file,
                format!("{row} snippet_id"),
                format!("duplicate `{id}`"),
            ));
        }
    }
    Ok(labels)
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(file, io),
        other => Error::data(file, "csv", format!("{other:?}")),
    }
}

pub fn write_labels(path: &Path, labels: &BTreeMap<String, TaskLabel>) -> Result<()> {
    let mut out = String::from("snippet_id,kind,value\n");
    for (id, label) in labels {
        let kind = match label.kind {
            TaskKind::ClassLabel => "class",
            TaskKind::BugIndex => "bug",
        };
        out.push_str(&format!("{id},{kind},{}\n", label.value));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Attaches labels to snippets, checking that every label names a known
/// snippet and that bug indices point at real tokens.
pub fn apply_labels(
    snippets: &mut [Snippet],
    labels: &BTreeMap<String, TaskLabel>,
    origin: &str,
) -> Result<()> {
    for (id, label) in labels {
        let snippet = snippets
            .iter_mut()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::data(origin, "snippet_id", format!("unknown snippet `{id}`")))?;
        if label.kind == TaskKind::BugIndex && label.value >= snippet.len() {
            return Err(Error::data(
                origin,
                "value",
                format!(
                    "bug index {} outside `{id}` ({} tokens)",
                    label.value,
                    snippet.len()
                ),
            ));
        }
        snippet.task = Some(*label);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_and_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let code = dir.path().join("code");
        std::fs::create_dir(&code).unwrap();
        std::fs::write(code.join("b.txt"), "let x = 1 ;").unwrap();
        std::fs::write(code.join("a.c"), "x = BUGTOK ;").unwrap();
        let mut snippets = load_corpus(&code, &LexerConfig::default()).unwrap();
        assert_eq!(
            snippets.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );

        let mut labels = BTreeMap::new();
        labels.insert("a".to_string(), TaskLabel::bug(2));
        labels.insert("b".to_string(), TaskLabel::class(1));
        let csv_path = dir.path().join("labels.csv");
        write_labels(&csv_path, &labels).unwrap();
        let read = read_labels(&csv_path).unwrap();
        assert_eq!(read, labels);

        apply_labels(&mut snippets, &read, "labels.csv").unwrap();
        assert_eq!(snippets[0].bug_index(), Some(2));
    }

    #[test]
    fn bad_labels_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "snippet_id,kind,value\na,color,1\n").unwrap();
        let err = read_labels(&p).unwrap_err();
        assert!(err.is_data_error());
        assert!(err.to_string().contains("kind"), "{err}");

        let mut snippets = vec![tokenize("a b", &LexerConfig::default())
            .unwrap()
            .with_id("a")];
        let mut labels = BTreeMap::new();
        labels.insert("a".to_string(), TaskLabel::bug(5));
        assert!(apply_labels(&mut snippets, &labels, "l.csv").is_err());
    }
}
