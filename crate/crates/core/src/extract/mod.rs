//! Method extraction: parse affected files, bind TODO comments to the
//! innermost enclosing method and apply the filtering rules.
//!
//! Rule 1 drops TODO comments with fewer than three words, Rule 2 drops TODO
//! comments outside any method and Rule 3 drops TODOs in files that fail to
//! parse. Only comment nodes count as TODO comments; a marker inside a string
//! literal is ignored.

mod normalize;
mod python;

pub use normalize::{normalize_bytes, normalize_source, TAB_WIDTH};

use serde::{Deserialize, Serialize};

use crate::miner::TodoLine;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("failed to parse {file}: {reason}")]
    ParseFailure { file: String, reason: String },
    #[error("no grammar for {0}")]
    UnsupportedLanguage(String),
}

/// Source languages with a bundled grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grammar {
    Python,
}

impl Grammar {
    pub fn for_path(path: &str) -> Result<Self, ExtractError> {
        if path.ends_with(".py") {
            Ok(Grammar::Python)
        } else {
            Err(ExtractError::UnsupportedLanguage(path.to_string()))
        }
    }
}

/// An extracted function or method.
///
/// `source_lines` covers the full span (`end_line - start_line + 1` entries);
/// with comment stripping on, comment-only lines are empty strings and inline
/// comments are cut off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub project: String,
    pub file: String,
    #[serde(default)]
    pub commit: String,
    pub qualified_name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub source_lines: Vec<String>,
    #[serde(default)]
    pub contains_async: bool,
    #[serde(default)]
    pub has_todo: bool,
}

/// A non-blank code line of a method, trimmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeLine<'a> {
    pub line: u32,
    pub text: &'a str,
}

impl MethodRecord {
    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    /// Non-blank lines that are not comment-only, in order.
    pub fn code_lines(&self) -> Vec<CodeLine<'_>> {
        self.source_lines
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let t = l.trim();
                (!t.is_empty() && !t.starts_with('#')).then_some(CodeLine {
                    line: self.start_line + i as u32,
                    text: t,
                })
            })
            .collect()
    }

    /// Identity of a method inside a snapshot, used in reports.
    pub fn method_id(&self) -> String {
        format!("{}:{}:{}", self.file, self.qualified_name, self.start_line)
    }
}

/// A TODO comment found in a file snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoInstance {
    pub project: String,
    /// Comment text without the leading `#`, continuation lines joined by a space.
    pub comment_text: String,
    pub file: String,
    pub line: u32,
    pub commit_hash: String,
    /// Index into the methods of the file's [`ParsedFile`].
    pub enclosing_method: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub line: u32,
    /// Byte column of the `#`.
    pub column: usize,
    pub text: String,
    /// Nothing but whitespace precedes the comment on its line.
    pub own_line: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFile {
    pub methods: Vec<MethodRecord>,
    pub comments: Vec<Comment>,
}

pub struct SourceFile<'a> {
    pub project: &'a str,
    pub file: &'a str,
    pub commit: &'a str,
    /// Already normalized text.
    pub text: &'a str,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub strip_comments: bool,
    pub marker: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            strip_comments: true,
            marker: crate::DEFAULT_MARKER.to_string(),
        }
    }
}

/// Every function and async function, including nested ones and class
/// methods. Qualified names join enclosing class and function names with `.`.
pub fn parse_methods(
    source: &SourceFile<'_>,
    grammar: Grammar,
    opts: &ParseOptions,
) -> Result<ParsedFile, ExtractError> {
    match grammar {
        Grammar::Python => python::parse(source, opts),
    }
}

/// Drops comment delimiters and surrounding whitespace.
fn comment_body(text: &str) -> &str {
    text.trim_start_matches('#').trim()
}

/// Binds each TODO line to the innermost covering method.
///
/// Lines whose marker is not inside a comment are not TODO comments and are
/// skipped; the second value counts them.
pub fn locate_todos(
    parsed: &ParsedFile,
    todo_lines: &[TodoLine],
    project: &str,
    commit: &str,
    marker: &str,
) -> (Vec<TodoInstance>, usize) {
    let mut out = Vec::new();
    let mut not_comment = 0;
    for todo in todo_lines {
        let Some(pos) = parsed
            .comments
            .iter()
            .position(|c| c.line == todo.line && c.text.contains(marker))
        else {
            not_comment += 1;
            continue;
        };
        let head = &parsed.comments[pos];
        let mut text = comment_body(&head.text).to_string();
        let mut expected = head.line + 1;
        for next in &parsed.comments[pos + 1..] {
            if next.line != expected
                || !next.own_line
                || next.column != head.column
                || next.text.contains(marker)
                || comment_body(&next.text).is_empty()
            {
                break;
            }
            text.push(' ');
            text.push_str(comment_body(&next.text));
            expected += 1;
        }
        out.push(TodoInstance {
            project: project.to_string(),
            comment_text: text,
            file: todo.path.clone(),
            line: todo.line,
            commit_hash: commit.to_string(),
            enclosing_method: innermost_method(&parsed.methods, todo.line),
        });
    }
    (out, not_comment)
}

/// Deepest method whose span covers `line`.
pub fn innermost_method(methods: &[MethodRecord], line: u32) -> Option<usize> {
    methods
        .iter()
        .enumerate()
        .filter(|(_, m)| m.contains_line(line))
        .max_by(|(_, a), (_, b)| {
            a.start_line
                .cmp(&b.start_line)
                .then(b.end_line.cmp(&a.end_line))
        })
        .map(|(i, _)| i)
}

/// TODO instances for a file that failed to parse (no comment nodes, no methods).
pub fn unparsed_todos(todo_lines: &[TodoLine], project: &str, commit: &str, marker: &str) -> Vec<TodoInstance> {
    todo_lines
        .iter()
        .map(|t| {
            let at = t.text.find(marker).unwrap_or(0);
            let start = t.text[..at].rfind('#').map(|h| h + 1).unwrap_or(at);
            TodoInstance {
                project: project.to_string(),
                comment_text: t.text[start..].trim().to_string(),
                file: t.path.clone(),
                line: t.line,
                commit_hash: commit.to_string(),
                enclosing_method: None,
            }
        })
        .collect()
}

/// Input to the filtering rules: an instance plus the parse status of its file.
#[derive(Debug, Clone)]
pub struct RuleCandidate {
    pub todo: TodoInstance,
    pub parsed: bool,
}

/// Drops per rule. A candidate violating several rules is charged once, in
/// the order Rule 1, Rule 3, Rule 2 (whether a TODO sits in a method is only
/// known for files that parsed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    pub short_comment: usize,
    pub outside_method: usize,
    pub parse_failure: usize,
    pub not_comment: usize,
}

impl RuleCounts {
    pub fn total(&self) -> usize {
        self.short_comment + self.outside_method + self.parse_failure
    }

    pub fn merge(&mut self, other: &RuleCounts) {
        self.short_comment += other.short_comment;
        self.outside_method += other.outside_method;
        self.parse_failure += other.parse_failure;
        self.not_comment += other.not_comment;
    }
}

pub const MIN_TODO_WORDS: usize = 3;

fn rule1_ok(c: &RuleCandidate) -> bool {
    c.todo.comment_text.split_whitespace().count() >= MIN_TODO_WORDS
}

fn rule2_ok(c: &RuleCandidate) -> bool {
    c.todo.enclosing_method.is_some()
}

fn rule3_ok(c: &RuleCandidate) -> bool {
    c.parsed
}

/// Keeps candidates passing all three rules.
pub fn apply_filter_rules(candidates: Vec<RuleCandidate>) -> (Vec<TodoInstance>, RuleCounts) {
    let mut counts = RuleCounts::default();
    let mut kept = Vec::new();
    for c in candidates {
        if !rule1_ok(&c) {
            counts.short_comment += 1;
        } else if !rule3_ok(&c) {
            counts.parse_failure += 1;
        } else if !rule2_ok(&c) {
            counts.outside_method += 1;
        } else {
            kept.push(c.todo);
        }
    }
    (kept, counts)
}

/// A kept TODO joined with its enclosing method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TodoMethod {
    pub method: MethodRecord,
    pub todo: TodoInstance,
}

/// Wire form: `{project, file, commit, todo_text, todo_line, method_name, span, lines}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoMethodRecord {
    pub project: String,
    pub file: String,
    pub commit: String,
    pub todo_text: String,
    pub todo_line: u32,
    pub method_name: String,
    pub span: [u32; 2],
    pub lines: Vec<String>,
    #[serde(default)]
    pub is_async: bool,
}

impl From<&TodoMethod> for TodoMethodRecord {
    fn from(tm: &TodoMethod) -> Self {
        Self {
            project: tm.method.project.clone(),
            file: tm.method.file.clone(),
            commit: tm.todo.commit_hash.clone(),
            todo_text: tm.todo.comment_text.clone(),
            todo_line: tm.todo.line,
            method_name: tm.method.qualified_name.clone(),
            span: [tm.method.start_line, tm.method.end_line],
            lines: tm.method.source_lines.clone(),
            is_async: tm.method.contains_async,
        }
    }
}

impl From<TodoMethodRecord> for TodoMethod {
    fn from(r: TodoMethodRecord) -> Self {
        let method = MethodRecord {
            project: r.project.clone(),
            file: r.file.clone(),
            commit: r.commit.clone(),
            qualified_name: r.method_name,
            start_line: r.span[0],
            end_line: r.span[1],
            source_lines: r.lines,
            contains_async: r.is_async,
            has_todo: true,
        };
        let todo = TodoInstance {
            project: r.project,
            comment_text: r.todo_text,
            file: r.file,
            line: r.todo_line,
            commit_hash: r.commit,
            enclosing_method: Some(0),
        };
        TodoMethod { method, todo }
    }
}

/// Outcome of extracting one file snapshot.
#[derive(Debug, Clone, Default)]
pub struct FileExtraction {
    pub kept: Vec<TodoMethod>,
    /// All methods of the snapshot; empty when parsing failed.
    pub methods: Vec<MethodRecord>,
    pub counts: RuleCounts,
}

/// Normalize, parse, locate and filter the TODO lines of one file snapshot.
pub fn extract_file(
    project: &str,
    file: &str,
    commit: &str,
    raw: &[u8],
    todo_lines: &[TodoLine],
    opts: &ParseOptions,
) -> FileExtraction {
    let text = normalize_bytes(raw);
    let source = SourceFile {
        project,
        file,
        commit,
        text: &text,
    };
    let parsed = Grammar::for_path(file).and_then(|g| parse_methods(&source, g, opts));
    let mut out = FileExtraction::default();
    let candidates = match &parsed {
        Ok(p) => {
            let (instances, not_comment) = locate_todos(p, todo_lines, project, commit, &opts.marker);
            out.counts.not_comment = not_comment;
            instances
                .into_iter()
                .map(|todo| RuleCandidate { todo, parsed: true })
                .collect()
        }
        Err(e) => {
            log::debug!("{e}");
            unparsed_todos(todo_lines, project, commit, &opts.marker)
                .into_iter()
                .map(|todo| RuleCandidate { todo, parsed: false })
                .collect()
        }
    };
    let (kept, counts) = apply_filter_rules(candidates);
    out.counts.merge(&counts);
    if let Ok(p) = parsed {
        out.kept = kept
            .into_iter()
            .map(|todo| {
                let idx = todo.enclosing_method.expect("rule 2 guarantees a method");
                TodoMethod {
                    method: p.methods[idx].clone(),
                    todo,
                }
            })
            .collect();
        out.methods = p.methods;
    }
    out
}
