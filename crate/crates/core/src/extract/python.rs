//! Method extraction for Python sources on top of tree-sitter.

use tree_sitter::{Node, Parser};

use super::{Comment, ExtractError, MethodRecord, ParseOptions, ParsedFile, SourceFile};

pub(super) fn parse(source: &SourceFile<'_>, opts: &ParseOptions) -> Result<ParsedFile, ExtractError> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .expect("bundled python grammar matches the tree-sitter ABI");
    let tree = parser
        .parse(source.text, None)
        .ok_or_else(|| ExtractError::ParseFailure {
            file: source.file.to_string(),
            reason: "parser returned no tree".into(),
        })?;
    let root = tree.root_node();
    if root.has_error() {
        return Err(ExtractError::ParseFailure {
            file: source.file.to_string(),
            reason: first_error(root)
                .map(|n| format!("syntax error at line {}", n.start_position().row + 1))
                .unwrap_or_else(|| "syntax error".into()),
        });
    }

    let lines: Vec<&str> = source.text.split('\n').collect();
    let mut spans = Vec::new();
    let mut comments = Vec::new();
    let mut scope = Vec::new();
    walk(root, source.text, &lines, &mut scope, &mut spans, &mut comments);
    comments.sort_by_key(|c| (c.line, c.column));

    let stripped = if opts.strip_comments {
        strip_comments(&lines, &comments)
    } else {
        lines.iter().map(|l| l.to_string()).collect()
    };

    let methods = spans
        .into_iter()
        .map(|span| {
            let lo = span.start as usize - 1;
            let hi = (span.end as usize).min(stripped.len());
            let has_todo = comments
                .iter()
                .any(|c| c.line >= span.start && c.line <= span.end && c.text.contains(&opts.marker));
            MethodRecord {
                project: source.project.to_string(),
                file: source.file.to_string(),
                commit: source.commit.to_string(),
                qualified_name: span.name,
                start_line: span.start,
                end_line: span.end,
                source_lines: stripped[lo..hi].to_vec(),
                contains_async: span.is_async,
                has_todo,
            }
        })
        .collect();
    Ok(ParsedFile { methods, comments })
}

struct Span {
    name: String,
    start: u32,
    end: u32,
    is_async: bool,
}

fn first_error(node: Node<'_>) -> Option<Node<'_>> {
    if node.is_error() || node.is_missing() {
        return Some(node);
    }
    let mut cursor = node.walk();
    let children: Vec<Node<'_>> = node.children(&mut cursor).collect();
    children.into_iter().filter(|c| c.has_error()).find_map(first_error)
}

fn walk(
    node: Node<'_>,
    text: &str,
    lines: &[&str],
    scope: &mut Vec<String>,
    spans: &mut Vec<Span>,
    comments: &mut Vec<Comment>,
) {
    let kind = node.kind();
    let mut pushed = false;
    match kind {
        "comment" => {
            let pos = node.start_position();
            let line_text = lines.get(pos.row).copied().unwrap_or("");
            comments.push(Comment {
                line: pos.row as u32 + 1,
                column: pos.column,
                text: text[node.byte_range()].to_string(),
                own_line: line_text[..pos.column.min(line_text.len())].trim().is_empty(),
            });
            return;
        }
        "function_definition" | "class_definition" => {
            let name = node
                .child_by_field_name("name")
                .map(|n| text[n.byte_range()].to_string())
                .unwrap_or_default();
            if kind == "function_definition" {
                let mut cursor = node.walk();
                let is_async = node.children(&mut cursor).any(|c| c.kind() == "async");
                let start = node.start_position();
                let end = node.end_position();
                let end_row = if end.column == 0 && end.row > start.row {
                    end.row - 1
                } else {
                    end.row
                };
                let mut qualified = scope.clone();
                qualified.push(name.clone());
                spans.push(Span {
                    name: qualified.join("."),
                    start: start.row as u32 + 1,
                    end: end_row as u32 + 1,
                    is_async,
                });
            }
            scope.push(name);
            pushed = true;
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        walk(child, text, lines, scope, spans, comments);
    }
    if pushed {
        scope.pop();
    }
}

/// Comment-only lines become empty; inline comments are cut off.
fn strip_comments(lines: &[&str], comments: &[Comment]) -> Vec<String> {
    let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    for c in comments {
        let idx = c.line as usize - 1;
        if let Some(line) = out.get_mut(idx) {
            let cut = c.column.min(line.len());
            line.truncate(cut);
            let trimmed = line.trim_end().len();
            line.truncate(trimmed);
        }
    }
    out
}
