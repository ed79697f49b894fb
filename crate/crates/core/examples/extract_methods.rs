//! Extracts the methods of a Python file and keeps the TODO comments that
//! pass the filtering rules, treating every line holding the marker as newly
//! added.
//!
//! ```text
//! cargo run --example extract_methods -- [file.py]
//! ```

use todo_patcher::extract::{extract_file, ParseOptions};
use todo_patcher::miner::TodoLine;

const DEMO: &str = "\
# TODO: split this module once it grows
class Cache:
    def get(self, key):
        # TODO: evict stale entries before reading
        value = self.store.get(key)
        return value

    def put(self, key, value):
        # TODO: fix
        self.store[key] = value

    def keys(self):
        label = \"TODO: not a comment at all\"
        return list(self.store)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (path, text) = match std::env::args().nth(1) {
        Some(p) => (p.clone(), std::fs::read_to_string(&p)?),
        None => ("cache.py".to_string(), DEMO.to_string()),
    };
    let opts = ParseOptions::default();
    let todos: Vec<TodoLine> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.contains(&opts.marker))
        .map(|(i, l)| TodoLine {
            path: path.clone(),
            line: i as u32 + 1,
            text: l.to_string(),
        })
        .collect();

    let x = extract_file("demo", &path, "HEAD", text.as_bytes(), &todos, &opts);
    println!("methods:");
    for m in &x.methods {
        println!("    {:<20} lines {}-{}", m.qualified_name, m.start_line, m.end_line);
    }
    println!("kept:");
    for k in &x.kept {
        println!("    {} line {}: {}", k.method.qualified_name, k.todo.line, k.todo.comment_text);
    }
    let c = x.counts;
    println!(
        "dropped: {} too short, {} outside a method, {} in unparsable files, {} not comments",
        c.short_comment, c.outside_method, c.parse_failure, c.not_comment
    );
    Ok(())
}
