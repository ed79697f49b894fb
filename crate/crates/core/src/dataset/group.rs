use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::extract::TodoMethod;

/// TODO-introduced methods of one project sharing the same TODO text.
#[derive(Debug, Clone)]
pub struct MethodGroup {
    pub group_id: String,
    pub project: String,
    pub todo_text: String,
    pub members: Vec<TodoMethod>,
}

/// Whitespace runs collapse to one space; case is preserved.
pub fn normalize_todo_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn group_id(project: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(project.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(&h.finalize()[..6])
}

/// Groups per project by identical normalized TODO text and drops singletons.
///
/// A method that received the same TODO twice (in different commits) is kept
/// once. Groups come out ordered by (project, text).
pub fn group_by_todo(items: Vec<TodoMethod>) -> Vec<MethodGroup> {
    let mut buckets: BTreeMap<(String, String), Vec<TodoMethod>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for item in items {
        let text = normalize_todo_text(&item.todo.comment_text);
        let key = (
            item.method.project.clone(),
            text.clone(),
            item.method.file.clone(),
            item.method.qualified_name.clone(),
        );
        if !seen.insert(key) {
            continue;
        }
        buckets
            .entry((item.method.project.clone(), text))
            .or_default()
            .push(item);
    }
    buckets
        .into_iter()
        .filter(|(_, members)| members.len() >= 2)
        .map(|((project, todo_text), members)| MethodGroup {
            group_id: group_id(&project, &todo_text),
            project,
            todo_text,
            members,
        })
        .collect()
}
