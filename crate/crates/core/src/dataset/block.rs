use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::extract::{MethodRecord, TodoInstance};

/// Where the centrepiece and context lines are taken from, relative to the
/// TODO comment. Offsets and radii count code lines, not raw lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockGeometry {
    /// `+1` is the first code line after the TODO, `-1` the last one before it.
    pub centrepiece_offset: i32,
    /// Code lines taken on each side of the TODO, skipping the centrepiece.
    pub context_radius: usize,
}

impl Default for BlockGeometry {
    fn default() -> Self {
        Self {
            centrepiece_offset: 1,
            context_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid geometry `{0}`: expected e.g. `cen=+1,con=2` with a non-zero centrepiece offset")]
pub struct GeometryParseError(pub String);

impl BlockGeometry {
    pub fn new(centrepiece_offset: i32, context_radius: usize) -> Result<Self, GeometryParseError> {
        if centrepiece_offset == 0 {
            return Err(GeometryParseError(format!("cen={centrepiece_offset}")));
        }
        Ok(Self {
            centrepiece_offset,
            context_radius,
        })
    }

    /// Code lines in a full window: the centrepiece plus both context sides.
    pub fn window_len(&self) -> usize {
        1 + 2 * self.context_radius
    }

    /// The block-geometry variants compared against the default.
    pub fn variants() -> Vec<(&'static str, BlockGeometry)> {
        vec![
            ("default", BlockGeometry::default()),
            ("CEN-1", BlockGeometry::new(-1, 2).unwrap()),
            ("CEN+1", BlockGeometry::new(2, 2).unwrap()),
            ("CON_1", BlockGeometry::new(1, 1).unwrap()),
            ("CON_3", BlockGeometry::new(1, 3).unwrap()),
        ]
    }
}

impl fmt::Display for BlockGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cen={:+},con={}", self.centrepiece_offset, self.context_radius)
    }
}

impl FromStr for BlockGeometry {
    type Err = GeometryParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryParseError(s.to_string());
        let mut geom = BlockGeometry::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "cen" => geom.centrepiece_offset = value.trim().parse().map_err(|_| bad())?,
                "con" => geom.context_radius = value.trim().parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        BlockGeometry::new(geom.centrepiece_offset, geom.context_radius).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockOrigin {
    pub project: String,
    pub file: String,
    #[serde(default)]
    pub commit: String,
    #[serde(default)]
    pub method: String,
    pub centre_line: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub todo_line: Option<u32>,
}

/// `[TODO comment, centrepiece, context]`, the unit of embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    #[serde(rename = "todo")]
    pub todo_text: String,
    #[serde(rename = "cen")]
    pub centrepiece: String,
    #[serde(rename = "con")]
    pub context: Vec<String>,
    pub origin: BlockOrigin,
}

/// Anchor/positive block of a TODO-introduced method.
///
/// The TODO line itself never contributes code; blank and comment-only lines
/// are skipped. Context is truncated, not padded, on a short side.
pub fn build_code_block(
    method: &MethodRecord,
    todo: &TodoInstance,
    geom: &BlockGeometry,
) -> Result<CodeBlock, DatasetError> {
    let no_cen = || DatasetError::NoCentrepiece {
        file: method.file.clone(),
        line: todo.line,
    };
    if !method.contains_line(todo.line) {
        return Err(no_cen());
    }
    let code = method.code_lines();
    let before: Vec<_> = code.iter().filter(|c| c.line < todo.line).collect();
    let after: Vec<_> = code.iter().filter(|c| c.line > todo.line).collect();
    let step = geom.centrepiece_offset.unsigned_abs() as usize;
    let cen = if geom.centrepiece_offset > 0 {
        after.get(step - 1)
    } else {
        before.len().checked_sub(step).and_then(|i| before.get(i))
    }
    .copied()
    .ok_or_else(no_cen)?;

    let r = geom.context_radius;
    let ctx_before: Vec<_> = before.iter().filter(|c| c.line != cen.line).collect();
    let ctx_after: Vec<_> = after.iter().filter(|c| c.line != cen.line).collect();
    let context = ctx_before[ctx_before.len().saturating_sub(r)..]
        .iter()
        .chain(ctx_after.iter().take(r))
        .map(|c| c.text.to_string())
        .collect();

    Ok(CodeBlock {
        todo_text: super::normalize_todo_text(&todo.comment_text),
        centrepiece: cen.text.to_string(),
        context,
        origin: BlockOrigin {
            project: method.project.clone(),
            file: method.file.clone(),
            commit: method.commit.clone(),
            method: method.qualified_name.clone(),
            centre_line: cen.line,
            todo_line: Some(todo.line),
        },
    })
}
