use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{render_table, ReportRow, Table};
use super::stages::MODEL_ROW;
use super::{run_pipeline, EvalSummary, PipelineError, RunConfig, RunLock};
use crate::dataset::BlockGeometry;

/// Model scores of one geometry variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub variant: String,
    pub geometry: String,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub dcg_at_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryComparison {
    pub rows: Vec<GeometryRow>,
}

impl GeometryComparison {
    pub fn table(&self) -> Table {
        Table {
            title: "Block geometry variants".to_string(),
            header: ["geometry", "theta", "P", "R", "F1", "P@1", "P@5", "DCG@5"]
                .map(String::from)
                .to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| ReportRow {
                    approach: r.variant.clone(),
                    cells: std::iter::once(r.geometry.clone())
                        .chain(
                            [r.threshold, r.precision, r.recall, r.f1, r.p_at_1, r.p_at_5, r.dcg_at_5]
                                .map(|v| format!("{v:.3}")),
                        )
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        render_table(&self.table())
    }
}

/// Runs the full pipeline once per variant under `output_dir/geometry/<name>`
/// and writes `comparison.csv` and `comparison.txt` next to the variant runs.
pub fn compare_geometries(
    cfg: &RunConfig,
    variants: &[(&str, BlockGeometry)],
) -> Result<GeometryComparison, PipelineError> {
    cfg.validate()?;
    let _lock = RunLock::acquire(&cfg.output_dir)?;
    let root = cfg.output_dir.join("geometry");
    let mut rows = Vec::new();
    for (name, geom) in variants {
        let mut v = cfg.clone();
        v.geometry = *geom;
        v.output_dir = root.join(name);
        log::info!("geometry {name} ({geom})");
        run_pipeline(v.clone())?;
        let summary = read_summary(&v.output_dir)?;
        let row = summary
            .rows
            .iter()
            .find(|r| r.approach == MODEL_ROW)
            .ok_or_else(|| PipelineError::Corrupt(format!("no model row for variant {name}")))?;
        let rank = row
            .ranking
            .as_ref()
            .ok_or_else(|| PipelineError::Corrupt(format!("no ranking for variant {name}")))?;
        rows.push(GeometryRow {
            variant: name.to_string(),
            geometry: geom.to_string(),
            threshold: summary.threshold,
            precision: row.detection.precision,
            recall: row.detection.recall,
            f1: row.detection.f1,
            p_at_1: rank.p_at_k[&1],
            p_at_5: rank.p_at_k[&5],
            dcg_at_5: rank.dcg_at_k[&5],
        });
    }
    let cmp = GeometryComparison { rows };
    write_comparison(&root, &cmp)?;
    Ok(cmp)
}

fn read_summary(run_dir: &Path) -> Result<EvalSummary, PipelineError> {
    let path = run_dir.join("eval/summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Corrupt(format!("{}: {e}", path.display())))
}

fn write_comparison(root: &Path, cmp: &GeometryComparison) -> Result<PathBuf, PipelineError> {
    let path = root.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| PipelineError::io(&path, e))?;
    for r in &cmp.rows {
        w.serialize(r).map_err(|e| PipelineError::io(&path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))?;
    let txt = root.join("comparison.txt");
    std::fs::write(&txt, cmp.render()).map_err(|e| PipelineError::io(&txt, e))?;
    Ok(path)
}
