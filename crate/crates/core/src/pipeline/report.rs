use std::path::{Path, PathBuf};

use super::stages::{DETECTION_CSV, RANKING_CSV};
use super::PipelineError;

/// One printed row: the approach name and its formatted metric cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub approach: String,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Approach x metric tables for detection and, when present, patch ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub detection: Table,
    pub ranking: Option<Table>,
}

const DETECTION_COLUMNS: [(&str, &str); 4] = [
    ("precision", "P"),
    ("recall", "R"),
    ("f1", "F1"),
    ("macro_f1", "macro F1"),
];

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| PipelineError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::io(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn cell(value: &str) -> Result<String, PipelineError> {
    let v: f64 = value
        .parse()
        .map_err(|_| PipelineError::Corrupt(format!("metric value `{value}` is not a number")))?;
    Ok(format!("{v:.3}"))
}

fn select(
    path: &Path,
    title: &str,
    columns: &[(String, String)],
) -> Result<Table, PipelineError> {
    let (header, rows) = read_csv(path)?;
    let index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::Corrupt(format!("{}: no column `{name}`", path.display())))
    };
    let approach = index("approach")?;
    let idx: Vec<usize> = columns.iter().map(|(c, _)| index(c)).collect::<Result<_, _>>()?;
    let rows = rows
        .iter()
        .map(|r| {
            Ok(ReportRow {
                approach: r[approach].clone(),
                cells: idx.iter().map(|&i| cell(&r[i])).collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(Table {
        title: title.to_string(),
        header: columns.iter().map(|(_, label)| label.clone()).collect(),
        rows,
    })
}

/// Reads `eval/detection.csv` and, if present, `eval/ranking.csv`.
pub fn load_report(run_dir: &Path) -> Result<Report, PipelineError> {
    let det = run_dir.join(DETECTION_CSV);
    if !det.exists() {
        return Err(PipelineError::MissingResults(run_dir.to_path_buf()));
    }
    let det_cols: Vec<(String, String)> = DETECTION_COLUMNS
        .iter()
        .map(|(c, l)| (c.to_string(), l.to_string()))
        .collect();
    let detection = select(&det, "Detection", &det_cols)?;
    let rank = run_dir.join(RANKING_CSV);
    let ranking = if rank.exists() {
        let mut cols = Vec::new();
        for prefix in ["p", "dcg"] {
            for k in crate::eval::RANK_CUTOFFS {
                cols.push((format!("{prefix}@{k}"), format!("{}@{k}", prefix.to_uppercase())));
            }
        }
        Some(select(&rank, "Patching", &cols)?)
    } else {
        None
    };
    Ok(Report { detection, ranking })
}

pub(crate) fn render_table(t: &Table) -> String {
    let name_w = t
        .rows
        .iter()
        .map(|r| r.approach.len())
        .chain(["approach".len()])
        .max()
        .unwrap_or(8);
    let widths: Vec<usize> = t
        .header
        .iter()
        .enumerate()
        .map(|(i, h)| t.rows.iter().map(|r| r.cells[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("{}\n", t.title);
    let mut line = format!("{:<name_w$}", "approach");
    for (h, w) in t.header.iter().zip(&widths) {
        line.push_str(&format!("  {h:>w$}"));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for r in &t.rows {
        let mut line = format!("{:<name_w$}", r.approach);
        for (c, w) in r.cells.iter().zip(&widths) {
            line.push_str(&format!("  {c:>w$}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Plain-text rendering. A missing ranking table is replaced by a note.
pub fn render_report(r: &Report) -> String {
    let mut out = render_table(&r.detection);
    out.push('\n');
    match &r.ranking {
        Some(t) => out.push_str(&render_table(t)),
        None => out.push_str("Patching: no ranking results found; table omitted.\n"),
    }
    out
}

fn write_table_csv(path: &Path, t: &Table) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::io(path, e))?;
    let mut header = vec!["approach".to_string()];
    header.extend(t.header.iter().cloned());
    w.write_record(&header).map_err(|e| PipelineError::io(path, e))?;
    for r in &t.rows {
        let mut rec = vec![r.approach.clone()];
        rec.extend(r.cells.iter().cloned());
        w.write_record(&rec).map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Writes `report/report.txt` and one CSV per table holding the printed values.
pub fn write_report(run_dir: &Path, r: &Report) -> Result<Vec<PathBuf>, PipelineError> {
    let dir = run_dir.join("report");
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let mut files = vec![dir.join("detection.csv")];
    write_table_csv(&files[0], &r.detection)?;
    if let Some(t) = &r.ranking {
        let p = dir.join("ranking.csv");
        write_table_csv(&p, t)?;
        files.push(p);
    }
    let txt = dir.join("report.txt");
    std::fs::write(&txt, render_report(r)).map_err(|e| PipelineError::io(&txt, e))?;
    files.push(txt);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rel: &str, text: &str) {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    const DET: &str = "approach,threshold,precision,recall,f1,tp,fp,fn,macro_precision,macro_recall,macro_f1\n\
model,0.9,0.9,0.8,0.8470588235294118,8,1,2,0.9,0.8,0.84\n\
RG,,0.0625,0.5,0.1111111111111111,5,75,5,0.06,0.5,0.1\n";

    #[test]
    fn missing_results_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_report(dir.path()), Err(PipelineError::MissingResults(_))));
    }

    #[test]
    fn missing_ranking_is_noted() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), DETECTION_CSV, DET);
        let r = load_report(dir.path()).unwrap();
        assert_eq!(r.detection.rows.len(), 2);
        assert!(r.ranking.is_none());
        let text = render_report(&r);
        assert!(text.contains("table omitted"));
        assert!(text.contains("0.847"));
    }

    #[test]
    fn written_csv_matches_printed_cells() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), DETECTION_CSV, DET);
        let r = load_report(dir.path()).unwrap();
        let files = write_report(dir.path(), &r).unwrap();
        let (header, rows) = read_csv(&files[0]).unwrap();
        assert_eq!(header, ["approach", "P", "R", "F1", "macro F1"]);
        for (row, printed) in rows.iter().zip(&r.detection.rows) {
            assert_eq!(row[0], printed.approach);
            assert_eq!(&row[1..], &printed.cells[..]);
        }
    }
}
