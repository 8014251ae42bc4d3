//! CSV reports. Every file has a header row, LF line endings, and numbers in
//! shortest round-trip form.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{summarize, Evaluation};
use crate::scorer::{EnergyRecord, ProfileRow, ScoreReport};
use crate::train::EpochLoss;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Data {
            path: path.into(),
            msg: format!("{other:?}"),
        },
    }
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `epoch,loss_x,loss_a`
pub fn write_loss_csv(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    write_csv(
        path,
        &["epoch", "loss_x", "loss_a"],
        curve
            .iter()
            .map(|l| vec![l.epoch.to_string(), fmt_num(l.loss_x), fmt_num(l.loss_a)]),
    )
}

/// `node_id,score[,label]` by descending score, ties by ascending id.
pub fn write_scores_csv(path: &Path, report: &ScoreReport, labels: Option<&[bool]>) -> Result<()> {
    let mut header = vec!["node_id", "score"];
    if labels.is_some() {
        header.push("label");
    }
    let score_of: std::collections::HashMap<usize, f64> = report
        .nodes
        .iter()
        .copied()
        .zip(report.scores.iter().copied())
        .collect();
    let rows = report.ranking().into_iter().map(|v| {
        let mut row = vec![v.to_string(), fmt_num(score_of[&v])];
        if let Some(l) = labels {
            row.push(if l[v] { "1" } else { "0" }.to_owned());
        }
        row
    });
    write_csv(path, &header, rows)
}

/// `node_id,tau,sample,dissimilarity,energy_orig,energy_recon`
pub fn write_breakdown_csv(path: &Path, report: &ScoreReport) -> Result<()> {
    write_csv(
        path,
        &[
            "node_id",
            "tau",
            "sample",
            "dissimilarity",
            "energy_orig",
            "energy_recon",
        ],
        report.records.iter().map(|r| {
            vec![
                r.node.to_string(),
                fmt_num(r.tau),
                r.sample.to_string(),
                fmt_num(r.dissimilarity),
                fmt_num(r.energy.original),
                fmt_num(r.energy.reconstructed),
            ]
        }),
    )
}

/// `solver,tau,error_x,error_a`
pub fn write_profile_csv(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    write_csv(
        path,
        &["solver", "tau", "error_x", "error_a"],
        rows.iter().map(|r| {
            vec![
                r.solver.to_string(),
                fmt_num(r.tau),
                fmt_num(r.error_x),
                fmt_num(r.error_a),
            ]
        }),
    )
}

/// `node_id,tau,sample,energy_orig,energy_recon,energy_diff`
pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    write_csv(
        path,
        &["node_id", "tau", "sample", "energy_orig", "energy_recon", "energy_diff"],
        records.iter().map(|r| {
            vec![
                r.node.to_string(),
                fmt_num(r.tau),
                r.sample.to_string(),
                fmt_num(r.energy_orig),
                fmt_num(r.energy_recon),
                fmt_num(r.energy_diff),
            ]
        }),
    )
}

/// Metrics of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub trial: usize,
    pub eval: Evaluation,
}

/// `trial,metric,value`, one row per trial and metric, followed by `mean`,
/// `std` (population) and `max` rows per metric.
pub fn write_eval_csv(path: &Path, trials: &[TrialMetrics]) -> Result<()> {
    type Metric = (&'static str, fn(&Evaluation) -> f64);
    let metrics: [Metric; 3] = [
        ("roc_auc", |e| e.roc_auc),
        ("average_precision", |e| e.average_precision),
        ("recall_at_k", |e| e.recall_at_k),
    ];
    let mut rows = Vec::new();
    for t in trials {
        for (name, get) in &metrics {
            rows.push(vec![t.trial.to_string(), (*name).to_owned(), fmt_num(get(&t.eval))]);
        }
    }
    let mut aggregates = [Vec::new(), Vec::new(), Vec::new()];
    for (name, get) in &metrics {
        let values: Vec<f64> = trials.iter().map(|t| get(&t.eval)).collect();
        if let Some((mean, std, max)) = summarize(&values) {
            aggregates[0].push(vec!["mean".to_owned(), (*name).to_owned(), fmt_num(mean)]);
            aggregates[1].push(vec!["std".to_owned(), (*name).to_owned(), fmt_num(std)]);
            aggregates[2].push(vec!["max".to_owned(), (*name).to_owned(), fmt_num(max)]);
        }
    }
    rows.extend(aggregates.into_iter().flatten());
    write_csv(path, &["trial", "metric", "value"], rows)
}

/// One row of a score CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub node: usize,
    pub score: f64,
    pub label: Option<bool>,
}

/// Reads a file written by [`write_scores_csv`].
pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let has_label = match header.iter().collect::<Vec<_>>().as_slice() {
        ["node_id", "score"] => false,
        ["node_id", "score", "label"] => true,
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
            })
        }
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let node = rec[0].parse().map_err(|_| bad(format!("node_id {:?}", &rec[0])))?;
        let score = rec[1].parse().map_err(|_| bad(format!("score {:?}", &rec[1])))?;
        let label = if has_label {
            Some(match &rec[2] {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("label {other:?}"))),
            })
        } else {
            None
        };
        out.push(ScoreRow { node, score, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e22, 123456789.12345679, 0.0] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("scores.csv");
        let report = ScoreReport {
            nodes: vec![],
            scores: vec![],
            records: vec![],
        };
        write_scores_csv(&path, &report, None).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "node_id,score\n");
        write_breakdown_csv(&path, &report).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "node_id,tau,sample,dissimilarity,energy_orig,energy_recon\n"
        );
    }

    #[test]
    fn scores_are_sorted_and_readable() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("scores.csv");
        let report = ScoreReport {
            nodes: vec![0, 1, 2],
            scores: vec![0.25, 1.5, 0.25],
            records: vec![],
        };
        write_scores_csv(&path, &report, Some(&[false, true, false])).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "node_id,score,label\n1,1.5,1\n0,0.25,0\n2,0.25,0\n"
        );
        let rows = read_scores_csv(&path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(
            rows[0],
            ScoreRow {
                node: 1,
                score: 1.5,
                label: Some(true)
            }
        );
    }
}
