//! Graph bundles: a directory with `meta.json`, `edges.tsv`, `features.tsv`
//! and an optional `labels.tsv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::reports::fmt_num;
use crate::error::{Error, Result};
use crate::graph::SparseNetwork;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub directed: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers. A single trailing
/// newline is allowed; blank lines elsewhere are errors.
fn lines(path: &Path, text: &str) -> Result<Vec<(usize, String)>> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, l)| {
            let l = l.strip_suffix('\r').unwrap_or(l);
            if l.trim().is_empty() {
                Err(parse_err(path, i + 1, "empty line"))
            } else {
                Ok((i + 1, l.to_owned()))
            }
        })
        .collect()
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn count_err(path: PathBuf, what: &str, want: usize, got: usize) -> Error {
    Error::Data {
        path,
        msg: format!("expected {want} {what}, found {got}"),
    }
}

/// Loads and validates a bundle.
pub fn load_bundle(dir: &Path) -> Result<(BundleMeta, SparseNetwork)> {
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(&read(&meta_path)?).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    let (n, f) = (meta.num_nodes, meta.num_features);
    if f == 0 {
        return Err(Error::Data {
            path: meta_path,
            msg: "num_features must be at least 1".into(),
        });
    }

    let fpath = dir.join("features.tsv");
    let rows = lines(&fpath, &read(&fpath)?)?;
    if rows.len() != n {
        return Err(count_err(fpath, "feature rows", n, rows.len()));
    }
    let mut features = Array2::zeros((n, f));
    for (r, (line, text)) in rows.iter().enumerate() {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != f {
            return Err(parse_err(
                &fpath,
                *line,
                format!("expected {f} values, found {}", fields.len()),
            ));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(&fpath, *line, format!("column {}: {field:?} is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(
                    &fpath,
                    *line,
                    format!("column {}: value is not finite", c + 1),
                ));
            }
            features[[r, c]] = v;
        }
    }

    let epath = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (line, text) in lines(&epath, &read(&epath)?)? {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                &epath,
                line,
                format!("expected src<TAB>dst, found {} fields", fields.len()),
            ));
        }
        let node = |s: &str| -> Result<usize> {
            let v: usize = s
                .trim()
                .parse()
                .map_err(|_| parse_err(&epath, line, format!("{s:?} is not a node index")))?;
            if v >= n {
                return Err(parse_err(&epath, line, format!("node {v} out of range for {n} nodes")));
            }
            Ok(v)
        };
        edges.push((node(fields[0])?, node(fields[1])?));
    }

    let lpath = dir.join("labels.tsv");
    let labels = if lpath.exists() {
        let rows = lines(&lpath, &read(&lpath)?)?;
        if rows.len() != n {
            return Err(count_err(lpath, "labels", n, rows.len()));
        }
        let labels = rows
            .iter()
            .map(|(line, t)| match t.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(&lpath, *line, format!("label {other:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Some(labels)
    } else {
        None
    };

    let net = SparseNetwork::new(edges, features, labels, meta.directed).map_err(|e| Error::Data {
        path: dir.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok((meta, net))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `net` as a bundle named `name`. Values are written in shortest
/// round-trip form, so loading gives back the same network.
pub fn save_bundle(net: &SparseNetwork, name: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta {
        name: name.to_owned(),
        num_nodes: net.num_nodes(),
        num_features: net.num_features(),
        directed: net.is_directed(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write(&dir.join("meta.json"), &(json + "\n"))?;

    let mut edges = String::new();
    for (u, v) in net.edges() {
        writeln!(edges, "{u}\t{v}").expect("write to string");
    }
    write(&dir.join("edges.tsv"), &edges)?;

    let mut feats = String::new();
    for row in net.features().rows() {
        let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        feats.push_str(&cells.join("\t"));
        feats.push('\n');
    }
    write(&dir.join("features.tsv"), &feats)?;

    let lpath = dir.join("labels.tsv");
    match net.labels() {
        Some(labels) => {
            let text: String = labels.iter().map(|l| if *l { "1\n" } else { "0\n" }).collect();
            write(&lpath, &text)?;
        }
        None if lpath.exists() => fs::remove_file(&lpath).map_err(|e| Error::io(&lpath, e))?,
        None => {}
    }
    Ok(())
}
