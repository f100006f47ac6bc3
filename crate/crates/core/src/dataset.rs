//! On-disk datasets.
//!
//! Every example is a directory with `input.csv`, `target.csv`, `graphs.txt`
//! (one graph block per step, or a single block for a fixed graph),
//! `meta.json` and, for planning, `goals.csv`. A split is a directory of
//! zero-padded example directories read back in name order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flocking::Vec2;
use crate::graph::Graph;
use crate::signal::SpaceTimeSignal;
use crate::stgnn::Example;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub task: String,
    pub seed: u64,
    pub ts: f64,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub n_features: usize,
    pub mean_degree: f64,
    /// Echo of the generating configuration.
    pub config: serde_json::Value,
}

impl ExampleMeta {
    pub fn describe(task: &str, seed: u64, example: &Example, config: serde_json::Value) -> Self {
        let graphs = example.graphs.as_slice();
        let n = example.input.nodes();
        let total: usize = graphs.iter().map(|g| g.degrees().iter().sum::<usize>()).sum();
        Self {
            task: task.to_string(),
            seed,
            ts: example.input.grid().ts,
            n_nodes: n,
            n_steps: example.input.steps(),
            n_features: example.input.features(),
            mean_degree: total as f64 / (n * graphs.len()).max(1) as f64,
            config,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StoredExample {
    pub example: Example,
    pub meta: ExampleMeta,
    pub goals: Option<Vec<Vec2>>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn graphs_to_text(graphs: &[Graph]) -> String {
    graphs.iter().map(Graph::to_text).collect()
}

pub fn graphs_from_text(text: &str) -> std::result::Result<Vec<Graph>, String> {
    let mut lines = text.lines().peekable();
    let mut out = Vec::new();
    loop {
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        if lines.peek().is_none() {
            break;
        }
        out.push(Graph::parse_block(&mut lines).map_err(|e| format!("graph {}: {e}", out.len()))?);
    }
    if out.is_empty() {
        return Err("no graphs".into());
    }
    Ok(out)
}

pub fn points_to_csv(points: &[Vec2]) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        writeln!(s, "{:?},{:?}", p[0], p[1]).unwrap();
    }
    s
}

pub fn points_from_csv(text: &str) -> std::result::Result<Vec<Vec2>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "x,y" => {}
        other => return Err(format!("bad header {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let (x, y) = l.split_once(',').ok_or_else(|| format!("line {}: expected x,y", k + 2))?;
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", k + 2));
            Ok([p(x)?, p(y)?])
        })
        .collect()
}

pub fn save_example(dir: &Path, example: &Example, meta: &ExampleMeta, goals: Option<&[Vec2]>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("input.csv"), &example.input.to_csv())?;
    write(&dir.join("target.csv"), &example.target.to_csv())?;
    write(&dir.join("graphs.txt"), &graphs_to_text(&example.graphs))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write(&dir.join("meta.json"), &(json + "\n"))?;
    if let Some(g) = goals {
        write(&dir.join("goals.csv"), &points_to_csv(g))?;
    }
    Ok(())
}

pub fn load_example(dir: &Path) -> Result<StoredExample> {
    let meta_path = dir.join("meta.json");
    let meta: ExampleMeta = serde_json::from_str(&read(&meta_path)?).map_err(|e| parse_err(&meta_path, e.to_string()))?;
    let input = SpaceTimeSignal::load_csv(&dir.join("input.csv"), meta.ts)?;
    let target = SpaceTimeSignal::load_csv(&dir.join("target.csv"), meta.ts)?;
    let graphs_path = dir.join("graphs.txt");
    let graphs = graphs_from_text(&read(&graphs_path)?).map_err(|r| parse_err(&graphs_path, r))?;
    let goals_path = dir.join("goals.csv");
    let goals = if goals_path.exists() {
        Some(points_from_csv(&read(&goals_path)?).map_err(|r| parse_err(&goals_path, r))?)
    } else {
        None
    };
    let example = Example::new(input, target, graphs)?;
    Ok(StoredExample { example, meta, goals })
}

pub fn example_dir(split_dir: &Path, index: usize) -> PathBuf {
    split_dir.join(format!("{index:05}"))
}

/// Examples of a split in directory-name order.
pub fn load_split(split_dir: &Path) -> Result<Vec<StoredExample>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(split_dir)
        .map_err(|e| Error::io(split_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_example(d)).collect()
}
