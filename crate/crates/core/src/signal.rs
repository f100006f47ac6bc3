//! Time-varying graph signals: an `F × N × T` real tensor on a sampling grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Permutation;
use crate::timeline::{self, SamplingGrid, WarpFunction};

/// `F × N × T` tensor. Stored feature-major, then time, then node, so that the
/// node vector of one feature at one step is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSignal {
    features: usize,
    nodes: usize,
    grid: SamplingGrid,
    data: Vec<f64>,
}

impl SpaceTimeSignal {
    pub fn zeros(features: usize, nodes: usize, grid: SamplingGrid) -> Self {
        Self {
            features,
            nodes,
            grid,
            data: vec![0.0; features * nodes * grid.n_steps],
        }
    }

    /// Builds from `f(feature, node, step)`.
    pub fn from_fn(
        features: usize,
        nodes: usize,
        grid: SamplingGrid,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut s = Self::zeros(features, nodes, grid);
        for g in 0..features {
            for t in 0..grid.n_steps {
                for n in 0..nodes {
                    s.set(g, n, t, f(g, n, t));
                }
            }
        }
        s
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn grid(&self) -> SamplingGrid {
        self.grid
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.features, self.nodes, self.grid.n_steps)
    }

    fn idx(&self, f: usize, n: usize, t: usize) -> usize {
        (f * self.grid.n_steps + t) * self.nodes + n
    }

    pub fn get(&self, f: usize, n: usize, t: usize) -> f64 {
        self.data[self.idx(f, n, t)]
    }

    pub fn set(&mut self, f: usize, n: usize, t: usize, v: f64) {
        let i = self.idx(f, n, t);
        self.data[i] = v;
    }

    /// Node vector of feature `f` at step `t`.
    pub fn frame(&self, f: usize, t: usize) -> &[f64] {
        let start = self.idx(f, 0, t);
        &self.data[start..start + self.nodes]
    }

    pub fn frame_mut(&mut self, f: usize, t: usize) -> &mut [f64] {
        let start = self.idx(f, 0, t);
        let n = self.nodes;
        &mut self.data[start..start + n]
    }

    /// All steps of feature `f`, `T·N` values.
    pub fn feature(&self, f: usize) -> &[f64] {
        let len = self.grid.n_steps * self.nodes;
        &self.data[f * len..(f + 1) * len]
    }

    pub fn feature_mut(&mut self, f: usize) -> &mut [f64] {
        let len = self.grid.n_steps * self.nodes;
        &mut self.data[f * len..(f + 1) * len]
    }

    /// Raw storage, layout `(f, t, n)`.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_raw(features: usize, nodes: usize, grid: SamplingGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != features * nodes * grid.n_steps {
            return Err(Error::Dimension(format!(
                "{} values for shape {features}x{nodes}x{}",
                data.len(),
                grid.n_steps
            )));
        }
        Ok(Self {
            features,
            nodes,
            grid,
            data,
        })
    }

    /// Time series of one `(feature, node)` channel.
    pub fn channel(&self, f: usize, n: usize) -> Vec<f64> {
        (0..self.steps()).map(|t| self.get(f, n, t)).collect()
    }

    pub fn set_channel(&mut self, f: usize, n: usize, values: &[f64]) {
        for (t, v) in values.iter().enumerate() {
            self.set(f, n, t, *v);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Relabels nodes: node `map[i]` of the result holds node `i` of `self` (`Pᵀ x`).
    pub fn permute_transpose(&self, perm: &Permutation) -> Self {
        let mut out = Self::zeros(self.features, self.nodes, self.grid);
        for f in 0..self.features {
            for t in 0..self.steps() {
                let moved = perm.apply_transpose_vec(self.frame(f, t));
                out.frame_mut(f, t).copy_from_slice(&moved);
            }
        }
        out
    }

    /// `P x`: node `i` of the result holds node `map[i]` of `self`.
    pub fn permute(&self, perm: &Permutation) -> Self {
        let mut out = Self::zeros(self.features, self.nodes, self.grid);
        for f in 0..self.features {
            for t in 0..self.steps() {
                let moved = perm.apply_vec(self.frame(f, t));
                out.frame_mut(f, t).copy_from_slice(&moved);
            }
        }
        out
    }

    /// Delays every channel by `d` samples (advances when negative), zero fill.
    pub fn shifted(&self, d: isize) -> Self {
        let mut out = Self::zeros(self.features, self.nodes, self.grid);
        let steps = self.steps() as isize;
        for f in 0..self.features {
            for t in 0..steps {
                let src = t - d;
                if (0..steps).contains(&src) {
                    let v = self.frame(f, src as usize).to_vec();
                    out.frame_mut(f, t as usize).copy_from_slice(&v);
                }
            }
        }
        out
    }

    /// Zeroes all steps `>= from`.
    pub fn truncated_after(&self, from: usize) -> Self {
        let mut out = self.clone();
        for f in 0..self.features {
            for t in from..self.steps() {
                out.frame_mut(f, t).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    /// Every channel observed on the warped timeline.
    pub fn warped(&self, warp: &WarpFunction) -> Result<Self> {
        let mut out = Self::zeros(self.features, self.nodes, self.grid);
        for f in 0..self.features {
            for n in 0..self.nodes {
                let ch = timeline::resample_warped(&self.channel(f, n), &self.grid, warp)?;
                out.set_channel(f, n, &ch);
            }
        }
        Ok(out)
    }

    /// Every channel resampled onto period `new_ts` over the same duration.
    pub fn regridded(&self, new_ts: f64) -> Result<Self> {
        let len = timeline::regrid_len(self.steps(), self.grid.ts, new_ts);
        let grid = SamplingGrid::new(new_ts, len)?;
        let mut out = Self::zeros(self.features, self.nodes, grid);
        for f in 0..self.features {
            for n in 0..self.nodes {
                let ch = timeline::regrid(&self.channel(f, n), self.grid.ts, new_ts)?;
                out.set_channel(f, n, &ch);
            }
        }
        Ok(out)
    }

    /// First `steps` steps.
    pub fn prefix(&self, steps: usize) -> Result<Self> {
        let grid = SamplingGrid::new(self.grid.ts, steps)?;
        Ok(Self::from_fn(self.features, self.nodes, grid, |f, n, t| self.get(f, n, t)))
    }

    /// CSV with header `f,n,t,value`, one row per entry, ordered by `(f, n, t)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f,n,t,value\n");
        for f in 0..self.features {
            for n in 0..self.nodes {
                for t in 0..self.steps() {
                    writeln!(out, "{f},{n},{t},{:?}", self.get(f, n, t)).unwrap();
                }
            }
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. Shape is inferred from the largest
    /// indices; every entry must be present exactly once.
    pub fn from_csv(text: &str, ts: f64) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "f,n,t,value" => {}
            other => return Err(format!("bad header {other:?}")),
        }
        let mut rows = Vec::new();
        let (mut fmax, mut nmax, mut tmax) = (0, 0, 0);
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(format!("line {}: expected 4 fields", lineno + 2));
            }
            let parse_idx = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("line {}: {e}", lineno + 2));
            let f = parse_idx(parts[0])?;
            let n = parse_idx(parts[1])?;
            let t = parse_idx(parts[2])?;
            let v: f64 = parts[3].trim().parse().map_err(|e| format!("line {}: {e}", lineno + 2))?;
            fmax = fmax.max(f);
            nmax = nmax.max(n);
            tmax = tmax.max(t);
            rows.push((f, n, t, v));
        }
        if rows.is_empty() {
            return Err("no entries".into());
        }
        let grid = SamplingGrid::new(ts, tmax + 1).map_err(|e| e.to_string())?;
        let mut out = Self::zeros(fmax + 1, nmax + 1, grid);
        let mut seen = vec![false; out.data.len()];
        for (f, n, t, v) in rows {
            let i = out.idx(f, n, t);
            if seen[i] {
                return Err(format!("duplicate entry ({f},{n},{t})"));
            }
            seen[i] = true;
            out.data[i] = v;
        }
        if seen.iter().any(|s| !s) {
            return Err("missing entries".into());
        }
        Ok(out)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, ts: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, ts).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }
}
