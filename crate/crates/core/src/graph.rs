//! Graphs, graph shift operators (GSOs) and the relative perturbation model.
//!
//! A [`Graph`] wraps a real symmetric GSO `S` (binary adjacency for every graph
//! built here). Perturbed graphs follow the relative model
//!
//! ```text
//! P0ᵀ Ŝ P0 = S + S E + E S
//! ```
//!
//! where `E` is a symmetric error matrix and `P0` a node relabeling.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment;
use crate::error::{Error, Result};
use crate::linalg;

/// Iteration cap handed to the symmetric eigensolver.
pub const EIG_MAX_ITER: usize = 10_000;

/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_GAP: f64 = 1e-8;

/// Undirected graph represented by its symmetric shift operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    gso: DMatrix<f64>,
}

impl Graph {
    /// Wraps a square matrix, rejecting anything that is not exactly symmetric.
    pub fn from_gso(gso: DMatrix<f64>) -> Result<Self> {
        if gso.nrows() != gso.ncols() {
            return Err(Error::Dimension(format!(
                "GSO must be square, got {}x{}",
                gso.nrows(),
                gso.ncols()
            )));
        }
        if gso.nrows() == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let n = gso.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if gso[(i, j)] != gso[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "GSO not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if gso.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("GSO has non-finite entries".into()));
        }
        Ok(Self { gso })
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            gso: DMatrix::zeros(n, n),
        }
    }

    /// Complete graph on `n` nodes (binary adjacency).
    pub fn complete(n: usize) -> Self {
        let mut gso = DMatrix::from_element(n, n, 1.0);
        gso.fill_diagonal(0.0);
        Self { gso }
    }

    /// Binary adjacency from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut gso = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j})")));
            }
            gso[(i, j)] = 1.0;
            gso[(j, i)] = 1.0;
        }
        Ok(Self { gso })
    }

    pub fn n_nodes(&self) -> usize {
        self.gso.nrows()
    }

    pub fn gso(&self) -> &DMatrix<f64> {
        &self.gso
    }

    /// Neighbors of `i` (nonzero off-diagonal entries), ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&j| j != i && self.gso[(i, j)] != 0.0)
            .collect()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.gso[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes()).map(|i| self.neighbors(i).len()).collect()
    }

    /// `y = S x` for a node vector stored as a slice.
    pub fn shift_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n_nodes();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc += self.gso[(i, j)] * xj;
            }
            *yi = acc;
        }
    }

    /// Relabels nodes: returns the graph with GSO `Pᵀ S P`.
    pub fn relabel(&self, perm: &Permutation) -> Self {
        Self {
            gso: perm.conjugate_transpose(&self.gso),
        }
    }

    /// Multiplies every edge weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gso: &self.gso * factor,
        }
    }

    /// Serializes as `N` followed by `N` rows of `N` entries with 17 significant digits.
    pub fn to_text(&self) -> String {
        let n = self.n_nodes();
        let mut out = String::new();
        writeln!(out, "{n}").unwrap();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.gso[(i, j)])).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    /// Parses one graph block starting at `lines`, advancing the iterator.
    pub fn parse_block<'a, I>(lines: &mut I) -> std::result::Result<Self, String>
    where
        I: Iterator<Item = &'a str>,
    {
        let header = lines
            .by_ref()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| "missing node count".to_string())?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|e| format!("bad node count {header:?}: {e}"))?;
        let mut gso = DMatrix::zeros(n, n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| format!("missing row {i}"))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", vals.len()));
            }
            for (j, v) in vals.iter().enumerate() {
                gso[(i, j)] = v.parse().map_err(|e| format!("row {i} col {j}: {e}"))?;
            }
        }
        Graph::from_gso(gso).map_err(|e| e.to_string())
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        Self::parse_block(&mut lines)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Node relabeling. `P[i][map[i]] = 1`, so `(P M Pᵀ)[i][j] = M[map[i]][map[j]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || seen[m] {
                return Err(Error::InvalidArgument(format!("{map:?} is not a permutation")));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            map.swap(i, j);
        }
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.map.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, &m) in self.map.iter().enumerate() {
            p[(i, m)] = 1.0;
        }
        p
    }

    /// `P M Pᵀ`, exact (pure reindexing).
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.map.len();
        DMatrix::from_fn(n, n, |i, j| m[(self.map[i], self.map[j])])
    }

    /// `Pᵀ M P`, exact.
    pub fn conjugate_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.inverse().conjugate(m)
    }

    /// `(P x)[i] = x[map[i]]`.
    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&m| x[m]).collect()
    }

    /// `(Pᵀ x)[map[i]] = x[i]`.
    pub fn apply_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, &m) in self.map.iter().enumerate() {
            out[m] = x[i];
        }
        out
    }

    /// All permutations of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Permutation { map: cur.clone() });
            // next lexicographic permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric GSO.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors, ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues and a deterministic
/// sign convention: the largest-magnitude entry of each eigenvector is positive
/// (ties resolved toward the lowest index).
pub fn sym_eigendecomposition(graph: &Graph) -> Result<SpectralDecomposition> {
    sym_eigen_matrix(graph.gso())
}

pub(crate) fn sym_eigen_matrix(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence(EIG_MAX_ITER))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut best = 0;
        for r in 1..n {
            // strict comparison keeps the lowest index on ties
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Binary graph linking each node to its `m_neighbors` nearest nodes, symmetrized
/// with the "or" rule. Distance ties go to the lower node index.
pub fn build_knn_graph(positions: &[[f64; 2]], m_neighbors: usize) -> Result<Graph> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidArgument("kNN graph needs at least 2 nodes".into()));
    }
    if m_neighbors == 0 || m_neighbors >= n {
        return Err(Error::InvalidArgument(format!(
            "m_neighbors must lie in [1, {}], got {m_neighbors}",
            n - 1
        )));
    }
    let mut gso = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in nearest_neighbors(positions, i, m_neighbors)?.iter() {
            gso[(i, j)] = 1.0;
            gso[(j, i)] = 1.0;
        }
    }
    Ok(Graph { gso })
}

/// Indices of the `m` nodes nearest to `i` (excluding `i`), by ascending
/// distance then index.
pub fn nearest_neighbors(positions: &[[f64; 2]], i: usize, m: usize) -> Result<Vec<usize>> {
    let mut others: Vec<(f64, usize)> = Vec::with_capacity(positions.len());
    for (j, pj) in positions.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = dist(&positions[i], pj);
        if d == 0.0 {
            return Err(Error::CoincidentAgents(i.min(j), i.max(j)));
        }
        others.push((d, j));
    }
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(others.into_iter().take(m).map(|(_, j)| j).collect())
}

/// Binary graph with an edge whenever two nodes are strictly closer than `range_r`.
pub fn build_range_graph(positions: &[[f64; 2]], range_r: f64) -> Result<Graph> {
    if !(range_r > 0.0) {
        return Err(Error::InvalidArgument(format!("range must be positive, got {range_r}")));
    }
    let n = positions.len();
    if n == 0 {
        return Err(Error::InvalidArgument("range graph needs at least 1 node".into()));
    }
    let mut gso = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if dist(&positions[i], &positions[j]) < range_r {
                gso[(i, j)] = 1.0;
                gso[(j, i)] = 1.0;
            }
        }
    }
    Ok(Graph { gso })
}

/// Positions of a `side × side` grid with the given spacing, row-major.
pub fn mesh_grid_positions(side: usize, spacing: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            out.push([c as f64 * spacing, r as f64 * spacing]);
        }
    }
    out
}

pub(crate) fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Symmetric error matrix `E` and relabeling `P0` of the relative perturbation model.
#[derive(Debug, Clone)]
pub struct GraphPerturbation {
    pub error_matrix: DMatrix<f64>,
    pub permutation: Permutation,
    /// Spectral norm of `error_matrix`.
    pub eps_s: f64,
}

impl GraphPerturbation {
    pub fn new(error_matrix: DMatrix<f64>, permutation: Permutation) -> Result<Self> {
        if error_matrix.nrows() != error_matrix.ncols()
            || error_matrix.nrows() != permutation.len()
        {
            return Err(Error::Dimension(format!(
                "error matrix {}x{} vs permutation of length {}",
                error_matrix.nrows(),
                error_matrix.ncols(),
                permutation.len()
            )));
        }
        let n = error_matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if error_matrix[(i, j)] != error_matrix[(j, i)] {
                    return Err(Error::InvalidArgument("error matrix must be symmetric".into()));
                }
            }
        }
        let eps_s = linalg::sym_spectral_norm(&error_matrix)?;
        Ok(Self {
            error_matrix,
            permutation,
            eps_s,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            error_matrix: DMatrix::zeros(n, n),
            permutation: Permutation::identity(n),
            eps_s: 0.0,
        }
    }

    /// `E = (ε/2) I`, which turns the relative model into a dilation `Ŝ = (1+ε) S`.
    pub fn dilation(n: usize, eps: f64) -> Self {
        Self {
            error_matrix: DMatrix::identity(n, n) * (eps / 2.0),
            permutation: Permutation::identity(n),
            eps_s: eps / 2.0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.error_matrix.nrows()
    }
}

/// `Ŝ = P0 (S + S E + E S) P0ᵀ`.
pub fn apply_relative_perturbation(graph: &Graph, pert: &GraphPerturbation) -> Result<Graph> {
    let n = graph.n_nodes();
    if pert.n_nodes() != n {
        return Err(Error::Dimension(format!(
            "graph has {n} nodes, perturbation has {}",
            pert.n_nodes()
        )));
    }
    let s = graph.gso();
    let se = s * &pert.error_matrix;
    // (S E)ᵀ = E S for symmetric S, E; summing the pair keeps the result exactly symmetric.
    let inner = DMatrix::from_fn(n, n, |i, j| s[(i, j)] + (se[(i, j)] + se[(j, i)]));
    Ok(Graph {
        gso: pert.permutation.conjugate(&inner),
    })
}

/// Diagonal `E` with i.i.d. uniform entries on `[-eps, eps]`, rescaled so that the
/// largest magnitude equals `eps`. `P0` is the identity.
pub fn sample_diagonal_error(n: usize, eps: f64, seed: u64) -> GraphPerturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diag: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let peak = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for d in diag.iter_mut() {
        *d = if peak > 0.0 { *d / peak * eps } else { 0.0 };
    }
    // pin the extreme entry so rounding cannot leave max |E_ii| a hair off eps
    if let Some(k) = (0..n).max_by(|&a, &b| diag[a].abs().total_cmp(&diag[b].abs())) {
        if peak > 0.0 {
            diag[k] = eps.copysign(diag[k]);
        }
    }
    GraphPerturbation {
        error_matrix: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        permutation: Permutation::identity(n),
        eps_s: eps,
    }
}

/// `E = V D Vᵀ` sharing the eigenvectors of `graph`; `D` uniform on `[-eps, eps]`
/// rescaled to peak magnitude `eps`.
pub fn sample_shared_eigenbasis_error(graph: &Graph, eps: f64, seed: u64) -> Result<GraphPerturbation> {
    let n = graph.n_nodes();
    let spec = sym_eigendecomposition(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let peak = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in d.iter_mut() {
        *v = if peak > 0.0 { *v / peak * eps } else { 0.0 };
    }
    let v = &spec.eigenvectors;
    let e = v * DMatrix::from_diagonal(&DVector::from_vec(d)) * v.transpose();
    let e = linalg::symmetrize(&e);
    GraphPerturbation::new(e, Permutation::identity(n))
}

/// Eigenvector misalignment `δ = (‖U − V‖ + 1)² − 1` between the eigenbasis `U`
/// of `E` and the eigenbasis `V` of `S` (spectral norm).
///
/// Both bases are only defined up to column order, sign and rotation inside
/// degenerate eigenspaces, so they are canonicalized before the norm is taken:
/// columns are paired by a maximum-overlap assignment, signs follow
/// `sign(uᵢᵀvᵢ)` (zero → +1), and each degenerate cluster of either spectrum is
/// rotated onto its partner columns by orthogonal Procrustes.
pub fn eigenvector_misalignment(graph: &Graph, pert: &GraphPerturbation) -> Result<f64> {
    let n = graph.n_nodes();
    if pert.n_nodes() != n {
        return Err(Error::Dimension(format!(
            "graph has {n} nodes, perturbation has {}",
            pert.n_nodes()
        )));
    }
    let s_spec = sym_eigendecomposition(graph)?;
    let e_spec = sym_eigen_matrix(&pert.error_matrix)?;
    let v = s_spec.eigenvectors.clone();
    let u = e_spec.eigenvectors.clone();
    let e_clusters = clusters(e_spec.eigenvalues.as_slice());
    let s_clusters = clusters(s_spec.eigenvalues.as_slice());

    // column pairing: U's column pairing[j] goes against V's column j
    let overlap = u.transpose() * &v;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -overlap[(i, j)].abs()).collect())
        .collect();
    let assign = assignment::hungarian(&cost)?;
    // assign[i] = column of V matched to column i of U
    let mut u_paired = DMatrix::zeros(n, n);
    for (i, &j) in assign.iter().enumerate() {
        u_paired.set_column(j, &u.column(i));
    }
    // clusters of E expressed in the paired ordering
    let e_clusters_paired: Vec<Vec<usize>> = e_clusters
        .iter()
        .map(|c| c.iter().map(|&i| assign[i]).collect())
        .collect();

    let mut u_cur = u_paired;
    let mut v_cur = v;
    for _ in 0..3 {
        for c in e_clusters_paired.iter().filter(|c| c.len() > 1) {
            linalg::procrustes_align(&mut u_cur, &v_cur, c);
        }
        for c in s_clusters.iter().filter(|c| c.len() > 1) {
            linalg::procrustes_align(&mut v_cur, &u_cur, c);
        }
        fix_signs(&mut u_cur, &v_cur);
    }
    let diff = &u_cur - &v_cur;
    let norm = linalg::spectral_norm(&diff);
    let delta = (norm + 1.0).powi(2) - 1.0;
    Ok(delta.clamp(0.0, 8.0))
}

fn fix_signs(u: &mut DMatrix<f64>, v: &DMatrix<f64>) {
    for j in 0..u.ncols() {
        let dot = u.column(j).dot(&v.column(j));
        if dot < 0.0 {
            u.column_mut(j).neg_mut();
        }
    }
}

/// Groups indices of an ascending spectrum into runs with consecutive gaps below
/// [`CLUSTER_GAP`].
fn clusters(sorted: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in sorted.iter().enumerate() {
        match out.last_mut() {
            Some(c) if l - sorted[*c.last().unwrap()] < CLUSTER_GAP => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}
