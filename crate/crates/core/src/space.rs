//! Finite metric-measure spaces backed by weighted graphs.
//!
//! The metric is the shortest-path distance over positive edge lengths,
//! the measure is a positive vertex weight, and balls are closed:
//! `B(x, r) = {y : d(x, y) <= r}`. Construction precomputes the full
//! distance matrix, a per-vertex nearest-neighbor order, and member
//! counts/masses on a canonical radius grid; the sweep kernels below walk
//! those sorted rows once per center, which is what keeps every
//! sup-over-balls quantity (doubling constants, maximal functions,
//! oscillation norms, Carleson boxes, weight characteristics) affordable
//! on grids with thousands of vertices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

/// Exponent for measure-weighted vertex norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    P(f64),
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::P(p) => p,
            Exponent::Inf => f64::INFINITY,
        }
    }

    /// Conjugate exponent: 1/p + 1/p' = 1.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Inf => Exponent::P(1.0),
            Exponent::P(p) if p <= 1.0 => Exponent::Inf,
            Exponent::P(p) => Exponent::P(p / (p - 1.0)),
        }
    }
}

/// An undirected edge with a positive length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub len: f64,
}

/// A closed metric ball.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    /// Members in increasing distance from the center (ties by vertex index).
    pub members: Vec<usize>,
    pub mass: f64,
}

/// How the canonical radius grid is derived from the distinct distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusGridMode {
    /// Every distinct inter-vertex distance (including 0).
    Full,
    /// Geometric thinning: keep 0, then each radius at least `ratio` times
    /// the previous one, always keeping the diameter.
    Thinned { ratio: f64 },
    /// `Full` up to 1500 vertices, `Thinned { ratio: 1.3 }` beyond.
    Auto,
}

/// Finite metric-measure space.
pub struct Space {
    n: usize,
    labels: Vec<u64>,
    measures: Vec<f64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(u32, f64)>>,
    coords: Option<Vec<[f64; 2]>>,
    dist: Vec<f64>,
    /// Row-major: `order[x*n + i]` is the i-th nearest vertex to `x`
    /// (ties by vertex index, position 0 is `x` itself).
    order: Vec<u32>,
    radius_grid: Vec<f64>,
    /// Row-major `n x R`: members of `B(x, radius_grid[l])`.
    counts: Vec<u32>,
    /// Row-major `n x R`: masses of the same balls.
    ball_masses: Vec<f64>,
    diameter: f64,
    total_mass: f64,
}

impl std::fmt::Debug for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Space")
            .field("n", &self.n)
            .field("edges", &self.edges.len())
            .field("total_mass", &self.total_mass)
            .field("diameter", &self.diameter)
            .finish()
    }
}

struct HeapItem(f64, u32);

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0 && self.1 == other.1
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance (then index) through BinaryHeap's max order.
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl Space {
    /// Build a space from explicit edges and measures.
    ///
    /// `labels[i]` is the external name of vertex `i`; built-in families
    /// use `0..n`. Validates positivity, simplicity, and connectivity, and
    /// spot-checks the triangle inequality (exhaustively up to 500
    /// vertices, on a strided sample beyond).
    pub fn from_parts(
        labels: Vec<u64>,
        measures: Vec<f64>,
        edges: Vec<Edge>,
        coords: Option<Vec<[f64; 2]>>,
        grid_mode: RadiusGridMode,
    ) -> Result<Arc<Space>> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if measures.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} measures for {} vertices",
                measures.len(),
                n
            )));
        }
        for (v, &m) in measures.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::NonPositiveMeasure { vertex: v, mass: m });
            }
        }
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) out of range for {} vertices",
                    e.u, e.v, n
                )));
            }
            if e.u == e.v {
                return Err(Error::SelfLoop(e.u));
            }
            if !(e.len > 0.0) || !e.len.is_finite() {
                return Err(Error::NonPositiveWeight {
                    u: e.u,
                    v: e.v,
                    len: e.len,
                });
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            adj[e.u].push((e.v as u32, e.len));
            adj[e.v].push((e.u as u32, e.len));
        }
        for nb in &mut adj {
            nb.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        }

        // All-pairs shortest paths, one Dijkstra per source.
        let rows = par::map_indexed(n, |src| dijkstra(&adj, n, src));
        let mut dist = vec![0.0f64; n * n];
        for (src, row) in rows.into_iter().enumerate() {
            for (v, d) in row.into_iter().enumerate() {
                if !d.is_finite() {
                    return Err(Error::DisconnectedGraph(v));
                }
                dist[src * n + v] = d;
            }
        }
        check_triangle(&dist, n)?;

        let diameter = dist.iter().cloned().fold(0.0, f64::max);

        // Nearest-neighbor order per row.
        let order_rows = par::map_indexed(n, |x| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                dist[x * n + a as usize]
                    .partial_cmp(&dist[x * n + b as usize])
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.cmp(&b))
            });
            idx
        });
        let mut order = vec![0u32; n * n];
        for (x, row) in order_rows.into_iter().enumerate() {
            order[x * n..(x + 1) * n].copy_from_slice(&row);
        }

        // Canonical radius grid: distinct distances, optionally thinned.
        let mut values: Vec<f64> = dist.to_vec();
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        let radius_grid = match grid_mode {
            RadiusGridMode::Full => values,
            RadiusGridMode::Auto if n <= 1500 => values,
            RadiusGridMode::Auto => thin_radii(&values, 1.3),
            RadiusGridMode::Thinned { ratio } => thin_radii(&values, ratio),
        };

        let r_len = radius_grid.len();
        let tables = par::map_indexed(n, |x| {
            let mut cnt = vec![0u32; r_len];
            let mut mass = vec![0.0f64; r_len];
            let row = &order[x * n..(x + 1) * n];
            let mut i = 0usize;
            let mut acc = 0.0f64;
            for (l, &r) in radius_grid.iter().enumerate() {
                while i < n && dist[x * n + row[i] as usize] <= r {
                    acc += measures[row[i] as usize];
                    i += 1;
                }
                cnt[l] = i as u32;
                mass[l] = acc;
            }
            (cnt, mass)
        });
        let mut counts = vec![0u32; n * r_len];
        let mut ball_masses = vec![0.0f64; n * r_len];
        for (x, (cnt, mass)) in tables.into_iter().enumerate() {
            counts[x * r_len..(x + 1) * r_len].copy_from_slice(&cnt);
            ball_masses[x * r_len..(x + 1) * r_len].copy_from_slice(&mass);
        }

        let total_mass = measures.iter().sum();
        Ok(Arc::new(Space {
            n,
            labels,
            measures,
            edges,
            adj,
            coords,
            dist,
            order,
            radius_grid,
            counts,
            ball_masses,
            diameter,
            total_mass,
        }))
    }

    /// Path graph on `n` vertices, unit edges and measures.
    pub fn path(n: usize) -> Result<Arc<Space>> {
        Self::path_with_edge_length(n, 1.0)
    }

    /// Path graph with a common edge length (refinements of an interval).
    pub fn path_with_edge_length(n: usize, len: f64) -> Result<Arc<Space>> {
        let edges = (0..n.saturating_sub(1))
            .map(|i| Edge { u: i, v: i + 1, len })
            .collect();
        Self::from_parts(
            (0..n as u64).collect(),
            vec![1.0; n],
            edges,
            None,
            RadiusGridMode::Auto,
        )
    }

    /// Cycle graph on `n` vertices, unit edges and measures.
    pub fn cycle(n: usize) -> Result<Arc<Space>> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("cycle needs n >= 3, got {n}")));
        }
        let edges = (0..n)
            .map(|i| Edge {
                u: i,
                v: (i + 1) % n,
                len: 1.0,
            })
            .collect();
        Self::from_parts(
            (0..n as u64).collect(),
            vec![1.0; n],
            edges,
            None,
            RadiusGridMode::Auto,
        )
    }

    /// `nx x ny` grid, unit edges and measures; vertex `(ix, iy)` has index
    /// `ix*ny + iy` and planar coordinates `[ix, iy]`.
    pub fn grid2d(nx: usize, ny: usize) -> Result<Arc<Space>> {
        if nx == 0 || ny == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut edges = Vec::new();
        let mut coords = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                coords.push([ix as f64, iy as f64]);
                let idx = ix * ny + iy;
                if ix + 1 < nx {
                    edges.push(Edge {
                        u: idx,
                        v: idx + ny,
                        len: 1.0,
                    });
                }
                if iy + 1 < ny {
                    edges.push(Edge {
                        u: idx,
                        v: idx + 1,
                        len: 1.0,
                    });
                }
            }
        }
        let n = nx * ny;
        Self::from_parts(
            (0..n as u64).collect(),
            vec![1.0; n],
            edges,
            Some(coords),
            RadiusGridMode::Auto,
        )
    }

    /// Random connected graph: a random spanning tree plus `extra_edges`
    /// chords, lengths uniform in `len_range`, measures in `measure_range`.
    pub fn random_connected(
        n: usize,
        extra_edges: usize,
        len_range: (f64, f64),
        measure_range: (f64, f64),
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Arc<Space>> {
        use rand::Rng;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut edges = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for v in 1..n {
            let u = rng.gen_range(0..v);
            edges.push(Edge {
                u,
                v,
                len: rng.gen_range(len_range.0..=len_range.1),
            });
            seen.insert((u, v));
        }
        let mut attempts = 0;
        let mut added = 0;
        while added < extra_edges && attempts < 50 * (extra_edges + 1) {
            attempts += 1;
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            let key = (u.min(v), u.max(v));
            if u == v || seen.contains(&key) {
                continue;
            }
            seen.insert(key);
            edges.push(Edge {
                u: key.0,
                v: key.1,
                len: rng.gen_range(len_range.0..=len_range.1),
            });
            added += 1;
        }
        let measures = (0..n)
            .map(|_| rng.gen_range(measure_range.0..=measure_range.1))
            .collect();
        Self::from_parts(
            (0..n as u64).collect(),
            measures,
            edges,
            None,
            RadiusGridMode::Auto,
        )
    }

    /// Parse the graph text format: one `u v length` edge per line,
    /// optional `# measure u m` lines, other `#` lines are comments.
    /// Vertex labels are arbitrary nonnegative integers; indices follow
    /// ascending label order. Unlisted measures default to 1.
    pub fn from_text(text: &str, grid_mode: RadiusGridMode) -> Result<Arc<Space>> {
        let mut raw_edges: Vec<(u64, u64, f64)> = Vec::new();
        let mut raw_measures: Vec<(u64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(spec) = rest.strip_prefix("measure") {
                    let mut it = spec.split_whitespace();
                    let u: u64 = it
                        .next()
                        .ok_or_else(|| err("missing vertex in measure line"))?
                        .parse()
                        .map_err(|_| err("bad vertex in measure line"))?;
                    let m: f64 = it
                        .next()
                        .ok_or_else(|| err("missing mass in measure line"))?
                        .parse()
                        .map_err(|_| err("bad mass in measure line"))?;
                    if it.next().is_some() {
                        return Err(err("trailing tokens in measure line"));
                    }
                    raw_measures.push((u, m));
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let u: u64 = it
                .next()
                .ok_or_else(|| err("missing source vertex"))?
                .parse()
                .map_err(|_| err("bad source vertex"))?;
            let v: u64 = it
                .next()
                .ok_or_else(|| err("missing target vertex"))?
                .parse()
                .map_err(|_| err("bad target vertex"))?;
            let len: f64 = it
                .next()
                .ok_or_else(|| err("missing edge length"))?
                .parse()
                .map_err(|_| err("bad edge length"))?;
            if it.next().is_some() {
                return Err(err("trailing tokens in edge line"));
            }
            raw_edges.push((u, v, len));
        }
        let mut labels: Vec<u64> = raw_edges
            .iter()
            .flat_map(|&(u, v, _)| [u, v])
            .chain(raw_measures.iter().map(|&(u, _)| u))
            .collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let index = |label: u64| labels.binary_search(&label).unwrap();
        let mut measures = vec![1.0f64; labels.len()];
        for (u, m) in raw_measures {
            measures[index(u)] = m;
        }
        let edges = raw_edges
            .into_iter()
            .map(|(u, v, len)| Edge {
                u: index(u),
                v: index(v),
                len,
            })
            .collect();
        Self::from_parts(labels, measures, edges, None, grid_mode)
    }

    /// Serialize back to the graph text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &m) in self.measures.iter().enumerate() {
            if m != 1.0 {
                out.push_str(&format!("# measure {} {}\n", self.labels[i], m));
            }
        }
        for e in &self.edges {
            out.push_str(&format!(
                "{} {} {}\n",
                self.labels[e.u], self.labels[e.v], e.len
            ));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.n + y]
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn measure(&self, x: usize) -> f64 {
        self.measures[x]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, x: usize) -> &[(u32, f64)] {
        &self.adj[x]
    }

    pub fn label(&self, x: usize) -> u64 {
        self.labels[x]
    }

    /// Planar coordinates, when the space was built as a 2d grid.
    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// Canonical radius grid (sorted, starts at 0, ends at the diameter).
    pub fn radius_grid(&self) -> &[f64] {
        &self.radius_grid
    }

    /// Smallest positive distance between distinct vertices.
    pub fn min_positive_distance(&self) -> f64 {
        self.radius_grid
            .iter()
            .copied()
            .find(|&r| r > 0.0)
            .unwrap_or(0.0)
    }

    /// Vertices in increasing distance from `x`.
    pub fn nearest_order(&self, x: usize) -> &[u32] {
        &self.order[x * self.n..(x + 1) * self.n]
    }

    /// Number of members of `B(x, radius_grid[l])`.
    pub fn ball_count_by_index(&self, x: usize, l: usize) -> usize {
        self.counts[x * self.radius_grid.len() + l] as usize
    }

    /// Mass of `B(x, radius_grid[l])`.
    pub fn ball_mass_by_index(&self, x: usize, l: usize) -> f64 {
        self.ball_masses[x * self.radius_grid.len() + l]
    }

    /// Largest canonical radius index `l` with `radius_grid[l] <= r`
    /// (0 when `r` is below every positive radius; the grid starts at 0).
    pub fn radius_index_at_or_below(&self, r: f64) -> usize {
        self.radius_grid
            .partition_point(|&g| g <= r)
            .saturating_sub(1)
    }

    /// Number of vertices within distance `r` of `x` (any real radius).
    pub fn count_within(&self, x: usize, r: f64) -> usize {
        let row = self.nearest_order(x);
        row.partition_point(|&y| self.dist[x * self.n + y as usize] <= r)
    }

    /// Mass of `B(x, r)` for an arbitrary radius.
    pub fn mass_within(&self, x: usize, r: f64) -> f64 {
        let k = self.count_within(x, r);
        self.nearest_order(x)[..k]
            .iter()
            .map(|&y| self.measures[y as usize])
            .sum()
    }

    /// The closed ball `B(center, radius)`.
    pub fn ball(&self, center: usize, radius: f64) -> Ball {
        let k = self.count_within(center, radius);
        let members: Vec<usize> = self.nearest_order(center)[..k]
            .iter()
            .map(|&y| y as usize)
            .collect();
        let mass = members.iter().map(|&y| self.measures[y]).sum();
        Ball {
            center,
            radius,
            members,
            mass,
        }
    }

    /// Exact distance between two vertex sets (minimum over member pairs).
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for &x in a {
            for &y in b {
                best = best.min(self.dist(x, y));
            }
        }
        best
    }

    /// Measure-weighted inner product.
    pub fn inner(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f[i] * g[i] * self.measures[i];
        }
        acc
    }

    /// Measure-weighted L^p norm (`Inf` is the plain vertex max).
    pub fn lp_norm(&self, f: ArrayView1<f64>, p: Exponent) -> f64 {
        match p {
            Exponent::Inf => f.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
            Exponent::P(p) => {
                let mut acc = 0.0;
                for i in 0..self.n {
                    acc += f[i].abs().powf(p) * self.measures[i];
                }
                acc.powf(1.0 / p)
            }
        }
    }

    /// Mean with respect to the measure (projection onto constants).
    pub fn mean(&self, f: ArrayView1<f64>) -> f64 {
        self.inner(f, Array1::ones(self.n).view()) / self.total_mass
    }

    // ------------------------------------------------------------------
    // Sweep kernels. All walk each center's nearest-neighbor order once.
    // ------------------------------------------------------------------

    /// Ball sums with one radius per column:
    /// `out[c][k] = sum over y in B(c, radius_grid[radius_for_col[k]]) of fields[y][k]`.
    pub fn ball_sums_coupled(
        &self,
        fields: ArrayView2<f64>,
        radius_for_col: &[usize],
    ) -> Array2<f64> {
        let n = self.n;
        let k_cols = fields.ncols();
        assert_eq!(radius_for_col.len(), k_cols);
        assert_eq!(fields.nrows(), n);
        let r_len = self.radius_grid.len();
        // Columns grouped by radius index, ascending, so one walk serves all.
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut cols: Vec<usize> = (0..k_cols).collect();
        cols.sort_by_key(|&k| radius_for_col[k]);
        for k in cols {
            let l = radius_for_col[k];
            match groups.last_mut() {
                Some((gl, v)) if *gl == l => v.push(k),
                _ => groups.push((l, vec![k])),
            }
        }
        let rows = par::map_indexed(n, |c| {
            let row = self.nearest_order(c);
            let mut acc = vec![0.0f64; k_cols];
            let mut out = vec![0.0f64; k_cols];
            let mut i = 0usize;
            for (l, group) in &groups {
                let b = self.counts[c * r_len + l] as usize;
                while i < b {
                    let y = row[i] as usize;
                    let frow = fields.row(y);
                    for k in 0..k_cols {
                        acc[k] += frow[k];
                    }
                    i += 1;
                }
                for &k in group {
                    out[k] = acc[k];
                }
            }
            out
        });
        let mut out = Array2::zeros((n, k_cols));
        for (c, row) in rows.into_iter().enumerate() {
            out.row_mut(c).assign(&Array1::from(row));
        }
        out
    }

    /// Ball sums at every canonical radius:
    /// `out[c][l][k] = sum over y in B(c, radius_grid[l]) of fields[y][k]`.
    pub fn ball_sums_all(&self, fields: ArrayView2<f64>) -> Array3<f64> {
        let n = self.n;
        let k_cols = fields.ncols();
        let r_len = self.radius_grid.len();
        assert_eq!(fields.nrows(), n);
        let rows = par::map_indexed(n, |c| {
            let row = self.nearest_order(c);
            let mut acc = vec![0.0f64; k_cols];
            let mut out = vec![0.0f64; r_len * k_cols];
            let mut i = 0usize;
            for l in 0..r_len {
                let b = self.counts[c * r_len + l] as usize;
                while i < b {
                    let y = row[i] as usize;
                    let frow = fields.row(y);
                    for k in 0..k_cols {
                        acc[k] += frow[k];
                    }
                    i += 1;
                }
                out[l * k_cols..(l + 1) * k_cols].copy_from_slice(&acc);
            }
            out
        });
        let mut out = Array3::zeros((n, r_len, k_cols));
        for (c, row) in rows.into_iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), c)
                .assign(&Array2::from_shape_vec((r_len, k_cols), row).unwrap());
        }
        out
    }

    /// For each vertex `x` and column `k`, the maximum of `table[c][l][k]`
    /// over all balls `B(c, radius_grid[l])` containing `x`.
    pub fn ball_max_over_containing(&self, table: ArrayView3<f64>) -> Array2<f64> {
        let n = self.n;
        let r_len = self.radius_grid.len();
        let k_cols = table.shape()[2];
        assert_eq!(table.shape()[0], n);
        assert_eq!(table.shape()[1], r_len);
        // Suffix max over the radius axis: S[c][l][k] = max_{l' >= l} table[c][l'][k].
        let suffix_rows = par::map_indexed(n, |c| {
            let mut s = vec![f64::NEG_INFINITY; r_len * k_cols];
            let sub = table.index_axis(ndarray::Axis(0), c);
            for l in (0..r_len).rev() {
                for k in 0..k_cols {
                    let above = if l + 1 < r_len {
                        s[(l + 1) * k_cols + k]
                    } else {
                        f64::NEG_INFINITY
                    };
                    s[l * k_cols + k] = sub[[l, k]].max(above);
                }
            }
            s
        });
        let suffix: Vec<f64> = suffix_rows.into_iter().flatten().collect();

        let rows = par::map_indexed(n, |x| {
            let row = self.nearest_order(x);
            let mut out = vec![f64::NEG_INFINITY; k_cols];
            let mut lmin = 0usize;
            for (i, &c32) in row.iter().enumerate() {
                // The smallest radius whose ball around x reaches position i.
                while lmin < r_len && (self.counts[x * r_len + lmin] as usize) <= i {
                    lmin += 1;
                }
                if lmin == r_len {
                    break;
                }
                let c = c32 as usize;
                let srow = &suffix[c * r_len * k_cols + lmin * k_cols..][..k_cols];
                for k in 0..k_cols {
                    if srow[k] > out[k] {
                        out[k] = srow[k];
                    }
                }
            }
            out
        });
        let mut out = Array2::zeros((n, k_cols));
        for (x, row) in rows.into_iter().enumerate() {
            out.row_mut(x).assign(&Array1::from(row));
        }
        out
    }

    /// Ball averages of several fields against the measure, one per column,
    /// at a fixed per-column radius, plus sup/argmax over centers.
    pub fn ball_average_sup(
        &self,
        fields: ArrayView2<f64>,
        radius_for_col: &[usize],
    ) -> Vec<(f64, usize)> {
        let n = self.n;
        let k_cols = fields.ncols();
        let weighted = self.mul_measure(fields);
        let sums = self.ball_sums_coupled(weighted.view(), radius_for_col);
        let r_len = self.radius_grid.len();
        (0..k_cols)
            .map(|k| {
                let l = radius_for_col[k];
                let (v, c) = par::argmax_indexed(n, |c| {
                    sums[[c, k]] / self.ball_masses[c * r_len + l]
                })
                .unwrap();
                (v, c)
            })
            .collect()
    }

    /// Columns multiplied by the vertex measure.
    pub fn mul_measure(&self, fields: ArrayView2<f64>) -> Array2<f64> {
        let mut out = fields.to_owned();
        for (mut row, &m) in out.rows_mut().into_iter().zip(self.measures.iter()) {
            row *= m;
        }
        out
    }

    // ------------------------------------------------------------------
    // Maximal function.
    // ------------------------------------------------------------------

    /// Uncentered maximal function of L^s averages:
    /// `M_s f(x) = sup over balls B containing x of (avg_B |f|^s)^{1/s}`,
    /// balls ranging over every center and every canonical radius.
    pub fn maximal(&self, f: ArrayView1<f64>, s: f64) -> Array1<f64> {
        assert!(s > 0.0, "maximal exponent must be positive");
        let n = self.n;
        let mut pow = Array2::zeros((n, 1));
        for i in 0..n {
            pow[[i, 0]] = f[i].abs().powf(s);
        }
        let raw = self.maximal_multi(pow.view());
        raw.column(0).mapv(|v| v.powf(1.0 / s))
    }

    /// Multi-field maximal kernel: for each column `k`,
    /// `out[x][k] = sup over balls B containing x of avg_B fields[.][k]`
    /// (fields are averaged as given; callers pre-apply |.|^s).
    pub fn maximal_multi(&self, fields: ArrayView2<f64>) -> Array2<f64> {
        let weighted = self.mul_measure(fields);
        let mut table = self.ball_sums_all(weighted.view());
        let r_len = self.radius_grid.len();
        let k_cols = fields.ncols();
        for c in 0..self.n {
            for l in 0..r_len {
                let mass = self.ball_masses[c * r_len + l];
                for k in 0..k_cols {
                    table[[c, l, k]] /= mass;
                }
            }
        }
        self.ball_max_over_containing(table.view())
    }

    // ------------------------------------------------------------------
    // Doubling geometry.
    // ------------------------------------------------------------------

    /// Measure-doubling constants and the volume-comparison fit.
    pub fn measure_doubling(&self) -> GeometryReport {
        let n = self.n;
        let grid = &self.radius_grid;
        let r_len = grid.len();

        // Per-center doubling ratios at every canonical radius.
        let per_center = par::map_indexed(n, |x| {
            let row = self.nearest_order(x);
            let mut cum = vec![0.0f64; n];
            let mut acc = 0.0;
            for (i, &y) in row.iter().enumerate() {
                acc += self.measures[y as usize];
                cum[i] = acc;
            }
            let mass_at = |r: f64| {
                let k = row.partition_point(|&y| self.dist[x * n + y as usize] <= r);
                cum[k - 1] // closed balls always contain the center
            };
            grid.iter()
                .enumerate()
                .map(|(l, &r)| {
                    let small = self.ball_masses[x * r_len + l];
                    mass_at(2.0 * r) / small
                })
                .collect::<Vec<f64>>()
        });

        let mut per_radius = vec![(0.0f64, 0usize); r_len];
        for l in 0..r_len {
            let mut best = f64::NEG_INFINITY;
            let mut who = 0;
            for (x, ratios) in per_center.iter().enumerate() {
                if ratios[l] > best {
                    best = ratios[l];
                    who = x;
                }
            }
            per_radius[l] = (best, who);
        }
        let mut c0 = f64::NEG_INFINITY;
        let mut c0_witness = (0usize, 0.0f64);
        for (l, &(v, who)) in per_radius.iter().enumerate() {
            if v > c0 {
                c0 = v;
                c0_witness = (who, grid[l]);
            }
        }
        let d_hom = c0.log2().max(0.0);

        // Volume comparison fit mu(B(y,r)) <= c (1 + d(x,y)/r)^N mu(B(x,r)):
        // least squares in log-log, then inflate c into a true majorant.
        let centers = stride_sample(n, 64);
        let others = stride_sample(n, 64);
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut count = 0.0;
        let mut samples: Vec<(f64, f64, (usize, usize, f64))> = Vec::new();
        for &x in &centers {
            for &y in &others {
                for (l, &r) in grid.iter().enumerate() {
                    if r <= 0.0 {
                        continue;
                    }
                    let ratio =
                        self.ball_masses[y * r_len + l] / self.ball_masses[x * r_len + l];
                    let xi = 1.0 + self.dist(x, y) / r;
                    let (lx, ly) = (xi.ln(), ratio.ln());
                    sx += lx;
                    sy += ly;
                    sxx += lx * lx;
                    sxy += lx * ly;
                    count += 1.0;
                    samples.push((xi, ratio, (x, y, r)));
                }
            }
        }
        let denom = count * sxx - sx * sx;
        let n_comp = if denom.abs() > 1e-30 {
            ((count * sxy - sx * sy) / denom).max(0.0)
        } else {
            0.0
        };
        let mut c_comp = 0.0f64;
        let mut comp_witness = (0usize, 0usize, 0.0f64);
        for &(xi, ratio, w) in &samples {
            let need = ratio / xi.powf(n_comp);
            if need > c_comp {
                c_comp = need;
                comp_witness = w;
            }
        }

        // Majorant constant for mu(B(x, theta R)) <= C theta^d mu(B(x, R)).
        let theta_list = [2.0, 4.0, 8.0];
        let mut c_theta = 0.0f64;
        for &x in &stride_sample(n, 256) {
            let row = self.nearest_order(x);
            let mut cum = vec![0.0f64; n];
            let mut acc = 0.0;
            for (i, &y) in row.iter().enumerate() {
                acc += self.measures[y as usize];
                cum[i] = acc;
            }
            let mass_at = |r: f64| {
                let k = row.partition_point(|&y| self.dist[x * n + y as usize] <= r);
                cum[k - 1]
            };
            for (l, &r) in grid.iter().enumerate() {
                if r <= 0.0 {
                    continue;
                }
                let base = self.ball_masses[x * r_len + l];
                for &theta in &theta_list {
                    let ratio = mass_at(theta * r) / (theta.powf(d_hom) * base);
                    c_theta = c_theta.max(ratio);
                }
            }
        }

        GeometryReport {
            c0,
            c0_witness,
            d_hom,
            c_comp,
            n_comp,
            comp_witness,
            c_theta,
            per_radius: grid
                .iter()
                .zip(per_radius.iter())
                .map(|(&radius, &(max_ratio, witness_center))| RadiusRow {
                    radius,
                    max_ratio,
                    witness_center,
                })
                .collect(),
        }
    }
}

/// Doubling and volume-comparison constants of a space.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    /// Doubling constant: max of mu(B(x,2r))/mu(B(x,r)) over the grid.
    pub c0: f64,
    pub c0_witness: (usize, f64),
    /// Homogeneous dimension log2(c0).
    pub d_hom: f64,
    /// Majorant constant in mu(B(y,r)) <= c_comp (1+d(x,y)/r)^n_comp mu(B(x,r)).
    pub c_comp: f64,
    pub n_comp: f64,
    pub comp_witness: (usize, usize, f64),
    /// Majorant constant in mu(B(x,tR)) <= c_theta t^d_hom mu(B(x,R)), t in {2,4,8}.
    pub c_theta: f64,
    pub per_radius: Vec<RadiusRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusRow {
    pub radius: f64,
    pub max_ratio: f64,
    pub witness_center: usize,
}

/// Smallest constant C with
/// `(avg_B |f - avg_B f|^q)^{1/q} <= C r (avg_B |grad f|^q)^{1/q}`
/// over a probe family: eigenvectors of the ball-restricted Laplacian
/// plus seeded random fields. The gradient lives on the induced subgraph.
/// Singleton balls carry constants only and return 0.
pub fn poincare_constant(
    space: &Space,
    q: f64,
    ball: &Ball,
    random_probes: usize,
    seed: u64,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
    }
    let m = ball.members.len();
    if m == 0 {
        return Err(Error::EmptyBall);
    }
    if m == 1 || ball.radius <= 0.0 {
        return Ok(0.0);
    }
    let mut local = vec![usize::MAX; space.len()];
    for (i, &v) in ball.members.iter().enumerate() {
        local[v] = i;
    }
    // Induced edges with combinatorial weights 1/len^2.
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for e in space.edges() {
        let (lu, lv) = (local[e.u], local[e.v]);
        if lu != usize::MAX && lv != usize::MAX {
            edges.push((lu, lv, e.len));
        }
    }
    if edges.is_empty() {
        return Ok(0.0);
    }

    let mut probes: Vec<Array1<f64>> = Vec::new();
    if m <= 256 {
        let mut lap = Array2::<f64>::zeros((m, m));
        for &(a, b, len) in &edges {
            let w = 1.0 / (len * len);
            lap[[a, a]] += w;
            lap[[b, b]] += w;
            lap[[a, b]] -= w;
            lap[[b, a]] -= w;
        }
        use ndarray_linalg::{Eigh, UPLO};
        let (_, vecs) = lap
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Backend(e.to_string()))?;
        for k in 0..m {
            probes.push(vecs.column(k).to_owned());
        }
    }
    let mut rng = crate::rng::substream(seed, "poincare-probes");
    for _ in 0..random_probes {
        probes.push(crate::rng::uniform_field(&mut rng, m));
    }

    let masses: Vec<f64> = ball.members.iter().map(|&v| space.measure(v)).collect();
    let mut degree = vec![0.0f64; m];
    for &(a, b, _) in &edges {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }

    let mut best = 0.0f64;
    for f in &probes {
        let mean: f64 =
            f.iter().zip(&masses).map(|(v, mu)| v * mu).sum::<f64>() / ball.mass;
        let lhs = (f
            .iter()
            .zip(&masses)
            .map(|(v, mu)| (v - mean).abs().powf(q) * mu)
            .sum::<f64>()
            / ball.mass)
            .powf(1.0 / q);
        // |grad f|(x)^2 = sum_y w (f_y - f_x)^2 / len^2 / sum_y w, w = 1.
        let mut grad2 = vec![0.0f64; m];
        for &(a, b, len) in &edges {
            let d = (f[a] - f[b]) / len;
            grad2[a] += d * d;
            grad2[b] += d * d;
        }
        let rhs = (grad2
            .iter()
            .zip(&degree)
            .zip(&masses)
            .map(|((g2, deg), mu)| {
                if *deg > 0.0 {
                    (g2 / deg).sqrt().powf(q) * mu
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / ball.mass)
            .powf(1.0 / q)
            * ball.radius;
        if rhs > 1e-13 {
            best = best.max(lhs / rhs);
        }
    }
    Ok(best)
}

fn dijkstra(adj: &[Vec<(u32, f64)>], n: usize, src: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem(0.0, src as u32));
    while let Some(HeapItem(d, u)) = heap.pop() {
        let u = u as usize;
        if d > dist[u] {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + len;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    dist
}

fn check_triangle(dist: &[f64], n: usize) -> Result<()> {
    let idx: Vec<usize> = if n <= 500 {
        (0..n).collect()
    } else {
        stride_sample(n, 64)
    };
    for &x in &idx {
        for &y in &idx {
            for &z in &idx {
                let lhs = dist[x * n + z];
                let rhs = dist[x * n + y] + dist[y * n + z];
                if lhs > rhs + 1e-9 * (1.0 + rhs) {
                    return Err(Error::InvalidParameter(format!(
                        "triangle inequality violated on ({x}, {y}, {z})"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn thin_radii(values: &[f64], ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &v in values {
        if v <= 0.0 {
            out.push(v);
            last = 0.0;
            continue;
        }
        if last <= 0.0 || v >= last * ratio {
            out.push(v);
            last = v;
        }
    }
    if let (Some(&max), Some(&tail)) = (values.last(), out.last()) {
        if tail < max {
            out.push(max);
        }
    }
    out
}

pub(crate) fn stride_sample(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}
