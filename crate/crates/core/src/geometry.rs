//! Point processes and Gilbert graphs in a finite box.
//!
//! The box is `[-L/2, L/2]^d` with the distinguished origin node at its
//! centre. Two nodes are adjacent iff their distance is at most `r` (closed
//! ball), measured with the minimum-image convention on the torus.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{finite, parameter, Error, Result};
use crate::stream::{stream, CellKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Topology {
    #[serde(alias = "bounded")]
    Bounded,
    #[serde(alias = "torus")]
    Torus,
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bounded" => Ok(Topology::Bounded),
            "torus" => Ok(Topology::Torus),
            other => Err(parameter(format!("unknown topology {other:?} (expected bounded or torus)"))),
        }
    }
}

/// The simulation window `[-side/2, side/2]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub dim: usize,
    pub side: f64,
    pub topology: Topology,
}

impl BoxSpec {
    pub fn new(dim: usize, side: f64, topology: Topology) -> Result<Self> {
        let spec = BoxSpec { dim, side, topology };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bounded(dim: usize, side: f64) -> Result<Self> {
        Self::new(dim, side, Topology::Bounded)
    }

    pub fn torus(dim: usize, side: f64) -> Result<Self> {
        Self::new(dim, side, Topology::Torus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(parameter("box dimension must be at least 1"));
        }
        finite("box side", self.side)?;
        if self.side <= 0.0 {
            return Err(parameter(format!("box side must be positive, got {}", self.side)));
        }
        Ok(())
    }

    pub fn half(&self) -> f64 {
        0.5 * self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.abs() <= self.half())
    }

    /// Squared distance, with minimum-image wrapping on the torus.
    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let mut d = (x - y).abs();
                if self.topology == Topology::Torus {
                    d = d.min(self.side - d);
                }
                d * d
            })
            .sum()
    }

    /// Whether `x` lies within `r` of a face. Always false on the torus.
    pub fn near_boundary(&self, x: &[f64], r: f64) -> bool {
        match self.topology {
            Topology::Torus => false,
            Topology::Bounded => x.iter().any(|c| self.half() - c.abs() <= r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "S")]
    Susceptible,
    #[serde(rename = "W")]
    WhiteKnight,
}

/// Unmarked points in a box, stored row-major with `box.dim` coordinates
/// per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    box_spec: BoxSpec,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(box_spec: BoxSpec, coords: Vec<f64>) -> Result<Self> {
        box_spec.validate()?;
        if !coords.len().is_multiple_of(box_spec.dim) {
            return Err(parameter("coordinate count is not a multiple of the dimension"));
        }
        let set = PointSet { box_spec, coords };
        if let Some(i) = (0..set.len()).find(|&i| !box_spec.contains(set.position(i))) {
            return Err(parameter(format!("point {i} lies outside the box")));
        }
        Ok(set)
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.box_spec
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.box_spec.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        let d = self.box_spec.dim;
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Keeps the points whose entry in `keep` is true.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> PointSet {
        let coords = (0..self.len()).filter(|&i| keep(i)).flat_map(|i| self.position(i).iter().copied()).collect();
        PointSet { box_spec: self.box_spec, coords }
    }
}

/// Homogeneous Poisson process of the given intensity in `box_spec`.
pub fn sample_ppp<R: Rng + ?Sized>(intensity: f64, box_spec: &BoxSpec, rng: &mut R) -> Result<PointSet> {
    finite("intensity", intensity)?;
    if intensity < 0.0 {
        return Err(parameter(format!("intensity must be non-negative, got {intensity}")));
    }
    box_spec.validate()?;
    let mean = intensity * box_spec.volume();
    finite("expected point count", mean)?;
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|e| parameter(format!("poisson mean {mean}: {e}")))?;
        poisson.sample(rng) as usize
    } else {
        0
    };
    let (side, half) = (box_spec.side, box_spec.half());
    let coords = (0..count * box_spec.dim).map(|_| rng.random::<f64>() * side - half).collect();
    Ok(PointSet { box_spec: *box_spec, coords })
}

/// Marked points plus the origin node.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    points: PointSet,
    marks: Vec<Mark>,
    origin_index: usize,
}

impl PointConfiguration {
    /// `points` must already contain the origin node at `origin_index`.
    pub fn new(points: PointSet, marks: Vec<Mark>, origin_index: usize) -> Result<Self> {
        if marks.len() != points.len() {
            return Err(parameter("one mark per point is required"));
        }
        if origin_index >= points.len() {
            return Err(parameter(format!("origin index {origin_index} out of range")));
        }
        if points.position(origin_index).iter().any(|&c| c != 0.0) {
            return Err(parameter("origin node must sit at the zero vector"));
        }
        if marks[origin_index] != Mark::Susceptible {
            return Err(parameter("origin node must carry the susceptible mark"));
        }
        Ok(PointConfiguration { points, marks, origin_index })
    }

    /// Prepends the origin at index 0 to `points`, all marks susceptible.
    pub fn susceptible_with_origin(points: &PointSet) -> Self {
        let mut coords = vec![0.0; points.box_spec.dim];
        coords.extend_from_slice(&points.coords);
        let marks = vec![Mark::Susceptible; points.len() + 1];
        PointConfiguration {
            points: PointSet { box_spec: points.box_spec, coords },
            marks,
            origin_index: 0,
        }
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.points.box_spec
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    pub fn position(&self, i: usize) -> &[f64] {
        self.points.position(i)
    }

    pub fn mark(&self, i: usize) -> Mark {
        self.marks[i]
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn knight_count(&self) -> usize {
        self.marks.iter().filter(|&&m| m == Mark::WhiteKnight).count()
    }

    pub fn susceptible_count(&self) -> usize {
        self.len() - self.knight_count()
    }

    pub fn to_document(&self, radius: f64) -> ConfigDocument {
        ConfigDocument {
            box_spec: *self.box_spec(),
            radius,
            points: (0..self.len())
                .map(|i| PointRecord { x: self.position(i).to_vec(), mark: self.marks[i] })
                .collect(),
            origin_index: self.origin_index,
        }
    }

    pub fn from_document(doc: &ConfigDocument) -> Result<Self> {
        let dim = doc.box_spec.dim;
        if let Some(p) = doc.points.iter().find(|p| p.x.len() != dim) {
            return Err(parameter(format!("point {:?} does not have {dim} coordinates", p.x)));
        }
        let coords = doc.points.iter().flat_map(|p| p.x.iter().copied()).collect();
        let points = PointSet::new(doc.box_spec, coords)?;
        Self::new(points, doc.points.iter().map(|p| p.mark).collect(), doc.origin_index)
    }
}

/// Serialized form of a configuration together with the connection radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    pub radius: f64,
    pub points: Vec<PointRecord>,
    pub origin_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub mark: Mark,
}

/// Independent marking: every point except the origin becomes a white knight
/// with probability `p`. The origin is prepended at index 0 with the
/// susceptible mark; it carries the initial infection in the dynamics.
pub fn thin_marks<R: Rng + ?Sized>(points: &PointSet, p: f64, rng: &mut R) -> Result<PointConfiguration> {
    if !(0.0..=1.0).contains(&p) {
        return Err(parameter(format!("thinning probability must lie in [0, 1], got {p}")));
    }
    let mut config = PointConfiguration::susceptible_with_origin(points);
    for mark in config.marks.iter_mut().skip(1) {
        if rng.random::<f64>() < p {
            *mark = Mark::WhiteKnight;
        }
    }
    Ok(config)
}

/// Immutable Gilbert graph over a configuration, adjacency in CSR form with
/// every neighbour list sorted by node index.
#[derive(Debug, Clone)]
pub struct GilbertGraph {
    config: PointConfiguration,
    radius: f64,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    boundary: Vec<bool>,
}

/// Cell grids beyond this many cells fall back to the all-pairs scan.
const MAX_GRID_CELLS: usize = 1 << 24;

pub fn build_gilbert(config: PointConfiguration, r: f64) -> Result<GilbertGraph> {
    finite("radius", r)?;
    if r <= 0.0 {
        return Err(parameter(format!("connection radius must be positive, got {r}")));
    }
    let n = config.len();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut link = |i: usize, j: usize| {
        lists[i].push(j);
        lists[j].push(i);
    };
    let box_spec = *config.box_spec();
    let r2 = r * r;
    match CellGrid::new(&config, r) {
        Some(grid) => {
            let mut nearby = Vec::new();
            for i in 0..n {
                grid.neighbor_cells(grid.cell_of[i], &mut nearby);
                for &cell in &nearby {
                    for &j in grid.members(cell) {
                        if j > i && box_spec.distance_sq(config.position(i), config.position(j)) <= r2 {
                            link(i, j);
                        }
                    }
                }
            }
        }
        None => {
            for i in 0..n {
                for j in i + 1..n {
                    if box_spec.distance_sq(config.position(i), config.position(j)) <= r2 {
                        link(i, j);
                    }
                }
            }
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    for mut list in lists {
        list.sort_unstable();
        neighbors.extend(list);
        offsets.push(neighbors.len());
    }
    let boundary = (0..n).map(|i| box_spec.near_boundary(config.position(i), r)).collect();
    Ok(GilbertGraph { config, radius: r, offsets, neighbors, boundary })
}

/// Uniform grid with cells of side at least `r`, so every neighbour of a
/// point lies in one of the `3^d` cells around it.
struct CellGrid {
    per_axis: usize,
    dim: usize,
    torus: bool,
    cell_of: Vec<usize>,
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl CellGrid {
    /// `None` when the grid would be degenerate (fewer than 3 cells per
    /// axis) or too large; the caller then scans all pairs.
    fn new(config: &PointConfiguration, r: f64) -> Option<Self> {
        let b = config.box_spec();
        let torus = b.topology == Topology::Torus;
        // Bounded: cells of side exactly r, the last one possibly partial.
        // Torus: the side must divide L, so use floor(L / r) cells of side >= r.
        let per_axis = if torus { (b.side / r).floor() } else { (b.side / r).ceil() };
        if per_axis < 3.0 {
            return None;
        }
        let per_axis = per_axis as usize;
        let total = (0..b.dim).try_fold(1usize, |acc, _| acc.checked_mul(per_axis).filter(|&t| t <= MAX_GRID_CELLS))?;
        let cell_side = if torus { b.side / per_axis as f64 } else { r };
        let axis_index = |c: f64| (((c + b.half()) / cell_side).floor().max(0.0) as usize).min(per_axis - 1);
        let cell_of: Vec<usize> = (0..config.len())
            .map(|i| config.position(i).iter().fold(0, |acc, &c| acc * per_axis + axis_index(c)))
            .collect();
        let mut starts = vec![0usize; total + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0; cell_of.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        Some(CellGrid { per_axis, dim: b.dim, torus, cell_of, starts, order })
    }

    fn members(&self, cell: usize) -> &[usize] {
        &self.order[self.starts[cell]..self.starts[cell + 1]]
    }

    fn neighbor_cells(&self, cell: usize, out: &mut Vec<usize>) {
        out.clear();
        let m = self.per_axis;
        let mut axes = vec![0usize; self.dim];
        let mut rest = cell;
        for a in (0..self.dim).rev() {
            axes[a] = rest % m;
            rest /= m;
        }
        let combos = 3usize.pow(self.dim as u32);
        'combo: for combo in 0..combos {
            let mut code = combo;
            let mut id = 0;
            for &axis in &axes {
                let shift = code % 3;
                code /= 3;
                let c = match (axis + shift).checked_sub(1) {
                    Some(c) if c < m => c,
                    Some(_) if self.torus => 0,
                    None if self.torus => m - 1,
                    _ => continue 'combo,
                };
                id = id * m + c;
            }
            out.push(id);
        }
    }
}

impl GilbertGraph {
    pub fn config(&self) -> &PointConfiguration {
        &self.config
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.config.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn mean_degree(&self) -> f64 {
        if self.node_count() == 0 {
            0.0
        } else {
            self.neighbors.len() as f64 / self.node_count() as f64
        }
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Whether node `i` lies within `r` of a face of a bounded box.
    pub fn in_boundary_shell(&self, i: usize) -> bool {
        self.boundary[i]
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.node_count() {
            Ok(())
        } else {
            Err(parameter(format!("node index {i} out of range (graph has {} nodes)", self.node_count())))
        }
    }

    /// Whether traversal restricted to the susceptible subgraph may enter `v`.
    fn susceptible_or_origin(&self, v: usize) -> bool {
        v == self.config.origin_index || self.config.mark(v) == Mark::Susceptible
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterReport {
    /// Sorted node indices.
    pub member_indices: Vec<usize>,
    pub touches_boundary: bool,
    pub size: usize,
}

/// Connected component of `start`. With `restrict_to_susceptible` only
/// susceptible-marked nodes and the origin are traversed, which yields the
/// susceptible cluster of the origin when `start` is the origin.
pub fn cluster_of(graph: &GilbertGraph, start: usize, restrict_to_susceptible: bool) -> Result<ClusterReport> {
    graph.check_node(start)?;
    let allowed = |v: usize| !restrict_to_susceptible || graph.susceptible_or_origin(v);
    let mut seen = vec![false; graph.node_count()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut members = Vec::new();
    while let Some(v) = queue.pop_front() {
        members.push(v);
        for &u in graph.neighbors(v) {
            if !seen[u] && allowed(u) {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    members.sort_unstable();
    let touches_boundary = members.iter().any(|&v| graph.in_boundary_shell(v));
    Ok(ClusterReport { size: members.len(), member_indices: members, touches_boundary })
}

/// Resource caps for self-avoiding path enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SawLimits {
    /// Stop once this many complete paths have been counted.
    pub max_paths: u64,
    /// Stop after this many search-tree node expansions.
    pub max_expansions: u64,
}

impl Default for SawLimits {
    fn default() -> Self {
        SawLimits { max_paths: 1 << 32, max_expansions: 1 << 34 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SawCount {
    /// `counts[m]` is the number of self-avoiding paths with `m` edges.
    pub counts: Vec<u64>,
    /// True when a limit stopped the search; `counts` are then lower bounds.
    pub capped: bool,
}

impl SawCount {
    pub fn count(&self, n: usize) -> u64 {
        self.counts[n]
    }
}

/// Counts self-avoiding paths of exactly `n` edges starting at `origin`.
pub fn count_saws(
    graph: &GilbertGraph,
    origin: usize,
    n: usize,
    restrict_to_susceptible: bool,
    limits: SawLimits,
) -> Result<(u64, bool)> {
    let profile = count_saw_profile(graph, origin, n, restrict_to_susceptible, limits)?;
    Ok((profile.counts[n], profile.capped))
}

/// Counts self-avoiding paths of every length `0..=n_max` in one search.
pub fn count_saw_profile(
    graph: &GilbertGraph,
    origin: usize,
    n_max: usize,
    restrict_to_susceptible: bool,
    limits: SawLimits,
) -> Result<SawCount> {
    graph.check_node(origin)?;
    let mut search = SawSearch {
        graph,
        restrict: restrict_to_susceptible,
        n_max,
        limits,
        visited: vec![false; graph.node_count()],
        counts: vec![0; n_max + 1],
        expansions: 0,
        capped: false,
    };
    search.visited[origin] = true;
    search.extend(origin, 0);
    Ok(SawCount { counts: search.counts, capped: search.capped })
}

struct SawSearch<'g> {
    graph: &'g GilbertGraph,
    restrict: bool,
    n_max: usize,
    limits: SawLimits,
    visited: Vec<bool>,
    counts: Vec<u64>,
    expansions: u64,
    capped: bool,
}

impl SawSearch<'_> {
    fn extend(&mut self, v: usize, depth: usize) {
        self.counts[depth] += 1;
        self.expansions += 1;
        if self.counts[depth] >= self.limits.max_paths || self.expansions >= self.limits.max_expansions {
            self.capped = true;
        }
        if depth == self.n_max || self.capped {
            return;
        }
        for &u in self.graph.neighbors(v) {
            if self.visited[u] || (self.restrict && !self.graph.susceptible_or_origin(u)) {
                continue;
            }
            self.visited[u] = true;
            self.extend(u, depth + 1);
            self.visited[u] = false;
            if self.capped {
                return;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub stderr: f64,
    pub replications: u64,
}

impl ThetaEstimate {
    pub(crate) fn from_hits(hits: u64, replications: u64) -> Self {
        let p = hits as f64 / replications as f64;
        ThetaEstimate { theta: p, stderr: (p * (1.0 - p) / replications as f64).sqrt(), replications }
    }
}

/// Stream family used by [`estimate_theta`].
pub const THETA_STREAM_TAG: u64 = 0x0074_6865_7461;

/// Finite-box percolation probability: the fraction of replications in which
/// the susceptible cluster of the origin reaches the boundary shell.
pub fn estimate_theta(mu_s: f64, r: f64, box_spec: &BoxSpec, replications: u64, master_seed: u64) -> Result<ThetaEstimate> {
    if box_spec.topology == Topology::Torus {
        return Err(Error::UnsupportedEstimator(
            "percolation probability needs a bounded box (nothing touches the boundary of a torus)".into(),
        ));
    }
    if replications == 0 {
        return Err(parameter("at least one replication is required"));
    }
    let hits = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<bool> {
            let mut rng = stream(master_seed, CellKey::tagged(THETA_STREAM_TAG, 0), rep);
            let points = sample_ppp(mu_s, box_spec, &mut rng)?;
            let graph = build_gilbert(PointConfiguration::susceptible_with_origin(&points), r)?;
            Ok(cluster_of(&graph, 0, true)?.touches_boundary)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(ThetaEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, replications))
}

/// Percolation estimates on a grid of intensities under coupled thinning:
/// each replication samples the process at the largest intensity, gives
/// every point a uniform label `u`, and keeps the points with
/// `u < mu / mu_max` for each grid value. Clusters are then nested across
/// the grid within a replication, so the estimated curve is non-decreasing.
pub fn estimate_theta_coupled(
    mu_grid: &[f64],
    r: f64,
    box_spec: &BoxSpec,
    replications: u64,
    master_seed: u64,
) -> Result<Vec<ThetaEstimate>> {
    if box_spec.topology == Topology::Torus {
        return Err(Error::UnsupportedEstimator("percolation probability needs a bounded box".into()));
    }
    if replications == 0 {
        return Err(parameter("at least one replication is required"));
    }
    if mu_grid.is_empty() {
        return Err(parameter("intensity grid is empty"));
    }
    if mu_grid.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) || mu_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(parameter("intensity grid must be finite, non-negative and non-decreasing"));
    }
    let mu_max = mu_grid[mu_grid.len() - 1];
    let per_rep = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>> {
            let mut rng = stream(master_seed, CellKey::tagged(THETA_STREAM_TAG, 1), rep);
            let all = sample_ppp(mu_max, box_spec, &mut rng)?;
            let labels: Vec<f64> = (0..all.len()).map(|_| rng.random()).collect();
            mu_grid
                .iter()
                .map(|&mu| {
                    let keep = if mu_max > 0.0 { mu / mu_max } else { 0.0 };
                    let points = all.select(|i| labels[i] < keep);
                    let graph = build_gilbert(PointConfiguration::susceptible_with_origin(&points), r)?;
                    Ok(cluster_of(&graph, 0, true)?.touches_boundary)
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;
    Ok((0..mu_grid.len())
        .map(|j| ThetaEstimate::from_hits(per_rep.iter().filter(|hits| hits[j]).count() as u64, replications))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::SimRng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> SimRng {
        SimRng::seed_from_u64(seed)
    }

    fn line_config(xs: &[f64], side: f64) -> PointConfiguration {
        let b = BoxSpec::bounded(1, side).unwrap();
        let points = PointSet::new(b, xs.to_vec()).unwrap();
        let origin = xs.iter().position(|&x| x == 0.0).unwrap();
        PointConfiguration::new(points, vec![Mark::Susceptible; xs.len()], origin).unwrap()
    }

    fn brute_adjacency(config: &PointConfiguration, r: f64) -> Vec<Vec<usize>> {
        let b = config.box_spec();
        (0..config.len())
            .map(|i| {
                (0..config.len())
                    .filter(|&j| j != i && b.distance_sq(config.position(i), config.position(j)) <= r * r)
                    .collect()
            })
            .collect()
    }

    fn random_config(dim: usize, side: f64, topology: Topology, intensity: f64, p: f64, seed: u64) -> PointConfiguration {
        let b = BoxSpec::new(dim, side, topology).unwrap();
        let mut rng = rng(seed);
        let pts = sample_ppp(intensity, &b, &mut rng).unwrap();
        thin_marks(&pts, p, &mut rng).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(BoxSpec::bounded(0, 1.0).is_err());
        assert!(BoxSpec::bounded(2, 0.0).is_err());
        assert!(BoxSpec::bounded(2, f64::INFINITY).is_err());
        assert_eq!("torus".parse::<Topology>().unwrap(), Topology::Torus);
        assert!("sphere".parse::<Topology>().is_err());
    }

    #[test]
    fn zero_intensity_is_empty() {
        let b = BoxSpec::bounded(3, 5.0).unwrap();
        assert!(sample_ppp(0.0, &b, &mut rng(1)).unwrap().is_empty());
        assert!(sample_ppp(-1.0, &b, &mut rng(1)).is_err());
        assert!(sample_ppp(f64::NAN, &b, &mut rng(1)).is_err());
    }

    #[test]
    fn samples_stay_in_box_and_are_deterministic() {
        let b = BoxSpec::bounded(2, 7.0).unwrap();
        let a = sample_ppp(2.0, &b, &mut rng(9)).unwrap();
        let c = sample_ppp(2.0, &b, &mut rng(9)).unwrap();
        assert_eq!(a, c);
        assert!((0..a.len()).all(|i| b.contains(a.position(i))));
    }

    #[test]
    fn thinning_extremes() {
        let b = BoxSpec::bounded(2, 10.0).unwrap();
        let pts = sample_ppp(1.0, &b, &mut rng(3)).unwrap();
        let none = thin_marks(&pts, 0.0, &mut rng(4)).unwrap();
        assert_eq!(none.knight_count(), 0);
        let all = thin_marks(&pts, 1.0, &mut rng(4)).unwrap();
        assert_eq!(all.susceptible_count(), 1);
        assert_eq!(all.mark(all.origin_index()), Mark::Susceptible);
        assert!(thin_marks(&pts, 1.5, &mut rng(4)).is_err());
    }

    #[test]
    fn edges_follow_the_closed_ball() {
        let g = build_gilbert(line_config(&[0.0, 0.9], 10.0), 1.0).unwrap();
        assert_eq!(g.edge_count(), 1);
        let g = build_gilbert(line_config(&[0.0, 1.1], 10.0), 1.0).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = build_gilbert(line_config(&[0.0, 0.5], 10.0), 0.5).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(build_gilbert(line_config(&[0.0], 10.0), 0.0).is_err());
        assert!(build_gilbert(line_config(&[0.0], 10.0), -1.0).is_err());
    }

    #[test]
    fn grid_matches_brute_force() {
        let cases = [
            (2, 20.0, Topology::Bounded, 1.25, 1.0),
            (2, 20.0, Topology::Torus, 1.25, 1.0),
            (2, 20.0, Topology::Torus, 1.25, 1.7),
            (3, 8.0, Topology::Bounded, 1.0, 1.0),
            (3, 8.0, Topology::Torus, 1.0, 1.3),
            (1, 50.0, Topology::Bounded, 3.0, 0.4),
            (2, 2.5, Topology::Bounded, 5.0, 1.0),
            (2, 2.5, Topology::Torus, 5.0, 1.0),
        ];
        for (k, &(dim, side, topo, intensity, r)) in cases.iter().enumerate() {
            let config = random_config(dim, side, topo, intensity, 0.3, k as u64);
            let g = build_gilbert(config.clone(), r).unwrap();
            let brute = brute_adjacency(&config, r);
            for i in 0..config.len() {
                assert_eq!(g.neighbors(i), brute[i].as_slice(), "case {k}, node {i}");
            }
        }
    }

    #[test]
    fn boundary_shell() {
        let g = build_gilbert(line_config(&[0.0, 4.2, -4.1, 3.0], 10.0), 1.0).unwrap();
        assert!(g.in_boundary_shell(1));
        assert!(g.in_boundary_shell(2));
        assert!(!g.in_boundary_shell(0));
        assert!(!g.in_boundary_shell(3));
    }

    #[test]
    fn clusters() {
        let g = build_gilbert(line_config(&[0.0], 10.0), 1.0).unwrap();
        let c = cluster_of(&g, 0, false).unwrap();
        assert_eq!((c.size, c.member_indices.clone()), (1, vec![0]));
        assert!(cluster_of(&g, 1, false).is_err());

        let g = build_gilbert(line_config(&[0.0, 0.9, 1.8, 3.5], 10.0), 1.0).unwrap();
        for start in 0..3 {
            assert_eq!(cluster_of(&g, start, false).unwrap().member_indices, vec![0, 1, 2]);
        }
        assert_eq!(cluster_of(&g, 3, false).unwrap().size, 1);
    }

    #[test]
    fn restricted_cluster_skips_knights() {
        let b = BoxSpec::bounded(1, 20.0).unwrap();
        let points = PointSet::new(b, vec![0.0, 0.9, 1.8, -0.9, -1.8]).unwrap();
        use Mark::*;
        let config = PointConfiguration::new(points, vec![Susceptible, WhiteKnight, Susceptible, Susceptible, Susceptible], 0).unwrap();
        let g = build_gilbert(config, 1.0).unwrap();
        assert_eq!(cluster_of(&g, 0, false).unwrap().size, 5);
        assert_eq!(cluster_of(&g, 0, true).unwrap().member_indices, vec![0, 3, 4]);
    }

    #[test]
    fn torus_never_touches_boundary() {
        let config = random_config(2, 10.0, Topology::Torus, 3.0, 0.0, 5);
        let g = build_gilbert(config, 1.0).unwrap();
        assert!(!cluster_of(&g, 0, false).unwrap().touches_boundary);
    }

    #[test]
    fn saw_small_graphs() {
        // Star K_{1,3} centred at the origin.
        let b = BoxSpec::bounded(2, 10.0).unwrap();
        let star = PointSet::new(b, vec![0.0, 0.0, 0.9, 0.0, -0.9, 0.0, 0.0, 0.9]).unwrap();
        let g = build_gilbert(PointConfiguration::susceptible_with_origin(&star.select(|i| i > 0)), 1.0).unwrap();
        assert_eq!(count_saws(&g, 0, 0, false, SawLimits::default()).unwrap(), (1, false));
        assert_eq!(count_saws(&g, 0, 1, false, SawLimits::default()).unwrap(), (3, false));
        assert_eq!(count_saws(&g, 0, 2, false, SawLimits::default()).unwrap(), (0, false));

        // Triangle.
        let tri = PointSet::new(b, vec![0.5, 0.0, 0.25, 0.4]).unwrap();
        let g = build_gilbert(PointConfiguration::susceptible_with_origin(&tri), 1.0).unwrap();
        for v in 0..3 {
            assert_eq!(count_saws(&g, v, 2, false, SawLimits::default()).unwrap().0, 2);
        }
    }

    #[test]
    fn saw_cap_is_flagged() {
        let config = random_config(2, 6.0, Topology::Bounded, 3.0, 0.0, 2);
        let g = build_gilbert(config, 1.0).unwrap();
        let free = count_saws(&g, 0, 4, false, SawLimits::default()).unwrap();
        assert!(!free.1 && free.0 > 10);
        let limits = SawLimits { max_paths: 10, ..SawLimits::default() };
        let capped = count_saws(&g, 0, 4, false, limits).unwrap();
        assert!(capped.1);
        assert!(capped.0 <= 10);
    }

    #[test]
    fn theta_estimator_contract() {
        let torus = BoxSpec::torus(2, 10.0).unwrap();
        assert!(matches!(estimate_theta(1.0, 1.0, &torus, 10, 1), Err(Error::UnsupportedEstimator(_))));
        let b = BoxSpec::bounded(2, 10.0).unwrap();
        assert!(estimate_theta(1.0, 1.0, &b, 0, 1).is_err());
        let zero = estimate_theta(0.0, 1.0, &b, 50, 1).unwrap();
        assert_eq!(zero.theta, 0.0);
        assert!(estimate_theta_coupled(&[1.0, 0.5], 1.0, &b, 5, 1).is_err());
        assert!(estimate_theta_coupled(&[], 1.0, &b, 5, 1).is_err());
    }

    #[test]
    fn coupled_theta_is_monotone() {
        let b = BoxSpec::bounded(2, 16.0).unwrap();
        let curve = estimate_theta_coupled(&[0.0, 0.5, 1.5, 3.0], 1.0, &b, 100, 4).unwrap();
        assert_eq!(curve[0].theta, 0.0);
        assert!(curve.windows(2).all(|w| w[0].theta <= w[1].theta), "{curve:?}");
        assert!(curve[3].theta > 0.5);
    }

    #[test]
    fn document_round_trip() {
        let config = random_config(2, 5.0, Topology::Torus, 1.0, 0.4, 11);
        let doc = config.to_document(1.0);
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains("\"box\":{\"dim\":2,\"side\":5.0,\"topology\":\"TORUS\"}"));
        assert!(json.contains("\"mark\":\"S\""));
        let back: ConfigDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(PointConfiguration::from_document(&back).unwrap(), config);
    }

    #[test]
    fn document_validation() {
        let json = r#"{"box":{"dim":1,"side":4.0,"topology":"BOUNDED"},"radius":1.0,
            "points":[{"x":[0.0],"mark":"S"},{"x":[3.0],"mark":"W"}],"origin_index":0}"#;
        let doc: ConfigDocument = serde_json::from_str(json).unwrap();
        assert!(PointConfiguration::from_document(&doc).is_err());
    }
}
