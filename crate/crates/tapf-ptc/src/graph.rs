//! Undirected world graph with unit-cost moves, precomputed all-pairs
//! distances, and a procedural region-based generator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Index of a traversable node in a [`WorldGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {0} out of range (graph has {1} vertices)")]
    InvalidVertex(usize, usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("graph is not connected: vertex {0} unreachable from vertex 0")]
    Disconnected(usize),
    #[error("graph has no vertices")]
    Empty,
    #[error("region label list has {0} entries for {1} vertices")]
    RegionLabelMismatch(usize, usize),
    #[error("coordinate list has {0} entries for {1} vertices")]
    CoordinateMismatch(usize, usize),
}

/// Immutable undirected graph of traversable nodes. Distances are
/// precomputed at construction, so `shortest_dist` is a table lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldGraph {
    adjacency: Vec<Vec<VertexId>>,
    region: Vec<u16>,
    coords: Option<Vec<(f64, f64)>>,
    dist: Vec<Vec<u32>>,
}

impl WorldGraph {
    /// Builds and validates a graph from an edge list. Edges may appear in
    /// either direction; duplicates are collapsed. Fails on self-loops,
    /// out-of-range endpoints, or a disconnected graph.
    pub fn new(
        vertex_count: usize,
        edges: &[(usize, usize)],
        region: Vec<u16>,
        coords: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, GraphError> {
        if vertex_count == 0 {
            return Err(GraphError::Empty);
        }
        if region.len() != vertex_count {
            return Err(GraphError::RegionLabelMismatch(region.len(), vertex_count));
        }
        if let Some(c) = &coords {
            if c.len() != vertex_count {
                return Err(GraphError::CoordinateMismatch(c.len(), vertex_count));
            }
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            if u >= vertex_count {
                return Err(GraphError::InvalidVertex(u, vertex_count));
            }
            if v >= vertex_count {
                return Err(GraphError::InvalidVertex(v, vertex_count));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(VertexId(v));
            adjacency[v].push(VertexId(u));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let dist = all_pairs_bfs(&adjacency);
        if let Some(v) = dist[0].iter().position(|&d| d == u32::MAX) {
            return Err(GraphError::Disconnected(v));
        }
        Ok(WorldGraph {
            adjacency,
            region,
            coords,
            dist,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).map(VertexId)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.0 < self.vertex_count()
    }

    /// Neighbors of `v`, sorted ascending. Never contains `v` itself.
    pub fn neighbors(&self, v: VertexId) -> Result<&[VertexId], GraphError> {
        self.adjacency
            .get(v.0)
            .map(|n| n.as_slice())
            .ok_or(GraphError::InvalidVertex(v.0, self.vertex_count()))
    }

    /// Minimum number of unit-cost moves from `u` to `v`.
    pub fn shortest_dist(&self, u: VertexId, v: VertexId) -> Result<u32, GraphError> {
        if !self.contains(u) {
            return Err(GraphError::InvalidVertex(u.0, self.vertex_count()));
        }
        if !self.contains(v) {
            return Err(GraphError::InvalidVertex(v.0, self.vertex_count()));
        }
        Ok(self.dist[u.0][v.0])
    }

    /// Unchecked distance lookup for hot paths; both ids must be valid.
    pub fn dist(&self, u: VertexId, v: VertexId) -> u32 {
        self.dist[u.0][v.0]
    }

    pub fn region_label(&self, v: VertexId) -> u16 {
        self.region[v.0]
    }

    pub fn region_count(&self) -> usize {
        self.region.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// Vertices carrying a given region label, ascending.
    pub fn region_vertices(&self, label: u16) -> Vec<VertexId> {
        (0..self.vertex_count())
            .filter(|&v| self.region[v] == label)
            .map(VertexId)
            .collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, list) in self.adjacency.iter().enumerate() {
            for &VertexId(v) in list {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn regions(&self) -> &[u16] {
        &self.region
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        self.coords.as_deref()
    }

    /// Stored coordinates, or positions synthesized on the same per-region
    /// unit grid the generator uses. Locality heuristics call this so they
    /// work on graphs loaded without a coordinate section.
    pub fn coords_or_synthesized(&self) -> Vec<(f64, f64)> {
        if let Some(c) = &self.coords {
            return c.clone();
        }
        let mut per_region_index = vec![0usize; self.region_count().max(1)];
        let mut counts = vec![0usize; self.region_count().max(1)];
        for &r in &self.region {
            counts[r as usize] += 1;
        }
        let mut out = Vec::with_capacity(self.vertex_count());
        for v in 0..self.vertex_count() {
            let r = self.region[v] as usize;
            let k = per_region_index[r];
            per_region_index[r] += 1;
            out.push(grid_coord(r, k, counts[r]));
        }
        out
    }
}

fn all_pairs_bfs(adjacency: &[Vec<VertexId>]) -> Vec<Vec<u32>> {
    let n = adjacency.len();
    let mut table = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    for src in 0..n {
        let mut dist = vec![u32::MAX; n];
        dist[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &VertexId(v) in &adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        table.push(dist);
    }
    table
}

fn grid_coord(region: usize, index: usize, region_size: usize) -> (f64, f64) {
    let side = (region_size.max(1) as f64).sqrt().ceil() as usize;
    let x = (region * (side + 1) + index % side) as f64;
    let y = (index / side) as f64;
    (x, y)
}

/// Parameters for the procedural world generator.
#[derive(Debug, Clone)]
pub struct WorldGenConfig {
    pub region_count: usize,
    pub nodes_per_region: usize,
    /// Total intra-region edges as a multiple of spanning-tree edges.
    pub edge_density: f64,
    /// Bridge edges between each pair of consecutive regions.
    pub bridges_per_pair: usize,
}

impl WorldGenConfig {
    pub fn new(region_count: usize, nodes_per_region: usize) -> Self {
        WorldGenConfig {
            region_count,
            nodes_per_region,
            edge_density: 1.3,
            bridges_per_pair: 1,
        }
    }
}

/// Generates a connected world: per region a random spanning tree plus extra
/// random edges, consecutive regions joined by bridge edges, coordinates on
/// a per-region unit grid. Deterministic for a fixed seed.
pub fn generate_world(config: &WorldGenConfig, seed: u64) -> WorldGraph {
    assert!(config.region_count >= 1, "need at least one region");
    assert!(config.nodes_per_region >= 1, "need at least one node per region");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let npr = config.nodes_per_region;
    let n = config.region_count * npr;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut adjacent = vec![std::collections::HashSet::new(); n];
    let add_edge = |edges: &mut Vec<(usize, usize)>,
                        adjacent: &mut Vec<std::collections::HashSet<usize>>,
                        u: usize,
                        v: usize|
     -> bool {
        if u == v || adjacent[u].contains(&v) {
            return false;
        }
        adjacent[u].insert(v);
        adjacent[v].insert(u);
        edges.push((u.min(v), u.max(v)));
        true
    };

    for r in 0..config.region_count {
        let base = r * npr;
        for k in 1..npr {
            let parent = rng.gen_range(0..k);
            add_edge(&mut edges, &mut adjacent, base + k, base + parent);
        }
        let tree_edges = npr.saturating_sub(1);
        let extra = ((config.edge_density - 1.0) * tree_edges as f64).round().max(0.0) as usize;
        let mut added = 0;
        let mut attempts = 0;
        // A sparse region can run out of non-adjacent pairs; cap the retries.
        while added < extra && attempts < 20 * extra.max(1) {
            let u = base + rng.gen_range(0..npr);
            let v = base + rng.gen_range(0..npr);
            if add_edge(&mut edges, &mut adjacent, u, v) {
                added += 1;
            }
            attempts += 1;
        }
    }
    for r in 1..config.region_count {
        let prev_base = (r - 1) * npr;
        let base = r * npr;
        for _ in 0..config.bridges_per_pair.max(1) {
            let mut placed = false;
            let mut attempts = 0;
            while !placed && attempts < 50 {
                let u = prev_base + rng.gen_range(0..npr);
                let v = base + rng.gen_range(0..npr);
                placed = add_edge(&mut edges, &mut adjacent, u, v);
                attempts += 1;
            }
        }
    }

    let region: Vec<u16> = (0..n).map(|v| (v / npr) as u16).collect();
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|v| grid_coord(v / npr, v % npr, npr))
        .collect();
    WorldGraph::new(n, &edges, region, Some(coords)).expect("generator produced invalid graph")
}
