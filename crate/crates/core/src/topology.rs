//! Sensor network topology.
//!
//! Nodes live in the unit square and are linked when closer than the
//! communication radius. Neighborhoods are self-inclusive and kept sorted in
//! ascending node order, which is also the order neighbors are processed in
//! by the filter.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::combiners::CombinationMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// An undirected sensor network with self-inclusive neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    positions: Vec<[f64; 2]>,
    adjacency: Vec<bool>,
    neighborhoods: Vec<Vec<usize>>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

impl Network {
    /// Links every pair of nodes at most `radius` apart.
    pub fn from_positions(positions: Vec<[f64; 2]>, radius: f64) -> Self {
        let n = positions.len();
        let mut adjacency = vec![false; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                if distance(positions[a], positions[b]) <= radius {
                    adjacency[a * n + b] = true;
                    adjacency[b * n + a] = true;
                }
            }
        }
        Self::with_adjacency(positions, adjacency)
    }

    /// Builds a network from an explicit undirected edge list.
    pub fn from_edges(positions: Vec<[f64; 2]>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = positions.len();
        let mut adjacency = vec![false; n * n];
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n_nodes: n });
                }
            }
            if a == b {
                return Err(Error::InvalidParameter {
                    name: "edge",
                    reason: "self-loops are not allowed",
                });
            }
            adjacency[a * n + b] = true;
            adjacency[b * n + a] = true;
        }
        Ok(Self::with_adjacency(positions, adjacency))
    }

    fn with_adjacency(positions: Vec<[f64; 2]>, adjacency: Vec<bool>) -> Self {
        let mut net = Network {
            positions,
            adjacency,
            neighborhoods: Vec::new(),
        };
        net.rebuild_neighborhoods();
        net
    }

    fn rebuild_neighborhoods(&mut self) {
        let n = self.n_nodes();
        self.neighborhoods = (0..n)
            .map(|m| {
                (0..n)
                    .filter(|&k| k == m || self.adjacency[k * n + m])
                    .collect()
            })
            .collect();
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, m: usize) -> [f64; 2] {
        self.positions[m]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        distance(self.positions[a], self.positions[b])
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.n_nodes() + b]
    }

    /// `N_m`: node `m` and its neighbors, ascending.
    pub fn neighborhood(&self, m: usize) -> &[usize] {
        &self.neighborhoods[m]
    }

    /// `N_m` without `m`.
    pub fn neighbors(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighborhoods[m]
            .iter()
            .copied()
            .filter(move |&k| k != m)
    }

    pub fn degree(&self, m: usize) -> usize {
        self.neighborhoods[m].len() - 1
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n_nodes())
            .map(|m| self.degree(m))
            .min()
            .unwrap_or(0)
    }

    /// Undirected edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.adjacency[a * n + b])
            .collect()
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        let n = self.n_nodes();
        if self.adjacency[a * n + b] {
            self.adjacency[a * n + b] = false;
            self.adjacency[b * n + a] = false;
            self.neighborhoods[a].retain(|&k| k != b);
            self.neighborhoods[b].retain(|&k| k != a);
        }
    }

    /// Connected component label of each node, numbered from 1 in order of
    /// the lowest node index, restricted to links accepted by `keep`.
    fn components_by(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<usize> {
        let n = self.n_nodes();
        let mut label = vec![0usize; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != 0 {
                continue;
            }
            next += 1;
            label[start] = next;
            queue.push_back(start);
            while let Some(m) = queue.pop_front() {
                for k in self.neighbors(m) {
                    if label[k] == 0 && keep(m, k) {
                        label[k] = next;
                        queue.push_back(k);
                    }
                }
            }
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components_by(|_, _| true).iter().all(|&c| c == 1)
    }

    /// Connected components of the current links as a cluster assignment.
    pub fn components(&self) -> ClusterAssignment {
        ClusterAssignment::from_labels(self.components_by(|_, _| true))
    }

    /// Whether every cluster induces a connected subgraph.
    pub fn clusters_connected(&self, clusters: &ClusterAssignment) -> bool {
        let labels = self.components_by(|a, b| clusters.cluster_of(a) == clusters.cluster_of(b));
        // one component per cluster
        let n_components = labels.iter().copied().max().unwrap_or(0);
        n_components == clusters.count()
    }
}

/// Draws node positions uniformly in the unit square and links nodes within
/// `comm_radius`, resampling until the network is connected and every node
/// has at least `min_degree` neighbors.
pub fn generate_geometric<R: Rng + ?Sized>(
    n: usize,
    comm_radius: f64,
    min_degree: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n_nodes",
            reason: "a geometric network needs at least two nodes",
        });
    }
    if !(comm_radius > 0.0) || comm_radius > core::f64::consts::SQRT_2 {
        return Err(Error::InvalidParameter {
            name: "comm_radius",
            reason: "must lie in (0, sqrt 2]",
        });
    }
    for _ in 0..max_attempts {
        let positions = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let net = Network::from_positions(positions, comm_radius);
        if net.min_degree() >= min_degree && net.is_connected() {
            return Ok(net);
        }
    }
    Err(Error::TopologyExhausted {
        attempts: max_attempts,
        comm_radius,
        min_degree,
    })
}

/// Partition of the nodes into clusters labelled `1..=count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    cluster_of: Vec<usize>,
    count: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary labels to `1..=k` in order of first appearance.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let cluster_of = labels
            .iter()
            .map(|&l| match map.iter().find(|(from, _)| *from == l) {
                Some(&(_, to)) => to,
                None => {
                    map.push((l, map.len() + 1));
                    map.len()
                }
            })
            .collect();
        ClusterAssignment {
            cluster_of,
            count: map.len(),
        }
    }

    /// Uses the labels as given. Every label in `1..=count` must be used.
    pub fn new(cluster_of: Vec<usize>, count: usize) -> Result<Self> {
        let mut used = vec![false; count];
        for &c in &cluster_of {
            if c == 0 || c > count {
                return Err(Error::InvalidParameter {
                    name: "cluster label",
                    reason: "labels must lie in 1..=count",
                });
            }
            used[c - 1] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::InvalidParameter {
                name: "clusters",
                reason: "every cluster must be non-empty",
            });
        }
        Ok(ClusterAssignment { cluster_of, count })
    }

    /// All nodes in one cluster.
    pub fn single(n_nodes: usize) -> Self {
        ClusterAssignment {
            cluster_of: vec![1; n_nodes],
            count: if n_nodes == 0 { 0 } else { 1 },
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.cluster_of.len()
    }

    /// Number of clusters.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Cluster label of node `m`, starting at 1.
    pub fn cluster_of(&self, m: usize) -> usize {
        self.cluster_of[m]
    }

    pub fn labels(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.cluster_of
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(m, _)| m)
    }

    pub fn size(&self, cluster: usize) -> usize {
        self.members(cluster).count()
    }
}

/// Two-way partition around a random cluster head: nodes within
/// `head_radius` of the head form cluster 1, the rest cluster 2. The head is
/// redrawn while either cluster is empty.
pub fn initial_partition<R: Rng + ?Sized>(
    net: &Network,
    head_radius: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<ClusterAssignment> {
    initial_partition_where(net, head_radius, max_attempts, rng, |_| true)
}

/// Like [`initial_partition`], additionally redrawing the head until
/// `accept` holds for the partition.
pub fn initial_partition_where<R: Rng + ?Sized>(
    net: &Network,
    head_radius: f64,
    max_attempts: usize,
    rng: &mut R,
    accept: impl Fn(&ClusterAssignment) -> bool,
) -> Result<ClusterAssignment> {
    let n = net.n_nodes();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n_nodes",
            reason: "a two-way partition needs at least two nodes",
        });
    }
    for _ in 0..max_attempts {
        let head = rng.random_range(0..n);
        let labels: Vec<usize> = (0..n)
            .map(|m| {
                if net.distance(m, head) <= head_radius {
                    1
                } else {
                    2
                }
            })
            .collect();
        if let Ok(assignment) = ClusterAssignment::new(labels, 2) {
            if accept(&assignment) {
                return Ok(assignment);
            }
        }
    }
    Err(Error::PartitionExhausted {
        attempts: max_attempts,
    })
}

/// Clusters read off a combination matrix: nodes are joined when either
/// direction of their weight reaches `threshold`, and connected components
/// become clusters.
pub fn infer_clusters(c: &CombinationMatrix, threshold: f64) -> ClusterAssignment {
    let n = c.n_nodes();
    let mut label = vec![0usize; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        while let Some(m) = queue.pop_front() {
            #[allow(clippy::needless_range_loop)]
            for k in 0..n {
                if k != m && label[k] == 0 && c.weight(k, m).max(c.weight(m, k)) >= threshold {
                    label[k] = next;
                    queue.push_back(k);
                }
            }
        }
    }
    ClusterAssignment::from_labels(label)
}

/// Streaming link pruning: an edge is cut once both directions of its weight
/// have stayed below `tau` for `window` consecutive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPruner {
    tau: f64,
    window: usize,
    n: usize,
    streak: Vec<usize>,
}

impl LinkPruner {
    pub fn new(n_nodes: usize, tau: f64, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter {
                name: "prune_window",
                reason: "must be at least 1",
            });
        }
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "prune_tau",
                reason: "must be non-negative",
            });
        }
        Ok(LinkPruner {
            tau,
            window,
            n: n_nodes,
            streak: vec![0; n_nodes * n_nodes],
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Records one weight snapshot and removes edges whose streak completes.
    /// Returns the removed edges.
    pub fn observe(&mut self, net: &mut Network, c: &CombinationMatrix) -> Vec<(usize, usize)> {
        let mut removed = Vec::new();
        for (a, b) in net.edges() {
            let idx = a * self.n + b;
            if c.weight(a, b) < self.tau && c.weight(b, a) < self.tau {
                self.streak[idx] += 1;
            } else {
                self.streak[idx] = 0;
            }
            if self.streak[idx] >= self.window {
                removed.push((a, b));
            }
        }
        for &(a, b) in &removed {
            net.remove_edge(a, b);
        }
        removed
    }
}

/// Replays a history of weight matrices through a [`LinkPruner`] and returns
/// the pruned network.
pub fn prune_cross_links(
    net: &Network,
    history: &[CombinationMatrix],
    tau: f64,
    window: usize,
) -> Result<Network> {
    let mut pruner = LinkPruner::new(net.n_nodes(), tau, window)?;
    let mut out = net.clone();
    for c in history {
        pruner.observe(&mut out, c);
    }
    Ok(out)
}
