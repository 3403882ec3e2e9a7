use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::volume::Dims;

use super::{neighbours, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Exactly one skeleton neighbour.
    Endpoint,
    /// A 26-connected cluster of voxels with three or more neighbours.
    Junction,
    /// Skeleton consisting of a single voxel.
    Isolated,
    /// Anchor placed on a closed loop that has no other node.
    LoopAnchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub voxels: Vec<usize>,
    /// Mean voxel coordinate of the node.
    pub position: [f64; 3],
    /// Largest distance-map value over the node's voxels (mm).
    pub radius: f64,
}

/// A chain of skeleton voxels between two nodes (`a <= b`). `voxels`
/// excludes the node voxels and may be empty when two nodes touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub voxels: Vec<usize>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineGraph {
    pub dims: Dims,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub root: usize,
}

impl CenterlineGraph {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Mean radius along the chain, falling back to the end nodes' radii
    /// for edges with no interior voxels.
    pub fn edge_mean_radius(&self, e: &Edge) -> f64 {
        if e.radii.is_empty() {
            0.5 * (self.nodes[e.a].radius + self.nodes[e.b].radius)
        } else {
            e.radii.iter().sum::<f64>() / e.radii.len() as f64
        }
    }

    pub fn edge_max_radius(&self, e: &Edge) -> f64 {
        e.radii
            .iter()
            .copied()
            .fold(self.nodes[e.a].radius.max(self.nodes[e.b].radius), f64::max)
    }

    /// Largest radius over every skeleton voxel.
    pub fn max_radius(&self) -> f64 {
        let n = self.nodes.iter().map(|n| n.radius).fold(0.0, f64::max);
        self.edges
            .iter()
            .flat_map(|e| e.radii.iter().copied())
            .fold(n, f64::max)
    }

    pub fn incident_edges(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.a == node || e.b == node)
    }
}

/// Split a skeleton into nodes (endpoints, junction clusters) and the voxel
/// chains between them. `distances` supplies the per-voxel radius (mm).
///
/// Nodes are numbered by their smallest voxel index. The root is the node
/// with the largest radius over itself and its incident edges; ties go to
/// the lower node id.
pub fn build_centerline_graph(skeleton: &[u8], dims: Dims, distances: &[f64]) -> Result<CenterlineGraph> {
    let offs = Connectivity::TwentySix.offsets();
    let mut nb = Vec::with_capacity(26);
    let voxels: Vec<usize> = (0..skeleton.len()).filter(|&i| skeleton[i] != 0).collect();
    if voxels.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let mut degree = vec![0u8; skeleton.len()];
    for &i in &voxels {
        neighbours(dims, i, &offs, &mut nb);
        degree[i] = nb.iter().filter(|&&j| skeleton[j] != 0).count() as u8;
    }

    const NO_NODE: usize = usize::MAX;
    let mut node_of = vec![NO_NODE; skeleton.len()];
    let mut nodes: Vec<Node> = Vec::new();
    let new_node = |kind: NodeKind, vox: Vec<usize>| -> Node {
        let mut pos = [0.0; 3];
        for &v in &vox {
            let c = dims.coords(v);
            for k in 0..3 {
                pos[k] += c[k] as f64;
            }
        }
        for p in &mut pos {
            *p /= vox.len() as f64;
        }
        let radius = vox.iter().map(|&v| distances[v]).fold(0.0, f64::max);
        Node {
            kind,
            voxels: vox,
            position: pos,
            radius,
        }
    };

    for &i in &voxels {
        if node_of[i] != NO_NODE {
            continue;
        }
        match degree[i] {
            0 => {
                node_of[i] = nodes.len();
                nodes.push(new_node(NodeKind::Isolated, vec![i]));
            }
            1 => {
                node_of[i] = nodes.len();
                nodes.push(new_node(NodeKind::Endpoint, vec![i]));
            }
            2 => {}
            _ => {
                // gather the 26-connected cluster of junction voxels
                let id = nodes.len();
                let mut cluster = vec![i];
                node_of[i] = id;
                let mut k = 0;
                while k < cluster.len() {
                    neighbours(dims, cluster[k], &offs, &mut nb);
                    for &j in &nb {
                        if skeleton[j] != 0 && degree[j] >= 3 && node_of[j] == NO_NODE {
                            node_of[j] = id;
                            cluster.push(j);
                        }
                    }
                    k += 1;
                }
                cluster.sort_unstable();
                nodes.push(new_node(NodeKind::Junction, cluster));
            }
        }
    }

    let mut visited = vec![false; skeleton.len()];
    let mut edges: Vec<Edge> = Vec::new();
    let mut touching: BTreeSet<(usize, usize)> = BTreeSet::new();

    let mut trace_from = |start_node: usize,
                          nodes: &Vec<Node>,
                          node_of: &Vec<usize>,
                          visited: &mut Vec<bool>,
                          edges: &mut Vec<Edge>| {
        let mut nb = Vec::with_capacity(26);
        let mut nb2 = Vec::with_capacity(26);
        for &sv in &nodes[start_node].voxels {
            neighbours(dims, sv, &offs, &mut nb);
            for &first in &nb {
                if skeleton[first] == 0 {
                    continue;
                }
                let other = node_of[first];
                if other == start_node {
                    continue;
                }
                if other != NO_NODE {
                    let key = (start_node.min(other), start_node.max(other));
                    if touching.insert(key) {
                        edges.push(Edge {
                            a: key.0,
                            b: key.1,
                            voxels: Vec::new(),
                            radii: Vec::new(),
                        });
                    }
                    continue;
                }
                if visited[first] {
                    continue;
                }
                let mut chain = vec![first];
                visited[first] = true;
                let mut prev = sv;
                let mut cur = first;
                let end = loop {
                    neighbours(dims, cur, &offs, &mut nb2);
                    // prefer stepping onto a node other than the one we came from
                    let mut next_chain = None;
                    let mut next_node = None;
                    for &j in &nb2 {
                        if skeleton[j] == 0 || j == prev {
                            continue;
                        }
                        let n = node_of[j];
                        if n != NO_NODE {
                            if n != start_node || chain.len() > 1 {
                                next_node.get_or_insert(n);
                            }
                        } else if !visited[j] {
                            next_chain.get_or_insert(j);
                        }
                    }
                    if let Some(n) = next_node {
                        break n;
                    }
                    match next_chain {
                        Some(j) => {
                            visited[j] = true;
                            chain.push(j);
                            prev = cur;
                            cur = j;
                        }
                        // dead end inside a chain cannot happen for degree-2
                        // voxels; close the edge on the start node
                        None => break start_node,
                    }
                };
                let radii = chain.iter().map(|&v| distances[v]).collect();
                edges.push(Edge {
                    a: start_node.min(end),
                    b: start_node.max(end),
                    voxels: chain,
                    radii,
                });
            }
        }
    };

    for id in 0..nodes.len() {
        trace_from(id, &nodes, &node_of, &mut visited, &mut edges);
    }
    // closed loops without any node
    for &i in &voxels {
        if node_of[i] == NO_NODE && !visited[i] {
            let id = nodes.len();
            node_of[i] = id;
            nodes.push(new_node(NodeKind::LoopAnchor, vec![i]));
            trace_from(id, &nodes, &node_of, &mut visited, &mut edges);
        }
    }

    let mut best = (f64::NEG_INFINITY, 0usize);
    for (id, node) in nodes.iter().enumerate() {
        let mut r = node.radius;
        for e in edges.iter().filter(|e| e.a == id || e.b == id) {
            r = e.radii.iter().copied().fold(r, f64::max);
        }
        if r > best.0 {
            best = (r, id);
        }
    }
    Ok(CenterlineGraph {
        dims,
        nodes,
        edges,
        root: best.1,
    })
}
