use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{NetworkError, RoadGraph, Weight};

/// Distances from one origin to every node, indexed like [`RoadGraph::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub origin: u64,
    dist: Vec<f64>,
}

impl ShortestPathTree {
    /// `None` when the node is unreachable or unknown.
    pub fn distance_to(&self, graph: &RoadGraph, node: u64) -> Option<f64> {
        let d = *self.dist.get(graph.node_index(node)?)?;
        d.is_finite().then_some(d)
    }

    /// Raw per-node distances; unreachable nodes hold `f64::INFINITY`.
    pub fn distances(&self) -> &[f64] {
        &self.dist
    }
}

pub fn shortest_path_tree(
    graph: &RoadGraph,
    origin: u64,
    weight: Weight,
) -> Result<ShortestPathTree, NetworkError> {
    let src = graph
        .node_index(origin)
        .ok_or(NetworkError::UnknownNode(origin))?;
    graph.check_weight(weight)?;
    Ok(ShortestPathTree {
        origin,
        dist: search(graph, src, weight),
    })
}

/// Binary-heap Dijkstra with lazy deletion. Non-negative `f64` values order
/// the same as their bit patterns, which gives the heap a total order.
pub(crate) fn search(graph: &RoadGraph, src: usize, weight: Weight) -> Vec<f64> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((0.0f64.to_bits(), src as u32)));
    while let Some(Reverse((bits, u))) = heap.pop() {
        let u = u as usize;
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        for arc in graph.arcs(u) {
            let v = graph.arc_target(arc);
            let nd = d + graph.arc_weight(arc, weight);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd.to_bits(), v as u32)));
            }
        }
    }
    dist
}
