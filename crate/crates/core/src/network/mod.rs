//! Road graph ingestion, centroid snapping, and shortest paths.

mod dijkstra;
mod matrix;

pub use dijkstra::{shortest_path_tree, ShortestPathTree};
pub use matrix::{load_time_varying_costs, od_matrix, CostMatrix, CostUnit, OdOptions};

use std::collections::HashMap;
use std::path::Path;

use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CellId, Point};
use crate::temporal::HOURS;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("edge {edge} ({from}->{to}) references missing node {missing}")]
    DanglingEdge {
        edge: usize,
        from: u64,
        to: u64,
        missing: u64,
    },
    #[error("edge {edge} ({from}->{to}) has non-positive length {length}")]
    NonPositiveLength {
        edge: usize,
        from: u64,
        to: u64,
        length: f64,
    },
    #[error("edge {edge} ({from}->{to}) has a non-positive travel time at hour {hour}")]
    NonPositiveTime {
        edge: usize,
        from: u64,
        to: u64,
        hour: usize,
    },
    #[error("node {0} not in graph")]
    UnknownNode(u64),
    #[error("snap tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no node within {tolerance} m of ({x}, {y})")]
    NoNodeWithinTolerance { x: f64, y: f64, tolerance: f64 },
    #[error("{} cell(s) could not be snapped within {tolerance} m: {cells:?}", cells.len())]
    SnapFailures { cells: Vec<CellId>, tolerance: f64 },
    #[error("edge {edge} has no travel time for hour {hour}")]
    MissingWeight { edge: usize, hour: usize },
    #[error("hour {0} out of range 0..=23")]
    HourOutOfRange(usize),
    #[error("hourly cost matrix for hour {hour} missing: {path}")]
    MissingHour { hour: usize, path: String },
    #[error("hourly cost matrix for hour {hour} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        hour: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("hourly cost matrix for hour {hour} lists ids in a different order than hour 0")]
    IdOrderMismatch { hour: usize },
    #[error(transparent)]
    Frame(#[from] crate::framing::FrameError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: u64,
    pub to: u64,
    pub length: f64,
    /// Traversal seconds per departure hour.
    pub hourly_times: Option<[f64; HOURS]>,
}

/// Edge weight used by a shortest-path search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Length,
    Hour(usize),
}

/// Immutable road graph in compressed adjacency form. Nodes are kept sorted
/// by id; the position in that order is the internal node index.
pub struct RoadGraph {
    nodes: Vec<Node>,
    index: HashMap<u64, u32>,
    directed: bool,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    lengths: Vec<f64>,
    times: Vec<Option<[f64; HOURS]>>,
    /// input edge number of each arc
    arc_edge: Vec<usize>,
    edge_count: usize,
    points: RTree<GeomWithData<[f64; 2], u32>>,
}

impl std::fmt::Debug for RoadGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoadGraph")
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edge_count)
            .field("directed", &self.directed)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub nodes: usize,
    pub edges: usize,
    pub directed: bool,
    /// Weakly connected component sizes, largest first.
    pub components: Vec<usize>,
}

impl RoadGraph {
    pub fn new(mut nodes: Vec<Node>, edges: Vec<Edge>, directed: bool) -> Result<Self, NetworkError> {
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(NetworkError::DuplicateNode(pair[0].id));
            }
        }
        let index: HashMap<u64, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i as u32))
            .collect();
        let mut arcs: Vec<(u32, u32, f64, Option<[f64; HOURS]>, usize)> =
            Vec::with_capacity(edges.len() * if directed { 1 } else { 2 });
        for (k, e) in edges.iter().enumerate() {
            let lookup = |id: u64| {
                index.get(&id).copied().ok_or(NetworkError::DanglingEdge {
                    edge: k,
                    from: e.from,
                    to: e.to,
                    missing: id,
                })
            };
            let (u, v) = (lookup(e.from)?, lookup(e.to)?);
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(NetworkError::NonPositiveLength {
                    edge: k,
                    from: e.from,
                    to: e.to,
                    length: e.length,
                });
            }
            if let Some(times) = &e.hourly_times {
                if let Some(hour) = times.iter().position(|t| !(*t > 0.0) || !t.is_finite()) {
                    return Err(NetworkError::NonPositiveTime {
                        edge: k,
                        from: e.from,
                        to: e.to,
                        hour,
                    });
                }
            }
            arcs.push((u, v, e.length, e.hourly_times, k));
            if !directed {
                arcs.push((v, u, e.length, e.hourly_times, k));
            }
        }
        arcs.sort_by_key(|a| (a.0, a.1, a.4));
        let mut offsets = vec![0u32; nodes.len() + 1];
        for a in &arcs {
            offsets[a.0 as usize + 1] += 1;
        }
        for i in 0..nodes.len() {
            offsets[i + 1] += offsets[i];
        }
        let points = RTree::bulk_load(
            nodes
                .iter()
                .enumerate()
                .map(|(i, n)| GeomWithData::new([n.x, n.y], i as u32))
                .collect(),
        );
        Ok(Self {
            targets: arcs.iter().map(|a| a.1).collect(),
            lengths: arcs.iter().map(|a| a.2).collect(),
            times: arcs.iter().map(|a| a.3).collect(),
            arc_edge: arcs.iter().map(|a| a.4).collect(),
            edge_count: edges.len(),
            nodes,
            index,
            directed,
            offsets,
            points,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_index(&self, id: u64) -> Option<usize> {
        self.index.get(&id).map(|&i| i as usize)
    }

    pub fn node(&self, id: u64) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub(crate) fn arcs(&self, u: usize) -> std::ops::Range<usize> {
        self.offsets[u] as usize..self.offsets[u + 1] as usize
    }

    /// Errors if some arc lacks the requested weight.
    pub(crate) fn check_weight(&self, weight: Weight) -> Result<(), NetworkError> {
        match weight {
            Weight::Length => Ok(()),
            Weight::Hour(h) if h >= HOURS => Err(NetworkError::HourOutOfRange(h)),
            Weight::Hour(h) => match self.times.iter().position(Option::is_none) {
                Some(arc) => Err(NetworkError::MissingWeight {
                    edge: self.arc_edge[arc],
                    hour: h,
                }),
                None => Ok(()),
            },
        }
    }

    #[inline]
    pub(crate) fn arc_weight(&self, arc: usize, weight: Weight) -> f64 {
        match weight {
            Weight::Length => self.lengths[arc],
            Weight::Hour(h) => self.times[arc].map_or(f64::INFINITY, |t| t[h]),
        }
    }

    /// Network-wide seconds per meter at `hour`: total travel time over
    /// total length. `None` when some edge has no hourly times.
    pub fn mean_pace(&self, hour: usize) -> Option<f64> {
        if hour >= HOURS || self.lengths.is_empty() {
            return None;
        }
        let mut time = 0.0;
        for t in &self.times {
            time += t.as_ref()?[hour];
        }
        Some(time / self.lengths.iter().sum::<f64>())
    }

    #[inline]
    pub(crate) fn arc_target(&self, arc: usize) -> usize {
        self.targets[arc] as usize
    }

    /// Weakly connected component sizes, largest first.
    pub fn component_sizes(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for u in 0..n {
            for arc in self.arcs(u) {
                let (a, b) = (find(&mut parent, u), find(&mut parent, self.arc_target(arc)));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for u in 0..n {
            *sizes.entry(find(&mut parent, u)).or_default() += 1;
        }
        let mut sizes: Vec<usize> = sizes.into_values().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    pub fn report(&self) -> NetworkReport {
        NetworkReport {
            nodes: self.nodes.len(),
            edges: self.edge_count,
            directed: self.directed,
            components: self.component_sizes(),
        }
    }

    /// Nearest node index within `tolerance`, ties going to the smaller id.
    pub(crate) fn snap_index(&self, p: Point, tolerance: f64) -> Result<usize, NetworkError> {
        if !(tolerance > 0.0) {
            return Err(NetworkError::InvalidTolerance(tolerance));
        }
        let fail = || NetworkError::NoNodeWithinTolerance {
            x: p.x,
            y: p.y,
            tolerance,
        };
        let mut best: Option<(f64, u32)> = None;
        for (entry, d2) in self.points.nearest_neighbor_iter_with_distance_2(&[p.x, p.y]) {
            match best {
                None => best = Some((d2, entry.data)),
                Some((bd, bi)) if d2 == bd => best = Some((bd, bi.min(entry.data))),
                Some(_) => break,
            }
        }
        let (d2, idx) = best.ok_or_else(fail)?;
        if d2.sqrt() > tolerance {
            return Err(fail());
        }
        Ok(idx as usize)
    }
}

/// Nearest node id within `tolerance` meters of `p`; equidistant nodes
/// resolve to the smallest id.
pub fn snap_to_node(graph: &RoadGraph, p: Point, tolerance: f64) -> Result<u64, NetworkError> {
    graph
        .snap_index(p, tolerance)
        .map(|i| graph.nodes[i].id)
}

/// Reads `id,x,y` and `from,to,length_m[,t00..t23]` files.
pub fn load_network(
    node_file: &Path,
    edge_file: &Path,
    directed: bool,
) -> Result<(RoadGraph, NetworkReport), NetworkError> {
    let nodes = read_nodes(node_file)?;
    let edges = read_edges(edge_file)?;
    let graph = RoadGraph::new(nodes, edges, directed)?;
    let report = graph.report();
    if report.components.len() > 1 {
        log::warn!(
            "road network has {} disconnected components, sizes {:?}",
            report.components.len(),
            report.components
        );
    }
    Ok((graph, report))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> NetworkError + '_ {
    move |source| NetworkError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn read_nodes(path: &Path) -> Result<Vec<Node>, NetworkError> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: u64,
        x: f64,
        y: f64,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    reader
        .deserialize::<Row>()
        .map(|r| {
            r.map(|r| Node {
                id: r.id,
                x: r.x,
                y: r.y,
            })
            .map_err(csv_err(path))
        })
        .collect()
}

fn read_edges(path: &Path) -> Result<Vec<Edge>, NetworkError> {
    let fmt = |message: String| NetworkError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(from_c), Some(to_c), Some(len_c)) = (col("from"), col("to"), col("length_m")) else {
        return Err(fmt("edge file needs from,to,length_m columns".into()));
    };
    let hour_cols: Vec<Option<usize>> = (0..HOURS).map(|h| col(&format!("t{h:02}"))).collect();
    let has_times = match hour_cols.iter().filter(|c| c.is_some()).count() {
        0 => false,
        HOURS => true,
        n => return Err(fmt(format!("edge file has {n} of 24 hourly time columns"))),
    };
    let mut edges = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| -> Result<f64, NetworkError> {
            field(c)
                .parse::<f64>()
                .map_err(|_| fmt(format!("edge {k}: bad number '{}'", field(c))))
        };
        let id = |c: usize| -> Result<u64, NetworkError> {
            field(c)
                .parse::<u64>()
                .map_err(|_| fmt(format!("edge {k}: bad node id '{}'", field(c))))
        };
        let hourly_times = if has_times {
            let mut t = [0.0; HOURS];
            for (h, c) in hour_cols.iter().enumerate() {
                t[h] = num(c.expect("all hour columns present"))?;
            }
            Some(t)
        } else {
            None
        };
        edges.push(Edge {
            from: id(from_c)?,
            to: id(to_c)?,
            length: num(len_c)?,
            hourly_times,
        });
    }
    Ok(edges)
}
