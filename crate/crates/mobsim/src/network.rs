//! Zone-to-zone road network: free-flow routing and BPR travel times.

use petgraph::algo::{astar, kosaraju_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

/// BPR volume-delay coefficients.
pub const BPR_ALPHA: f64 = 0.15;
pub const BPR_BETA: i32 = 4;
/// Window over which edge entries count as hourly volume.
pub const VOLUME_WINDOW_TICKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub from: String,
    pub to: String,
    pub distance_mi: f64,
    pub free_flow_min: f64,
    pub capacity_vph: f64,
}

/// `t0 · (1 + 0.15 · (v/c)^4)`
pub fn bpr_minutes(free_flow_min: f64, volume_vph: f64, capacity_vph: f64) -> f64 {
    free_flow_min * (1.0 + BPR_ALPHA * (volume_vph / capacity_vph).powi(BPR_BETA))
}

/// Free-flow shortest path between two zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub edges: Vec<usize>,
    /// Zone indices visited, origin first.
    pub zones: Vec<usize>,
    pub distance_mi: f64,
    pub free_flow_min: f64,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    /// `paths[o][d]`; `None` when unreachable or `o == d`.
    paths: Vec<Vec<Option<Path>>>,
}

impl RoadNetwork {
    /// Route every zone pair on free-flow time. `edges` reference zone
    /// indices `0..n_zones`.
    pub fn build(n_zones: usize, edges: &[(usize, usize, f64, f64)]) -> Self {
        let (graph, nodes) = graph(n_zones, edges);
        let mut paths = vec![vec![None; n_zones]; n_zones];
        for o in 0..n_zones {
            for d in 0..n_zones {
                if o == d {
                    continue;
                }
                let found = astar(
                    &graph,
                    nodes[o],
                    |n| n == nodes[d],
                    |e| edges[*e.weight()].3,
                    |_| 0.0,
                );
                if let Some((_, route)) = found {
                    let mut path = Path {
                        edges: Vec::new(),
                        zones: route.iter().map(|n| graph[*n]).collect(),
                        distance_mi: 0.0,
                        free_flow_min: 0.0,
                    };
                    for w in route.windows(2) {
                        let e = graph
                            .edges_connecting(w[0], w[1])
                            .min_by(|a, b| edges[*a.weight()].3.total_cmp(&edges[*b.weight()].3))
                            .map(|e| *e.weight())
                            .expect("consecutive path nodes are connected");
                        path.edges.push(e);
                        path.distance_mi += edges[e].2;
                        path.free_flow_min += edges[e].3;
                    }
                    paths[o][d] = Some(path);
                }
            }
        }
        Self { paths }
    }

    pub fn path(&self, o: usize, d: usize) -> Option<&Path> {
        self.paths.get(o)?.get(d)?.as_ref()
    }
}

fn graph(n_zones: usize, edges: &[(usize, usize, f64, f64)]) -> (DiGraph<usize, usize>, Vec<NodeIndex>) {
    let mut g = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..n_zones).map(|z| g.add_node(z)).collect();
    for (i, (from, to, _, _)) in edges.iter().enumerate() {
        g.add_edge(nodes[*from], nodes[*to], i);
    }
    (g, nodes)
}

/// Zones of `subset` that are not mutually reachable with the largest group
/// of `subset` zones sharing one strongly connected component.
pub fn disconnected_zones(n_zones: usize, edges: &[(usize, usize, f64, f64)], subset: &[usize]) -> Vec<usize> {
    let (g, _) = graph(n_zones, edges);
    let mut component = vec![usize::MAX; n_zones];
    for (ci, scc) in kosaraju_scc(&g).iter().enumerate() {
        for n in scc {
            component[g[*n]] = ci;
        }
    }
    let mut counts = std::collections::BTreeMap::new();
    for z in subset {
        *counts.entry(component[*z]).or_insert(0usize) += 1;
    }
    let Some((&main, _)) = counts.iter().max_by_key(|(c, n)| (**n, std::cmp::Reverse(**c))) else {
        return Vec::new();
    };
    subset.iter().copied().filter(|z| component[*z] != main).collect()
}

/// Rolling count of edge entries over the last hour of ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLoads {
    counts: Vec<[u32; VOLUME_WINDOW_TICKS]>,
    sums: Vec<u32>,
    total_entries: Vec<u64>,
}

impl EdgeLoads {
    pub fn new(n_edges: usize) -> Self {
        Self {
            counts: vec![[0; VOLUME_WINDOW_TICKS]; n_edges],
            sums: vec![0; n_edges],
            total_entries: vec![0; n_edges],
        }
    }

    /// Drop the entries that fall out of the window when `tick` begins.
    pub fn advance(&mut self, tick: u32) {
        let slot = tick as usize % VOLUME_WINDOW_TICKS;
        for (c, s) in self.counts.iter_mut().zip(self.sums.iter_mut()) {
            *s -= c[slot];
            c[slot] = 0;
        }
    }

    pub fn record(&mut self, edge: usize, tick: u32) {
        self.counts[edge][tick as usize % VOLUME_WINDOW_TICKS] += 1;
        self.sums[edge] += 1;
        self.total_entries[edge] += 1;
    }

    /// Vehicles per hour currently on the edge's rolling window.
    pub fn volume_vph(&self, edge: usize) -> f64 {
        self.sums[edge] as f64
    }

    pub fn total_entries(&self, edge: usize) -> u64 {
        self.total_entries[edge]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpr_at_capacity() {
        assert_eq!(bpr_minutes(10.0, 0.0, 1000.0), 10.0);
        assert!((bpr_minutes(10.0, 1000.0, 1000.0) - 11.5).abs() < 1e-12);
        assert!((bpr_minutes(10.0, 2000.0, 1000.0) - 10.0 * (1.0 + 0.15 * 16.0)).abs() < 1e-12);
    }

    #[test]
    fn shortest_path_prefers_faster_detour() {
        // 0 -> 2 direct is slow; via 1 is faster
        let edges = vec![(0, 2, 5.0, 30.0), (0, 1, 3.0, 5.0), (1, 2, 3.0, 5.0), (2, 0, 5.0, 10.0)];
        let net = RoadNetwork::build(3, &edges);
        let p = net.path(0, 2).unwrap();
        assert_eq!(p.edges, vec![1, 2]);
        assert_eq!(p.zones, vec![0, 1, 2]);
        assert_eq!(p.distance_mi, 6.0);
        assert!(net.path(1, 0).is_some());
        assert!(net.path(0, 0).is_none());
    }

    #[test]
    fn unreachable_zone_is_reported() {
        let edges = vec![(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (1, 2, 1.0, 1.0)];
        assert_eq!(disconnected_zones(3, &edges, &[0, 1, 2]), vec![2]);
        assert!(disconnected_zones(3, &edges, &[0, 1]).is_empty());
    }

    #[test]
    fn volume_window_expires_after_an_hour() {
        let mut loads = EdgeLoads::new(1);
        for tick in 0..120u32 {
            loads.advance(tick);
            if tick < 10 {
                loads.record(0, tick);
            }
            let expected = if tick < 10 {
                tick + 1
            } else if tick < 60 {
                10
            } else if tick < 70 {
                10 - (tick - 59)
            } else {
                0
            };
            assert_eq!(loads.volume_vph(0), expected as f64, "tick {tick}");
        }
        assert_eq!(loads.total_entries(0), 10);
    }
}
