//! Exact maximization of `costs . y` under the flow-conservation constraints.
//!
//! The constraint matrix is totally unimodular, so the problem is solved as
//! a min-cost flow on a split-node network: `source -> u_j` (new),
//! `u_j -> v_j` (det), `v_j -> u_k` (link), `v_j -> sink` (end), every arc
//! with capacity one and cost equal to the negated variable cost. Arc `i`
//! carries variable `i`. Successive shortest paths augment one unit at a
//! time while the cheapest source-sink path has negative cost.
//!
//! Ties: adjacency lists follow variable order and distances are only
//! replaced on strict improvement, so the earliest-discovered path wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::assoc::{Assignment, AssociationGraph};
use crate::error::{Error, Result};
use crate::types::{decode_trajectories, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cap: i32,
    pub cost: f64,
    pub flow: i32,
}

/// A residual edge: arc `arc` traversed forward (spare capacity) or
/// backward (cancelling flow).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualEdge {
    pub arc: usize,
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    num_nodes: usize,
    pub arcs: Vec<Arc>,
    adjacency: Vec<Vec<ResidualEdge>>,
}

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cap: i32, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc {
            from,
            to,
            cap,
            cost,
            flow: 0,
        });
        self.adjacency[from].push(ResidualEdge { arc: id, forward: true });
        self.adjacency[to].push(ResidualEdge { arc: id, forward: false });
        id
    }

    /// Split-node network for an association graph. Node `2 + 2j` is `u_j`,
    /// `3 + 2j` is `v_j`.
    pub fn from_graph(graph: &AssociationGraph) -> Self {
        Self::from_costs(graph, &graph.costs)
    }

    /// Same network with an explicit cost vector in place of `graph.costs`.
    pub fn from_costs(graph: &AssociationGraph, c: &[f64]) -> Self {
        let lay = &graph.layout;
        let k = lay.num_detections();
        let u = |j: usize| 2 + 2 * j;
        let v = |j: usize| 3 + 2 * j;
        let mut net = FlowNetwork::new(2 + 2 * k);
        for j in 0..k {
            net.add_arc(u(j), v(j), 1, -c[lay.det_var(j)]);
        }
        for (l, &(a, b)) in lay.links.iter().enumerate() {
            net.add_arc(v(a), u(b), 1, -c[lay.link_var_at(l)]);
        }
        for j in 0..k {
            net.add_arc(SOURCE, u(j), 1, -c[lay.new_var(j)]);
        }
        for j in 0..k {
            net.add_arc(v(j), SINK, 1, -c[lay.end_var(j)]);
        }
        net
    }

    fn residual(&self, e: ResidualEdge) -> Option<(usize, f64)> {
        let a = &self.arcs[e.arc];
        if e.forward {
            (a.flow < a.cap).then_some((a.to, a.cost))
        } else {
            (a.flow > 0).then_some((a.from, -a.cost))
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.arcs.iter().map(|a| a.flow as f64 * a.cost).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    /// `f64::INFINITY` for unreachable nodes.
    pub dist: Vec<f64>,
    pub parent: Vec<Option<ResidualEdge>>,
}

impl ShortestPathTree {
    /// Residual edges from the root to `node`, in path order.
    pub fn path_to(&self, net: &FlowNetwork, node: usize) -> Vec<ResidualEdge> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(e) = self.parent[cur] {
            path.push(e);
            let a = &net.arcs[e.arc];
            cur = if e.forward { a.from } else { a.to };
        }
        path.reverse();
        path
    }
}

/// Improvements smaller than this are ignored, so zero-cost residual cycles
/// that round to tiny negatives are not reported as negative cycles.
const RELAX_EPS: f64 = 1e-12;

/// Shortest paths from `source` over the residual network, allowing
/// negative edge costs. A reachable negative cycle is reported as an error.
pub fn bellman_ford(net: &FlowNetwork, source: usize) -> Result<ShortestPathTree> {
    let n = net.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    dist[source] = 0.0;
    let mut last_relaxed = None;
    for _ in 0..n {
        last_relaxed = None;
        for u in 0..n {
            if dist[u] == f64::INFINITY {
                continue;
            }
            for &e in &net.adjacency[u] {
                if let Some((v, c)) = net.residual(e) {
                    if dist[u] + c < dist[v] - RELAX_EPS {
                        dist[v] = dist[u] + c;
                        parent[v] = Some(e);
                        last_relaxed = Some(v);
                    }
                }
            }
        }
        if last_relaxed.is_none() {
            break;
        }
    }
    if let Some(mut x) = last_relaxed {
        // Still relaxing after n passes: walk back n steps to land on the cycle.
        let tail = |x: usize| {
            let e: ResidualEdge = parent[x].expect("relaxed node has a parent");
            let a = &net.arcs[e.arc];
            if e.forward {
                a.from
            } else {
                a.to
            }
        };
        for _ in 0..n {
            x = tail(x);
        }
        let mut cycle = vec![x];
        let mut y = tail(x);
        while y != x {
            cycle.push(y);
            y = tail(y);
        }
        cycle.reverse();
        return Err(Error::NegativeCycle(cycle));
    }
    Ok(ShortestPathTree { dist, parent })
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node index.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on reduced costs `c + p[u] - p[v]`. Returned distances are in
/// reduced units.
fn dijkstra(net: &FlowNetwork, source: usize, potential: &[f64]) -> ShortestPathTree {
    let n = net.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, node: source });
    while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &e in &net.adjacency[u] {
            if let Some((v, c)) = net.residual(e) {
                let rc = c + potential[u] - potential[v];
                debug_assert!(rc > -1e-9, "negative reduced cost {rc} on {e:?}");
                let nd = d + rc.max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = Some(e);
                    heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
    }
    ShortestPathTree { dist, parent }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortestPathMethod {
    /// Bellman-Ford on every augmentation.
    BellmanFord,
    /// Bellman-Ford once for potentials, then Dijkstra on reduced costs.
    #[default]
    Dijkstra,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverOptions {
    pub method: ShortestPathMethod,
    /// Run Bellman-Ford on the residual network after every augmentation
    /// and fail on a negative cycle.
    pub verify_residual: bool,
}

/// Successive shortest paths with unbounded flow amount: augments while the
/// cheapest source-sink path has negative cost. Returns the total cost after
/// each augmentation.
pub fn successive_shortest_paths(net: &mut FlowNetwork, opts: SolverOptions) -> Result<Vec<f64>> {
    let mut trace = Vec::new();
    let mut potential = vec![0.0; net.num_nodes()];
    let mut tree = bellman_ford(net, SOURCE)?;
    let mut first = true;
    loop {
        if !tree.dist[SINK].is_finite() {
            break;
        }
        let path = tree.path_to(net, SINK);
        let path_cost: f64 = path
            .iter()
            .map(|e| {
                let c = net.arcs[e.arc].cost;
                if e.forward {
                    c
                } else {
                    -c
                }
            })
            .sum();
        if path_cost >= 0.0 {
            break;
        }
        for e in &path {
            let a = &mut net.arcs[e.arc];
            a.flow += if e.forward { 1 } else { -1 };
            assert!(a.flow >= 0 && a.flow <= a.cap, "fractional or overflowing flow on arc {}", e.arc);
        }
        trace.push(net.total_cost());
        if opts.verify_residual {
            bellman_ford(net, SOURCE)?;
        }
        tree = match opts.method {
            ShortestPathMethod::BellmanFord => bellman_ford(net, SOURCE)?,
            ShortestPathMethod::Dijkstra => {
                if first {
                    // Exact distances under raw (possibly negative) costs.
                    for (p, d) in potential.iter_mut().zip(&tree.dist) {
                        if d.is_finite() {
                            *p = *d;
                        }
                    }
                } else {
                    // Nodes farther than the sink are capped at the sink
                    // distance, which keeps every reduced cost nonnegative.
                    let cap = tree.dist[SINK];
                    for (p, d) in potential.iter_mut().zip(&tree.dist) {
                        *p += d.min(cap);
                    }
                }
                dijkstra(net, SOURCE, &potential)
            }
        };
        first = false;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Assignment,
    /// `costs . y` for the graph's cost vector.
    pub objective: f64,
    pub trajectories: Vec<Trajectory>,
    /// Objective after each augmentation (empty for the exhaustive oracle).
    pub objective_trace: Vec<f64>,
}

fn check_costs(costs: &[f64]) -> Result<()> {
    match costs.iter().position(|c| !c.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("cost of variable {i}"))),
        None => Ok(()),
    }
}

/// Global maximizer of `graph.costs . y` over feasible binary assignments.
pub fn solve(graph: &AssociationGraph) -> Result<Solution> {
    solve_with(graph, SolverOptions::default())
}

pub fn solve_with(graph: &AssociationGraph, opts: SolverOptions) -> Result<Solution> {
    solve_costs(graph, &graph.costs, opts)
}

/// Maximizes `costs . y` over the feasible assignments of `graph`, ignoring
/// `graph.costs`.
pub fn solve_costs(graph: &AssociationGraph, costs: &[f64], opts: SolverOptions) -> Result<Solution> {
    if costs.len() != graph.num_vars() {
        return Err(Error::InvalidInput(format!(
            "cost vector has length {}, layout has {} variables",
            costs.len(),
            graph.num_vars()
        )));
    }
    check_costs(costs)?;
    let mut net = FlowNetwork::from_costs(graph, costs);
    let trace = successive_shortest_paths(&mut net, opts)?;
    let assignment = Assignment {
        values: net.arcs.iter().map(|a| a.flow as u8).collect(),
    };
    let objective = assignment.dot(costs);
    debug_assert!((objective + net.total_cost()).abs() < 1e-9);
    let trajectories = decode_trajectories(&assignment, graph)?;
    Ok(Solution {
        assignment,
        objective,
        trajectories,
        objective_trace: trace.into_iter().map(|c| -c).collect(),
    })
}

/// Upper bound on detection plus link variables for exhaustive search.
pub const EXHAUSTIVE_CAP: usize = 25;

/// Brute-force argmax of `score` over all feasible assignments.
///
/// New and end variables are fixed by the det and link values through the
/// equalities, so enumeration runs over det subsets and, for each, over the
/// subsets of links between active detections. Every candidate is still
/// filtered by [`AssociationGraph::check_feasible`]. Among equal scores the
/// lexicographically smallest vector wins.
pub fn exhaustive_argmax(graph: &AssociationGraph, score: impl Fn(&Assignment) -> f64) -> Result<(Assignment, f64)> {
    let lay = &graph.layout;
    let k = lay.num_detections();
    let free = k + lay.num_links();
    if free > EXHAUSTIVE_CAP {
        return Err(Error::TooLarge {
            free_bits: free,
            cap: EXHAUSTIVE_CAP,
        });
    }
    let mut best: Option<(Assignment, f64)> = None;
    for det_mask in 0u64..(1 << k) {
        let active = |j: usize| det_mask >> j & 1 == 1;
        let usable: Vec<usize> = (0..lay.num_links())
            .filter(|&l| {
                let (a, b) = lay.links[l];
                active(a) && active(b)
            })
            .collect();
        'links: for link_mask in 0u64..(1 << usable.len()) {
            let mut y = vec![0u8; lay.num_vars()];
            for j in (0..k).filter(|&j| active(j)) {
                y[lay.det_var(j)] = 1;
            }
            for (bit, &l) in usable.iter().enumerate() {
                if link_mask >> bit & 1 == 1 {
                    y[lay.link_var_at(l)] = 1;
                }
            }
            for j in 0..k {
                let det = y[lay.det_var(j)] as i32;
                let inflow: i32 = graph.incoming[j].iter().map(|&v| y[v] as i32).sum();
                let outflow: i32 = graph.outgoing[j].iter().map(|&v| y[v] as i32).sum();
                let (new, end) = (det - inflow, det - outflow);
                if !(0..=1).contains(&new) || !(0..=1).contains(&end) {
                    continue 'links;
                }
                y[lay.new_var(j)] = new as u8;
                y[lay.end_var(j)] = end as u8;
            }
            let cand = Assignment { values: y };
            if !graph.check_feasible(&cand)?.is_feasible() {
                continue;
            }
            let s = score(&cand);
            let better = match &best {
                None => true,
                Some((b, bs)) => s > *bs || (s == *bs && cand < *b),
            };
            if better {
                best = Some((cand, s));
            }
        }
    }
    Ok(best.expect("the all-zero assignment is always feasible"))
}

/// Exhaustive oracle for [`solve`] on small instances.
pub fn solve_exhaustive(graph: &AssociationGraph) -> Result<Solution> {
    check_costs(&graph.costs)?;
    let (assignment, _) = exhaustive_argmax(graph, |y| y.dot(&graph.costs))?;
    let objective = assignment.dot(&graph.costs);
    let trajectories = decode_trajectories(&assignment, graph)?;
    Ok(Solution {
        assignment,
        objective,
        trajectories,
        objective_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::{build_graph, GateConfig};
    use crate::testutil::{det_at, seq_from_frames};

    fn single(theta_det: f64) -> AssociationGraph {
        let seq = seq_from_frames(vec![vec![det_at(0, 0, 5.0, 0.0)]]);
        let g = build_graph(&seq, 0..1, &GateConfig::default()).unwrap();
        g.with_costs(vec![theta_det, 0.0, 0.0]).unwrap()
    }

    fn two_frame() -> AssociationGraph {
        let seq = seq_from_frames(vec![vec![det_at(0, 0, 5.0, 0.0)], vec![det_at(1, 1, 6.0, 0.0)]]);
        let g = build_graph(&seq, 0..2, &GateConfig::default()).unwrap();
        // det A, det B, link, new A, new B, end A, end B
        g.with_costs(vec![1.0, 1.0, 1.0, -0.4, -0.4, -0.4, -0.4]).unwrap()
    }

    /// Naive enumeration of every binary vector of length |y|.
    fn full_enumeration(graph: &AssociationGraph) -> f64 {
        let n = graph.num_vars();
        assert!(n <= 20);
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let y = Assignment {
                values: (0..n).map(|i| (mask >> i & 1) as u8).collect(),
            };
            if graph.check_feasible(&y).unwrap().is_feasible() {
                best = best.max(y.dot(&graph.costs));
            }
        }
        best
    }

    #[test]
    fn single_detection_positive_and_negative() {
        let s = solve(&single(2.0)).unwrap();
        assert_eq!(s.assignment.values, vec![1, 1, 1]);
        assert_eq!(s.objective, 2.0);
        assert_eq!(s.trajectories.len(), 1);

        let s = solve(&single(-1.0)).unwrap();
        assert_eq!(s.assignment.values, vec![0, 0, 0]);
        assert_eq!(s.objective, 0.0);
        assert!(s.trajectories.is_empty());
    }

    #[test]
    fn two_detections_link() {
        let g = two_frame();
        // Feasible patterns: none (0), A alone (0.2), B alone (0.2), A and B
        // separately (0.4), A->B (2.2).
        assert_eq!(full_enumeration(&g), 1.0 + 1.0 + 1.0 - 0.8);
        for s in [solve(&g).unwrap(), solve_exhaustive(&g).unwrap()] {
            assert!((s.objective - 2.2).abs() < 1e-12);
            assert_eq!(s.trajectories.len(), 1);
            assert_eq!(s.trajectories[0].entries, vec![(0, 0), (1, 1)]);
        }
    }

    #[test]
    fn split_beats_link() {
        // A@f0, B@f1, C@f1 with an expensive link: separate tracks win.
        let seq = seq_from_frames(vec![
            vec![det_at(0, 0, 5.0, 0.0)],
            vec![det_at(1, 1, 6.0, 0.0), det_at(2, 1, 9.0, 3.0)],
        ]);
        let g = build_graph(&seq, 0..2, &GateConfig::default()).unwrap();
        let lay = g.layout.clone();
        let mut c = vec![0.0; g.num_vars()];
        for j in 0..3 {
            c[lay.det_var(j)] = 1.0;
            c[lay.new_var(j)] = -0.2;
            c[lay.end_var(j)] = -0.2;
        }
        c[lay.link_var(0, 1).unwrap()] = -1.0;
        c[lay.link_var(0, 2).unwrap()] = -1.0;
        let g = g.with_costs(c).unwrap();
        // Hand enumeration: three singletons give 3 * 0.6 = 1.8; any link
        // replaces +0.4 of new/end penalties with -1.0.
        assert!((full_enumeration(&g) - 1.8).abs() < 1e-12);
        let s = solve(&g).unwrap();
        let e = solve_exhaustive(&g).unwrap();
        assert!((s.objective - 1.8).abs() < 1e-12);
        assert_eq!(s.assignment, e.assignment);
        assert_eq!(s.trajectories.len(), 3);
    }

    #[test]
    fn zero_costs_give_zero() {
        let mut g = two_frame();
        g.costs.iter_mut().for_each(|c| *c = 0.0);
        assert_eq!(solve(&g).unwrap().objective, 0.0);
        assert_eq!(solve_exhaustive(&g).unwrap().objective, 0.0);
    }

    #[test]
    fn non_finite_cost_rejected() {
        let mut g = two_frame();
        g.costs[2] = f64::NAN;
        assert!(matches!(solve(&g), Err(Error::NonFinite(_))));
        g.costs[2] = f64::INFINITY;
        assert!(solve_exhaustive(&g).is_err());
    }

    #[test]
    fn exhaustive_cap() {
        let frames: Vec<_> = (0..3)
            .map(|f| (0..5).map(|i| det_at((f * 5 + i) as u64, f, 5.0 + i as f64, 0.0)).collect())
            .collect();
        let g = build_graph(&seq_from_frames(frames), 0..3, &GateConfig::default()).unwrap();
        assert!(matches!(solve_exhaustive(&g), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn bellman_ford_basics() {
        let mut net = FlowNetwork::new(2);
        net.add_arc(0, 1, 1, -5.0);
        let t = bellman_ford(&net, 0).unwrap();
        assert_eq!(t.dist[1], -5.0);

        let mut net = FlowNetwork::new(4);
        net.add_arc(0, 1, 1, -1.0);
        net.add_arc(1, 3, 1, -2.0);
        net.add_arc(0, 2, 1, -2.0);
        net.add_arc(2, 3, 1, -2.0);
        let t = bellman_ford(&net, 0).unwrap();
        assert_eq!(t.dist[3], -4.0);
    }

    #[test]
    fn bellman_ford_reports_negative_cycle() {
        let mut net = FlowNetwork::new(3);
        net.add_arc(0, 1, 1, 1.0);
        net.add_arc(1, 2, 1, -2.0);
        net.add_arc(2, 1, 1, 1.0);
        match bellman_ford(&net, 0) {
            Err(Error::NegativeCycle(c)) => {
                let mut c = c;
                c.sort();
                assert_eq!(c, vec![1, 2]);
            }
            other => panic!("expected negative cycle, got {other:?}"),
        }
    }

    #[test]
    fn residual_after_first_augmentation() {
        // Two-detection example: nodes s=0, t=1, uA=2, vA=3, uB=4, vB=5.
        let g = two_frame();
        let mut net = FlowNetwork::from_graph(&g);
        let t0 = bellman_ford(&net, SOURCE).unwrap();
        // s->uA 0.4, uA->vA -0.6, vA->uB -1.6, uB->vB -2.6, vB->t -2.2
        let expect = [0.0, -2.2, 0.4, -0.6, -1.6, -2.6];
        for (d, e) in t0.dist.iter().zip(expect) {
            assert!((d - e).abs() < 1e-12);
        }
        let path = t0.path_to(&net, SINK);
        for e in &path {
            net.arcs[e.arc].flow += 1;
        }
        // Residual edges now: s->uB (0.4), uB->vA (+1, cancel link),
        // vA->uA (+1, cancel det A), vA->t (0.4), t->vB (-0.4, cancel end B).
        let t1 = bellman_ford(&net, SOURCE).unwrap();
        let expect = [0.0, 1.8, 2.4, 1.4, 0.4, 1.4];
        for (d, e) in t1.dist.iter().zip(expect) {
            assert!((d - e).abs() < 1e-12, "{:?}", t1.dist);
        }
    }

    #[test]
    fn methods_agree_and_objective_monotone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let frames: Vec<_> = (0..4)
                .map(|f| (0..rng.random_range(0..4)).map(|i| det_at((f * 10 + i) as u64, f, 5.0 + i as f64, 0.0)).collect())
                .collect();
            let g = build_graph(&seq_from_frames(frames), 0..4, &GateConfig::default()).unwrap();
            let n = g.num_vars();
            let g = g.with_costs((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let a = solve_with(&g, SolverOptions { method: ShortestPathMethod::Dijkstra, verify_residual: true }).unwrap();
            let b = solve_with(&g, SolverOptions { method: ShortestPathMethod::BellmanFord, verify_residual: true }).unwrap();
            assert_eq!(a.assignment.dot(&g.costs), b.assignment.dot(&g.costs));
            assert!(a.objective_trace.windows(2).all(|w| w[1] >= w[0]));
            if let Some(&last) = a.objective_trace.last() {
                assert!((last - a.objective).abs() < 1e-9);
            }
        }
    }
}
