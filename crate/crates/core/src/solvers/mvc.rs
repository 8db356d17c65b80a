//! Minimum vertex cover: an edge-list parser and an exchange local search.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{run_solver, AnytimeSolver, Clock};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::trace::{ImprovementTrace, Millis, Point};

/// An undirected simple graph with 0-based vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MvcInstance {
    pub name: String,
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl MvcInstance {
    /// Builds a graph, dropping duplicate edges. Self-loops are rejected.
    pub fn new(name: impl Into<String>, vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::Validation(format!("self-loop on vertex {}", u + 1)));
            }
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) exceeds {vertex_count} vertices",
                    u + 1,
                    v + 1
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Ok(MvcInstance {
            name: name.into(),
            vertex_count,
            edges,
            adjacency,
        })
    }

    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn is_cover(&self, in_cover: &[bool]) -> bool {
        self.edges.iter().all(|&(u, v)| in_cover[u] || in_cover[v])
    }
}

/// Reads `u v` lines with 1-based vertex ids; `#` starts a comment line.
pub fn parse_edge_list(name: impl Into<String>, text: &str) -> Result<MvcInstance> {
    let mut edges = Vec::new();
    let mut max_id = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = idx + 1;
        let ids: Vec<&str> = line.split_whitespace().collect();
        if ids.len() != 2 {
            return Err(Error::parse(line_no, format!("expected `u v`, got `{line}`")));
        }
        let mut pair = [0usize; 2];
        for (slot, s) in pair.iter_mut().zip(&ids) {
            let id: i64 = s
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad vertex id `{s}`")))?;
            if id <= 0 {
                return Err(Error::parse(line_no, format!("vertex ids start at 1, got {id}")));
            }
            *slot = id as usize;
            max_id = max_id.max(*slot);
        }
        if pair[0] == pair[1] {
            return Err(Error::Validation(format!(
                "line {line_no}: self-loop on vertex {}",
                pair[0]
            )));
        }
        edges.push((pair[0] - 1, pair[1] - 1));
    }
    MvcInstance::new(name, max_id, &edges)
}

/// Greedy maximum-degree construction, then repeated exchanges: drop a random
/// cover vertex and repair by adding the open endpoint of a random uncovered
/// edge until every edge is covered. An exchange is kept unless the cover
/// grew. Each step is one construction or one exchange.
pub struct MvcSolver {
    instance: Arc<MvcInstance>,
    rng: StreamRng,
    in_cover: Vec<bool>,
    cover: Vec<usize>,
    best: Option<usize>,
}

impl MvcSolver {
    pub fn new(instance: Arc<MvcInstance>, seed: u64) -> Self {
        MvcSolver {
            instance,
            rng: rng::stream(seed, &[rng::TAG_SOLVER]),
            in_cover: Vec::new(),
            cover: Vec::new(),
            best: None,
        }
    }

    pub fn cover(&self) -> &[bool] {
        &self.in_cover
    }

    fn greedy(&mut self) {
        let n = self.instance.vertex_count;
        let mut uncovered_degree: Vec<usize> =
            (0..n).map(|v| self.instance.neighbours(v).len()).collect();
        self.in_cover = vec![false; n];
        loop {
            let top = *uncovered_degree.iter().max().unwrap_or(&0);
            if top == 0 {
                break;
            }
            let ties: Vec<usize> = (0..n).filter(|&v| uncovered_degree[v] == top).collect();
            let v = *ties.choose(&mut self.rng).expect("a vertex of top degree");
            self.in_cover[v] = true;
            uncovered_degree[v] = 0;
            for &u in self.instance.neighbours(v) {
                if !self.in_cover[u] {
                    uncovered_degree[u] -= 1;
                }
            }
        }
        self.cover = (0..n).filter(|&v| self.in_cover[v]).collect();
    }

    fn report(&mut self) -> Option<f64> {
        let size = self.cover.len();
        if self.best.is_none_or(|b| size < b) {
            assert!(self.instance.is_cover(&self.in_cover), "emitted an invalid cover");
            self.best = Some(size);
            return Some(size as f64);
        }
        None
    }

    fn exchange(&mut self) {
        if self.cover.is_empty() {
            return;
        }
        let pos = self.rng.random_range(0..self.cover.len());
        let removed = self.cover.swap_remove(pos);
        self.in_cover[removed] = false;
        let mut added = Vec::new();
        // only edges at `removed` can be uncovered; stop once the cover grows
        while added.len() < 2 {
            let uncovered: Vec<usize> = self
                .instance
                .neighbours(removed)
                .iter()
                .copied()
                .filter(|&u| !self.in_cover[u])
                .collect();
            let Some(&u) = uncovered.choose(&mut self.rng) else {
                break;
            };
            self.in_cover[u] = true;
            added.push(u);
        }
        if added.len() > 1 {
            for &u in &added {
                self.in_cover[u] = false;
            }
            self.in_cover[removed] = true;
            self.cover.push(removed);
        } else {
            self.cover.extend(added);
        }
    }
}

impl AnytimeSolver for MvcSolver {
    fn step(&mut self) -> Option<f64> {
        if self.best.is_none() {
            self.greedy();
        } else {
            self.exchange();
        }
        self.report()
    }

    fn best(&self) -> Option<f64> {
        self.best.map(|b| b as f64)
    }
}

/// Runs the exchange search for `budget` milliseconds (steps under the
/// virtual clock).
pub fn solve_mvc(
    instance: Arc<MvcInstance>,
    budget: Millis,
    seed: u64,
    clock: Clock,
    emit: impl FnMut(Point),
) -> ImprovementTrace {
    let name = format!("{}-{seed}", instance.name);
    run_solver(name, MvcSolver::new(instance, seed), budget, clock, emit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn brute_force_minimum(inst: &MvcInstance) -> usize {
        let masks: Vec<u32> = inst.edges.iter().map(|&(u, v)| (1 << u) | (1 << v)).collect();
        (0u32..1 << inst.vertex_count)
            .filter(|s| masks.iter().all(|m| s & m != 0))
            .map(|s| s.count_ones() as usize)
            .min()
            .unwrap()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> MvcInstance {
        let mut r = rng::stream(seed, &[7]);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        MvcInstance::new("g", n, &edges).unwrap()
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_edge_list("a", "1 2\n2 3").unwrap().edges.len(), 2);
        assert_eq!(parse_edge_list("a", "# c\n1 2\n\n2 1\n").unwrap().edges, vec![(0, 1)]);
        assert!(matches!(parse_edge_list("a", "1 1"), Err(Error::Validation(_))));
        assert!(matches!(parse_edge_list("a", "1 2\n0 2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_edge_list("a", "1 -3"), Err(Error::Parse { .. })));
        assert!(matches!(parse_edge_list("a", "1 x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn edge_count_matches_set_oracle() {
        let mut r = rng::stream(50, &[]);
        let mut text = String::new();
        let mut oracle = HashSet::new();
        for _ in 0..400 {
            let (u, v) = (r.random_range(1..=50u32), r.random_range(1..=50u32));
            if u == v {
                continue;
            }
            text.push_str(&format!("{u} {v}\n"));
            oracle.insert((u.min(v), u.max(v)));
        }
        assert_eq!(parse_edge_list("r", &text).unwrap().edges.len(), oracle.len());
    }

    #[test]
    fn small_known_optima() {
        let triangle = Arc::new(parse_edge_list("t", "1 2\n2 3\n1 3").unwrap());
        let trace = solve_mvc(triangle, 100, 0, Clock::VirtualSteps, |_| {});
        assert_eq!(trace.last().unwrap().quality, 2.0);
        let star = Arc::new(parse_edge_list("s", "1 2\n1 3\n1 4\n1 5\n1 6").unwrap());
        let trace = solve_mvc(star, 100, 0, Clock::VirtualSteps, |_| {});
        assert_eq!(trace.last().unwrap().quality, 1.0);
    }

    #[test]
    fn near_optimal_on_random_graphs() {
        for seed in 0..5 {
            let inst = Arc::new(random_graph(20, 0.2, seed));
            let opt = brute_force_minimum(&inst) as f64;
            let trace = solve_mvc(Arc::clone(&inst), 20_000, seed, Clock::VirtualSteps, |_| {});
            let q = trace.last().unwrap().quality;
            assert!(q >= opt && q <= opt + 2.0, "seed {seed}: {q} vs optimum {opt}");
        }
    }

    #[test]
    fn every_emission_is_a_cover() {
        let inst = Arc::new(random_graph(60, 0.1, 3));
        let mut solver = MvcSolver::new(Arc::clone(&inst), 1);
        for _ in 0..5_000 {
            if let Some(q) = solver.step() {
                assert!(inst.is_cover(solver.cover()));
                assert_eq!(solver.cover().iter().filter(|&&b| b).count() as f64, q);
            }
        }
    }
}
