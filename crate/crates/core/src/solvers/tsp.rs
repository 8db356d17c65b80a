//! Euclidean TSP: a TSPLIB subset parser and a 2-opt local search.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{run_solver, AnytimeSolver, Clock};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::trace::{ImprovementTrace, Millis, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct TspInstance {
    pub name: String,
    pub coordinates: Vec<(f64, f64)>,
    distances: Vec<u32>,
}

impl TspInstance {
    pub fn new(name: impl Into<String>, coordinates: Vec<(f64, f64)>) -> Result<Self> {
        let n = coordinates.len();
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 cities, got {n}")));
        }
        if coordinates.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        let mut distances = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (
                    coordinates[i].0 - coordinates[j].0,
                    coordinates[i].1 - coordinates[j].1,
                );
                distances[i * n + j] = (dx * dx + dy * dy).sqrt().round() as u32;
            }
        }
        Ok(TspInstance {
            name: name.into(),
            coordinates,
            distances,
        })
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    /// Rounded Euclidean distance.
    pub fn distance(&self, i: usize, j: usize) -> u64 {
        self.distances[i * self.len() + j] as u64
    }

    pub fn tour_length(&self, tour: &[usize]) -> u64 {
        (0..tour.len())
            .map(|i| self.distance(tour[i], tour[(i + 1) % tour.len()]))
            .sum()
    }

    pub fn is_tour(&self, tour: &[usize]) -> bool {
        let mut seen = vec![false; self.len()];
        tour.len() == self.len()
            && tour
                .iter()
                .all(|&c| c < seen.len() && !std::mem::replace(&mut seen[c], true))
    }
}

/// Reads `KEY : VALUE` headers and a `NODE_COORD_SECTION`. Only `EUC_2D`
/// edge weights are supported.
pub fn parse_tsplib(text: &str) -> Result<TspInstance> {
    let mut name = String::from("tsp");
    let mut dimension: Option<usize> = None;
    let mut coords: Vec<(f64, f64)> = Vec::new();
    let mut in_coords = false;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                if fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
                    in_coords = false;
                } else {
                    return Err(Error::parse(line_no, format!("expected `id x y`, got `{line}`")));
                }
            } else {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("bad number `{s}`")))
                };
                coords.push((num(fields[1])?, num(fields[2])?));
                continue;
            }
        }
        if line.starts_with("NODE_COORD_SECTION") {
            in_coords = true;
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            // other sections are not needed for EUC_2D
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "NAME" => name = value.to_string(),
            "DIMENSION" => {
                dimension = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(line_no, format!("bad DIMENSION `{value}`")))?,
                )
            }
            "EDGE_WEIGHT_TYPE" if value != "EUC_2D" => {
                return Err(Error::Unsupported(format!("EDGE_WEIGHT_TYPE {value}")))
            }
            _ => {}
        }
    }
    let n = dimension.unwrap_or(coords.len());
    if coords.len() != n || coords.is_empty() {
        return Err(Error::parse(
            last_line,
            format!("expected {n} coordinates, found {}", coords.len()),
        ));
    }
    TspInstance::new(name, coords)
}

/// Nearest-neighbour construction followed by first-improvement 2-opt; a
/// local optimum triggers a restart from a uniformly random tour. Each step
/// evaluates one 2-opt move or builds one start tour.
pub struct TspSolver {
    instance: Arc<TspInstance>,
    rng: StreamRng,
    tour: Vec<usize>,
    length: u64,
    best: Option<u64>,
    i: usize,
    j: usize,
    has_pair: bool,
    improved_in_pass: bool,
}

impl TspSolver {
    pub fn new(instance: Arc<TspInstance>, seed: u64) -> Self {
        TspSolver {
            instance,
            rng: rng::stream(seed, &[rng::TAG_SOLVER]),
            tour: Vec::new(),
            length: 0,
            best: None,
            i: 0,
            j: 1,
            has_pair: false,
            improved_in_pass: false,
        }
    }

    fn nearest_neighbour(&mut self) {
        let n = self.instance.len();
        let start = self.rng.random_range(0..n);
        let mut visited = vec![false; n];
        let mut tour = Vec::with_capacity(n);
        let mut current = start;
        visited[current] = true;
        tour.push(current);
        for _ in 1..n {
            let next = (0..n)
                .filter(|&c| !visited[c])
                .min_by_key(|&c| self.instance.distance(current, c))
                .expect("unvisited city");
            visited[next] = true;
            tour.push(next);
            current = next;
        }
        self.tour = tour;
    }

    fn random_tour(&mut self) {
        self.tour = (0..self.instance.len()).collect();
        self.tour.shuffle(&mut self.rng);
    }

    fn reset_scan(&mut self) {
        self.length = self.instance.tour_length(&self.tour);
        self.improved_in_pass = false;
        self.has_pair = self.first_pair();
    }

    fn first_pair(&mut self) -> bool {
        self.i = 0;
        self.j = 1;
        self.advance_cursor()
    }

    fn report(&mut self) -> Option<f64> {
        debug_assert!(self.instance.is_tour(&self.tour));
        if self.best.is_none_or(|b| self.length < b) {
            self.best = Some(self.length);
            return Some(self.length as f64);
        }
        None
    }

    /// Moves the scan cursor to the next pair `(i, j)` with `j >= i + 2`,
    /// skipping the pair that shares an edge across the wrap-around.
    /// Returns false once the pass is complete.
    fn advance_cursor(&mut self) -> bool {
        let n = self.tour.len();
        loop {
            self.j += 1;
            if self.j >= n {
                self.i += 1;
                self.j = self.i + 2;
                if self.j >= n {
                    return false;
                }
            }
            if !(self.i == 0 && self.j == n - 1) {
                return true;
            }
        }
    }

    pub fn tour(&self) -> &[usize] {
        &self.tour
    }
}

impl AnytimeSolver for TspSolver {
    fn step(&mut self) -> Option<f64> {
        if self.tour.is_empty() {
            self.nearest_neighbour();
            self.reset_scan();
            return self.report();
        }
        if !self.has_pair {
            if self.improved_in_pass {
                self.improved_in_pass = false;
                self.has_pair = self.first_pair();
            }
            if !self.has_pair {
                self.random_tour();
                self.reset_scan();
                return self.report();
            }
        }
        let n = self.tour.len();
        let d = |a, b| self.instance.distance(a, b) as i64;
        let (a, b) = (self.tour[self.i], self.tour[self.i + 1]);
        let (c, e) = (self.tour[self.j], self.tour[(self.j + 1) % n]);
        let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
        let mut out = None;
        if delta < 0 {
            self.tour[self.i + 1..=self.j].reverse();
            self.length = (self.length as i64 + delta) as u64;
            self.improved_in_pass = true;
            out = self.report();
        }
        self.has_pair = self.advance_cursor();
        out
    }

    fn best(&self) -> Option<f64> {
        self.best.map(|b| b as f64)
    }
}

/// Runs the 2-opt solver for `budget` milliseconds (steps under the virtual
/// clock).
pub fn solve_tsp(
    instance: Arc<TspInstance>,
    budget: Millis,
    seed: u64,
    clock: Clock,
    emit: impl FnMut(Point),
) -> ImprovementTrace {
    let name = format!("{}-{seed}", instance.name);
    run_solver(name, TspSolver::new(instance, seed), budget, clock, emit)
}
