//! Visiting order of the items: Euclidean TSP over the depot and the items.
//!
//! [`solve_lk`] is a Lin-Kernighan style variable-depth search built from
//! sequential 2-opt flips; [`solve_exact`] is a Held-Karp oracle for small
//! instances.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Largest node count accepted by [`solve_exact`].
pub const EXACT_LIMIT: usize = 13;

const GAIN_EPS: f64 = 1e-10;

/// Symmetric Euclidean distances; node 0 is the depot, node `i` is item `i-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[Vec3]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = points[i].distance(points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

pub fn distance_matrix(depot: Vec3, items: &[Vec3]) -> Result<DistanceMatrix> {
    if items.is_empty() {
        return Err(Error::InvalidInput("distance matrix needs at least one item".into()));
    }
    let mut points = Vec::with_capacity(items.len() + 1);
    points.push(depot);
    points.extend_from_slice(items);
    Ok(DistanceMatrix::from_points(&points))
}

/// Closed tour over matrix nodes, starting at the depot (node 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Self { order }
    }

    /// Item indices in visiting order (node `i` is item `i-1`).
    pub fn item_order(&self) -> Vec<usize> {
        self.order.iter().filter(|&&v| v != 0).map(|&v| v - 1).collect()
    }

    pub fn from_item_order(items: &[usize]) -> Self {
        Self { order: std::iter::once(0).chain(items.iter().map(|&i| i + 1)).collect() }
    }
}

pub fn tour_length(tour: &Tour, d: &DistanceMatrix) -> Result<f64> {
    if tour.order.len() != d.len() {
        return Err(Error::InvalidInput(format!(
            "tour has {} nodes but the distance matrix has {}",
            tour.order.len(),
            d.len()
        )));
    }
    if let Some(&bad) = tour.order.iter().find(|&&v| v >= d.len()) {
        return Err(Error::InvalidInput(format!("tour node {bad} is out of range")));
    }
    Ok(cycle_length(&tour.order, d))
}

fn cycle_length(order: &[usize], d: &DistanceMatrix) -> f64 {
    let n = order.len();
    (0..n).map(|i| d.get(order[i], order[(i + 1) % n])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TourViolation {
    WrongLength { expected: usize, actual: usize },
    NodeOutOfRange(usize),
    /// A node appears more than once, so its in/out degree exceeds one.
    Duplicate(usize),
    Missing(usize),
    NotStartingAtDepot,
    /// The successor walk from the depot closes before visiting every node.
    Subtour { visited: usize },
}

impl fmt::Display for TourViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WrongLength { expected, actual } => write!(f, "tour has {actual} nodes, expected {expected}"),
            Self::NodeOutOfRange(v) => write!(f, "node {v} is out of range"),
            Self::Duplicate(v) => write!(f, "node {v} is visited more than once"),
            Self::Missing(v) => write!(f, "node {v} is never visited"),
            Self::NotStartingAtDepot => write!(f, "tour does not start at the depot"),
            Self::Subtour { visited } => write!(f, "cycle through the depot covers only {visited} nodes"),
        }
    }
}

/// Checks that `tour` is a single Hamiltonian cycle over the depot and `k` items.
pub fn validate_tour(tour: &Tour, k: usize) -> std::result::Result<(), TourViolation> {
    let n = k + 1;
    let order = &tour.order;
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n {
            return Err(TourViolation::NodeOutOfRange(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(TourViolation::Duplicate(v));
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(TourViolation::Missing(v));
    }
    if order.len() != n {
        return Err(TourViolation::WrongLength { expected: n, actual: order.len() });
    }
    if order[0] != 0 {
        return Err(TourViolation::NotStartingAtDepot);
    }
    let mut succ = vec![usize::MAX; n];
    for i in 0..n {
        succ[order[i]] = order[(i + 1) % n];
    }
    let (mut v, mut visited) = (succ[0], 1);
    while v != 0 && visited <= n {
        v = succ[v];
        visited += 1;
    }
    if visited != n {
        return Err(TourViolation::Subtour { visited });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkParams {
    pub max_depth: usize,
    pub candidates: usize,
    pub restarts: usize,
}

impl Default for LkParams {
    fn default() -> Self {
        Self { max_depth: 5, candidates: 8, restarts: 5 }
    }
}

/// Array tour with position index; flips reverse a cyclic segment.
struct ArrayTour {
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl ArrayTour {
    fn new(order: Vec<usize>) -> Self {
        let mut pos = vec![0; order.len()];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        Self { order, pos }
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn succ(&self, v: usize) -> usize {
        self.order[(self.pos[v] + 1) % self.n()]
    }

    fn pred(&self, v: usize) -> usize {
        self.order[(self.pos[v] + self.n() - 1) % self.n()]
    }

    /// Reverses the path `from ..= to` walked in successor direction.
    fn reverse_path(&mut self, from: usize, to: usize) {
        let n = self.n();
        let (mut i, mut j) = (self.pos[from], self.pos[to]);
        let len = (j + n - i) % n + 1;
        for _ in 0..len / 2 {
            self.order.swap(i, j);
            self.pos[self.order[i]] = i;
            self.pos[self.order[j]] = j;
            i = (i + 1) % n;
            j = (j + n - 1) % n;
        }
    }

    fn reverse_all(&mut self) {
        self.order.reverse();
        for (i, &v) in self.order.iter().enumerate() {
            self.pos[v] = i;
        }
    }
}

fn edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn candidate_lists(d: &DistanceMatrix, k: usize) -> Vec<Vec<usize>> {
    (0..d.len())
        .map(|i| {
            let mut c: Vec<usize> = (0..d.len()).filter(|&j| j != i).collect();
            c.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
            c.truncate(k);
            c
        })
        .collect()
}

/// One variable-depth move anchored at `t1` with `t2 = succ(t1)`. Applies
/// the best improving prefix of the flip sequence and returns its gain.
fn lk_move(t: &mut ArrayTour, d: &DistanceMatrix, cand: &[Vec<usize>], t1: usize, depth: usize) -> f64 {
    let mut t2 = t.succ(t1);
    let mut g = d.get(t1, t2);
    let mut removed: HashSet<(usize, usize)> = HashSet::from([edge(t1, t2)]);
    let mut added: HashSet<(usize, usize)> = HashSet::new();
    let mut flips: Vec<(usize, usize)> = Vec::new();
    let (mut best_gain, mut best_len) = (GAIN_EPS, 0);

    for _ in 0..depth {
        // best admissible (t3, t4) by cumulative gain after the flip
        let mut choice: Option<(f64, usize, usize)> = None;
        for &t3 in &cand[t2] {
            if t3 == t1 || t3 == t.succ(t2) || t3 == t.pred(t2) {
                continue;
            }
            let y = d.get(t2, t3);
            if g - y <= GAIN_EPS || removed.contains(&edge(t2, t3)) {
                continue;
            }
            let t4 = t.pred(t3);
            if t4 == t2 || added.contains(&edge(t4, t3)) {
                continue;
            }
            let g_next = g - y + d.get(t4, t3);
            let better = match choice {
                None => true,
                Some((bg, b3, _)) => g_next > bg + GAIN_EPS || ((g_next - bg).abs() <= GAIN_EPS && t3 < b3),
            };
            if better {
                choice = Some((g_next, t3, t4));
            }
        }
        let Some((g_next, t3, t4)) = choice else { break };
        // t1 t2 .. t4 t3 .. becomes t1 t4 .. t2 t3 ..
        t.reverse_path(t2, t4);
        flips.push((t4, t2));
        added.insert(edge(t2, t3));
        removed.insert(edge(t4, t3));
        g = g_next;
        t2 = t4;
        let closed = g - d.get(t1, t2);
        if closed > best_gain {
            best_gain = closed;
            best_len = flips.len();
        }
    }
    // undo flips past the best prefix
    while flips.len() > best_len {
        let (a, b) = flips.pop().expect("nonempty");
        t.reverse_path(a, b);
    }
    if best_len > 0 {
        best_gain
    } else {
        0.0
    }
}

fn local_search(t: &mut ArrayTour, d: &DistanceMatrix, cand: &[Vec<usize>], depth: usize) {
    loop {
        let mut improved = false;
        for t1 in 0..t.n() {
            for _ in 0..2 {
                if lk_move(t, d, cand, t1, depth) > 0.0 {
                    improved = true;
                }
                t.reverse_all();
            }
        }
        if !improved {
            break;
        }
    }
}

/// Greedy initial tour: from the depot, always go to the closest unvisited node.
pub fn nearest_neighbor_tour(d: &DistanceMatrix) -> Tour {
    normalize(&nearest_neighbor(d))
}

fn nearest_neighbor(d: &DistanceMatrix) -> Vec<usize> {
    let n = d.len();
    let mut order = vec![0];
    let mut used = vec![false; n];
    used[0] = true;
    for _ in 1..n {
        let last = *order.last().expect("nonempty");
        let next = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| d.get(last, a).total_cmp(&d.get(last, b)).then(a.cmp(&b)))
            .expect("unvisited node remains");
        used[next] = true;
        order.push(next);
    }
    order
}

fn double_bridge(order: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = order.len();
    let mut cuts = [rng.random_range(1..n), rng.random_range(1..n), rng.random_range(1..n)];
    cuts.sort_unstable();
    let [a, b, c] = cuts;
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&order[..a]);
    out.extend_from_slice(&order[b..c]);
    out.extend_from_slice(&order[a..b]);
    out.extend_from_slice(&order[c..]);
    out
}

/// Rotates to start at the depot and picks the orientation whose second
/// node has the lower index.
fn normalize(order: &[usize]) -> Tour {
    let n = order.len();
    let start = order.iter().position(|&v| v == 0).expect("depot present");
    let mut out: Vec<usize> = (0..n).map(|i| order[(start + i) % n]).collect();
    if n > 2 && out[1] > out[n - 1] {
        out[1..].reverse();
    }
    Tour::new(out)
}

pub fn solve_lk(d: &DistanceMatrix, seed: u64, params: &LkParams) -> Result<Tour> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("tour needs at least 2 nodes, got {n}")));
    }
    let init = nearest_neighbor(d);
    if n <= 3 {
        return Ok(normalize(&init));
    }
    let cand = candidate_lists(d, params.candidates.max(1));
    let depth = params.max_depth.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut t = ArrayTour::new(init);
    local_search(&mut t, d, &cand, depth);
    let mut best = t.order.clone();
    let mut best_len = cycle_length(&best, d);
    for _ in 0..params.restarts {
        let mut t = ArrayTour::new(double_bridge(&best, &mut rng));
        local_search(&mut t, d, &cand, depth);
        let len = cycle_length(&t.order, d);
        if len < best_len - GAIN_EPS {
            best_len = len;
            best = t.order;
        }
    }
    Ok(normalize(&best))
}

/// Held-Karp dynamic program; among optimal tours returns the
/// lexicographically smallest order.
pub fn solve_exact(d: &DistanceMatrix) -> Result<Tour> {
    let n = d.len();
    if n > EXACT_LIMIT {
        return Err(Error::TooLarge { nodes: n, limit: EXACT_LIMIT });
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("tour needs at least 2 nodes, got {n}")));
    }
    // nodes 1..n map to bits 0..n-1; h[mask][j] is the cheapest way to
    // finish from node j+1 having visited `mask`, ending at the depot
    let m = n - 1;
    let full = (1usize << m) - 1;
    let mut h = vec![f64::INFINITY; (1 << m) * m];
    for j in 0..m {
        h[full * m + j] = d.get(j + 1, 0);
    }
    for mask in (1..full).rev() {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for k in 0..m {
                if mask & (1 << k) == 0 {
                    best = best.min(d.get(j + 1, k + 1) + h[(mask | 1 << k) * m + k]);
                }
            }
            h[mask * m + j] = best;
        }
    }
    let opt = (0..m).map(|j| d.get(0, j + 1) + h[(1 << j) * m + j]).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * opt.max(1.0);

    let mut order = vec![0];
    let (mut mask, mut last, mut spent) = (0usize, 0usize, 0.0);
    while mask != full {
        let next = (0..m)
            .find(|&k| mask & (1 << k) == 0 && spent + d.get(last, k + 1) + h[(mask | 1 << k) * m + k] <= opt + tol)
            .expect("an optimal continuation exists");
        spent += d.get(last, next + 1);
        mask |= 1 << next;
        last = next + 1;
        order.push(last);
    }
    Ok(Tour::new(order))
}
